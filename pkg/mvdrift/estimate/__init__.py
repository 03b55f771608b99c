"""
Estimators of the drift: Girsanov maximum likelihood, the Brownian-bridge
ELBO, marginal-law training and the linear Fokker-Planck bound.
"""
from typing import Union

import numpy as np

from ..drift import DriftModel
from ..errors import ConfigError
from ..types import TrainConfig, TrainReport, TrajectoryDataset
from .training import fit, graph_objective, resolve_sigma
from .girsanov import girsanov_loglik, path_loglik, train_mle, train_bridge, impute_paths, refine_grid
from .marginal import batch_compatibility, compatibility_criterion, train_ml
from .fokker_planck import linear_fp_elbo, train_fokker_planck, fp_elbo_score
from .probe import im_norm_probe

ESTIMATORS = {
    "mle": train_mle,
    "bridge": train_bridge,
    "marginal": train_ml,
    "fokker_planck": train_fokker_planck,
}


def train(drift: DriftModel, data: Union[TrajectoryDataset, np.ndarray], cfg: TrainConfig) -> TrainReport:
    """Run the estimator named by `cfg.estimator`."""
    try:
        trainer = ESTIMATORS[cfg.estimator]
    except KeyError:
        raise ConfigError(
            f"unknown estimator {cfg.estimator!r}, expected one of {', '.join(ESTIMATORS)}"
        ) from None
    return trainer(drift, data, cfg)
