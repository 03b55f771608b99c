"""
Simulation of interacting-particle (McKean-Vlasov) SDEs and estimation of
their drift from trajectory data with neural drift models.
"""
from ._version import __version__
from .errors import MvDriftError, ConfigError, UsageError, ParseError, NumericError, TrainingDivergedError
from .types import (
    TrajectoryDataset, Population, GeneratorSpec, BridgeSpec, ArchitectureSpec, TrainConfig, TrainReport, EvalGrid
)
from .drift import (
    Architecture, DriftModel, TrueDrift, System, build_drift, save_drift, load_drift, true_drift
)
from .flow import CouplingFlow
from .simulate import euler_maruyama, generate, sample_bridge, eight_gaussians
from .trajio import read_dataset, write_dataset
from .estimate import (
    train, train_mle, train_bridge, train_ml, train_fokker_planck, girsanov_loglik, compatibility_criterion,
    linear_fp_elbo, im_norm_probe
)
from .metrics import drift_mse, energy_distance_sq, crps, ecdf_distances, EcdfDistances
from .config import ExperimentConfig, EvaluationSpec, load_config, config_from_dict
