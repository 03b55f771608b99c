"""
Mini-batch AdamW loop shared by the estimators.
"""
import logging
import math
import time
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from tqdm import tqdm

from ..basics import make_rng
from ..diffgraph import AdamWState, Graph, ParamStore, adamw_step
from ..errors import ConfigError, TrainingDivergedError
from ..types import TrainConfig, TrajectoryDataset, TrainReport, config_echo

logger = logging.getLogger(__name__)

# batch indices, epoch, rng -> (objective, gradient of the objective, extra terms)
BatchObjective = Callable[[np.ndarray, int, np.random.Generator], Tuple[float, np.ndarray, Dict[str, float]]]


def graph_objective(store: ParamStore, build: Callable[[Graph], Tuple[int, Dict[str, int]]]):
    """
    Record one objective on a fresh graph and differentiate it.

    Parameters
    ----------
    store : ParamStore
    build : callable
        Records the scalar objective on the graph and returns its handle and
        a dict of named scalar handles to report.

    Returns
    -------
    value : float
    grad : np.ndarray
    extras : dict of str to float
    """
    graph = Graph(store)
    root, named = build(graph)
    grad = graph.backward(root)
    extras = {name: float(graph.value(h)) for name, h in named.items()}
    return float(graph.value(root)), grad, extras


def resolve_sigma(cfg: TrainConfig, ds: Optional[TrajectoryDataset] = None) -> float:
    """Known diffusion constant from the config, else from the dataset metadata."""
    sigma = cfg.sigma
    if sigma is None and ds is not None:
        sigma = ds.metadata.get("sigma")
    if sigma is None:
        raise ConfigError("the diffusion constant sigma is neither configured nor recorded with the data")
    if not sigma > 0:
        raise ConfigError(f"sigma must be positive, got {sigma}")
    return float(sigma)


def fit(
    store: ParamStore,
    n_items: int,
    cfg: TrainConfig,
    objective: BatchObjective,
    name: str,
) -> TrainReport:
    """
    Maximise a mini-batch objective with AdamW.

    Parameters
    ----------
    store : ParamStore
        Parameters being trained, updated in place.
    n_items : int
        Number of items (particles, samples) batches are drawn from.
    cfg : TrainConfig
    objective : callable
        Maps (batch indices, epoch, rng) to (objective value, gradient of the
        objective, extra terms). The objective is maximised.
    name : str
        Estimator name used in logs.

    Returns
    -------
    report : TrainReport
        `loss_trace` holds the per-epoch mean objective, `traces` the
        per-epoch means of the extra terms.

    Raises
    ------
    TrainingDivergedError
        The objective became non-finite; the partial report is attached.
    """
    if cfg.epochs < 1 or cfg.batch_size < 1 or n_items < 1:
        raise ConfigError("training needs epochs >= 1, batch_size >= 1 and at least one item")
    rng = make_rng(cfg.seed)
    state = AdamWState.create(
        store.size,
        lr=cfg.lr,
        eps=cfg.eps,
        gamma=cfg.gamma,
        weight_decay=cfg.weight_decay,
        clip_norm=cfg.clip_norm,
    )
    report = TrainReport(config=config_echo(cfg), seed=cfg.seed)
    n_batches = math.ceil(n_items / cfg.batch_size)
    logger.info(
        "Training with %s: %d parameters, %d items, %d epochs of %d batches",
        name, store.size, n_items, cfg.epochs, n_batches,
    )
    start = time.perf_counter()
    bar = tqdm(range(cfg.epochs), disable=not cfg.progress, desc=name)
    for epoch in bar:
        order = rng.permutation(n_items)
        values = []
        extras: Dict[str, list] = {}
        for step, batch in enumerate(np.array_split(order, n_batches)):
            store.zero_grad()
            value, grad, terms = objective(batch, epoch, rng)
            if not (math.isfinite(value) and np.all(np.isfinite(grad))):
                report.aborted = True
                report.wall_clock_s = time.perf_counter() - start
                report.final_parameters = store.values.copy()
                logger.error("Objective diverged at epoch %d, step %d", epoch + 1, step + 1)
                raise TrainingDivergedError(
                    f"non-finite objective at epoch {epoch + 1}, step {step + 1}", epoch + 1, step + 1, report
                )
            store.load(adamw_step(state, store.values, -grad))
            values.append(value)
            for key, v in terms.items():
                extras.setdefault(key, []).append(v)
        report.loss_trace.append(float(np.mean(values)))
        for key, vs in extras.items():
            report.traces.setdefault(key, []).append(float(np.mean(vs)))
        bar.set_postfix(objective=f"{report.loss_trace[-1]:.4g}")
        logger.debug("Epoch %d: objective %.6g", epoch + 1, report.loss_trace[-1])
        if cfg.log_every and (epoch + 1) % cfg.log_every == 0:
            logger.info("Epoch %d/%d: objective %.6g", epoch + 1, cfg.epochs, report.loss_trace[-1])
    report.wall_clock_s = time.perf_counter() - start
    report.final_parameters = store.values.copy()
    logger.info(
        "Finished %s in %.1f s, final objective %.6g", name, report.wall_clock_s, report.loss_trace[-1]
    )
    return report
