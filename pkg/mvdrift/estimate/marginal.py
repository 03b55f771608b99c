"""
Marginal-law training: Girsanov likelihood, flow log-density of the observed
marginals and the compatibility criterion tying the flow to the drift.
"""
import logging
from typing import Optional, Union

import numpy as np

from ..basics import as_rows, make_rng, time_column
from ..diffgraph import Graph
from ..drift import Architecture, DriftModel, TrueDrift
from ..errors import NumericError, UsageError
from ..types import TrainConfig, TrainReport, TrajectoryDataset
from .girsanov import path_loglik
from .training import fit, graph_objective, resolve_sigma

logger = logging.getLogger(__name__)


def _drift_node(graph: Graph, drift, z: int, t: float, population, rng) -> int:
    if isinstance(drift, TrueDrift):
        return graph.constant(drift.evaluate(graph.value(z), population, t))
    return drift.drift(graph, z, t, population, rng)


def compatibility_criterion(
    drift: Union[DriftModel, TrueDrift],
    x: np.ndarray,
    t0: float,
    t1: float,
    n_samples: int,
    graph: Graph,
    rng: Union[int, np.random.Generator, None] = None,
    density=None,
    sigma: float = 1.0,
    steps: int = 1,
    population=None,
) -> int:
    """
    Feynman-Kac consistency of a density with a drift.

    From every point x, `n_samples` Euler-Maruyama paths of the drift are run
    from t0 to t1 and the criterion is

        (log p_t0(x) - mean_k log p_t1(Z_k))^2,

    averaged over the rows of x. The paths are recorded on the tape, so the
    criterion is differentiable in the drift and the density.

    Parameters
    ----------
    drift : DriftModel | TrueDrift
    x : np.ndarray
        Point (d,) or batch (B, d).
    t0, t1 : float
        Interval, t0 < t1.
    n_samples : int
        Paths per point M.
    graph : Graph
    rng : int | np.random.Generator | None
    density : object | None
        Anything with `log_prob(x, t, graph)` returning a (B,) node; defaults
        to the flow of a marginal-law drift.
    sigma : float
    steps : int
        Euler sub-steps between t0 and t1.
    population : np.ndarray | None
        Population of an em drift or a mean-field analytic drift.

    Returns
    -------
    cc : int
        Scalar node.
    """
    rng = make_rng(rng)
    if density is None:
        density = getattr(drift, "flow", None)
        if density is None:
            raise UsageError("the compatibility criterion needs a density or a marginal-law drift")
    if not t0 < t1 or n_samples < 1 or steps < 1:
        raise UsageError("the compatibility criterion needs t0 < t1, n_samples >= 1 and steps >= 1")
    rows, _ = as_rows(x)
    n_rows, dim = rows.shape
    dt = (t1 - t0) / steps
    z = graph.constant(np.repeat(rows, n_samples, axis=0))
    noise_mask = getattr(drift, "noise_mask", None)
    scale = sigma * (np.ones(dim) if noise_mask is None else np.asarray(noise_mask, dtype=float))
    for k in range(steps):
        t = t0 + k * dt
        b = _drift_node(graph, drift, z, t, population, rng)
        noise = scale * np.sqrt(dt) * rng.standard_normal((n_rows * n_samples, dim))
        z = graph.add(graph.add(z, graph.scale(b, dt)), graph.constant(noise))
    start = density.log_prob(rows, time_column(t0, n_rows), graph)
    end = density.log_prob(z, time_column(t1, n_rows * n_samples), graph)
    expected = graph.mean(graph.reshape(end, (n_rows, n_samples)), axis=1)
    gap = graph.sub(start, expected)
    if not np.all(np.isfinite(graph.value(gap))):
        raise NumericError("non-finite log-density in the compatibility criterion", time=float(t1))
    return graph.mean(graph.square(gap))


def observed_log_density(graph: Graph, drift: DriftModel, paths: np.ndarray, times: np.ndarray) -> int:
    """Sum over times of the flow log-density of every path, a (B,) node."""
    n_paths, n_times, dim = paths.shape
    logp = drift.flow.log_prob(paths.reshape(-1, dim), np.tile(times, n_paths), graph)
    return graph.sum(graph.reshape(logp, (n_paths, n_times)), axis=1)


def train_ml(drift: DriftModel, ds: TrajectoryDataset, cfg: TrainConfig) -> TrainReport:
    """
    Joint training of a marginal-law drift and its flow.

    The maximised batch objective is

        mean Girsanov log-likelihood + mean sum_j log p_tj(X_tj) - cc_weight * sum_j CC_j,

    all three terms summed over the observation grid. The criterion sum is
    estimated from one random interval per batch particle (see
    `batch_compatibility`). Traces `elbo`, `log_density` and `cc` are reported.

    Parameters
    ----------
    drift : DriftModel
        Marginal-law drift.
    ds : TrajectoryDataset
        Fully observed trajectories.
    cfg : TrainConfig

    Returns
    -------
    report : TrainReport
    """
    if drift.variant is not Architecture.ML:
        raise UsageError(f"marginal-law training needs an ml drift, got {drift.variant.value}")
    if not ds.is_regular:
        raise UsageError("marginal-law training needs fully observed trajectories")
    if ds.n_times < 2:
        raise UsageError("the likelihood needs at least two observed times")
    sigma = resolve_sigma(cfg, ds)

    def objective(batch, epoch, rng):
        paths = ds.states[batch]
        picks = rng.integers(0, ds.n_times - 1, size=len(batch))

        def build(graph):
            elbo = graph.mean(path_loglik(graph, drift, paths, ds.times, sigma, None, rng))
            logp = graph.mean(observed_log_density(graph, drift, paths, ds.times))
            cc = batch_compatibility(graph, drift, paths, ds.times, picks, cfg, sigma, rng)
            total = graph.sub(graph.add(elbo, logp), graph.scale(cc, cfg.cc_weight))
            return total, {"elbo": elbo, "log_density": logp, "cc": cc}

        return graph_objective(drift.store, build)

    return fit(drift.store, ds.n_particles, cfg, objective, "marginal")


def batch_compatibility(
    graph: Graph,
    drift: DriftModel,
    paths: np.ndarray,
    times: np.ndarray,
    picks: np.ndarray,
    cfg: TrainConfig,
    sigma: float,
    rng: np.random.Generator,
) -> int:
    """
    Criterion summed over the K - 1 observation intervals of a batch.

    Path b contributes its interval `picks[b]`; the interval values are
    weighted so the result is an unbiased estimate of sum_j CC_j. When every
    interval is picked by exactly one path the sum is exact.

    Parameters
    ----------
    graph : Graph
    drift : DriftModel
    paths : np.ndarray
        Batch trajectories (B, K, d).
    times : np.ndarray
        Observation times (K,).
    picks : np.ndarray
        Interval index in [0, K - 1) per path.
    cfg : TrainConfig
        `cc_samples` and `cc_steps` are read.
    sigma : float
    rng : np.random.Generator

    Returns
    -------
    cc : int
        Scalar node.
    """
    n_intervals = len(times) - 1
    total: Optional[int] = None
    for j in np.unique(picks):
        rows = paths[picks == j, j]
        cc = compatibility_criterion(
            drift, rows, times[j], times[j + 1], cfg.cc_samples, graph, rng,
            sigma=sigma, steps=cfg.cc_steps,
        )
        weighted = graph.scale(cc, n_intervals * rows.shape[0] / len(picks))
        total = weighted if total is None else graph.add(total, weighted)
    return total
