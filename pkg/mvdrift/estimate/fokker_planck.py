"""
Linear Fokker-Planck density estimation.

For a drift without population dependence the terminal density solves a
linear PDE. By Feynman-Kac and Girsanov it is an expectation over driftless
Brownian paths started at x, and Jensen's inequality gives the lower bound

    log p_T(x) >= E[ -int div b dt + log p_0(X_T) + int <b, dX> / sigma^2 - 1/2 int |b|^2 / sigma^2 dt ],

with forward-Euler quadrature of the integrals.
"""
import logging
from typing import Callable, Optional, Union

import numpy as np

from ..basics import as_rows, make_rng, standard_normal_logpdf
from ..constants import FP_PATHS, FP_STEPS
from ..diffgraph import Graph
from ..drift import Architecture, DriftModel
from ..errors import ConfigError, UsageError
from ..types import TrainConfig, TrainReport, TrajectoryDataset
from .training import fit, graph_objective, resolve_sigma

logger = logging.getLogger(__name__)

LogDensity = Callable[[np.ndarray], np.ndarray]


def linear_fp_elbo(
    drift: DriftModel,
    x: np.ndarray,
    graph: Graph,
    rng: Union[int, np.random.Generator, None] = None,
    T: float = 0.1,
    steps: int = FP_STEPS,
    n_paths: int = FP_PATHS,
    sigma: float = 1.0,
    log_p0: Optional[LogDensity] = None,
    population_size: Optional[int] = None,
) -> int:
    """
    Monte-Carlo lower bound of log p_T(x).

    Parameters
    ----------
    drift : DriftModel
        ito_mlp, em or im drift.
    x : np.ndarray
        Point (d,) or batch (B, d).
    graph : Graph
    rng : int | np.random.Generator | None
    T : float
        Time horizon.
    steps : int
        Euler steps of the quadrature.
    n_paths : int
        Brownian paths per point M.
    sigma : float
    log_p0 : callable | None
        Row-wise log-density of the base law; standard normal by default.
    population_size : int | None
        The em population at a time is a random subset of this many of the
        simulated paths; every path when None.

    Returns
    -------
    elbo : int
        Scalar node, the bound averaged over the rows of x.
    """
    if drift.variant is Architecture.ML:
        raise UsageError("the linear Fokker-Planck bound needs an ito_mlp, em or im drift")
    if T <= 0 or steps < 1 or n_paths < 1:
        raise ConfigError("the linear Fokker-Planck bound needs T > 0, steps >= 1 and n_paths >= 1")
    rng = make_rng(rng)
    log_p0 = standard_normal_logpdf if log_p0 is None else log_p0
    rows, _ = as_rows(x, drift.dim)
    n_rows, dim = rows.shape
    n_walkers = n_rows * n_paths
    dt = T / steps
    increments = sigma * np.sqrt(dt) * rng.standard_normal((n_walkers, steps, dim))
    start = np.repeat(rows, n_paths, axis=0)[:, None, :]
    paths = np.concatenate([start, start + np.cumsum(increments, axis=1)], axis=1)
    times = np.linspace(0.0, T, steps + 1)
    x_rows = paths[:, :-1].reshape(-1, dim)
    t_rows = np.tile(times[:-1], n_walkers)

    population = None
    if drift.variant is Architecture.EM:
        clouds = np.swapaxes(paths[:, :-1], 0, 1)
        if population_size is not None and population_size < n_walkers:
            clouds = clouds[:, rng.choice(n_walkers, size=population_size, replace=False)]
        population = clouds[np.tile(np.arange(steps), n_walkers)]

    b = drift.drift(graph, x_rows, t_rows, population)
    div = drift.divergence(graph, x_rows, t_rows, population)
    cross = graph.dot_rows(b, graph.constant(increments.reshape(-1, dim)))
    girsanov = graph.scale(
        graph.sub(cross, graph.scale(graph.sq_norm_rows(b), 0.5 * dt)), 1.0 / sigma ** 2
    )
    integrand = graph.sub(girsanov, graph.scale(div, dt))
    per_path = graph.sum(graph.reshape(integrand, (n_walkers, steps)), axis=1)
    terminal = graph.constant(log_p0(paths[:, -1]))
    per_path = graph.add(per_path, terminal)
    per_point = graph.mean(graph.reshape(per_path, (n_rows, n_paths)), axis=1)
    return graph.mean(per_point)


def _terminal_samples(data: Union[TrajectoryDataset, np.ndarray], cfg: TrainConfig):
    if isinstance(data, TrajectoryDataset):
        horizon = cfg.horizon if cfg.horizon is not None else float(data.times[-1] - data.times[0])
        return data.states[:, -1], horizon
    if cfg.horizon is None:
        raise ConfigError("training on bare samples needs train.horizon")
    return np.atleast_2d(np.asarray(data, dtype=float)), float(cfg.horizon)


def train_fokker_planck(
    drift: DriftModel,
    data: Union[TrajectoryDataset, np.ndarray],
    cfg: TrainConfig,
    log_p0: Optional[LogDensity] = None,
) -> TrainReport:
    """
    Fit a drift by maximising the mean linear Fokker-Planck bound of terminal samples.

    Parameters
    ----------
    drift : DriftModel
    data : TrajectoryDataset | np.ndarray
        Dataset (its terminal observations are used) or samples (N, d).
    cfg : TrainConfig
    log_p0 : callable | None
        Base log-density, standard normal by default.

    Returns
    -------
    report : TrainReport
    """
    if cfg.divergence != "exact":
        raise ConfigError(f"unknown divergence method {cfg.divergence!r}; only 'exact' is available")
    samples, horizon = _terminal_samples(data, cfg)
    sigma = resolve_sigma(cfg, data if isinstance(data, TrajectoryDataset) else None)

    def objective(batch, epoch, rng):
        def build(graph):
            elbo = linear_fp_elbo(
                drift, samples[batch], graph, rng, horizon, cfg.fp_steps, cfg.fp_paths,
                sigma, log_p0, cfg.population_size,
            )
            return elbo, {}

        return graph_objective(drift.store, build)

    return fit(drift.store, samples.shape[0], cfg, objective, "fokker_planck")


def fp_elbo_score(
    drift: DriftModel,
    samples: np.ndarray,
    T: float,
    steps: int = FP_STEPS,
    n_paths: int = FP_PATHS,
    sigma: float = 1.0,
    seed: Union[int, np.random.Generator, None] = 0,
    log_p0: Optional[LogDensity] = None,
) -> float:
    """Mean linear Fokker-Planck bound of held-out samples."""
    graph = Graph(drift.store)
    return float(graph.value(linear_fp_elbo(drift, samples, graph, seed, T, steps, n_paths, sigma, log_p0)))
