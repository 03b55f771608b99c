"""
Discretized Girsanov log-likelihood, and the maximum-likelihood and
Brownian-bridge estimators built on it.
"""
import logging
import warnings
from typing import Dict, List, Optional

import numpy as np

from ..diffgraph import Graph
from ..drift import Architecture, DriftModel
from ..errors import ConfigError, UsageError
from ..simulate import bridge_fill
from ..types import TrainConfig, TrainReport, TrajectoryDataset
from .training import fit, graph_objective, resolve_sigma

logger = logging.getLogger(__name__)


def path_loglik(
    graph: Graph,
    drift: DriftModel,
    paths: np.ndarray,
    times: np.ndarray,
    sigma: float,
    clouds: Optional[np.ndarray] = None,
    rng: Optional[np.random.Generator] = None,
) -> int:
    """
    Girsanov log-likelihood of every path.

    sum_j <b(X_j, p_j, t_j), X_{j+1} - X_j> / sigma^2 - 1/2 sum_j |b|^2 (t_{j+1} - t_j) / sigma^2

    Parameters
    ----------
    graph : Graph
    drift : DriftModel
    paths : np.ndarray
        Shape (B, K, d).
    times : np.ndarray
        Shape (K,).
    sigma : float
    clouds : np.ndarray | None
        Population of the em drift at every time but the last, shape (K - 1, n, d).
    rng : np.random.Generator | None
        Generator of the flow samples of the ml drift.

    Returns
    -------
    loglik : int
        Node of shape (B,).
    """
    n_paths, n_times, dim = paths.shape
    if n_times < 2:
        raise UsageError("the likelihood needs at least two observed times")
    steps = n_times - 1
    x = paths[:, :-1].reshape(-1, dim)
    dx = np.diff(paths, axis=1).reshape(-1, dim)
    t = np.tile(times[:-1], n_paths)
    dt = np.tile(np.diff(times), n_paths)
    population = None
    if drift.variant is Architecture.EM:
        if clouds is None:
            raise UsageError("the em drift needs the particle cloud at every time")
        population = clouds[np.tile(np.arange(steps), n_paths)]
    b = drift.drift(graph, x, t, population, rng)
    cross = graph.dot_rows(b, graph.constant(dx))
    energy = graph.mul(graph.sq_norm_rows(b), graph.constant(dt))
    terms = graph.scale(graph.sub(cross, graph.scale(energy, 0.5)), 1.0 / sigma ** 2)
    return graph.sum(graph.reshape(terms, (n_paths, steps)), axis=1)


def girsanov_loglik(
    drift: DriftModel,
    ds: TrajectoryDataset,
    i: int,
    graph: Graph,
    sigma: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
) -> int:
    """
    Girsanov log-likelihood of particle i of a fully observed dataset.

    The em population at t_j is the whole observed cloud at t_j.

    Returns
    -------
    loglik : int
        Scalar node.
    """
    if ds.n_times < 2:
        raise UsageError("the likelihood needs at least two observed times")
    if not ds.observed()[i].all():
        raise UsageError(f"particle {i} is not observed at every time stamp")
    if sigma is None:
        sigma = resolve_sigma(TrainConfig(), ds)
    clouds = np.swapaxes(ds.states[:, :-1], 0, 1)
    ll = path_loglik(graph, drift, ds.states[i:i + 1], ds.times, sigma, clouds, rng)
    return graph.sum(ll)


def _em_clouds(states: np.ndarray, size: Optional[int], rng: np.random.Generator) -> np.ndarray:
    """Per-time particle clouds (K - 1, n, d), subsampled to `size` particles when set."""
    clouds = np.swapaxes(states[:, :-1], 0, 1)
    if size is not None and size < clouds.shape[1]:
        pick = rng.choice(clouds.shape[1], size=size, replace=False)
        clouds = clouds[:, pick]
    return clouds


def train_mle(drift: DriftModel, ds: TrajectoryDataset, cfg: TrainConfig) -> TrainReport:
    """
    Maximum likelihood with the discretized Girsanov likelihood.

    Parameters
    ----------
    drift : DriftModel
    ds : TrajectoryDataset
        Fully observed trajectories.
    cfg : TrainConfig

    Returns
    -------
    report : TrainReport
    """
    if not ds.is_regular:
        raise UsageError("maximum likelihood needs fully observed trajectories; use the bridge estimator")
    if ds.n_times < 2:
        raise UsageError("the likelihood needs at least two observed times")
    sigma = resolve_sigma(cfg, ds)

    def objective(batch, epoch, rng):
        clouds = None
        if drift.variant is Architecture.EM:
            clouds = _em_clouds(ds.states, cfg.population_size, rng)

        def build(graph):
            ll = path_loglik(graph, drift, ds.states[batch], ds.times, sigma, clouds, rng)
            return graph.mean(ll), {}

        return graph_objective(drift.store, build)

    return fit(drift.store, ds.n_particles, cfg, objective, "mle")


def refine_grid(times: np.ndarray, substeps: int) -> np.ndarray:
    """Grid with `substeps` equal intervals inside every interval of `times`."""
    if substeps < 1:
        raise ConfigError("bridge_substeps must be at least 1")
    if substeps == 1:
        return np.asarray(times, dtype=float)
    pieces = [np.linspace(a, b, substeps + 1)[:-1] for a, b in zip(times[:-1], times[1:])]
    return np.concatenate(pieces + [times[-1:]])


def impute_paths(
    ds: TrajectoryDataset,
    particles: np.ndarray,
    sigma: float,
    rng: np.random.Generator,
    substeps: int = 1,
) -> np.ndarray:
    """
    Fill the gaps between consecutive observations with Brownian bridges.

    Parameters
    ----------
    ds : TrajectoryDataset
    particles : np.ndarray
        Indices of the particles to impute.
    sigma : float
    rng : np.random.Generator
    substeps : int
        Refinement of the observation grid.

    Returns
    -------
    paths : np.ndarray
        Shape (len(particles), K_fine, d) on `refine_grid(ds.times, substeps)`,
        equal to the data at every observed entry.
    """
    fine = refine_grid(ds.times, substeps)
    observed = ds.observed()[particles]
    paths = np.zeros((len(particles), fine.shape[0], ds.dim))
    rows: List[int] = []
    starts: List[int] = []
    stops: List[int] = []
    for r, p in enumerate(particles):
        idx = np.flatnonzero(observed[r])
        paths[r, idx * substeps] = ds.states[p, idx]
        rows.extend([r] * (idx.shape[0] - 1))
        starts.extend(idx[:-1] * substeps)
        stops.extend(idx[1:] * substeps)
    rows_a = np.asarray(rows, dtype=int)
    starts_a, stops_a = np.asarray(starts, dtype=int), np.asarray(stops, dtype=int)
    span = fine[stops_a] - fine[starts_a]
    if np.any(span <= 0):
        message = f"skipping {int(np.sum(span <= 0))} bridge segments of zero duration"
        logger.warning(message)
        warnings.warn(message, RuntimeWarning)
        keep = span > 0
        rows_a, starts_a, stops_a = rows_a[keep], starts_a[keep], stops_a[keep]
    lengths = stops_a - starts_a
    for length in np.unique(lengths):
        sel = lengths == length
        r, a = rows_a[sel], starts_a[sel]
        offsets = a[:, None] + np.arange(length + 1)[None, :]
        filled = bridge_fill(paths[r, a], paths[r, a + length], fine[offsets], sigma, rng)
        paths[r[:, None], offsets] = filled
    return paths


def train_bridge(drift: DriftModel, ds: TrajectoryDataset, cfg: TrainConfig) -> TrainReport:
    """
    Brownian-bridge ELBO for irregularly observed trajectories.

    Every optimizer step averages the Girsanov log-likelihood over
    `cfg.n_bridges` imputations of the batch paths. The em population at a
    grid time is the imputed cloud of every particle at that time.

    Parameters
    ----------
    drift : DriftModel
    ds : TrajectoryDataset
        Observations, regular or masked.
    cfg : TrainConfig

    Returns
    -------
    report : TrainReport
    """
    if cfg.n_bridges < 1:
        raise ConfigError("n_bridges must be at least 1")
    sigma = resolve_sigma(cfg, ds)
    fine = refine_grid(ds.times, cfg.bridge_substeps)
    everyone = np.arange(ds.n_particles)
    whole_cloud = drift.variant is Architecture.EM or cfg.cache_bridges
    cache: Dict[int, np.ndarray] = {}

    def draw(k: int, batch: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        if cfg.cache_bridges:
            if k not in cache:
                cache[k] = impute_paths(ds, everyone, sigma, rng, cfg.bridge_substeps)
            return cache[k]
        particles = everyone if whole_cloud else batch
        return impute_paths(ds, particles, sigma, rng, cfg.bridge_substeps)

    def objective(batch, epoch, rng):
        total, grad = 0.0, np.zeros(drift.store.size)
        for k in range(cfg.n_bridges):
            paths = draw(k, batch, rng)
            batch_paths = paths[batch] if whole_cloud else paths
            clouds = _em_clouds(paths, cfg.population_size, rng) if drift.variant is Architecture.EM else None

            def build(graph):
                ll = path_loglik(graph, drift, batch_paths, fine, sigma, clouds, rng)
                return graph.scale(graph.mean(ll), 1.0 / cfg.n_bridges), {}

            value, g, _ = graph_objective(drift.store, build)
            total += value
            grad += g
        return total, grad, {}

    return fit(drift.store, ds.n_particles, cfg, objective, "bridge")
