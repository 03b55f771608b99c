"""
Forward simulation of particle systems, Brownian-bridge sampling and the
synthetic datasets.
"""
import logging
from dataclasses import replace
from typing import Any, Dict, Optional, Union

import numpy as np
from tqdm import tqdm

from .basics import check_finite, make_rng
from .constants import (
    EIGHT_GAUSSIAN_MEANS,
    JUMP_LOG_SIZE_RANGE,
    SYSTEM_DEFAULTS,
)
from .drift.truth import System, TrueDrift
from .errors import ConfigError
from .types import BridgeSpec, GeneratorSpec, TrajectoryDataset

logger = logging.getLogger(__name__)

EIGHT_GAUSSIANS = "eight_gaussians"


def euler_maruyama(
    drift,
    init: np.ndarray,
    times: np.ndarray,
    sigma: float,
    rng: Union[int, np.random.Generator, None] = None,
    noise_mask: Optional[np.ndarray] = None,
    jumps: Optional[Dict[int, np.ndarray]] = None,
    progress: bool = False,
) -> TrajectoryDataset:
    """
    Simulate interacting particles with the Euler-Maruyama scheme.

    All particles advance together: the drift of every particle at step j is
    evaluated against the whole cloud at step j.

    Parameters
    ----------
    drift : DriftModel | TrueDrift
        Anything with `evaluate(x, population, t, rng)`.
    init : np.ndarray
        Initial states, shape (N, d).
    times : np.ndarray
        Strictly increasing time grid, shape (K,).
    sigma : float
        Diffusion constant.
    rng : int | np.random.Generator | None
    noise_mask : np.ndarray | None
        Per-coordinate multiplier of the noise; defaults to the drift's own
        mask, or all ones.
    jumps : dict of int to np.ndarray | None
        Displacement added to every particle when arriving at a grid index.
    progress : bool
        Show a progress bar.

    Returns
    -------
    dataset : TrajectoryDataset
        Fully observed trajectories.
    """
    rng = make_rng(rng)
    init = np.atleast_2d(np.asarray(init, dtype=float))
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0):
        raise ConfigError("simulation times must be strictly increasing")
    check_finite(init, "initial state", step=0)
    n_particles, dim = init.shape
    if noise_mask is None:
        noise_mask = getattr(drift, "noise_mask", None)
    scale = sigma * (np.ones(dim) if noise_mask is None else np.asarray(noise_mask, dtype=float))
    jumps = jumps or {}

    states = np.empty((n_particles, times.shape[0], dim))
    states[:, 0] = init
    for j in tqdm(range(times.shape[0] - 1), disable=not progress, desc="simulate"):
        x = states[:, j]
        dt = times[j + 1] - times[j]
        b = drift.evaluate(x, x, times[j], rng)
        noise = rng.standard_normal((n_particles, dim)) * np.sqrt(dt)
        nxt = x + b * dt + scale * noise
        if j + 1 in jumps:
            nxt = nxt + jumps[j + 1]
        check_finite(nxt, "simulation state", step=j + 1, time=float(times[j + 1]))
        states[:, j + 1] = nxt
    return TrajectoryDataset(times, states, metadata={"sigma": float(sigma)})


def bridge_fill(
    start: np.ndarray,
    end: np.ndarray,
    grid: np.ndarray,
    sigma: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    Sample Brownian bridges by sequential conditional Gaussians.

    Parameters
    ----------
    start, end : np.ndarray
        Pinned endpoints, shape (M, d).
    grid : np.ndarray
        Time grids, shape (J + 1,) shared or (M, J + 1) per bridge, first and
        last entries being the pinned times.
    sigma : float
    rng : np.random.Generator

    Returns
    -------
    paths : np.ndarray
        Shape (M, J + 1, d), equal to `start` and `end` at the ends.
    """
    start = np.atleast_2d(np.asarray(start, dtype=float))
    end = np.atleast_2d(np.asarray(end, dtype=float))
    n_paths, dim = start.shape
    grid = np.asarray(grid, dtype=float)
    if grid.ndim == 1:
        grid = np.broadcast_to(grid, (n_paths, grid.shape[0]))
    n_points = grid.shape[1]
    t1 = grid[:, -1:]
    paths = np.empty((n_paths, n_points, dim))
    paths[:, 0] = start
    for k in range(1, n_points - 1):
        s, u = grid[:, k - 1:k], grid[:, k:k + 1]
        remaining = t1 - s
        mean = paths[:, k - 1] + (u - s) / remaining * (end - paths[:, k - 1])
        var = sigma ** 2 * (u - s) * (t1 - u) / remaining
        paths[:, k] = mean + np.sqrt(var) * rng.standard_normal((n_paths, dim))
    paths[:, -1] = end
    return paths


def sample_bridge(spec: BridgeSpec, rng: Union[int, np.random.Generator, None] = None) -> np.ndarray:
    """
    One Brownian bridge on a uniform grid of `spec.n_steps` intervals.

    Returns
    -------
    path : np.ndarray
        Shape (J + 1, d); path[0] = a and path[J] = b exactly.
    """
    if spec.n_steps < 1:
        raise ConfigError("a bridge needs at least one interval")
    if not spec.t0 < spec.t1:
        raise ConfigError("bridge interval must satisfy t0 < t1")
    a = np.atleast_1d(np.asarray(spec.a, dtype=float))
    b = np.atleast_1d(np.asarray(spec.b, dtype=float))
    grid = np.linspace(spec.t0, spec.t1, spec.n_steps + 1)
    return bridge_fill(a[None, :], b[None, :], grid, spec.sigma, make_rng(rng))[0]


def resolve_spec(spec: GeneratorSpec) -> GeneratorSpec:
    """Copy of `spec` with the system defaults filled in."""
    if spec.system not in SYSTEM_DEFAULTS:
        choices = ", ".join(SYSTEM_DEFAULTS)
        raise ConfigError(f"unknown system {spec.system!r}, expected one of {choices}")
    defaults = SYSTEM_DEFAULTS[spec.system]
    filled = {
        name: defaults[name] if getattr(spec, name) is None else getattr(spec, name)
        for name in ("sigma", "T", "dt", "n_particles", "dim")
    }
    resolved = replace(spec, **filled)
    if resolved.system != EIGHT_GAUSSIANS and resolved.dim != defaults["dim"]:
        raise ConfigError(f"system {spec.system} is {defaults['dim']}-dimensional, got dim={resolved.dim}")
    if resolved.sigma < 0 or resolved.T <= 0 or resolved.dt <= 0 or resolved.n_particles < 1:
        raise ConfigError("generator needs sigma >= 0, T > 0, dt > 0 and at least one particle")
    if resolved.observation_noise < 0:
        raise ConfigError("observation noise must be non-negative")
    if resolved.n_irregular is not None and resolved.n_irregular < 1:
        raise ConfigError("n_irregular must be positive")
    return resolved


def time_grid(T: float, dt: float) -> np.ndarray:
    """Uniform grid 0, dt, ..., T with round(T / dt) intervals."""
    n_steps = int(round(T / dt))
    if n_steps < 1:
        raise ConfigError(f"T={T} and dt={dt} give no simulation step")
    return np.linspace(0.0, n_steps * dt, n_steps + 1)


def irregular_mask(n_particles: int, times: np.ndarray, n_obs: int, rng: np.random.Generator) -> np.ndarray:
    """
    Per-particle observation mask from exponential inter-arrival times.

    Arrivals have mean gap T / n_obs, are snapped to the nearest grid index and
    deduplicated; the first and last index are always kept.
    """
    t0, horizon = times[0], times[-1] - times[0]
    mean_gap = horizon / n_obs
    mask = np.zeros((n_particles, times.shape[0]), dtype=bool)
    for i in range(n_particles):
        arrivals = np.empty(0)
        total = 0.0
        while total <= horizon:
            gaps = rng.exponential(mean_gap, size=n_obs + 1)
            arrivals = np.concatenate([arrivals, total + np.cumsum(gaps)])
            total = arrivals[-1]
        arrivals = t0 + arrivals[arrivals <= horizon]
        index = np.abs(times[None, :] - arrivals[:, None]).argmin(axis=1)
        mask[i, np.unique(index)] = True
    mask[:, 0] = True
    mask[:, -1] = True
    return mask


def eight_gaussians(n: int, rng: Union[int, np.random.Generator, None] = None, dim: int = 2) -> np.ndarray:
    """
    Sample the eight-Gaussian mixture.

    Component means lie on the circle of radius 2; for dim > 2 the planar mean
    is repeated over blocks of two coordinates. Covariance is the identity.

    Returns
    -------
    x : np.ndarray
        Shape (n, dim).
    """
    rng = make_rng(rng)
    means = np.asarray(EIGHT_GAUSSIAN_MEANS, dtype=float)
    reps = -(-dim // 2)
    means = np.tile(means, (1, reps))[:, :dim]
    component = rng.integers(0, means.shape[0], size=n)
    return means[component] + rng.standard_normal((n, dim))


def generative_dataset(spec: GeneratorSpec) -> TrajectoryDataset:
    """
    Endpoint dataset N(0, I) -> eight-Gaussian mixture.

    Initial and terminal samples are matched at random. Only the first and
    last grid index are observed; the interior holds the straight line between
    them.
    """
    spec = resolve_spec(spec)
    rng = make_rng(spec.seed)
    times = time_grid(spec.T, spec.dt)
    start = rng.standard_normal((spec.n_particles, spec.dim))
    end = eight_gaussians(spec.n_particles, rng, spec.dim)[rng.permutation(spec.n_particles)]
    weight = (times - times[0]) / (times[-1] - times[0])
    states = start[:, None, :] + weight[None, :, None] * (end - start)[:, None, :]
    mask = np.zeros(states.shape[:2], dtype=bool)
    mask[:, [0, -1]] = True
    return TrajectoryDataset(times, states, mask, _metadata(spec))


def _metadata(spec: GeneratorSpec) -> Dict[str, Any]:
    return {
        "system": spec.system,
        "seed": spec.seed,
        "sigma": spec.sigma,
        "T": spec.T,
        "dt": spec.dt,
        "observation_noise": spec.observation_noise,
    }


def generate(spec: GeneratorSpec) -> TrajectoryDataset:
    """
    Simulate a synthetic dataset.

    Parameters
    ----------
    spec : GeneratorSpec
        Unset fields take the system defaults.

    Returns
    -------
    dataset : TrajectoryDataset
        Observations on the simulation grid, with observation noise applied
        and an irregular mask when `n_irregular` is set.
    """
    if spec.system == EIGHT_GAUSSIANS:
        return generative_dataset(spec)
    spec = resolve_spec(spec)
    system = System.parse(spec.system)
    truth = TrueDrift(system)
    rng = make_rng(spec.seed)
    times = time_grid(spec.T, spec.dt)
    init = spec.init_std * rng.standard_normal((spec.n_particles, spec.dim))

    jumps: Dict[int, np.ndarray] = {}
    jump_log = []
    if system is System.JUMP_OU and spec.jump_count > 0:
        if spec.jump_count > times.shape[0] - 1:
            raise ConfigError(f"{spec.jump_count} jumps do not fit {times.shape[0] - 1} steps")
        steps = np.sort(rng.choice(np.arange(1, times.shape[0]), size=spec.jump_count, replace=False))
        sizes = np.exp(rng.uniform(*JUMP_LOG_SIZE_RANGE, size=spec.jump_count))
        for step, size in zip(steps, sizes):
            jumps[int(step)] = np.full(spec.dim, size)
            jump_log.append({"step": int(step), "time": float(times[step]), "size": float(size)})
        logger.warning("Jump sizes have no stated sign; applying positive jumps to every coordinate")

    ds = euler_maruyama(truth, init, times, spec.sigma, rng, jumps=jumps)
    states = ds.states
    if spec.observation_noise > 0:
        states = states + spec.observation_noise * rng.standard_normal(states.shape)
    mask = None
    if spec.n_irregular is not None:
        mask = irregular_mask(spec.n_particles, times, spec.n_irregular, rng)
    metadata = _metadata(spec)
    metadata["noise_mask"] = truth.noise_mask.tolist()
    if jump_log:
        metadata["jumps"] = jump_log
    logger.debug("Generated %s: N=%d, K=%d, d=%d", spec.system, spec.n_particles, times.shape[0], spec.dim)
    return TrajectoryDataset(times, states, mask, metadata)
