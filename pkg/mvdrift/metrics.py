"""
Evaluation metrics: drift error on a grid, squared energy distance, CRPS and
empirical-CDF distances.
"""
import logging
import os
import warnings
from dataclasses import asdict, dataclass
from typing import Dict, Optional, Union

import numpy as np
import pandas as pd
from scipy import stats
from scipy.spatial.distance import cdist

from .basics import make_rng
from .constants import CSV_FLOAT_FORMAT
from .errors import ConfigError
from .types import EvalGrid, Population

logger = logging.getLogger(__name__)

_BLOCK = 2048

RESULT_COLUMNS = ["experiment", "metric", "value", "seed"]


@dataclass
class EcdfDistances:
    """
    Pointwise gaps |F_A - F_B| of two empirical CDFs over the pooled sample.

    Attributes
    ----------
    mean : float
    p75, p90 : float
        75th and 90th percentiles of the gaps.
    ks : float
        Largest gap (Kolmogorov-Smirnov distance).
    """

    mean: float
    p75: float
    p90: float
    ks: float


def drift_mse(
    est,
    truth,
    grid: Union[EvalGrid, np.ndarray],
    pop_source: Optional[Union[np.ndarray, Population]] = None,
    t: float = 0.0,
    rng: Union[int, np.random.Generator, None] = 0,
) -> float:
    """
    Mean over the grid of |b_est - b_true|^2 / d.

    Parameters
    ----------
    est, truth
        Drifts with `evaluate(x, population, t, rng)` (learned or analytic).
    grid : EvalGrid | np.ndarray
        Evaluation points (P, d).
    pop_source : np.ndarray | Population | None
        Population (n, d) given to both drifts, typically a held-out cloud at t.
    t : float
    rng : int | np.random.Generator | None
        Generator of the flow samples of a marginal-law estimate.

    Returns
    -------
    mse : float
    """
    points = grid.points if isinstance(grid, EvalGrid) else EvalGrid(grid).points
    if isinstance(pop_source, Population):
        pop_source = pop_source.particles
    rng = make_rng(rng)
    b_est = est.evaluate(points, pop_source, t, rng)
    b_true = truth.evaluate(points, pop_source, t, rng)
    return float(np.mean(np.sum((b_est - b_true) ** 2, axis=1)) / points.shape[1])


def _mean_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Mean Euclidean distance over all pairs, computed in blocks."""
    total = 0.0
    for i in range(0, a.shape[0], _BLOCK):
        for j in range(0, b.shape[0], _BLOCK):
            total += float(np.sum(cdist(a[i:i + _BLOCK], b[j:j + _BLOCK])))
    return total / (a.shape[0] * b.shape[0])


def _as_sample(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] == 0:
        raise ConfigError(f"expected a non-empty sample of shape (n, d), got {x.shape}")
    return x


def energy_distance_sq(p: np.ndarray, q: np.ndarray) -> float:
    """
    Squared energy distance 2 E|X - Y| - E|X - X'| - E|Y - Y'|.

    Within-sample means run over all n^2 pairs; the diagonal terms are zero,
    so identical samples give exactly 0.

    Parameters
    ----------
    p, q : np.ndarray
        Samples (n, d) and (m, d); 1-D input is read as d = 1.

    Returns
    -------
    e : float
    """
    p, q = _as_sample(p), _as_sample(q)
    if p.shape[1] != q.shape[1]:
        raise ConfigError(f"samples live in R^{p.shape[1]} and R^{q.shape[1]}")
    value = 2.0 * _mean_distance(p, q) - _mean_distance(p, p) - _mean_distance(q, q)
    return max(value, 0.0)


def _crps_1d(ensemble: np.ndarray, obs: float) -> float:
    y = np.sort(ensemble)
    m = y.shape[0]
    spread = 2.0 * np.sum(y * (2.0 * np.arange(m) - (m - 1))) / m ** 2
    return float(np.mean(np.abs(y - obs)) - 0.5 * spread)


def crps(ensemble: np.ndarray, obs: Union[float, np.ndarray]) -> float:
    """
    Continuous ranked probability score of an ensemble forecast, energy form.

    E|Y - x| - 1/2 E|Y - Y'| over the empirical ensemble. For multivariate
    input the score is computed per coordinate and averaged.

    Parameters
    ----------
    ensemble : np.ndarray
        Members (m,) or (m, d).
    obs : float | np.ndarray
        Observation, scalar or (d,).
    """
    members = _as_sample(ensemble)
    obs = np.atleast_1d(np.asarray(obs, dtype=float))
    if obs.shape[0] != members.shape[1]:
        raise ConfigError(f"observation of dimension {obs.shape[0]} for a {members.shape[1]}-dimensional ensemble")
    return float(np.mean([_crps_1d(members[:, j], obs[j]) for j in range(members.shape[1])]))


def terminal_crps(generated: np.ndarray, held_out: np.ndarray) -> float:
    """Mean CRPS of the generated ensemble against every held-out observation."""
    held_out = _as_sample(held_out)
    return float(np.mean([crps(generated, obs) for obs in held_out]))


def ecdf_distances(a: np.ndarray, b: np.ndarray) -> EcdfDistances:
    """
    Gaps between the empirical CDFs of two 1-D samples at every pooled point.

    Returns
    -------
    distances : EcdfDistances
    """
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ConfigError("ECDF distances need two non-empty samples")
    pooled = np.concatenate([a, b])
    gap = np.abs(
        np.searchsorted(a, pooled, side="right") / a.size - np.searchsorted(b, pooled, side="right") / b.size
    )
    return EcdfDistances(
        mean=float(np.mean(gap)),
        p75=float(np.percentile(gap, 75)),
        p90=float(np.percentile(gap, 90)),
        ks=float(np.max(gap)),
    )


def _one_dimensional(generated: np.ndarray, held_out: np.ndarray, name: str) -> bool:
    if generated.shape[-1] != 1 or held_out.shape[-1] != 1:
        message = f"{name} applies to one-dimensional marginals only"
        logger.warning(message)
        warnings.warn(message, RuntimeWarning)
        return False
    return True


def marginal_ecdf_distances(generated: np.ndarray, held_out: np.ndarray) -> Optional[EcdfDistances]:
    """
    ECDF distances averaged over the time marginals of two trajectory ensembles.

    Parameters
    ----------
    generated, held_out : np.ndarray
        Trajectories (N, K, 1) and (M, K, 1) on the same time grid.

    Returns
    -------
    distances : EcdfDistances | None
        None when the state is not one-dimensional.
    """
    if not _one_dimensional(generated, held_out, "marginal ECDF distances"):
        return None
    per_time = [ecdf_distances(generated[:, k, 0], held_out[:, k, 0]) for k in range(generated.shape[1])]
    return EcdfDistances(**{f: float(np.mean([asdict(e)[f] for e in per_time])) for f in asdict(per_time[0])})


def marginal_ks(generated: np.ndarray, held_out: np.ndarray) -> float:
    """Two-sample KS statistic averaged over the time marginals; NaN unless d = 1."""
    if not _one_dimensional(generated, held_out, "marginal KS"):
        return float("nan")
    values = [stats.ks_2samp(generated[:, k, 0], held_out[:, k, 0]).statistic for k in range(generated.shape[1])]
    return float(np.mean(values))


def append_results(path: str, experiment: str, metrics: Dict[str, float], seed: int) -> pd.DataFrame:
    """
    Append metric rows ``experiment,metric,value,seed`` to a results CSV.

    Returns
    -------
    rows : pd.DataFrame
        The appended rows.
    """
    rows = pd.DataFrame(
        [(experiment, name, float(value), int(seed)) for name, value in metrics.items()],
        columns=RESULT_COLUMNS,
    )
    exists = os.path.exists(path) and os.path.getsize(path) > 0
    rows.to_csv(path, mode="a" if exists else "w", header=not exists, index=False, float_format=CSV_FLOAT_FORMAT)
    return rows
