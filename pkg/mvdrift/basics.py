"""
Common basic functions shared by the simulation, model and estimation code.
"""
from typing import Optional, Tuple, Union

import numpy as np

from .errors import ConfigError, NumericError


def make_rng(seed: Union[int, np.random.Generator, None]) -> np.random.Generator:
    """
    Obtain a numpy random generator.

    Parameters
    ----------
    seed : int | np.random.Generator | None
        Seed of a new generator, or an existing generator that is returned as is.

    Returns
    -------
    rng : np.random.Generator
    """
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def as_rows(x: np.ndarray, dim: Optional[int] = None) -> Tuple[np.ndarray, bool]:
    """
    Promote a single point to a batch of one row.

    Parameters
    ----------
    x : np.ndarray
        Point of shape (d,) or batch of shape (B, d).
    dim : int | None
        Expected dimension d, checked when given.

    Returns
    -------
    rows : np.ndarray
        Array of shape (B, d).
    single : bool
        True if `x` was a single point.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    rows = x[None, :] if single else x
    if rows.ndim != 2:
        raise ConfigError(f"expected a point or a batch of points, got shape {x.shape}")
    if dim is not None and rows.shape[1] != dim:
        raise ConfigError(f"expected dimension {dim}, got {rows.shape[1]}")
    return rows, single


def time_column(t: Union[float, np.ndarray], n_rows: int) -> np.ndarray:
    """Times as a (n_rows, 1) column, from a scalar or one time per row."""
    t = np.asarray(t, dtype=float)
    if t.ndim == 0:
        return np.full((n_rows, 1), float(t))
    t = t.reshape(-1)
    if t.shape[0] != n_rows:
        raise ConfigError(f"expected {n_rows} times, got {t.shape[0]}")
    return t[:, None]


def check_finite(
    values: np.ndarray,
    what: str,
    step: Optional[int] = None,
    time: Optional[float] = None,
) -> None:
    """
    Raise a `NumericError` if `values` holds NaN or infinite entries.

    Parameters
    ----------
    values : np.ndarray
        Values to check.
    what : str
        Description used in the error message.
    step : int | None
        Step index reported with the error.
    time : float | None
        Model time reported with the error.
    """
    if np.all(np.isfinite(values)):
        return
    where = []
    if step is not None:
        where.append(f"step {step}")
    if time is not None:
        where.append(f"t={time:g}")
    suffix = f" at {', '.join(where)}" if where else ""
    raise NumericError(f"non-finite {what}{suffix}", step=step, time=time)


def standard_normal_logpdf(z: np.ndarray) -> np.ndarray:
    """Row-wise log-density of N(0, I) for rows of `z`."""
    z = np.atleast_2d(z)
    return -0.5 * np.sum(z * z, axis=1) - 0.5 * z.shape[1] * np.log(2 * np.pi)
