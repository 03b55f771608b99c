"""
Trajectory CSV files.

Header ``particle_id,t,x0,...,x{d-1}``, then one row per observed
(particle, time) pair sorted by particle and time. Missing rows encode the
irregular observation mask.
"""
import io
import logging
from typing import Optional

import numpy as np
import pandas as pd

from .constants import CSV_FLOAT_FORMAT
from .errors import ParseError
from .types import TrajectoryDataset

logger = logging.getLogger(__name__)


def dataset_frame(ds: TrajectoryDataset, observed_only: bool = True) -> pd.DataFrame:
    """Long-format table of the dataset, one row per (particle, time)."""
    n, k, d = ds.states.shape
    keep = ds.observed() if observed_only else np.ones((n, k), dtype=bool)
    pid, tid = np.nonzero(keep)
    frame = pd.DataFrame({"particle_id": pid, "t": ds.times[tid]})
    for j in range(d):
        frame[f"x{j}"] = ds.states[pid, tid, j]
    return frame


def write_dataset(ds: TrajectoryDataset, path: str, observed_only: bool = True) -> None:
    """
    Write a dataset as trajectory CSV.

    Parameters
    ----------
    ds : TrajectoryDataset
    path : str
    observed_only : bool
        Skip unobserved entries; False writes the full latent grid.
    """
    dataset_frame(ds, observed_only).to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
    logger.debug("Wrote %d particles x %d times to %s", ds.n_particles, ds.n_times, path)


def read_dataset(path: str, metadata: Optional[dict] = None) -> TrajectoryDataset:
    """
    Read a trajectory CSV.

    Unobserved (particle, time) entries are NaN in `states` and False in the
    mask.

    Raises
    ------
    ParseError
        Empty file, bad header or non-numeric field; carries the line number.
    """
    with open(path, "r") as f:
        text = f.read()
    if not text.strip():
        raise ParseError(f"{path} is empty", line=1)
    try:
        frame = pd.read_csv(io.StringIO(text), dtype=str, keep_default_na=False)
    except pd.errors.ParserError as err:
        raise ParseError(f"{path}: {err}") from err
    columns = list(frame.columns)
    dim = len(columns) - 2
    if dim < 1 or columns[:2] != ["particle_id", "t"] or columns[2:] != [f"x{j}" for j in range(dim)]:
        raise ParseError(f"expected header particle_id,t,x0,...; got {','.join(columns)}", line=1)
    if frame.empty:
        raise ParseError(f"{path} has a header but no rows", line=2)

    numeric = frame.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna().to_numpy() | frame.eq("").to_numpy()
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise ParseError(f"non-numeric value {frame.iat[row, col]!r} in column {columns[col]}", line=row + 2)
    ids = numeric["particle_id"].to_numpy()
    if np.any(ids != np.round(ids)) or np.any(ids < 0):
        row = int(np.flatnonzero((ids != np.round(ids)) | (ids < 0))[0])
        raise ParseError("particle_id must be a non-negative integer", line=row + 2)

    particles, pidx = np.unique(ids.astype(int), return_inverse=True)
    times, tidx = np.unique(numeric["t"].to_numpy(), return_inverse=True)
    states = np.full((particles.shape[0], times.shape[0], dim), np.nan)
    mask = np.zeros(states.shape[:2], dtype=bool)
    flat = pidx * times.shape[0] + tidx
    if np.unique(flat).shape[0] != flat.shape[0]:
        raise ParseError(f"{path} repeats a (particle_id, t) pair")
    states[pidx, tidx] = numeric[[f"x{j}" for j in range(dim)]].to_numpy()
    mask[pidx, tidx] = True
    if not (mask[:, 0].all() and mask[:, -1].all()):
        raise ParseError(f"{path}: every particle must be observed at the first and last time stamp")
    meta = {"source": str(path), "particle_ids": particles.tolist()}
    meta.update(metadata or {})
    return TrajectoryDataset(times, states, mask, meta)
