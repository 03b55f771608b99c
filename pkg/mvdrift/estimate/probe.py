"""
Interaction magnitude of a trained implicit-measure drift.
"""
import numpy as np

from ..diffgraph import Graph
from ..drift import DriftModel, mean_field_layer
from ..types import TrajectoryDataset

_CHUNK = 256


def im_norm_probe(drift: DriftModel, ds: TrajectoryDataset) -> float:
    """
    Mean of phi(X_t^(i), W0^(k), t)_j over observed points, rows of W0 and coordinates.

    For a fully observed dataset this is the sum over times, particles, rows
    and coordinates divided by K * N * n * d. Restarts that reach the same
    training loss can be compared by it: smaller means less influence of the
    other particles.
    """
    observed = ds.observed()
    pid, tid = np.nonzero(observed)
    points, times = ds.states[pid, tid], ds.times[tid]
    total = 0.0
    for start in range(0, points.shape[0], _CHUNK):
        graph = Graph(drift.store)
        layer = mean_field_layer(drift, points[start:start + _CHUNK], times[start:start + _CHUNK], graph)
        total += float(np.sum(graph.value(layer)))
    return total / (points.shape[0] * drift.dim)
