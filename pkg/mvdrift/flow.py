"""
Time-conditioned affine coupling flow: an invertible map from a standard normal
base to the marginal law p_t, with exact log-density and reparameterized sampling.
"""
import logging
from typing import List, Tuple, Union

import numpy as np

from .basics import time_column
from .constants import (
    FLOW_HIDDEN_LAYERS,
    FLOW_HIDDEN_WIDTH,
    FLOW_LAYERS,
    FLOW_SCALE_CLAMP,
    FLOW_SCALE_OVERFLOW,
)
from .diffgraph import Activation, Graph, Mlp, ParamStore
from .errors import ConfigError, NumericError

logger = logging.getLogger(__name__)

Points = Union[int, np.ndarray]


class CouplingLayer:
    """
    Affine coupling layer x = z * exp(s) + u on the unmasked coordinates, where
    s and u are functions of the masked coordinates and time.

    Attributes
    ----------
    mask : np.ndarray
        1.0 on coordinates passed through unchanged, 0.0 on transformed ones.
    scale_net, shift_net : Mlp
    """

    def __init__(
        self,
        mask: np.ndarray,
        store: ParamStore,
        rng: np.random.Generator,
        hidden_layers: int,
        hidden_width: int,
    ):
        self.mask = np.asarray(mask, dtype=float)
        dim = self.mask.shape[0]
        in_dim = 1 if dim == 1 else dim + 1
        widths = [in_dim] + [hidden_width] * hidden_layers + [dim]
        self.scale_net = Mlp(widths, store, rng, Activation.TANH, zero_last=True)
        self.shift_net = Mlp(widths, store, rng, Activation.RELU, zero_last=True)

    def conditioner(self, graph: Graph, x: int, t_col: np.ndarray) -> Tuple[int, int]:
        """
        Clamped log-scale and shift, both zero on the masked coordinates.

        Returns
        -------
        s, u : int
            Handles of shape (B, d).
        """
        n_rows = graph.shape(x)[0]
        keep = graph.constant(np.tile(self.mask, (n_rows, 1)))
        free = graph.constant(np.tile(1.0 - self.mask, (n_rows, 1)))
        if self.mask.shape[0] == 1:
            cond = graph.constant(t_col)
        else:
            cond = graph.concat([graph.mul(x, keep), graph.constant(t_col)])
        raw = self.scale_net.forward(graph, cond)
        peak = float(np.max(np.abs(graph.value(raw)))) if graph.value(raw).size else 0.0
        if peak > FLOW_SCALE_OVERFLOW:
            raise NumericError(
                f"coupling scale overflow (|s| = {peak:.3g} > {FLOW_SCALE_OVERFLOW:g})",
                time=float(t_col[0, 0]),
            )
        s = graph.mul(graph.clip(raw, -FLOW_SCALE_CLAMP, FLOW_SCALE_CLAMP), free)
        u = graph.mul(self.shift_net.forward(graph, cond), free)
        return s, u


class CouplingFlow:
    """
    Stack of affine coupling layers with alternating half-masks, conditioned on time.

    Attributes
    ----------
    dim : int
    layers : list of CouplingLayer
    """

    def __init__(
        self,
        dim: int,
        store: ParamStore,
        rng: np.random.Generator,
        n_layers: int = FLOW_LAYERS,
        hidden_layers: int = FLOW_HIDDEN_LAYERS,
        hidden_width: int = FLOW_HIDDEN_WIDTH,
    ):
        if dim < 1 or n_layers < 1:
            raise ConfigError("flow needs dim >= 1 and at least one layer")
        self.dim = dim
        self.layers: List[CouplingLayer] = []
        for k in range(n_layers):
            if dim == 1:
                mask = np.zeros(1)
            else:
                mask = np.array([(j + k) % 2 for j in range(dim)], dtype=float)
            self.layers.append(CouplingLayer(mask, store, rng, hidden_layers, hidden_width))
        transformed = sum(1.0 - layer.mask for layer in self.layers)
        if np.any(transformed == 0):
            raise ConfigError(
                f"coordinates {np.flatnonzero(transformed == 0).tolist()} are never transformed; use >= 2 layers"
            )

    def _rows(self, graph: Graph, x: Points) -> Tuple[int, bool]:
        if isinstance(x, (int, np.integer)):
            h = int(x)
            single = len(graph.shape(h)) == 1
            if single:
                h = graph.reshape(h, (1, self.dim))
        else:
            arr = np.asarray(x, dtype=float)
            single = arr.ndim == 1
            h = graph.constant(arr.reshape(-1, self.dim))
        if graph.shape(h)[1] != self.dim:
            raise ConfigError(f"expected points of dimension {self.dim}, got {graph.shape(h)}")
        return h, single

    def push_forward(self, graph: Graph, z: Points, t) -> Tuple[int, int]:
        """
        Map base points to data space at time t.

        Returns
        -------
        x : int
            Handle of shape (B, d).
        logdet : int
            Handle of shape (B,): log |det dx/dz|.
        """
        h, _ = self._rows(graph, z)
        t_col = time_column(t, graph.shape(h)[0])
        logdet = None
        for layer in self.layers:
            s, u = layer.conditioner(graph, h, t_col)
            h = graph.add(graph.mul(h, graph.exp(s)), u)
            term = graph.sum(s, axis=-1)
            logdet = term if logdet is None else graph.add(logdet, term)
        return h, logdet

    def pull_back(self, graph: Graph, x: Points, t) -> Tuple[int, int]:
        """
        Map data points to the base space at time t.

        Returns
        -------
        z : int
            Handle of shape (B, d).
        logdet : int
            Handle of shape (B,): log |det dx/dz| of the forward map at z.
        """
        h, _ = self._rows(graph, x)
        t_col = time_column(t, graph.shape(h)[0])
        logdet = None
        for layer in reversed(self.layers):
            s, u = layer.conditioner(graph, h, t_col)
            h = graph.mul(graph.sub(h, u), graph.exp(graph.neg(s)))
            term = graph.sum(s, axis=-1)
            logdet = term if logdet is None else graph.add(logdet, term)
        return h, logdet

    def log_prob(self, x: Points, t, graph: Graph) -> int:
        """Handle of shape (B,) with log p_t(x) for every row of x."""
        z, logdet = self.pull_back(graph, x, t)
        n_rows = graph.shape(z)[0]
        base = graph.add(
            graph.scale(graph.sq_norm_rows(z), -0.5),
            graph.constant(np.full(n_rows, -0.5 * self.dim * np.log(2.0 * np.pi))),
        )
        out = graph.sub(base, logdet)
        if not np.all(np.isfinite(graph.value(out))):
            t_report = float(np.asarray(t, dtype=float).reshape(-1)[0])
            raise NumericError("non-finite flow log-density", time=t_report)
        return out

    def draw(self, graph: Graph, t, rng: np.random.Generator, n: int = 1) -> int:
        """Handle of shape (n, d) with reparameterized samples at time t."""
        z = rng.standard_normal((n, self.dim))
        x, _ = self.push_forward(graph, z, t)
        return x


def log_prob(flow: CouplingFlow, x: Points, t, graph: Graph) -> int:
    """
    Exact log-density of the flow at time t.

    Parameters
    ----------
    flow : CouplingFlow
    x : int | np.ndarray
        A point (d,) or a batch (B, d), as array or node handle.
    t : float | np.ndarray
        Time, or one time per row.
    graph : Graph

    Returns
    -------
    h : int
        Scalar node for a single point, (B,) node for a batch.
    """
    single = np.ndim(x) == 1 if not isinstance(x, (int, np.integer)) else len(graph.shape(int(x))) == 1
    out = flow.log_prob(x, t, graph)
    return graph.reshape(out, ()) if single else out


def sample(flow: CouplingFlow, t: float, rng: np.random.Generator, graph: Graph, n: int = 1) -> int:
    """Reparameterized draw of n points at time t; node of shape (n, d)."""
    return flow.draw(graph, t, rng, n)


def forward(flow: CouplingFlow, z: np.ndarray, t, graph: Graph) -> int:
    """Push base points through the flow at time t; node of shape (B, d)."""
    x, _ = flow.push_forward(graph, z, t)
    return x


def inverse(flow: CouplingFlow, x: np.ndarray, t) -> Tuple[np.ndarray, np.ndarray]:
    """
    Numeric inverse map.

    Parameters
    ----------
    flow : CouplingFlow
    x : np.ndarray
        A point (d,) or a batch (B, d).
    t : float | np.ndarray

    Returns
    -------
    z : np.ndarray
        Base points, same shape as x.
    logdet : float | np.ndarray
        log |det dx/dz| of the forward map at z.
    """
    store = flow.layers[0].scale_net.store
    graph = Graph(store)
    x = np.asarray(x, dtype=float)
    z, logdet = flow.pull_back(graph, x, t)
    z_val, ld_val = graph.value(z), graph.value(logdet)
    if x.ndim == 1:
        return z_val[0], float(ld_val[0])
    return z_val, ld_val
