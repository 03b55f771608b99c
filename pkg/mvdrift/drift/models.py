"""
Neural drift parameterizations b(x, p_t, t; theta).

Every model has a non-interacting network f(x, t). The mean-field variants add
an average of an interaction network phi over a population:

- ito_mlp: b = f(x, t)
- em: b = f(x, t) + mean_i phi(x, y_i) over an observed population
- im: b = f(x, t) + mean_k phi(x, W0_k, t) over learned rows W0
- ml: b = f(x, t) + mean_i phi(x, y_i) over samples of a coupling flow

All evaluations are batched: x is a point (d,) or a batch (B, d) and t a
scalar or one time per row.
"""
import logging
from dataclasses import asdict
from enum import Enum
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from ..basics import make_rng, time_column
from ..constants import (
    F_HIDDEN_LAYERS,
    ITO_HIDDEN_LAYERS,
    MEAN_FIELD_WIDTH,
    ML_SAMPLE_COUNT,
)
from ..diffgraph import Graph, Mlp, ParamSlice, ParamStore, load_checkpoint, save_checkpoint
from ..errors import ConfigError, NumericError, UsageError
from ..flow import CouplingFlow
from ..types import ArchitectureSpec, Population

logger = logging.getLogger(__name__)

PopulationLike = Union[None, int, np.ndarray, Population]


class Architecture(str, Enum):
    ITO_MLP = "ito_mlp"
    EM = "em"
    IM = "im"
    ML = "ml"

    @classmethod
    def parse(cls, name: Union[str, "Architecture"]) -> "Architecture":
        try:
            return cls(name)
        except ValueError:
            choices = ", ".join(a.value for a in cls)
            raise ConfigError(f"unknown architecture {name!r}, expected one of {choices}") from None


class DriftModel:
    """
    Base of the trainable drifts.

    Attributes
    ----------
    variant : Architecture
    spec : ArchitectureSpec
    dim : int
    store : ParamStore
        Holds every parameter of the model (and of its flow).
    f_net : Mlp
        Non-interacting component, input (x, t), output R^d.
    phi_net : Mlp | None
    w0 : ParamSlice | None
    flow : CouplingFlow | None
    sample_count : int
        Width of the mean-field average (rows of W0, flow samples).
    """

    variant: Architecture = Architecture.ITO_MLP
    noise_mask = None
    phi_net: Optional[Mlp] = None
    w0: Optional[ParamSlice] = None
    flow: Optional[CouplingFlow] = None
    sample_count: int = 0
    default_f_layers = F_HIDDEN_LAYERS

    def __init__(self, spec: ArchitectureSpec, store: ParamStore, rng: np.random.Generator):
        self.spec = spec
        self.dim = int(spec.dim)
        if self.dim < 1:
            raise ConfigError("drift dimension must be positive")
        self.store = store
        self._rng = rng
        n_hidden = spec.f_layers if spec.f_layers is not None else self.default_f_layers
        widths = [self.dim + 1] + [spec.hidden_width] * n_hidden + [self.dim]
        self.f_net = Mlp(widths, store, rng, spec.activation)

    @property
    def mean_field(self) -> bool:
        return self.variant is not Architecture.ITO_MLP

    @property
    def n_params(self) -> int:
        return self.store.size

    def _phi(self, in_dim: int, rng: np.random.Generator) -> Mlp:
        spec = self.spec
        widths = [in_dim] + [spec.hidden_width] * spec.phi_layers + [self.dim]
        return Mlp(widths, self.store, rng, spec.activation)

    def _rows(self, graph: Graph, x) -> Tuple[int, bool]:
        if isinstance(x, (int, np.integer)):
            h = int(x)
            single = len(graph.shape(h)) == 1
            if single:
                h = graph.reshape(h, (1, graph.shape(h)[0]))
        else:
            arr = np.asarray(x, dtype=float)
            single = arr.ndim == 1
            h = graph.constant(arr[None, :] if single else arr)
        shape = graph.shape(h)
        if len(shape) != 2 or shape[1] != self.dim:
            raise ConfigError(f"expected points in R^{self.dim}, got shape {shape}")
        return h, single

    def non_interacting(self, graph: Graph, x_h: int, t_col: np.ndarray) -> int:
        return self.f_net.forward(graph, graph.concat([x_h, graph.constant(t_col)]))

    def interaction(
        self, graph: Graph, x_h: int, t_col: np.ndarray, population: PopulationLike, rng
    ) -> Optional[int]:
        """Mean-field term as a (B, d) node, None for the non-interacting model."""
        return None

    def drift(
        self,
        graph: Graph,
        x,
        t,
        population: PopulationLike = None,
        rng: Optional[np.random.Generator] = None,
    ) -> int:
        """
        Record b(x, p_t, t) on `graph`.

        Parameters
        ----------
        graph : Graph
        x : int | np.ndarray
            Point (d,) or batch (B, d), array or node handle.
        t : float | np.ndarray
            Time, or one time per row.
        population : int | np.ndarray | Population | None
            Empirical measure of the em variant: shared (n, d) or one per
            row (B, n, d). Ignored by the other variants.
        rng : np.random.Generator | None
            Generator of the flow samples of the ml variant.

        Returns
        -------
        b : int
            Node of the same shape as x.
        """
        x_h, single = self._rows(graph, x)
        t_col = time_column(t, graph.shape(x_h)[0])
        out = self.non_interacting(graph, x_h, t_col)
        term = self.interaction(graph, x_h, t_col, population, rng)
        if term is not None:
            out = graph.add(out, term)
        return graph.reshape(out, (self.dim,)) if single else out

    def evaluate(
        self,
        x: np.ndarray,
        population: PopulationLike = None,
        t=0.0,
        rng: Optional[np.random.Generator] = None,
    ) -> np.ndarray:
        """Numeric drift values, same shape as x."""
        graph = Graph(self.store)
        return graph.value(self.drift(graph, x, t, population, rng)).copy()

    def divergence(self, graph: Graph, x, t, population: PopulationLike = None) -> int:
        """
        Exact divergence of the drift in x, as a (B,) node.

        The population is held fixed. Each Jacobian diagonal entry comes from
        a forward tangent pass, so the result is differentiable in the
        parameters.
        """
        x_h, _ = self._rows(graph, x)
        n_rows = graph.shape(x_h)[0]
        t_col = time_column(t, n_rows)
        f_in = graph.concat([x_h, graph.constant(t_col)])
        div = _trace_of_jvps(graph, self.f_net, f_in, self.dim)
        term = self.interaction_divergence(graph, x_h, t_col, population)
        if term is not None:
            div = graph.add(div, term)
        return graph.reshape(div, (n_rows,))

    def interaction_divergence(
        self, graph: Graph, x_h: int, t_col: np.ndarray, population: PopulationLike
    ) -> Optional[int]:
        return None

    def mean_over_pairs(self, graph: Graph, x_h: int, y_rows: int, n: int, t_col: Optional[np.ndarray]) -> int:
        """
        Average of phi over n partners per row.

        `y_rows` holds the partners of row b at rows b*n .. b*n + n - 1, the
        layout of `repeat_rows(x, n)`.
        """
        pair = self._pair_input(graph, x_h, y_rows, n, t_col)
        values = self.phi_net.forward(graph, pair)
        n_rows = graph.shape(x_h)[0]
        return graph.mean(graph.reshape(values, (n_rows, n, self.dim)), axis=1)

    def _pair_input(self, graph: Graph, x_h: int, y_rows: int, n: int, t_col: Optional[np.ndarray]) -> int:
        parts = [graph.repeat_rows(x_h, n), y_rows]
        if t_col is not None:
            parts.append(graph.constant(np.repeat(t_col, n, axis=0)))
        return graph.concat(parts)

    def divergence_over_pairs(
        self, graph: Graph, x_h: int, y_rows: int, n: int, t_col: Optional[np.ndarray]
    ) -> int:
        pair = self._pair_input(graph, x_h, y_rows, n, t_col)
        div = _trace_of_jvps(graph, self.phi_net, pair, self.dim)
        n_rows = graph.shape(x_h)[0]
        return graph.reshape(graph.mean(graph.reshape(div, (n_rows, n)), axis=1), (n_rows, 1))

    def describe(self) -> Dict[str, Any]:
        return {"variant": self.variant.value, "dim": self.dim, "n_params": self.n_params}


def _trace_of_jvps(graph: Graph, net: Mlp, inputs: int, dim: int) -> int:
    """Sum of d out_k / d in_k for k < dim, as a (rows, 1) node."""
    n_rows, width = graph.shape(inputs)
    tangents = []
    for k in range(dim):
        e = np.zeros((n_rows, width))
        e[:, k] = 1.0
        tangents.append(graph.constant(e))
    _, jvps = net.forward_tangents(graph, inputs, tangents)
    total = None
    for k, jvp in enumerate(jvps):
        col = graph.columns(jvp, k, k + 1)
        total = col if total is None else graph.add(total, col)
    return total


class ItoMlpDrift(DriftModel):
    """Non-interacting drift f(x, t)."""

    variant = Architecture.ITO_MLP
    default_f_layers = ITO_HIDDEN_LAYERS


class EmpiricalMeasureDrift(DriftModel):
    """f(x, t) plus the average of phi(x, y) over an observed population."""

    variant = Architecture.EM

    def __init__(self, spec: ArchitectureSpec, store: ParamStore, rng: np.random.Generator):
        super().__init__(spec, store, rng)
        self.phi_net = self._phi(2 * self.dim, rng)

    def partners(self, graph: Graph, population: PopulationLike, n_rows: int) -> Tuple[int, int]:
        """Partner rows aligned with `repeat_rows(x, n)` and the count n."""
        if population is None:
            raise UsageError("empirical-measure drift needs a population")
        if isinstance(population, Population):
            population = population.particles
        if isinstance(population, (int, np.integer)):
            shape = graph.shape(int(population))
            if len(shape) != 2 or shape[1] != self.dim:
                raise ConfigError(f"population node of shape {shape} is not (n, {self.dim})")
            if shape[0] == 0:
                raise UsageError("population is empty")
            return graph.tile_rows(int(population), n_rows), shape[0]
        pop = np.asarray(population, dtype=float)
        if pop.ndim == 2:
            pop = pop[None, :, :]
        if pop.ndim != 3 or pop.shape[-1] != self.dim or pop.shape[0] not in (1, n_rows):
            raise ConfigError(f"population of shape {np.shape(population)} does not fit {n_rows} points")
        n = pop.shape[1]
        if n == 0:
            raise UsageError("population is empty")
        block = np.broadcast_to(pop, (n_rows, n, self.dim)).reshape(n_rows * n, self.dim)
        return graph.constant(block), n

    def interaction(self, graph, x_h, t_col, population, rng):
        y_rows, n = self.partners(graph, population, graph.shape(x_h)[0])
        return self.mean_over_pairs(graph, x_h, y_rows, n, None)

    def interaction_divergence(self, graph, x_h, t_col, population):
        y_rows, n = self.partners(graph, population, graph.shape(x_h)[0])
        return self.divergence_over_pairs(graph, x_h, y_rows, n, None)


class ImplicitMeasureDrift(DriftModel):
    """f(x, t) plus the mean-field layer: the average of phi(x, W0_k, t) over learned rows W0."""

    variant = Architecture.IM

    def __init__(self, spec: ArchitectureSpec, store: ParamStore, rng: np.random.Generator):
        super().__init__(spec, store, rng)
        self.sample_count = int(spec.width if spec.width is not None else MEAN_FIELD_WIDTH)
        if self.sample_count < 1:
            raise ConfigError("mean-field width must be at least 1")
        self.phi_net = self._phi(2 * self.dim + 1, rng)
        self.w0 = store.allocate(rng.standard_normal((self.sample_count, self.dim)))

    def interaction(self, graph, x_h, t_col, population, rng):
        y_rows = graph.tile_rows(graph.param(self.w0), graph.shape(x_h)[0])
        return self.mean_over_pairs(graph, x_h, y_rows, self.sample_count, t_col)

    def interaction_divergence(self, graph, x_h, t_col, population):
        y_rows = graph.tile_rows(graph.param(self.w0), graph.shape(x_h)[0])
        return self.divergence_over_pairs(graph, x_h, y_rows, self.sample_count, t_col)


class MarginalLawDrift(DriftModel):
    """f(x, t) plus the average of phi(x, y) over reparameterized samples of a coupling flow."""

    variant = Architecture.ML

    def __init__(self, spec: ArchitectureSpec, store: ParamStore, rng: np.random.Generator):
        super().__init__(spec, store, rng)
        self.sample_count = int(spec.width if spec.width is not None else ML_SAMPLE_COUNT)
        if self.sample_count < 1:
            raise ConfigError("expectation width must be at least 1")
        self.phi_net = self._phi(2 * self.dim, rng)
        self.flow = CouplingFlow(
            self.dim,
            store,
            rng,
            n_layers=spec.flow_layers,
            hidden_layers=spec.flow_hidden_layers,
            hidden_width=spec.flow_hidden_width,
        )

    def flow_partners(self, graph: Graph, t_col: np.ndarray, rng: np.random.Generator) -> int:
        """n flow samples per row, drawn once per distinct time and aligned with `repeat_rows`."""
        n = self.sample_count
        times, inverse = np.unique(t_col[:, 0], return_inverse=True)
        z = rng.standard_normal((times.shape[0] * n, self.dim))
        samples, _ = self.flow.push_forward(graph, z, np.repeat(times, n))
        values = graph.value(samples)
        if not np.all(np.isfinite(values)):
            bad = np.flatnonzero(~np.all(np.isfinite(values), axis=1))[0] // n
            raise NumericError(f"non-finite flow sample at t={times[bad]:g}", time=float(times[bad]))
        index = (inverse[:, None] * n + np.arange(n)[None, :]).ravel()
        return graph.take_rows(samples, index)

    def interaction(self, graph, x_h, t_col, population, rng):
        if rng is None:
            rng = self._rng
        y_rows = self.flow_partners(graph, t_col, rng)
        return self.mean_over_pairs(graph, x_h, y_rows, self.sample_count, None)

    def divergence(self, graph, x, t, population=None):
        raise UsageError("the divergence is only defined for the ito_mlp, em and im drifts")


_CLASSES = {
    Architecture.ITO_MLP: ItoMlpDrift,
    Architecture.EM: EmpiricalMeasureDrift,
    Architecture.IM: ImplicitMeasureDrift,
    Architecture.ML: MarginalLawDrift,
}


def build_drift(
    spec: ArchitectureSpec,
    store: Optional[ParamStore] = None,
    seed: Union[int, np.random.Generator, None] = 0,
) -> DriftModel:
    """
    Construct a drift model.

    Parameters
    ----------
    spec : ArchitectureSpec
    store : ParamStore | None
        Store to allocate the parameters in; a new one when None.
    seed : int | np.random.Generator | None
        Seed of the parameter initialization.

    Returns
    -------
    model : DriftModel
    """
    variant = Architecture.parse(spec.variant)
    store = ParamStore() if store is None else store
    model = _CLASSES[variant](spec, store, make_rng(seed))
    logger.debug("Built %s drift with %d parameters", variant.value, store.size)
    return model


def _require(model: DriftModel, variant: Architecture, operation: str) -> None:
    if model.variant is not variant:
        raise UsageError(f"{operation} needs a {variant.value} drift, got {model.variant.value}")


def eval_ito(model: DriftModel, x, t, graph: Graph) -> int:
    """f(x, t) of a non-interacting drift."""
    _require(model, Architecture.ITO_MLP, "eval_ito")
    return model.drift(graph, x, t)


def eval_em(model: DriftModel, x, pop: PopulationLike, t, graph: Graph) -> int:
    """f(x, t) + mean of phi(x, y) over the population, the reference particle included."""
    _require(model, Architecture.EM, "eval_em")
    return model.drift(graph, x, t, pop)


def mean_field_layer(model: DriftModel, x, t, graph: Graph) -> int:
    """Mean of phi(x, W0_k, t) over the rows of W0."""
    _require(model, Architecture.IM, "mean_field_layer")
    x_h, single = model._rows(graph, x)
    t_col = time_column(t, graph.shape(x_h)[0])
    out = model.interaction(graph, x_h, t_col, None, None)
    return graph.reshape(out, (model.dim,)) if single else out


def eval_im(model: DriftModel, x, t, graph: Graph) -> int:
    """f(x, t) plus the mean-field layer."""
    _require(model, Architecture.IM, "eval_im")
    return model.drift(graph, x, t)


def eval_ml(model: DriftModel, x, t, graph: Graph, rng: np.random.Generator) -> int:
    """f(x, t) plus the mean of phi(x, y) over flow samples at time t."""
    _require(model, Architecture.ML, "eval_ml")
    return model.drift(graph, x, t, rng=rng)


def save_drift(path: str, model: DriftModel, seed: int = 0, extra: Optional[Dict[str, Any]] = None) -> None:
    """Write the model parameters (flow included) with the architecture in the header."""
    header = {"architecture": asdict(model.spec), "seed": seed}
    if extra:
        header.update(extra)
    save_checkpoint(path, model.store, header)


def load_drift(path: str, expected: Optional[ArchitectureSpec] = None) -> Tuple[DriftModel, Dict[str, Any]]:
    """
    Rebuild a model from a checkpoint.

    Parameters
    ----------
    path : str
    expected : ArchitectureSpec | None
        When given, the checkpoint's architecture must equal it.

    Returns
    -------
    model : DriftModel
    header : dict
    """
    header, values = load_checkpoint(path)
    try:
        spec = ArchitectureSpec(**header["architecture"])
    except (KeyError, TypeError) as err:
        raise ConfigError(f"checkpoint {path} has no valid architecture header") from err
    if expected is not None and asdict(expected) != asdict(spec):
        mismatched = sorted(k for k, v in asdict(spec).items() if asdict(expected)[k] != v)
        raise ConfigError(f"checkpoint architecture differs from the configuration in {mismatched}")
    model = build_drift(spec, seed=header.get("seed", 0))
    model.store.load(values)
    return model, header

