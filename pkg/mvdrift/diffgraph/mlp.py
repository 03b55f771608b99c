"""
Multilayer perceptron on the tape.
"""
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..constants import LEAKY_RELU_SLOPE
from ..errors import ConfigError
from .graph import Graph
from .params import ParamSlice, ParamStore


class Activation(str, Enum):
    LEAKY_RELU = "leaky_relu"
    TANH = "tanh"
    RELU = "relu"

    @classmethod
    def parse(cls, name: Union[str, "Activation"]) -> "Activation":
        try:
            return cls(name)
        except ValueError:
            choices = ", ".join(a.value for a in cls)
            raise ConfigError(f"unknown activation {name!r}, expected one of {choices}") from None


class Mlp:
    """
    Fully connected network. The activation is applied between layers, never
    after the output layer.

    Attributes
    ----------
    widths : list of int
        Layer widths, input first and output last.
    activation : Activation
    weights : list of ParamSlice
        Weight matrices of shape (w_{i+1}, w_i).
    biases : list of ParamSlice
        Bias vectors of shape (w_{i+1},).
    """

    def __init__(
        self,
        widths: Sequence[int],
        store: ParamStore,
        rng: np.random.Generator,
        activation: Union[str, Activation] = Activation.LEAKY_RELU,
        zero_last: bool = False,
    ):
        """
        Parameters
        ----------
        widths : sequence of int
            Layer widths, at least two.
        store : ParamStore
            Store the parameters are allocated in.
        rng : np.random.Generator
            Generator for the uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
        activation : str | Activation
        zero_last : bool
            Initialize the output layer to zero.
        """
        widths = [int(w) for w in widths]
        if len(widths) < 2 or min(widths) < 1:
            raise ConfigError(f"invalid layer widths {widths}")
        self.widths = widths
        self.activation = Activation.parse(activation)
        self.store = store
        self.weights: List[ParamSlice] = []
        self.biases: List[ParamSlice] = []
        n_layers = len(widths) - 1
        for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            if zero_last and i == n_layers - 1:
                w0 = np.zeros((fan_out, fan_in))
                b0 = np.zeros(fan_out)
            else:
                bound = 1.0 / np.sqrt(fan_in)
                w0 = rng.uniform(-bound, bound, size=(fan_out, fan_in))
                b0 = rng.uniform(-bound, bound, size=fan_out)
            self.weights.append(store.allocate(w0))
            self.biases.append(store.allocate(b0))

    @property
    def n_params(self) -> int:
        return sum(a * b + b for a, b in zip(self.widths[:-1], self.widths[1:]))

    @property
    def in_dim(self) -> int:
        return self.widths[0]

    @property
    def out_dim(self) -> int:
        return self.widths[-1]

    def assign(self, layer: int, weight: np.ndarray, bias: Optional[np.ndarray] = None) -> None:
        """Overwrite the parameters of one layer."""
        self.store.set(self.weights[layer], weight)
        if bias is None:
            bias = np.zeros(self.widths[layer + 1])
        self.store.set(self.biases[layer], bias)

    def zero(self) -> None:
        """Set every weight and bias to zero."""
        for layer in range(len(self.weights)):
            self.assign(layer, np.zeros(self.weights[layer].shape))

    def _activate(self, graph: Graph, h: int) -> int:
        if self.activation is Activation.TANH:
            return graph.tanh(h)
        if self.activation is Activation.RELU:
            return graph.relu(h)
        return graph.leaky_relu(h, LEAKY_RELU_SLOPE)

    def _activation_slope(self, graph: Graph, pre: int, post: int) -> int:
        """Node holding the elementwise derivative of the activation at `pre`."""
        if self.activation is Activation.TANH:
            ones = graph.constant(np.ones(graph.shape(post)))
            return graph.sub(ones, graph.square(post))
        v = graph.value(pre)
        if self.activation is Activation.RELU:
            return graph.constant((v > 0).astype(float))
        return graph.constant(np.where(v > 0, 1.0, LEAKY_RELU_SLOPE))

    def _input_node(self, graph: Graph, x) -> int:
        if isinstance(x, (int, np.integer)):
            h = int(x)
        else:
            h = graph.constant(np.asarray(x, dtype=float))
        if graph.shape(h)[-1:] != (self.in_dim,):
            raise ConfigError(
                f"input of shape {graph.shape(h)} does not match first layer width {self.in_dim}"
            )
        return h

    def forward(self, graph: Graph, x) -> int:
        """
        Record the forward pass on `graph`.

        Parameters
        ----------
        graph : Graph
        x : int | np.ndarray
            Node handle, or an array of shape (in,) or (B, in).

        Returns
        -------
        out : int
            Handle of the output node.
        """
        h = self._input_node(graph, x)
        n_layers = len(self.weights)
        for i in range(n_layers):
            h = graph.linear(h, graph.param(self.weights[i]), graph.param(self.biases[i]))
            if i < n_layers - 1:
                h = self._activate(graph, h)
        return h

    def forward_tangents(
        self, graph: Graph, x, tangents: Sequence[int]
    ) -> Tuple[int, List[int]]:
        """
        Forward pass together with directional derivatives.

        Each tangent is a node of the input's shape; the returned tangents are
        the Jacobian-vector products J(x) v, recorded on the tape so they can
        be differentiated with respect to the parameters.

        Returns
        -------
        out : int
            Handle of the output node.
        jvps : list of int
            One output tangent per input tangent.
        """
        h = self._input_node(graph, x)
        jvps = list(tangents)
        n_layers = len(self.weights)
        for i in range(n_layers):
            w = graph.param(self.weights[i])
            pre = graph.linear(h, w, graph.param(self.biases[i]))
            jvps = [graph.linear(v, w) for v in jvps]
            if i < n_layers - 1:
                h = self._activate(graph, pre)
                slope = self._activation_slope(graph, pre, h)
                jvps = [graph.mul(slope, v) for v in jvps]
            else:
                h = pre
        return h, jvps


def forward(mlp: Mlp, graph: Graph, x) -> int:
    """Record `mlp` applied to `x` on `graph` and return the output handle."""
    return mlp.forward(graph, x)
