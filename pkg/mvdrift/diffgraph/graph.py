"""
Reverse-mode automatic differentiation tape.

A `Graph` is an append-only list of nodes. Each node records the kind of
operation, the handles of its inputs and its cached value (a numpy array).
Inputs always have smaller handles than the node that uses them, so the
backward pass is a single reverse sweep.

Operations have explicit shape rules and no implicit broadcasting: `add`,
`sub` and `mul` need operands of equal shape, and `linear` is the only
operation that adds a bias row-wise.
"""
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..constants import LEAKY_RELU_SLOPE
from ..errors import ConfigError, UsageError
from .params import ParamSlice, ParamStore


@dataclass
class Node:
    """
    Tape entry.

    Attributes
    ----------
    kind : str
        Operation kind.
    inputs : tuple of int
        Handles of the input nodes.
    value : np.ndarray
        Cached forward value.
    attrs : dict
        Operation attributes (constants, axes, slices...).
    """

    kind: str
    inputs: Tuple[int, ...]
    value: np.ndarray
    attrs: Dict[str, Any] = field(default_factory=dict)


class Graph:
    """
    Tape of operations over numpy values, differentiable with respect to the
    parameters of one `ParamStore`.

    Attributes
    ----------
    store : ParamStore | None
        Store whose parameters may enter the tape through `param`.
    nodes : list of Node
    grads : list of np.ndarray | None
        Gradient buffer parallel to `nodes`, filled by `backward`.
    """

    def __init__(self, store: Optional[ParamStore] = None):
        self.store = store
        self.nodes: List[Node] = []
        self.grads: List[Optional[np.ndarray]] = []
        self._param_nodes: Dict[ParamSlice, int] = {}

    def __len__(self) -> int:
        return len(self.nodes)

    def _push(self, kind: str, inputs: Sequence[int], value: np.ndarray, **attrs) -> int:
        for h in inputs:
            if not 0 <= h < len(self.nodes):
                raise UsageError(f"unknown node handle {h}")
        self.nodes.append(Node(kind, tuple(inputs), np.asarray(value, dtype=float), attrs))
        self.grads.append(None)
        return len(self.nodes) - 1

    def value(self, h: int) -> np.ndarray:
        return self.nodes[h].value

    def shape(self, h: int) -> Tuple[int, ...]:
        return self.nodes[h].value.shape

    def grad(self, h: int) -> np.ndarray:
        """Gradient of the last backward root with respect to node `h`."""
        g = self.grads[h]
        if g is None:
            return np.zeros_like(self.nodes[h].value)
        return g

    def _same_shape(self, kind: str, a: int, b: int) -> None:
        if self.shape(a) != self.shape(b):
            raise ConfigError(f"{kind}: shapes {self.shape(a)} and {self.shape(b)} differ")

    # leaves

    def constant(self, value) -> int:
        return self._push("constant", (), np.array(value, dtype=float))

    def param(self, pslice: ParamSlice) -> int:
        if self.store is None:
            raise UsageError("graph has no parameter store")
        if pslice not in self._param_nodes:
            self._param_nodes[pslice] = self._push(
                "param", (), self.store.get(pslice), pslice=pslice
            )
        return self._param_nodes[pslice]

    # elementwise

    def add(self, a: int, b: int) -> int:
        self._same_shape("add", a, b)
        return self._push("add", (a, b), self.value(a) + self.value(b))

    def sub(self, a: int, b: int) -> int:
        self._same_shape("sub", a, b)
        return self._push("sub", (a, b), self.value(a) - self.value(b))

    def mul(self, a: int, b: int) -> int:
        self._same_shape("mul", a, b)
        return self._push("mul", (a, b), self.value(a) * self.value(b))

    def neg(self, a: int) -> int:
        return self._push("neg", (a,), -self.value(a))

    def scale(self, a: int, c: float) -> int:
        return self._push("scale", (a,), self.value(a) * c, c=float(c))

    def square(self, a: int) -> int:
        return self._push("square", (a,), self.value(a) ** 2)

    def exp(self, a: int) -> int:
        return self._push("exp", (a,), np.exp(self.value(a)))

    def log(self, a: int) -> int:
        return self._push("log", (a,), np.log(self.value(a)))

    def tanh(self, a: int) -> int:
        return self._push("tanh", (a,), np.tanh(self.value(a)))

    def relu(self, a: int) -> int:
        return self._push("relu", (a,), np.maximum(self.value(a), 0.0))

    def leaky_relu(self, a: int, slope: float = LEAKY_RELU_SLOPE) -> int:
        v = self.value(a)
        return self._push("leaky_relu", (a,), np.where(v > 0, v, slope * v), slope=slope)

    def clip(self, a: int, low: float, high: float) -> int:
        return self._push("clip", (a,), np.clip(self.value(a), low, high), low=low, high=high)

    # linear algebra and structure

    def linear(self, x: int, w: int, b: Optional[int] = None) -> int:
        """x @ W.T + b for x of shape (in,) or (B, in), W (out, in), b (out,)."""
        xv, wv = self.value(x), self.value(w)
        if wv.ndim != 2 or xv.shape[-1] != wv.shape[1]:
            raise ConfigError(f"linear: input {xv.shape} does not match weights {wv.shape}")
        out = xv @ wv.T
        inputs = (x, w)
        if b is not None:
            if self.shape(b) != (wv.shape[0],):
                raise ConfigError(f"linear: bias {self.shape(b)} does not match weights {wv.shape}")
            out = out + self.value(b)
            inputs = (x, w, b)
        return self._push("linear", inputs, out)

    def concat(self, handles: Sequence[int]) -> int:
        """Concatenate along the last axis."""
        values = [self.value(h) for h in handles]
        lead = {v.shape[:-1] for v in values}
        if len(lead) != 1:
            raise ConfigError(f"concat: leading shapes {sorted(lead)} differ")
        sizes = [v.shape[-1] for v in values]
        return self._push("concat", tuple(handles), np.concatenate(values, axis=-1), sizes=sizes)

    def columns(self, a: int, start: int, stop: int) -> int:
        """Slice [start, stop) of the last axis."""
        return self._push("columns", (a,), self.value(a)[..., start:stop], start=start, stop=stop)

    def reshape(self, a: int, shape: Tuple[int, ...]) -> int:
        return self._push("reshape", (a,), self.value(a).reshape(shape))

    def sum(self, a: int, axis: Optional[int] = None) -> int:
        return self._push("sum", (a,), np.sum(self.value(a), axis=axis), axis=axis)

    def mean(self, a: int, axis: Optional[int] = None) -> int:
        return self._push("mean", (a,), np.mean(self.value(a), axis=axis), axis=axis)

    def repeat_rows(self, a: int, n: int) -> int:
        """Each row repeated n times in place: r0, r0, ..., r1, r1, ..."""
        return self._push("repeat_rows", (a,), np.repeat(self.value(a), n, axis=0), n=n)

    def tile_rows(self, a: int, n: int) -> int:
        """The whole block stacked n times: r0, r1, ..., r0, r1, ..."""
        v = self.value(a)
        reps = (n,) + (1,) * (v.ndim - 1)
        return self._push("tile_rows", (a,), np.tile(v, reps), n=n)

    def take_rows(self, a: int, index: np.ndarray) -> int:
        index = np.asarray(index, dtype=int)
        return self._push("take_rows", (a,), self.value(a)[index], index=index)

    # composites

    def dot_rows(self, a: int, b: int) -> int:
        """Row-wise inner product, shape (B,)."""
        return self.sum(self.mul(a, b), axis=-1)

    def sq_norm_rows(self, a: int) -> int:
        """Row-wise squared Euclidean norm, shape (B,)."""
        return self.sum(self.square(a), axis=-1)

    # reverse sweep

    def backward(self, root: int) -> np.ndarray:
        """
        Propagate d(root)/d(node) to every node recorded before `root`.

        Parameters
        ----------
        root : int
            Handle of a scalar node.

        Returns
        -------
        grad : np.ndarray
            Gradient of `root` with respect to the flat parameter vector of the
            store. It is also added to `store.grad`.
        """
        root_value = self.value(root)
        if root_value.size != 1:
            raise UsageError(f"backward root must be scalar, got shape {root_value.shape}")
        self.grads = [None] * len(self.nodes)
        self.grads[root] = np.ones_like(root_value)
        size = 0 if self.store is None else self.store.size
        param_grad = np.zeros(size)
        for h in range(root, -1, -1):
            g = self.grads[h]
            if g is None:
                continue
            node = self.nodes[h]
            if node.kind == "param":
                pslice = node.attrs["pslice"]
                param_grad[pslice.offset:pslice.stop] += g.ravel()
                continue
            if node.kind == "constant":
                continue
            for inp, gi in zip(node.inputs, _BACKWARD[node.kind](self, node, g)):
                current = self.grads[inp]
                self.grads[inp] = gi if current is None else current + gi
        if self.store is not None:
            self.store.grad = self.store.grad + param_grad
        return param_grad


def _linear_backward(graph: Graph, node: Node, g: np.ndarray):
    x = graph.value(node.inputs[0])
    w = graph.value(node.inputs[1])
    gx = g @ w
    if x.ndim == 1:
        gw = np.outer(g, x)
        gb = g
    else:
        flat_g = g.reshape(-1, g.shape[-1])
        gw = flat_g.T @ x.reshape(-1, x.shape[-1])
        gb = flat_g.sum(axis=0)
    grads = [gx, gw]
    if len(node.inputs) == 3:
        grads.append(gb)
    return grads


def _concat_backward(graph: Graph, node: Node, g: np.ndarray):
    bounds = np.cumsum(node.attrs["sizes"])[:-1]
    return np.split(g, bounds, axis=-1)


def _columns_backward(graph: Graph, node: Node, g: np.ndarray):
    ga = np.zeros_like(graph.value(node.inputs[0]))
    ga[..., node.attrs["start"]:node.attrs["stop"]] = g
    return (ga,)


def _reduce_backward(graph: Graph, node: Node, g: np.ndarray, mean: bool):
    a = graph.value(node.inputs[0])
    axis = node.attrs["axis"]
    if axis is None:
        ga = np.full(a.shape, float(g))
        count = a.size
    else:
        ga = np.broadcast_to(np.expand_dims(g, axis), a.shape).copy()
        count = a.shape[axis]
    if mean:
        ga = ga / count
    return (ga,)


def _repeat_backward(graph: Graph, node: Node, g: np.ndarray):
    a = graph.value(node.inputs[0])
    n = node.attrs["n"]
    return (g.reshape((a.shape[0], n) + a.shape[1:]).sum(axis=1),)


def _tile_backward(graph: Graph, node: Node, g: np.ndarray):
    a = graph.value(node.inputs[0])
    n = node.attrs["n"]
    return (g.reshape((n,) + a.shape).sum(axis=0),)


def _take_backward(graph: Graph, node: Node, g: np.ndarray):
    ga = np.zeros_like(graph.value(node.inputs[0]))
    np.add.at(ga, node.attrs["index"], g)
    return (ga,)


def _input(graph: Graph, node: Node, k: int = 0) -> np.ndarray:
    return graph.value(node.inputs[k])


_BACKWARD: Dict[str, Callable[[Graph, Node, np.ndarray], Sequence[np.ndarray]]] = {
    "add": lambda gr, n, g: (g, g),
    "sub": lambda gr, n, g: (g, -g),
    "mul": lambda gr, n, g: (g * _input(gr, n, 1), g * _input(gr, n, 0)),
    "neg": lambda gr, n, g: (-g,),
    "scale": lambda gr, n, g: (g * n.attrs["c"],),
    "square": lambda gr, n, g: (2.0 * _input(gr, n) * g,),
    "exp": lambda gr, n, g: (g * n.value,),
    "log": lambda gr, n, g: (g / _input(gr, n),),
    "tanh": lambda gr, n, g: (g * (1.0 - n.value ** 2),),
    "relu": lambda gr, n, g: (g * (_input(gr, n) > 0),),
    "leaky_relu": lambda gr, n, g: (g * np.where(_input(gr, n) > 0, 1.0, n.attrs["slope"]),),
    "clip": lambda gr, n, g: (
        g * ((_input(gr, n) >= n.attrs["low"]) & (_input(gr, n) <= n.attrs["high"])),
    ),
    "linear": _linear_backward,
    "concat": _concat_backward,
    "columns": _columns_backward,
    "reshape": lambda gr, n, g: (g.reshape(_input(gr, n).shape),),
    "sum": lambda gr, n, g: _reduce_backward(gr, n, g, mean=False),
    "mean": lambda gr, n, g: _reduce_backward(gr, n, g, mean=True),
    "repeat_rows": _repeat_backward,
    "tile_rows": _tile_backward,
    "take_rows": _take_backward,
}


def backward(graph: Graph, root: int) -> np.ndarray:
    """Gradient of the scalar node `root` with respect to the parameters of `graph.store`."""
    return graph.backward(root)
