"""
Finite-difference verification of tape gradients.
"""
from typing import Callable, Tuple

import numpy as np

from .graph import Graph
from .params import ParamStore

Closure = Callable[[np.ndarray], Tuple[float, np.ndarray]]


def graph_closure(store: ParamStore, build: Callable[[Graph], int]) -> Closure:
    """
    Turn a tape-building function into a gradient-check closure.

    Parameters
    ----------
    store : ParamStore
        Store whose values are replaced by the checked parameters.
    build : callable
        Records a scalar loss on a fresh `Graph(store)` and returns its handle.
        It must be deterministic (fix any random generator inside it).

    Returns
    -------
    closure : callable
        Maps parameters to (loss, autodiff gradient).
    """

    def closure(params: np.ndarray) -> Tuple[float, np.ndarray]:
        store.load(params)
        graph = Graph(store)
        root = build(graph)
        grad = graph.backward(root)
        return float(graph.value(root)), grad

    return closure


def grad_check(closure: Closure, params: np.ndarray, h: float = 1e-5) -> float:
    """
    Compare the autodiff gradient with central finite differences.

    Parameters
    ----------
    closure : callable
        Maps parameters to (loss, autodiff gradient).
    params : np.ndarray
        Point of the check.
    h : float
        Finite-difference step.

    Returns
    -------
    err : float
        Max over coordinates of |autodiff - central difference| / max(1, |central difference|).
    """
    params = np.asarray(params, dtype=float).copy()
    _, grad = closure(params.copy())
    grad = np.asarray(grad, dtype=float).copy()
    err = 0.0
    for i in range(params.shape[0]):
        plus = params.copy()
        plus[i] += h
        minus = params.copy()
        minus[i] -= h
        fd = (closure(plus)[0] - closure(minus)[0]) / (2.0 * h)
        err = max(err, abs(grad[i] - fd) / max(1.0, abs(fd)))
    closure(params)
    return err
