"""
Flat parameter vector shared by every trainable model, and its checkpoint file.
"""
import json
from dataclasses import dataclass
from typing import Any, Dict, Tuple

import numpy as np

from ..errors import ConfigError, ParseError


@dataclass(frozen=True)
class ParamSlice:
    """
    View of a block of the flat parameter vector.

    Attributes
    ----------
    offset : int
        Index of the first entry in the flat vector.
    shape : tuple of int
        Shape of the block.
    """

    offset: int
    shape: Tuple[int, ...]

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=int))

    @property
    def stop(self) -> int:
        return self.offset + self.size


class ParamStore:
    """
    Flat parameter vector with a gradient buffer of the same length.

    Attributes
    ----------
    values : np.ndarray
        Parameter vector.
    grad : np.ndarray
        Accumulated gradient.
    """

    def __init__(self):
        self.values = np.zeros(0)
        self.grad = np.zeros(0)

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def allocate(self, initial: np.ndarray) -> ParamSlice:
        """
        Append a new block to the vector.

        Parameters
        ----------
        initial : np.ndarray
            Initial values; its shape is the block shape.

        Returns
        -------
        pslice : ParamSlice
        """
        initial = np.asarray(initial, dtype=float)
        pslice = ParamSlice(self.size, tuple(initial.shape))
        self.values = np.concatenate([self.values, initial.ravel()])
        self.grad = np.zeros_like(self.values)
        return pslice

    def get(self, pslice: ParamSlice) -> np.ndarray:
        """Copy of the block as an array of the block shape."""
        return self.values[pslice.offset:pslice.stop].reshape(pslice.shape).copy()

    def set(self, pslice: ParamSlice, value: np.ndarray) -> None:
        value = np.asarray(value, dtype=float)
        if value.shape != pslice.shape:
            raise ConfigError(f"expected shape {pslice.shape}, got {value.shape}")
        self.values[pslice.offset:pslice.stop] = value.ravel()

    def load(self, values: np.ndarray) -> None:
        """Replace the whole vector, keeping its length."""
        values = np.asarray(values, dtype=float).ravel()
        if values.shape != self.values.shape:
            raise ConfigError(
                f"parameter vector of length {values.shape[0]} does not match the model ({self.size})"
            )
        self.values = values.copy()

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.values)


def save_checkpoint(path: str, store: ParamStore, header: Dict[str, Any]) -> None:
    """
    Write a parameter checkpoint: a JSON header plus the flat vector of 64-bit floats.

    Parameters
    ----------
    path : str
        Output file.
    store : ParamStore
        Parameters to write.
    header : dict
        Architecture description, widths, activation, seed...
    """
    payload = {
        "header": header,
        "n_parameters": store.size,
        "parameters": [float(v) for v in store.values],
    }
    with open(path, "w", encoding="utf-8") as fp:
        json.dump(payload, fp, indent=1)


def load_checkpoint(path: str) -> Tuple[Dict[str, Any], np.ndarray]:
    """
    Read a parameter checkpoint written by `save_checkpoint`.

    Returns
    -------
    header : dict
    values : np.ndarray
    """
    try:
        with open(path, "r", encoding="utf-8") as fp:
            payload = json.load(fp)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid checkpoint {path}: {exc.msg}", exc.lineno) from exc
    if not isinstance(payload, dict) or "header" not in payload or "parameters" not in payload:
        raise ParseError(f"checkpoint {path} lacks a header or parameters")
    values = np.asarray(payload["parameters"], dtype=float)
    if values.shape[0] != payload.get("n_parameters", values.shape[0]):
        raise ParseError(f"checkpoint {path} is truncated")
    return payload["header"], values
