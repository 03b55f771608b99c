"""
Closed-form drifts of the synthetic systems, used to simulate data and as the
reference of the drift error.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional, Union

import numpy as np

from ..basics import as_rows, time_column
from ..constants import (
    CIRCLE_ROTATION,
    FHN_A,
    FHN_B,
    FHN_C,
    FHN_D,
    FHN_I_AMPLITUDE,
    FHN_I_FREQUENCY,
    FHN_LAMBDA,
    JUMP_OU_RATES,
    KURAMOTO_K,
    OPINION_THETA1,
    OPINION_THETA2,
    OU_RATES,
    SYSTEM_DEFAULTS,
)
from ..errors import ConfigError, UsageError
from ..types import Population


class System(str, Enum):
    KURAMOTO = "kuramoto"
    FITZHUGH_NAGUMO = "fitzhugh_nagumo"
    OPINION_DYNAMICS = "opinion_dynamics"
    MEAN_FIELD_ATLAS = "mean_field_atlas"
    OU = "ou"
    CIRCLE = "circle"
    JUMP_OU = "jump_ou"

    @classmethod
    def parse(cls, name: Union[str, "System"]) -> "System":
        try:
            return cls(name)
        except ValueError:
            choices = ", ".join(s.value for s in cls)
            raise ConfigError(f"unknown system {name!r}, expected one of {choices}") from None


MEAN_FIELD_SYSTEMS = frozenset(
    {System.KURAMOTO, System.FITZHUGH_NAGUMO, System.OPINION_DYNAMICS, System.MEAN_FIELD_ATLAS}
)

_DEFAULT_PARAMS: Dict[System, Dict[str, float]] = {
    System.KURAMOTO: {"K": KURAMOTO_K},
    System.FITZHUGH_NAGUMO: {
        "a": FHN_A,
        "b": FHN_B,
        "c": FHN_C,
        "d": FHN_D,
        "lam": FHN_LAMBDA,
        "i_amplitude": FHN_I_AMPLITUDE,
        "i_frequency": FHN_I_FREQUENCY,
    },
    System.OPINION_DYNAMICS: {"theta1": OPINION_THETA1, "theta2": OPINION_THETA2},
    System.MEAN_FIELD_ATLAS: {},
    System.OU: {"rate1": OU_RATES[0], "rate2": OU_RATES[1]},
    System.CIRCLE: {"rotation": CIRCLE_ROTATION},
    System.JUMP_OU: {"rate1": JUMP_OU_RATES[0], "rate2": JUMP_OU_RATES[1]},
}


def atlas_gamma(u: np.ndarray) -> np.ndarray:
    """Rank drift gamma(u) = 1 - u exp(2u) of the mean-field Atlas model."""
    u = np.asarray(u, dtype=float)
    return 1.0 - u * np.exp(2.0 * u)


def opinion_kernel(r: np.ndarray, theta1: float = OPINION_THETA1, theta2: float = OPINION_THETA2) -> np.ndarray:
    """
    Opinion-dynamics interaction strength psi(r) = theta1 exp(-0.01 / (1 - (r - theta2)^2)).

    Zero where (r - theta2)^2 >= 1, the continuous extension outside the support.
    """
    r = np.asarray(r, dtype=float)
    gap = 1.0 - (r - theta2) ** 2
    inside = gap > 0
    safe = np.where(inside, gap, 1.0)
    return np.where(inside, theta1 * np.exp(-0.01 / safe), 0.0)


@dataclass
class TrueDrift:
    """
    Analytic drift of a synthetic system.

    Attributes
    ----------
    system : System
    params : dict
        System parameters; missing entries take the defaults of the system.
    """

    system: System
    params: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        self.system = System.parse(self.system)
        defaults = _DEFAULT_PARAMS[self.system]
        unknown = set(self.params) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown parameters {sorted(unknown)} for system {self.system.value}")
        self.params = {**defaults, **self.params}

    @property
    def dim(self) -> int:
        return SYSTEM_DEFAULTS[self.system.value]["dim"]

    @property
    def mean_field(self) -> bool:
        return self.system in MEAN_FIELD_SYSTEMS

    @property
    def noise_mask(self) -> np.ndarray:
        """Coordinates driven by the Brownian motion (FitzHugh-Nagumo: voltage only)."""
        if self.system is System.FITZHUGH_NAGUMO:
            return np.array([1.0, 0.0])
        return np.ones(self.dim)

    def evaluate(
        self,
        x: np.ndarray,
        population: Optional[Union[np.ndarray, Population]] = None,
        t: Union[float, np.ndarray] = 0.0,
        rng: Optional[np.random.Generator] = None,
    ) -> np.ndarray:
        """
        Drift at x.

        Parameters
        ----------
        x : np.ndarray
            Point (d,) or batch (B, d).
        population : np.ndarray | Population | None
            Time-t sample, shared (n, d) or one per row (B, n, d). Required
            for the mean-field systems.
        t : float | np.ndarray
            Time, or one time per row.
        rng : np.random.Generator | None
            Unused; accepted so analytic and learned drifts are interchangeable.

        Returns
        -------
        b : np.ndarray
            Same shape as x.
        """
        rows, single = as_rows(x, self.dim)
        t_rows = time_column(t, rows.shape[0])[:, 0]
        pop = None
        if self.mean_field:
            pop = _population_block(population, rows.shape[0], self.dim)
        out = getattr(self, "_" + self.system.value)(rows, pop, t_rows)
        return out[0] if single else out

    def _kuramoto(self, x, pop, t):
        coupling = np.mean(np.sin(pop - x[:, None, :]), axis=1)
        return np.sin(x) + self.params["K"] * coupling

    def _fitzhugh_nagumo(self, x, pop, t):
        p = self.params
        v, w = x[:, 0], x[:, 1]
        current = p["i_amplitude"] * np.sin(p["i_frequency"] * t)
        mean_field = v - np.mean(pop[:, :, 0], axis=1)
        dv = p["a"] * v * (v - p["lam"]) * (1.0 - v) - w + current + mean_field
        dw = -p["b"] * w + p["c"] * v + p["d"]
        return np.stack([dv, dw], axis=1)

    def _opinion_dynamics(self, x, pop, t):
        diff = x[:, None, :] - pop
        psi = opinion_kernel(np.linalg.norm(diff, axis=2), self.params["theta1"], self.params["theta2"])
        return np.mean(psi[:, :, None] * diff, axis=1)

    def _mean_field_atlas(self, x, pop, t):
        u = np.mean((x[:, None, 0] - pop[:, :, 0]) > 0, axis=1)
        return atlas_gamma(u)[:, None]

    def _ou(self, x, pop, t):
        return -np.array([self.params["rate1"], self.params["rate2"]]) * x

    def _circle(self, x, pop, t):
        r = self.params["rotation"]
        return np.stack([-x[:, 0] - r * x[:, 1], -x[:, 1] + r * x[:, 0]], axis=1)

    def _jump_ou(self, x, pop, t):
        return -np.array([self.params["rate1"], self.params["rate2"]]) * x


def _population_block(population, n_rows: int, dim: int) -> np.ndarray:
    if population is None:
        raise UsageError("mean-field drift needs a population")
    if isinstance(population, Population):
        population = population.particles
    pop = np.asarray(population, dtype=float)
    if pop.ndim == 2:
        pop = pop[None, :, :]
    if pop.ndim != 3 or pop.shape[-1] != dim or pop.shape[0] not in (1, n_rows):
        raise ConfigError(f"population of shape {np.shape(population)} does not fit {n_rows} points in R^{dim}")
    if pop.shape[1] == 0:
        raise UsageError("population is empty")
    return pop


def true_drift(
    system: Union[TrueDrift, str],
    x: np.ndarray,
    pop: Optional[Union[np.ndarray, Population]] = None,
    t: Union[float, np.ndarray] = 0.0,
) -> np.ndarray:
    """Closed-form drift of `system` at x given the population `pop` at time t."""
    if not isinstance(system, TrueDrift):
        system = TrueDrift(system)
    return system.evaluate(x, pop, t)
