"""
Common and simple data types and data structures.
"""
import json
from dataclasses import dataclass, field, asdict
from typing import Any, Dict, List, Optional

import numpy as np

from .constants import (
    ADAMW_EPS,
    ADAMW_GAMMA,
    ADAMW_LR,
    ADAMW_WEIGHT_DECAY,
    BATCH_TIME_SERIES,
    CC_SAMPLES,
    CC_WEIGHT,
    EPOCHS_TIME_SERIES,
    FLOW_HIDDEN_LAYERS,
    FLOW_HIDDEN_WIDTH,
    FLOW_LAYERS,
    FP_PATHS,
    FP_STEPS,
    HIDDEN_WIDTH,
    N_BRIDGES,
    PHI_HIDDEN_LAYERS,
)
from .errors import ConfigError


@dataclass
class TrajectoryDataset:
    """
    Observed trajectories of N particles on a common time grid.

    Attributes
    ----------
    times : np.ndarray
        Strictly increasing time stamps, shape (K,).
    states : np.ndarray
        Particle states, shape (N, K, d). Entries outside `mask` may be NaN
        when the dataset was read from an irregular CSV.
    mask : np.ndarray | None
        Boolean observation mask, shape (N, K). None means every
        (particle, time) pair is observed.
    metadata : dict
        Free-form provenance (system, seed, jump log...).
    """

    times: np.ndarray
    states: np.ndarray
    mask: Optional[np.ndarray] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim != 3 or self.states.shape[1] != self.times.shape[0]:
            raise ConfigError(
                f"states of shape {self.states.shape} do not match {self.times.shape[0]} time stamps"
            )
        if np.any(np.diff(self.times) <= 0):
            raise ConfigError("times must be strictly increasing")
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != self.states.shape[:2]:
                raise ConfigError("mask must have shape (N, K)")
            if not (self.mask[:, 0].all() and self.mask[:, -1].all()):
                raise ConfigError("mask must retain the first and last time stamps")
            if self.mask.all():
                self.mask = None
        observed = self.states[self.observed()]
        if not np.all(np.isfinite(observed)):
            raise ConfigError("observed states must be finite")

    @property
    def n_particles(self) -> int:
        return self.states.shape[0]

    @property
    def n_times(self) -> int:
        return self.states.shape[1]

    @property
    def dim(self) -> int:
        return self.states.shape[2]

    @property
    def is_regular(self) -> bool:
        return self.mask is None

    def observed(self) -> np.ndarray:
        """Boolean (N, K) mask of observed entries, also for regular data."""
        if self.mask is None:
            return np.ones(self.states.shape[:2], dtype=bool)
        return self.mask

    def subset(self, particles: np.ndarray) -> "TrajectoryDataset":
        """Dataset restricted to the given particle indices."""
        mask = None if self.mask is None else self.mask[particles]
        return TrajectoryDataset(self.times, self.states[particles], mask, dict(self.metadata))


@dataclass
class Population:
    """
    Time-t marginal sample used as the empirical measure.

    Attributes
    ----------
    particles : np.ndarray
        Sample of shape (n, d).
    t : float
        Time of the marginal.
    """

    particles: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.particles = np.atleast_2d(np.asarray(self.particles, dtype=float))


@dataclass
class GeneratorSpec:
    """
    Synthetic dataset description. Fields left as None take the system's
    defaults from `constants.SYSTEM_DEFAULTS`.

    Attributes
    ----------
    system : str
        One of the synthetic systems (kuramoto, fitzhugh_nagumo, ...).
    sigma : float
        Diffusion constant.
    T : float
        Terminal time.
    dt : float
        Simulation step.
    n_particles : int
        Number of simulated particles N.
    n_irregular : int | None
        Number of irregular observations N'; None keeps the full grid.
    dim : int | None
        State dimension; only the eight_gaussians target accepts a value
        other than the system's own.
    observation_noise : float
        Standard deviation of additive Gaussian observation noise.
    jump_count : int
        Number of jumps (jump_ou only).
    init_std : float
        Standard deviation of the Gaussian initial law.
    seed : int
        Seed of the random generator.
    """

    system: str = "ou"
    sigma: Optional[float] = None
    T: Optional[float] = None
    dt: Optional[float] = None
    n_particles: Optional[int] = None
    n_irregular: Optional[int] = None
    dim: Optional[int] = None
    observation_noise: float = 0.0
    jump_count: int = 2
    init_std: float = 1.0
    seed: int = 0


@dataclass
class BridgeSpec:
    """
    Brownian bridge between two pinned points.

    Attributes
    ----------
    a, b : np.ndarray
        Start and end points in R^d.
    t0, t1 : float
        Time interval, t0 < t1.
    n_steps : int
        Number of inner grid intervals J (the path has J + 1 points).
    sigma : float
        Diffusion constant.
    """

    a: np.ndarray
    b: np.ndarray
    t0: float
    t1: float
    n_steps: int
    sigma: float = 1.0


@dataclass
class ArchitectureSpec:
    """
    Neural drift architecture.

    Attributes
    ----------
    variant : str
        ito_mlp, em, im or ml.
    dim : int
        State dimension d.
    hidden_width : int
        Width of the hidden layers of f and phi.
    f_layers : int | None
        Hidden layers of f; None picks the variant default.
    phi_layers : int
        Hidden layers of phi.
    activation : str
        leaky_relu, tanh or relu.
    width : int | None
        Mean-field width n (rows of W0 for im, expectation width for ml).
    flow_layers, flow_hidden_layers, flow_hidden_width : int
        Coupling flow of the ml variant.
    """

    variant: str = "ito_mlp"
    dim: int = 2
    hidden_width: int = HIDDEN_WIDTH
    f_layers: Optional[int] = None
    phi_layers: int = PHI_HIDDEN_LAYERS
    activation: str = "leaky_relu"
    width: Optional[int] = None
    flow_layers: int = FLOW_LAYERS
    flow_hidden_layers: int = FLOW_HIDDEN_LAYERS
    flow_hidden_width: int = FLOW_HIDDEN_WIDTH


@dataclass
class TrainConfig:
    """
    Estimator and optimizer settings.

    Attributes
    ----------
    estimator : str
        mle, bridge, marginal or fokker_planck.
    epochs, batch_size : int
        Passes over the data and particles per optimizer step.
    lr, eps, gamma, weight_decay : float
        AdamW settings (gamma is the per-step learning-rate decay).
    clip_norm : float | None
        Global gradient-norm clip, off when None.
    sigma : float | None
        Known diffusion constant; None takes the generator's.
    n_bridges : int
        Brownian bridges per segment (N_BB).
    bridge_substeps : int
        Bridge grid refinement of the observation grid.
    cache_bridges : bool
        Reuse the first epoch's bridges instead of resampling.
    cc_samples, cc_steps : int
        Monte-Carlo paths and Euler sub-steps of the compatibility criterion.
    cc_weight : float
        Weight of the compatibility penalty.
    fp_steps, fp_paths : int
        Time steps and Brownian paths of the linear Fokker-Planck ELBO.
    horizon : float | None
        Time horizon of the Fokker-Planck ELBO; None takes the dataset's.
    population_size : int | None
        Subsample size of the empirical measure of the em drift; None uses
        every particle.
    divergence : str
        Divergence method of the Fokker-Planck ELBO; only "exact".
    log_every : int
        Epoch period of INFO progress logs.
    progress : bool
        Show a progress bar.
    seed : int
    """

    estimator: str = "mle"
    epochs: int = EPOCHS_TIME_SERIES
    batch_size: int = BATCH_TIME_SERIES
    lr: float = ADAMW_LR
    eps: float = ADAMW_EPS
    gamma: float = ADAMW_GAMMA
    weight_decay: float = ADAMW_WEIGHT_DECAY
    clip_norm: Optional[float] = None
    sigma: Optional[float] = None
    n_bridges: int = N_BRIDGES
    bridge_substeps: int = 1
    cache_bridges: bool = False
    cc_samples: int = CC_SAMPLES
    cc_steps: int = 1
    cc_weight: float = CC_WEIGHT
    fp_steps: int = FP_STEPS
    fp_paths: int = FP_PATHS
    horizon: Optional[float] = None
    population_size: Optional[int] = None
    divergence: str = "exact"
    log_every: int = 50
    progress: bool = False
    seed: int = 0


@dataclass
class TrainReport:
    """
    Outcome of a training run.

    Attributes
    ----------
    config : dict
        Echo of the TrainConfig.
    seed : int
    loss_trace : list of float
        Per-epoch mean of the maximised objective.
    wall_clock_s : float
    checkpoint_path : str | None
    traces : dict of str to list of float
        Per-epoch traces of additional terms.
    final_parameters : np.ndarray | None
        Parameter vector at the end of training.
    aborted : bool
    """

    config: Dict[str, Any]
    seed: int
    loss_trace: List[float] = field(default_factory=list)
    wall_clock_s: float = 0.0
    checkpoint_path: Optional[str] = None
    traces: Dict[str, List[float]] = field(default_factory=dict)
    final_parameters: Optional[np.ndarray] = None
    aborted: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            "config": self.config,
            "seed": self.seed,
            "loss_trace": [float(v) for v in self.loss_trace],
            "wall_clock_s": self.wall_clock_s,
            "checkpoint_path": self.checkpoint_path,
            "traces": {k: [float(v) for v in vs] for k, vs in self.traces.items()},
            "aborted": self.aborted,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def config_echo(cfg) -> Dict[str, Any]:
    """Plain-dict echo of a configuration dataclass."""
    return asdict(cfg)


@dataclass
class EvalGrid:
    """
    Locations where drifts are compared.

    Attributes
    ----------
    points : np.ndarray
        Evaluation points, shape (P, d).
    """

    points: np.ndarray

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.points.size == 0 or not np.all(np.isfinite(self.points)):
            raise ConfigError("evaluation grid must be non-empty and finite")

    @classmethod
    def lattice(cls, low: float, high: float, n_per_dim: int, dim: int) -> "EvalGrid":
        """Uniform lattice over the box [low, high]^dim."""
        axis = np.linspace(low, high, n_per_dim)
        mesh = np.meshgrid(*([axis] * dim), indexing="ij")
        return cls(np.stack([m.ravel() for m in mesh], axis=1))

    @classmethod
    def from_cloud(cls, cloud: np.ndarray) -> "EvalGrid":
        """Grid made of a held-out particle cloud."""
        return cls(cloud)
