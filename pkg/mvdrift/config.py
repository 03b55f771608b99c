"""
Experiment configuration files.

An experiment is described by one JSON object with the sections ``name``,
``seed``, ``output_dir``, ``generator``, ``architecture``, ``train`` and
``evaluation``. Unset fields take the defaults of the hyperparameter tables;
unknown keys are rejected.
"""
import json
import logging
import os
from dataclasses import MISSING, asdict, dataclass, field, fields, replace
from typing import Any, Dict, List, Mapping, Optional, Union, get_args, get_origin, get_type_hints

from .constants import BATCH_GENERATIVE, EPOCHS_GENERATIVE
from .errors import ConfigError
from .simulate import EIGHT_GAUSSIANS, resolve_spec
from .types import ArchitectureSpec, GeneratorSpec, TrainConfig

logger = logging.getLogger(__name__)

METRICS = ("drift_mse", "energy_distance", "crps", "ks", "ecdf", "fp_elbo", "im_probe")


@dataclass
class EvaluationSpec:
    """
    Evaluation and sampling settings.

    Attributes
    ----------
    grid : str
        "lattice" (uniform box) or "cloud" (held-out particles at each time).
    grid_low, grid_high : float
        Box of the lattice, in every coordinate.
    grid_n : int
        Lattice points per coordinate.
    eval_times : int
        Number of evenly spaced time stamps the drift error is averaged over.
    metrics : list of str
        Metrics written to metrics.csv.
    analytic : bool
        Evaluate the analytic drift in place of a checkpoint.
    n_samples : int
        Trajectories simulated under the learned drift.
    horizon, dt, sigma : float | None
        Sampling horizon, step and diffusion; None takes the generator's.
    """

    grid: str = "lattice"
    grid_low: float = -2.0
    grid_high: float = 2.0
    grid_n: int = 11
    eval_times: int = 5
    metrics: List[str] = field(default_factory=lambda: ["drift_mse"])
    analytic: bool = False
    n_samples: int = 100
    horizon: Optional[float] = None
    dt: Optional[float] = None
    sigma: Optional[float] = None


@dataclass
class ExperimentConfig:
    """
    One experiment: the data, the model, how it is trained and evaluated.

    Attributes
    ----------
    name : str
    seed : int
        Seed of the experiment; the generator and training seeds default to it.
    output_dir : str
        Parent directory of the experiment directory.
    dataset : str | None
        Trajectory CSV to train on instead of simulating the generator.
    generator : GeneratorSpec
    architecture : ArchitectureSpec
    train : TrainConfig
    evaluation : EvaluationSpec
    """

    name: str = "experiment"
    seed: int = 0
    output_dir: str = "runs"
    dataset: Optional[str] = None
    generator: GeneratorSpec = field(default_factory=GeneratorSpec)
    architecture: ArchitectureSpec = field(default_factory=ArchitectureSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    evaluation: EvaluationSpec = field(default_factory=EvaluationSpec)

    @property
    def directory(self) -> str:
        return os.path.join(self.output_dir, self.name)


_SECTIONS = {
    "generator": GeneratorSpec,
    "architecture": ArchitectureSpec,
    "train": TrainConfig,
    "evaluation": EvaluationSpec,
}
_TOP_LEVEL = ("name", "seed", "output_dir")


def _check_value(key: str, value: Any, hint: Any) -> Any:
    """Value converted to the annotated type, or ConfigError."""
    origin = get_origin(hint)
    if origin is Union:
        args = [a for a in get_args(hint) if a is not type(None)]
        if value is None:
            return None
        return _check_value(key, value, args[0])
    if origin in (list, List):
        (item,) = get_args(hint)
        if not isinstance(value, list):
            raise ConfigError(f"{key} must be a list, got {value!r}")
        return [_check_value(f"{key}[{i}]", v, item) for i, v in enumerate(value)]
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be true or false, got {value!r}")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key} must be a string, got {value!r}")
        return value
    return value


def _section(name: str, cls, mapping: Any, extra_keys=()) -> Any:
    if not isinstance(mapping, Mapping):
        raise ConfigError(f"section {name} must be an object")
    hints = get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(mapping) - known - set(extra_keys))
    if unknown:
        raise ConfigError(f"unknown configuration key {name}.{unknown[0]}")
    values = {k: _check_value(f"{name}.{k}", v, hints[k]) for k, v in mapping.items() if k in known}
    return cls(**values)


def config_from_dict(mapping: Mapping[str, Any]) -> ExperimentConfig:
    """
    Build and resolve an experiment configuration.

    Generator fields left unset take the system defaults, the generator and
    training seeds default to the experiment seed, the architecture
    dimension defaults to the generator's and the eight-Gaussian family gets
    the generative training defaults.

    Raises
    ------
    ConfigError
        Unknown key, wrong type or invalid value; the dotted key is named.
    """
    if not isinstance(mapping, Mapping):
        raise ConfigError("an experiment configuration must be a JSON object")
    unknown = sorted(set(mapping) - set(_TOP_LEVEL) - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"unknown configuration key {unknown[0]}")
    hints = get_type_hints(ExperimentConfig)
    top = {k: _check_value(k, mapping[k], hints[k]) for k in _TOP_LEVEL if k in mapping}
    raw: Dict[str, Dict[str, Any]] = {}
    for name in _SECTIONS:
        section = mapping.get(name) or {}
        if not isinstance(section, Mapping):
            raise ConfigError(f"section {name} must be an object")
        raw[name] = dict(section)

    dataset = raw["generator"].get("dataset")
    if dataset is not None and not isinstance(dataset, str):
        raise ConfigError(f"generator.dataset must be a path, got {dataset!r}")
    sections = {
        name: _section(name, cls, raw[name], ("dataset",) if name == "generator" else ())
        for name, cls in _SECTIONS.items()
    }
    seed = top.get("seed", 0)
    generator = sections["generator"]
    if "seed" not in raw["generator"]:
        generator = replace(generator, seed=seed)
    generator = resolve_spec(generator)

    architecture = sections["architecture"]
    if "dim" not in raw["architecture"]:
        architecture = replace(architecture, dim=generator.dim)
    elif dataset is None and architecture.dim != generator.dim:
        raise ConfigError(f"architecture.dim={architecture.dim} but the generator is {generator.dim}-dimensional")

    train = sections["train"]
    if "seed" not in raw["train"]:
        train = replace(train, seed=seed)
    if generator.system == EIGHT_GAUSSIANS:
        generative = {"epochs": EPOCHS_GENERATIVE, "batch_size": BATCH_GENERATIVE, "estimator": "bridge"}
        train = replace(train, **{k: v for k, v in generative.items() if k not in raw["train"]})

    evaluation = sections["evaluation"]
    bad = [m for m in evaluation.metrics if m not in METRICS]
    if bad:
        raise ConfigError(f"unknown metric {bad[0]!r}, expected one of {', '.join(METRICS)}")
    if evaluation.grid not in ("lattice", "cloud"):
        raise ConfigError(f"evaluation.grid must be 'lattice' or 'cloud', got {evaluation.grid!r}")
    if evaluation.grid_n < 1 or evaluation.eval_times < 1 or evaluation.n_samples < 1:
        raise ConfigError("evaluation.grid_n, eval_times and n_samples must be positive")

    return ExperimentConfig(
        dataset=dataset,
        generator=generator,
        architecture=architecture,
        train=train,
        evaluation=evaluation,
        **top,
    )


def load_config(path: str) -> ExperimentConfig:
    """Read an experiment configuration from a JSON file."""
    return config_from_dict(read_mapping(path))


def read_mapping(path: str) -> Dict[str, Any]:
    """Raw JSON object of a configuration file."""
    if not os.path.exists(path):
        raise ConfigError(f"configuration file {path} does not exist")
    with open(path, "r") as f:
        try:
            mapping = json.load(f)
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path} is not valid JSON: {err}") from err
    if not isinstance(mapping, dict):
        raise ConfigError(f"{path} does not hold a JSON object")
    return mapping


def set_dotted(mapping: Dict[str, Any], key: str, value: Any) -> None:
    """Assign ``value`` to a dotted key such as ``train.epochs``, in place."""
    parts = key.split(".")
    node = mapping
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {key}: {part} is not a section")
    node[parts[-1]] = value


def config_to_dict(cfg: ExperimentConfig) -> Dict[str, Any]:
    """Fully resolved echo of a configuration; feeding it back gives the same configuration."""
    out = asdict(cfg)
    dataset = out.pop("dataset")
    if dataset is not None:
        out["generator"]["dataset"] = dataset
    return out


def _type_name(hint: Any) -> str:
    origin = get_origin(hint)
    if origin is Union:
        args = [_type_name(a) for a in get_args(hint) if a is not type(None)]
        return f"{args[0]} | null"
    if origin in (list, List):
        return f"list of {_type_name(get_args(hint)[0])}"
    return getattr(hint, "__name__", str(hint))


def _default(f) -> Any:
    if f.default is not MISSING:
        return f.default
    if f.default_factory is not MISSING:  # type: ignore[misc]
        value = f.default_factory()  # type: ignore[misc]
        return value if isinstance(value, (list, dict)) else None
    return None


def describe_schema() -> Dict[str, Any]:
    """
    Published configuration schema.

    Returns
    -------
    schema : dict
        Section name to field name to ``{"type", "default"}``; the top-level
        fields are listed under ``experiment``.
    """
    hints = get_type_hints(ExperimentConfig)
    schema: Dict[str, Any] = {
        "experiment": {
            f.name: {"type": _type_name(hints[f.name]), "default": _default(f)}
            for f in fields(ExperimentConfig)
            if f.name in _TOP_LEVEL
        }
    }
    for name, cls in _SECTIONS.items():
        section_hints = get_type_hints(cls)
        schema[name] = {
            f.name: {"type": _type_name(section_hints[f.name]), "default": _default(f)} for f in fields(cls)
        }
    schema["generator"]["dataset"] = {"type": "str | null", "default": None}
    return schema
