"""
Command line experiment runner.

Verbs ``simulate``, ``train``, ``eval``, ``generate`` and ``schema``. Every
verb but ``schema`` reads an experiment configuration (``--config``) and
writes into one experiment directory.
"""
import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .basics import make_rng
from .config import ExperimentConfig, config_from_dict, config_to_dict, describe_schema, read_mapping, set_dotted
from .constants import CSV_FLOAT_FORMAT, HELD_OUT_SEED_OFFSET
from .drift import DriftModel, System, TrueDrift, build_drift, load_drift, save_drift
from .errors import ConfigError, MvDriftError, TrainingDivergedError
from .estimate import fp_elbo_score, im_norm_probe, train
from .metrics import (
    append_results,
    drift_mse,
    energy_distance_sq,
    marginal_ecdf_distances,
    marginal_ks,
    terminal_crps,
)
from .simulate import EIGHT_GAUSSIANS, euler_maruyama, generate, time_grid
from .trajio import read_dataset, write_dataset
from .types import EvalGrid, TrajectoryDataset

logger = logging.getLogger(__name__)

CONFIG_FILE = "config.json"
DATASET_FILE = "dataset.csv"
DATASET_FULL_FILE = "dataset_full.csv"
SUMMARY_FILE = "summary.json"
CHECKPOINT_FILE = "checkpoint.json"
REPORT_FILE = "report.json"
METRICS_FILE = "metrics.csv"
SAMPLES_FILE = "samples.csv"
TERMINAL_FILE = "terminal.csv"


def _write_json(path: str, obj: Any) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _prepare(cfg: ExperimentConfig, out: str) -> None:
    os.makedirs(out, exist_ok=True)
    _write_json(os.path.join(out, CONFIG_FILE), config_to_dict(cfg))


def _truth(cfg: ExperimentConfig) -> Optional[TrueDrift]:
    if cfg.generator.system == EIGHT_GAUSSIANS:
        return None
    return TrueDrift(System.parse(cfg.generator.system))


def cmd_simulate(cfg: ExperimentConfig, out: str) -> TrajectoryDataset:
    """
    Simulate the configured generator into `out`.

    Writes dataset.csv (observed rows), dataset_full.csv for irregular data,
    summary.json and the configuration echo.
    """
    _prepare(cfg, out)
    ds = generate(cfg.generator)
    write_dataset(ds, os.path.join(out, DATASET_FILE))
    if ds.mask is not None:
        write_dataset(ds, os.path.join(out, DATASET_FULL_FILE), observed_only=False)
    summary = {
        "N": ds.n_particles,
        "K": ds.n_times,
        "d": ds.dim,
        "seed": cfg.generator.seed,
        "n_observed": int(ds.observed().sum()),
        "metadata": ds.metadata,
    }
    _write_json(os.path.join(out, SUMMARY_FILE), summary)
    logger.info("Simulated %s: N=%d, K=%d, d=%d into %s", cfg.generator.system, ds.n_particles, ds.n_times,
                ds.dim, out)
    return ds


def _training_data(cfg: ExperimentConfig, out: str) -> TrajectoryDataset:
    """Configured dataset file, else the experiment's dataset.csv, simulated first when missing."""
    if cfg.dataset is not None:
        if not os.path.exists(cfg.dataset):
            raise ConfigError(f"dataset {cfg.dataset} does not exist")
        return read_dataset(cfg.dataset, {"sigma": cfg.generator.sigma, "system": cfg.generator.system})
    path = os.path.join(out, DATASET_FILE)
    if not os.path.exists(path):
        cmd_simulate(cfg, out)
    with open(os.path.join(out, SUMMARY_FILE), "r") as f:
        metadata = json.load(f)["metadata"]
    return read_dataset(path, metadata)


def cmd_train(cfg: ExperimentConfig, out: str) -> DriftModel:
    """
    Train the configured architecture and write checkpoint.json and report.json.

    A diverged run still writes its partial report before the error propagates.
    """
    _prepare(cfg, out)
    ds = _training_data(cfg, out)
    model = build_drift(cfg.architecture, seed=cfg.train.seed)
    report_path = os.path.join(out, REPORT_FILE)
    try:
        report = train(model, ds, cfg.train)
    except TrainingDivergedError as err:
        _write_json(report_path, err.report.to_dict())
        raise
    checkpoint = os.path.join(out, CHECKPOINT_FILE)
    save_drift(checkpoint, model, cfg.train.seed, {"estimator": cfg.train.estimator})
    report.checkpoint_path = checkpoint
    _write_json(report_path, report.to_dict())
    logger.info("Wrote %s and %s", checkpoint, report_path)
    return model


def _model(cfg: ExperimentConfig, out: str, checkpoint: Optional[str]):
    """Drift to evaluate: the analytic one when configured, else the checkpoint."""
    if cfg.evaluation.analytic:
        truth = _truth(cfg)
        if truth is None:
            raise ConfigError("the eight-Gaussian target has no analytic drift")
        return truth
    path = checkpoint or os.path.join(out, CHECKPOINT_FILE)
    if not os.path.exists(path):
        raise ConfigError(f"checkpoint {path} does not exist")
    model, _ = load_drift(path, expected=cfg.architecture)
    return model


def _held_out(cfg: ExperimentConfig) -> TrajectoryDataset:
    """Fresh, fully observed, noise-free simulation of the generator."""
    spec = replace(
        cfg.generator,
        seed=cfg.generator.seed + HELD_OUT_SEED_OFFSET,
        n_irregular=None,
        observation_noise=0.0,
    )
    return generate(spec)


def _sample(
    drift,
    cfg: ExperimentConfig,
    times: np.ndarray,
    seed: int,
    sigma: Optional[float] = None,
) -> TrajectoryDataset:
    """Trajectories of the drift from the configured initial law."""
    rng = make_rng(seed)
    n = cfg.evaluation.n_samples
    init = cfg.generator.init_std * rng.standard_normal((n, cfg.architecture.dim))
    if sigma is None:
        sigma = cfg.evaluation.sigma if cfg.evaluation.sigma is not None else cfg.generator.sigma
    truth = _truth(cfg)
    noise_mask = None if truth is None else truth.noise_mask
    return euler_maruyama(drift, init, times, sigma, rng, noise_mask=noise_mask)


def _drift_error(drift, truth: TrueDrift, cfg: ExperimentConfig, held_out: TrajectoryDataset) -> float:
    spec = cfg.evaluation
    picks = np.unique(np.linspace(0, held_out.n_times - 1, spec.eval_times).round().astype(int))
    values = []
    for k in picks:
        cloud = held_out.states[:, k]
        if spec.grid == "cloud":
            grid = EvalGrid.from_cloud(cloud)
        else:
            grid = EvalGrid.lattice(spec.grid_low, spec.grid_high, spec.grid_n, truth.dim)
        values.append(drift_mse(drift, truth, grid, cloud, float(held_out.times[k]), cfg.seed + int(k)))
    return float(np.mean(values))


def evaluate_metrics(drift, cfg: ExperimentConfig) -> Dict[str, float]:
    """
    Configured metrics of a drift against a held-out simulation.

    Distributional metrics compare trajectories simulated under the drift
    with the held-out trajectories on the same grid.
    """
    wanted = cfg.evaluation.metrics
    held_out = _held_out(cfg)
    truth = _truth(cfg)
    results: Dict[str, float] = {}
    if "drift_mse" in wanted:
        if truth is None:
            logger.warning("No analytic drift for %s; skipping drift_mse", cfg.generator.system)
        else:
            results["drift_mse"] = _drift_error(drift, truth, cfg, held_out)
    if {"energy_distance", "crps", "ks", "ecdf"} & set(wanted):
        generated = _sample(drift, cfg, held_out.times, cfg.seed + 1, sigma=cfg.generator.sigma).states
        reference = held_out.states
        if "energy_distance" in wanted:
            results["energy_distance"] = energy_distance_sq(generated[:, -1], reference[:, -1])
        if "crps" in wanted:
            results["crps"] = terminal_crps(generated[:, -1], reference[:, -1])
        if "ks" in wanted:
            results["ks"] = marginal_ks(generated, reference)
        if "ecdf" in wanted:
            ecdf = marginal_ecdf_distances(generated, reference)
            if ecdf is not None:
                results.update({f"ecdf_{k}": v for k, v in vars(ecdf).items()})
    if "fp_elbo" in wanted:
        horizon = float(held_out.times[-1] - held_out.times[0])
        results["fp_elbo"] = fp_elbo_score(
            drift, held_out.states[:, -1], horizon, cfg.train.fp_steps, cfg.train.fp_paths,
            cfg.generator.sigma, cfg.seed,
        )
    if "im_probe" in wanted:
        results["im_probe"] = im_norm_probe(drift, held_out)
    return results


def cmd_eval(cfg: ExperimentConfig, out: str, checkpoint: Optional[str] = None) -> pd.DataFrame:
    """Evaluate a checkpoint (or the analytic drift) and write metrics.csv."""
    _prepare(cfg, out)
    drift = _model(cfg, out, checkpoint)
    results = evaluate_metrics(drift, cfg)
    path = os.path.join(out, METRICS_FILE)
    if os.path.exists(path):
        os.remove(path)
    rows = append_results(path, cfg.name, results, cfg.seed)
    for name, value in results.items():
        logger.info("%s = %.6g", name, value)
    return rows


def cmd_generate(cfg: ExperimentConfig, out: str, checkpoint: Optional[str] = None) -> TrajectoryDataset:
    """
    Simulate `evaluation.n_samples` trajectories under the learned drift.

    Writes samples.csv (full trajectories) and terminal.csv (terminal states).
    """
    _prepare(cfg, out)
    drift = _model(cfg, out, checkpoint)
    horizon = cfg.evaluation.horizon if cfg.evaluation.horizon is not None else cfg.generator.T
    dt = cfg.evaluation.dt if cfg.evaluation.dt is not None else cfg.generator.dt
    samples = _sample(drift, cfg, time_grid(horizon, dt), cfg.seed)
    write_dataset(samples, os.path.join(out, SAMPLES_FILE))
    terminal = pd.DataFrame(samples.states[:, -1], columns=[f"x{j}" for j in range(samples.dim)])
    terminal.to_csv(os.path.join(out, TERMINAL_FILE), index=False, float_format=CSV_FLOAT_FORMAT)
    logger.info("Generated %d trajectories of %d steps into %s", samples.n_particles, samples.n_times - 1, out)
    return samples


COMMANDS = {
    "simulate": lambda cfg, out, checkpoint: cmd_simulate(cfg, out),
    "train": lambda cfg, out, checkpoint: cmd_train(cfg, out),
    "eval": cmd_eval,
    "generate": cmd_generate,
}


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def build_mapping(args: argparse.Namespace, seed: Optional[int] = None) -> Dict[str, Any]:
    """Configuration mapping of the file with the command line overrides applied."""
    mapping = read_mapping(args.config) if args.config else {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        set_dotted(mapping, key.strip(), _parse_value(value))
    if args.system is not None:
        set_dotted(mapping, "generator.system", args.system)
    seed = args.seed if seed is None else seed
    if seed is not None:
        for key in ("seed", "generator.seed", "train.seed"):
            set_dotted(mapping, key, seed)
    return mapping


def run_one(verb: str, mapping: Dict[str, Any], out: Optional[str], checkpoint: Optional[str]) -> Tuple[int, str]:
    """Run one verb; returns the exit code and an error message."""
    try:
        cfg = config_from_dict(mapping)
        COMMANDS[verb](cfg, out or cfg.directory, checkpoint)
    except MvDriftError as err:
        logger.error("%s: %s", type(err).__name__, err)
        return err.exit_code, str(err)
    return 0, ""


def _run_seeds(args: argparse.Namespace) -> int:
    jobs = []
    for seed in args.seeds:
        mapping = build_mapping(args, seed)
        base = args.out or config_from_dict(mapping).directory
        jobs.append((args.verb, mapping, os.path.join(base, f"seed_{seed}"), getattr(args, "checkpoint", None)))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(run_one, *zip(*jobs)))
    else:
        outcomes = [run_one(*job) for job in jobs]
    return max(code for code, _ in outcomes)


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvdrift", description="McKean-Vlasov drift estimation experiments.")
    verbs = parser.add_subparsers(dest="verb", required=True)
    for verb, help_text in (
        ("simulate", "simulate the configured synthetic system"),
        ("train", "train a drift on the experiment dataset"),
        ("eval", "evaluate a checkpoint against held-out data"),
        ("generate", "simulate trajectories under a trained drift"),
    ):
        sub = verbs.add_parser(verb, help=help_text)
        sub.add_argument("--config", help="experiment configuration (JSON)")
        sub.add_argument("--seed", type=int, help="experiment, generator and training seed")
        sub.add_argument("--out", help="experiment directory")
        sub.add_argument("--system", help="synthetic system of the generator")
        sub.add_argument("--set", action="append", metavar="KEY=VALUE",
                         help="override a configuration value, e.g. train.epochs=20")
        sub.add_argument("--seeds", type=int, nargs="+", help="run one job per seed into <out>/seed_<s>")
        sub.add_argument("--jobs", type=int, default=1, help="parallel processes for --seeds")
        if verb in ("eval", "generate"):
            sub.add_argument("--checkpoint", help="checkpoint to load instead of <out>/checkpoint.json")
        sub.add_argument("-v", "--verbose", action="store_true", help="debug logging")
        sub.add_argument("-q", "--quiet", action="store_true", help="warnings only")
    sub = verbs.add_parser("schema", help="print the configuration schema as JSON")
    sub.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub.add_argument("-q", "--quiet", action="store_true", help="warnings only")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_arg_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    if args.verb == "schema":
        json.dump(describe_schema(), sys.stdout, indent=2)
        sys.stdout.write("\n")
        return 0
    try:
        if args.seeds:
            return _run_seeds(args)
        mapping = build_mapping(args)
    except MvDriftError as err:
        logger.error("%s: %s", type(err).__name__, err)
        return err.exit_code
    code, _ = run_one(args.verb, mapping, args.out, getattr(args, "checkpoint", None))
    return code


if __name__ == "__main__":
    raise SystemExit(main())
