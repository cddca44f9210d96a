"""Command line entry point `information-tracker`.

Subcommands
-----------
separation
    Overlap, separation and droplet density of two Gaussians (printed as JSON)
bench-lidar
    Monte Carlo comparison of the Information Tracker and the Gaussian MAP baseline on the LiDAR scenario
track-csv
    Filter a tick series (CSV file or synthetic wick series) with both estimators
tomo
    Linear inversion and bounded reconstruction of a single qubit

Exit codes are 0 (success), 1 (invalid values or I/O errors) and 2 (usage errors).
All outputs of a command are computed before the first file is written, and every file is written to a temporary
sibling that is then renamed.
Each run that writes files also writes a `<command>_manifest.json` that echoes the resolved configuration.
"""
import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from joblib import Memory

from information_tracker import __version__
from information_tracker.consts import get_output_folder
from information_tracker.geometry import (
    GaussianState,
    GeometryParams,
    droplet_density,
    gaussian_overlap,
    delta_separation,
    within_boundary,
)
from information_tracker.lidar_bench import (
    LidarScenarioConfig,
    results_table,
    run_trials,
    summarize,
    trace_frame,
)
from information_tracker.tick_filter import (
    WickConfig,
    filter_series,
    generate_wick_series,
    ingest_csv,
    tick_tracker_config,
    to_frame,
    turnover,
)
from information_tracker.tomography import (
    DensityMatrix,
    PauliExpectations,
    reconstruction_report,
    simulate_measurements,
)
from information_tracker.tracker import TrackerConfig

logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class RunManifest:
    """Record of one CLI run. `outputs` are file names relative to the output folder."""

    command: str
    config_echo: dict
    master_seed: int
    artifact_version: str
    outputs: List[str]

    def to_json(self) -> str:
        return _to_json(dataclasses.asdict(self))


def _to_json(payload) -> str:
    return json.dumps(payload, indent=4, sort_keys=True) + "\n"


def _write_all(folder: Path, files: Dict[str, str]):
    """Write all files or none of them.

    Every file is first written to `<name>.tmp` and only renamed once all temporary files exist.
    If anything fails, the temporary files and the files renamed so far are removed.
    """
    pending = {}
    renamed = []
    try:
        for name, content in files.items():
            tmp_path = folder / (name + ".tmp")
            pending[tmp_path] = folder / name
            with open(tmp_path, "w", encoding="utf-8", newline="") as f:
                f.write(content)
        for tmp_path, path in list(pending.items()):
            os.replace(tmp_path, path)
            del pending[tmp_path]
            renamed.append(path)
    except OSError:
        for path in [*pending, *renamed]:
            if path.is_file():
                path.unlink()
        raise


def _write_outputs(
    out_dir: Optional[str], command: str, files: Dict[str, str], config_echo: dict, master_seed: int
) -> Path:
    """Write all files and the manifest of a run into the output folder."""
    folder = get_output_folder(out_dir)
    folder.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        command=command,
        config_echo=config_echo,
        master_seed=master_seed,
        artifact_version=__version__,
        outputs=sorted(files),
    )
    files = {**files, "{}_manifest.json".format(command.replace("-", "_")): manifest.to_json()}
    _write_all(folder, files)
    for name in files:
        logger.info("Wrote %s", folder / name)
    return folder


# Argument types


def _delta(value: str) -> float:
    value = float(value)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError("delta must be in the open interval (0, 1), got {}".format(value))
    return value


def _nu(value: str) -> float:
    value = float(value)
    if not 0 < value <= 1:
        raise argparse.ArgumentTypeError("nu must be in (0, 1], got {}".format(value))
    return value


def _positive(value: str) -> float:
    value = float(value)
    if not value > 0 or not np.isfinite(value):
        raise argparse.ArgumentTypeError("expected a finite positive number, got {}".format(value))
    return value


def _regime(value: str):
    try:
        start, level = value.split(":")
        return int(start), float(level)
    except ValueError as e:
        raise argparse.ArgumentTypeError("expected START:LEVEL, got {!r}".format(value)) from e


def _add_geometry_args(parser: argparse.ArgumentParser, alpha: float = 1.0):
    parser.add_argument("--delta", type=_delta, default=0.5, help="Separation order in (0, 1)")
    parser.add_argument("--nu", type=_nu, default=0.5, help="Droplet deformation in (0, 1]")
    parser.add_argument("--alpha", type=_positive, default=alpha, help="Strength of the separation constraint")


def _geometry(args) -> GeometryParams:
    return GeometryParams(delta=args.delta, nu=args.nu, alpha=args.alpha)


def _gaussian(mean: Sequence[float], cov: Sequence[float], name: str) -> GaussianState:
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    dim = len(mean)
    if cov.size != dim * dim:
        raise ValueError("`{}` needs {} covariance entries for a {}D mean, got {}.".format(name, dim * dim, dim, cov.size))
    return GaussianState(mean, cov.reshape(dim, dim))


# Commands


def cmd_separation(args) -> int:
    params = _geometry(args)
    p = _gaussian(args.mean, args.cov, "cov")
    p0 = _gaussian(args.mean0, args.cov0, "cov0")
    overlap = gaussian_overlap(p, p0, params.delta)
    separation = delta_separation(p, p0, params.delta)
    report = {
        "A": overlap,
        "I": separation,
        "inside": within_boundary(separation, params),
        "pi": droplet_density(separation, params),
    }
    output = _to_json(report)
    if args.out_dir is not None:
        echo = {"p": {"mean": args.mean, "cov": args.cov}, "p0": {"mean": args.mean0, "cov": args.cov0}}
        echo["geometry"] = dataclasses.asdict(params)
        _write_outputs(args.out_dir, "separation", {"separation.json": output}, echo, 0)
    sys.stdout.write(output)
    return 0


def cmd_bench_lidar(args) -> int:
    scenario = LidarScenarioConfig(
        dt=args.dt,
        n_frames=args.n_frames,
        sigma_sensor=args.sigma_sensor,
        ghost_offset=tuple(args.ghost_offset),
        sigma_ghost=args.sigma_ghost,
        n_valid=args.n_valid,
        n_ghost=args.n_ghost,
        process_noise_intensity=args.process_noise_intensity,
        estimator_noise_intensity=args.estimator_noise_intensity,
        forward_speed=args.forward_speed,
        maneuver_amplitude=args.maneuver_amplitude,
        seed=args.seed,
    )
    tracker_config = TrackerConfig(
        geometry=_geometry(args),
        r_min=args.r_min * np.eye(3),
        max_iterations=args.max_iterations,
        convergence_tol=args.convergence_tol,
    )
    if not 0 <= args.trace_trial < args.trials:
        raise ValueError("`--trace-trial` must be smaller than `--trials` ({}).".format(args.trials))
    memory = Memory(args.cache_dir, verbose=0) if args.cache_dir else None

    results = run_trials(scenario, tracker_config, n_trials=args.trials, n_jobs=args.n_jobs, memory=memory)
    tracker_summary = summarize([r[0] for r in results])
    baseline_summary = summarize([r[1] for r in results])
    summary = {
        "tracker": tracker_summary.to_dict(),
        "baseline": baseline_summary.to_dict(),
        "max_ghost_weight": max(r[0].max_ghost_weight for r in results),
    }
    trace = trace_frame(scenario, results, trials=[args.trace_trial])
    files = {
        "lidar_summary.json": _to_json(summary),
        "lidar_trace.csv": trace.to_csv(index=False),
    }
    echo = {
        "scenario": dataclasses.asdict(scenario),
        "tracker": {
            "geometry": dataclasses.asdict(tracker_config.geometry),
            "r_min": tracker_config.r_min.tolist(),
            "max_iterations": tracker_config.max_iterations,
            "convergence_tol": tracker_config.convergence_tol,
        },
        "trials": args.trials,
        "trace_trial": args.trace_trial,
    }
    _write_outputs(args.out_dir, "bench-lidar", files, echo, scenario.seed)
    print(results_table(tracker_summary, baseline_summary).to_string(float_format="{:.3f}".format))
    return 0


def cmd_track_csv(args) -> int:
    if args.no_regimes:
        regimes = ()
    elif args.regime:
        regimes = tuple(args.regime)
    else:
        regimes = WickConfig().drift_regimes
    wick_config = None
    if args.input is not None:
        series = ingest_csv(args.input)
    else:
        wick_config = WickConfig(
            n_ticks=args.n_ticks,
            base_price=args.base_price,
            drift_regimes=regimes,
            wick_probability=args.wick_probability,
            wick_magnitude=args.wick_magnitude,
            micro_noise=args.micro_noise,
            seed=args.seed,
        )
        series = generate_wick_series(wick_config)
    tracker_config = tick_tracker_config(_geometry(args), r_min=args.r_min)
    filtered = filter_series(series, tracker_config, q_intensity=args.q)

    metrics = {
        "tracker_turnover": turnover(filtered.tracker),
        "baseline_turnover": turnover(filtered.baseline),
        "n_truncated": int(filtered.truncated.sum()),
    }
    files = {
        "ticks_filtered.csv": to_frame(series, filtered).to_csv(index=False),
        "ticks_metrics.json": _to_json(metrics),
    }
    echo = {
        "input": str(args.input) if args.input is not None else None,
        "synthetic": dataclasses.asdict(wick_config) if wick_config else None,
        "geometry": dataclasses.asdict(tracker_config.geometry),
        "r_min": args.r_min,
        "q": args.q,
    }
    _write_outputs(args.out_dir, "track-csv", files, echo, wick_config.seed if wick_config else 0)
    sys.stdout.write(_to_json(metrics))
    return 0


def cmd_tomo(args) -> int:
    params = _geometry(args)
    explicit = (args.x, args.y, args.z)
    if any(v is not None for v in explicit):
        measurements = PauliExpectations(*(0.0 if v is None else v for v in explicit))
        seed = None
    else:
        rho_true = DensityMatrix.from_bloch(args.true_bloch)
        measurements = simulate_measurements(rho_true, args.sigma, np.random.default_rng(args.seed))
        seed = args.seed
    output = _to_json(reconstruction_report(measurements, params, seed=seed))
    if args.out_dir is not None:
        echo = {
            "measurements": dataclasses.asdict(measurements),
            "true_bloch": None if seed is None else list(args.true_bloch),
            "geometry": dataclasses.asdict(params),
        }
        _write_outputs(args.out_dir, "tomo", {"tomo.json": output}, echo, seed or 0)
    sys.stdout.write(output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="information-tracker", description="Bounded information geometry tracking benchmarks"
    )
    parser.add_argument("--version", action="version", version="%(prog)s {}".format(__version__))
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG logging")
    subparsers = parser.add_subparsers(dest="command", required=True)

    sep = subparsers.add_parser("separation", help="Separation between two Gaussians")
    sep.add_argument("--mean", type=float, nargs="+", required=True, help="Mean of p")
    sep.add_argument("--cov", type=float, nargs="+", required=True, help="Covariance of p (row major)")
    sep.add_argument("--mean0", type=float, nargs="+", required=True, help="Mean of the reference p0")
    sep.add_argument("--cov0", type=float, nargs="+", required=True, help="Covariance of p0 (row major)")
    _add_geometry_args(sep)
    sep.add_argument("--out-dir", default=None, help="Also write the report and a manifest to this folder")
    sep.set_defaults(func=cmd_separation)

    defaults = LidarScenarioConfig()
    lidar = subparsers.add_parser("bench-lidar", help="LiDAR Monte Carlo benchmark")
    lidar.add_argument("--dt", type=_positive, default=defaults.dt)
    lidar.add_argument("--n-frames", type=int, default=defaults.n_frames)
    lidar.add_argument("--sigma-sensor", type=_positive, default=defaults.sigma_sensor)
    lidar.add_argument("--ghost-offset", type=float, nargs=3, default=list(defaults.ghost_offset))
    lidar.add_argument("--sigma-ghost", type=_positive, default=defaults.sigma_ghost)
    lidar.add_argument("--n-valid", type=int, default=defaults.n_valid)
    lidar.add_argument("--n-ghost", type=int, default=defaults.n_ghost)
    lidar.add_argument("--process-noise-intensity", type=float, default=defaults.process_noise_intensity)
    lidar.add_argument(
        "--estimator-noise-intensity",
        type=float,
        default=defaults.estimator_noise_intensity,
        help="Process noise intensity of the estimators in m^2/s^3",
    )
    lidar.add_argument("--forward-speed", type=float, default=defaults.forward_speed)
    lidar.add_argument("--maneuver-amplitude", type=float, default=defaults.maneuver_amplitude)
    lidar.add_argument("--seed", type=int, default=defaults.seed)
    _add_geometry_args(lidar)
    lidar.add_argument("--r-min", type=float, default=0.25, help="Covariance floor (times identity) in m^2")
    lidar.add_argument("--max-iterations", type=int, default=50)
    lidar.add_argument("--convergence-tol", type=_positive, default=1e-6)
    lidar.add_argument("--trials", type=int, default=1000)
    lidar.add_argument("--trace-trial", type=int, default=0, help="Trial written to the per frame trace")
    lidar.add_argument("--out-dir", default=None)
    lidar.add_argument("--n-jobs", type=int, default=1)
    lidar.add_argument("--cache-dir", default=None, help="joblib cache for already computed trials")
    lidar.set_defaults(func=cmd_bench_lidar)

    wick_defaults = WickConfig()
    ticks = subparsers.add_parser("track-csv", help="Filter a tick series")
    source = ticks.add_mutually_exclusive_group(required=True)
    source.add_argument("--input", default=None, help="CSV file with the columns timestamp,price")
    source.add_argument("--synthetic", action="store_true", help="Use a synthetic wick series")
    ticks.add_argument("--n-ticks", type=int, default=wick_defaults.n_ticks)
    ticks.add_argument("--base-price", type=_positive, default=wick_defaults.base_price)
    ticks.add_argument("--regime", type=_regime, action="append", default=None, help="START:LEVEL, repeatable")
    ticks.add_argument("--no-regimes", action="store_true", help="Keep the level constant")
    ticks.add_argument("--wick-probability", type=float, default=wick_defaults.wick_probability)
    ticks.add_argument("--wick-magnitude", type=float, default=wick_defaults.wick_magnitude)
    ticks.add_argument("--micro-noise", type=float, default=wick_defaults.micro_noise)
    ticks.add_argument("--seed", type=int, default=wick_defaults.seed)
    _add_geometry_args(ticks)
    ticks.add_argument("--q", type=float, default=2.5e-7, help="Process noise intensity of the log-price")
    ticks.add_argument("--r-min", type=_positive, default=2.5e-7, help="Covariance floor of the log-price")
    ticks.add_argument("--out-dir", default=None)
    ticks.set_defaults(func=cmd_track_csv)

    tomo = subparsers.add_parser("tomo", help="Single qubit reconstruction")
    tomo.add_argument("--x", type=float, default=None)
    tomo.add_argument("--y", type=float, default=None)
    tomo.add_argument("--z", type=float, default=None)
    tomo.add_argument("--sigma", type=float, default=None, help="Simulate measurements with this readout noise")
    tomo.add_argument("--seed", type=int, default=0)
    tomo.add_argument("--true-bloch", type=float, nargs=3, default=[0.0, 0.0, 1.0], help="Simulated true state")
    _add_geometry_args(tomo, alpha=4.0)
    tomo.add_argument("--out-dir", default=None)
    tomo.set_defaults(func=cmd_tomo)
    return parser


def _check_tomo_args(parser: argparse.ArgumentParser, args):
    explicit = any(v is not None for v in (args.x, args.y, args.z))
    if explicit and args.sigma is not None:
        parser.error("--x/--y/--z can not be combined with --sigma")
    if not explicit and args.sigma is None:
        parser.error("tomo requires either --x/--y/--z or --sigma")
    if args.sigma is not None and args.sigma < 0:
        parser.error("--sigma must be non-negative")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "tomo":
        _check_tomo_args(parser, args)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as e:
        print("error: {}".format(e), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
