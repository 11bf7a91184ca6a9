"""Command-line pipeline: predict | simulate | correlate | scan | fringe.

Every command is a pure function of (config file, flags, seed); outputs are
CSV/JSON plus raw tag files, with a run manifest written atomically after
success.  Exit codes: 0 ok, 2 usage, 3 config, 4 data format, 5 numerical.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__, contrast, correlator, fringe as fringe_mod
from .campaign import run_campaign, simulate_fringe_scan
from .configfile import ConfigError, config_hash, load_config
from .correlator import CorrelatorError
from .dicke import EngineError
from .geometry import direction_for_slit
from .params import ExperimentConfig, ParameterError, default_config
from .streams import StreamFormatError, read_stream

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_FORMAT = 4
EXIT_NUMERICAL = 5


class UsageError(ValueError):
    pass


def _resolve_seed(args) -> int:
    env = os.environ.get("IHBT_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise UsageError(f"IHBT_SEED must be an integer, got {env!r}") from exc
    return args.seed


def _load(args) -> ExperimentConfig:
    if args.config is None:
        return default_config()
    return load_config(args.config)


def _parse_scan(text: str) -> np.ndarray:
    """start:stop:step in mm -> positions in metres."""
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"scan range must be start:stop:step (mm), got {text!r}")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError as exc:
        raise UsageError(f"bad scan range {text!r}") from exc
    if step <= 0 or stop < start:
        raise UsageError(f"empty scan range {text!r}")
    return np.arange(start, stop + step / 2, step) * 1e-3


def _parse_positions(text: str) -> list[float]:
    try:
        return [float(p) * 1e-3 for p in text.replace(",", " ").split()]
    except ValueError as exc:
        raise UsageError(f"bad positions list {text!r}") from exc


def _write_manifest(out_dir: Path, command: str, config: ExperimentConfig,
                    seed: int, outputs: list, started: float) -> None:
    manifest = {
        "command": command,
        "config_hash": config_hash(config),
        "seed": int(seed),
        "tool_version": __version__,
        "started_unix": started,
        "finished_unix": time.time(),
        "outputs": sorted(str(o) for o in outputs),
    }
    fd, tmp = tempfile.mkstemp(dir=out_dir, suffix=".manifest.tmp")
    with os.fdopen(fd, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, out_dir / "manifest.json")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_predict(args) -> int:
    config = _load(args)
    positions = _parse_scan(args.scan)
    out = _out_dir(args)
    outputs = []
    started = time.time()
    ideal = contrast.ideal_curve(config, positions)
    deltas = np.array([direction_for_slit(config, x).phase for x in positions])
    if args.ideal:
        curve = contrast.PredictionCurve(
            slit_positions=positions, deltas=deltas, g2_values=ideal,
            band_low=ideal, band_high=ideal)
        series = {"ideal": ideal.tolist()}
    else:
        vis_only = contrast.visibility_curve(config, positions)
        budget = contrast.budget_from_config(config)
        curve = contrast.compose_prediction(config, budget, positions)
        series = {"ideal": ideal.tolist(), "visibility_only": vis_only.tolist()}
    path_csv = out / "prediction.csv"
    contrast.prediction_to_csv(curve, path_csv)
    outputs.append(path_csv)
    path_json = out / "prediction.json"
    payload = {
        "slit_positions_m": curve.slit_positions.tolist(),
        "delta_rad": curve.deltas.tolist(),
        "g2": curve.g2_values.tolist(),
        "band_low": curve.band_low.tolist(),
        "band_high": curve.band_high.tolist(),
        "series": series,
    }
    path_json.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    outputs.append(path_json)
    _write_manifest(out, "predict", config, 0, outputs, started)
    print(f"g2 extremes over scan: max={curve.g2_values.max():.4f} "
          f"min={curve.g2_values.min():.4f}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = _load(args)
    seed = _resolve_seed(args)
    out = _out_dir(args)
    started = time.time()
    results = run_campaign(config, [args.position * 1e-3], args.duration, seed,
                           out_dir=out, threads=args.threads,
                           include_shelving=args.shelving)
    res = results[0]
    _write_manifest(out, "simulate", config, seed, res.files, started)
    print(f"position {args.position} mm -> delta {res.delta:.4f} rad; "
          f"{len(res.stream_a)} + {len(res.stream_b)} detected tags")
    return EXIT_OK


def cmd_correlate(args) -> int:
    stream_a = read_stream(args.stream_a)
    stream_b = read_stream(args.stream_b)
    out = _out_dir(args)
    started = time.time()
    hist = correlator.correlate(stream_a, stream_b, args.bin * 1e-9,
                                args.window * 1e-9)
    if args.oracle:
        reference = correlator.correlate_bruteforce(
            stream_a, stream_b, args.bin * 1e-9, args.window * 1e-9)
        if not np.array_equal(hist.bins, reference.bins):
            print("oracle mismatch: streaming and brute-force histograms differ",
                  file=sys.stderr)
            return EXIT_NUMERICAL
        print("oracle check passed: histograms identical")
    norm = correlator.normalize(hist)
    path_csv = out / "histogram.csv"
    correlator.histogram_to_csv(norm, path_csv)
    g0, g0_err = correlator.g2_zero_estimate(norm)
    payload = {
        "bin_width_s": hist.bin_width,
        "window_s": hist.window,
        "singles_a": hist.singles_a,
        "singles_b": hist.singles_b,
        "duration_s": hist.duration,
        "g2_zero": g0,
        "g2_zero_err": g0_err,
    }
    path_json = out / "histogram.json"
    path_json.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    config = default_config()
    _write_manifest(out, "correlate", config, 0, [path_csv, path_json], started)
    print(f"g2(0) = {g0:.4f} +- {g0_err:.4f}")
    return EXIT_OK


def cmd_scan(args) -> int:
    config = _load(args)
    seed = _resolve_seed(args)
    positions = _parse_positions(args.positions)
    if not positions:
        raise UsageError("scan needs at least one position")
    if args.duration <= 0:
        raise UsageError("per-position duration must be positive")
    out = _out_dir(args)
    started = time.time()
    results = run_campaign(config, positions, args.duration, seed, out_dir=out,
                           threads=args.threads, include_shelving=args.shelving)
    budget = contrast.budget_from_config(config)
    predicted = contrast.compose_prediction(config, budget, positions)
    rows = []
    for res, pred, lo, hi in zip(results, predicted.g2_values,
                                 predicted.band_low, predicted.band_high):
        hist = correlator.correlate(res.stream_a, res.stream_b,
                                    config.detectors.bin_width,
                                    config.detectors.correlation_window)
        g0, g0_err = correlator.g2_zero_estimate(correlator.normalize(hist))
        rows.append((res.slit_position * 1e3, res.delta, g0, g0_err, pred, lo, hi))
        print(f"x = {res.slit_position * 1e3:+.3f} mm  delta = {res.delta:+.3f}  "
              f"g2(0) = {g0:.3f} +- {g0_err:.3f}  predicted {pred:.3f}")
    path_csv = out / "scan_summary.csv"
    np.savetxt(path_csv, np.array(rows), delimiter=",", comments="", fmt="%.9g",
               header="slit_mm,delta_rad,g2,g2_err,predicted,band_low,band_high")
    outputs = [path_csv] + [f for res in results for f in res.files]
    _write_manifest(out, "scan", config, seed, outputs, started)
    return EXIT_OK


def cmd_fringe(args) -> int:
    config = _load(args)
    seed = _resolve_seed(args)
    positions = _parse_positions(args.positions)
    if len(positions) < 5:
        raise UsageError(f"fringe scan needs at least 5 positions, got {len(positions)}")
    out = _out_dir(args)
    started = time.time()
    xs, rates = simulate_fringe_scan(config, positions, args.integration, seed)
    scan = fringe_mod.fringe_fit(xs, rates)
    path = out / "fringe.json"
    scan.to_json(path)
    _write_manifest(out, "fringe", config, seed, [path], started)
    print(f"fringe period L = {scan.fitted_period * 1e3:.4f} "
          f"+- {scan.fit_errors[0] * 1e3:.4f} mm; "
          f"offset x0 = {scan.fitted_offset * 1e3:.4f} mm")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ionhbt",
        description="Direction-dependent photon statistics of a two-ion crystal: "
                    "predictions, synthetic time-tag streams, correlation analysis.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_seed=True):
        p.add_argument("--config", help="experiment config file (INI)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--threads", type=int, default=1)
        if needs_seed:
            p.add_argument("--seed", type=int, default=1,
                           help="master seed (IHBT_SEED overrides)")

    p = sub.add_parser("predict", help="model prediction over a slit scan")
    common(p, needs_seed=False)
    p.add_argument("--scan", required=True, help="start:stop:step in mm")
    p.add_argument("--ideal", action="store_true",
                   help="immobile-emitter curve only (no degradations)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("simulate", help="synthetic time-tag streams at one position")
    common(p)
    p.add_argument("--position", type=float, required=True, help="slit position, mm")
    p.add_argument("--duration", type=float, required=True, help="seconds")
    p.add_argument("--shelving", action="store_true",
                   help="include metastable shelving in the trajectory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("correlate", help="histogram two tag files")
    p.add_argument("stream_a")
    p.add_argument("stream_b")
    p.add_argument("--out", required=True)
    p.add_argument("--bin", type=float, default=2.0, help="bin width, ns")
    p.add_argument("--window", type=float, default=600.0, help="window, ns")
    p.add_argument("--oracle", action="store_true",
                   help="verify against the O(n^2) reference")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("scan", help="campaign over positions + summary table")
    common(p)
    p.add_argument("--positions", required=True, help="comma-separated mm values")
    p.add_argument("--duration", type=float, required=True,
                   help="seconds per position")
    p.add_argument("--shelving", action="store_true")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("fringe", help="intensity scan + sinusoidal fit")
    common(p)
    p.add_argument("--positions", required=True, help="comma-separated mm values")
    p.add_argument("--integration", type=float, default=60.0,
                   help="integration time per position, s")
    p.set_defaults(func=cmd_fringe)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StreamFormatError, FileNotFoundError) as exc:
        print(f"data format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (EngineError, CorrelatorError, contrast.QuadratureError,
            fringe_mod.FringeFitError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
