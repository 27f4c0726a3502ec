"""Command-line interface: calibrate, run, sweep, and report subcommands.

Exit codes: 0 success, 1 configuration error, 2 calibration failure,
3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .errors import CalibrationError, SimulationError
from .harness import (Calibration, build_workspace, calibrate_thresholds,
                      check_numerology, load_results, report, save_results, sweep)


def _parse_floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x]


def _parse_ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def _add_common(parser: argparse.ArgumentParser, with_grid=True):
    parser.add_argument("--config", type=Path, default=None, help="YAML config file")
    parser.add_argument("--seed", type=int, default=None, help="master RNG seed")
    parser.add_argument("--workers", type=int, default=1, help="worker processes")
    if with_grid:
        parser.add_argument("--gamma", type=_parse_floats, default=None,
                            help="comma-separated sensing power fractions")
        parser.add_argument("--nscan", type=_parse_ints, default=None,
                            help="comma-separated scan-window lengths")
        parser.add_argument("--trials", type=int, default=None,
                            help="target-present trials per grid point")
        parser.add_argument("--pfa", type=float, default=None,
                            help="false-alarm probability target")
    parser.add_argument("--out", type=Path, default=Path("out"),
                        help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ristbd",
        description="Monte Carlo simulator for a RIS-aided sensing and "
                    "communication base station with track-before-detect",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_cal = sub.add_parser("calibrate", help="calibrate thresholds and write them to a file")
    _add_common(p_cal)
    p_cal.add_argument("--h0-scans", type=int, default=None,
                       help="no-target scans for the plot-rate calibration")

    p_run = sub.add_parser("run", help="run one grid point and print its metrics")
    _add_common(p_run)
    p_run.add_argument("--calibration", type=Path, default=None,
                       help="calibration JSON from the calibrate subcommand")

    p_sweep = sub.add_parser("sweep", help="run the full grid and write CSV outputs")
    _add_common(p_sweep)
    p_sweep.add_argument("--calibration", type=Path, default=None)
    p_sweep.add_argument("--no-figures", action="store_true",
                         help="skip matplotlib figure rendering")

    p_rep = sub.add_parser("report", help="re-emit outputs from saved sweep results")
    p_rep.add_argument("--results", type=Path, required=True,
                       help="results.json written by the sweep subcommand")
    p_rep.add_argument("--out", type=Path, default=Path("out"))
    p_rep.add_argument("--no-figures", action="store_true")
    return parser


def _load_cfg(args):
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "pfa", None) is not None:
        overrides["p_fa"] = args.pfa
    return load_config(args.config, overrides)


def _prepare(args, cfg, gammas, n_scans):
    check_numerology(cfg)
    ws = build_workspace(cfg, gammas=gammas)
    cal_path = getattr(args, "calibration", None)
    if cal_path is not None:
        cal = Calibration.from_dict(json.loads(Path(cal_path).read_text()))
        missing = [n for n in n_scans if n not in cal.tbd_thresholds]
        if missing:
            raise CalibrationError(f"calibration file lacks n_scan values {missing}")
    else:
        cal = calibrate_thresholds(ws, n_scan_set=n_scans, workers=args.workers)
    return ws, cal


def cmd_calibrate(args) -> int:
    cfg = _load_cfg(args)
    check_numerology(cfg)
    ws = build_workspace(cfg, gammas=args.gamma)
    cal = calibrate_thresholds(ws, n_scan_set=args.nscan, h0_scans=args.h0_scans,
                               workers=args.workers)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "calibration.json"
    path.write_text(json.dumps(cal.to_dict(), indent=2, sort_keys=True))
    print(f"plot threshold: {cal.plot_threshold:.2f} "
          f"({cal.plot_rate:.2f} plots/scan over {cal.plot_cal_scans} scans)")
    for n_scan, eta in sorted(cal.tbd_thresholds.items()):
        print(f"tbd threshold (n_scan={n_scan}): {eta:.2f}")
    print(f"target cross-section: {cal.rcs_m2:.4g} m^2")
    print(f"wrote {path}")
    return 0


def cmd_run(args) -> int:
    cfg = _load_cfg(args)
    gammas = args.gamma if args.gamma is not None else [0.5]
    n_scans = args.nscan if args.nscan is not None else [1]
    if len(gammas) != 1 or len(n_scans) != 1:
        raise ConfigError("run expects exactly one --gamma and one --nscan value")
    ws, cal = _prepare(args, cfg, gammas, n_scans)
    result = sweep(ws, cal, gammas=gammas, n_scans=n_scans, trials=args.trials,
                   workers=args.workers)
    pt = result.points[0]
    se = result.se_by_gamma[gammas[0]]
    print(f"gamma={pt.gamma} n_scan={pt.n_scan} trials={pt.trials}")
    print(f"p_d={pt.p_d:.4f} (detected {pt.detected}, gated {pt.gated})")
    print(f"rmse={pt.rmse_m:.2f} m")
    print("se percentiles (bit/s/Hz): "
          + ", ".join(f"{p}%={v:.3f}" for p, v in sorted(se.items())))
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_cfg(args)
    gammas = args.gamma if args.gamma is not None else list(cfg.gamma_set)
    n_scans = args.nscan if args.nscan is not None else list(cfg.n_scan_set)
    ws, cal = _prepare(args, cfg, gammas, n_scans)
    result = sweep(ws, cal, gammas=gammas, n_scans=n_scans, trials=args.trials,
                   workers=args.workers)
    args.out.mkdir(parents=True, exist_ok=True)
    save_results(result, args.out / "results.json")
    paths = report(result, args.out, figures=not args.no_figures)
    for p in paths:
        print(f"wrote {p}")
    print(f"wrote {args.out / 'results.json'}")
    return 0


def cmd_report(args) -> int:
    result = load_results(args.results)
    paths = report(result, args.out, figures=not args.no_figures)
    for p in paths:
        print(f"wrote {p}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "calibrate": cmd_calibrate,
        "run": cmd_run,
        "sweep": cmd_sweep,
        "report": cmd_report,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except CalibrationError as exc:
        print(f"calibration failure: {exc}", file=sys.stderr)
        return 2
    except (SimulationError, OSError, ValueError, KeyError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
