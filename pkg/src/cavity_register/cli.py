"""Command-line front end.

    cavreg run <experiment> [--config PATH] [--seed N] [--out DIR]
                            [--trials N] [--clicks N] [--workers N]
    cavreg calibrate <target> [--config PATH] [--out FILE] [--trials N] [--seed N]
    cavreg validate --config PATH

Exit codes: 0 success; 1 an experiment finished but missed its built-in
threshold; 2 invalid configuration or arguments; 3 a required calibrated
parameter is absent. CAVREG_OUT overrides the default output directory.
"""

from __future__ import annotations

import argparse
import os
import sys

import yaml

from .calibrate import (calibrate_envelope, calibrate_move_survival,
                        readout_overhead_for_fidelity)
from .config import CalibrationMissingError, ConfigError, load_config
from .experiments import EXPERIMENTS, run_experiment

EXIT_OK = 0
EXIT_THRESHOLD = 1
EXIT_CONFIG = 2
EXIT_CALIBRATION = 3

CALIBRATE_TARGETS = ("envelope", "readout-overhead", "move-survival", "all")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cavreg",
                                     description="cavity register simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment and write its tables")
    run_p.add_argument("experiment", choices=sorted(EXPERIMENTS))
    run_p.add_argument("--config", default=None, help="YAML config (default: shipped)")
    run_p.add_argument("--seed", type=int, default=None, help="override master seed")
    run_p.add_argument("--out", default=None, help="output directory")
    run_p.add_argument("--trials", type=int, default=None)
    run_p.add_argument("--clicks", type=int, default=None)
    run_p.add_argument("--workers", type=int, default=1)

    cal_p = sub.add_parser("calibrate", help="recompute a calibrated parameter")
    cal_p.add_argument("target", choices=CALIBRATE_TARGETS)
    cal_p.add_argument("--config", default=None)
    cal_p.add_argument("--out", default="calibration.yaml")
    cal_p.add_argument("--trials", type=int, default=20000)
    cal_p.add_argument("--seed", type=int, default=20240)
    cal_p.add_argument("--workers", type=int, default=1)

    val_p = sub.add_parser("validate", help="validate a config file")
    val_p.add_argument("--config", required=True)
    return parser


def _cmd_run(args) -> int:
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    config = config.replace_run(master_seed=args.seed, trials=args.trials,
                                clicks_per_basis=args.clicks)
    out_dir = args.out or os.environ.get("CAVREG_OUT") or "out"
    try:
        manifest = run_experiment(args.experiment, config, out_dir,
                                  n_workers=args.workers)
    except CalibrationMissingError as exc:
        print(f"calibration missing: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    for name in sorted(manifest.outputs):
        print(f"wrote {out_dir}/{name}")
    for key in sorted(manifest.results):
        print(f"  {key} = {manifest.results[key]}")
    if not manifest.thresholds_ok:
        print(f"{args.experiment}: threshold check FAILED", file=sys.stderr)
        return EXIT_THRESHOLD
    print(f"{args.experiment}: ok")
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    doc: dict = {}
    if args.target in ("envelope", "all"):
        env = calibrate_envelope()
        doc.update({"envelope_rise_s": env.rise_s, "envelope_fall_s": env.fall_s,
                    "chirp_only_fidelity": env.chirp_only_fidelity,
                    "window_acceptance": env.window_acceptance})
        print(f"envelope: rise {env.rise_s:.6e} s, fall {env.fall_s:.6e} s, "
              f"chirp-only fidelity {env.chirp_only_fidelity:.4f}")
    if args.target in ("readout-overhead", "all"):
        oh = readout_overhead_for_fidelity()
        doc.update({"readout_overhead_s": oh.readout_overhead_s,
                    "single_atom_fidelity": oh.single_atom_fidelity})
        print(f"readout overhead: {oh.readout_overhead_s:.6e} s "
              f"(single-atom fidelity {oh.single_atom_fidelity:.4f})")
    if args.target in ("move-survival", "all"):
        cal = calibrate_move_survival(grid=config.grid(), config=config.prep(),
                                      trials=args.trials, seed=args.seed,
                                      n_workers=args.workers)
        doc.update({"per_move_survival": cal.per_move_survival,
                    "success_two_atoms": cal.success_two,
                    "success_six_atoms": cal.success_six})
        print(f"per-move survival: {cal.per_move_survival:.3f} "
              f"(success 2/6 atoms: {cal.success_two:.3f}/{cal.success_six:.3f})")
    with open(args.out, "w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, sort_keys=True)
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    try:
        load_config(args.config)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{args.config}: valid")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "calibrate":
        return _cmd_calibrate(args)
    return _cmd_validate(args)


if __name__ == "__main__":
    sys.exit(main())
