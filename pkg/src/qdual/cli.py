"""Command-line entry point: ``qdual run | sweep | converge | classical-demo``."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .classical import harmonic_trajectory, inverted_trajectory, wick_correspondence_check
from .config import load_config
from .errors import ConfigInvalid, QdualError
from .runner import EXIT_ABORT, EXIT_CHECK, EXIT_CONFIG, EXIT_OK, convergence_study, run, sweep


def _out_dir(args, cfg=None):
    if args.out:
        return Path(args.out)
    if cfg is not None and cfg.run.output_dir:
        return cfg.resolve(cfg.run.output_dir)
    return Path(os.environ.get("QDUAL_OUT", "qdual_out"))


def _say(args, text):
    if not args.quiet:
        print(text)


def _load(args):
    try:
        return load_config(args.config), None
    except ConfigInvalid as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return None, EXIT_CONFIG


def cmd_run(args) -> int:
    cfg, code = _load(args)
    if cfg is None:
        return code
    if args.check_only:
        _say(args, "config ok")
        return EXIT_OK
    out = _out_dir(args, cfg)
    rep = run(cfg, out)
    for c in rep.checks:
        _say(args, f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.value:.3e} (tol {c.tolerance:g})")
    _say(args, f"{rep.status} -> {out}")
    if rep.error:
        print(rep.error, file=sys.stderr)
    return rep.exit_code


def cmd_sweep(args) -> int:
    cfg, code = _load(args)
    if cfg is None:
        return code
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    try:
        for v in values:
            cfg.with_value(args.axis, v)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.check_only:
        _say(args, "config ok")
        return EXIT_OK
    out = _out_dir(args, cfg)
    rows = sweep(cfg, args.axis, values, out)
    for r in rows:
        _say(args, f"{args.axis}={r['value']}: {r['status']} (exit {r['exit_code']})")
    codes = [r["exit_code"] for r in rows]
    if all(c == EXIT_OK for c in codes):
        return EXIT_OK
    return EXIT_CHECK


def _read_levels(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or not {"n", "dt"} <= set(rows[0]):
        raise ConfigInvalid(f"{path}: need a header with columns n,dt")
    return [(int(r["n"]), float(r["dt"])) for r in rows]


def cmd_converge(args) -> int:
    cfg, code = _load(args)
    if cfg is None:
        return code
    try:
        levels = _read_levels(args.levels)
    except (OSError, ValueError, ConfigInvalid) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.check_only:
        _say(args, "config ok")
        return EXIT_OK
    out = _out_dir(args, cfg)
    try:
        rows = convergence_study(cfg, levels, out)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except QdualError as exc:
        print(f"halted: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ABORT
    for r in rows:
        _say(args, f"n={r['n']} dt={r['dt']:g} error={r['error']:.3e} order={r['order']:.2f}")
    return EXIT_OK


def cmd_classical_demo(args) -> int:
    if not (args.omega > 0 and args.m > 0 and args.samples >= 2):
        print("config error: omega and m must be positive and samples >= 2", file=sys.stderr)
        return EXIT_CONFIG
    if args.check_only:
        _say(args, "config ok")
        return EXIT_OK
    t = np.linspace(0.0, args.t_max, args.samples)
    qh, ph = harmonic_trajectory(args.q0, args.p0, args.omega, args.m, t)
    qi, pi = inverted_trajectory(args.q0, args.p0, args.omega, args.m, t)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "classical.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "q_harmonic", "p_harmonic", "q_inverted", "p_inverted"])
        for row in zip(t, qh, ph, qi, pi):
            w.writerow([format(float(c), ".17g") for c in row])
    dev = max(wick_correspondence_check(args.q0, args.p0, args.omega, args.m, tt)["max_deviation"] for tt in t)
    report = {"substitution_max_deviation": dev, "passed": bool(dev <= 1e-12)}
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    _say(args, f"substitution deviation {dev:.3e} -> {out}")
    return EXIT_OK if report["passed"] else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qdual", description="Modular Schroedinger and diffusion dualities.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="INI run configuration")
        sp.add_argument("--out", default=None, help="output directory (default: config, then $QDUAL_OUT)")
        sp.add_argument("--quiet", action="store_true")
        sp.add_argument("--check-only", action="store_true", help="validate inputs and exit")

    sp = sub.add_parser("run", help="integrate one configuration")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="independent runs over one config axis")
    common(sp)
    sp.add_argument("--axis", required=True, help="dotted key, e.g. physics.kappa")
    sp.add_argument("--values", required=True, help="comma-separated values")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("converge", help="refinement study against a reference")
    common(sp)
    sp.add_argument("--levels", required=True, help="CSV with columns n,dt")
    sp.set_defaults(func=cmd_converge)

    sp = sub.add_parser("classical-demo", help="harmonic vs inverted oscillator")
    common(sp, config=False)
    sp.add_argument("--omega", type=float, default=1.0)
    sp.add_argument("--m", type=float, default=1.0)
    sp.add_argument("--q0", type=float, default=1.0)
    sp.add_argument("--p0", type=float, default=0.0)
    sp.add_argument("--t-max", type=float, default=10.0)
    sp.add_argument("--samples", type=int, default=201)
    sp.set_defaults(func=cmd_classical_demo)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
