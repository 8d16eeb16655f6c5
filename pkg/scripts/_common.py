"""Shared helpers for the experiment scripts."""

import argparse
from pathlib import Path

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def out_parser(description, default):
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--out", default=f"results/{default}", help="output directory")
    return p


def show_checks(report):
    for c in report.checks:
        print(f"  {'PASS' if c.passed else 'FAIL'} {c.name:<28} {c.value:.3e}  (tol {c.tolerance:g})")
    print(f"  status: {report.status}")
