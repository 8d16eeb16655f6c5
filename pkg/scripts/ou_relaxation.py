"""Ornstein-Uhlenbeck relaxation: free energy falls, relative entropy rises to zero."""

import csv

from _common import CONFIGS, out_parser, show_checks

from qdual.config import load_config
from qdual.runner import run


def main():
    args = out_parser(__doc__, "ou_relaxation").parse_args()
    rep = run(load_config(CONFIGS / "ou_relaxation.ini"), args.out)
    show_checks(rep)
    with open(f"{args.out}/diagnostics.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    print(f"{'t':>6} {'Psi':>14} {'H_c':>14} {'S':>10}")
    for r in rows[:: max(1, len(rows) // 10)]:
        print(f"{float(r['t']):6.2f} {float(r['Psi']):14.8f} {float(r['H_c']):14.3e} {float(r['S']):10.5f}")


if __name__ == "__main__":
    main()
