"""Refinement studies: temporal order of the split-step integrator, spectral floor, OU convergence."""

import csv
from pathlib import Path

from _common import CONFIGS, out_parser

from qdual.config import load_config
from qdual.runner import convergence_study

STUDIES = [
    ("modular_time_order.ini", "levels_time.csv", "split-step time order (kappa = 0.5, free)"),
    ("heat_kernel.ini", "levels_space.csv", "heat kernel, spatial refinement"),
    ("ou_relaxation.ini", "levels_ou.csv", "Ornstein-Uhlenbeck, spatial refinement (slow)"),
]


def main():
    p = out_parser(__doc__, "convergence")
    p.add_argument("--skip-ou", action="store_true", help="leave out the slow Fokker-Planck study")
    args = p.parse_args()
    for cfg_name, levels_name, title in STUDIES:
        if args.skip_ou and cfg_name.startswith("ou"):
            continue
        with open(CONFIGS / levels_name, newline="", encoding="utf-8") as fh:
            levels = [(int(r["n"]), float(r["dt"])) for r in csv.DictReader(fh)]
        rows = convergence_study(load_config(CONFIGS / cfg_name), levels, Path(args.out) / cfg_name[:-4])
        print(title)
        for r in rows:
            print(f"  n={r['n']:<5} dt={r['dt']:<7g} error={r['error']:.3e}  order={r['order']:.2f}")


if __name__ == "__main__":
    main()
