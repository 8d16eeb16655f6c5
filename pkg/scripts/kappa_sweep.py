"""Sweep kappa and validate the reduction of the modular equation to a linear one.

Each member integrates the nonlinear equation directly and the scaled
linear equation pulled back to the same kappa; the summary holds the L2
gap per kappa. Members that are ill-posed are isolated and reported.
"""

from _common import CONFIGS, out_parser

from qdual.config import load_config
from qdual.runner import sweep


def main():
    p = out_parser(__doc__.splitlines()[0], "kappa_sweep")
    p.add_argument("--values", default="0,0.25,0.5,0.75,1.5")
    args = p.parse_args()
    cfg = load_config(CONFIGS / "kappa_reduce.ini")
    rows = sweep(cfg, "physics.kappa", args.values.split(","), args.out)
    print(f"{'kappa':>6}  {'status':<30} kappa_reduce_l2")
    for r in rows:
        gap = r.get("kappa_reduce_l2")
        print(f"{r['value']:>6}  {r['status']:<30} {'' if gap is None else f'{gap:.3e}'}")
    print(f"summary -> {args.out}/sweep_summary.csv")


if __name__ == "__main__":
    main()
