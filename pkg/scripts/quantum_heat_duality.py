"""kappa = 2 run mapped to the forward heat equation and compared with direct heat evolution."""

from _common import CONFIGS, out_parser, show_checks

from qdual.config import load_config
from qdual.runner import run


def main():
    args = out_parser(__doc__, "quantum_heat_duality").parse_args()
    for name in ("kappa2_heat_duality.ini",):
        print(name)
        show_checks(run(load_config(CONFIGS / name), args.out))
    print(f"outputs -> {args.out}")


if __name__ == "__main__":
    main()
