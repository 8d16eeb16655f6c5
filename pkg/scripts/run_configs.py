"""Run every shipped configuration and print its invariant checks."""

from _common import CONFIGS, out_parser, show_checks

from qdual.config import load_config
from qdual.runner import run


def main():
    args = out_parser(__doc__, "configs").parse_args()
    codes = {}
    for path in sorted(CONFIGS.glob("*.ini")):
        print(path.name)
        rep = run(load_config(path), f"{args.out}/{path.stem}")
        show_checks(rep)
        codes[path.stem] = rep.exit_code
    print("exit codes:", codes)


if __name__ == "__main__":
    main()
