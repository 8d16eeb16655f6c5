"""Harmonic oscillator under t -> -i t, p0 -> -i p0 versus the inverted oscillator."""

import numpy as np
from _common import out_parser

from qdual.classical import OscillatorState, harmonic_trajectory, inverted_trajectory, wick_correspondence_check


def main():
    p = out_parser(__doc__, "oscillator")
    p.add_argument("--omega", type=float, default=1.0)
    p.add_argument("--q0", type=float, default=1.0)
    p.add_argument("--p0", type=float, default=0.5)
    args = p.parse_args()
    w, m = args.omega, 1.0
    t = np.linspace(0, 20 / w, 9)
    q, pp = harmonic_trajectory(args.q0, args.p0, w, m, t)
    qb, pb = inverted_trajectory(args.q0, args.p0, w, m, t)
    print(f"{'t':>7} {'q':>10} {'p':>10} {'q_bar':>14} {'p_bar':>14} {'H':>8} {'H_bar':>12} {'subst dev':>10}")
    for k in range(len(t)):
        H = OscillatorState(q[k], pp[k], w, m).H
        Hb = OscillatorState(qb[k], pb[k], w, m).H_bar
        dev = wick_correspondence_check(args.q0, args.p0, w, m, t[k])["max_deviation"]
        print(f"{t[k]:7.2f} {q[k]:10.5f} {pp[k]:10.5f} {qb[k]:14.5e} {pb[k]:14.5e} {H:8.5f} {Hb:12.5f} {dev:10.1e}")


if __name__ == "__main__":
    main()
