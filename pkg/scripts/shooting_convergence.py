#!/usr/bin/env python3
"""Shooting oracle vs glued variational solution as the grid is refined (k = J = 8).

The sup error is the P1 discretization error of the variational profile and
falls like h^2; the RK4 step is fixed.
"""
import argparse
import sys

from checksolve import ForcingSpec, OuterOptions, ProblemSpec, glue, optimize_partition
from checksolve.oracle import shooting_match


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--k", type=int, default=8)
    ap.add_argument("--h", type=float, nargs="+", default=[1e-3, 5e-4, 2.5e-4, 1.25e-4, 6.25e-5, 3e-5, 1.5e-5])
    ap.add_argument("--step", type=float, default=1e-4, help="RK4 step")
    args = ap.parse_args(argv)

    spec = ProblemSpec(forcing=ForcingSpec.of(("sinusoid", (2.0, 3.0))))
    print(f"{'h':>10} {'sup error':>11} {'ratio':>7} {'end value':>11} {'zeros':>9}")
    prev = None
    for h in args.h:
        state = optimize_partition(spec, args.k, args.k, 1.5, h=h, options=OuterOptions(multistart=1))
        rep = shooting_match(spec, glue(state, spec), step=args.step)
        ratio = f"{prev / rep.sup_error:7.2f}" if prev else " " * 7
        print(f"{h:>10.3e} {rep.sup_error:>11.3e} {ratio} {rep.end_value:>11.2e} "
              f"{rep.shoot_zeros:>4}/{rep.glued_zeros:<4}")
        prev = rep.sup_error
    return 0


if __name__ == "__main__":
    sys.exit(main())
