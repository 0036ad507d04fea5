#!/usr/bin/env python3
"""Asymmetric split t_hat against the coefficient ratio, plus a k-sweep check at (1, 16)."""
import argparse
import sys

import numpy as np

from checksolve import OuterOptions, ProblemSpec, optimize_partition
from checksolve.oracle import compute_split, unit_ground_state_energy


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--p", type=float, default=3.0)
    ap.add_argument("--ratios", type=float, nargs="+", default=[1, 2, 4, 8, 16, 32, 64])
    ap.add_argument("--k", type=int, nargs="+", default=[8, 16, 32, 64])
    ap.add_argument("--h", type=float, default=1e-3)
    args = ap.parse_args(argv)

    e1 = unit_ground_state_energy(args.p)
    print(f"unit ground state energy (p = {args.p:g}): {e1:.10g}")
    print(f"{'c-/c+':>7} {'t_hat':>12} {'closed form':>12} {'L_hat':>9}")
    for r in args.ratios:
        sp = compute_split(ProblemSpec(p=args.p, c_plus=1.0, c_minus=r), e1=e1)
        q = r ** (1 / (args.p + 1))  # (2 - t)/t = (c+/c-)^(1/(p+1))
        print(f"{r:>7g} {sp.t_hat:>12.9f} {2 * q / (1 + q):>12.9f} {sp.L_hat:>9.5f}")

    spec = ProblemSpec(p=args.p, c_plus=1.0, c_minus=16.0)
    sp = compute_split(spec, e1=e1)
    print(f"\n(c+, c-) = (1, 16): target length ratio {sp.t_hat / (2 - sp.t_hat):.6f}, L_hat {sp.L_hat:.6f}")
    print(f"{'k':>4} {'ratio':>10} {'L':>10}")
    for k in args.k:
        state = optimize_partition(spec, k, k, 2 * sp.L_hat, h=args.h, options=OuterOptions(multistart=1))
        lengths = np.asarray(state.partition.lengths)
        n = 2 * (k // 2)
        ratio = float(np.mean(lengths[0:n:2] / lengths[1:n:2]))
        print(f"{k:>4} {ratio:>10.6f} {state.L:>10.6f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
