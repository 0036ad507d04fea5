#!/usr/bin/env python3
"""k-sweep: distortion L - 1 and minimal cell energy for growing k (J = k).

Runs the forced problem w = 2 sin(3 pi x) and the unforced one side by side and
fits the growth exponent of the minimal cell energy.
"""
import argparse
import csv
import sys

import numpy as np

from checksolve import ForcingSpec, OuterOptions, ProblemSpec, glue, optimize_partition


def sweep(spec, ks, h, L_bound, multistart):
    rows = []
    for k in ks:
        state = optimize_partition(spec, k, k, L_bound, h=h, options=OuterOptions(multistart=multistart))
        g = glue(state, spec)
        rows.append({"k": k, "L_minus_1": state.L - 1, "min_cell_energy": float(np.min(state.cell_energies)),
                     "total_energy": state.total_energy,
                     "flux_rel": float(np.max(g.flux_jumps) / np.max(np.abs(g.fluxes))),
                     "residual_rel": g.residual_relative, "zeros": len(g.zeros)})
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--k", type=int, nargs="+", default=[8, 16, 32, 64])
    ap.add_argument("--h", type=float, default=1e-3)
    ap.add_argument("--p", type=float, default=3.0)
    ap.add_argument("--L-bound", type=float, default=1.5)
    ap.add_argument("--csv", help="write both sweeps to this file")
    args = ap.parse_args(argv)

    cases = {"w=2sin(3pi x)": (ProblemSpec(p=args.p, forcing=ForcingSpec.of(("sinusoid", (2.0, 3.0)))), 3),
             "w=0": (ProblemSpec(p=args.p), 1)}
    all_rows = []
    for label, (spec, ms) in cases.items():
        rows = sweep(spec, args.k, args.h, args.L_bound, ms)
        print(f"\n{label}")
        print(f"{'k':>4} {'L-1':>10} {'min E_i':>12} {'total E':>12} {'flux rel':>9} {'resid rel':>9} {'zeros':>5}")
        for r in rows:
            print(f"{r['k']:>4} {r['L_minus_1']:>10.3e} {r['min_cell_energy']:>12.5e} {r['total_energy']:>12.5e} "
                  f"{r['flux_rel']:>9.1e} {r['residual_rel']:>9.1e} {r['zeros']:>5}")
        slope = np.polyfit(np.log(args.k), np.log([r["min_cell_energy"] for r in rows]), 1)[0]
        print(f"min cell energy ~ k^{slope:.4f}  (unforced value (p+3)/(p-1) = {(args.p + 3) / (args.p - 1):.4f})")
        all_rows += [dict(r, case=label) for r in rows]
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=["case"] + [c for c in all_rows[0] if c != "case"])
            wr.writeheader()
            wr.writerows(all_rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
