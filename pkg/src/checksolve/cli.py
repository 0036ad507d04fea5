"""Command-line front end.

Subcommands: solve, sweep, adversarial, split, scaling, verify.  Exit codes:
0 all gates pass, 1 a verification gate failed, 2 invalid or infeasible
configuration, 3 the solver itself failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assemble import GluedSolution, glue, residual_norms, stationarity_defect, zero_localization_check
from .cellsolve import CellSolveError, solve_cell
from .config import (EMIT_CHOICES, ConfigError, RunConfig, check_feasible, emit_config,
                     load_config, validate)
from .model import InfeasiblePartition, ProblemSpec
from .oracle import ShootingOverflow, adversarial_forcing, compute_split, shooting_match
from .partition import OuterSolveError, OuterState, n_threads, optimize_partition
from .svg import line_plot

log = logging.getLogger("checksolve")

EXIT_OK, EXIT_GATE, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


def _clean(v):
    """JSON-safe floats: non-finite values become strings."""
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _dump(obj) -> str:
    return json.dumps(_clean(obj), indent=1, sort_keys=True) + "\n"


@dataclass
class Gate:
    name: str
    value: float
    threshold: float
    passed: bool

    @classmethod
    def upper(cls, name: str, value: float, threshold: float) -> "Gate":
        return cls(name, float(value), float(threshold), bool(value <= threshold))

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "threshold": self.threshold,
                "passed": self.passed}


@dataclass
class SolveOutcome:
    k: int
    state: OuterState
    glued: GluedSolution
    gates: list[Gate]
    diagnostics: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(g.passed for g in self.gates)

    @property
    def failed(self) -> list[Gate]:
        return [g for g in self.gates if not g.passed]


def cell_gates(cfg: RunConfig, state: OuterState) -> list[Gate]:
    nehari = max(c.nehari_residual / (1 + abs(c.energy)) for c in state.cells)
    cone = max(c.cone_violation for c in state.cells)
    return [Gate.upper("nehari", nehari, cfg.gates.nehari),
            Gate.upper("cone", cone, cfg.gates.cone)]


def verification_gates(cfg: RunConfig, spec: ProblemSpec, glued: GluedSolution) -> tuple[list[Gate], dict]:
    """Flux, stationarity, residual and shooting gates on a glued profile."""
    max_flux = float(np.max(np.abs(glued.fluxes)))
    jump = float(np.max(glued.flux_jumps)) / max_flux if glued.flux_jumps.size else 0.0
    stat = float(np.max(np.abs(glued.stationarity_defects))) if glued.stationarity_defects.size else 0.0
    gates = [Gate.upper("flux", jump, cfg.gates.flux),
             Gate.upper("stationarity", stat, cfg.gates.stationarity),
             Gate.upper("residual", glued.residual_relative, cfg.gates.residual)]
    try:
        mr = shooting_match(spec, glued, cfg.shoot_step)
        shoot = {"sup_error": mr.sup_error, "end_value": mr.end_value,
                 "shoot_zeros": mr.shoot_zeros, "glued_zeros": mr.glued_zeros}
        gates.append(Gate.upper("shooting_sup", mr.sup_error, cfg.gates.shooting_sup))
        gates.append(Gate("shooting_zero_count", float(mr.shoot_zeros), float(mr.glued_zeros),
                          mr.zero_count_match))
    except ShootingOverflow as exc:
        shoot = {"overflow_at": exc.x}
        gates.append(Gate("shooting_sup", math.inf, cfg.gates.shooting_sup, False))
    return gates, {"shooting": shoot, "max_abs_flux": max_flux}


def run_solve(cfg: RunConfig, k: int, spec: ProblemSpec | None = None) -> SolveOutcome:
    spec = spec or cfg.problem
    J = cfg.cells_for(k)
    state = optimize_partition(spec, k, J, cfg.L_bound, m_per_cell=cfg.m_per_cell, h=cfg.h,
                               first_sign=cfg.first_sign, options=cfg.outer)
    glued = glue(state, spec, cfg.stationarity_fields)
    gates = [Gate("outer_converged", float(len(state.history)), float(cfg.outer.max_iter),
                  state.converged)]
    gates += cell_gates(cfg, state)
    vg, extra = verification_gates(cfg, spec, glued)
    gates += vg
    diag = {
        "k": k, "J": J, "L": state.L, "L_bound": cfg.L_bound,
        "interior_margin": state.interior_margin,
        "total_energy": glued.total_energy,
        "min_cell_energy": float(np.min(glued.cell_energies)),
        "residual_dual_norm": glued.residual_dual_norm,
        "residual_relative": glued.residual_relative,
        "stationarity_defects": glued.stationarity_defects.tolist(),
        "zero_count": int(len(glued.zeros)),
        "outer_history": state.history,
        "cells": [{"index": i, "sign": c.sign, "x_left": c.grid.x_left, "x_right": c.grid.x_right,
                   "m": c.grid.m, "energy": c.energy, "nehari_residual": c.nehari_residual,
                   "cone_violation": c.cone_violation, "grad_norm": c.grad_norm,
                   "iterations": c.iterations} for i, c in enumerate(state.cells)],
        **extra,
    }
    return SolveOutcome(k, state, glued, gates, diag)


def write_outputs(out: Path, cfg: RunConfig, spec: ProblemSpec, res: SolveOutcome, title: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    if "json" in cfg.emit:
        sol = {"problem": spec.to_dict(), "L_bound": cfg.L_bound,
               "partition": res.state.partition.to_dict(), "solution": res.glued.to_dict()}
        (out / "solution.json").write_text(_dump(sol))
        diag = dict(res.diagnostics, gates=[g.to_dict() for g in res.gates], passed=res.passed)
        (out / "diagnostics.json").write_text(_dump(diag))
    if "csv" in cfg.emit:
        (out / "profile.csv").write_text(res.glued.to_csv())
    if "svg" in cfg.emit:
        (out / "profile.svg").write_text(res.glued.to_svg(title))


def _report(res_gates: list[Gate], context: dict) -> int:
    failed = [g.to_dict() for g in res_gates if not g.passed]
    print(json.dumps(_clean(dict(context, passed=not failed))))
    if failed:
        print(json.dumps(_clean({"status": "fail", "failed_gates": failed, **context})), file=sys.stderr)
        return EXIT_GATE
    return EXIT_OK


# -- subcommands ------------------------------------------------------------------

def cmd_solve(cfg: RunConfig) -> int:
    if len(cfg.k) != 1:
        raise ConfigError("solve takes a single k; use the sweep subcommand for lists")
    k = cfg.k[0]
    res = run_solve(cfg, k)
    write_outputs(Path(cfg.output_dir), cfg, cfg.problem, res, f"k = {k}, J = {cfg.cells_for(k)}")
    return _report(res.gates, {"command": "solve", "k": k, "J": cfg.cells_for(k),
                               "total_energy": res.glued.total_energy, "L": res.state.L,
                               "interior_zeros": int(len(res.glued.zeros))})


SWEEP_COLUMNS = ("k", "J", "total_energy", "min_cell_energy", "L", "max_flux_jump", "zero_count")


def cmd_sweep(cfg: RunConfig) -> int:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    def one(k):
        try:
            res = run_solve(cfg, k)
        except (OuterSolveError, CellSolveError) as exc:
            return k, None, f"{type(exc).__name__}: {exc}"
        write_outputs(out / f"k{k:03d}", cfg, cfg.problem, res, f"k = {k}")
        return k, res, ""

    workers = min(n_threads(), len(cfg.k))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, cfg.k))
    else:
        results = [one(k) for k in cfg.k]

    rows, failures = [], []
    for k, res, err in results:
        if res is None:
            failures.append({"k": k, "error": err})
            continue
        g = res.glued
        rel_jump = float(np.max(g.flux_jumps) / np.max(np.abs(g.fluxes))) if g.flux_jumps.size else 0.0
        rows.append({"k": k, "J": res.state.partition.J, "total_energy": g.total_energy,
                     "min_cell_energy": float(np.min(g.cell_energies)), "L": res.state.L,
                     "max_flux_jump": rel_jump, "zero_count": int(len(g.zeros))})
        if not res.passed:
            failures.append({"k": k, "failed_gates": [x.to_dict() for x in res.failed]})
    if "csv" in cfg.emit:
        lines = [",".join(SWEEP_COLUMNS)]
        for r in rows:
            lines.append(",".join(str(r[c]) if isinstance(r[c], int) else f"{r[c]:.17g}"
                                  for c in SWEEP_COLUMNS))
        (out / "sweep.csv").write_text("\n".join(lines) + "\n")
    if "json" in cfg.emit:
        (out / "sweep.json").write_text(_dump({"rows": rows, "failures": failures}))
    if "svg" in cfg.emit and len(rows) >= 2:
        ks = [r["k"] for r in rows]
        (out / "trend_energy.svg").write_text(line_plot(
            [(ks, [r["min_cell_energy"] for r in rows], "min cell energy")],
            title="min cell energy vs k", xlabel="k", logx=True, logy=True))
        gap = [r["L"] - 1 for r in rows]
        positive = all(v > 0 for v in gap)
        (out / "trend_L.svg").write_text(line_plot(
            [(ks, gap, "L - 1")], title="distortion vs k", xlabel="k", logx=True, logy=positive))
    summary = {"command": "sweep", "k": list(cfg.k), "failures": failures}
    print(json.dumps(_clean(summary)))
    if failures:
        print(json.dumps(_clean({"status": "fail", **summary})), file=sys.stderr)
        return EXIT_GATE
    return EXIT_OK


def cmd_adversarial(cfg: RunConfig) -> int:
    if cfg.k_eig < 2:
        raise ConfigError("adversarial.k_eig must be >= 2")
    spec = cfg.problem.with_forcing(adversarial_forcing(cfg.problem, cfg.k_eig, cfg.margin))
    res, tried = None, []
    # smallest k whose cells all admit a Nehari point that passes the cell gates
    for k in range(cfg.k_eig, cfg.k_max + 1):
        J = cfg.cells_for(k)
        try:
            check_feasible(cfg.with_overrides(k=(k,)))
            state = optimize_partition(spec, k, J, cfg.L_bound, m_per_cell=cfg.m_per_cell,
                                       h=cfg.h, first_sign=cfg.first_sign, options=cfg.outer)
        except (InfeasiblePartition, OuterSolveError, CellSolveError) as exc:
            tried.append({"k": k, "reason": f"{type(exc).__name__}: {exc}"})
            continue
        gates = cell_gates(cfg, state)
        if not all(g.passed for g in gates):
            tried.append({"k": k, "reason": "cell gates", "gates": [g.to_dict() for g in gates]})
            continue
        glued = glue(state, spec, cfg.stationarity_fields)
        res = SolveOutcome(k, state, glued, gates)
        break
    if res is None:
        print(json.dumps(_clean({"status": "fail", "command": "adversarial", "tried": tried})),
              file=sys.stderr)
        return EXIT_SOLVER
    rep = zero_localization_check(res.glued, cfg.k_eig, spec, raise_on_fail=False)
    loc = Gate("localization", float(len(rep.selected)), float(cfg.k_eig - 1), rep.passed)
    # residual checks are reported but do not gate: the forcing jumps at the nodes of e_k
    report, extra = verification_gates(cfg, spec, res.glued)
    res.gates.append(loc)
    res.diagnostics = {"k": res.k, "J": res.state.partition.J, "L": res.state.L,
                       "refinement": tried, "localization": rep.to_dict(),
                       "reported": [g.to_dict() for g in report], **extra}
    out = Path(cfg.output_dir)
    write_outputs(out, cfg, spec, res, f"adversarial k_eig = {cfg.k_eig}, k = {res.k}")
    if "json" in cfg.emit:
        (out / "localization.json").write_text(_dump(rep.to_dict()))
    return _report(res.gates, {"command": "adversarial", "k_eig": cfg.k_eig, "k": res.k,
                               "zeros_selected": rep.selected, "failure": rep.failure})


def cmd_split(cfg: RunConfig) -> int:
    if not cfg.problem.forcing.is_zero:
        raise ConfigError("split needs problem.forcing = none")
    sp = compute_split(cfg.problem, m=cfg.m_per_cell or 999)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if "json" in cfg.emit:
        (out / "split.json").write_text(_dump(sp.to_dict()))
    if "csv" in cfg.emit:
        (out / "energy_curve.csv").write_text(sp.curve_csv())
    if "svg" in cfg.emit:
        (out / "split.svg").write_text(line_plot(
            [(sp.energy_curve[:, 0], sp.energy_curve[:, 1], "e+(t) + e-(2 - t)")],
            title=f"t_hat = {sp.t_hat:.6f}", xlabel="t", logy=True, markers=[sp.t_hat]))
    gate = Gate("unique_minimum", float(sp.local_minima), 1.0, sp.local_minima == 1)
    return _report([gate], {"command": "split", **sp.to_dict()})


def scaling_study(cfg: RunConfig) -> dict:
    spec = cfg.problem
    lengths = np.asarray(cfg.scaling_lengths, dtype=float)
    energies = []
    for ell in lengths:
        m = cfg.m_per_cell or max(3, int(round(ell / cfg.h)) - 1)
        energies.append(solve_cell(spec, spec.a, spec.a + ell, m, 1).energy)
    energies = np.asarray(energies)
    slope = float(np.polyfit(np.log(lengths), np.log(energies), 1)[0]) if len(lengths) > 1 else math.nan
    return {"lengths": lengths.tolist(), "energies": energies.tolist(), "slope": slope,
            "expected_slope": -(spec.p + 3) / (spec.p - 1)}


def cmd_scaling(cfg: RunConfig) -> int:
    st = scaling_study(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if "json" in cfg.emit:
        (out / "scaling.json").write_text(_dump(st))
    if "csv" in cfg.emit:
        rows = ["length,energy"] + [f"{l:.17g},{e:.17g}" for l, e in zip(st["lengths"], st["energies"])]
        (out / "scaling.csv").write_text("\n".join(rows) + "\n")
    if "svg" in cfg.emit and len(st["lengths"]) > 1 and min(st["energies"]) > 0:
        (out / "scaling.svg").write_text(line_plot(
            [(st["lengths"], st["energies"], f"slope {st['slope']:.4f}")],
            title="cell energy vs length", xlabel="length", logx=True, logy=True))
    gates = []
    # the power law is exact only without forcing
    if cfg.problem.forcing.is_zero:
        gates.append(Gate.upper("scaling_slope", abs(st["slope"] - st["expected_slope"]),
                                cfg.gates.scaling_slope))
    return _report(gates, {"command": "scaling", "slope": st["slope"],
                           "expected_slope": st["expected_slope"]})


def cmd_verify(cfg: RunConfig, path: Path) -> int:
    data = json.loads(Path(path).read_text())
    spec = ProblemSpec.from_dict(data["problem"])
    glued = GluedSolution.from_dict(data["solution"])
    dual, rel, jumps = residual_norms(spec, glued)
    glued.residual_dual_norm, glued.residual_relative, glued.flux_jumps = dual, rel, jumps
    glued.stationarity_defects = stationarity_defect(spec, glued, cfg.stationarity_fields)
    gates, extra = verification_gates(cfg, spec, glued)
    if "json" in cfg.emit and cfg.output_dir:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "verify.json").write_text(_dump({"gates": [g.to_dict() for g in gates],
                                                "residual_dual_norm": dual, **extra}))
    return _report(gates, {"command": "verify", "source": str(path), "residual_relative": rel})


# -- entry point ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="checksolve", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key = value run configuration")
    common.add_argument("--out", type=Path, help="output directory (overrides run.output_dir)")
    common.add_argument("--emit", help="comma separated subset of json,csv,svg")
    common.add_argument("--seed", type=int, help="multistart seed (overrides run.seed)")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="solve one k and verify")
    sub.add_parser("sweep", parents=[common], help="solve every k of partition.k")
    sub.add_parser("adversarial", parents=[common], help="zero localization under adversarial forcing")
    sub.add_parser("split", parents=[common], help="asymmetric split t_hat and L_hat")
    sub.add_parser("scaling", parents=[common], help="cell energy against cell length")
    v = sub.add_parser("verify", parents=[common], help="re-check a saved solution.json")
    v.add_argument("solution", type=Path)
    sub.add_parser("show-config", parents=[common], help="print the effective configuration")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    kw = {}
    if args.out is not None:
        kw["output_dir"] = str(args.out)
    if args.emit is not None:
        kw["emit"] = tuple(s.strip() for s in args.emit.split(",") if s.strip())
    if args.seed is not None:
        kw["seed"] = args.seed
    cfg = cfg.with_overrides(**kw)
    validate(cfg)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "show-config":
            sys.stdout.write(emit_config(cfg))
            return EXIT_OK
        if args.command in ("solve", "sweep"):
            check_feasible(cfg)
        handlers = {"solve": cmd_solve, "sweep": cmd_sweep, "adversarial": cmd_adversarial,
                    "split": cmd_split, "scaling": cmd_scaling}
        if args.command == "verify":
            return cmd_verify(cfg, args.solution)
        return handlers[args.command](cfg)
    except (ConfigError, InfeasiblePartition, OSError) as exc:
        print(json.dumps({"status": "error", "error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return EXIT_CONFIG
    except (OuterSolveError, CellSolveError, ShootingOverflow) as exc:
        print(json.dumps({"status": "error", "error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
