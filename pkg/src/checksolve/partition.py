"""Outer minimization of the summed cell energies over the breakpoints."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import optimize

from .cellsolve import CellSolution, CellTooLarge, discretize_cell, solve_cell_nehari, solve_tilde
from .model import (InfeasiblePartition, Partition, ProblemSpec, deformation_distance,
                    lipschitz_constant, uniform_partition)

log = logging.getLogger(__name__)

TOL_FLUX = 1e-5
TOL_OUTER = 1e-7
MAX_OUTER = 500


class OuterSolveError(RuntimeError):
    def __init__(self, msg: str, state: "OuterState | None" = None):
        super().__init__(msg)
        self.state = state


class StalledOnBoundary(OuterSolveError):
    pass


class MaxOuterIterations(OuterSolveError):
    pass


class CellFailure(CellTooLarge):
    def __init__(self, index: int, cause: Exception):
        super().__init__(f"cell {index}: {cause}")
        self.index = index


def n_threads() -> int:
    try:
        return max(1, int(os.environ.get("CHECKSOLVE_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class OuterState:
    partition: Partition
    cells: list[CellSolution]
    L_bound: float
    history: list[dict] = field(default_factory=list)
    converged: bool = False
    spec: ProblemSpec | None = None

    @property
    def total_energy(self) -> float:
        return float(math.fsum(c.energy for c in self.cells))

    @property
    def cell_energies(self) -> np.ndarray:
        return np.array([c.energy for c in self.cells])

    @property
    def flux_mismatches(self) -> np.ndarray:
        """|u_i'(y_i)| - |u_{i+1}'(y_i)| at interior breakpoints."""
        return np.array([abs(a.flux_right) - abs(b.flux_left)
                         for a, b in zip(self.cells, self.cells[1:])])

    @property
    def max_flux(self) -> float:
        return max(max(abs(c.flux_left), abs(c.flux_right)) for c in self.cells)

    @property
    def relative_flux_mismatch(self) -> float:
        fm = self.flux_mismatches
        return float(np.max(np.abs(fm)) / self.max_flux) if fm.size else 0.0

    @property
    def L(self) -> float:
        return lipschitz_constant(self.partition)

    @property
    def interior_margin(self) -> float:
        return self.L_bound - self.L

    def history_csv(self) -> str:
        lines = ["iter,total_energy,L,max_flux_mismatch,interior_margin"]
        for row in self.history:
            lines.append("{iter},{total_energy:.17g},{L:.17g},{max_flux_mismatch:.17g},"
                         "{interior_margin:.17g}".format(**row))
        return "\n".join(lines) + "\n"


def cell_nodes_for_spacing(lengths: Sequence[float], h: float, m_min: int = 3) -> list[int]:
    """Interior node counts giving spacing close to h on each cell."""
    return [max(m_min, int(round(l / h)) - 1) for l in lengths]


def _as_m_list(m_per_cell, J):
    if np.ndim(m_per_cell) == 0:
        return [int(m_per_cell)] * J
    ms = [int(m) for m in m_per_cell]
    if len(ms) != J:
        raise ValueError(f"need {J} node counts, got {len(ms)}")
    return ms


def _solve_one(args):
    spec, xl, xr, m, sign, u0, index = args
    try:
        _, energy = discretize_cell(spec, xl, xr, m)
        u_tilde = solve_tilde(energy)
        return solve_cell_nehari(energy, u_tilde, sign, u0=u0)
    except CellTooLarge as exc:
        raise CellFailure(index, exc) from exc


def total_energy(spec: ProblemSpec, partition: Partition, m_per_cell,
                 warm: Sequence[CellSolution] | None = None,
                 L_bound: float = math.inf) -> OuterState:
    """Solve every cell of ``partition`` and collect the outer state."""
    ms = _as_m_list(m_per_cell, partition.J)
    jobs = []
    for i, sign in enumerate(partition.signs):
        xl, xr = partition.cell(i)
        u0 = warm[i].u if warm is not None and warm[i].grid.m == ms[i] else None
        jobs.append((spec, xl, xr, ms[i], sign, u0, i))
    threads = n_threads()
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(threads) as pool:
            cells = list(pool.map(_solve_one, jobs))
    else:
        cells = [_solve_one(j) for j in jobs]
    return OuterState(partition, cells, L_bound, spec=spec)


def cell_shape_derivatives(spec: ProblemSpec, cell: CellSolution) -> tuple[float, float]:
    """Exact derivatives of the discrete cell energy w.r.t. its two endpoints.

    The node count is held fixed, so moving an endpoint rescales h and slides
    every node; since u is a critical point only the explicit dependence
    survives (envelope theorem).
    """
    g = cell.grid
    m, h, U = g.m, g.h, cell.u
    du = np.diff(np.concatenate([[0.0], U, [0.0]]))
    x = g.nodes
    load_h, load_x = spec.forcing.hat_load_derivatives(x, h)
    dE_dh = -float(du @ du) / (2 * h * h) - float(np.sum(spec.potential(U))) - float(load_h @ U)
    wp_u = load_x * U
    frac = np.arange(1, m + 1) / (m + 1)
    d_right = dE_dh / (m + 1) - float(wp_u @ frac)
    d_left = -dE_dh / (m + 1) - float(wp_u @ (1 - frac))
    return d_left, d_right


def breakpoint_gradient(state: OuterState, spec: ProblemSpec) -> np.ndarray:
    """d(total energy)/d y_i for the interior breakpoints (moving y_i rightward)."""
    d = [cell_shape_derivatives(spec, c) for c in state.cells]
    return np.array([d[i][1] + d[i + 1][0] for i in range(len(d) - 1)])


def flux_gradient(state: OuterState) -> np.ndarray:
    """Continuum shape derivative 1/2 (u_{i+1}'(y_i)^2 - u_i'(y_i)^2) from cell fluxes."""
    c = state.cells
    return np.array([0.5 * (c[i + 1].flux_left ** 2 - c[i].flux_right ** 2)
                     for i in range(len(c) - 1)])


def _length_gradient(spec, state):
    """Gradient in cell-length coordinates; the right end of the chain floats.

    Cell j's length moves its own right end and translates every cell after it,
    so the Hessian is dominated by its diagonal and a diagonal metric is a good
    preconditioner.
    """
    d = np.array([cell_shape_derivatives(spec, c) for c in state.cells])
    trans = d[:, 0] + d[:, 1]
    tail = np.concatenate([np.cumsum(trans[::-1])[::-1][1:], [0.0]])
    return d[:, 1] + tail


def _project_lengths(z, D, total, lo, hi):
    """argmin sum D_i (l_i - z_i)^2 s.t. sum l = total, lo <= l <= hi."""
    def excess(mu):
        return float(np.sum(np.clip(z - mu / D, lo, hi))) - total

    span = float(np.max(np.abs(D * (z - lo))) + np.max(np.abs(D * (z - hi)))) + 1.0
    a, b = -span, span
    while excess(a) < 0:
        a *= 2
    while excess(b) > 0:
        b *= 2
    mu = optimize.brentq(excess, a, b, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    l = np.clip(z - mu / D, lo, hi)
    # put the residual sum error on the freest cell
    free = np.argmax(np.minimum(l - lo, hi - l))
    l[free] += total - l.sum()
    return l


def _project_ball(z, D, total, lo, hi, ref_lengths, k, a, radius):
    """Same as _project_lengths intersected with the d_k ball around a reference."""
    J = z.size
    y0 = np.cumsum(ref_lengths)[:-1]

    def d_k(l):
        dy = np.cumsum(l)[:-1] - y0
        sup = np.max(np.abs(dy)) if dy.size else 0.0
        lip = k * np.max(np.abs(l - ref_lengths))
        return sup + lip

    base = _project_lengths(z, D, total, lo, hi)
    if d_k(base) <= radius:
        return base
    # variables (l, s, t): |y - y0| <= s, k|l - l0| <= t, s + t <= radius
    n = J + 2
    cons = [{"type": "eq", "fun": lambda v: np.sum(v[:J]) - total}]
    A = np.tril(np.ones((J - 1, J)))
    cons.append({"type": "ineq", "fun": lambda v: v[J] - (A @ v[:J] - y0)})
    cons.append({"type": "ineq", "fun": lambda v: v[J] + (A @ v[:J] - y0)})
    cons.append({"type": "ineq", "fun": lambda v: v[J + 1] - k * (v[:J] - ref_lengths)})
    cons.append({"type": "ineq", "fun": lambda v: v[J + 1] + k * (v[:J] - ref_lengths)})
    cons.append({"type": "ineq", "fun": lambda v: radius - v[J] - v[J + 1]})
    bounds = [(lo, hi)] * J + [(0, radius), (0, radius)]
    x0 = np.concatenate([ref_lengths, [0.0, 0.0]])
    res = optimize.minimize(lambda v: 0.5 * np.sum(D * (v[:J] - z) ** 2), x0,
                            jac=lambda v: np.concatenate([D * (v[:J] - z), [0.0, 0.0]]),
                            constraints=cons, bounds=bounds, method="SLSQP",
                            options={"ftol": 1e-15, "maxiter": 500})
    l = np.clip(res.x[:J], lo, hi)
    l *= total / l.sum()
    return l


@dataclass
class OuterOptions:
    tol_flux: float = TOL_FLUX
    tol_outer: float = TOL_OUTER
    tol_step: float = 1e-12
    tol_floor: float = 1e-8
    max_iter: int = MAX_OUTER
    multistart: int = 3
    seed: int = 0
    start_spread: float = 0.05


def optimize_partition(spec: ProblemSpec, k: int, J: int, L_bound: float,
                       m_per_cell=None, h: float | None = None,
                       reference: Partition | None = None, radius: float | None = None,
                       first_sign: int = 1, options: OuterOptions | None = None,
                       raise_on_boundary: bool = True) -> OuterState:
    """Scaled projected-gradient descent on cell lengths with multistart.

    Each start runs until the projected gradient (energy per unit length) is
    below tol_outer * (1 + |E|); the best converged start is returned.  Node
    counts are frozen at the start so the discrete objective is smooth in the
    breakpoints and the union of cell grids stays conforming.
    """
    opts = options or OuterOptions()
    uni = uniform_partition(spec, k, J, L_bound, first_sign)
    if m_per_cell is None:
        if h is None:
            raise ValueError("give m_per_cell or a target spacing h")
        m_per_cell = cell_nodes_for_spacing(uni.lengths, h)
    ms = _as_m_list(m_per_cell, J)
    lo, hi = 1.0 / (k * L_bound), L_bound / k
    rng = np.random.default_rng(opts.seed)
    ref_lengths = reference.lengths if reference is not None else None

    def project(z, D):
        if reference is not None and radius is not None:
            return _project_ball(z, D, spec.length, lo, hi, ref_lengths, k, spec.a, radius)
        return _project_lengths(z, D, spec.length, lo, hi)

    starts = [uni.lengths]
    for _ in range(max(0, opts.multistart - 1)):
        z = uni.lengths * np.exp(opts.start_spread * rng.standard_normal(J))
        starts.append(project(z, np.ones(J)))

    best, failures = None, []
    for n_start, lengths in enumerate(starts):
        try:
            state = _descend(spec, k, lengths, ms, L_bound, first_sign, project, opts)
        except OuterSolveError as exc:
            failures.append(exc)
            log.info("start %d failed: %s", n_start, exc)
            continue
        if best is None or state.total_energy < best.total_energy:
            best = state
    if best is None:
        raise failures[0]
    if raise_on_boundary and J > 1 and best.interior_margin <= 1e-9 * L_bound:
        raise StalledOnBoundary(
            f"L = {best.L:.9g} sits on the bound {L_bound:.9g} at convergence", best)
    return best


def _descend(spec, k, lengths, ms, L_bound, first_sign, project, opts):
    alpha = (spec.p + 3) / (spec.p - 1)
    part = Partition.from_lengths(k, spec.a, lengths, first_sign)
    state = total_energy(spec, _pin(part, spec), ms, L_bound=L_bound)
    history = []
    J = len(lengths)
    l = part.lengths

    def scaled_step(state, l):
        G = _length_gradient(spec, state)
        e = np.abs(state.cell_energies)
        D = alpha * (alpha + 1) * np.maximum(e, 1e-12 * e.max() + 1e-300) / l**2
        delta = project(l - G / D, D) - l
        return G, D, delta

    G, D, delta = scaled_step(state, l)
    for it in range(opts.max_iter + 1):
        E = state.total_energy
        rel = float(np.max(np.abs(delta) / l)) if J > 1 else 0.0
        pg = float(np.max(np.abs(D * delta))) if J > 1 else 0.0
        history.append({"iter": it, "total_energy": E, "L": state.L,
                        "max_flux_mismatch": state.relative_flux_mismatch,
                        "interior_margin": state.interior_margin,
                        "proj_grad": pg, "rel_step": rel})
        if rel <= opts.tol_step:
            state.history, state.converged = history, True
            return state
        if it == opts.max_iter:
            break
        s = 1.0
        while True:
            trial_l = project(l - s * G / D, D)
            trial = total_energy(spec, _pin(Partition.from_lengths(k, spec.a, trial_l, first_sign), spec),
                                 ms, warm=state.cells, L_bound=L_bound)
            dec = float(G @ (trial_l - l))
            if trial.total_energy <= E + 1e-4 * dec:
                break
            tG, tD, tdelta = scaled_step(trial, trial_l)
            # predicted decrease below the round-off of E: accept if the scaled correction shrinks
            if abs(dec) <= 1e-12 * abs(E) and np.max(np.abs(tdelta) / trial_l) < 0.5 * rel:
                break
            s *= 0.5
            if s < 1e-10:
                if rel <= opts.tol_floor:
                    log.info("outer iteration at its noise floor (rel step %.3e)", rel)
                    state.history, state.converged = history, True
                    return state
                state.history = history
                raise MaxOuterIterations(
                    f"line search stalled at iteration {it}, relative step {rel:.3e}", state)
        l, state = trial_l, trial
        G, D, delta = scaled_step(state, l)
    state.history = history
    raise MaxOuterIterations(f"no convergence after {opts.max_iter} outer iterations", state)


def _pin(part: Partition, spec: ProblemSpec) -> Partition:
    """Force the end breakpoints to be exactly a and b."""
    y = list(part.breakpoints)
    y[0], y[-1] = spec.a, spec.b
    return replace(part, breakpoints=tuple(y))
