"""Per-cell variational solver.

On a cell (x_left, x_right) with Dirichlet zeros the energy is discretized with
P1 elements and lumped (trapezoid) quadrature:

    E(u) = 1/2 <K u, u> - sum_j h [F(u_j) + w_j u_j],   F' = f = c+ (t+)^p - c- (t-)^p.

Two critical points are computed per cell: the small local minimizer ``u_tilde``
near zero, and the minimax point ``u`` of E along rays from ``u_tilde`` inside the
cone sign*(u - u_tilde) >= 0.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .model import ProblemSpec

log = logging.getLogger(__name__)

TOL_NEWTON = 1e-10
TOL_NEHARI = 1e-8
TOL_GRAD = 1e-8
MAX_PG_ITER = 10_000
ARMIJO_SLOPE = 1e-4


class CellSolveError(RuntimeError):
    pass


class CellTooLarge(CellSolveError):
    """The small minimizer near zero does not exist on this cell; refine k."""


class HessianNotPD(CellTooLarge):
    pass


class MassConstraintViolated(CellTooLarge):
    pass


class NoInteriorMax(CellSolveError):
    pass


class MaxIterations(CellSolveError):
    pass


@dataclass(frozen=True)
class CellGrid:
    x_left: float
    x_right: float
    m: int

    @property
    def h(self) -> float:
        return (self.x_right - self.x_left) / (self.m + 1)

    @property
    def nodes(self) -> np.ndarray:
        """Interior nodes only; both endpoints carry the Dirichlet zero."""
        return self.x_left + self.h * np.arange(1, self.m + 1)

    @property
    def length(self) -> float:
        return self.x_right - self.x_left


@dataclass
class DiscreteEnergy:
    grid: CellGrid
    spec: ProblemSpec
    w: np.ndarray
    _chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        m, h = self.grid.m, self.grid.h
        ab = np.zeros((2, m))
        ab[0, 1:] = -1.0 / h
        ab[1, :] = 2.0 / h
        self._chol = linalg.cholesky_banded(ab, lower=False)

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.grid.m, self.grid.h)

    @property
    def load(self) -> np.ndarray:
        return self.grid.h * self.w

    def stiffness_apply(self, u: np.ndarray) -> np.ndarray:
        h = self.grid.h
        Ku = 2.0 * u
        Ku[1:] -= u[:-1]
        Ku[:-1] -= u[1:]
        return Ku / h

    def stiffness_dense(self) -> np.ndarray:
        m, h = self.grid.m, self.grid.h
        return (2 * np.eye(m) - np.eye(m, k=1) - np.eye(m, k=-1)) / h

    def stiffness_solve(self, r: np.ndarray) -> np.ndarray:
        return linalg.cho_solve_banded((self._chol, False), r)

    def dirichlet_form(self, u: np.ndarray) -> float:
        """<K u, u> = sum of squared jumps / h, including both boundary jumps."""
        du = np.diff(np.concatenate([[0.0], u, [0.0]]))
        return float(du @ du) / self.grid.h

    def energy(self, u: np.ndarray) -> float:
        h = self.grid.h
        return 0.5 * self.dirichlet_form(u) - h * float(np.sum(self.spec.potential(u))) - float(self.load @ u)

    def gradient(self, u: np.ndarray) -> np.ndarray:
        return self.stiffness_apply(u) - self.grid.h * self.spec.nonlinearity(u) - self.load

    def rhs(self, u: np.ndarray) -> np.ndarray:
        """f(u) + w tested against the hat functions."""
        return self.grid.h * self.spec.nonlinearity(u) + self.load

    def hessian_banded(self, u: np.ndarray) -> np.ndarray:
        """Upper banded storage (2, m) of K - h diag(f'(u))."""
        m, h = self.grid.m, self.grid.h
        ab = np.zeros((2, m))
        ab[0, 1:] = -1.0 / h
        ab[1, :] = 2.0 / h - h * self.spec.nonlinearity_prime(u)
        return ab

    def hessian_quadratic(self, u: np.ndarray, d: np.ndarray) -> float:
        return self.dirichlet_form(d) - self.grid.h * float(self.spec.nonlinearity_prime(u) @ (d * d))

    def dual_norm(self, r: np.ndarray) -> float:
        """sqrt(r^T K^{-1} r): the discrete H^{-1} norm."""
        return math.sqrt(max(float(r @ self.stiffness_solve(r)), 0.0))

    def lp1_mass(self, u: np.ndarray) -> float:
        return self.grid.h * float(np.sum(np.abs(u) ** (self.spec.p + 1)))

    def first_eigenvector(self) -> np.ndarray:
        m = self.grid.m
        return np.sin(np.pi * np.arange(1, m + 1) / (m + 1))

    def first_eigenvalue(self) -> float:
        m, h = self.grid.m, self.grid.h
        return 4.0 / h**2 * math.sin(math.pi / (2 * (m + 1))) ** 2


def discretize_cell(spec: ProblemSpec, x_left: float, x_right: float, m: int):
    if m < 1:
        raise ValueError("need at least one interior node")
    if not x_right - x_left > 10 * np.finfo(float).eps * spec.length:
        raise ValueError(f"degenerate cell ({x_left}, {x_right})")
    grid = CellGrid(float(x_left), float(x_right), int(m))
    # w holds load / h: nodal values for smooth forcing, hat averages across jumps
    w = np.asarray(spec.forcing.hat_load(grid.nodes, grid.h), dtype=float) / grid.h
    return grid, DiscreteEnergy(grid, spec, w)


def solve_tilde(energy: DiscreteEnergy, tol: float = TOL_NEWTON, max_iter: int = 100) -> np.ndarray:
    """Damped Newton from 0 for the local minimizer near zero.

    Raises HessianNotPD / MassConstraintViolated when the cell is too large for
    the minimizer to exist in the convex neighbourhood of zero.
    """
    m = energy.grid.m
    u = np.zeros(m)
    if not np.any(energy.w):
        return u
    E = energy.energy(u)
    for it in range(max_iter):
        g = energy.gradient(u)
        gn = energy.dual_norm(g)
        scale = energy.dual_norm(energy.rhs(u)) + 1e-300
        if gn <= tol * scale:
            break
        try:
            step = linalg.solveh_banded(energy.hessian_banded(u), -g)
        except linalg.LinAlgError as exc:
            raise HessianNotPD(f"Hessian lost definiteness at Newton iterate {it}") from exc
        slope = float(g @ step)
        lam = 1.0
        while True:
            trial = u + lam * step
            Et = energy.energy(trial)
            # near convergence E is flat to round-off; the gradient norm still has to drop
            if Et <= E + ARMIJO_SLOPE * lam * slope or \
                    energy.dual_norm(energy.gradient(trial)) <= (1 - ARMIJO_SLOPE * lam) * gn:
                break
            lam *= 0.5
            if lam < 1e-12:
                raise HessianNotPD("line search failed in the small-solution Newton iteration")
        u, E = trial, Et
    else:
        raise HessianNotPD(f"no convergence after {max_iter} Newton steps")
    try:
        linalg.cholesky_banded(energy.hessian_banded(u))
    except linalg.LinAlgError as exc:
        raise HessianNotPD("Hessian not positive definite at the small solution") from exc
    if energy.lp1_mass(u) >= 1.0:
        raise MassConstraintViolated(f"L^(p+1) mass {energy.lp1_mass(u):.4g} >= 1")
    return u


def _phi_prime(energy, u_tilde, d, t):
    return float(energy.gradient(u_tilde + t * d) @ d)


def ray_maximize(energy: DiscreteEnergy, u_tilde: np.ndarray, d: np.ndarray,
                 n_scan: int = 24) -> tuple[float, float]:
    """Maximize phi(t) = E(u_tilde + t d) over t >= 0.

    The bracket is grown geometrically from the pure-power estimate until phi'
    turns negative; phi' is scanned on the bracket so that a non-unimodal
    profile is noticed, and the root with the largest phi is refined by
    safeguarded Newton.
    """
    if not np.any(d):
        raise NoInteriorMax("zero direction")
    h, p = energy.grid.h, energy.spec.p
    Kdd = energy.dirichlet_form(d)
    c = np.where(d > 0, energy.spec.c_plus, energy.spec.c_minus)
    denom = h * float(np.sum(c * np.abs(d) ** (p + 1)))
    t_est = (Kdd / denom) ** (1.0 / (p - 1))
    t_hi = t_est
    for _ in range(200):
        if _phi_prime(energy, u_tilde, d, t_hi) < 0:
            break
        t_hi *= 2.0
    else:
        raise NoInteriorMax("phi' stays positive along the ray")

    ts = t_hi * np.linspace(0.0, 1.0, n_scan + 1)[1:]
    dphi = np.array([_phi_prime(energy, u_tilde, d, t) for t in ts])
    # phi' > 0 just after t = 0 because u_tilde is a strict local minimizer
    signs = np.concatenate([[1.0], np.sign(dphi)])
    crossings = [i for i in range(n_scan) if signs[i] > 0 and signs[i + 1] <= 0]
    grid = np.concatenate([[0.0], ts])
    brackets = [(grid[i], grid[i + 1]) for i in crossings]
    if len(brackets) > 1:
        log.info("ray maximization: %d local maxima on the scan, keeping the largest", len(brackets))

    best = None
    for lo, hi in brackets:
        t = _refine_root(energy, u_tilde, d, lo, hi)
        val = energy.energy(u_tilde + t * d)
        if best is None or val > best[1]:
            best = (t, val)
    t_star, value = best
    if energy.hessian_quadratic(u_tilde + t_star * d, d) >= 0:
        log.warning("ray maximum with non-negative curvature at t=%g", t_star)
    return t_star, value


def _refine_root(energy, u_tilde, d, lo, hi, max_iter=100):
    """Newton on phi' = 0 kept inside [lo, hi], where phi'(lo) > 0 >= phi'(hi)."""
    t = 0.5 * (lo + hi)
    for _ in range(max_iter):
        x = u_tilde + t * d
        g1 = float(energy.gradient(x) @ d)
        if g1 > 0:
            lo = t
        else:
            hi = t
        g2 = energy.hessian_quadratic(x, d)
        t_new = t - g1 / g2 if g2 < 0 else 0.5 * (lo + hi)
        if not lo < t_new < hi:
            t_new = 0.5 * (lo + hi)
        if abs(t_new - t) <= 1e-15 * max(abs(t), 1e-300) or hi - lo <= 4e-16 * hi:
            return t_new
        t = t_new
    return t


@dataclass
class CellSolution:
    grid: CellGrid
    sign: int
    u_tilde: np.ndarray
    u: np.ndarray
    energy_tilde: float
    energy: float
    flux_left: float
    flux_right: float
    nehari_residual: float
    grad_norm: float
    lp1_mass_tilde: float
    bvp_residual: float = 0.0
    iterations: int = 0

    @property
    def cone_violation(self) -> float:
        """Largest negative part of sign*(u - u_tilde); 0 inside the cone."""
        return float(max(0.0, -np.min(self.sign * (self.u - self.u_tilde))))

    def full_profile(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.concatenate([[self.grid.x_left], self.grid.nodes, [self.grid.x_right]])
        return x, np.concatenate([[0.0], self.u, [0.0]])

    def to_dict(self) -> dict:
        return {
            "grid": {"x_left": self.grid.x_left, "x_right": self.grid.x_right,
                     "m": self.grid.m, "h": self.grid.h},
            "sign": self.sign,
            "u_tilde": self.u_tilde.tolist(),
            "u": self.u.tolist(),
            "energy_tilde": self.energy_tilde,
            "energy": self.energy,
            "flux_left": self.flux_left,
            "flux_right": self.flux_right,
            "nehari_residual": self.nehari_residual,
            "grad_norm": self.grad_norm,
            "lp1_mass_tilde": self.lp1_mass_tilde,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CellSolution":
        g = d["grid"]
        return cls(CellGrid(g["x_left"], g["x_right"], g["m"]), int(d["sign"]),
                   np.asarray(d["u_tilde"]), np.asarray(d["u"]), d["energy_tilde"],
                   d["energy"], d["flux_left"], d["flux_right"], d["nehari_residual"],
                   d["grad_norm"], d["lp1_mass_tilde"])


def _project_cone(v, u_tilde, sign):
    return u_tilde + sign * np.maximum(sign * (v - u_tilde), 0.0)


def solve_cell_nehari(energy: DiscreteEnergy, u_tilde: np.ndarray, sign: int,
                      u0: np.ndarray | None = None, tol_nehari: float = TOL_NEHARI,
                      tol_grad: float = TOL_GRAD, max_iter: int = MAX_PG_ITER,
                      switch: float = 1e-4) -> CellSolution:
    """Minimize M(u) = max_t E(u_tilde + t (u - u_tilde)) over the signed cone.

    Projected descent along the H^1_0 (Sobolev) gradient with cone projection
    and ray reprojection; once the dual gradient norm drops below ``switch``
    (relative) the iterate is polished by Newton on grad E = 0 and accepted only
    if it stays in the cone with the Nehari and gradient residuals in tolerance.
    """
    if u0 is not None and u0.shape == u_tilde.shape and np.any(sign * (u0 - u_tilde) > 0):
        d = _project_cone(u0, u_tilde, sign) - u_tilde
    else:
        d = sign * energy.first_eigenvector()
    t, M = ray_maximize(energy, u_tilde, d)
    u = u_tilde + t * d

    it = 0
    tau = 1.0
    target = switch
    while True:
        g = energy.gradient(u)
        G = energy.stiffness_solve(g)
        gnorm = math.sqrt(max(float(g @ G), 0.0))
        scale = energy.dual_norm(energy.rhs(u)) + 1e-300
        if gnorm <= target * scale:
            polished = _newton_polish(energy, u, u_tilde, sign, tol_grad)
            if polished is not None:
                u = polished
                break
            target *= 1e-2
            if target < 1e-3 * tol_grad:
                raise MaxIterations("Newton polish kept failing near the minimax point")
            continue
        if it >= max_iter:
            raise MaxIterations(f"projected gradient: dual gradient {gnorm:.3e} after {it} steps")
        it += 1
        tau = min(1.0, 2.0 * tau)
        while True:
            v = _project_cone(u - tau * G, u_tilde, sign)
            dv = v - u_tilde
            if np.any(dv):
                t, M_new = ray_maximize(energy, u_tilde, dv)
                if M_new <= M - ARMIJO_SLOPE * tau * gnorm**2:
                    break
            tau *= 0.5
            if tau < 1e-14:
                # line search stalled at the noise floor; hand over to Newton
                target = max(target, 2 * gnorm / scale)
                t, M_new, dv = 1.0, M, u - u_tilde
                break
        u, M = u_tilde + t * dv, M_new

    return _finish(energy, u_tilde, u, sign, it)


def _newton_polish(energy, u, u_tilde, sign, tol_grad, max_iter=30):
    scale_ref = energy.dual_norm(energy.rhs(u))
    prev = math.inf
    for _ in range(max_iter):
        g = energy.gradient(u)
        gn = energy.dual_norm(g)
        scale = energy.dual_norm(energy.rhs(u)) + 1e-300
        if gn <= tol_grad * scale * 1e-2 or (gn <= tol_grad * scale and gn >= 0.5 * prev):
            break
        if gn > 10 * prev and gn > 1e-6 * scale_ref:
            return None
        prev = gn
        ab = energy.hessian_banded(u)
        full = np.zeros((3, u.size))
        full[0] = ab[0]
        full[1] = ab[1]
        full[2, :-1] = ab[0, 1:]
        try:
            step = linalg.solve_banded((1, 1), full, -g)
        except linalg.LinAlgError:
            return None
        u = u + step
    g = energy.gradient(u)
    if energy.dual_norm(g) > tol_grad * (energy.dual_norm(energy.rhs(u)) + 1e-300):
        return None
    diff = sign * (u - u_tilde)
    if np.min(diff) < -1e-12 * max(np.max(np.abs(u)), 1.0) or not np.any(diff > 0):
        return None
    return u


def _finish(energy, u_tilde, u, sign, iterations):
    # clip round-off sized cone violations so the invariant is exact
    u = _project_cone(u, u_tilde, sign)
    g = energy.gradient(u)
    grid = energy.grid
    fl, fr = _one_sided_flux(u, grid.h)
    return CellSolution(
        grid=grid, sign=sign, u_tilde=u_tilde, u=u,
        energy_tilde=energy.energy(u_tilde), energy=energy.energy(u),
        flux_left=fl, flux_right=fr,
        nehari_residual=abs(float(g @ (u - u_tilde))),
        grad_norm=energy.dual_norm(g),
        lp1_mass_tilde=energy.lp1_mass(u_tilde),
        bvp_residual=energy.dual_norm(g) / (energy.dual_norm(energy.rhs(u)) + 1e-300),
        iterations=iterations,
    )


def _one_sided_flux(u: np.ndarray, h: float) -> tuple[float, float]:
    left = (4.0 * u[0] - u[1]) / (2.0 * h)
    right = (u[-2] - 4.0 * u[-1]) / (2.0 * h)
    return float(left), float(right)


def cell_flux(solution: CellSolution) -> tuple[float, float]:
    """Second-order one-sided u' at both ends from the Dirichlet zero and two nodes."""
    return _one_sided_flux(solution.u, solution.grid.h)


def solve_cell(spec: ProblemSpec, x_left: float, x_right: float, m: int, sign: int,
               u0: np.ndarray | None = None, **kw) -> CellSolution:
    _, energy = discretize_cell(spec, x_left, x_right, m)
    u_tilde = solve_tilde(energy)
    return solve_cell_nehari(energy, u_tilde, sign, u0=u0, **kw)


def constrained_infimum(energy: DiscreteEnergy, max_iter: int = MAX_PG_ITER,
                        tol: float = 1e-10) -> float:
    """min E(u) subject to h sum |u|^(p+1) = 1.

    Sobolev-preconditioned gradient steps followed by radial rescaling back onto
    the constraint surface, with Armijo backtracking on the projected value.
    """
    p = energy.spec.p

    def normalize(v):
        return v / energy.lp1_mass(v) ** (1.0 / (p + 1))

    best = None
    # w pulls the minimizer towards its own sign; try both first-mode orientations
    for s in (1.0, -1.0):
        u = normalize(s * energy.first_eigenvector())
        E = energy.energy(u)
        tau = 1.0
        for _ in range(max_iter):
            g = energy.gradient(u)
            # tangential part: remove the component along grad of the constraint
            c = np.abs(u) ** p * np.sign(u) * energy.grid.h
            Kc = energy.stiffness_solve(c)
            G = energy.stiffness_solve(g)
            G = G - (float(c @ G) / float(c @ Kc)) * Kc
            gn2 = float(g @ G)
            if gn2 <= (tol * (1 + abs(E))) ** 2:
                break
            tau = min(1.0, 2 * tau)
            while True:
                trial = normalize(u - tau * G)
                Et = energy.energy(trial)
                if Et <= E - ARMIJO_SLOPE * tau * gn2:
                    break
                tau *= 0.5
                if tau < 1e-16:
                    break
            if tau < 1e-16:
                break
            u, E = trial, Et
        else:
            raise MaxIterations("constrained infimum did not converge")
        if best is None or E < best:
            best = E
    return float(best)
