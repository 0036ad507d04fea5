"""Independent checks: RK4 shooting, the asymmetric split, eigen-data and
the adversarial forcing with its sign conditions."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, optimize
from scipy.interpolate import CubicHermiteSpline

from .cellsolve import solve_cell
from .model import ForcingSpec, ProblemSpec

log = logging.getLogger(__name__)

SHOOT_STEP = 1e-4
BLOWUP = 1e100


class ShootingOverflow(ArithmeticError):
    def __init__(self, x: float):
        super().__init__(f"trajectory blew up near x = {x:.6g}")
        self.x = x


@dataclass
class ShootingResult:
    slope: float
    x: np.ndarray
    trajectory: np.ndarray
    derivative: np.ndarray
    end_value: float
    zero_count: int

    def to_dict(self) -> dict:
        return {"slope": self.slope, "end_value": self.end_value, "zero_count": self.zero_count,
                "x": self.x.tolist(), "trajectory": self.trajectory.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def count_sign_changes(v: np.ndarray) -> int:
    s = np.sign(v)
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


def shoot(spec: ProblemSpec, slope: float, step: float = SHOOT_STEP) -> ShootingResult:
    """Fixed-step RK4 for u'' = -(f(u) + w) from (u, u')(a) = (0, slope)."""
    if not step > 0:
        raise ValueError("step must be positive")
    n = max(1, int(math.ceil(spec.length / step - 1e-9)))
    dt = spec.length / n
    x = spec.a + dt * np.arange(n + 1)
    x[-1] = spec.b
    w_node = spec.forcing(x)
    w_mid = spec.forcing(x[:-1] + 0.5 * dt)
    cp, cm, pw = spec.c_plus, spec.c_minus, spec.p

    def f(t):
        return cp * t**pw if t > 0 else -cm * (-t) ** pw

    u = np.empty(n + 1)
    v = np.empty(n + 1)
    u[0], v[0] = 0.0, slope
    ui, vi = 0.0, float(slope)
    for i in range(n):
        k1u, k1v = vi, -(f(ui) + w_node[i])
        k2u, k2v = vi + 0.5 * dt * k1v, -(f(ui + 0.5 * dt * k1u) + w_mid[i])
        k3u, k3v = vi + 0.5 * dt * k2v, -(f(ui + 0.5 * dt * k2u) + w_mid[i])
        k4u, k4v = vi + dt * k3v, -(f(ui + dt * k3u) + w_node[i + 1])
        ui += dt / 6 * (k1u + 2 * k2u + 2 * k3u + k4u)
        vi += dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
        if not (abs(ui) < BLOWUP and abs(vi) < BLOWUP):
            raise ShootingOverflow(float(x[i + 1]))
        u[i + 1], v[i + 1] = ui, vi
    # the end point is a zero of the BVP, not an oscillation
    zc = count_sign_changes(u[1:-1])
    return ShootingResult(float(slope), x, u, v, float(u[-1]), zc)


def hamiltonian(spec: ProblemSpec, u, v, w_const: float = 0.0):
    """1/2 u'^2 + F(u) + w u; conserved when w is constant."""
    return 0.5 * np.asarray(v) ** 2 + spec.potential(u) + w_const * np.asarray(u)


@dataclass
class MatchReport:
    sup_error: float
    end_value: float
    zero_count_match: bool
    shoot_zeros: int
    glued_zeros: int


def shooting_match(spec: ProblemSpec, glued, step: float = SHOOT_STEP) -> MatchReport:
    """Shoot from the glued solution's slope at a and compare profiles at the glued nodes."""
    slope = float(glued.fluxes[0, 0])
    res = shoot(spec, slope, step)
    interp = CubicHermiteSpline(res.x, res.trajectory, res.derivative)
    err = float(np.max(np.abs(interp(glued.global_nodes) - glued.values)))
    zg = len(glued.zeros)
    return MatchReport(err, res.end_value, res.zero_count == zg, res.zero_count, zg)


# -- asymmetric split ---------------------------------------------------------

def unit_ground_state_energy(p: float, m: int = 999) -> float:
    """Energy of the positive solution of -u'' = u^p on (0, 1) with w = 0."""
    spec = ProblemSpec(0.0, 1.0, p, 1.0, 1.0)
    return solve_cell(spec, 0.0, 1.0, m, 1).energy


def one_signed_energy(length: float, c: float, p: float, e1: float) -> float:
    """Ground state energy of -u'' = c u^p on a cell of the given length."""
    alpha = (p + 3) / (p - 1)
    return c ** (-2.0 / (p - 1)) * length ** (-alpha) * e1


def split_objective(t, c_plus: float, c_minus: float, p: float, e1: float):
    t = np.asarray(t, dtype=float)
    return one_signed_energy(t, c_plus, p, e1) + one_signed_energy(2.0 - t, c_minus, p, e1)


@dataclass
class AsymmetrySplit:
    t_hat: float
    L_hat: float
    energy_curve: np.ndarray    # (n, 2): t, e+(t) + e-(2 - t)
    local_minima: int
    e1: float

    def to_dict(self) -> dict:
        return {"t_hat": self.t_hat, "L_hat": self.L_hat, "e1": self.e1,
                "local_minima": self.local_minima}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def curve_csv(self) -> str:
        return "t,energy\n" + "".join(f"{t:.17g},{e:.17g}\n" for t, e in self.energy_curve)


def compute_split(spec: ProblemSpec, m: int = 999, n_curve: int = 401,
                  e1: float | None = None) -> AsymmetrySplit:
    """Golden-section minimization of e+(t) + e-(2-t) over t in (0, 2).

    e1 is the unit-interval ground state energy from the cell solver; the
    one-signed energies follow from scaling in length and coefficient.
    """
    p, cp, cm = spec.p, spec.c_plus, spec.c_minus
    if e1 is None:
        e1 = unit_ground_state_energy(p, m)
    t = np.linspace(0.0, 2.0, n_curve + 2)[1:-1]
    vals = split_objective(t, cp, cm, p, e1)
    interior = (vals[1:-1] < vals[:-2]) & (vals[1:-1] < vals[2:])
    n_min = int(np.count_nonzero(interior))
    if n_min != 1:
        log.warning("split objective has %d local minima on the sample grid", n_min)
    i = int(np.argmin(vals))
    i = min(max(i, 1), len(t) - 2)
    res = optimize.minimize_scalar(split_objective, bracket=(t[i - 1], t[i], t[i + 1]),
                                   args=(cp, cm, p, e1), method="golden", tol=1e-12)
    t_hat = float(res.x)
    L_hat = 1.0 / min(t_hat, 2.0 - t_hat)
    return AsymmetrySplit(t_hat, L_hat, np.column_stack([t, vals]), n_min, e1)


# -- eigen-data and adversarial forcing -----------------------------------------

@dataclass
class EigenData:
    k: int
    lambda_k: float
    x: np.ndarray
    e_k: np.ndarray
    lambda_discrete: float


def eigen_data(spec: ProblemSpec, k_eig: int, m: int = 200) -> EigenData:
    """Dirichlet eigenpair of -d^2/dx^2 on (a, b) plus the tridiagonal eigenvalue on m nodes."""
    if k_eig < 1:
        raise ValueError("k_eig must be >= 1")
    L = spec.length
    lam = (k_eig * math.pi / L) ** 2
    h = L / (m + 1)
    x = spec.a + h * np.arange(m + 2)
    ek = np.sin(k_eig * math.pi * (x - spec.a) / L)
    d = np.full(m, 2.0 / h**2)
    e = np.full(m - 1, -1.0 / h**2)
    lam_h = float(linalg.eigh_tridiagonal(d, e, select="i", select_range=(k_eig - 1, k_eig - 1),
                                          eigvals_only=True)[0])
    return EigenData(k_eig, lam, x, ek, lam_h)


def power_gap_max(lam: float, c: float, p: float) -> float:
    """max_{t >= 0} (lam t - c t^p), attained at t* = (lam / (c p))^(1/(p-1))."""
    t_star = (lam / (c * p)) ** (1.0 / (p - 1))
    return lam * t_star * (1.0 - 1.0 / p)


def adversarial_forcing(spec: ProblemSpec, k_eig: int, margin: float) -> ForcingSpec:
    """w = (M + margin) sign(e_k) with M = max_t (lambda_k t - cbar t^p), cbar = min(c+, c-)."""
    if not margin > 0:
        raise ValueError("margin must be strictly positive")
    lam = (k_eig * math.pi / spec.length) ** 2
    M = power_gap_max(lam, min(spec.c_plus, spec.c_minus), spec.p)
    w = ForcingSpec.of(("sign-eigen", (M + margin, k_eig, spec.a, spec.b)))
    xs = np.linspace(spec.a, spec.b, 10_001)[1:-1]
    ek = np.sin(k_eig * math.pi * (xs - spec.a) / spec.length)
    keep = np.abs(ek) > 1e-9
    vals = w(xs[keep])
    assert np.all(ek[keep] * vals >= 0) and np.min(np.abs(vals)) > M
    return w


@dataclass
class SignConditions:
    r1_holds: bool
    r3_holds: bool
    gaps: tuple[float, float]   # (inf of g - lam t over t >= 0, sup of g - lam t over t <= 0)


def verify_sign_conditions(spec: ProblemSpec, D: tuple[float, float], lambda_1: float,
                           n_samples: int = 10_001) -> SignConditions:
    """Closed-form extrema in t of g(x, t) - lambda_1 t for g = f(t) + w(x) on the interval D.

    inf_{t>=0} (c+ t^p - lam t) = -max(lam t - c+ t^p), and symmetrically for t <= 0;
    the x-extrema of w are taken on a grid of interior points of D.
    """
    lo, hi = D
    xs = np.linspace(lo, hi, n_samples + 2)[1:-1]
    wv = spec.forcing(xs)
    r1_gap = float(np.min(wv)) - power_gap_max(lambda_1, spec.c_plus, spec.p)
    r3_gap = float(np.max(wv)) + power_gap_max(lambda_1, spec.c_minus, spec.p)
    return SignConditions(r1_gap > 0, r3_gap < 0, (r1_gap, r3_gap))
