"""Glue cell solutions into a global profile and check that it solves the full problem."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .model import ProblemSpec
from .partition import OuterState
from .svg import line_plot


class ViolatedLocalization(AssertionError):
    def __init__(self, msg: str, index: int):
        super().__init__(msg)
        self.index = index


@dataclass
class GluedSolution:
    global_nodes: np.ndarray
    values: np.ndarray
    breakpoints: np.ndarray
    signs: tuple[int, ...]
    fluxes: np.ndarray            # (J, 2): u' at the left and right end of each cell
    cell_energies: np.ndarray
    k: int = 1
    residual_dual_norm: float = math.nan
    residual_relative: float = math.nan
    flux_jumps: np.ndarray = field(default_factory=lambda: np.zeros(0))
    stationarity_defects: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def total_energy(self) -> float:
        return float(math.fsum(self.cell_energies))

    @property
    def J(self) -> int:
        return len(self.signs)

    @property
    def zeros(self) -> np.ndarray:
        return interior_zeros(self.global_nodes, self.values, self.breakpoints)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "breakpoints": self.breakpoints.tolist(),
            "signs": list(self.signs),
            "fluxes": self.fluxes.tolist(),
            "cell_energies": self.cell_energies.tolist(),
            "total_energy": self.total_energy,
            "residual_dual_norm": self.residual_dual_norm,
            "residual_relative": self.residual_relative,
            "flux_jumps": self.flux_jumps.tolist(),
            "zeros": self.zeros.tolist(),
            "stationarity_defects": self.stationarity_defects.tolist(),
            "global_nodes": self.global_nodes.tolist(),
            "values": self.values.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "GluedSolution":
        return cls(np.asarray(d["global_nodes"]), np.asarray(d["values"]),
                   np.asarray(d["breakpoints"]), tuple(d["signs"]), np.asarray(d["fluxes"]),
                   np.asarray(d["cell_energies"]), d.get("k", 1),
                   d.get("residual_dual_norm", math.nan), d.get("residual_relative", math.nan),
                   np.asarray(d.get("flux_jumps", [])), np.asarray(d.get("stationarity_defects", [])))

    def to_csv(self) -> str:
        rows = ["x,u"] + [f"{x:.17g},{u:.17g}" for x, u in zip(self.global_nodes, self.values)]
        return "\n".join(rows) + "\n"

    def to_svg(self, title: str = "", max_points: int = 4000) -> str:
        x, u = self.global_nodes, self.values
        if len(x) > max_points:
            # thin for plotting but keep breakpoints and the endpoint
            keep = np.zeros(len(x), dtype=bool)
            keep[:: int(math.ceil(len(x) / max_points))] = True
            keep[np.isin(x, self.breakpoints)] = True
            keep[-1] = True
            x, u = x[keep], u[keep]
        return line_plot([(x, u, "u")], title=title, xlabel="x", ylabel="u", markers=self.zeros)


def interior_zeros(x: np.ndarray, u: np.ndarray, breakpoints: np.ndarray) -> np.ndarray:
    """Breakpoints plus sign changes inside cells, linearly interpolated.

    Nodal values that are exactly zero away from breakpoints count once.
    """
    a, b = breakpoints[0], breakpoints[-1]
    found = [float(y) for y in breakpoints[1:-1]]
    is_bp = np.isin(x, breakpoints)
    prev_sign, prev_i = 0.0, None
    for i in range(len(x)):
        if is_bp[i]:
            prev_sign, prev_i = 0.0, None
            continue
        s = np.sign(u[i])
        if s == 0:
            if a < x[i] < b:
                found.append(float(x[i]))
            prev_sign, prev_i = 0.0, None
            continue
        if prev_sign and s != prev_sign:
            j = prev_i
            found.append(float(x[j] - u[j] * (x[i] - x[j]) / (u[i] - u[j])))
        prev_sign, prev_i = s, i
    return np.array(sorted(found))


def glue(state: OuterState, spec: ProblemSpec | None = None, M_fields: int = 8) -> GluedSolution:
    """Concatenate the cell profiles on the union grid and attach the verification data."""
    spec = spec or state.spec
    xs, us = [], []
    for i, cell in enumerate(state.cells):
        x, u = cell.full_profile()
        if i:
            x, u = x[1:], u[1:]
        xs.append(x)
        us.append(u)
    x = np.concatenate(xs)
    u = np.concatenate(us)
    # breakpoints are shared nodes: take them verbatim so zeros are exact
    bp = np.asarray(state.partition.breakpoints)
    glued = GluedSolution(
        global_nodes=x, values=u, breakpoints=bp, signs=state.partition.signs,
        fluxes=np.array([[c.flux_left, c.flux_right] for c in state.cells]),
        cell_energies=state.cell_energies.copy(), k=state.partition.k)
    if spec is not None:
        dual, rel, jumps = residual_norms(spec, glued)
        glued.residual_dual_norm, glued.residual_relative, glued.flux_jumps = dual, rel, jumps
        glued.stationarity_defects = stationarity_defect(spec, glued, M_fields)
    return glued


def _global_system(x):
    hl = np.diff(x)[:-1]
    hr = np.diff(x)[1:]
    diag = 1.0 / hl + 1.0 / hr
    off = -1.0 / hr[:-1]
    weights = 0.5 * (hl + hr)
    return diag, off, weights


def residual_norms(spec: ProblemSpec, glued: GluedSolution, m_global: int | None = None):
    """Discrete weak residual K u - f(u) - load on the union grid.

    Returns (dual norm, dual norm relative to f(u) + load, flux jumps).  The
    jumps are |u'_{i+1}(y_i) - u'_i(y_i)| from the one-sided cell fluxes.
    """
    x, u = glued.global_nodes, glued.values
    if m_global is not None and m_global != len(x) - 2:
        raise ValueError(f"glued grid has {len(x) - 2} interior nodes, expected {m_global}")
    diag, off, weights = _global_system(x)
    ui = u[1:-1]
    Ku = diag * ui
    Ku[1:] += off * ui[:-1]
    Ku[:-1] += off * ui[1:]
    h = np.diff(x)
    load = weights * spec.nonlinearity(ui) + spec.forcing.hat_load(x[1:-1], h[:-1], h[1:])
    r = Ku - load
    ab = np.zeros((2, ui.size))
    ab[0, 1:] = off
    ab[1] = diag
    chol = linalg.cholesky_banded(ab)

    def dual(v):
        return math.sqrt(max(float(v @ linalg.cho_solve_banded((chol, False), v)), 0.0))

    dn = dual(r)
    rel = dn / (dual(load) + 1e-300)
    F = glued.fluxes
    jumps = np.abs(F[1:, 0] - F[:-1, 1])
    return dn, rel, jumps


def stationarity_defect(spec: ProblemSpec, glued: GluedSolution, M_fields: int = 8,
                        fields=None) -> np.ndarray:
    """Boundary-term form of E'(u)[v u'] for sine test fields vanishing at a and b.

    Defect m is sum_i 1/2 (u_i'(y_i)^2 - u_{i+1}'(y_i)^2) v_m(y_i), divided by
    1/2 max|u'|^2 so that it is dimensionless.
    """
    a, b = spec.a, spec.b
    y = glued.breakpoints[1:-1]
    F = glued.fluxes
    jump_sq = 0.5 * (F[:-1, 1] ** 2 - F[1:, 0] ** 2)
    scale = 0.5 * float(np.max(np.abs(F))) ** 2 if F.size else 1.0
    if fields is None:
        fields = [lambda t, m=m: np.sin(m * np.pi * (t - a) / (b - a)) for m in range(1, M_fields + 1)]
    return np.array([float(jump_sq @ v(y)) / scale for v in fields])


@dataclass
class ZeroReport:
    k_eig: int
    zeros: np.ndarray
    selected: list[float]
    sign_checks: list[dict]
    passed: bool
    failure: str = ""

    def to_dict(self) -> dict:
        return {"k_eig": self.k_eig, "zeros": self.zeros.tolist(), "selected": self.selected,
                "sign_checks": self.sign_checks, "passed": self.passed, "failure": self.failure}


def zero_localization_check(glued: GluedSolution, k_eig: int, spec: ProblemSpec,
                            raise_on_fail: bool = True) -> ZeroReport:
    """h = k_eig - 1 zeros, the i-th within (b-a)/k_eig of a + i(b-a)/k_eig, plus the sign pattern.

    On each nodal interval of e_k = sin(k pi (x-a)/(b-a)) the solution must dip
    below zero where e_k > 0 and rise above zero where e_k < 0.
    """
    a, b = spec.a, spec.b
    step = (b - a) / k_eig
    zeros = glued.zeros
    selected, last, failure, bad = [], -math.inf, "", -1
    for i in range(1, k_eig):
        centre = a + i * step
        cands = [z for z in zeros if z > last and abs(z - centre) < step]
        if not cands:
            failure, bad = f"no zero within {step:.4g} of {centre:.4g} (index {i})", i
            break
        last = cands[0]
        selected.append(float(last))
    checks = []
    x, u = glued.global_nodes, glued.values
    for i in range(k_eig):
        lo, hi = a + i * step, a + (i + 1) * step
        inside = (x > lo) & (x < hi)
        e_sign = 1 if i % 2 == 0 else -1
        if e_sign > 0:
            ok = bool(np.min(u[inside]) < 0)
            checks.append({"region": i + 1, "interval": [lo, hi], "e_k": "+", "inf_u": float(np.min(u[inside])), "ok": ok})
        else:
            ok = bool(np.max(u[inside]) > 0)
            checks.append({"region": i + 1, "interval": [lo, hi], "e_k": "-", "sup_u": float(np.max(u[inside])), "ok": ok})
        if not ok and not failure:
            failure, bad = f"sign pattern fails on nodal region {i + 1}", i + 1
    report = ZeroReport(k_eig, zeros, selected, checks, not failure, failure)
    if failure and raise_on_fail:
        raise ViolatedLocalization(failure, bad)
    return report
