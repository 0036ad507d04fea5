"""Problem data, 1D partitions and the Lipschitz/deformation bookkeeping.

A partition of ``[a, b]`` into ``J`` cells stands for a deformation of the
reference grid ``P_k`` (``J`` cubes of side ``1/k``).  In one dimension every
cell quantity depends only on the cell image, so breakpoints are the whole
state; the piecewise-affine map sending reference cell ``i`` onto physical
cell ``i`` is used wherever a map is needed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

FORCING_KINDS = ("constant", "polynomial", "sinusoid", "sign-eigen")


class InfeasiblePartition(ValueError):
    """Raised when (k, J, L) admit no covering partition."""


@dataclass(frozen=True)
class ForcingTerm:
    """One additive piece of the forcing ``w``.

    ``constant``   params = (c,)                      -> c
    ``polynomial`` params = (c0, c1, ...)             -> sum c_i x**i
    ``sinusoid``   params = (A, n[, phase])           -> A sin(n pi x + phase)
    ``sign-eigen`` params = (A, k_eig, a, b)          -> A sign(sin(k_eig pi (x-a)/(b-a)))
    """

    kind: str
    params: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in FORCING_KINDS:
            raise ValueError(f"unknown forcing kind {self.kind!r}")
        object.__setattr__(self, "params", tuple(float(v) for v in self.params))
        need = {"constant": 1, "sinusoid": 2, "sign-eigen": 4}.get(self.kind, 1)
        if len(self.params) < need:
            raise ValueError(f"{self.kind} needs at least {need} parameters")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        P = self.params
        if self.kind == "constant":
            return np.full_like(x, P[0])
        if self.kind == "polynomial":
            return np.polynomial.polynomial.polyval(x, P)
        if self.kind == "sinusoid":
            phase = P[2] if len(P) > 2 else 0.0
            return P[0] * np.sin(P[1] * np.pi * x + phase)
        amp, k_eig, a, b = P
        return amp * np.sign(np.sin(k_eig * np.pi * (x - a) / (b - a)))

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        P = self.params
        if self.kind == "polynomial":
            return np.polynomial.polynomial.polyval(x, np.polynomial.polynomial.polyder(P))
        if self.kind == "sinusoid":
            phase = P[2] if len(P) > 2 else 0.0
            return P[0] * P[1] * np.pi * np.cos(P[1] * np.pi * x + phase)
        # constant, and sign-eigen away from its jumps
        return np.zeros_like(x)

    @property
    def has_jumps(self) -> bool:
        return self.kind == "sign-eigen"

    def _jumps(self, lo, hi):
        """Jump points strictly inside (lo, hi), their sizes, and the value just right of lo."""
        amp, k_eig, a, b = self.params
        period = (b - a) / k_eig
        first = np.floor((lo - a) / period)
        # segment n of the periodic sign pattern carries (-1)^n
        v0 = amp * np.where(first % 2 == 0, 1.0, -1.0)
        n_max = int(np.max(np.ceil((hi - lo) / period))) + 1 if np.size(lo) else 0
        out = []
        for n in range(1, n_max + 1):
            idx = first + n
            s = a + idx * period
            inside = (s > lo) & (s < hi)
            delta = 2.0 * amp * np.where(idx % 2 == 0, 1.0, -1.0)
            out.append((s, np.where(inside, delta, 0.0)))
        return v0, out

    def hat_moments(self, x, hl, hr):
        """Integral of this term against the hat with peak x and half-widths hl, hr.

        Smooth kinds use the trapezoid value 1/2 (hl + hr) w(x); the piecewise
        constant kind is integrated exactly so the load is C^1 in the nodes.
        """
        x = np.asarray(x, dtype=float)
        hl = np.broadcast_to(np.asarray(hl, dtype=float), x.shape)
        hr = np.broadcast_to(np.asarray(hr, dtype=float), x.shape)
        if not self.has_jumps:
            return 0.5 * (hl + hr) * self(x)
        v0, jumps = self._jumps(x - hl, x + hr)
        total = 0.5 * (hl + hr)
        b = v0 * total
        for s, delta in jumps:
            # integral of the hat over (s, infinity)
            tail = np.where(s <= x, total - (s - x + hl) ** 2 / (2 * hl), (x + hr - s) ** 2 / (2 * hr))
            b = b + delta * tail
        return b

    def hat_moment_derivatives(self, x, h):
        """d/dh (peak fixed) and d/dx (width fixed) of the symmetric hat moments."""
        x = np.asarray(x, dtype=float)
        if not self.has_jumps:
            return self(x), h * self.derivative(x)
        v0, jumps = self._jumps(x - h, x + h)
        d_h = v0 + np.zeros_like(x)
        d_x = np.zeros_like(x)
        for s, delta in jumps:
            t = (s - x) / h
            # tail = h g(t) with g(t) = 1 - (1+t)^2/2 on [-1, 0], (1-t)^2/2 on [0, 1]
            g = np.where(t <= 0, 1 - (1 + t) ** 2 / 2, (1 - t) ** 2 / 2)
            dg = np.where(t <= 0, -(1 + t), -(1 - t))
            d_h = d_h + delta * (g - t * dg)
            d_x = d_x - delta * dg
        return d_h, d_x


@dataclass(frozen=True)
class ForcingSpec:
    """Bounded piecewise-smooth forcing ``w`` as a sum of simple terms."""

    terms: tuple[ForcingTerm, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))

    @classmethod
    def zero(cls) -> "ForcingSpec":
        return cls(())

    @classmethod
    def of(cls, *pairs) -> "ForcingSpec":
        """``ForcingSpec.of(("sinusoid", (2, 3)))`` convenience constructor."""
        return cls(tuple(ForcingTerm(kind, tuple(params)) for kind, params in pairs))

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for term in self.terms:
            out = out + term(x)
        return out

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for term in self.terms:
            out = out + term.derivative(x)
        return out

    @property
    def has_jumps(self) -> bool:
        return any(t.has_jumps for t in self.terms)

    def hat_load(self, x, hl, hr=None):
        """Load vector: w tested against the P1 hats peaked at x."""
        x = np.asarray(x, dtype=float)
        hr = hl if hr is None else hr
        out = np.zeros_like(x)
        for term in self.terms:
            out = out + term.hat_moments(x, hl, hr)
        return out

    def hat_load_derivatives(self, x, h):
        x = np.asarray(x, dtype=float)
        d_h, d_x = np.zeros_like(x), np.zeros_like(x)
        for term in self.terms:
            a, b = term.hat_moment_derivatives(x, h)
            d_h, d_x = d_h + a, d_x + b
        return d_h, d_x

    def to_dict(self) -> dict:
        return {"terms": [{"kind": t.kind, "params": list(t.params)} for t in self.terms]}

    @classmethod
    def from_dict(cls, d: dict) -> "ForcingSpec":
        return cls.of(*[(t["kind"], t["params"]) for t in d.get("terms", [])])


@dataclass(frozen=True)
class ProblemSpec:
    """-u'' = c_plus (u+)^p - c_minus (u-)^p + w on (a, b), u(a) = u(b) = 0."""

    a: float = 0.0
    b: float = 1.0
    p: float = 3.0
    c_plus: float = 1.0
    c_minus: float = 1.0
    forcing: ForcingSpec = field(default_factory=ForcingSpec)

    def __post_init__(self):
        if not self.b > self.a:
            raise ValueError(f"need b > a, got a={self.a}, b={self.b}")
        if not self.p > 1:
            raise ValueError(f"need p > 1, got {self.p}")
        if not (self.c_plus > 0 and self.c_minus > 0):
            raise ValueError("c_plus and c_minus must be positive")

    @property
    def length(self) -> float:
        return self.b - self.a

    @property
    def symmetric(self) -> bool:
        return self.c_plus == self.c_minus

    def nonlinearity(self, t):
        """c+ (t+)^p - c- (t-)^p."""
        t = np.asarray(t, dtype=float)
        return np.where(t > 0, self.c_plus, -self.c_minus) * np.abs(t) ** self.p

    def potential(self, t):
        """Primitive of :meth:`nonlinearity` vanishing at 0."""
        t = np.asarray(t, dtype=float)
        c = np.where(t > 0, self.c_plus, self.c_minus)
        return c * np.abs(t) ** (self.p + 1) / (self.p + 1)

    def nonlinearity_prime(self, t):
        t = np.asarray(t, dtype=float)
        c = np.where(t > 0, self.c_plus, self.c_minus)
        return self.p * c * np.abs(t) ** (self.p - 1)

    def with_forcing(self, forcing: ForcingSpec) -> "ProblemSpec":
        return ProblemSpec(self.a, self.b, self.p, self.c_plus, self.c_minus, forcing)

    def to_dict(self) -> dict:
        return {
            "a": self.a, "b": self.b, "p": self.p,
            "c_plus": self.c_plus, "c_minus": self.c_minus,
            "forcing": self.forcing.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemSpec":
        return cls(d["a"], d["b"], d["p"], d["c_plus"], d["c_minus"],
                   ForcingSpec.from_dict(d.get("forcing", {})))


def sigma(z: int) -> int:
    """Checkerboard sign (-1)**z of the 1D cell index z."""
    return -1 if int(z) % 2 else 1


@dataclass(frozen=True)
class Partition:
    """Breakpoints a = y_0 < ... < y_J = b with alternating cell signs."""

    k: int
    breakpoints: tuple[float, ...]
    first_sign: int = 1

    def __post_init__(self):
        y = tuple(float(v) for v in self.breakpoints)
        object.__setattr__(self, "breakpoints", y)
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if len(y) < 2:
            raise ValueError("a partition needs at least one cell")
        if not all(y1 > y0 for y0, y1 in zip(y, y[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if self.first_sign not in (1, -1):
            raise ValueError("first_sign must be +1 or -1")

    @classmethod
    def from_lengths(cls, k: int, a: float, lengths: Sequence[float], first_sign: int = 1):
        y = a + np.concatenate([[0.0], np.cumsum(lengths)])
        return cls(k, tuple(y), first_sign)

    @property
    def J(self) -> int:
        return len(self.breakpoints) - 1

    @property
    def a(self) -> float:
        return self.breakpoints[0]

    @property
    def b(self) -> float:
        return self.breakpoints[-1]

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(np.asarray(self.breakpoints))

    @property
    def signs(self) -> tuple[int, ...]:
        return tuple(self.first_sign * sigma(i) for i in range(self.J))

    @property
    def interior(self) -> np.ndarray:
        return np.asarray(self.breakpoints[1:-1])

    @property
    def L(self) -> float:
        return lipschitz_constant(self)

    def cell(self, i: int) -> tuple[float, float]:
        return self.breakpoints[i], self.breakpoints[i + 1]

    def to_dict(self, reference: "Partition | None" = None) -> dict:
        d = {
            "k": self.k,
            "breakpoints": list(self.breakpoints),
            "signs": list(self.signs),
            "L": self.L,
            "d_k": deformation_distance(self, reference).distance_to_reference
            if reference is not None else 0.0,
        }
        return d

    def to_json(self, reference: "Partition | None" = None) -> str:
        return json.dumps(self.to_dict(reference), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "Partition":
        signs = d.get("signs") or [1]
        return cls(int(d["k"]), tuple(d["breakpoints"]), int(signs[0]))


def lipschitz_constant(partition: Partition) -> float:
    """max over cells of max(k l, 1/(k l)); always >= 1."""
    kl = partition.k * partition.lengths
    return float(max(1.0, np.max(np.maximum(kl, 1.0 / kl))))


def uniform_partition(spec: ProblemSpec, k: int, J: int, L_bound: float | None = None,
                      first_sign: int = 1) -> Partition:
    """J equal cells stretched over [a, b] (covering mode)."""
    if J < 1 or k < 1:
        raise InfeasiblePartition(f"need J >= 1 and k >= 1, got k={k}, J={J}")
    y = np.linspace(spec.a, spec.b, J + 1)
    y[0], y[-1] = spec.a, spec.b
    part = Partition(k, tuple(y), first_sign)
    if L_bound is not None:
        kl = k * spec.length / J
        need = max(kl, 1.0 / kl)
        if need > L_bound * (1 + 1e-12):
            raise InfeasiblePartition(
                f"uniform partition (k={k}, J={J}) has L = {need:.6g} > L_bound = {L_bound:.6g}")
    return part


@dataclass(frozen=True)
class DeformationMetrics:
    lipschitz_L: float
    distance_to_reference: float
    sup_distance: float
    lip_distance: float


def _reference_nodes(k: int, J: int) -> np.ndarray:
    return np.arange(J + 1) / k


def deformation_distance(T: Partition, T0: Partition) -> DeformationMetrics:
    """Exact d_k for the piecewise-affine representatives of two partitions.

    Both maps live on the reference grid {0, 1/k, ..., J/k}; their difference is
    piecewise affine with the same kinks, so its sup is attained at a node and
    its Lipschitz seminorm is the largest slope difference.
    """
    if T.k != T0.k or T.J != T0.J:
        raise ValueError(f"mismatched reference grids: (k={T.k}, J={T.J}) vs (k={T0.k}, J={T0.J})")
    diff = np.asarray(T.breakpoints) - np.asarray(T0.breakpoints)
    sup = float(np.max(np.abs(diff)))
    lip = float(np.max(np.abs(np.diff(diff)) * T.k))
    return DeformationMetrics(lipschitz_constant(T), sup + lip, sup, lip)


def is_interior(distances: Sequence[float], radius: float) -> bool:
    """Trailing-window check for the d_k < r condition on a k-sweep (empirical)."""
    tail = list(distances)[-max(1, len(distances) // 2):]
    return max(tail) < radius
