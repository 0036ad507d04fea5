"""Run configuration: a flat ``dotted.key = value`` text format.

One setting per line, ``#`` starts a comment, unknown or repeated keys are
errors.  ``emit_config(parse_config(text))`` reproduces every value exactly
(floats are written with ``repr``).

Schema (defaults in brackets)::

    problem.a, problem.b            interval ends [0, 1]
    problem.p                       exponent > 1 [3]
    problem.c_plus, problem.c_minus positive coefficients [1, 1]
    problem.forcing                 'none' or terms joined by '+', e.g.
                                    'sinusoid(2, 3) + constant(0.5)' [sinusoid(2, 3)]
    partition.k                     k or an ascending list '8, 16, 32' [16]
    partition.J                     cell count or 'equal-to-k' [equal-to-k]
    partition.L_bound               Lipschitz bound >= 1 [1.5]
    partition.first_sign            sign of the first cell, 1 or -1 [1]
    grid.h                          target node spacing [3e-06]
    grid.m_per_cell                 'auto' (from grid.h) or interior nodes per cell [auto]
    outer.tol_step, outer.tol_floor, outer.max_iter, outer.multistart, outer.start_spread
    run.seed                        multistart seed [0]
    run.output_dir                  [checksolve-out]
    run.emit                        subset of json, csv, svg [json, csv, svg]
    shooting.step                   RK4 step [1e-4]
    stationarity.fields             number of sine test fields [8]
    adversarial.k_eig, adversarial.margin, adversarial.k_max   [3, 1.0, 64]
    scaling.lengths                 cell lengths for the scaling study [1, 0.5, 0.25, 0.125]
    gates.nehari, gates.cone, gates.flux, gates.stationarity, gates.residual,
    gates.shooting_sup, gates.scaling_slope    pass thresholds ('none' disables)
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, fields, replace

from .model import ForcingSpec, ForcingTerm, InfeasiblePartition, ProblemSpec, uniform_partition
from .partition import OuterOptions

EMIT_CHOICES = ("json", "csv", "svg")


class ConfigError(ValueError):
    pass


def demo_problem() -> ProblemSpec:
    return ProblemSpec(forcing=ForcingSpec.of(("sinusoid", (2.0, 3.0))))


@dataclass(frozen=True)
class Gates:
    nehari: float = 1e-8
    cone: float = 1e-12
    flux: float = 1e-5
    stationarity: float = 1e-5
    residual: float = 1e-6
    shooting_sup: float = 1e-5
    scaling_slope: float = 1e-2


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemSpec = field(default_factory=demo_problem)
    k: tuple[int, ...] = (16,)
    J: int | None = None                 # None means equal-to-k
    L_bound: float = 1.5
    first_sign: int = 1
    h: float = 3e-6
    m_per_cell: int | None = None
    outer: OuterOptions = field(default_factory=OuterOptions)
    output_dir: str = "checksolve-out"
    emit: tuple[str, ...] = EMIT_CHOICES
    shoot_step: float = 1e-4
    stationarity_fields: int = 8
    k_eig: int = 3
    margin: float = 1.0
    k_max: int = 64
    scaling_lengths: tuple[float, ...] = (1.0, 0.5, 0.25, 0.125)
    gates: Gates = field(default_factory=Gates)

    @property
    def seed(self) -> int:
        return self.outer.seed

    def cells_for(self, k: int) -> int:
        return k if self.J is None else self.J

    def with_overrides(self, **kw) -> "RunConfig":
        seed = kw.pop("seed", None)
        cfg = replace(self, **kw)
        if seed is not None:
            cfg = replace(cfg, outer=replace(cfg.outer, seed=int(seed)))
        return cfg


# -- value codecs ---------------------------------------------------------------

def _fmt_float(v: float) -> str:
    return "none" if math.isinf(v) else repr(float(v))


def _parse_float(s: str) -> float:
    if s.lower() in ("none", "inf"):
        return math.inf
    try:
        return float(s)
    except ValueError:
        raise ConfigError(f"not a number: {s!r}") from None


def _parse_int(s: str) -> int:
    try:
        return int(s)
    except ValueError:
        raise ConfigError(f"not an integer: {s!r}") from None


def _split_list(s: str) -> list[str]:
    return [t.strip() for t in s.split(",") if t.strip()]


_TERM = re.compile(r"^\s*([a-z-]+)\s*\(([^()]*)\)\s*$")


def format_forcing(w: ForcingSpec) -> str:
    if w.is_zero:
        return "none"
    return " + ".join(f"{t.kind}({', '.join(repr(v) for v in t.params)})" for t in w.terms)


def parse_forcing(s: str) -> ForcingSpec:
    if s.strip().lower() in ("none", "0", ""):
        return ForcingSpec.zero()
    terms = []
    for chunk in s.split("+"):
        m = _TERM.match(chunk)
        if not m:
            raise ConfigError(f"cannot parse forcing term {chunk.strip()!r}")
        try:
            terms.append(ForcingTerm(m.group(1), tuple(_parse_float(v) for v in _split_list(m.group(2)))))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    return ForcingSpec(tuple(terms))


# dotted key -> (getter, setter-kwargs builder)
def _problem_key(name, parse=_parse_float, fmt=_fmt_float):
    return (lambda c: fmt(getattr(c.problem, name)),
            lambda acc, v: acc["problem"].__setitem__(name, parse(v)))


def _top_key(name, parse, fmt):
    return (lambda c: fmt(getattr(c, name)), lambda acc, v: acc["top"].__setitem__(name, parse(v)))


def _sub_key(section, name, parse, fmt):
    return (lambda c: fmt(getattr(getattr(c, section), name)),
            lambda acc, v: acc[section].__setitem__(name, parse(v)))


def _fmt_ints(v):
    return ", ".join(str(i) for i in v)


def _fmt_floats(v):
    return ", ".join(repr(float(x)) for x in v)


SCHEMA = {
    "problem.a": _problem_key("a"),
    "problem.b": _problem_key("b"),
    "problem.p": _problem_key("p"),
    "problem.c_plus": _problem_key("c_plus"),
    "problem.c_minus": _problem_key("c_minus"),
    "problem.forcing": _problem_key("forcing", parse_forcing, format_forcing),
    "partition.k": _top_key("k", lambda s: tuple(_parse_int(t) for t in _split_list(s)), _fmt_ints),
    "partition.J": _top_key("J", lambda s: None if s == "equal-to-k" else _parse_int(s),
                            lambda v: "equal-to-k" if v is None else str(v)),
    "partition.L_bound": _top_key("L_bound", _parse_float, _fmt_float),
    "partition.first_sign": _top_key("first_sign", _parse_int, str),
    "grid.h": _top_key("h", _parse_float, _fmt_float),
    "grid.m_per_cell": _top_key("m_per_cell", lambda s: None if s == "auto" else _parse_int(s),
                                lambda v: "auto" if v is None else str(v)),
    "outer.tol_step": _sub_key("outer", "tol_step", _parse_float, _fmt_float),
    "outer.tol_floor": _sub_key("outer", "tol_floor", _parse_float, _fmt_float),
    "outer.max_iter": _sub_key("outer", "max_iter", _parse_int, str),
    "outer.multistart": _sub_key("outer", "multistart", _parse_int, str),
    "outer.start_spread": _sub_key("outer", "start_spread", _parse_float, _fmt_float),
    "run.seed": _sub_key("outer", "seed", _parse_int, str),
    "run.output_dir": _top_key("output_dir", str, str),
    "run.emit": _top_key("emit", lambda s: tuple(_split_list(s)), lambda v: ", ".join(v)),
    "shooting.step": _top_key("shoot_step", _parse_float, _fmt_float),
    "stationarity.fields": _top_key("stationarity_fields", _parse_int, str),
    "adversarial.k_eig": _top_key("k_eig", _parse_int, str),
    "adversarial.margin": _top_key("margin", _parse_float, _fmt_float),
    "adversarial.k_max": _top_key("k_max", _parse_int, str),
    "scaling.lengths": _top_key("scaling_lengths",
                                lambda s: tuple(_parse_float(t) for t in _split_list(s)), _fmt_floats),
}
for _g in fields(Gates):
    SCHEMA[f"gates.{_g.name}"] = _sub_key("gates", _g.name, _parse_float, _fmt_float)


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse the flat format on top of ``base`` (defaults if omitted) and validate."""
    base = base or RunConfig()
    acc = {"problem": {}, "top": {}, "outer": {}, "gates": {}}
    seen = set()
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        seen.add(key)
        try:
            SCHEMA[key][1](acc, value)
        except ConfigError as exc:
            raise ConfigError(f"line {n} ({key}): {exc}") from None
    try:
        problem = replace(base.problem, **acc["problem"])
    except ValueError as exc:
        raise ConfigError(f"problem: {exc}") from None
    cfg = replace(base, problem=problem, outer=replace(base.outer, **acc["outer"]),
                  gates=replace(base.gates, **acc["gates"]), **acc["top"])
    validate(cfg)
    return cfg


def emit_config(cfg: RunConfig) -> str:
    lines = ["# checksolve run configuration"]
    section = None
    for key, (get, _) in SCHEMA.items():
        head = key.split(".", 1)[0]
        if head != section:
            lines.append("")
            section = head
        lines.append(f"{key} = {get(cfg)}")
    return "\n".join(lines) + "\n"


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def validate(cfg: RunConfig) -> None:
    """Check every numeric field against the solver preconditions."""
    if not cfg.k or any(k < 1 for k in cfg.k):
        raise ConfigError("partition.k must list positive integers")
    if any(k1 <= k0 for k0, k1 in zip(cfg.k, cfg.k[1:])):
        raise ConfigError("partition.k must be strictly ascending")
    if cfg.J is not None and cfg.J < 1:
        raise ConfigError("partition.J must be >= 1")
    if not cfg.L_bound >= 1:
        raise ConfigError("partition.L_bound must be >= 1")
    if cfg.first_sign not in (1, -1):
        raise ConfigError("partition.first_sign must be 1 or -1")
    if not (cfg.h > 0 and math.isfinite(cfg.h)):
        raise ConfigError("grid.h must be positive")
    if cfg.m_per_cell is not None and cfg.m_per_cell < 3:
        raise ConfigError("grid.m_per_cell must be >= 3")
    o = cfg.outer
    if o.max_iter < 0 or o.multistart < 1 or not o.start_spread >= 0:
        raise ConfigError("outer: need max_iter >= 0, multistart >= 1, start_spread >= 0")
    if not (o.tol_step > 0 and o.tol_floor > 0):
        raise ConfigError("outer tolerances must be positive")
    bad = set(cfg.emit) - set(EMIT_CHOICES)
    if bad:
        raise ConfigError(f"run.emit: unknown formats {sorted(bad)}")
    if not cfg.shoot_step > 0:
        raise ConfigError("shooting.step must be positive")
    if cfg.stationarity_fields < 1:
        raise ConfigError("stationarity.fields must be >= 1")
    if cfg.k_eig < 1:
        raise ConfigError("adversarial.k_eig must be >= 1")
    if not cfg.margin > 0:
        raise ConfigError("adversarial.margin must be strictly positive")
    if cfg.k_max < 1:
        raise ConfigError("adversarial.k_max must be >= 1")
    if not cfg.scaling_lengths or any(not l > 0 for l in cfg.scaling_lengths):
        raise ConfigError("scaling.lengths must be positive")
    for g in fields(Gates):
        if not getattr(cfg.gates, g.name) > 0:
            raise ConfigError(f"gates.{g.name} must be positive")


def check_feasible(cfg: RunConfig) -> None:
    """Raise InfeasiblePartition if some k in the config admits no partition."""
    for k in cfg.k:
        uniform_partition(cfg.problem, k, cfg.cells_for(k), cfg.L_bound, cfg.first_sign)


__all__ = ["RunConfig", "Gates", "ConfigError", "InfeasiblePartition", "parse_config",
           "emit_config", "load_config", "validate", "check_feasible", "parse_forcing",
           "format_forcing", "demo_problem", "EMIT_CHOICES"]
