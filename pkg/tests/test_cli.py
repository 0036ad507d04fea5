import csv
import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from checksolve import cli
from checksolve.config import ConfigError, Gates, RunConfig, emit_config, parse_config
from checksolve.model import ForcingSpec, ProblemSpec
from checksolve.partition import OuterOptions

FAST = """
partition.k = 4
grid.h = 1e-3
outer.multistart = 1
gates.shooting_sup = none
"""


def _run(tmp_path, text, *args, name="run.cfg"):
    cfg = tmp_path / name
    cfg.write_text(text)
    return cli.main([*args, "--config", str(cfg), "--out", str(tmp_path / "out")])


def _json_lines(s):
    return [json.loads(line) for line in s.strip().splitlines()]


# -- config -----------------------------------------------------------------------

forcing_st = st.lists(
    st.one_of(
        st.tuples(st.just("constant"), st.tuples(st.floats(-5, 5))),
        st.tuples(st.just("sinusoid"), st.tuples(st.floats(-5, 5), st.floats(0.5, 6), st.floats(-3, 3))),
        st.tuples(st.just("polynomial"), st.lists(st.floats(-5, 5), min_size=1, max_size=4).map(tuple))),
    max_size=3)


@settings(max_examples=60, deadline=None)
@given(forcing_st, st.floats(1.2, 7.0), st.floats(0.1, 20), st.floats(0.1, 20),
       st.lists(st.integers(1, 200), min_size=1, max_size=5, unique=True).map(sorted),
       st.one_of(st.none(), st.integers(1, 50)), st.floats(1.0, 4.0), st.sampled_from([1, -1]),
       st.floats(1e-7, 1e-2), st.integers(0, 2**31), st.floats(1e-9, 1.0),
       st.sets(st.sampled_from(["json", "csv", "svg"]), min_size=1))
def test_config_round_trip(terms, p, cp, cm, ks, J, Lb, sign, h, seed, gate, emit):
    spec = ProblemSpec(0.0, 1.0, p, cp, cm, ForcingSpec.of(*terms))
    cfg = RunConfig(problem=spec, k=tuple(ks), J=J, L_bound=Lb, first_sign=sign, h=h,
                    outer=OuterOptions(seed=seed), emit=tuple(sorted(emit)),
                    gates=Gates(flux=gate, shooting_sup=math.inf))
    assert parse_config(emit_config(cfg)) == cfg


def test_default_config_round_trip():
    assert parse_config(emit_config(RunConfig())) == RunConfig()


@pytest.mark.parametrize("text, match", [
    ("problem.q = 1", "unknown key"),
    ("problem.p = 3\nproblem.p = 4", "duplicate"),
    ("problem.p", "expected 'key = value'"),
    ("problem.p = three", "problem.p"),
    ("problem.p = 1", "problem"),
    ("partition.L_bound = 0.5", "L_bound"),
    ("partition.k = 8, 4", "ascending"),
    ("adversarial.margin = 0", "margin"),
    ("run.emit = json, pdf", "emit"),
    ("problem.forcing = gaussian(1)", "forcing"),
    ("grid.h = -1", "grid.h"),
])
def test_config_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_comments_and_blank_lines():
    cfg = parse_config("# heading\n\npartition.k = 4, 8  # two runs\n")
    assert cfg.k == (4, 8)
    assert cfg.cells_for(8) == 8


def test_show_config_prints_effective_config(tmp_path, capsys):
    assert _run(tmp_path, FAST, "show-config") == 0
    printed = capsys.readouterr().out
    cfg = parse_config(printed)
    assert cfg.k == (4,) and cfg.output_dir == str(tmp_path / "out")


# -- exit codes ---------------------------------------------------------------------

def test_infeasible_config_rejected_before_solving(tmp_path, capsys, monkeypatch):
    monkeypatch.setattr(cli, "run_solve", lambda *a, **k: pytest.fail("solver must not run"))
    code = _run(tmp_path, "partition.k = 8\npartition.J = 7\npartition.L_bound = 1.0\n", "solve")
    assert code == cli.EXIT_CONFIG
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "InfeasiblePartition"


def test_zero_margin_rejected(tmp_path):
    assert _run(tmp_path, "adversarial.margin = 0\n", "adversarial") == cli.EXIT_CONFIG


def test_missing_config_file(tmp_path):
    assert cli.main(["solve", "--config", str(tmp_path / "nope.cfg")]) == cli.EXIT_CONFIG


def test_solver_failure_exit_code(tmp_path, capsys):
    text = "partition.k = 1\nproblem.forcing = constant(400)\ngrid.h = 1e-2\n"
    assert _run(tmp_path, text, "solve") == cli.EXIT_SOLVER
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "CellFailure" and "cell 0" in err["message"]


# -- subcommands ----------------------------------------------------------------------

def test_solve_writes_outputs(tmp_path, capsys):
    assert _run(tmp_path, FAST, "solve") == 0
    out = tmp_path / "out"
    names = sorted(p.name for p in out.iterdir())
    assert names == ["diagnostics.json", "profile.csv", "profile.svg", "solution.json"]
    summary = _json_lines(capsys.readouterr().out)[-1]
    assert summary["passed"] and summary["interior_zeros"] == 3
    sol = json.loads((out / "solution.json").read_text())
    assert set(sol) >= {"problem", "partition", "solution"}
    diag = json.loads((out / "diagnostics.json").read_text())
    assert all(g["passed"] for g in diag["gates"])


def test_emit_subset(tmp_path):
    assert _run(tmp_path, FAST, "solve", "--emit", "csv") == 0
    assert [p.name for p in (tmp_path / "out").iterdir()] == ["profile.csv"]


def test_solve_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    text = FAST.replace("outer.multistart = 1", "outer.multistart = 3")
    assert _run(a, text, "solve", "--seed", "5") == 0
    assert _run(b, text, "solve", "--seed", "5") == 0
    for f in ("solution.json", "diagnostics.json", "profile.csv", "profile.svg"):
        assert (a / "out" / f).read_bytes() == (b / "out" / f).read_bytes()


def test_verify_round_trip_and_tamper(tmp_path):
    assert _run(tmp_path, FAST, "solve") == 0
    path = tmp_path / "out" / "solution.json"
    args = ["verify", str(path), "--config", str(tmp_path / "run.cfg"), "--emit", "json", "--out", str(tmp_path / "v")]
    assert cli.main(args) == 0
    assert (tmp_path / "v" / "verify.json").exists()
    data = json.loads(path.read_text())
    vals = data["solution"]["values"]
    vals[len(vals) // 3] *= 1.01
    path.write_text(json.dumps(data))
    assert cli.main(args) == cli.EXIT_GATE


def test_sweep(tmp_path):
    text = FAST.replace("partition.k = 4", "partition.k = 4, 8")
    assert _run(tmp_path, text, "sweep") == 0
    out = tmp_path / "out"
    assert (out / "k004" / "solution.json").exists() and (out / "k008" / "profile.csv").exists()
    rows = list(csv.DictReader((out / "sweep.csv").open()))
    assert list(rows[0]) == list(cli.SWEEP_COLUMNS)
    assert [int(r["zero_count"]) for r in rows] == [3, 7]
    assert float(rows[1]["total_energy"]) > float(rows[0]["total_energy"])
    assert (out / "trend_energy.svg").exists() and (out / "trend_L.svg").exists()


@pytest.mark.parametrize("k_eig", [2, 3])
def test_adversarial(tmp_path, capsys, k_eig):
    text = f"adversarial.k_eig = {k_eig}\ngrid.h = 1e-3\nouter.multistart = 1\nproblem.forcing = none\n"
    assert _run(tmp_path, text, "adversarial") == 0
    summary = _json_lines(capsys.readouterr().out)[-1]
    assert len(summary["zeros_selected"]) == k_eig - 1
    rep = json.loads((tmp_path / "out" / "localization.json").read_text())
    assert rep["passed"]


def test_split(tmp_path, capsys):
    text = "problem.forcing = none\nproblem.c_minus = 16\n"
    assert _run(tmp_path, text, "split") == 0
    summary = _json_lines(capsys.readouterr().out)[-1]
    assert summary["t_hat"] == pytest.approx(4 / 3, abs=1e-7)
    assert (tmp_path / "out" / "energy_curve.csv").exists()


def test_split_requires_zero_forcing(tmp_path):
    assert _run(tmp_path, "", "split") == cli.EXIT_CONFIG


def test_scaling(tmp_path, capsys):
    text = "problem.forcing = none\ngrid.h = 1e-3\n"
    assert _run(tmp_path, text, "scaling") == 0
    summary = _json_lines(capsys.readouterr().out)[-1]
    assert summary["slope"] == pytest.approx(-3.0, abs=1e-2)
    assert (tmp_path / "out" / "scaling.csv").exists()


def test_default_demo_solve(tmp_path, capsys):
    # built-in configuration: k = J = 16 with the shooting gate active
    assert cli.main(["solve", "--out", str(tmp_path / "demo")]) == 0
    summary = _json_lines(capsys.readouterr().out)[-1]
    assert summary["passed"] and summary["interior_zeros"] == 15
