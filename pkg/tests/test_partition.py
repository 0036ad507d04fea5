import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from checksolve.cellsolve import CellTooLarge, solve_cell
from checksolve.model import (ForcingSpec, Partition, ProblemSpec, deformation_distance,
                              uniform_partition)
from checksolve.oracle import adversarial_forcing
from checksolve.partition import (MaxOuterIterations, OuterOptions, StalledOnBoundary,
                                  breakpoint_gradient, cell_nodes_for_spacing, flux_gradient,
                                  optimize_partition, total_energy)

SIN3 = ForcingSpec.of(("sinusoid", (2.0, 3.0)))


def _fd_gradient(spec, part, m, eps):
    out = []
    for i in range(1, part.J):
        y = np.array(part.breakpoints)
        vals = []
        for s in (eps, -eps):
            yy = y.copy()
            yy[i] += s
            vals.append(total_energy(spec, Partition(part.k, tuple(yy), part.first_sign), m).total_energy)
        out.append((vals[0] - vals[1]) / (2 * eps))
    return np.array(out)


def test_total_energy_uniform_scaling():
    p, m = 3.0, 120
    spec = ProblemSpec(p=p)
    E1 = solve_cell(spec, 0.0, 1.0, m, 1).energy
    for J in (2, 3, 5):
        state = total_energy(spec, uniform_partition(spec, J, J), m)
        assert state.total_energy == pytest.approx(J ** ((2 * p + 2) / (p - 1)) * E1, rel=1e-2)
        assert np.max(np.abs(state.flux_mismatches)) <= 1e-9 * state.max_flux


def test_total_energy_single_cell():
    spec = ProblemSpec(forcing=SIN3)
    state = total_energy(spec, Partition(1, (0.0, 1.0)), 200)
    assert state.total_energy == state.cells[0].energy
    assert state.flux_mismatches.size == 0


def test_total_energy_is_recomputed_sum():
    spec = ProblemSpec(forcing=SIN3)
    state = total_energy(spec, uniform_partition(spec, 6, 6), 80)
    assert state.total_energy == pytest.approx(math.fsum(c.energy for c in state.cells), rel=1e-15)


def test_cell_failure_carries_index():
    base = ProblemSpec()
    spec = base.with_forcing(adversarial_forcing(base, 3, 1.0))
    with pytest.raises(CellTooLarge) as info:
        total_energy(spec, uniform_partition(spec, 3, 3), 200)
    assert info.value.index == 0


def test_gradient_zero_for_symmetric_uniform():
    spec = ProblemSpec()
    state = total_energy(spec, uniform_partition(spec, 4, 4), 100)
    assert np.max(np.abs(breakpoint_gradient(state, spec))) <= 1e-9 * state.total_energy


def test_two_cell_gradient_pushes_to_middle():
    spec = ProblemSpec()
    part = Partition(2, (0.0, 0.4, 1.0))
    state = total_energy(spec, part, 150)
    g = breakpoint_gradient(state, spec)
    fd = _fd_gradient(spec, part, 150, 1e-6)
    assert g[0] < 0 and fd[0] < 0
    assert g[0] == pytest.approx(fd[0], rel=1e-4)
    # the shorter cell carries the larger flux
    assert abs(state.cells[0].flux_right) > abs(state.cells[1].flux_left)


@settings(max_examples=8, deadline=None)
@given(st.integers(3, 5).flatmap(lambda J: st.lists(st.floats(0.7, 1.3), min_size=J, max_size=J)),
       st.sampled_from(["zero", "sin", "sign"]))
def test_gradient_matches_finite_differences(raw, forcing):
    base = ProblemSpec()
    w = {"zero": ForcingSpec.zero(), "sin": SIN3,
         "sign": ForcingSpec.of(("sign-eigen", (5.0, 3, 0.0, 1.0)))}[forcing]
    spec = base.with_forcing(w)
    J = len(raw)
    lengths = np.asarray(raw) / np.sum(raw)
    part = Partition.from_lengths(J, 0.0, lengths)
    part = Partition(J, part.breakpoints[:-1] + (1.0,))
    m = 60
    state = total_energy(spec, part, m)
    g = breakpoint_gradient(state, spec)
    fd = _fd_gradient(spec, part, m, 1e-6)
    # central differences carry round-off of order 1e-16 |E| / eps
    floor = 1e-9 * abs(state.total_energy)
    assert np.max(np.abs(g - fd)) <= 1e-4 * np.max(np.abs(fd)) + floor


def test_flux_gradient_consistent_to_second_order():
    spec = ProblemSpec(forcing=SIN3)
    part = Partition(3, (0.0, 0.3, 0.62, 1.0))
    errs = []
    for m in (100, 200):
        state = total_energy(spec, part, m)
        g = breakpoint_gradient(state, spec)
        errs.append(np.max(np.abs(flux_gradient(state) - g)) / np.max(np.abs(g)))
    assert errs[0] < 1e-2
    assert errs[1] < errs[0] / 3


def test_symmetric_zero_forcing_converges_to_uniform():
    spec = ProblemSpec()
    state = optimize_partition(spec, 4, 5, 1.5, m_per_cell=40, options=OuterOptions(multistart=3, seed=7))
    assert state.converged
    assert state.L == pytest.approx(5 / 4, abs=1e-7)
    assert np.allclose(state.partition.lengths, 0.2, atol=1e-7)


def test_outer_descent_and_feasibility(ref_k8):
    state, _ = ref_k8
    E = [row["total_energy"] for row in state.history]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(E, E[1:]))
    assert all(row["L"] <= state.L_bound for row in state.history)
    assert state.relative_flux_mismatch <= 1e-5
    assert state.interior_margin > 0


def test_history_csv(ref_k8):
    state, _ = ref_k8
    lines = state.history_csv().splitlines()
    assert lines[0] == "iter,total_energy,L,max_flux_mismatch,interior_margin"
    assert len(lines) == len(state.history) + 1


def test_sweep_reduces_distortion(ref_sweep):
    gaps = [ref_sweep[k].L - 1 for k in sorted(ref_sweep)]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))


def test_translation_covariance():
    shift = 0.3
    spec0 = ProblemSpec(forcing=SIN3)
    spec1 = ProblemSpec(shift, 1.0 + shift, forcing=ForcingSpec.of(("sinusoid", (2.0, 3.0, -3 * np.pi * shift))))
    opts = OuterOptions(multistart=1)
    s0 = optimize_partition(spec0, 6, 6, 1.5, m_per_cell=150, options=opts)
    s1 = optimize_partition(spec1, 6, 6, 1.5, m_per_cell=150, options=opts)
    assert np.allclose(np.asarray(s1.partition.breakpoints) - shift, s0.partition.breakpoints, atol=1e-9)
    assert s1.total_energy == pytest.approx(s0.total_energy, rel=1e-9)


def test_stalled_on_boundary_reported():
    spec = ProblemSpec(c_plus=1.0, c_minus=16.0)
    with pytest.raises(StalledOnBoundary) as info:
        optimize_partition(spec, 8, 8, 1.2, m_per_cell=60, options=OuterOptions(multistart=1))
    assert info.value.state.interior_margin == pytest.approx(0.0, abs=1e-9)
    state = optimize_partition(spec, 8, 8, 1.2, m_per_cell=60, options=OuterOptions(multistart=1),
                               raise_on_boundary=False)
    assert state.L <= 1.2 * (1 + 1e-12)


def test_max_outer_iterations():
    spec = ProblemSpec(forcing=SIN3)
    with pytest.raises(MaxOuterIterations):
        optimize_partition(spec, 8, 8, 1.5, m_per_cell=60, options=OuterOptions(multistart=1, max_iter=0))


def test_asymmetric_lengths_alternate():
    spec = ProblemSpec(c_plus=1.0, c_minus=16.0)
    state = optimize_partition(spec, 16, 16, 2.0, m_per_cell=80, options=OuterOptions(multistart=1))
    lengths = state.partition.lengths
    # t_hat = 4/3 for (1, 16) and p = 3, so the ratio is 2
    assert np.allclose(lengths[0::2] / lengths[1::2], 2.0, rtol=1e-6)
    assert state.L == pytest.approx(1.5, rel=1e-6)


def test_restricted_ball():
    spec = ProblemSpec(c_plus=1.0, c_minus=16.0)
    ref = uniform_partition(spec, 8, 8)
    radius = 0.2
    state = optimize_partition(spec, 8, 8, 2.0, m_per_cell=60, reference=ref, radius=radius,
                               options=OuterOptions(multistart=1))
    d = deformation_distance(state.partition, ref).distance_to_reference
    assert d <= radius * (1 + 1e-6)
    free = optimize_partition(spec, 8, 8, 2.0, m_per_cell=60, options=OuterOptions(multistart=1))
    assert deformation_distance(free.partition, ref).distance_to_reference > radius
    assert state.total_energy >= free.total_energy


def test_multistart_deterministic():
    spec = ProblemSpec(forcing=SIN3)
    opts = OuterOptions(multistart=3, seed=11)
    a = optimize_partition(spec, 6, 6, 1.5, m_per_cell=50, options=opts)
    b = optimize_partition(spec, 6, 6, 1.5, m_per_cell=50, options=opts)
    assert a.partition.breakpoints == b.partition.breakpoints
    assert a.total_energy == b.total_energy


def test_threads_give_identical_results(monkeypatch):
    spec = ProblemSpec(forcing=SIN3)
    opts = OuterOptions(multistart=1)
    monkeypatch.setenv("CHECKSOLVE_THREADS", "1")
    a = optimize_partition(spec, 8, 8, 1.5, m_per_cell=50, options=opts)
    monkeypatch.setenv("CHECKSOLVE_THREADS", "3")
    b = optimize_partition(spec, 8, 8, 1.5, m_per_cell=50, options=opts)
    assert a.partition.breakpoints == b.partition.breakpoints


def test_cell_nodes_for_spacing():
    assert cell_nodes_for_spacing([0.125, 0.25], 1e-3) == [124, 249]
    assert cell_nodes_for_spacing([1e-4], 1e-3) == [3]
