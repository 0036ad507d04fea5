import numpy as np
import pytest

from checksolve import ForcingSpec, OuterOptions, ProblemSpec, glue, optimize_partition

H_REF = 1e-3
SWEEP_K = (8, 16, 32, 64)

# acceptance results, filled by tests/test_acceptance.py
AC_RESULTS: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not AC_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(AC_RESULTS, key=lambda s: int(s.split("-")[1])):
        ok, detail = AC_RESULTS[key]
        terminalreporter.write_line(f"{key} {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def ref_spec():
    return ProblemSpec(forcing=ForcingSpec.of(("sinusoid", (2.0, 3.0))))


@pytest.fixture(scope="session")
def zero_spec():
    return ProblemSpec()


@pytest.fixture(scope="session")
def ref_k8(ref_spec):
    state = optimize_partition(ref_spec, 8, 8, 1.5, h=H_REF)
    return state, glue(state, ref_spec)


@pytest.fixture(scope="session")
def ref_sweep(ref_spec):
    return {k: optimize_partition(ref_spec, k, k, 1.5, h=H_REF) for k in SWEEP_K}


@pytest.fixture(scope="session")
def zero_sweep(zero_spec):
    return {k: optimize_partition(zero_spec, k, k, 1.5, h=H_REF, options=OuterOptions(multistart=1))
            for k in SWEEP_K}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
