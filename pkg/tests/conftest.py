import numpy as np
import pytest

from cohortstrat.cohort import PatientRecord
from cohortstrat.synth import SynthConfig, generate, planted_block_graph


def rec(pid, phenos=(), muts=(), gender="female", label="lung"):
    return PatientRecord(pid, frozenset(phenos), frozenset(muts), gender, label)


@pytest.fixture(scope="session")
def default_cohort():
    return generate(SynthConfig(seed=0))


@pytest.fixture(scope="session")
def small_cohort():
    return generate(SynthConfig(patients_per_class=(30,) * 7, seed=1))


@pytest.fixture(scope="session")
def planted():
    return planted_block_graph(seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
