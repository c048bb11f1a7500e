import numpy as np
import pytest

from nfloc.array_model import ArrayConfig, coupling_matrix, exact_steering
from nfloc.estimators import SearchGrid

from oracles import noiseless_noise_basis


@pytest.fixture
def cfg():
    return ArrayConfig(num_elements=5, element_spacing=0.5, coupling_support=3)


@pytest.fixture
def fine_grid(cfg):
    return SearchGrid.for_array(cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture
def noiseless_basis(cfg):
    """Noise subspace of a single noiseless coupled source."""
    def make(doa, r0, c):
        u = coupling_matrix(cfg, c) @ exact_steering(cfg, doa, r0)
        return noiseless_noise_basis(u)
    return make


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one pass/fail line per acceptance criterion and assert it."""
    def _report(name, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] {name}" + (f": {detail}" if detail else "")
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
