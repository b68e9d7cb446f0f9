import numpy as np
import pytest

from gesbo.design_space import ParameterSpace
from gesbo.spectrum import ComplexSpectrum, FrequencyGrid


class AffineSolver:
    """Spectrum exactly affine in x: s(x) = s0 + J (x - x0); its Taylor model is exact."""

    def __init__(self, space, grid, s0, jac, x0=None):
        self.space = space
        self.grid = grid
        self.s0 = np.asarray(s0, dtype=complex)
        self.jac = np.asarray(jac, dtype=complex).reshape(len(grid), space.dim)
        self.x0 = space.lower.copy() if x0 is None else np.asarray(x0, dtype=float)
        self.calls = 0

    def respond(self, x):
        self.calls += 1
        s = self.s0 + self.jac @ (np.asarray(x) - self.x0)
        return ComplexSpectrum.from_complex(self.grid, s), self.jac.real.copy(), self.jac.imag.copy()


class FailingSolver:
    """Wraps a solver and raises on the calls whose 1-based index is in ``fail_on``."""

    def __init__(self, inner, fail_on=()):
        self.inner = inner
        self.space = inner.space
        self.grid = inner.grid
        self.fail_on = set(fail_on)
        self.calls = 0

    def respond(self, x):
        self.calls += 1
        if self.calls in self.fail_on:
            raise RuntimeError("mesh generation failed")
        return self.inner.respond(x)


@pytest.fixture
def grid2():
    return FrequencyGrid([1.0, 2.0])


@pytest.fixture
def unit_space1():
    return ParameterSpace([("x", 0.0, 1.0)])


@pytest.fixture
def unit_space2():
    return ParameterSpace([("x", 0.0, 1.0), ("y", 0.0, 1.0)])


# -- acceptance reporting ------------------------------------------------------------

_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


class AcceptanceRecorder:
    """Collects one verdict per acceptance criterion; several tests may feed one criterion."""

    def __init__(self, number):
        self.number = number
        self.notes = []

    def note(self, text):
        self.notes.append(text)


@pytest.fixture
def criterion(request):
    marker = request.node.get_closest_marker("criterion")
    rec = AcceptanceRecorder(marker.args[0])
    yield rec
    ok = request.node.rep_call.passed if hasattr(request.node, "rep_call") else False
    prev_ok, prev_text = _ACCEPTANCE.get(rec.number, (True, ""))
    text = "; ".join(t for t in (prev_text, *rec.notes) if t)
    _ACCEPTANCE[rec.number] = (prev_ok and ok, text)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, text = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {text}")
