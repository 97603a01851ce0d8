import math

import numpy as np
import pytest
from hypothesis import strategies as st

from apstab.freqlat import FrequencyBasis
from apstab.trigpoly import TrigPoly

SQ2 = math.sqrt(2)

B2 = FrequencyBasis.of("1", "sqrt(2)")


def decaying_coefficient():
    one, r2 = B2.unit(0), B2.unit(1)
    return TrigPoly.cos(one) + TrigPoly.cos(r2) - TrigPoly.constant(B2, 2.0)


def bounded_coefficient():
    return TrigPoly.exp(B2.unit(0)) + TrigPoly.exp(B2.unit(1))


def decaying_closed_form(t):
    return math.exp(-2 * t + math.sin(t) + math.sin(SQ2 * t) / SQ2)


@pytest.fixture
def basis():
    return B2


@pytest.fixture
def a_decaying():
    return decaying_coefficient()


@pytest.fixture
def a_bounded():
    return bounded_coefficient()


coords = st.tuples(st.integers(-3, 3), st.integers(-3, 3))
small_complex = st.builds(complex, st.floats(-2, 2, allow_nan=False), st.floats(-2, 2, allow_nan=False))


@st.composite
def trig_polys(draw, max_terms=4, zero_free=False):
    """Random scalar polynomials over the basis [1, sqrt(2)] with small integer coordinates."""
    terms = draw(st.lists(st.tuples(coords, small_complex), max_size=max_terms))
    if zero_free:
        terms = [(c, z) for c, z in terms if c != (0, 0)]
    if not terms:
        return TrigPoly.zero(B2)
    return TrigPoly.from_terms(B2, [(B2.freq(*c), z) for c, z in terms])


def sample_times(n=200, span=50.0, seed=0):
    return np.random.default_rng(seed).uniform(-span, span, n)


# acceptance criteria: one summary line per criterion after the run
_ACCEPTANCE: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or (rep.when != "call" and not rep.failed):
        return
    number, title = marker.args
    entry = _ACCEPTANCE.setdefault(number, [title, True])
    entry[1] = entry[1] and rep.passed


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, ok = _ACCEPTANCE[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {number:2d}. {title}")
