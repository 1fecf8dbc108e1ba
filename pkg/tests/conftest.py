import math
import sys

import numpy as np
import pytest

from wavegram.observability import ObservabilityScenario
from wavegram.phase_flow import CIRCLE, FlatTorus, PhasePoint
from wavegram.symbols import MatrixSymbol, TimeTrig, bump_indicator, const, trig


def random_trig(rng, dim=1, n_terms=3, kmax=2, real=False, time=False):
    """A trig polynomial with O(1) coefficients, optionally real and time-dependent."""
    terms = []
    for _ in range(n_terms):
        k = tuple(int(v) for v in rng.integers(-kmax, kmax + 1, size=dim))
        c = complex(rng.normal(), rng.normal())
        terms.append((k, c))
        if real:
            terms.append((tuple(-v for v in k), c.conjugate()))
    tf = None
    if time:
        w = float(rng.uniform(0.5, 2.0))
        tf = TimeTrig(((0.0, 1.0), (w, 0.3), (-w, 0.3)))
    return trig(terms, tf)


def random_table(rng, rows, cols, **kw):
    return tuple(tuple(random_trig(rng, **kw) for _ in range(cols)) for _ in range(rows))


def random_point(rng, m=CIRCLE):
    L = m.periods
    x = tuple(float(rng.uniform(0, p)) for p in L)
    if m.dim == 1:
        return PhasePoint.of(x, (float(rng.choice([-1.0, 1.0])),))
    th = rng.uniform(0, 2 * math.pi)
    return PhasePoint.of(x, (math.cos(th), math.sin(th)))


def full_observation(T_max=2 * math.pi, n_x=16, n_steps=256):
    return ObservabilityScenario(CIRCLE, 1, 1, observation=MatrixSymbol(1, 1, ((const(1.0),),)),
                                 T_max=T_max, n_x=n_x, n_steps=n_steps)


def arc_observation(r_in=math.pi / 8, r_out=math.pi / 4, n_x=64, n_steps=512):
    omega = bump_indicator((0.0,), r_in, r_out)
    return ObservabilityScenario(CIRCLE, 1, 1, observation=MatrixSymbol(1, 1, ((omega,),)),
                                 n_x=n_x, n_steps=n_steps)


@pytest.fixture
def rng():
    return np.random.default_rng(20261019)


@pytest.fixture
def torus2():
    return FlatTorus(2 * math.pi, 2 * math.pi)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
