import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wavegram.errors import InvalidPhasePoint
from wavegram.phase_flow import (
    CIRCLE,
    FlatTorus,
    PhasePoint,
    RoundSphere2,
    flow,
    flow_arrays,
    involution,
    refine_around,
    sample_cosphere,
    tangent_frame,
    validate,
)

SPHERE = RoundSphere2()
T2 = FlatTorus(2 * math.pi, 3.0)

times = st.floats(-20, 20, allow_nan=False)
angles = st.floats(0, 2 * math.pi, allow_nan=False)


def sphere_point(a, b, c):
    x = np.array([math.cos(a) * math.sin(b), math.sin(a) * math.sin(b), math.cos(b)])
    if np.linalg.norm(x) < 0.5:
        x = np.array([0.0, 0.0, 1.0])
    x /= np.linalg.norm(x)
    u1, u2 = tangent_frame(x)
    return PhasePoint.of(x, math.cos(c) * u1 + math.sin(c) * u2)


def close(m, p, q, tol=1e-10):
    return float(m.distance(p.x_array, q.x_array)) < tol and np.allclose(p.xi, q.xi, atol=tol)


def test_circle_flow_trivial():
    p = flow(CIRCLE, PhasePoint((1.0,), (1.0,)), 0.5)
    assert p.x[0] == pytest.approx(1.5) and p.xi == (1.0,)
    q = flow(CIRCLE, PhasePoint((0.25,), (-1.0,)), 0.5)
    assert q.x[0] == pytest.approx(2 * math.pi - 0.25)


def test_sphere_quarter_turn():
    p = flow(SPHERE, PhasePoint((0.0, 0.0, 1.0), (1.0, 0.0, 0.0)), math.pi / 2)
    assert np.allclose(p.x, (1.0, 0.0, 0.0), atol=1e-15)
    assert np.allclose(p.xi, (0.0, 0.0, -1.0), atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(x=st.floats(0, 6.28), y=st.floats(0, 3.0), th=angles, s=times, t=times)
def test_torus_group_law(x, y, th, s, t):
    p = PhasePoint.of((x, y), (math.cos(th), math.sin(th)))
    assert close(T2, flow(T2, flow(T2, p, s), t), flow(T2, p, s + t), 1e-9)


@settings(max_examples=60, deadline=None)
@given(a=angles, b=st.floats(0.1, 3.0), c=angles, s=times, t=times)
def test_sphere_group_law_and_cosphere(a, b, c, s, t):
    p = sphere_point(a, b, c)
    q = flow(SPHERE, p, s)
    validate(SPHERE, PhasePoint.of(q.x_array / np.linalg.norm(q.x), q.xi_array / np.linalg.norm(q.xi)))
    assert abs(np.linalg.norm(q.x) - 1) < 1e-12 and abs(q.x_array @ q.xi_array) < 1e-12
    assert close(SPHERE, flow(SPHERE, q, t), flow(SPHERE, p, s + t), 1e-9)


@settings(max_examples=60, deadline=None)
@given(a=angles, b=st.floats(0.1, 3.0), c=angles, t=times)
def test_reversibility(a, b, c, t):
    p = sphere_point(a, b, c)
    lhs = flow(SPHERE, involution(p), -t)
    rhs = involution(flow(SPHERE, p, t))
    assert close(SPHERE, lhs, rhs, 1e-9)
    q = PhasePoint.of((a,), (1.0,))
    assert close(CIRCLE, flow(CIRCLE, involution(q), -t), involution(flow(CIRCLE, q, t)))


def test_sphere_period_2pi():
    p = sphere_point(0.3, 1.1, 2.0)
    assert close(SPHERE, flow(SPHERE, p, 2 * math.pi), p, 1e-12)


def test_flow_arrays_broadcasts():
    x = np.array([[0.0], [1.0]])
    xi = np.array([[1.0], [-1.0]])
    t = np.array([[0.5, 1.0, 2.0]])
    X, XI = flow_arrays(CIRCLE, x[:, None, :], xi[:, None, :], t.T[None, :, 0])
    assert X.shape == (2, 3, 1)
    assert X[1, 2, 0] == pytest.approx(2 * math.pi - 1.0)


def test_validate_rejects():
    with pytest.raises(InvalidPhasePoint):
        validate(CIRCLE, PhasePoint((0.0,), (0.5,)))
    with pytest.raises(InvalidPhasePoint):
        validate(SPHERE, PhasePoint((0.0, 0.0, 1.0), (0.0, 0.0, 1.0)))
    with pytest.raises(InvalidPhasePoint):
        validate(T2, PhasePoint((0.0,), (1.0,)))


def test_unsupported_manifold():
    with pytest.raises(ValueError):
        FlatTorus(1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        FlatTorus(-1.0)


def test_sample_order_and_count():
    pts = sample_cosphere(CIRCLE, 4, 5)
    assert [p.xi[0] for p in pts[:4]] == [1.0, -1.0, 1.0, -1.0]
    assert len(pts) == 8
    assert len(sample_cosphere(T2, 3, 4)) == 36
    sph = sample_cosphere(SPHERE, 10, 3)
    assert len(sph) == 30
    for p in sph:
        validate(SPHERE, p)


def test_refine_points_are_valid():
    for m, p in [(CIRCLE, PhasePoint((0.1,), (1.0,))), (T2, PhasePoint((0.1, 0.2), (0.6, 0.8))),
                 (SPHERE, sphere_point(0.2, 0.9, 0.4))]:
        for q in refine_around(m, p, 16, 4):
            validate(m, PhasePoint.of(q.x, np.asarray(q.xi) / np.linalg.norm(q.xi)))
