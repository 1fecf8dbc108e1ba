import math

import numpy as np
import pytest

from conftest import arc_observation, full_observation, random_point, random_table
from wavegram import observability as ob
from wavegram.errors import CriticalTimeNotFound
from wavegram.phase_flow import CIRCLE, FlatTorus, PhasePoint, RoundSphere2, flow, involution
from wavegram.symbols import MatrixSymbol, ZeroOrderCoupling, bump_indicator, const


def test_full_observation_kappa():
    sc = full_observation()
    for T in (0.5, 2.0, 6.0):
        res = ob.kappa(sc, T)
        assert res.kappa == pytest.approx(T / 4, abs=1e-10)
        assert res.c_obs == pytest.approx(2 / T, rel=1e-9)
        assert res.c_obs * 2 * res.kappa == pytest.approx(1.0)


def test_full_observation_on_sphere_and_torus2():
    for m in (RoundSphere2(), FlatTorus(2 * math.pi, 2 * math.pi)):
        sc = ob.ObservabilityScenario(m, 1, 1, observation=MatrixSymbol(1, 1, ((const(1.0),),)), n_x=4, n_dir=3,
                                      n_steps=64)
        assert ob.kappa(sc, 1.0).kappa == pytest.approx(0.25, abs=1e-12)


def test_unobserved_gives_zero():
    sc = arc_observation(n_x=32)
    res = ob.kappa(sc, 1.0)
    assert res.kappa == 0.0 and res.c_obs == math.inf
    with pytest.raises(CriticalTimeNotFound):
        ob.t_crit(sc, 0.1, 2.0)


def test_horizon_above_t_max():
    with pytest.raises(ValueError):
        ob.kappa(full_observation(T_max=1.0), 2.0)


def test_arc_critical_time():
    # every ray meets the open arc of half-width r_eff once it travels 2 pi - 2 r_eff
    sc = arc_observation(n_x=32)
    res = ob.t_crit(sc, 1.0, tol_T=1e-3)
    step = max(2 * math.pi / sc.n_x, sc.T_max / sc.n_steps)
    assert abs(res.t_crit - 1.5 * math.pi) <= max(2 * step, 2e-3)
    assert res.bracket[0] < res.t_crit < res.bracket[1]


def test_obs_constant_blows_up_near_t_crit():
    sc = arc_observation(n_x=32, n_steps=1024)
    sc.T_max = 4 * math.pi
    tc = ob.t_crit(sc, 1.0, 2 * math.pi, 1e-3).t_crit
    assert ob.obs_constant(sc, tc + 1e-3) >= 10 * ob.obs_constant(sc, 2 * tc)


def test_parity_inference_matches_direct(rng):
    # parity symbols: no order-1 part, so G+ at sigma(rho) equals G- at rho
    a = MatrixSymbol(2, 2, random_table(rng, 2, 2))
    d = MatrixSymbol(1, 2, random_table(rng, 1, 2))
    sc = ob.ObservabilityScenario(CIRCLE, 2, 1, a, d, n_x=8, n_steps=128)
    assert sc.parity
    rows = ob._rows(sc, sc.sample(), 2.0)
    for r in rows:
        if r.inferred:
            direct = ob.branch_gramian(sc, r.rho, "+", 2.0)
            assert r.min_eig == pytest.approx(direct.min_eig, abs=1e-10)


def test_threads_do_not_change_results(rng):
    a = MatrixSymbol(2, 2, random_table(rng, 2, 2), random_table(rng, 2, 2))
    d = MatrixSymbol(1, 2, random_table(rng, 1, 2))
    one = ob.ObservabilityScenario(CIRCLE, 2, 1, a, d, n_x=80, n_steps=64)
    four = ob.ObservabilityScenario(CIRCLE, 2, 1, a, d, n_x=80, n_steps=64, threads=4)
    g1 = ob.batch_gramians(one, one.sample(), -1, 3.0)
    g4 = ob.batch_gramians(four, four.sample(), -1, 3.0)
    assert np.array_equal(g1, g4)


def test_zero_order_cascade_ray_gramian():
    # constant cascade: the - branch ray system is drift A/2, control B/2
    z = const(0.0)
    coupling = ZeroOrderCoupling(((z, z), (const(-1.0), z)), ((const(1.0),), (z,)), (1, 1))
    sc = ob.ObservabilityScenario(CIRCLE, 2, 1, order_zero=coupling, n_x=4, n_steps=64)
    G = ob.branch_gramian(sc, PhasePoint((0.3,), (1.0,)), "-", 1.0).matrix
    assert np.allclose(G, 0.25 * np.array([[1, 0.25], [0.25, 1 / 12]]), atol=1e-12)
    Gp = ob.branch_gramian(sc, PhasePoint((0.3,), (1.0,)), "+", 1.0)
    assert Gp.min_eig == pytest.approx(np.linalg.eigvalsh(G)[0], rel=1e-9)


def test_kappa_curve_nondecreasing():
    sc = arc_observation(n_x=16, n_steps=400)
    horizons = [k * sc.T_max / 20 for k in range(1, 21)]
    curve = ob.kappa_curve(sc, horizons)
    assert np.all(np.diff(curve) >= -1e-10)
    assert curve[-1] > 0


def test_transport_matches_ray_resolvent(rng):
    a = MatrixSymbol(2, 2, random_table(rng, 2, 2, time=True), random_table(rng, 2, 2))
    d = MatrixSymbol(1, 2, random_table(rng, 1, 2))
    sc = ob.ObservabilityScenario(CIRCLE, 2, 1, a, d)
    for branch in (-1, 1):
        rho = random_point(rng)
        tau, t = 0.4, 1.7
        lhs = ob.transport_resolvent(sc, rho, branch, tau, t)
        rhs = ob.ray_resolvent(sc, flow(CIRCLE, rho, branch * t), branch, tau, t).conj().T
        assert np.linalg.norm(lhs - rhs) < 1e-8


def test_analyze_report():
    rep = ob.analyze(full_observation(), 2.0, with_t_crit=True)
    assert rep.kappa == pytest.approx(0.5)
    assert rep.t_crit is not None and rep.t_crit <= 0.01
    assert rep.ucp_status == "NotApplicable"
    assert rep.metadata["criterion"] == "min_eig"
    assert min(r.min_eig for r in rep.per_point) == pytest.approx(rep.kappa)


def test_inferred_rows_are_involutions():
    sc = full_observation(n_x=4)
    rows = ob._rows(sc, sc.sample(), 1.0)
    base = [r for r in rows if not r.inferred]
    inf = [r for r in rows if r.inferred]
    assert [r.rho for r in inf] == [involution(r.rho) for r in base]
    assert all(r.branch == 1 for r in inf)


def test_ucp_status_on_arc_cascade():
    z = const(0.0)
    omega = bump_indicator((0.0,), 0.5, 1.0)
    coupling = ZeroOrderCoupling(((z, z), (const(1.0), z)), ((omega,), (z,)), (1, 1))
    sc = ob.ObservabilityScenario(CIRCLE, 2, 1, order_zero=coupling, n_x=4)
    v = ob.ucp_status(sc)
    assert v.kalman_transposed and v.satisfied_assumption == "One"
