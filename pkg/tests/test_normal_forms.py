import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wavegram import normal_forms as nf
from wavegram.errors import BadBlocks, Degenerate, DimensionMismatch, EmptyInput, NotControllable
from wavegram.ltv_control import kalman_rank, numerical_rank
from wavegram.phase_flow import CIRCLE
from wavegram.symbols import bump_indicator, const, trig


def controllable_pair(rng, N, K):
    while True:
        A = rng.normal(size=(N, N))
        B = rng.normal(size=(N, K))
        if rng.random() < 0.5:
            # rank-deficient B exercises the m < K branch
            B[:, -1] = B[:, 0]
        if kalman_rank(A, B)[1]:
            return A, B


def kalman_indices(A, B):
    """Block sizes from rank increments of ``[B, AB, ..., A^(i-1) B]``."""
    N = A.shape[0]
    ranks, blocks = [0], [B]
    while ranks[-1] < N:
        ranks.append(numerical_rank(np.hstack(blocks)))
        blocks.append(A @ blocks[-1])
    return tuple(int(v) for v in np.diff(ranks))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 100_000), N=st.integers(1, 6), K=st.integers(1, 3))
def test_brunovsky_identities(seed, N, K):
    rng = np.random.default_rng(seed)
    A, B = controllable_pair(rng, N, K)
    bf = nf.brunovsky(A, B)
    r = bf.residuals(A, B)
    assert r["A"] < 1e-10 and r["B"] < 1e-10
    assert bf.d == kalman_indices(A, B)
    assert list(bf.d) == sorted(bf.d, reverse=True)
    assert kalman_rank(bf.A_tilde, bf.B_tilde)[1]
    assert nf.chain_shape_ok(bf.A_tilde, bf.d, first_row_free=False)
    for t in (0.0, 0.5, 1.0):
        assert nf.chain_shape_ok(bf.A_t(A, B, t), bf.d, first_row_free=True)


def test_brunovsky_pattern_small():
    A, B = nf.brunovsky_pattern((2, 1), 3)
    assert np.array_equal(A, [[0, 0, 0], [0, 0, 0], [1, 0, 0]])
    assert np.array_equal(B, [[1, 0, 0], [0, 1, 0], [0, 0, 0]])


def test_brunovsky_errors():
    with pytest.raises(Degenerate):
        nf.brunovsky(np.eye(2), np.zeros((2, 1)))
    with pytest.raises(NotControllable):
        nf.brunovsky(np.eye(2), [[1.0], [1.0]])
    with pytest.raises(DimensionMismatch):
        nf.brunovsky(np.eye(2), np.ones((3, 1)))


def test_decomposition_constant_cascade():
    dec = nf.subdiagonal_decomposition([[[0, 0], [1, 0]]], [[1, 0]])
    assert dec.d == (1, 1) and dec.k == 2 and dec.reachable


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_decomposition_flag_properties(seed):
    rng = np.random.default_rng(seed)
    N = int(rng.integers(2, 6))
    As = [rng.normal(size=(N, N)) * (rng.random(size=(N, N)) < 0.4) for _ in range(3)]
    Bs = [rng.normal(size=(N, 1)) * (rng.random(size=(N, 1)) < 0.6) for _ in range(3)]
    if not any(np.any(b) for b in Bs):
        Bs[0][0, 0] = 1.0
    dec = nf.subdiagonal_decomposition(As, Bs)
    P = dec.change_of_basis
    assert np.allclose(P.T @ P, np.eye(N), atol=1e-10)
    for i in range(1, dec.k):
        H = dec.accumulated(i)
        Hn = dec.accumulated(i + 1)
        for a in As:
            img = a @ H
            # A(x) H_i lies in H_(i+1)
            assert np.linalg.norm(img - Hn @ (Hn.T @ img)) < 1e-8 * max(1.0, np.linalg.norm(img))
    assert sum(dec.d) == dec.accumulated(dec.k).shape[1]


def test_decomposition_empty():
    with pytest.raises(EmptyInput):
        nf.subdiagonal_decomposition([], [])


def test_split_sub_r():
    A = np.arange(16.0).reshape(4, 4)
    sub, rest = nf.split_sub_r(A, (2, 1, 1))
    assert np.array_equal(sub + rest, A)
    assert sub[2, 0] == A[2, 0] and sub[3, 2] == A[3, 2] and sub[3, 0] == 0 and sub[0, 0] == 0
    with pytest.raises(BadBlocks):
        nf.split_sub_r(A, (2, 1))


def test_multilevel_space():
    sp = nf.multilevel_space((2, 1, 1), 1.0)
    assert sp.exponents == (1.0, 2.0, 3.0) and sp.k == 3 and sp.multiplicities == (2, 1, 1)
    with pytest.raises(BadBlocks):
        nf.multilevel_space((0,), 1.0)


def test_distinct_eigenvalues():
    assert nf.distinct_eigenvalues([[0, 0], [1, 0]])[0] == 1
    assert nf.distinct_eigenvalues(np.diag([1.0, 2.0, 2.0]))[0] == 2


def test_ucp_precheck_cases():
    A = np.array([[0.0, 0.0], [1.0, 0.0]])
    B = np.array([[1.0], [0.0]])
    omega = bump_indicator((0.0,), 0.5, 1.0)
    far = bump_indicator((math.pi,), 0.2, 0.4)
    near = bump_indicator((0.9,), 0.2, 0.4)
    v = nf.ucp_precheck(A, B, omega, None, const(1.0))
    assert v.satisfied_assumption == "One" and v.sign_condition_beta == "nonneg" and v.hautus_agrees
    # two distinct eigenvalues: needs the support condition
    A2 = np.array([[1.0, 0.0], [1.0, 2.0]])
    assert nf.ucp_precheck(A2, B, omega, near, None).satisfied_assumption == "Two"
    assert nf.ucp_precheck(A2, B, omega, far, None).satisfied_assumption == "None"
    mixed = trig([((1,), 0.5), ((-1,), 0.5)])
    assert nf.ucp_precheck(A, B, omega, None, mixed).satisfied_assumption == "None"
    assert nf.ucp_precheck(A, np.array([[0.0], [1.0]]), omega, None, None).satisfied_assumption == "None"


def test_supports_intersect_grid_path():
    f = trig([((0,), 1.0), ((1,), 0.5), ((-1,), 0.5)])
    assert nf.supports_intersect(f, bump_indicator((math.pi,), 0.1, 0.2), CIRCLE)
