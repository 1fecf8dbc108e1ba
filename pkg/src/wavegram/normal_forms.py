"""Canonical forms of linear control pairs and algebraic prechecks.

* :func:`brunovsky` follows the recursive construction on the dimension:
  normalise ``B``, recurse on the lower-left pair, assemble.
* :func:`subdiagonal_decomposition` computes the reachable flag
  ``E_1 = span B(x)``, ``E_(i+1) = span A(x) E_i`` from samples of ``x``.
* :func:`ucp_precheck` evaluates the algebraic sufficient conditions for
  unique continuation of eigenfunctions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import BadBlocks, Degenerate, DimensionMismatch, EmptyInput, NotControllable
from .ltv_control import RANK_REL, hautus_check, kalman_rank, numerical_rank
from .phase_flow import CIRCLE, ManifoldModel, sample_cosphere, stack_points
from .symbols import Bump, Constant, ScalarField

# ---------------------------------------------------------------- Brunovsky


@dataclass
class BrunovskyForm:
    Q: np.ndarray
    F: np.ndarray
    M_u: np.ndarray
    A_tilde: np.ndarray
    B_tilde: np.ndarray
    d: tuple[int, ...]

    def residuals(self, A, B) -> dict:
        """Max-abs residuals of the defining identities."""
        A = np.asarray(A, dtype=float)
        B = _as_columns(B)
        Qi = np.linalg.inv(self.Q)
        r_a = np.max(np.abs(self.A_tilde - Qi @ (A @ self.Q + B @ self.F)))
        r_b = np.max(np.abs(self.B_tilde - Qi @ B @ self.M_u))
        return {"A": float(r_a), "B": float(r_b)}

    def A_t(self, A, B, t: float) -> np.ndarray:
        """``Q^-1 (A Q + t B F)``: first block row free, the rest equal to ``A_tilde``."""
        A = np.asarray(A, dtype=float)
        B = _as_columns(B)
        return np.linalg.solve(self.Q, A @ self.Q + t * B @ self.F)


def _as_columns(B) -> np.ndarray:
    B = np.asarray(B, dtype=float)
    return B[:, None] if B.ndim == 1 else B


def brunovsky_pattern(d: Sequence[int], K: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact ``(A_tilde, B_tilde)`` for block sizes ``d`` and ``K`` inputs."""
    N = int(sum(d))
    A = np.zeros((N, N))
    offs = np.concatenate([[0], np.cumsum(d)]).astype(int)
    for i in range(len(d) - 1):
        for j in range(d[i + 1]):
            A[offs[i + 1] + j, offs[i] + j] = 1.0
    B = np.zeros((N, K))
    B[: d[0], : d[0]] = np.eye(d[0])
    return A, B


def _normalise_input(B: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    """``Q1`` orthogonal and ``Mu1`` invertible with ``Q1^-1 B Mu1 = [[I_m, 0], [0, 0]]``."""
    K = B.shape[1]
    Q1, R, piv = sla.qr(B, pivoting=True)
    R11, R12 = R[:m, :m], R[:m, m:]
    R11i = np.linalg.inv(R11)
    T = np.eye(K)
    T[:m, :m] = R11i
    T[:m, m:] = -R11i @ R12
    P = np.eye(K)[:, piv]
    return Q1, P @ T


def _brunovsky_rec(A: np.ndarray, B: np.ndarray):
    """Return ``(Q, F, Mu, d)``; assumes ``(A, B)`` controllable and ``B != 0``."""
    N, K = B.shape
    m = numerical_rank(B)
    Q1, Mu1 = _normalise_input(B, m)
    C = Q1.T @ A @ Q1
    if m == N:
        Q = Q1
        Gu = np.eye(m)
        d: tuple[int, ...] = (m,)
    else:
        C21, C22 = C[m:, :m], C[m:, m:]
        Gx, F2, Gu, d_rest = _brunovsky_rec(C22, C21)
        Q2 = np.eye(N)
        Q2[:m, m:] = F2
        Q2[m:, m:] = Gx
        Q3 = np.eye(N)
        Q3[:m, :m] = Gu
        Q = Q1 @ Q2 @ Q3
        d = (m,) + d_rest
    top = np.linalg.solve(Q, A @ Q)[:m, :]
    Mu = Mu1.copy()
    Mu[:, :m] = Mu1[:, :m] @ Gu
    F = -Mu @ np.vstack([top, np.zeros((K - m, N))])
    return Q, F, Mu, d


def brunovsky(A, B) -> BrunovskyForm:
    """Brunovsky normal form of a controllable real pair ``(A, B)``.

    Returns ``Q, F, M_u`` with ``Q^-1 (A Q + B F)`` and ``Q^-1 B M_u`` equal to the
    identity-padded chain pattern; ``A_tilde`` and ``B_tilde`` are that exact
    pattern, use :meth:`BrunovskyForm.residuals` to check the numerics.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = _as_columns(B)
    if A.shape[0] != A.shape[1] or B.shape[0] != A.shape[0]:
        raise DimensionMismatch(f"incompatible shapes A{A.shape}, B{B.shape}")
    if not np.any(B):
        raise Degenerate("B = 0")
    if not kalman_rank(A, B)[1]:
        raise NotControllable("(A, B) fails the Kalman rank condition")
    Q, F, Mu, d = _brunovsky_rec(A, B)
    At, Bt = brunovsky_pattern(d, B.shape[1])
    return BrunovskyForm(Q, F, Mu, At, Bt, d)


def chain_shape_ok(M: np.ndarray, d: Sequence[int], first_row_free: bool, tol: float = 1e-10) -> bool:
    """Compare ``M`` with the chain pattern of ``d``, optionally ignoring the first block row."""
    pattern, _ = brunovsky_pattern(d, d[0])
    diff = np.abs(M - pattern)
    if first_row_free:
        diff[: d[0], :] = 0.0
    return bool(np.max(diff, initial=0.0) < tol)


# ---------------------------------------------------------------- decomposition


@dataclass
class Decomposition:
    subspace_bases: list[np.ndarray]
    k: int
    d: tuple[int, ...]
    change_of_basis: np.ndarray
    reachable: bool

    def accumulated(self, i: int) -> np.ndarray:
        """Orthonormal basis of ``H_i`` (1-based)."""
        return np.hstack(self.subspace_bases[:i]) if i else np.zeros((self.change_of_basis.shape[0], 0))


def _new_directions(W: np.ndarray, H: np.ndarray, tol: float, scale: float) -> np.ndarray:
    if W.size == 0 or scale == 0:
        return np.zeros((W.shape[0], 0))
    if H.shape[1]:
        W = W - H @ (H.conj().T @ W)
    U, s, _ = np.linalg.svd(W, full_matrices=False)
    keep = s > tol * scale
    return U[:, keep]


def subdiagonal_decomposition(A_samples: Sequence, B_samples: Sequence, tol: float = RANK_REL) -> Decomposition:
    """Block decomposition of ``R^N`` adapted to sampled ``(A(x), B(x))``.

    ``E_1`` is spanned by every column of every ``B(x)``; ``E_(i+1)`` adds the
    directions of ``A(x) H_i`` not already in ``H_i``.  Spans are taken by SVD
    with threshold ``tol`` relative to the largest sample norm.  The change of
    basis lists the blocks in order, followed by an orthonormal complement.
    """
    if len(A_samples) == 0 or len(B_samples) == 0:
        raise EmptyInput("need at least one sample of A and B")
    As = [np.atleast_2d(np.asarray(a)) for a in A_samples]
    Bs = [np.asarray(b) for b in B_samples]
    Bs = [b[:, None] if b.ndim == 1 else b for b in Bs]
    N = As[0].shape[0]
    if any(a.shape != (N, N) for a in As) or any(b.shape[0] != N for b in Bs):
        raise DimensionMismatch("inconsistent sample shapes")
    scale = max(max(np.linalg.norm(a, 2) for a in As), max(np.linalg.norm(b, 2) for b in Bs))
    H = np.zeros((N, 0))
    blocks: list[np.ndarray] = []
    W = np.hstack(Bs)
    while True:
        F = _new_directions(W, H, tol, scale)
        if F.shape[1] == 0:
            break
        blocks.append(F)
        H = np.hstack([H, F])
        if H.shape[1] == N:
            break
        W = np.hstack([a @ H for a in As])
    d = tuple(b.shape[1] for b in blocks)
    comp = sla.null_space(H.conj().T) if H.shape[1] else np.eye(N)
    P = np.hstack([H, comp]) if H.shape[1] < N else H
    return Decomposition(blocks, len(blocks), d, P, H.shape[1] == N)


def _block_ids(d: Sequence[int], N: int) -> np.ndarray:
    if not d or any(int(v) <= 0 for v in d) or sum(int(v) for v in d) != N:
        raise BadBlocks(f"block sizes {tuple(d)} do not partition {N}")
    return np.repeat(np.arange(len(d)), [int(v) for v in d])


def split_sub_r(A, d: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Split ``A`` into its block subdiagonal band ``A_sub`` and the rest ``A_r``."""
    A = np.atleast_2d(np.asarray(A))
    if A.shape[0] != A.shape[1]:
        raise BadBlocks("A must be square")
    ids = _block_ids(d, A.shape[0])
    band = ids[:, None] == ids[None, :] + 1
    A_sub = np.where(band, A, 0)
    return A_sub, A - A_sub


@dataclass(frozen=True)
class MultilevelSpace:
    s: float
    exponents: tuple[float, ...]
    multiplicities: tuple[int, ...]

    @property
    def k(self) -> int:
        return len(self.exponents)


def multilevel_space(d: Sequence[int], s: float) -> MultilevelSpace:
    """Regularity ``s + i - 1`` for the ``i``-th block of size ``d_i``."""
    d = tuple(int(v) for v in d)
    if not d or any(v <= 0 for v in d):
        raise BadBlocks(f"invalid block sizes {d}")
    return MultilevelSpace(s, tuple(s + i for i in range(len(d))), d)


# ---------------------------------------------------------------- unique continuation


@dataclass
class UcpVerdict:
    kalman_transposed: bool
    distinct_eigen_count: int
    sign_condition_beta: str
    domains_intersect: bool
    satisfied_assumption: str
    cluster_gap: float
    hautus_agrees: bool


def distinct_eigenvalues(A, gap: Optional[float] = None) -> tuple[int, float]:
    """Number of eigenvalue clusters (single linkage with absolute ``gap``)."""
    A = np.atleast_2d(np.asarray(A))
    if gap is None:
        gap = 1e-7 * np.linalg.norm(A, 2)
    lam = np.linalg.eigvals(A)
    n = lam.size
    parent = list(range(n))

    def root(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(lam[i] - lam[j]) <= gap:
                parent[root(i)] = root(j)
    return len({root(i) for i in range(n)}), float(gap)


def _grid_values(f: Optional[ScalarField], m: ManifoldModel, grid_n: int) -> np.ndarray:
    x, _ = stack_points(sample_cosphere(m, grid_n, 1))
    if f is None:
        return np.ones(x.shape[0])
    return np.real(f(m, 0.0, x))


def beta_sign(beta: Optional[ScalarField], m: ManifoldModel, grid_n: int = 512) -> str:
    """``nonneg``, ``nonpos`` or ``mixed`` on a grid; ``n/a`` when no field is given."""
    if beta is None:
        return "n/a"
    v = _grid_values(beta, m, grid_n)
    slack = 1e-14 * max(1.0, float(np.max(np.abs(v))))
    if np.all(v >= -slack):
        return "nonneg"
    if np.all(v <= slack):
        return "nonpos"
    return "mixed"


def supports_intersect(f: Optional[ScalarField], g: Optional[ScalarField], m: ManifoldModel,
                       grid_n: int = 512) -> bool:
    """Whether ``{f != 0}`` and ``{g != 0}`` meet (``None`` is the whole manifold)."""
    for h in (f, g):
        if h is not None and h.is_zero:
            return False
    if f is not None and g is not None and isinstance(f.spatial, Bump) and isinstance(g.spatial, Bump):
        dist = float(m.distance(np.asarray(f.spatial.center), np.asarray(g.spatial.center)))
        return dist < f.spatial.r_out + g.spatial.r_out
    if f is None or g is None or isinstance(f.spatial, Constant) or isinstance(g.spatial, Constant):
        return True
    vf = np.abs(_grid_values(f, m, grid_n))
    vg = np.abs(_grid_values(g, m, grid_n))
    tol = 1e-8 * max(vf.max(), 1e-300) * max(vg.max(), 1e-300)
    return bool(np.any(vf * vg > tol))


def ucp_precheck(A, B, omega_spec: Optional[ScalarField], o_spec: Optional[ScalarField],
                 beta_field: Optional[ScalarField], m: ManifoldModel = CIRCLE, grid_n: int = 512) -> UcpVerdict:
    """Algebraic sufficient conditions for unique continuation of eigenfunctions.

    ``A`` is ``N x N`` and ``B`` the ``N x K`` control matrix (the transpose of
    the observation matrix), so the rank test runs on ``(A, B)`` directly.
    Assumption ``One``: rank test, a single distinct eigenvalue, ``beta`` of
    one sign.  Assumption ``Two``: rank test, ``omega`` meets ``o``, ``beta`` of
    one sign.  A verdict of ``None`` only means neither sufficient condition
    was met.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = _as_columns(B)
    kal = kalman_rank(A, B)[1]
    hautus = hautus_check(A, B)
    count, gap = distinct_eigenvalues(A)
    sign = beta_sign(beta_field, m, grid_n)
    meet = supports_intersect(omega_spec, o_spec if o_spec is not None else beta_field, m, grid_n)
    sign_ok = sign != "mixed"
    if kal and count == 1 and sign_ok:
        which = "One"
    elif kal and meet and sign_ok:
        which = "Two"
    else:
        which = "None"
    return UcpVerdict(kal, count, sign, meet, which, gap, hautus == kal)
