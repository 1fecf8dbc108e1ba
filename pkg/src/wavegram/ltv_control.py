"""Resolvents and controllability Gramians of linear time-varying systems.

The system is ``X' = drift(t) X + control(t) u`` on ``[0, T]``.  Everything is
computed on a uniform grid of ``n`` steps: the resolvent ``R(t_j, 0)`` by
classical RK4 and the Gramian

    G = int_0^T R(0,t) C(t) C(t)^* R(0,t)^* dt

by composite Simpson on the same nodes.  The batched ``*_batch`` functions
take coefficient samples for many rays at once; the :class:`RaySystem` API
wraps them for a single ray.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DimensionMismatch, NonFiniteCoefficient

POSITIVE_REL = 1e-9
SINGULAR_REL = 1e-12
RANK_REL = 1e-9

MatrixCurve = Callable[[np.ndarray], np.ndarray]


@dataclass
class RaySystem:
    """Coefficient curves of a transported ray system.

    ``drift(t)`` and ``control(t)`` accept a 1-D array of times and return
    arrays of shape ``(len(t), N, N)`` and ``(len(t), N, K)``.
    """

    N: int
    K: int
    drift: MatrixCurve
    control: MatrixCurve
    T: float
    origin: Optional[object] = None
    branch: Optional[int] = None

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("horizon T must be positive")


@dataclass
class Resolvent:
    """``values[j] = R(t_j, 0)`` on the grid ``times``."""

    times: np.ndarray
    values: np.ndarray

    def between(self, i: int, j: int) -> np.ndarray:
        """``R(t_i, t_j)``."""
        return self.values[i] @ np.linalg.inv(self.values[j])

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]


@dataclass
class Gramian:
    matrix: np.ndarray
    min_eig: float
    T: float
    origin: Optional[object] = None
    branch: Optional[int] = None
    eigvec: np.ndarray = field(default=None, repr=False)

    @property
    def norm(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvalsh(self.matrix)))) if self.matrix.size else 0.0

    @property
    def verdict(self) -> str:
        return positivity(self.min_eig, self.norm)


def positivity(min_eig: float, norm: float) -> str:
    """Classify a PSD matrix as ``positive``, ``indeterminate`` or ``singular``."""
    if norm <= 0 or not np.isfinite(norm):
        return "singular"
    if min_eig > POSITIVE_REL * norm:
        return "positive"
    if min_eig < SINGULAR_REL * norm:
        return "singular"
    return "indeterminate"


def _check_finite(a: np.ndarray) -> None:
    if not np.all(np.isfinite(a)):
        raise NonFiniteCoefficient("drift or control evaluated to a non-finite value")


def node_times(T: float, n_steps: int) -> np.ndarray:
    """Half-step nodes ``t = j T / (2 n)``, ``j = 0..2n``, used by RK4."""
    return np.linspace(0.0, T, 2 * n_steps + 1)


def resolvent_batch(drift_nodes: np.ndarray, T: float) -> np.ndarray:
    """RK4 resolvents from drift samples at half-step nodes.

    ``drift_nodes`` has shape ``(..., 2n+1, N, N)``; returns ``(..., n+1, N, N)``
    with entry ``j`` equal to ``R(t_j, 0)``.
    """
    _check_finite(drift_nodes)
    n = (drift_nodes.shape[-3] - 1) // 2
    h = T / n
    N = drift_nodes.shape[-1]
    batch = drift_nodes.shape[:-3]
    out = np.empty(batch + (n + 1, N, N), dtype=complex)
    R = np.broadcast_to(np.eye(N, dtype=complex), batch + (N, N)).copy()
    out[..., 0, :, :] = R
    for j in range(n):
        a0 = drift_nodes[..., 2 * j, :, :]
        am = drift_nodes[..., 2 * j + 1, :, :]
        a1 = drift_nodes[..., 2 * j + 2, :, :]
        k1 = a0 @ R
        k2 = am @ (R + 0.5 * h * k1)
        k3 = am @ (R + 0.5 * h * k2)
        k4 = a1 @ (R + h * k3)
        R = R + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[..., j + 1, :, :] = R
    return out


def simpson_weights(n: int, h: float) -> np.ndarray:
    if n % 2:
        raise ValueError("Simpson's rule needs an even number of steps")
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (h / 3.0)


def gramian_batch(drift_nodes: np.ndarray, control_grid: np.ndarray, T: float) -> np.ndarray:
    """Gramians from drift at half-step nodes and control at the ``n+1`` grid nodes.

    Returns Hermitian ``(..., N, N)`` matrices, symmetrised as ``(G + G^*)/2``.
    """
    _check_finite(control_grid)
    R = resolvent_batch(drift_nodes, T)
    n = R.shape[-3] - 1
    Rinv = np.linalg.inv(R)
    Y = Rinv @ control_grid
    w = simpson_weights(n, T / n)
    G = np.einsum("j,...jab,...jcb->...ac", w, Y, Y.conj())
    return 0.5 * (G + np.swapaxes(G, -1, -2).conj())


def steps_for(T: float, n_steps: int, T_ref: Optional[float] = None) -> int:
    """Even step count for horizon ``T``.

    With a reference horizon the step length is held at ``T_ref / n_steps``
    (rounded down to fit), so horizons on that grid share their nodes and the
    Gramians nest exactly.
    """
    if T_ref is None:
        n = n_steps + (n_steps % 2)
    else:
        n = 2 * int(np.ceil(n_steps * T / (2.0 * T_ref) - 1e-9))
    return max(8, n)


def _sample(sys: RaySystem, n_steps: int) -> tuple[np.ndarray, np.ndarray]:
    t = node_times(sys.T, n_steps)
    drift = np.asarray(sys.drift(t), dtype=complex)
    control = np.asarray(sys.control(t[::2]), dtype=complex)
    if drift.shape != (t.size, sys.N, sys.N) or control.shape != (n_steps + 1, sys.N, sys.K):
        raise DimensionMismatch("drift/control curves returned arrays of the wrong shape")
    return drift, control


def resolvent(sys: RaySystem, n_steps: int) -> Resolvent:
    """Fixed-step RK4 resolvent ``R(t_j, 0)`` on the uniform grid."""
    if n_steps < 8:
        raise ValueError("n_steps must be >= 8")
    t = node_times(sys.T, n_steps)
    drift = np.asarray(sys.drift(t), dtype=complex)
    return Resolvent(t[::2], resolvent_batch(drift, sys.T))


def hermitian_min(G: np.ndarray) -> tuple[float, np.ndarray]:
    w, v = np.linalg.eigh(G)
    return float(w[0]), v[:, 0]


def gramian(sys: RaySystem, n_steps: int) -> Gramian:
    """Controllability Gramian of ``sys`` on ``[0, sys.T]``."""
    if n_steps < 8 or n_steps % 2:
        raise ValueError("n_steps must be even and >= 8")
    drift, control = _sample(sys, n_steps)
    G = gramian_batch(drift, control, sys.T)
    lam, vec = hermitian_min(G)
    return Gramian(G, lam, sys.T, sys.origin, sys.branch, vec)


def propagate(drift: MatrixCurve, t0: float, t1: float, n_steps: int, N: int) -> np.ndarray:
    """``R(t1, t0)`` for ``X' = drift(t) X`` by RK4 (``t1 < t0`` allowed)."""
    t = np.linspace(t0, t1, 2 * n_steps + 1)
    a = np.asarray(drift(t), dtype=complex)
    _check_finite(a)
    h = (t1 - t0) / n_steps
    R = np.eye(N, dtype=complex)
    for j in range(n_steps):
        k1 = a[2 * j] @ R
        k2 = a[2 * j + 1] @ (R + 0.5 * h * k1)
        k3 = a[2 * j + 1] @ (R + 0.5 * h * k2)
        k4 = a[2 * j + 2] @ (R + h * k3)
        R = R + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return R


# ---------------------------------------------------------------- algebraic tests


def _check_pair(A, B) -> tuple[np.ndarray, np.ndarray]:
    A = np.atleast_2d(np.asarray(A))
    B = np.asarray(B)
    if B.ndim == 1:
        B = B[:, None]
    if A.ndim != 2 or A.shape[0] != A.shape[1] or B.ndim != 2 or B.shape[0] != A.shape[0]:
        raise DimensionMismatch(f"incompatible shapes A{A.shape}, B{B.shape}")
    return A, B


def numerical_rank(M: np.ndarray, rel: float = RANK_REL) -> int:
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > rel * s[0]))


def kalman_matrix(A, B) -> np.ndarray:
    A, B = _check_pair(A, B)
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def kalman_rank(A, B) -> tuple[int, bool]:
    """Rank of ``[B, AB, ..., A^(N-1) B]`` and whether it equals ``N``."""
    A, B = _check_pair(A, B)
    r = numerical_rank(kalman_matrix(A, B))
    return r, r == A.shape[0]


def hautus_check(A, B) -> bool:
    """``rank [lambda I - A, B] = N`` for every eigenvalue ``lambda`` of ``A``."""
    A, B = _check_pair(A, B)
    N = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if numerical_rank(np.hstack([lam * np.eye(N) - A, B])) < N:
            return False
    return True
