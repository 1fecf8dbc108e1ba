"""Minimisation of transported Gramians over the cosphere bundle.

For a phase point ``rho0`` and a branch ``s`` in ``{+1, -1}`` the ray system is

    X' = 1/2 a_s(t, phi_{-s t} rho0)^* X + 1/2 d_s(t, phi_{-s t} rho0)^* u,

with ``a_s = a0 + s a1 / i`` (and likewise ``d_s``).  The smallest eigenvalue
of its Gramian, minimised over the sample and both branches, is the constant
``kappa(T)``; ``1 / (2 kappa)`` is the optimal high-frequency observability
constant and ``t_crit`` the first horizon at which every sampled Gramian is
positive definite.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import ltv_control as lc
from .errors import CriticalTimeNotFound
from .normal_forms import ucp_precheck
from .phase_flow import (
    ManifoldModel,
    PhasePoint,
    flow_arrays,
    involution,
    refine_around,
    sample_cosphere,
    stack_points,
    validate,
)
from .symbols import MatrixSymbol, ScalarField, ZeroOrderCoupling, lift_zero_order, sign_value

CHUNK = 64


@dataclass
class ObservabilityScenario:
    """Everything needed to sweep ray Gramians.

    Give either first-order symbols (``coupling`` N x N, ``observation`` K x N)
    or ``order_zero``; the latter is lifted to order-1 symbols.
    """

    manifold: ManifoldModel
    N: int
    K: int
    coupling: Optional[MatrixSymbol] = None
    observation: Optional[MatrixSymbol] = None
    order_zero: Optional[ZeroOrderCoupling] = None
    T_max: float = 2 * math.pi
    n_x: int = 32
    n_dir: int = 2
    n_steps: int = 512
    threads: int = 1

    def __post_init__(self):
        first = self.coupling is not None or self.observation is not None
        if first == (self.order_zero is not None):
            raise ValueError("give exactly one of first-order symbols or order_zero")
        if self.order_zero is not None:
            self._symbols = lift_zero_order(self.order_zero)
        else:
            a = self.coupling if self.coupling is not None else MatrixSymbol(self.N, self.N)
            d = self.observation if self.observation is not None else MatrixSymbol(self.K, self.N)
            self._symbols = (a, d)
        a, d = self._symbols
        if (a.rows, a.cols) != (self.N, self.N) or (d.rows, d.cols) != (self.K, self.N):
            raise ValueError("symbol shapes do not match N, K")

    @property
    def symbols(self) -> tuple[MatrixSymbol, MatrixSymbol]:
        return self._symbols

    @property
    def parity(self) -> bool:
        a, d = self._symbols
        return a.parity_flag and d.parity_flag

    def sample(self) -> list[PhasePoint]:
        return sample_cosphere(self.manifold, self.n_x, self.n_dir)

    def steps(self, T: float) -> int:
        return lc.steps_for(T, self.n_steps, self.T_max)


# ---------------------------------------------------------------- ray coefficients


def _adjoint(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2).conj()


def ray_coefficients(sc: ObservabilityScenario, x0: np.ndarray, xi0: np.ndarray, sign: int, t: np.ndarray):
    """Drift ``(P, M, N, N)`` and control ``(P, M, N, K)`` along rays from ``(x0, xi0)``."""
    a, d = sc.symbols
    x, _ = flow_arrays(sc.manifold, x0[:, None, :], xi0[:, None, :], -sign * t[None, :])
    tt = np.broadcast_to(t[None, :], x.shape[:-1])
    drift = 0.5 * _adjoint(a.combined_arrays(sc.manifold, sign, tt, x))
    control = 0.5 * _adjoint(d.combined_arrays(sc.manifold, sign, tt, x))
    return drift, control


def ray_system(sc: ObservabilityScenario, rho0: PhasePoint, sign, T: float) -> lc.RaySystem:
    s = sign_value(sign)
    x0, xi0 = rho0.x_array[None, :], rho0.xi_array[None, :]

    def drift(t):
        return ray_coefficients(sc, x0, xi0, s, np.asarray(t, dtype=float))[0][0]

    def control(t):
        return ray_coefficients(sc, x0, xi0, s, np.asarray(t, dtype=float))[1][0]

    return lc.RaySystem(sc.N, sc.K, drift, control, T, rho0, s)


def _gramians_chunk(sc, x0, xi0, sign, T, n):
    t = lc.node_times(T, n)
    drift, control = ray_coefficients(sc, x0, xi0, sign, t)
    return lc.gramian_batch(drift, control[:, ::2], T)


def _threads(sc: ObservabilityScenario) -> int:
    return max(1, int(sc.threads))


def batch_gramians(sc: ObservabilityScenario, points: Sequence[PhasePoint], sign: int, T: float) -> np.ndarray:
    """Gramians ``(P, N, N)`` for many phase points on one branch."""
    if T > sc.T_max * (1 + 1e-12):
        raise ValueError(f"horizon {T} exceeds T_max={sc.T_max}")
    n = sc.steps(T)
    x0, xi0 = stack_points(points)
    chunks = [(x0[i : i + CHUNK], xi0[i : i + CHUNK]) for i in range(0, len(points), CHUNK)]
    if _threads(sc) > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(_threads(sc)) as pool:
            parts = list(pool.map(lambda c: _gramians_chunk(sc, c[0], c[1], sign, T, n), chunks))
    else:
        parts = [_gramians_chunk(sc, c[0], c[1], sign, T, n) for c in chunks]
    return np.concatenate(parts, axis=0)


def branch_gramian(sc: ObservabilityScenario, rho0: PhasePoint, branch, T: float) -> lc.Gramian:
    """Gramian of the ray system of ``rho0`` on the given branch."""
    validate(sc.manifold, rho0)
    s = sign_value(branch)
    G = batch_gramians(sc, [rho0], s, T)[0]
    lam, vec = lc.hermitian_min(G)
    return lc.Gramian(G, lam, T, rho0, s, vec)


# ---------------------------------------------------------------- kappa


@dataclass
class PointRow:
    rho: PhasePoint
    branch: int
    min_eig: float
    norm: float
    eigvec: np.ndarray = field(repr=False)
    inferred: bool = False

    @property
    def verdict(self) -> str:
        return lc.positivity(self.min_eig, self.norm)


@dataclass
class KappaResult:
    T: float
    kappa: float
    worst: PointRow
    table: list[PointRow]

    @property
    def c_obs(self) -> float:
        return obs_constant_from(self.kappa)

    @property
    def indeterminate(self) -> int:
        return sum(r.verdict == "indeterminate" for r in self.table)


def _rows(sc, points, T) -> list[PointRow]:
    branches = (-1,) if sc.parity else (-1, +1)
    rows: list[PointRow] = []
    for s in branches:
        G = batch_gramians(sc, points, s, T)
        w, v = np.linalg.eigh(G)
        for p, wi, vi in zip(points, w, v):
            rows.append(PointRow(p, s, float(wi[0]), float(np.max(np.abs(wi))), vi[:, 0]))
    if sc.parity:
        # G^+ at sigma(rho) equals G^- at rho
        rows += [PointRow(involution(r.rho), +1, r.min_eig, r.norm, r.eigvec, True) for r in rows]
    return rows


def _worst(rows: list[PointRow]) -> PointRow:
    # first minimum in table order keeps the report deterministic
    return min(rows, key=lambda r: r.min_eig)


def kappa(sc: ObservabilityScenario, T: float, points: Optional[Sequence[PhasePoint]] = None,
          refine: bool = True) -> KappaResult:
    """Minimum of the smallest Gramian eigenvalue over the sample and both branches.

    One refinement ring at half the grid spacing is evaluated around the worst
    point of the initial sweep.  The value is an upper bound for the true
    infimum over the cosphere bundle.
    """
    pts = list(points) if points is not None else sc.sample()
    if not pts:
        raise ValueError("empty phase-point sample")
    rows = _rows(sc, pts, T)
    if refine:
        w = _worst(rows)
        extra = refine_around(sc.manifold, w.rho, sc.n_x, sc.n_dir)
        rows += _rows(sc, extra, T)
    w = _worst(rows)
    return KappaResult(T, max(w.min_eig, 0.0), w, rows)


def kappa_curve(sc: ObservabilityScenario, horizons: Sequence[float]) -> np.ndarray:
    """``kappa`` on a horizon grid, using one common point set for every horizon.

    The point set is the base sample plus the refinement rings of each
    horizon's worst point, so values at different horizons are comparable.
    """
    pts = sc.sample()
    extra: list[PhasePoint] = []
    for T in horizons:
        w = _worst(_rows(sc, pts, T))
        extra += refine_around(sc.manifold, w.rho, sc.n_x, sc.n_dir)
    pts = pts + extra
    return np.array([kappa(sc, T, pts, refine=False).kappa for T in horizons])


def obs_constant_from(k: float) -> float:
    return math.inf if k <= 0 else 1.0 / (2.0 * k)


def obs_constant(sc: ObservabilityScenario, T: float) -> float:
    """``C_obs^2 = 1 / (2 kappa(T))``, infinite when ``kappa(T) = 0``."""
    return obs_constant_from(kappa(sc, T).kappa)


# ---------------------------------------------------------------- critical time


@dataclass
class CriticalTime:
    t_crit: float
    bracket: tuple[float, float]
    evaluations: int


def all_positive(sc: ObservabilityScenario, T: float, points: Sequence[PhasePoint]) -> bool:
    """Every sampled Gramian passes the relative positivity threshold (indeterminate counts as no)."""
    return all(r.verdict == "positive" for r in _rows(sc, points, T))


def t_crit(sc: ObservabilityScenario, T_lo: float, T_hi: Optional[float] = None, tol_T: float = 1e-3,
           points: Optional[Sequence[PhasePoint]] = None) -> CriticalTime:
    """Bisection for the first horizon at which every sampled Gramian is positive definite.

    Returns the midpoint of the final bracket.  If the predicate already holds
    at ``T_lo`` the result is ``T_lo`` with bracket ``(0, T_lo)``.  Raises
    :class:`CriticalTimeNotFound` if it fails at ``T_hi``.
    """
    T_hi = sc.T_max if T_hi is None else T_hi
    if not 0 < T_lo < T_hi:
        raise ValueError("need 0 < T_lo < T_hi")
    pts = list(points) if points is not None else sc.sample()
    evals = 1
    if not all_positive(sc, T_hi, pts):
        raise CriticalTimeNotFound(f"some sampled Gramian is still singular at T={T_hi}")
    evals += 1
    if all_positive(sc, T_lo, pts):
        return CriticalTime(T_lo, (0.0, T_lo), evals)
    lo, hi = T_lo, T_hi
    while hi - lo > tol_T:
        mid = 0.5 * (lo + hi)
        evals += 1
        if all_positive(sc, mid, pts):
            hi = mid
        else:
            lo = mid
    return CriticalTime(0.5 * (lo + hi), (lo, hi), evals)


# ---------------------------------------------------------------- independent transport


def transport_resolvent(sc: ObservabilityScenario, rho0: PhasePoint, branch, tau: float, t: float,
                        n_steps: int = 400) -> np.ndarray:
    """``R(tau, t; rho0)`` from the transport equation, integrated on its own.

    Solves ``dR/dtau' = R . 1/2 a_s(tau', phi_{s (t - tau')} rho0)`` from
    ``tau' = t`` (where ``R = I``) to ``tau' = tau`` with RK4.  It equals
    the adjoint of the ray resolvent ``R~(tau, t; phi_{s t} rho0)``.
    """
    s = sign_value(branch)
    a, _ = sc.symbols
    taus = np.linspace(t, tau, 2 * n_steps + 1)
    x, _ = flow_arrays(sc.manifold, rho0.x_array, rho0.xi_array, s * (t - taus))
    coef = 0.5 * a.combined_arrays(sc.manifold, s, taus, x)
    h = (tau - t) / n_steps
    R = np.eye(sc.N, dtype=complex)
    for j in range(n_steps):
        k1 = R @ coef[2 * j]
        k2 = (R + 0.5 * h * k1) @ coef[2 * j + 1]
        k3 = (R + 0.5 * h * k2) @ coef[2 * j + 1]
        k4 = (R + h * k3) @ coef[2 * j + 2]
        R = R + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return R


def ray_resolvent(sc: ObservabilityScenario, rho0: PhasePoint, branch, t1: float, t0: float,
                  n_steps: int = 400) -> np.ndarray:
    """``R~(t1, t0; rho0)`` of the ray system by forward RK4."""
    sys = ray_system(sc, rho0, branch, max(abs(t0), abs(t1)) or 1.0)
    return lc.propagate(sys.drift, t0, t1, n_steps, sc.N)


# ---------------------------------------------------------------- report


@dataclass
class ObsReport:
    T: float
    kappa: float
    c_obs: float
    t_crit: Optional[float]
    t_crit_bracket: Optional[tuple[float, float]]
    worst_point: PointRow
    per_point: list[PointRow]
    ucp_status: object
    metadata: dict


def ucp_status(sc: ObservabilityScenario):
    """Run the algebraic unique-continuation precheck when the coupling is separable.

    Applies to zero-order couplings of the form ``A0 * beta(x)``,
    ``B0 * alpha(x)`` with constant matrices; anything else is
    ``"NotApplicable"``.
    """
    z = sc.order_zero
    if z is None:
        return "NotApplicable"
    A = separate_fields(z.A_field)
    B = separate_fields(z.B_field)
    if A is None or B is None:
        return "NotApplicable"
    (A0, beta), (B0, alpha) = A, B
    return ucp_precheck(A0.real, B0.real, alpha, None, beta, m=sc.manifold)


def separate_fields(table):
    """Write a table of fields as ``M * f`` with one common spatial part, or return None."""
    common = None
    vals = np.zeros((len(table), len(table[0])), dtype=complex)
    for i, row in enumerate(table):
        for j, f in enumerate(row):
            if f.is_zero:
                continue
            if not f.time_independent:
                return None
            if common is None:
                common = f.spatial
            elif f.spatial != common:
                return None
            vals[i, j] = f.scale
    if np.any(vals.imag != 0):
        return None
    return vals, (None if common is None else ScalarField(common))


def analyze(sc: ObservabilityScenario, T: float, with_t_crit: bool = True, tol_T: float = 1e-3) -> ObsReport:
    res = kappa(sc, T)
    tc, br = None, None
    if with_t_crit:
        try:
            c = t_crit(sc, min(1e-3 * sc.T_max, 0.5 * T), sc.T_max, tol_T)
            tc, br = c.t_crit, c.bracket
        except CriticalTimeNotFound:
            pass
    meta = {
        "criterion": "min_eig",
        "note": "positivity judged by the smallest eigenvalue instead of the determinant",
        "positive_rel": lc.POSITIVE_REL,
        "singular_rel": lc.SINGULAR_REL,
        "n_steps": sc.steps(T),
        "n_x": sc.n_x,
        "n_dir": sc.n_dir,
        "sample_is_upper_bound": True,
    }
    return ObsReport(T, res.kappa, res.c_obs, tc, br, res.worst, res.table, ucp_status(sc), meta)
