"""Observability conditions for two waves in cascade.

Along the ray ``t -> phi_t(rho0)`` the cascade reduces to the 2 x 2 system

    X' = -beta/2 [[0, 0], [1, 0]] X + alpha/2 [1, 0]^T g,

which is controllable on ``[0, T]`` exactly when there are ``t1 < t2`` with
``alpha(t1) != 0``, ``alpha(t2) != 0`` and ``int_{t1}^{t2} beta != 0``.  This
module checks that integral condition by a grid scan, checks the Gramian
independently, and computes the transit time ``omega -> o -> omega``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import ltv_control as lc
from .errors import CriticalTimeNotFound
from .phase_flow import ManifoldModel, PhasePoint, flow_arrays
from .symbols import ScalarField

NONZERO_REL = 1e-8
BAND = 100.0
# witnesses weaker than this (relative) are below what the Gramian can resolve
STRENGTH_BAND = 1e-4


@dataclass(frozen=True)
class CascadePair:
    alpha: ScalarField
    beta: ScalarField

    def __post_init__(self):
        if not (self.alpha.is_real and self.beta.is_real):
            raise ValueError("cascade weights must be real-valued")


def along_ray(f: ScalarField, m: ManifoldModel, rho0: PhasePoint, t: np.ndarray) -> np.ndarray:
    """Real values of ``f(t, phi_t(rho0))``."""
    x, _ = flow_arrays(m, rho0.x_array, rho0.xi_array, t)
    return np.real(f(m, t, x))


@dataclass
class ConditionScan:
    """Grid data behind :func:`cascade_condition`."""

    times: np.ndarray
    alpha: np.ndarray
    beta_integral: np.ndarray
    tol_alpha: float
    tol_beta: float


@dataclass
class ConditionResult:
    holds: bool
    witness: Optional[tuple[float, float]]
    indeterminate: bool
    scan: ConditionScan
    strength: float


def _scan(pair: CascadePair, m: ManifoldModel, rho0: PhasePoint, T: float, grid_n: int) -> ConditionScan:
    nodes = np.linspace(0.0, T, 2 * grid_n + 1)
    t = nodes[::2]
    a = along_ray(pair.alpha, m, rho0, t)
    b = along_ray(pair.beta, m, rho0, nodes)
    h = T / grid_n
    # Simpson on each grid cell with its midpoint, then accumulate
    cell = (h / 6.0) * (b[:-2:2] + 4.0 * b[1:-1:2] + b[2::2])
    integral = np.concatenate([[0.0], np.cumsum(cell)])
    return ConditionScan(t, a, integral, NONZERO_REL * float(np.max(np.abs(a))),
                         NONZERO_REL * float(np.max(np.abs(b))))


def _first_pair(scan: ConditionScan, scale: float) -> Optional[tuple[int, int]]:
    ta, tb = scan.tol_alpha * scale, scan.tol_beta * scale
    idx = np.flatnonzero(np.abs(scan.alpha) > ta) if scan.tol_alpha > 0 else np.array([], dtype=int)
    if scan.tol_beta == 0:
        return None
    for p, i in enumerate(idx):
        later = idx[p + 1 :]
        hit = later[np.abs(scan.beta_integral[later] - scan.beta_integral[i]) > tb]
        if hit.size:
            return int(i), int(hit[0])
    return None


def cascade_condition(pair: CascadePair, m: ManifoldModel, rho0: PhasePoint, T: float,
                      grid_n: int = 256) -> ConditionResult:
    """Scan for ``t1 < t2`` with ``alpha(t1), alpha(t2) != 0`` and ``int_{t1}^{t2} beta != 0``.

    Nonvanishing means exceeding ``1e-8`` times the sup of the field on the
    grid.  The witness is the lexicographically first grid pair.  The result is
    flagged indeterminate when scaling both thresholds by 1/100 or 100
    changes the verdict, or when the condition holds only through a witness
    weaker than ``STRENGTH_BAND`` (see :func:`witness_strength`).
    """
    if grid_n < 16:
        raise ValueError("grid_n must be >= 16")
    scan = _scan(pair, m, rho0, T, grid_n)
    hit = _first_pair(scan, 1.0)
    lo = _first_pair(scan, 1.0 / BAND) is not None
    hi = _first_pair(scan, BAND) is not None
    witness = None if hit is None else (float(scan.times[hit[0]]), float(scan.times[hit[1]]))
    strength = witness_strength(scan, T)
    weak = hit is not None and strength < STRENGTH_BAND
    return ConditionResult(hit is not None, witness, lo != hi or weak, scan, strength)


def witness_strength(scan: ConditionScan, T: float) -> float:
    """``max_{i<j} min(|a_i|, |a_j|) |I_j - I_i|``, normalised by ``sup|alpha| sup|beta| T``.

    The smallest Gramian eigenvalue scales roughly like the square of this
    quantity, so it measures how far a witness is from numerical invisibility.
    """
    if scan.tol_alpha == 0 or scan.tol_beta == 0:
        return 0.0
    a = np.abs(scan.alpha) / (scan.tol_alpha / NONZERO_REL)
    b = scan.beta_integral / (scan.tol_beta / NONZERO_REL * T)
    pair = np.minimum(a[:, None], a[None, :]) * np.abs(b[None, :] - b[:, None])
    return float(np.max(np.triu(pair, 1)))


def sign_variant_condition(pair: CascadePair, m: ManifoldModel, rho0: PhasePoint, T: float,
                           grid_n: int = 256) -> tuple[bool, Optional[tuple[float, float, float]]]:
    """Grid times ``t1 < t2 < t3`` with ``alpha(t1), beta(t2), alpha(t3)`` all nonzero."""
    t = np.linspace(0.0, T, grid_n + 1)
    a = along_ray(pair.alpha, m, rho0, t)
    b = along_ray(pair.beta, m, rho0, t)
    ta = NONZERO_REL * np.max(np.abs(a))
    tb = NONZERO_REL * np.max(np.abs(b))
    ia = np.flatnonzero(np.abs(a) > ta) if ta > 0 else np.array([], dtype=int)
    ib = np.flatnonzero(np.abs(b) > tb) if tb > 0 else np.array([], dtype=int)
    if ia.size == 0:
        return False, None
    i1 = ia[0]
    ib = ib[ib > i1]
    if ib.size == 0:
        return False, None
    i3 = ia[ia > ib[0]]
    if i3.size == 0:
        return False, None
    return True, (float(t[i1]), float(t[ib[0]]), float(t[i3[0]]))


# ---------------------------------------------------------------- Gramian route

_LOWER = np.array([[0.0, 0.0], [1.0, 0.0]])
_E1 = np.array([[1.0], [0.0]])


def cascade_system(pair: CascadePair, m: ManifoldModel, rho0: PhasePoint, T: float) -> lc.RaySystem:
    def drift(t):
        return (-0.5 * along_ray(pair.beta, m, rho0, np.asarray(t)))[:, None, None] * _LOWER

    def control(t):
        return (0.5 * along_ray(pair.alpha, m, rho0, np.asarray(t)))[:, None, None] * _E1

    return lc.RaySystem(2, 1, drift, control, T, rho0, -1)


@dataclass
class CascadeVerdict:
    condition3: bool
    witness: Optional[tuple[float, float]]
    gramian_positive: bool
    min_eig: float
    gramian_verdict: str
    sign_variant: Optional[bool]
    sign_witness: Optional[tuple[float, float, float]]
    indeterminate: bool
    agreement: bool


def cascade_gramian_equiv(pair: CascadePair, m: ManifoldModel, rho0: PhasePoint, T: float,
                          n_steps: int = 512, grid_n: int = 256) -> CascadeVerdict:
    """Compare the integral condition with positivity of the 2 x 2 ray Gramian."""
    cond = cascade_condition(pair, m, rho0, T, grid_n)
    G = lc.gramian(cascade_system(pair, m, rho0, T), n_steps)
    verdict = G.verdict
    positive = verdict == "positive"
    sign_v, sign_w = None, None
    b_grid = along_ray(pair.beta, m, rho0, cond.scan.times)
    if np.all(b_grid >= 0) or np.all(b_grid <= 0):
        sign_v, sign_w = sign_variant_condition(pair, m, rho0, T, grid_n)
    indeterminate = cond.indeterminate or verdict == "indeterminate"
    agreement = indeterminate or cond.holds == positive
    return CascadeVerdict(cond.holds, cond.witness, positive, G.min_eig, verdict, sign_v, sign_w,
                          indeterminate, agreement)


# ---------------------------------------------------------------- transit time


def _first_entry(f: ScalarField, m: ManifoldModel, rho0: PhasePoint, t_from: float, T_max: float,
                 h: float, thresh: float, tol: float) -> Optional[float]:
    """Infimum of ``t >= t_from`` with ``|f(phi_t rho0)| > thresh``, to within ``tol``."""
    def on(t):
        return np.abs(along_ray(f, m, rho0, np.atleast_1d(np.asarray(t, dtype=float)))) > thresh

    if on(t_from)[0]:
        return t_from
    n = int(np.ceil((T_max - t_from) / h))
    if n <= 0:
        return None
    grid = np.minimum(t_from + h * np.arange(1, n + 1), T_max)
    hits = np.flatnonzero(on(grid))
    if hits.size == 0:
        return None
    hi = float(grid[hits[0]])
    lo = t_from if hits[0] == 0 else float(grid[hits[0] - 1])
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if on(mid)[0]:
            hi = mid
        else:
            lo = mid
    return hi


def _sup_on(f: ScalarField, m: ManifoldModel, points: Sequence[PhasePoint], T_max: float, n: int) -> float:
    t = np.linspace(0.0, T_max, n + 1)
    return max(float(np.max(np.abs(along_ray(f, m, p, t)))) for p in points)


def transit_time(alpha: ScalarField, beta: ScalarField, m: ManifoldModel, rho0: PhasePoint, T_max: float,
                 h: float, thresholds: tuple[float, float], tol: float) -> Optional[float]:
    """Earliest ``t3`` with ``alpha(t1), beta(t2), alpha(t3) != 0`` for some ``t1 <= t2 <= t3``."""
    ta, tb = thresholds
    t1 = _first_entry(alpha, m, rho0, 0.0, T_max, h, ta, tol)
    if t1 is None:
        return None
    t2 = _first_entry(beta, m, rho0, t1, T_max, h, tb, tol)
    if t2 is None:
        return None
    return _first_entry(alpha, m, rho0, t2, T_max, h, ta, tol)


def t_omega_o_omega(alpha: ScalarField, beta: ScalarField, m: ManifoldModel, points: Sequence[PhasePoint],
                    T_max: float, tol: float = 1e-6, grid_n: int = 2048) -> float:
    """Worst-case ``omega -> o -> omega`` transit time over the sampled rays.

    Per ray the earliest admissible ``t3`` is found by a greedy first-entry
    scan (grid step ``T_max / grid_n``) refined by bisection to ``tol``.
    Raises :class:`CriticalTimeNotFound` if some ray never completes the
    pattern before ``T_max``.
    """
    if not (alpha.time_independent and beta.time_independent):
        raise ValueError("transit time needs time-independent weights")
    h = T_max / grid_n
    sa = _sup_on(alpha, m, points, T_max, grid_n)
    sb = _sup_on(beta, m, points, T_max, grid_n)
    if sa == 0 or sb == 0:
        raise CriticalTimeNotFound("a weight vanishes along every sampled ray")
    thresholds = (NONZERO_REL * sa, NONZERO_REL * sb)
    worst = 0.0
    for p in points:
        t3 = transit_time(alpha, beta, m, p, T_max, h, thresholds, tol)
        if t3 is None:
            raise CriticalTimeNotFound(f"ray from {p} does not meet omega, o, omega before T_max={T_max}")
        worst = max(worst, t3)
    return worst
