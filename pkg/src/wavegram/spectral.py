"""Fourier-spectral Klein-Gordon solver on the circle and the wavepacket test.

State coefficients are stored for frequencies ``-M..M`` (index ``n + M``) so
that ``V(x) = sum_n V_hat[n] exp(2 pi i n x / L)``.  The evolution is

    V'' = -(|D|^2 + 1) V - B0 V' - B1 V,

with ``B0`` the multiplication by the order-0 coefficient of the coupling
symbol and ``B1 = c(t, x) |D|`` built from its order-1 coefficient ``c``.
Products with coefficients are taken on a collocation grid of at least
``4M`` points and truncated back to ``|n| <= M``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import CutoffTooSmall, DegenerateDenominator, DimensionMismatch, Instability, NotSupported
from .phase_flow import CIRCLE, ManifoldModel, PhasePoint
from .symbols import MatrixSymbol, ScalarField


def _check_manifold(m: ManifoldModel) -> float:
    if m.kind != "torus" or m.dim != 1:
        raise NotSupported("spectral validation runs on the circle only")
    return m.periods[0]


@dataclass
class SpectralState:
    M: int
    V_hat: np.ndarray
    Vt_hat: np.ndarray
    manifold: ManifoldModel = CIRCLE

    def __post_init__(self):
        _check_manifold(self.manifold)
        self.V_hat = np.atleast_2d(np.asarray(self.V_hat, dtype=complex))
        self.Vt_hat = np.atleast_2d(np.asarray(self.Vt_hat, dtype=complex))
        if self.V_hat.shape != self.Vt_hat.shape or self.V_hat.shape[1] != 2 * self.M + 1:
            raise DimensionMismatch("coefficient arrays must both have shape (N, 2M+1)")

    @property
    def N(self) -> int:
        return self.V_hat.shape[0]

    @property
    def period(self) -> float:
        return self.manifold.periods[0]

    @classmethod
    def zeros(cls, N: int, M: int, m: ManifoldModel = CIRCLE) -> "SpectralState":
        z = np.zeros((N, 2 * M + 1), dtype=complex)
        return cls(M, z, z.copy(), m)


@dataclass
class HalfWaveState:
    M: int
    Vplus_hat: np.ndarray
    Vminus_hat: np.ndarray
    manifold: ManifoldModel = CIRCLE


class Grid:
    """Frequencies, multipliers and transforms for a cutoff ``M`` on a circle of length ``L``."""

    def __init__(self, M: int, L: float, n_grid: Optional[int] = None):
        self.M = M
        self.L = L
        self.n_grid = n_grid or max(16, 4 * M + 4)
        if self.n_grid < 4 * M:
            raise ValueError("collocation grid needs at least 4M points")
        self.n = np.arange(-M, M + 1)
        self.wavenumber = 2 * math.pi * self.n / L
        self.absD = np.abs(self.wavenumber)
        self.lam = np.sqrt(self.wavenumber ** 2 + 1.0)
        self.x = L * np.arange(self.n_grid) / self.n_grid
        self._idx = self.n % self.n_grid

    def to_grid(self, c: np.ndarray) -> np.ndarray:
        full = np.zeros(c.shape[:-1] + (self.n_grid,), dtype=complex)
        full[..., self._idx] = c
        return np.fft.ifft(full, axis=-1) * self.n_grid

    def from_grid(self, f: np.ndarray) -> np.ndarray:
        return (np.fft.fft(f, axis=-1) / self.n_grid)[..., self._idx]

    def l2sq(self, c: np.ndarray) -> float:
        """Squared L^2 norm from coefficients (all components summed)."""
        return float(self.L * np.sum(np.abs(c) ** 2))

    def grid_l2sq(self, f: np.ndarray) -> float:
        return float(self.L / self.n_grid * np.sum(np.abs(f) ** 2))


def _field_table(m: ManifoldModel, entries, rows: int, cols: int, t: float, x: np.ndarray) -> Optional[np.ndarray]:
    if entries is None:
        return None
    out = np.zeros((x.size, rows, cols), dtype=complex)
    for i, row in enumerate(entries):
        for j, f in enumerate(row):
            if not f.is_zero:
                out[:, i, j] = f(m, t, x[:, None])
    return out


def _apply(grid: Grid, table: Optional[np.ndarray], c: np.ndarray) -> Optional[np.ndarray]:
    """Coefficients of ``table(x) @ f(x)`` truncated to ``|n| <= M``."""
    if table is None:
        return None
    f = grid.to_grid(c)
    return grid.from_grid(np.einsum("xij,jx->ix", table, f))


class _Operator:
    """Right-hand side of the first-order system for ``(V, V_t)``."""

    def __init__(self, grid: Grid, coupling: Optional[MatrixSymbol], m: ManifoldModel, N: int):
        self.grid, self.m, self.N = grid, m, N
        self.coupling = coupling
        self.zero = coupling is None or (coupling.order0 is None and coupling.order1 is None)
        self.static = self.zero or coupling.time_independent
        self._cache = None

    def tables(self, t: float):
        if self.zero:
            return None, None
        if self.static and self._cache is not None:
            return self._cache
        c = self.coupling
        x = self.grid.x
        tabs = (_field_table(self.m, c.order0, self.N, self.N, t, x),
                _field_table(self.m, c.order1, self.N, self.N, t, x))
        if self.static:
            self._cache = tabs
        return tabs

    def __call__(self, t: float, V: np.ndarray, W: np.ndarray):
        acc = -(self.grid.lam ** 2) * V
        if not self.zero:
            b0, b1 = self.tables(t)
            if b0 is not None:
                acc = acc - _apply(self.grid, b0, W)
            if b1 is not None:
                acc = acc - _apply(self.grid, b1, self.grid.absD * V)
        return W, acc


def energy(state: SpectralState) -> float:
    """``int |V_t|^2 + |grad V|^2 + |V|^2`` from the coefficients."""
    g = Grid(state.M, state.period)
    return g.l2sq(state.Vt_hat) + g.l2sq(g.lam * state.V_hat)


@dataclass
class Trajectory:
    times: np.ndarray
    V_hat: np.ndarray
    Vt_hat: np.ndarray
    energy: np.ndarray
    observed: Optional[np.ndarray] = None

    def final(self, M: int, m: ManifoldModel = CIRCLE) -> SpectralState:
        return SpectralState(M, self.V_hat[-1], self.Vt_hat[-1], m)


def evolve(state: SpectralState, coupling: Optional[MatrixSymbol], T: float, dt: float,
           save_every: int = 1, observer: Optional[Callable[[float, np.ndarray, np.ndarray], float]] = None
           ) -> Trajectory:
    """Classical RK4 in coefficient space for ``(V, V_t)`` on ``[0, T]``.

    ``dt`` is shrunk so that an integer number of steps reaches ``T``; it must
    not exceed ``0.5 / (M + 1)``.  ``observer(t, V_hat, Vt_hat)`` is evaluated
    at every step (not only saved ones).  With zero coupling the energy is
    monitored and :class:`Instability` raised if it grows tenfold.
    """
    M, L, N = state.M, state.period, state.N
    if dt > 0.5 / (M + 1):
        raise ValueError(f"dt={dt} exceeds the stability bound 0.5/(M+1)")
    steps = max(1, int(math.ceil(T / dt - 1e-9)))
    h = T / steps
    grid = Grid(M, L)
    op = _Operator(grid, coupling, state.manifold, N)
    V, W = state.V_hat.copy(), state.Vt_hat.copy()
    e0 = energy(state)
    times, Vs, Ws, Es, obs = [0.0], [V.copy()], [W.copy()], [e0], []
    if observer is not None:
        obs.append(observer(0.0, V, W))
    for j in range(steps):
        t = j * h
        k1v, k1w = op(t, V, W)
        k2v, k2w = op(t + h / 2, V + h / 2 * k1v, W + h / 2 * k1w)
        k3v, k3w = op(t + h / 2, V + h / 2 * k2v, W + h / 2 * k2w)
        k4v, k4w = op(t + h, V + h * k3v, W + h * k3w)
        V = V + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
        W = W + h / 6 * (k1w + 2 * k2w + 2 * k3w + k4w)
        if observer is not None:
            obs.append(observer(t + h, V, W))
        if (j + 1) % save_every == 0 or j + 1 == steps:
            e = grid.l2sq(W) + grid.l2sq(grid.lam * V)
            if not math.isfinite(e):
                raise Instability(f"non-finite state at t={t + h}")
            if op.zero and e > 10 * max(e0, 1e-300) and e0 > 0:
                raise Instability(f"energy grew from {e0} to {e} without coupling")
            times.append(t + h)
            Vs.append(V.copy())
            Ws.append(W.copy())
            Es.append(e)
    return Trajectory(np.array(times), np.array(Vs), np.array(Ws), np.array(Es),
                      None if observer is None else np.array(obs))


# ---------------------------------------------------------------- half-wave transform


def halfwave(state: SpectralState) -> HalfWaveState:
    """``V_+ = V_t + i Lambda V`` and ``V_- = V_t - i Lambda V``."""
    lam = Grid(state.M, state.period).lam
    return HalfWaveState(state.M, state.Vt_hat + 1j * lam * state.V_hat,
                         state.Vt_hat - 1j * lam * state.V_hat, state.manifold)


def inverse_halfwave(hw: HalfWaveState) -> SpectralState:
    """``V_0 = Lambda^-1 (V_+ - V_-) / 2i`` and ``V_1 = (V_+ + V_-) / 2``."""
    vp = np.atleast_2d(hw.Vplus_hat)
    vm = np.atleast_2d(hw.Vminus_hat)
    if vp.shape != vm.shape:
        raise DimensionMismatch("V_+ and V_- shapes differ")
    lam = Grid(hw.M, hw.manifold.periods[0]).lam
    return SpectralState(hw.M, (vp - vm) / (2j * lam), 0.5 * (vp + vm), hw.manifold)


def sobolev_sq(c: np.ndarray, s: float, M: int, L: float) -> float:
    g = Grid(M, L)
    return g.l2sq(g.lam ** s * c)


def halfwave_norm_gap(state: SpectralState, s: float = 1.0) -> float:
    """``2 ||(V0, V1)||^2_{H^s x H^(s-1)} - ||(V+, V-)||^2_{(H^(s-1))^2}``, relative."""
    M, L = state.M, state.period
    hw = halfwave(state)
    lhs = 2 * (sobolev_sq(state.V_hat, s, M, L) + sobolev_sq(state.Vt_hat, s - 1, M, L))
    rhs = sobolev_sq(hw.Vplus_hat, s - 1, M, L) + sobolev_sq(hw.Vminus_hat, s - 1, M, L)
    return abs(lhs - rhs) / max(lhs, rhs, 1e-300)


# ---------------------------------------------------------------- wavepackets


def default_cutoff(y0: float, L: float) -> Callable[[np.ndarray], np.ndarray]:
    """Plateau cutoff around ``y0``: 1 within ``L/4``, 0 beyond ``3L/8``."""
    from .symbols import bump_indicator

    f = bump_indicator((y0,), L / 4, 3 * L / 8)
    m = ManifoldModel("torus", (L,))
    return lambda y: np.real(f(m, 0.0, np.asarray(y)[:, None]))


@dataclass
class WavePacket:
    k: float
    rho0: PhasePoint
    P: np.ndarray
    C0: float
    v_hat: np.ndarray
    M: int
    manifold: ManifoldModel = CIRCLE

    def norm_sq(self, s: float) -> float:
        return sobolev_sq(self.v_hat, s, self.M, self.manifold.periods[0])


def packet(rho0: PhasePoint, k: float, M: int, psi: Optional[Callable] = None,
           m: ManifoldModel = CIRCLE) -> tuple[np.ndarray, float]:
    """Coefficients of ``C0 k^(1/4) exp(i k y eta0 - k (y - y0)^2) psi(y)`` with unit L^2 norm."""
    L = _check_manifold(m)
    if M < 4 * k:
        raise CutoffTooSmall(f"cutoff M={M} is below 4k={4 * k}")
    y0, eta0 = rho0.x[0], rho0.xi[0]
    grid = Grid(M, L, n_grid=max(16, 8 * M))
    y = grid.x
    # distance to y0 on the circle, signed, so the Gaussian wraps smoothly
    dy = (y - y0 + L / 2) % L - L / 2
    psi = psi or default_cutoff(y0, L)
    raw = k ** 0.25 * np.exp(1j * k * eta0 * 2 * math.pi / L * (y0 + dy) - k * dy ** 2) * psi(y)
    c = grid.from_grid(raw)
    C0 = 1.0 / math.sqrt(grid.l2sq(c))
    return C0 * c, C0


def wavepacket_data(rho0: PhasePoint, k: float, P: Sequence[complex], M: int, psi: Optional[Callable] = None,
                    m: ManifoldModel = CIRCLE) -> tuple[SpectralState, WavePacket]:
    """Initial data ``Sigma^-1 (0, P v_-)`` for a normalised Gaussian packet ``v_-``."""
    P = np.asarray(P, dtype=complex).ravel()
    P = P / np.linalg.norm(P)
    v, C0 = packet(rho0, k, M, psi, m)
    hw = HalfWaveState(M, np.zeros((P.size, v.size), dtype=complex), P[:, None] * v[None, :], m)
    return inverse_halfwave(hw), WavePacket(k, rho0, P, C0, v, M, m)


# ---------------------------------------------------------------- observation ratio


def observation_sq(grid: Grid, observation: MatrixSymbol, m: ManifoldModel, t: float, V: np.ndarray,
                   W: np.ndarray) -> float:
    """``||D V||^2`` with ``D = op(d0) d/dt + op(d1) |D|``."""
    K, N = observation.rows, observation.cols
    d0 = _field_table(m, observation.order0, K, N, t, grid.x)
    d1 = _field_table(m, observation.order1, K, N, t, grid.x)
    f = np.zeros((K, grid.n_grid), dtype=complex)
    if d0 is not None:
        f += np.einsum("xij,jx->ix", d0, grid.to_grid(W))
    if d1 is not None:
        f += np.einsum("xij,jx->ix", d1, grid.to_grid(grid.absD * V))
    return grid.grid_l2sq(f)


@dataclass
class RatioResult:
    ratio: float
    numerator: float
    denominator: float
    k: float


def symbol_ratio(sc, rho0: PhasePoint, P: Sequence[complex], T: float, k: float, dt: float,
                 M: Optional[int] = None, psi: Optional[Callable] = None) -> RatioResult:
    """``int_0^T ||D V^k||^2 dt`` divided by ``P^* G^-_rho0(T) P``.

    The numerator comes from the spectral solver only, the denominator from
    the ray Gramian of the observability module.
    """
    from .observability import branch_gramian

    m = sc.manifold
    M = M if M is not None else int(4 * k)
    coupling, observation = sc.symbols
    state, wp = wavepacket_data(rho0, k, P, M, psi, m)
    G = branch_gramian(sc, rho0, "-", T).matrix
    den = float(np.real(wp.P.conj() @ G @ wp.P))
    grid = Grid(M, m.periods[0])
    steps = max(2, int(math.ceil(T / dt - 1e-9)))
    steps += steps % 2
    traj = evolve(state, coupling, T, T / steps, save_every=steps,
                  observer=lambda t, V, W: observation_sq(grid, observation, m, t, V, W))
    h = T / steps
    w = np.ones(steps + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    num = float(np.sum(w * traj.observed) * h / 3.0)
    if den < 1e-12:
        raise DegenerateDenominator(f"P^* G P = {den} is below 1e-12 (numerator {num})")
    return RatioResult(num / den, num, den, k)


def write_observation_csv(path: str, times: np.ndarray, values: np.ndarray) -> None:
    """Dump ``(t, observed energy density)`` rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "observed"])
        for t, v in zip(times, values):
            w.writerow([repr(float(t)), repr(float(v))])


# ---------------------------------------------------------------- discrete unique continuation


@dataclass
class UcpScreen:
    verdict: str
    M: int
    residual_floor: float
    offending: Optional[tuple[complex, np.ndarray]]
    eigen_count: int


def discrete_ucp(A, B, omega: Optional[ScalarField], M: int, m: ManifoldModel = CIRCLE,
                 threshold: float = 1e-6) -> UcpScreen:
    """Screen eigenfunctions of ``-Delta + A^*`` (truncated at ``|n| <= M``) for invisibility.

    For each eigenvalue cluster the smallest normalised residual
    ``||chi_omega B^* v|| / ||v||`` over its eigenspace is computed.  A verdict
    ``NoViolationFound`` only covers the cutoff ``M``.
    """
    L = _check_manifold(m)
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    B = np.asarray(B, dtype=complex)
    B = B[:, None] if B.ndim == 1 else B
    N = A.shape[0]
    if A.shape != (N, N) or B.shape[0] != N:
        raise DimensionMismatch("incompatible A, B")
    Astar = A.conj().T
    grid = Grid(M, L, n_grid=max(64, 16 * (M + 1)))
    chi = np.ones(grid.n_grid) if omega is None else np.real(omega(m, 0.0, grid.x[:, None]))
    Bs = B.conj().T
    eig = []
    for idx, kk in enumerate(grid.wavenumber):
        for mu in np.linalg.eigvals(Astar):
            eig.append((kk ** 2 + mu, idx))
    scale = max(1.0, float(np.max(np.abs([e for e, _ in eig]))))
    gap = 1e-9 * scale
    eig.sort(key=lambda e: (e[0].real, e[0].imag))
    clusters: list[list] = []
    for lam, idx in eig:
        if clusters and abs(lam - clusters[-1][0][0]) <= gap:
            clusters[-1].append((lam, idx))
        else:
            clusters.append([(lam, idx)])
    floor, offending, count = math.inf, None, 0
    for cl in clusters:
        lam = np.mean([e for e, _ in cl])
        modes = sorted({i for _, i in cl})
        # block-diagonal operator restricted to the modes of this cluster
        H = np.zeros((N * len(modes), N * len(modes)), dtype=complex)
        for p, i in enumerate(modes):
            H[p * N:(p + 1) * N, p * N:(p + 1) * N] = grid.wavenumber[i] ** 2 * np.eye(N) + Astar
        U, s, Vh = np.linalg.svd(H - lam * np.eye(H.shape[0]))
        tol = 1e-8 * scale
        basis = Vh[s <= tol].conj().T if np.any(s <= tol) else Vh[-1:].conj().T
        count += basis.shape[1]
        cols = []
        for b in basis.T:
            coeff = np.zeros((N, 2 * M + 1), dtype=complex)
            for p, i in enumerate(modes):
                coeff[:, i] = b[p * N:(p + 1) * N]
            f = grid.to_grid(coeff)
            obs = chi[None, :] * (Bs @ f)
            cols.append(obs.ravel() * math.sqrt(L / grid.n_grid))
        Omat = np.stack(cols, axis=1)
        sv = np.linalg.svd(Omat, compute_uv=False)
        res = float(sv[-1]) / math.sqrt(L) if basis.shape[1] <= Omat.shape[0] else 0.0
        if res < floor:
            floor = res
            offending = (complex(lam), basis)
    verdict = "NoViolationFound" if floor > threshold else "PossibleViolation"
    return UcpScreen(verdict, M, floor, None if verdict == "NoViolationFound" else offending, count)
