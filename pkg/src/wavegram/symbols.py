"""Time-dependent matrix symbols on the unit cosphere bundle.

A symbol is stored by homogeneity order.  The order-1 part is a coefficient
of ``|xi|_x`` and carries no other direction dependence, so on the unit
cosphere both orders are plain functions of ``(t, x)``.  Scalar entries are
:class:`ScalarField` objects: a spatial representation times an optional
trigonometric polynomial in time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import BadRadii, DimensionMismatch, NonFiniteCoefficient, NotSubdiagonal, NotSupported
from .phase_flow import ManifoldModel, PhasePoint, validate


# ---------------------------------------------------------------- spatial parts


@dataclass(frozen=True)
class Constant:
    value: complex = 1.0

    def evaluate(self, m: ManifoldModel, x: np.ndarray) -> np.ndarray:
        return np.full(x.shape[:-1], complex(self.value))

    def conj(self) -> "Constant":
        return Constant(complex(self.value).conjugate())

    def is_real(self) -> bool:
        return complex(self.value).imag == 0.0

    def is_zero(self) -> bool:
        return self.value == 0


@dataclass(frozen=True)
class TrigPoly:
    """``sum_k c_k exp(2 pi i k.x / L)`` on a flat torus; ``terms`` is ``((k, c), ...)``."""

    terms: tuple[tuple[tuple[int, ...], complex], ...]

    def evaluate(self, m: ManifoldModel, x: np.ndarray) -> np.ndarray:
        if m.kind != "torus":
            raise NotSupported("trigonometric polynomials are defined on flat tori only")
        out = np.zeros(x.shape[:-1], dtype=complex)
        scale = 2 * np.pi / np.asarray(m.periods)
        for k, c in self.terms:
            if len(k) != m.dim:
                raise DimensionMismatch(f"frequency {k} does not match torus dimension {m.dim}")
            out += complex(c) * np.exp(1j * (x @ (np.asarray(k, dtype=float) * scale)))
        return out

    def conj(self) -> "TrigPoly":
        return TrigPoly(tuple((tuple(-v for v in k), complex(c).conjugate()) for k, c in self.terms))

    def _coeffs(self) -> dict:
        acc: dict = {}
        for k, c in self.terms:
            acc[tuple(k)] = acc.get(tuple(k), 0) + complex(c)
        return acc

    def is_real(self) -> bool:
        acc = self._coeffs()
        for k, c in acc.items():
            partner = acc.get(tuple(-v for v in k), 0)
            if abs(c - complex(partner).conjugate()) > 1e-15 * max(1.0, abs(c)):
                return False
        return True

    def is_zero(self) -> bool:
        return all(c == 0 for c in self._coeffs().values())


@dataclass(frozen=True)
class AmbientPoly:
    """Polynomial in the ambient coordinates of the sphere; ``terms`` is ``((exponents, c), ...)``."""

    terms: tuple[tuple[tuple[int, int, int], complex], ...]

    def evaluate(self, m: ManifoldModel, x: np.ndarray) -> np.ndarray:
        if m.kind != "sphere":
            raise NotSupported("ambient polynomials are defined on the sphere only")
        out = np.zeros(x.shape[:-1], dtype=complex)
        for e, c in self.terms:
            out += complex(c) * np.prod(x ** np.asarray(e, dtype=float), axis=-1)
        return out

    def conj(self) -> "AmbientPoly":
        return AmbientPoly(tuple((tuple(e), complex(c).conjugate()) for e, c in self.terms))

    def is_real(self) -> bool:
        return all(complex(c).imag == 0.0 for _, c in self.terms)

    def is_zero(self) -> bool:
        return all(c == 0 for _, c in self.terms)


def _bridge(s: np.ndarray) -> np.ndarray:
    out = np.zeros_like(s)
    inside = (s > 0) & (s < 1)
    si = s[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - si * si))
    out[s <= 0] = 1.0
    return out


@dataclass(frozen=True)
class Bump:
    """Plateau indicator: 1 within ``r_in`` of ``center``, 0 beyond ``r_out``."""

    center: tuple[float, ...]
    r_in: float
    r_out: float

    def evaluate(self, m: ManifoldModel, x: np.ndarray) -> np.ndarray:
        d = m.distance(x, np.asarray(self.center, dtype=float))
        s = (d - self.r_in) / (self.r_out - self.r_in)
        return _bridge(np.asarray(s, dtype=float)).astype(complex)

    def conj(self) -> "Bump":
        return self

    def is_real(self) -> bool:
        return True

    def is_zero(self) -> bool:
        return False

    @property
    def support_length(self) -> float:
        return 2.0 * self.r_out


Spatial = Union[Constant, TrigPoly, AmbientPoly, Bump]


@dataclass(frozen=True)
class TimeTrig:
    """``sum_j c_j exp(i w_j t)`` with real frequencies ``w_j``."""

    terms: tuple[tuple[float, complex], ...]

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape, dtype=complex)
        for w, c in self.terms:
            out = out + complex(c) * np.exp(1j * float(w) * t)
        return out

    def conj(self) -> "TimeTrig":
        return TimeTrig(tuple((-float(w), complex(c).conjugate()) for w, c in self.terms))

    def is_real(self) -> bool:
        acc: dict = {}
        for w, c in self.terms:
            acc[float(w)] = acc.get(float(w), 0) + complex(c)
        return all(
            abs(c - complex(acc.get(-w, 0)).conjugate()) <= 1e-15 * max(1.0, abs(c)) for w, c in acc.items()
        )

    def is_zero(self) -> bool:
        return all(c == 0 for _, c in self.terms)


# ---------------------------------------------------------------- scalar fields


@dataclass(frozen=True)
class ScalarField:
    """``scale * spatial(x) * time_factor(t)``; evaluation broadcasts over leading axes."""

    spatial: Spatial = field(default_factory=Constant)
    time_factor: Optional[TimeTrig] = None
    scale: complex = 1.0

    def __call__(self, m: ManifoldModel, t, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        val = complex(self.scale) * self.spatial.evaluate(m, x)
        if self.time_factor is not None:
            val = val * self.time_factor(t)
        return val

    def at(self, m: ManifoldModel, t: float, rho: PhasePoint) -> complex:
        return complex(self(m, t, rho.x_array))

    def conj(self) -> "ScalarField":
        tf = None if self.time_factor is None else self.time_factor.conj()
        return ScalarField(self.spatial.conj(), tf, complex(self.scale).conjugate())

    def scaled(self, c: complex) -> "ScalarField":
        return ScalarField(self.spatial, self.time_factor, complex(self.scale) * complex(c))

    @property
    def is_real(self) -> bool:
        parts_real = self.spatial.is_real() and (self.time_factor is None or self.time_factor.is_real())
        return parts_real and complex(self.scale).imag == 0.0

    @property
    def is_zero(self) -> bool:
        return (
            self.scale == 0
            or self.spatial.is_zero()
            or (self.time_factor is not None and self.time_factor.is_zero())
        )

    @property
    def time_independent(self) -> bool:
        return self.time_factor is None


def const(value: complex) -> ScalarField:
    return ScalarField(Constant(value))


def trig(terms: Sequence[tuple[Sequence[int], complex]], time_factor: Optional[TimeTrig] = None) -> ScalarField:
    return ScalarField(TrigPoly(tuple((tuple(int(v) for v in k), complex(c)) for k, c in terms)), time_factor)


ZERO = const(0.0)
ONE = const(1.0)


def bump_indicator(center: Sequence[float], r_in: float, r_out: float, m: Optional[ManifoldModel] = None) -> ScalarField:
    """Smoothed indicator of a geodesic ball.

    Equals 1 where ``d(x, center) <= r_in``, 0 where ``d >= r_out`` and
    ``exp(1 - 1/(1 - s^2))`` with ``s = (d - r_in)/(r_out - r_in)`` in between.
    When ``m`` is given, ``r_out`` is checked against its injectivity radius.
    """
    if not (0 < r_in < r_out) or not math.isfinite(r_out):
        raise BadRadii(f"need 0 < r_in < r_out, got r_in={r_in}, r_out={r_out}")
    if m is not None and r_out > m.injectivity_radius + 1e-15:
        raise BadRadii(f"r_out={r_out} exceeds the injectivity radius {m.injectivity_radius}")
    c = tuple(float(v) for v in np.ravel(center))
    return ScalarField(Bump(c, float(r_in), float(r_out)))


# ---------------------------------------------------------------- matrix symbols

Entries = tuple[tuple[ScalarField, ...], ...]


def _as_entries(rows: int, cols: int, entries) -> Optional[Entries]:
    if entries is None:
        return None
    out = tuple(tuple(e if e is not None else ZERO for e in row) for row in entries)
    if len(out) != rows or any(len(r) != cols for r in out):
        raise DimensionMismatch(f"expected a {rows}x{cols} table of fields")
    if all(e.is_zero for r in out for e in r):
        return None
    return out


def _eval_entries(m: ManifoldModel, entries: Optional[Entries], rows: int, cols: int, t, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    batch = np.broadcast_shapes(x.shape[:-1], np.shape(t))
    out = np.zeros(batch + (rows, cols), dtype=complex)
    if entries is None:
        return out
    for i, row in enumerate(entries):
        for j, f in enumerate(row):
            if not f.is_zero:
                out[..., i, j] = f(m, t, x)
    if not np.all(np.isfinite(out)):
        raise NonFiniteCoefficient("symbol evaluated to a non-finite value")
    return out


@dataclass(frozen=True)
class MatrixSymbol:
    """Matrix symbol ``order0 + order1 * |xi|_x``; ``None`` stands for an all-zero order."""

    rows: int
    cols: int
    order0: Optional[Entries] = None
    order1: Optional[Entries] = None

    def __post_init__(self):
        object.__setattr__(self, "order0", _as_entries(self.rows, self.cols, self.order0))
        object.__setattr__(self, "order1", _as_entries(self.rows, self.cols, self.order1))

    @property
    def parity_flag(self) -> bool:
        # an order-1 part c(x)|xi| is even in xi, so the odd-in-xi parity of
        # differential operators only holds when it vanishes
        return self.order1 is None

    @property
    def time_independent(self) -> bool:
        return all(f.time_independent for part in (self.order0, self.order1) if part for r in part for f in r)

    def eval_order(self, m: ManifoldModel, which: int, t, x) -> np.ndarray:
        return _eval_entries(m, self.order0 if which == 0 else self.order1, self.rows, self.cols, t, x)

    def combined_arrays(self, m: ManifoldModel, sign: int, t, x) -> np.ndarray:
        """Vectorised ``order0 + sign * order1 / i`` on the unit cosphere."""
        val = self.eval_order(m, 0, t, x)
        if self.order1 is not None:
            val = val + (sign * -1j) * self.eval_order(m, 1, t, x)
        return val


def zero_symbol(rows: int, cols: int) -> MatrixSymbol:
    return MatrixSymbol(rows, cols)


def constant_symbol(order0=None, order1=None) -> MatrixSymbol:
    """Symbol with constant entries given as numpy-compatible matrices."""
    ref = np.atleast_2d(np.asarray(order0 if order0 is not None else order1))
    rows, cols = ref.shape

    def table(mat):
        if mat is None:
            return None
        mat = np.atleast_2d(np.asarray(mat, dtype=complex))
        if mat.shape != (rows, cols):
            raise DimensionMismatch("order0 and order1 shapes differ")
        return tuple(tuple(const(v) for v in row) for row in mat)

    return MatrixSymbol(rows, cols, table(order0), table(order1))


def sign_value(sign) -> int:
    if sign in (+1, "+", "plus"):
        return +1
    if sign in (-1, "-", "minus", "−"):
        return -1
    raise ValueError(f"branch sign must be + or -, got {sign!r}")


def eval_combined(m: ManifoldModel, s: MatrixSymbol, sign, t: float, rho: PhasePoint) -> np.ndarray:
    """``order0(t, rho) + sign * order1(t, rho) / i`` at a unit-cosphere point."""
    validate(m, rho)
    return s.combined_arrays(m, sign_value(sign), t, rho.x_array)


# ---------------------------------------------------------------- zero-order lift


def _check_blocks(block_sizes: Sequence[int], n: int) -> tuple[int, ...]:
    d = tuple(int(v) for v in block_sizes)
    if not d or any(v <= 0 for v in d) or sum(d) != n:
        raise NotSubdiagonal(f"block sizes {d} do not partition {n}")
    return d


def block_index(d: Sequence[int]) -> np.ndarray:
    """Block number of each coordinate."""
    return np.repeat(np.arange(len(d)), d)


@dataclass(frozen=True)
class ZeroOrderCoupling:
    """Zero-order coupling ``A(x)`` (N x N) and control ``B(x)`` (N x K) in block layout."""

    A_field: Entries
    B_field: Entries
    block_sizes: tuple[int, ...]

    def __post_init__(self):
        n = len(self.A_field)
        if any(len(r) != n for r in self.A_field):
            raise DimensionMismatch("A must be square")
        if len(self.B_field) != n:
            raise DimensionMismatch("B must have as many rows as A")
        k = len(self.B_field[0]) if n else 0
        if any(len(r) != k for r in self.B_field):
            raise DimensionMismatch("ragged B table")
        object.__setattr__(self, "block_sizes", _check_blocks(self.block_sizes, n))

    @property
    def N(self) -> int:
        return len(self.A_field)

    @property
    def K(self) -> int:
        return len(self.B_field[0])

    def check_structure(self) -> None:
        blk = block_index(self.block_sizes)
        for i in range(self.N):
            for j in range(self.N):
                if blk[i] > blk[j] + 1 and not self.A_field[i][j].is_zero:
                    raise NotSubdiagonal(f"A[{i}][{j}] lies below the subdiagonal block band")
            for j in range(self.K):
                if blk[i] > 0 and not self.B_field[i][j].is_zero:
                    raise NotSubdiagonal(f"B[{i}][{j}] lies outside the first block row")

    def sub_fields(self) -> Entries:
        blk = block_index(self.block_sizes)
        return tuple(
            tuple(self.A_field[i][j] if blk[i] == blk[j] + 1 else ZERO for j in range(self.N))
            for i in range(self.N)
        )

    def eval_A(self, m: ManifoldModel, x) -> np.ndarray:
        return _eval_entries(m, self.A_field, self.N, self.N, 0.0, x)

    def eval_B(self, m: ManifoldModel, x) -> np.ndarray:
        return _eval_entries(m, self.B_field, self.N, self.K, 0.0, x)


def _adjoint_table(entries: Entries, factor: complex) -> Entries:
    rows, cols = len(entries), len(entries[0])
    return tuple(tuple(entries[i][j].conj().scaled(factor) for i in range(rows)) for j in range(cols))


def lift_zero_order(z: ZeroOrderCoupling) -> tuple[MatrixSymbol, MatrixSymbol]:
    """Order-1 symbols of the first-order system obtained from a zero-order coupling.

    The coupling symbol has ``order1 = -i A_sub^*`` and the observation symbol
    ``order1 = -i B^*``.  On the ``-`` branch the combined symbols are then
    ``A_sub^*`` and ``B^*``, so the transported ray system has drift
    ``A_sub(x(t))/2`` and control ``B(x(t))/2``.  The ``+`` branch sees
    ``-A_sub`` instead; flipping the sign of every other block conjugates one
    into the other, so both branches have the same Gramian spectrum.
    """
    z.check_structure()
    n, k = z.N, z.K
    coupling = MatrixSymbol(n, n, None, _adjoint_table(z.sub_fields(), -1j))
    observation = MatrixSymbol(k, n, None, _adjoint_table(z.B_field, -1j))
    return coupling, observation
