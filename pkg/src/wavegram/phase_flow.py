"""Closed-form geodesic flow on the unit cosphere bundle of flat tori and the round 2-sphere.

Phase points are stored in the coordinates each model prefers: a torus point
carries its coordinates reduced to ``[0, period)`` and a Euclidean unit
covector; a sphere point carries an ambient unit vector ``x`` in R^3 together
with the tangent unit vector ``xi`` (the metric is the induced one, so the
covector and its sharp coincide).

All functions are pure.  The ``*_arrays`` variants work on stacked numpy
arrays and are what the Gramian sweeps use; the :class:`PhasePoint` wrappers
exist for the public, point-at-a-time API.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidPhasePoint

UNIT_TOL = 1e-12

_GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


@dataclass(frozen=True)
class ManifoldModel:
    """A supported closed manifold.

    ``kind`` is ``"torus"`` (flat, dimension 1 or 2, one period per axis) or
    ``"sphere"`` (unit round sphere in R^3).
    """

    kind: str
    periods: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind == "torus":
            if len(self.periods) not in (1, 2):
                raise ValueError("flat torus must have dimension 1 or 2")
            if any(not (p > 0 and math.isfinite(p)) for p in self.periods):
                raise ValueError(f"torus periods must be positive, got {self.periods}")
            object.__setattr__(self, "periods", tuple(float(p) for p in self.periods))
        elif self.kind == "sphere":
            if self.periods:
                raise ValueError("round sphere takes no periods")
        else:
            raise ValueError(f"unsupported manifold kind {self.kind!r}")

    @property
    def dim(self) -> int:
        return len(self.periods) if self.kind == "torus" else 2

    @property
    def coord_dim(self) -> int:
        """Length of the coordinate tuples carried by phase points."""
        return len(self.periods) if self.kind == "torus" else 3

    @property
    def injectivity_radius(self) -> float:
        if self.kind == "torus":
            return 0.5 * min(self.periods)
        return math.pi

    def reduce(self, x: np.ndarray) -> np.ndarray:
        """Reduce torus coordinates to ``[0, period)``; identity on the sphere."""
        if self.kind != "torus":
            return x
        L = np.asarray(self.periods)
        r = np.mod(x, L)
        # np.mod can round a tiny negative up to exactly L
        return np.where(r >= L, 0.0, r)

    def distance(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Geodesic distance, broadcasting over leading axes."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == "torus":
            L = np.asarray(self.periods)
            d = np.abs(np.mod(x - y, L))
            d = np.minimum(d, L - d)
            return np.sqrt(np.sum(d * d, axis=-1))
        cross = np.linalg.norm(np.cross(x, y), axis=-1)
        dot = np.sum(x * y, axis=-1)
        return np.arctan2(cross, dot)


def FlatTorus(*periods: float) -> ManifoldModel:
    return ManifoldModel("torus", tuple(periods))


def RoundSphere2() -> ManifoldModel:
    return ManifoldModel("sphere")


CIRCLE = FlatTorus(2 * math.pi)


@dataclass(frozen=True)
class PhasePoint:
    x: tuple[float, ...]
    xi: tuple[float, ...]

    @classmethod
    def of(cls, x: Sequence[float], xi: Sequence[float]) -> "PhasePoint":
        return cls(tuple(float(v) for v in np.ravel(x)), tuple(float(v) for v in np.ravel(xi)))

    @property
    def x_array(self) -> np.ndarray:
        return np.asarray(self.x, dtype=float)

    @property
    def xi_array(self) -> np.ndarray:
        return np.asarray(self.xi, dtype=float)


def validate(m: ManifoldModel, rho: PhasePoint) -> None:
    """Raise :class:`InvalidPhasePoint` unless ``rho`` lies on the unit cosphere of ``m``."""
    d = m.coord_dim
    if len(rho.x) != d or len(rho.xi) != d:
        raise InvalidPhasePoint(f"expected {d} coordinates, got x={rho.x}, xi={rho.xi}")
    x, xi = rho.x_array, rho.xi_array
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xi))):
        raise InvalidPhasePoint("non-finite phase point")
    if abs(np.linalg.norm(xi) - 1.0) > UNIT_TOL:
        raise InvalidPhasePoint(f"|xi| = {np.linalg.norm(xi)!r} is not 1")
    if m.kind == "sphere":
        if abs(np.linalg.norm(x) - 1.0) > UNIT_TOL:
            raise InvalidPhasePoint("sphere point is not a unit vector")
        if abs(float(x @ xi)) > UNIT_TOL:
            raise InvalidPhasePoint("covector is not tangent at x")


def flow_arrays(m: ManifoldModel, x: np.ndarray, xi: np.ndarray, t) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised flow: ``x``, ``xi`` have shape ``(..., coord_dim)``, ``t`` broadcasts against ``...``."""
    t = np.asarray(t, dtype=float)[..., None]
    if m.kind == "torus":
        xt = m.reduce(x + t * xi)
        return xt, np.broadcast_to(xi, xt.shape).copy()
    c, s = np.cos(t), np.sin(t)
    return c * x + s * xi, c * xi - s * x


def flow(m: ManifoldModel, rho0: PhasePoint, t: float) -> PhasePoint:
    """Return the geodesic flow of ``rho0`` after time ``t`` (unit speed)."""
    validate(m, rho0)
    x, xi = flow_arrays(m, rho0.x_array, rho0.xi_array, t)
    return PhasePoint.of(x, xi)


def involution(rho: PhasePoint) -> PhasePoint:
    """(x, xi) -> (x, -xi)."""
    return PhasePoint(rho.x, tuple(-v for v in rho.xi))


def tangent_frame(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic orthonormal frame of the tangent plane of the unit sphere at ``x``."""
    x = np.asarray(x, dtype=float)
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(x)))] = 1.0
    u1 = axis - (axis @ x) * x
    u1 /= np.linalg.norm(u1)
    u2 = np.cross(x, u1)
    return u1, u2


def _fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n)
    z = 1.0 - (2.0 * i + 1.0) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = i * _GOLDEN_ANGLE
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)


def _directions_1d(n_dir: int) -> list[float]:
    # the unit cosphere of a circle has exactly two points per base point
    return [1.0, -1.0][: min(n_dir, 2)]


def sample_cosphere(m: ManifoldModel, n_x: int, n_dir: int) -> list[PhasePoint]:
    """Deterministic grid on S*M.

    Order is base-point major, direction minor:

    * torus dim 1: ``x_j = j L / n_x``; directions ``+1`` then ``-1``
      (``n_dir`` is capped at 2).
    * torus dim 2: ``x_(i,j) = (i L0 / n_x, j L1 / n_x)`` with ``i`` slowest;
      directions at angles ``2 pi l / n_dir``.
    * sphere: ``n_x`` Fibonacci-lattice points; directions at angles
      ``2 pi l / n_dir`` in the frame of :func:`tangent_frame`.
    """
    if n_x < 1 or n_dir < 1:
        raise ValueError("n_x and n_dir must be >= 1")
    pts: list[PhasePoint] = []
    if m.kind == "torus" and m.dim == 1:
        L = m.periods[0]
        for j in range(n_x):
            for s in _directions_1d(n_dir):
                pts.append(PhasePoint((j * L / n_x,), (s,)))
        return pts
    angles = [2 * math.pi * l / n_dir for l in range(n_dir)]
    if m.kind == "torus":
        L0, L1 = m.periods
        for i in range(n_x):
            for j in range(n_x):
                for a in angles:
                    pts.append(PhasePoint((i * L0 / n_x, j * L1 / n_x), (math.cos(a), math.sin(a))))
        return pts
    for x in _fibonacci_sphere(n_x):
        u1, u2 = tangent_frame(x)
        for a in angles:
            pts.append(PhasePoint.of(x, math.cos(a) * u1 + math.sin(a) * u2))
    return pts


def grid_spacing(m: ManifoldModel, n_x: int) -> float:
    """Typical distance between neighbouring base points of :func:`sample_cosphere`."""
    if m.kind == "torus":
        return max(m.periods) / n_x
    return math.sqrt(4 * math.pi / n_x)


def refine_around(m: ManifoldModel, rho: PhasePoint, n_x: int, n_dir: int) -> list[PhasePoint]:
    """Neighbours of ``rho`` at half the sampling spacing (one refinement ring)."""
    h = 0.5 * grid_spacing(m, n_x)
    x, xi = rho.x_array, rho.xi_array
    out: list[PhasePoint] = []
    if m.kind == "torus":
        for axis in range(m.dim):
            for s in (-1.0, 1.0):
                dx = np.zeros(m.dim)
                dx[axis] = s * (0.5 * m.periods[axis] / n_x)
                out.append(PhasePoint.of(m.reduce(x + dx), xi))
        if m.dim == 2:
            dth = math.pi / max(n_dir, 1)
            for s in (-1.0, 1.0):
                c, sn = math.cos(s * dth), math.sin(s * dth)
                out.append(PhasePoint.of(x, [c * xi[0] - sn * xi[1], sn * xi[0] + c * xi[1]]))
        return out
    perp = np.cross(x, xi)
    # move the base point along xi and along the perpendicular, parallel-transporting xi
    for v in (xi, perp):
        for s in (-1.0, 1.0):
            c, sn = math.cos(s * h), math.sin(s * h)
            xn = c * x + sn * v
            w = c * v - sn * x
            if v is xi:
                out.append(PhasePoint.of(xn, w))
            else:
                out.append(PhasePoint.of(xn, xi))
    dth = math.pi / max(n_dir, 1)
    for s in (-1.0, 1.0):
        out.append(PhasePoint.of(x, math.cos(s * dth) * xi + math.sin(s * dth) * perp))
    return out


def stack_points(points: Sequence[PhasePoint]) -> tuple[np.ndarray, np.ndarray]:
    """Stack phase points into ``(n, coord_dim)`` arrays."""
    x = np.array([p.x for p in points], dtype=float)
    xi = np.array([p.xi for p in points], dtype=float)
    return x, xi
