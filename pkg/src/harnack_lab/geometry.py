"""Discrete model geometries: the flat periodic torus and the axisymmetric round sphere.

All differential operators act on the trailing grid axes of their input, so a
stack of fields (for example the two members of a constrained pair, or a time
series of snapshots) can be processed in one call.

The sphere is represented by a cell-centred colatitude grid; fields are assumed
to be functions of the colatitude only.  Frame quantities (gradients, Hessians)
are expressed in the orthonormal frame ``(e_theta, e_phi)`` of the round metric
of radius ``r``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

MIN_POINTS = 8


class GridKind(str, enum.Enum):
    TORUS = "torus"
    SPHERE = "sphere"


@dataclass(frozen=True)
class ManifoldGrid:
    """Node layout of one of the two model geometries.

    ``dim`` is the number of array axes of a field (1 or 2 on the torus, always
    1 on the sphere); :attr:`manifold_dim` is the dimension of the manifold
    itself, which is 2 for the sphere.
    """

    kind: GridKind
    dim: int
    n: int
    side_length: float | None = None
    base_radius: float | None = None

    @property
    def is_torus(self) -> bool:
        return self.kind is GridKind.TORUS

    @property
    def is_sphere(self) -> bool:
        return self.kind is GridKind.SPHERE

    @property
    def manifold_dim(self) -> int:
        return self.dim if self.is_torus else 2

    @property
    def spacing(self) -> float:
        """Coordinate spacing: ``L/n`` on the torus, ``pi/n`` in colatitude."""
        if self.is_torus:
            return self.side_length / self.n
        return math.pi / self.n

    @property
    def mesh_spacing(self) -> float:
        """Physical node spacing at the base scale (used by tolerance models)."""
        if self.is_torus:
            return self.spacing
        return self.base_radius * self.spacing

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n**self.dim

    @cached_property
    def theta(self) -> np.ndarray:
        if not self.is_sphere:
            raise AttributeError("theta is only defined on the sphere")
        return (np.arange(self.n) + 0.5) * math.pi / self.n

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        """Per-axis node coordinates (``x_j = j h`` on the torus, ``theta_j`` on the sphere)."""
        if self.is_sphere:
            return (self.theta,)
        x = np.arange(self.n) * self.spacing
        return (x,) * self.dim

    def coords(self) -> tuple[np.ndarray, ...]:
        """Node coordinates broadcast to the grid shape (``ij`` indexing)."""
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    def node_coords(self, index: int | Sequence[int]) -> tuple[float, ...]:
        """Coordinates of a node given either a flat or a multi-index."""
        if np.ndim(index) == 0:
            index = np.unravel_index(int(index), self.shape)
        return tuple(float(ax[i]) for ax, i in zip(self.axes, index))

    # sphere stencil coefficients
    @cached_property
    def _sin_faces(self) -> np.ndarray:
        inner = np.arange(1, self.n) * math.pi / self.n
        return np.sin(inner)

    @cached_property
    def _sin_centres(self) -> np.ndarray:
        return np.sin(self.theta)

    @cached_property
    def _cot_centres(self) -> np.ndarray:
        return np.cos(self.theta) / np.sin(self.theta)


@dataclass(frozen=True)
class CurvatureInfo:
    scalar_R: float
    ricci_min_eigenvalue: float
    sectional_min: float


def build_torus(dim: int, n: int, side_length: float) -> ManifoldGrid:
    if dim not in (1, 2):
        raise ValueError(f"unsupported torus dimension {dim}; expected 1 or 2")
    if n < MIN_POINTS:
        raise ValueError(f"need at least {MIN_POINTS} points per axis, got {n}")
    if not side_length > 0:
        raise ValueError(f"side_length must be positive, got {side_length}")
    return ManifoldGrid(GridKind.TORUS, dim, int(n), side_length=float(side_length))


def build_sphere(n_theta: int, r0: float) -> ManifoldGrid:
    if n_theta < MIN_POINTS:
        raise ValueError(f"need at least {MIN_POINTS} colatitude points, got {n_theta}")
    if not r0 > 0:
        raise ValueError(f"base radius must be positive, got {r0}")
    return ManifoldGrid(GridKind.SPHERE, 1, int(n_theta), base_radius=float(r0))


def _check_shape(grid: ManifoldGrid, field: np.ndarray) -> np.ndarray:
    field = np.asarray(field, dtype=float)
    if field.ndim < grid.dim or field.shape[-grid.dim:] != grid.shape:
        raise ValueError(f"field shape {field.shape} does not end with grid shape {grid.shape}")
    return field


def _check_r2(r_squared: float) -> None:
    if not r_squared > 0:
        raise ValueError(f"metric scale r^2 must be positive, got {r_squared}")


def _theta_pad(f: np.ndarray) -> np.ndarray:
    # even reflection across both poles
    return np.concatenate([f[..., :1], f, f[..., -1:]], axis=-1)


def _theta_derivative(f: np.ndarray, h: float) -> np.ndarray:
    p = _theta_pad(f)
    return (p[..., 2:] - p[..., :-2]) / (2.0 * h)


def _theta_second(f: np.ndarray, h: float) -> np.ndarray:
    p = _theta_pad(f)
    return (p[..., 2:] - 2.0 * f + p[..., :-2]) / (h * h)


def laplacian(grid: ManifoldGrid, field: np.ndarray, r_squared: float = 1.0) -> np.ndarray:
    """Second-order Laplace-Beltrami operator.

    On the torus ``r_squared`` is ignored.  On the sphere the conservative
    flux form ``(1/r^2 sin t) d/dt (sin t df/dt)`` is used with zero flux
    through the poles.
    """
    f = _check_shape(grid, field)
    h = grid.spacing
    if grid.is_torus:
        out = np.zeros_like(f)
        for axis in range(-grid.dim, 0):
            out += np.roll(f, 1, axis=axis) + np.roll(f, -1, axis=axis) - 2.0 * f
        return out / (h * h)
    _check_r2(r_squared)
    flux = grid._sin_faces * (f[..., 1:] - f[..., :-1]) / h
    zero = np.zeros(f.shape[:-1] + (1,))
    flux = np.concatenate([zero, flux, zero], axis=-1)
    return (flux[..., 1:] - flux[..., :-1]) / (h * grid._sin_centres * r_squared)


def gradient(grid: ManifoldGrid, field: np.ndarray, r_squared: float = 1.0) -> np.ndarray:
    """Orthonormal-frame gradient components, stacked on a new leading axis of length ``manifold_dim``."""
    f = _check_shape(grid, field)
    h = grid.spacing
    if grid.is_torus:
        comps = [
            (np.roll(f, -1, axis=axis) - np.roll(f, 1, axis=axis)) / (2.0 * h)
            for axis in range(-grid.dim, 0)
        ]
        return np.stack(comps)
    _check_r2(r_squared)
    d_theta = _theta_derivative(f, h) / math.sqrt(r_squared)
    return np.stack([d_theta, np.zeros_like(d_theta)])


def gradient_norm_sq(grid: ManifoldGrid, field: np.ndarray, r_squared: float = 1.0) -> np.ndarray:
    g = gradient(grid, field, r_squared)
    return np.sum(g * g, axis=0)


def hessian_frame(grid: ManifoldGrid, field: np.ndarray, r_squared: float = 1.0) -> np.ndarray:
    """Orthonormal-frame Hessian with shape ``(d, d, *field.shape)``.

    Sphere (axisymmetric): ``diag(f_tt, cot(t) f_t) / r^2``.
    """
    f = _check_shape(grid, field)
    h = grid.spacing
    d = grid.manifold_dim
    out = np.zeros((d, d) + f.shape)
    if grid.is_torus:
        axes = list(range(-grid.dim, 0))
        for i, ai in enumerate(axes):
            out[i, i] = (np.roll(f, -1, axis=ai) - 2.0 * f + np.roll(f, 1, axis=ai)) / (h * h)
        if grid.dim == 2:
            fp = np.roll(f, -1, axis=-2)
            fm = np.roll(f, 1, axis=-2)
            mixed = (
                np.roll(fp, -1, axis=-1) - np.roll(fp, 1, axis=-1)
                - np.roll(fm, -1, axis=-1) + np.roll(fm, 1, axis=-1)
            ) / (4.0 * h * h)
            out[0, 1] = mixed
            out[1, 0] = mixed
        return out
    _check_r2(r_squared)
    out[0, 0] = _theta_second(f, h) / r_squared
    out[1, 1] = grid._cot_centres * _theta_derivative(f, h) / r_squared
    return out


def min_eigenvalue(matrix: np.ndarray, shift: float = 0.0) -> np.ndarray:
    """Smallest eigenvalue of ``matrix + shift*I`` for per-node 1x1 or 2x2 symmetric matrices."""
    m = np.asarray(matrix, dtype=float)
    d = m.shape[0]
    if m.shape[1] != d or d not in (1, 2):
        raise ValueError(f"expected a (1,1,...) or (2,2,...) matrix field, got {m.shape}")
    if d == 1:
        return m[0, 0] + shift
    mean = 0.5 * (m[0, 0] + m[1, 1])
    half_gap = 0.5 * (m[0, 0] - m[1, 1])
    off = 0.5 * (m[0, 1] + m[1, 0])
    return mean - np.hypot(half_gap, off) + shift


def curvature(grid: ManifoldGrid, r_squared: float = 1.0) -> CurvatureInfo:
    if grid.is_torus:
        return CurvatureInfo(0.0, 0.0, 0.0)
    _check_r2(r_squared)
    k = 1.0 / r_squared
    return CurvatureInfo(2.0 * k, k, k)


def geodesic_distance(grid: ManifoldGrid, p, q, r_squared: float = 1.0) -> float:
    """Distance between two points given by coordinates (scalars or per-axis tuples).

    Torus: minimum-image Euclidean distance.  Sphere: both points are taken on
    one meridian, so the distance is ``r |theta_p - theta_q|``.
    """
    p = np.atleast_1d(np.asarray(p, dtype=float))
    q = np.atleast_1d(np.asarray(q, dtype=float))
    if grid.is_torus:
        if p.shape != (grid.dim,) or q.shape != (grid.dim,):
            raise ValueError(f"torus points need {grid.dim} coordinates")
        L = grid.side_length
        delta = np.abs(p - q) % L
        delta = np.minimum(delta, L - delta)
        return float(np.sqrt(np.sum(delta * delta)))
    _check_r2(r_squared)
    return float(math.sqrt(r_squared) * abs(p[0] - q[0]))


def displacement(grid: ManifoldGrid, p, q) -> np.ndarray:
    """Coordinate displacement from ``p`` to ``q`` along the shortest path (minimum image on the torus)."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    q = np.atleast_1d(np.asarray(q, dtype=float))
    d = q - p
    if grid.is_torus:
        L = grid.side_length
        d = (d + 0.5 * L) % L - 0.5 * L
    return d


def interpolate(grid: ManifoldGrid, field: np.ndarray, point) -> float:
    """Linear (torus: multilinear periodic) interpolation of a field at a coordinate point."""
    f = _check_shape(grid, field)
    point = np.atleast_1d(np.asarray(point, dtype=float))
    h = grid.spacing
    if grid.is_sphere:
        s = point[0] / h - 0.5
        s = min(max(s, 0.0), grid.n - 1.0)
        j = min(int(math.floor(s)), grid.n - 2)
        w = s - j
        return float((1.0 - w) * f[..., j] + w * f[..., j + 1])
    s = (point / h) % grid.n
    base = np.floor(s).astype(int)
    frac = s - base
    total = 0.0
    for corner in np.ndindex(*(2,) * grid.dim):
        idx = tuple((base[k] + corner[k]) % grid.n for k in range(grid.dim))
        weight = np.prod([frac[k] if corner[k] else 1.0 - frac[k] for k in range(grid.dim)])
        total += weight * f[(...,) + idx]
    return float(total)
