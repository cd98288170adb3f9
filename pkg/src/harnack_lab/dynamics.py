"""Method-of-lines integration of the logarithmic heat equations.

Three right-hand sides share one code path::

    log-heat            w_t = lap w + a w ln w
    log-Sobolev (eps)   w_t = lap w - w ln w + eps R w
    log-Sobolev         w_t = lap w - w ln w

Evolving metrics are the homothetic round-sphere solutions of the
(eps-)Ricci flow, represented only through ``r^2(t)``.  Time stepping is
classical RK4 with a fixed step bounded by the explicit diffusion limit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from . import geometry
from .geometry import ManifoldGrid

DEFAULT_DT_SAFETY = 0.25
RATIO_TOL = 1e-10


class PositivityError(RuntimeError):
    """A solution lost positivity (or a log-Sobolev solution reached 1)."""


class StabilityError(ValueError):
    pass


class RatioBoundError(RuntimeError):
    """The ratio of a constrained pair left its admissible interval."""


class HorizonError(ValueError):
    """The evolving metric degenerates before the requested time."""


# equations ---------------------------------------------------------------

@dataclass(frozen=True)
class LogHeat:
    a: float

    def __post_init__(self):
        if self.a == 0 or not math.isfinite(self.a):
            raise ValueError("log-heat coefficient a must be a nonzero real constant")


@dataclass(frozen=True)
class LogSobolevEps:
    epsilon: float

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")


@dataclass(frozen=True)
class LogSobolev:
    pass


Equation = Union[LogHeat, LogSobolevEps, LogSobolev]


# metrics -----------------------------------------------------------------

@dataclass(frozen=True)
class StaticTorus:
    def r_squared(self, t: float) -> float:
        return 1.0

    def horizon(self) -> float:
        return math.inf


@dataclass(frozen=True)
class StaticSphere:
    r0: float

    def r_squared(self, t: float) -> float:
        return self.r0 * self.r0

    def horizon(self) -> float:
        return math.inf


@dataclass(frozen=True)
class EpsRicciSphere:
    """Round sphere under ``dg/dt = -eps R g``; with ``R = 2/r^2`` this is ``d(r^2)/dt = -2 eps``."""

    r0: float
    epsilon: float

    def r_squared(self, t: float) -> float:
        r2 = self.r0 * self.r0 - 2.0 * self.epsilon * t
        if not r2 > 0:
            raise HorizonError(f"metric collapses before t={t} (horizon {self.horizon()})")
        return r2

    def horizon(self) -> float:
        if self.epsilon == 0:
            return math.inf
        return self.r0 * self.r0 / (2.0 * self.epsilon)


@dataclass(frozen=True)
class RicciSphere:
    """Round sphere under the Ricci flow (``eps = 1`` on a surface)."""

    r0: float

    def r_squared(self, t: float) -> float:
        r2 = self.r0 * self.r0 - 2.0 * t
        if not r2 > 0:
            raise HorizonError(f"metric collapses before t={t} (horizon {self.horizon()})")
        return r2

    def horizon(self) -> float:
        return self.r0 * self.r0 / 2.0


Metric = Union[StaticTorus, StaticSphere, EpsRicciSphere, RicciSphere]


def metric_schedule(metric: Metric, t: float) -> float:
    """Squared scale factor ``r^2(t)`` of the metric."""
    return metric.r_squared(t)


def metric_velocity(metric: Metric) -> float:
    """``d(r^2)/dt`` (constant for every supported schedule)."""
    if isinstance(metric, EpsRicciSphere):
        return -2.0 * metric.epsilon
    if isinstance(metric, RicciSphere):
        return -2.0
    return 0.0


@dataclass(frozen=True)
class FlowSpec:
    grid: ManifoldGrid
    equation: Equation
    metric: Metric
    t_end: float
    output_times: tuple[float, ...]
    dt_safety: float = DEFAULT_DT_SAFETY

    def __post_init__(self):
        object.__setattr__(self, "output_times", tuple(float(t) for t in self.output_times))
        if not 0 < self.dt_safety <= 1:
            raise ValueError(f"dt_safety must lie in (0, 1], got {self.dt_safety}")
        if not self.t_end > 0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        ts = self.output_times
        if not ts:
            raise ValueError("output_times must not be empty")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("output_times must be strictly increasing")
        if ts[0] < 0 or ts[-1] > self.t_end * (1 + 1e-12):
            raise ValueError("output_times must lie within [0, t_end]")
        if self.grid.is_torus != isinstance(self.metric, StaticTorus):
            raise ValueError(f"metric {type(self.metric).__name__} does not match a {self.grid.kind.value} grid")
        if self.grid.is_sphere and not math.isclose(self.metric.r0, self.grid.base_radius):
            raise ValueError("metric r0 must equal the sphere grid's base radius")
        if not self.t_end < self.metric.horizon():
            raise HorizonError(
                f"t_end={self.t_end} must be < metric horizon {self.metric.horizon()} (r^2 stays positive)"
            )
        eq = self.equation
        if isinstance(eq, LogSobolevEps):
            if not self.grid.is_sphere:
                raise ValueError("the eps-coupled log-Sobolev equation is posed on the sphere")
            if isinstance(self.metric, EpsRicciSphere):
                if self.metric.epsilon != eq.epsilon:
                    raise ValueError("equation epsilon must match the eps-Ricci flow epsilon")
            elif not (isinstance(self.metric, StaticSphere) and eq.epsilon == 0):
                raise ValueError("LogSobolevEps pairs with EpsRicciSphere (same eps) or StaticSphere when eps = 0")
        elif isinstance(self.metric, (EpsRicciSphere, RicciSphere)):
            if isinstance(eq, LogHeat):
                raise ValueError("the log-heat equation is only run on static metrics")
            if isinstance(self.metric, EpsRicciSphere) and self.metric.epsilon != 0:
                raise ValueError("the log-Sobolev equation couples to the Ricci flow, not eps-Ricci")

    @property
    def r_squared_min(self) -> float:
        return min(self.metric.r_squared(0.0), self.metric.r_squared(self.t_end))

    @property
    def max_dt(self) -> float:
        """Largest admissible step: ``dt_safety * h^2 * r^2_min / (2 dim)``."""
        g = self.grid
        return self.dt_safety * g.spacing**2 * self.r_squared_min / (2.0 * g.manifold_dim)


@dataclass
class Trajectory:
    """Time-ordered snapshots of one solution, or of a constrained pair ``(phi, psi)``.

    ``psi`` always holds the primary solution; ``phi`` is ``None`` for single runs.
    Arrays have shape ``(len(times), *grid.shape)``.
    """

    spec: FlowSpec
    times: np.ndarray
    psi: np.ndarray
    phi: np.ndarray | None = None
    dt: float = 0.0
    c0: float | None = None

    @property
    def grid(self) -> ManifoldGrid:
        return self.spec.grid

    @property
    def is_pair(self) -> bool:
        return self.phi is not None

    def r_squared(self, t: float) -> float:
        return self.spec.metric.r_squared(t)

    def index_of(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if not math.isclose(self.times[i], t, rel_tol=1e-12, abs_tol=1e-14):
            raise KeyError(f"no snapshot at t={t}")
        return i


# right-hand sides ---------------------------------------------------------

def _reaction(spec: FlowSpec, w: np.ndarray, t: float, r2: float) -> np.ndarray:
    eq = spec.equation
    w_log_w = w * np.log(w)
    if isinstance(eq, LogHeat):
        return eq.a * w_log_w
    if isinstance(eq, LogSobolevEps):
        if eq.epsilon == 0:
            return -w_log_w
        R = geometry.curvature(spec.grid, r2).scalar_R
        return -w_log_w + eq.epsilon * R * w
    return -w_log_w


def _rhs(spec: FlowSpec, w: np.ndarray, t: float) -> np.ndarray:
    r2 = spec.metric.r_squared(t)
    return geometry.laplacian(spec.grid, w, r2) + _reaction(spec, w, t, r2)


def rhs(spec: FlowSpec, field: np.ndarray, t: float) -> np.ndarray:
    """Pointwise right-hand side of the configured equation at time ``t``."""
    w = np.asarray(field, dtype=float)
    if not np.all(w > 0):
        idx = np.unravel_index(int(np.argmin(w)), w.shape)
        raise PositivityError(f"non-positive value {w[idx]!r} at node {idx}, t={t}")
    return _rhs(spec, w, t)


def _check_dt(spec: FlowSpec, dt: float) -> None:
    if not dt > 0:
        raise StabilityError(f"time step must be positive, got {dt}")
    if dt > spec.max_dt * (1 + 1e-9):
        raise StabilityError(f"dt={dt} exceeds the explicit stability limit {spec.max_dt}")


def _rk4(spec: FlowSpec, w: np.ndarray, t: float, dt: float) -> np.ndarray:
    k1 = _rhs(spec, w, t)
    k2 = _rhs(spec, w + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = _rhs(spec, w + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = _rhs(spec, w + dt * k3, t + dt)
    return w + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _assert_positive(w: np.ndarray, t: float) -> None:
    if not np.all(w > 0):
        bad = np.where(~(w > 0))
        idx = tuple(int(b[0]) for b in bad)
        raise PositivityError(f"positivity lost at node {idx}, t={t}: value {w[idx]!r}")


def step(spec: FlowSpec, field: np.ndarray, t: float, dt: float) -> np.ndarray:
    """One classical RK4 step from ``t`` to ``t + dt``."""
    _check_dt(spec, dt)
    w = np.asarray(field, dtype=float)
    _assert_positive(w, t)
    out = _rk4(spec, w, t, dt)
    _assert_positive(out, t + dt)
    return out


def _segments(spec: FlowSpec):
    """Yield ``(target_time, n_steps, dt)`` so that every output time is hit exactly."""
    dt_max = spec.max_dt
    t_prev = 0.0
    for target in spec.output_times:
        span = target - t_prev
        if span <= 0:
            yield target, 0, 0.0
            continue
        n = max(1, math.ceil(span / dt_max - 1e-9))
        yield target, n, span / n
        t_prev = target


def _integrate(spec: FlowSpec, state: np.ndarray, check) -> tuple[np.ndarray, list[np.ndarray], float]:
    times, snaps = [], []
    dt_used = 0.0
    t0 = 0.0
    for target, n, dt in _segments(spec):
        for k in range(n):
            tk = t0 + k * dt
            state = _rk4(spec, state, tk, dt)
            _assert_positive(state, tk + dt)
        dt_used = max(dt_used, dt)
        t0 = target
        check(state, target)
        times.append(target)
        snaps.append(state.copy())
    return np.array(times), snaps, dt_used


def run(spec: FlowSpec, init: np.ndarray) -> Trajectory:
    """Integrate from ``init`` at ``t = 0`` and record snapshots at ``spec.output_times``."""
    w0 = np.array(init, dtype=float)
    if w0.shape != spec.grid.shape:
        raise ValueError(f"initial field shape {w0.shape} != grid shape {spec.grid.shape}")
    _assert_positive(w0, 0.0)
    bounded = isinstance(spec.equation, LogSobolev)
    if bounded and not np.all(w0 < 1):
        raise ValueError("log-Sobolev runs need initial data strictly below 1")

    def check(w, t):
        _assert_positive(w, t)
        if bounded and not np.all(w < 1):
            idx = np.unravel_index(int(np.argmax(w)), w.shape)
            raise PositivityError(f"upper bound f < 1 lost at node {idx}, t={t}")

    times, snaps, dt = _integrate(spec, w0, check)
    return Trajectory(spec=spec, times=times, psi=np.stack(snaps), dt=dt)


def run_pair(spec: FlowSpec, init_phi: np.ndarray, init_psi: np.ndarray, c0: float | None = None) -> Trajectory:
    """Advance a constrained pair ``0 < phi < psi`` with identical steppers, monitoring ``h = phi/psi``."""
    phi0 = np.array(init_phi, dtype=float)
    psi0 = np.array(init_psi, dtype=float)
    for w in (phi0, psi0):
        if w.shape != spec.grid.shape:
            raise ValueError(f"initial field shape {w.shape} != grid shape {spec.grid.shape}")
    if not np.all(phi0 > 0) or not np.all(phi0 < psi0):
        raise ValueError("constrained pair requires 0 < phi < psi at every node")
    if c0 is not None:
        if not 0 < c0 < 1:
            raise ValueError(f"c0 must lie in (0, 1), got {c0}")
        if not np.all(c0 * psi0 < phi0):
            raise ValueError("constrained pair requires c0 * psi < phi at every node")
    lo = 0.0 if c0 is None else c0

    def check(state, t):
        _assert_positive(state, t)
        h = state[0] / state[1]
        if h.min() <= lo - RATIO_TOL or h.max() >= 1.0 + RATIO_TOL:
            bad = int(np.argmin(h)) if h.min() <= lo - RATIO_TOL else int(np.argmax(h))
            idx = np.unravel_index(bad, h.shape)
            raise RatioBoundError(
                f"ratio phi/psi={h[idx]!r} left ({lo}, 1) at node {idx}, t={t}"
            )

    times, snaps, dt = _integrate(spec, np.stack([phi0, psi0]), check)
    stacked = np.stack(snaps)
    return Trajectory(spec=spec, times=times, psi=stacked[:, 1], phi=stacked[:, 0], dt=dt, c0=c0)


# initial data ---------------------------------------------------------------

def trig_polynomial(grid: ManifoldGrid, rng: np.random.Generator, max_freq: int, amplitude: float) -> np.ndarray:
    """Random smooth trigonometric polynomial with ``max |s| <= amplitude``.

    Torus: Fourier modes ``k`` with ``0 < max|k_i| <= max_freq``.  Sphere:
    ``cos(l theta)`` for ``l = 1..max_freq`` (polynomials in ``cos theta``,
    hence smooth at the poles).
    """
    if max_freq < 1:
        raise ValueError("max_freq must be >= 1")
    if grid.is_sphere:
        coeffs = rng.standard_normal(max_freq)
        s = sum(c * np.cos((l + 1) * grid.theta) for l, c in enumerate(coeffs))
        total = np.sum(np.abs(coeffs))
    else:
        xs = grid.coords()
        modes = [
            k for k in np.ndindex(*(2 * max_freq + 1,) * grid.dim)
        ]
        modes = [tuple(m - max_freq for m in k) for k in modes]
        # keep one representative of each +/- pair
        modes = [k for k in modes if k > tuple(-v for v in k)]
        s = np.zeros(grid.shape)
        total = 0.0
        for k in modes:
            c, d = rng.standard_normal(2)
            phase = sum(2.0 * math.pi * ki * x / grid.side_length for ki, x in zip(k, xs))
            s = s + c * np.cos(phase) + d * np.sin(phase)
            total += abs(c) + abs(d)
    if total == 0:
        return np.zeros(grid.shape)
    return amplitude * s / total


def initial_field(grid: ManifoldGrid, seed: int, max_freq: int = 2, amplitude: float = 1.0,
                  offset: float = 0.0) -> np.ndarray:
    """``exp(s - offset)`` for a seeded trigonometric polynomial ``s`` (PCG64 generator)."""
    rng = np.random.default_rng(seed)
    return np.exp(trig_polynomial(grid, rng, max_freq, amplitude) - offset)


def constrained_pair(grid: ManifoldGrid, seed: int, seed2: int, c0: float | None = None,
                     max_freq: int = 2, amplitude: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Seeded pair with ``h0 = phi0/psi0`` in ``(c0 + 0.1(1-c0), c0 + 0.9(1-c0))``."""
    lo = 0.0 if c0 is None else c0
    psi0 = initial_field(grid, seed, max_freq, amplitude)
    rng = np.random.default_rng(seed2)
    sigma = 0.5 * (1.0 + trig_polynomial(grid, rng, max_freq, 1.0))
    phi0 = psi0 * (lo + (1.0 - lo) * (0.1 + 0.8 * sigma))
    return phi0, psi0


def output_grid(t_start: float, t_end: float, count: int) -> tuple[float, ...]:
    if count < 1:
        raise ValueError("output_count must be >= 1")
    if count == 1:
        return (float(t_end),)
    return tuple(float(t) for t in np.linspace(t_start, t_end, count))
