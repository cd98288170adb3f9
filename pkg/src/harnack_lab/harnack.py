"""Harnack quantities, their verification on trajectories, and evolution-identity residuals.

Every quantity is evaluated pointwise on a snapshot with the geometry
module's stencils, at the metric scale of the snapshot's time.  Margins are
arranged so that the inequality under test reads ``margin >= 0``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import geometry
from .dynamics import LogHeat, LogSobolev, LogSobolevEps, Trajectory
from .geometry import CurvatureInfo, ManifoldGrid

DEFAULT_T_MIN = 0.01
DEFAULT_TOL_C = 10.0
TOL_FLOOR = 1e-7


class AdmissibilityError(ValueError):
    """The (a, constraint, geometry) combination is outside the hypotheses of the inequality."""


# scalar corrections --------------------------------------------------------

def correction_term(a: float, n: int, t: float) -> float:
    """``a n / (2 (1 - exp(-a t)))``; the ``a = 0`` branch returns ``n / (2 t)``."""
    if not t > 0:
        raise ValueError(f"correction term needs t > 0, got {t}")
    x = a * t
    if abs(x) < 1e-8:
        # x / (1 - e^{-x}) = 1 + x/2 + O(x^2); avoids 0/0 for tiny or subnormal a
        return n / (2.0 * t) * (1.0 + 0.5 * x)
    return a * n / (2.0 * -math.expm1(-x))


def exp_correction(t: float) -> float:
    """``1 / (e^t - 1)``, the log-Sobolev correction (equal to ``correction_term(-1, 2, t)``)."""
    if not t > 0:
        raise ValueError(f"correction term needs t > 0, got {t}")
    return 1.0 / math.expm1(t)


def tolerance(grid: ManifoldGrid, dt: float, C: float = DEFAULT_TOL_C) -> float:
    """Discretisation-aware tolerance ``max(C (h^2 + dt), 1e-7)``."""
    h = grid.mesh_spacing
    return max(C * (h * h + dt), TOL_FLOOR)


# constraint parameters -------------------------------------------------------

def k_min(c0: float) -> float:
    """Smallest admissible ``K`` for the ratio floor ``c0``: ``-ln c0 / (1 - c0^2) - 1/2``."""
    return -math.log(c0) / ((1.0 - c0) * (1.0 + c0)) - 0.5


@dataclass(frozen=True)
class ConstraintParams:
    c0: float
    K: float

    def __post_init__(self):
        if not 0 < self.c0 < 1:
            raise ValueError(f"c0 must lie in (0, 1), got {self.c0}")
        if not self.K > 0:
            raise ValueError(f"K must be positive, got {self.K}")
        if self.K < k_min(self.c0):
            raise AdmissibilityError(
                f"K={self.K} is below the admissible bound {k_min(self.c0):.6g} for c0={self.c0}"
            )


def check_admissible(check: "Check", a: float, curv: CurvatureInfo, params: ConstraintParams | None) -> None:
    """Raise :class:`AdmissibilityError` unless the curvature hypotheses hold.

    Ricci lower bounds are read as tensor bounds ``Ric >= -a K g``, compared via
    the smallest Ricci eigenvalue.
    """
    if check is Check.MATRIX:
        if curv.sectional_min < 0:
            raise AdmissibilityError("matrix Harnack needs nonnegative sectional curvature")
        return
    if check is Check.TRACE:
        if curv.ricci_min_eigenvalue < 0:
            raise AdmissibilityError("trace Harnack needs nonnegative Ricci curvature")
        return
    bound = curv.ricci_min_eigenvalue if check is Check.CONSTRAINED_TRACE else curv.sectional_min
    what = "Ricci" if check is Check.CONSTRAINED_TRACE else "sectional"
    if a > 0:
        if bound < 0:
            raise AdmissibilityError(f"case a > 0 needs nonnegative {what} curvature")
        return
    if params is None:
        raise AdmissibilityError("case a < 0 needs constraint parameters (c0, K)")
    if bound < -a * params.K:
        raise AdmissibilityError(
            f"{what} curvature lower bound {bound} < -a K = {-a * params.K}"
        )


# pointwise quantities ----------------------------------------------------------

def _ratio(phi: np.ndarray, psi: np.ndarray) -> np.ndarray:
    h = np.asarray(phi, dtype=float) / np.asarray(psi, dtype=float)
    if np.any(h >= 1.0) or np.any(h <= 0.0):
        raise ValueError("constrained quantities need 0 < phi < psi at every node")
    return h


def trace_quantity(grid: ManifoldGrid, psi: np.ndarray, t: float, r_squared: float, a: float) -> np.ndarray:
    """``lap ln psi + a n / (2 (1 - e^{-a t}))`` with ``n`` the manifold dimension."""
    lap = geometry.laplacian(grid, np.log(psi), r_squared)
    return lap + correction_term(a, grid.manifold_dim, t)


def constrained_trace_margin(grid: ManifoldGrid, phi: np.ndarray, psi: np.ndarray, t: float,
                             r_squared: float, a: float) -> np.ndarray:
    h = _ratio(phi, psi)
    penalty = geometry.gradient_norm_sq(grid, h, r_squared) / ((1.0 - h) * (1.0 + h))
    return trace_quantity(grid, psi, t, r_squared, a) - penalty


def matrix_min_margin(grid: ManifoldGrid, psi: np.ndarray, t: float, r_squared: float, a: float) -> np.ndarray:
    """Smallest eigenvalue of ``Hess ln psi + a/(2(1 - e^{-a t})) g``."""
    hess = geometry.hessian_frame(grid, np.log(psi), r_squared)
    return geometry.min_eigenvalue(hess, correction_term(a, 1, t))


def constrained_matrix_min_margin(grid: ManifoldGrid, phi: np.ndarray, psi: np.ndarray, t: float,
                                  r_squared: float, a: float,
                                  params: ConstraintParams | None = None) -> np.ndarray:
    check_admissible(Check.CONSTRAINED_MATRIX, a, geometry.curvature(grid, r_squared), params)
    h = _ratio(phi, psi)
    hess = geometry.hessian_frame(grid, np.log(psi), r_squared)
    gh = geometry.gradient(grid, h, r_squared)
    hess = hess - np.einsum("i...,j...->ij...", gh, gh) / ((1.0 - h) * (1.0 + h))
    return geometry.min_eigenvalue(hess, correction_term(a, 1, t))


def interpolated_quantity(grid: ManifoldGrid, f: np.ndarray, t: float, r_squared: float,
                          epsilon: float) -> np.ndarray:
    """``lap ln f + eps R + 1/(e^t - 1)`` on the (possibly shrinking) round sphere."""
    if not grid.is_sphere:
        raise ValueError("the interpolated quantity is defined on the sphere")
    R = geometry.curvature(grid, r_squared).scalar_R
    return geometry.laplacian(grid, np.log(f), r_squared) + epsilon * R + exp_correction(t)


def polynomial_interpolated_quantity(grid: ManifoldGrid, f: np.ndarray, t: float, r_squared: float,
                                     epsilon: float) -> np.ndarray:
    """The older ``1/t`` variant of :func:`interpolated_quantity`."""
    R = geometry.curvature(grid, r_squared).scalar_R
    return geometry.laplacian(grid, np.log(f), r_squared) + epsilon * R + 1.0 / t


def _log_sobolev_u(f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if np.any(f >= 1.0) or np.any(f <= 0.0):
        raise ValueError("gradient estimate needs 0 < f < 1 at every node")
    return -np.log(f)


def gradient_margin(grid: ManifoldGrid, f: np.ndarray, t: float, r_squared: float) -> np.ndarray:
    """``u/(e^t - 1) - |grad u|^2`` with ``u = -ln f``."""
    u = _log_sobolev_u(f)
    return u * exp_correction(t) - geometry.gradient_norm_sq(grid, u, r_squared)


def polynomial_gradient_margin(grid: ManifoldGrid, f: np.ndarray, t: float, r_squared: float) -> np.ndarray:
    """``u/t - |grad u|^2``: the weaker polynomial-in-time estimate."""
    u = _log_sobolev_u(f)
    return u / t - geometry.gradient_norm_sq(grid, u, r_squared)


# verification -----------------------------------------------------------------

class Check(str, enum.Enum):
    TRACE = "trace"
    CONSTRAINED_TRACE = "constrained_trace"
    MATRIX = "matrix"
    CONSTRAINED_MATRIX = "constrained_matrix"
    INTERPOLATED = "interpolated"
    GRADIENT = "gradient"


@dataclass(frozen=True)
class HarnackKind:
    check: Check
    a: float | None = None
    epsilon: float | None = None
    params: ConstraintParams | None = None

    @classmethod
    def trace(cls, a: float) -> "HarnackKind":
        return cls(Check.TRACE, a=a)

    @classmethod
    def constrained_trace(cls, a: float, params: ConstraintParams | None = None) -> "HarnackKind":
        return cls(Check.CONSTRAINED_TRACE, a=a, params=params)

    @classmethod
    def matrix(cls, a: float) -> "HarnackKind":
        return cls(Check.MATRIX, a=a)

    @classmethod
    def constrained_matrix(cls, a: float, params: ConstraintParams | None = None) -> "HarnackKind":
        return cls(Check.CONSTRAINED_MATRIX, a=a, params=params)

    @classmethod
    def interpolated(cls, epsilon: float) -> "HarnackKind":
        return cls(Check.INTERPOLATED, epsilon=epsilon)

    @classmethod
    def gradient(cls) -> "HarnackKind":
        return cls(Check.GRADIENT)

    @property
    def constrained(self) -> bool:
        return self.check in (Check.CONSTRAINED_TRACE, Check.CONSTRAINED_MATRIX)


@dataclass(frozen=True)
class MarginRecord:
    t: float
    min_margin: float
    argmin_index: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.min_margin >= -self.tolerance


@dataclass
class VerificationReport:
    kind: HarnackKind
    records: list[MarginRecord]
    overall_pass: bool
    t_min_used: float
    dominance_ok: bool | None = None
    margins: np.ndarray | None = field(default=None, repr=False)

    @property
    def worst(self) -> MarginRecord:
        return min(self.records, key=lambda r: r.min_margin)


class KindMismatchError(ValueError):
    pass


def _check_kind(traj: Trajectory, kind: HarnackKind) -> None:
    eq = traj.spec.equation
    if kind.check in (Check.TRACE, Check.MATRIX, Check.CONSTRAINED_TRACE, Check.CONSTRAINED_MATRIX):
        if not isinstance(eq, LogHeat) or eq.a != kind.a:
            raise KindMismatchError(f"{kind.check.value}(a={kind.a}) needs a log-heat run with the same a")
        if kind.constrained and not traj.is_pair:
            raise KindMismatchError(f"{kind.check.value} needs a constrained pair trajectory")
        r2 = traj.r_squared(0.0)
        check_admissible(kind.check, kind.a, geometry.curvature(traj.grid, r2), kind.params)
        if kind.constrained and kind.a < 0:
            c0 = kind.params.c0
            if traj.c0 is None or traj.c0 < c0:
                raise AdmissibilityError("the pair run must monitor the ratio floor c0 of the constraint")
    elif kind.check is Check.INTERPOLATED:
        if not isinstance(eq, LogSobolevEps) or eq.epsilon != kind.epsilon:
            raise KindMismatchError(f"interpolated(eps={kind.epsilon}) needs a log-Sobolev-eps run with the same eps")
    elif kind.check is Check.GRADIENT:
        if not isinstance(eq, LogSobolev):
            raise KindMismatchError("gradient estimate needs a log-Sobolev run (0 < f < 1)")


def margin_field(traj: Trajectory, kind: HarnackKind, index: int) -> np.ndarray:
    """Margin of ``kind`` at snapshot ``index``."""
    t = float(traj.times[index])
    r2 = traj.r_squared(t)
    g = traj.grid
    psi = traj.psi[index]
    c = kind.check
    if c is Check.TRACE:
        return trace_quantity(g, psi, t, r2, kind.a)
    if c is Check.MATRIX:
        return matrix_min_margin(g, psi, t, r2, kind.a)
    if c is Check.CONSTRAINED_TRACE:
        return constrained_trace_margin(g, traj.phi[index], psi, t, r2, kind.a)
    if c is Check.CONSTRAINED_MATRIX:
        return constrained_matrix_min_margin(g, traj.phi[index], psi, t, r2, kind.a, kind.params)
    if c is Check.INTERPOLATED:
        return interpolated_quantity(g, psi, t, r2, kind.epsilon)
    return gradient_margin(g, psi, t, r2)


def _dominance(traj: Trajectory, kind: HarnackKind, index: int, margin: np.ndarray) -> bool:
    t = float(traj.times[index])
    r2 = traj.r_squared(t)
    if kind.check is Check.INTERPOLATED:
        weaker = polynomial_interpolated_quantity(traj.grid, traj.psi[index], t, r2, kind.epsilon)
        # the curvature ingredient eps (lap ln R + R) >= -1/t; R is constant in space here
        R = geometry.curvature(traj.grid, r2).scalar_R
        lap_log_R = geometry.laplacian(traj.grid, np.full(traj.grid.shape, math.log(R)), r2)
        chow_ok = bool(np.all(kind.epsilon * (lap_log_R + R) >= -1.0 / t))
        return bool(np.all(weaker >= margin)) and chow_ok
    weaker = polynomial_gradient_margin(traj.grid, traj.psi[index], t, r2)
    return bool(np.all(weaker >= margin))


def verify(traj: Trajectory, kind: HarnackKind, t_min: float = DEFAULT_T_MIN,
           tol: float | None = None, tol_C: float = DEFAULT_TOL_C,
           keep_margins: bool = False) -> VerificationReport:
    """Evaluate ``kind`` on every snapshot with ``t >= t_min`` and reduce to per-time minima."""
    if not t_min > 0:
        raise ValueError(f"t_min must be positive, got {t_min}")
    _check_kind(traj, kind)
    if tol is None:
        tol = tolerance(traj.grid, traj.dt, tol_C)
    records, fields = [], []
    dominance = None if kind.check not in (Check.INTERPOLATED, Check.GRADIENT) else True
    for i, t in enumerate(traj.times):
        if t < t_min:
            continue
        m = margin_field(traj, kind, i)
        j = int(np.argmin(m))
        records.append(MarginRecord(float(t), float(m.flat[j]), j, float(tol)))
        if dominance is not None:
            dominance = dominance and _dominance(traj, kind, i, m)
        if keep_margins:
            fields.append(m)
    if not records:
        raise ValueError(f"no snapshots at or after t_min={t_min}")
    passed = all(r.passed for r in records) and dominance is not False
    return VerificationReport(
        kind=kind, records=records, overall_pass=passed, t_min_used=t_min,
        dominance_ok=dominance, margins=np.stack(fields) if keep_margins else None,
    )


# integrated (classical) Harnack ---------------------------------------------------

@dataclass(frozen=True)
class PathCheckResult:
    lhs: float
    rhs: float
    gamma_value: float
    satisfied: bool
    tolerance: float = 0.0


def _time_bracket(traj: Trajectory, t: float) -> tuple[int, int, float]:
    ts = traj.times
    span_tol = 1e-12 * max(1.0, abs(ts[-1]))
    if t < ts[0] - span_tol or t > ts[-1] + span_tol:
        raise ValueError(f"t={t} is outside the recorded range [{ts[0]}, {ts[-1]}]")
    k = int(np.searchsorted(ts, t))
    if k < len(ts) and abs(ts[k] - t) <= span_tol:
        return k, k, 0.0
    if k == 0:
        return 0, 0, 0.0
    if k >= len(ts):
        return len(ts) - 1, len(ts) - 1, 0.0
    w = (t - ts[k - 1]) / (ts[k] - ts[k - 1])
    return k - 1, k, w


def _at_time(traj: Trajectory, arr: np.ndarray, t: float) -> np.ndarray:
    i, j, w = _time_bracket(traj, t)
    if i == j:
        return arr[i]
    return (1.0 - w) * arr[i] + w * arr[j]


def static_gamma(distance: float, t1: float, t2: float) -> float:
    """``d^2 / (4 (e^{-t1} - e^{-t2}))``: the exact path functional for a static metric."""
    return distance * distance / (4.0 * (math.exp(-t1) - math.exp(-t2)))


def sphere_gamma(angle: float, t1: float, t2: float, metric) -> float:
    """Infimum of ``1/4 int e^t |gamma'|^2_{g(t)} dt`` over paths subtending ``angle`` on a homothetic sphere.

    With ``g(t) = r^2(t) g_1`` Cauchy-Schwarz gives ``angle^2 / (4 int e^{-t}/r^2(t) dt)``.
    """
    denom, _ = integrate.quad(lambda s: math.exp(-s) / metric.r_squared(s), t1, t2,
                              epsabs=0.0, epsrel=1e-13, limit=200)
    return angle * angle / (4.0 * denom)


def integrated_check(traj: Trajectory, x1, t1: float, x2, t2: float,
                     tol: float | None = None, path_samples: int = 65) -> PathCheckResult:
    """Check the space-time integrated Harnack inequality between ``(x1, t1)`` and ``(x2, t2)``.

    ``x1``/``x2`` are node indices (flat or multi-index).
    """
    if not 0 < t1 < t2:
        raise ValueError("need 0 < t1 < t2")
    for t in (t1, t2):
        _time_bracket(traj, t)
    g = traj.grid
    idx1 = np.unravel_index(int(x1), g.shape) if np.ndim(x1) == 0 else tuple(x1)
    idx2 = np.unravel_index(int(x2), g.shape) if np.ndim(x2) == 0 else tuple(x2)
    p1, p2 = g.node_coords(idx1), g.node_coords(idx2)
    f1 = float(_at_time(traj, traj.psi, t1)[idx1])
    f2 = float(_at_time(traj, traj.psi, t2)[idx2])
    if tol is None:
        tol = tolerance(g, traj.dt)
    eq = traj.spec.equation

    if isinstance(eq, LogHeat):
        a = eq.a
        n = g.manifold_dim
        r2 = traj.r_squared(0.0)
        d = geometry.geodesic_distance(g, p1, p2, r2)
        lhs = math.exp(-a * t1) * math.log(f1) - math.exp(-a * t2) * math.log(f2)
        gamma = 0.25 * a * d * d / (math.exp(a * t2) - math.exp(a * t1))
        rhs = gamma + 0.5 * n * math.log(math.expm1(-a * t2) / math.expm1(-a * t1))
        if traj.is_pair:
            rhs -= _ratio_path_integral(traj, a, p1, t1, p2, t2, r2, path_samples)
    elif isinstance(eq, LogSobolevEps):
        lhs = math.exp(t1) * math.log(f1) - math.exp(t2) * math.log(f2)
        angle = abs(p1[0] - p2[0])
        gamma = sphere_gamma(angle, t1, t2, traj.spec.metric)
        rhs = gamma + math.log(math.expm1(t2) / math.expm1(t1))
    else:
        raise KindMismatchError("integrated checks apply to log-heat and log-Sobolev-eps runs")
    return PathCheckResult(lhs, rhs, gamma, lhs <= rhs + tol, tol)


def _ratio_path_integral(traj: Trajectory, a: float, p1, t1: float, p2, t2: float,
                         r2: float, samples: int) -> float:
    """Trapezoidal ``int e^{-a t} |grad h|^2/(1-h^2) dt`` along the optimal-speed geodesic."""
    g = traj.grid
    sel = (traj.times >= t1) & (traj.times <= t2)
    taus = np.union1d(np.linspace(t1, t2, samples), traj.times[sel])
    lo = max(int(np.searchsorted(traj.times, t1)) - 1, 0)
    hi = min(int(np.searchsorted(traj.times, t2)) + 1, len(traj.times))
    h = traj.phi[lo:hi] / traj.psi[lo:hi]
    q = geometry.gradient_norm_sq(g, h, r2) / ((1.0 - h) * (1.0 + h))
    start = np.asarray(p1, dtype=float)
    disp = geometry.displacement(g, p1, p2)
    e1, e2 = math.exp(a * t1), math.exp(a * t2)
    vals = []
    sub_times = traj.times[lo:hi]
    for tau in taus:
        s = (math.exp(a * tau) - e1) / (e2 - e1)
        k = int(np.clip(np.searchsorted(sub_times, tau), 1, len(sub_times) - 1)) if len(sub_times) > 1 else 0
        if len(sub_times) == 1:
            qt = q[0]
        else:
            w = (tau - sub_times[k - 1]) / (sub_times[k] - sub_times[k - 1])
            w = min(max(w, 0.0), 1.0)
            qt = (1.0 - w) * q[k - 1] + w * q[k]
        vals.append(math.exp(-a * tau) * geometry.interpolate(g, qt, start + s * disp))
    return float(integrate.trapezoid(vals, taus))


# evolution-identity residuals -------------------------------------------------------

class Lemma(str, enum.Enum):
    TRACE_LEMMA = "trace_lemma"
    MATRIX_LEMMA = "matrix_lemma"
    H_EPSILON = "h_epsilon"
    H_GRADIENT = "h_gradient"


def _outer(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("i...,j...->ij...", u, v)


def _matmul(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return np.einsum("il...,lj...->ij...", A, B)


def _dot(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.sum(u * v, axis=0)


def _frobenius_sq(A: np.ndarray) -> np.ndarray:
    return np.sum(A * A, axis=(0, 1))


def _pair_terms(grid: ManifoldGrid, phi: np.ndarray, psi: np.ndarray):
    L = np.log(psi)
    h = phi / psi
    one = (1.0 - h) * (1.0 + h)
    gL = geometry.gradient(grid, L)
    gh = geometry.gradient(grid, h)
    P = geometry.hessian_frame(grid, L) - _outer(gh, gh) / one
    return L, h, one, gL, gh, P


def _p_matrix(grid, phi, psi, t, r2, a):
    return _pair_terms(grid, phi, psi)[-1]


def _p_matrix_rhs(grid, phi, psi, t, r2, a):
    L, h, one, gL, gh, P = _pair_terms(grid, phi, psi)
    d = grid.manifold_dim
    M = geometry.hessian_frame(grid, h) + 2.0 * h * _outer(gh, gh) / one
    react = 1.0 + 2.0 * np.log(h) / one
    out = np.empty_like(P)
    for i in range(d):
        for j in range(d):
            Pij = P[i, j]
            out[i, j] = (
                geometry.laplacian(grid, Pij)
                + 2.0 * _dot(gL, geometry.gradient(grid, Pij))
                + a * Pij
                - a * gh[i] * gh[j] / one * react
            )
    out += 2.0 * _matmul(P, P) + 2.0 / one * _matmul(M, np.swapaxes(M, 0, 1))
    return out


def _p_trace(grid, phi, psi, t, r2, a):
    P = _p_matrix(grid, phi, psi, t, r2, a)
    return np.trace(P, axis1=0, axis2=1)


def _p_trace_rhs(grid, phi, psi, t, r2, a):
    L, h, one, gL, gh, Pm = _pair_terms(grid, phi, psi)
    P = np.trace(Pm, axis1=0, axis2=1)
    Hh = geometry.hessian_frame(grid, h)
    mixed = 2.0 * h * _outer(gh, gh) + one * Hh
    return (
        geometry.laplacian(grid, P)
        + 2.0 * _dot(gL, geometry.gradient(grid, P))
        + 2.0 * _frobenius_sq(Pm)
        + 2.0 / one**3 * _frobenius_sq(mixed)
        + a * P
        - a * _dot(gh, gh) / one * (1.0 + 2.0 * np.log(h) / one)
    )


def _h_eps(grid, f, t, r2, eps):
    u = -np.log(f)
    R = geometry.curvature(grid, r2).scalar_R
    return geometry.laplacian(grid, u, r2) - eps * R


def _h_eps_rhs(grid, f, t, r2, eps):
    # round sphere: grad R = 0 and d(ln R)/dt = eps R exactly
    u = -np.log(f)
    R = geometry.curvature(grid, r2).scalar_R
    lap_u = geometry.laplacian(grid, u, r2)
    H = lap_u - eps * R
    gu = geometry.gradient(grid, u, r2)
    hess = geometry.hessian_frame(grid, u, r2)
    shifted = hess - 0.5 * eps * R * np.eye(grid.manifold_dim).reshape(hess.shape[:2] + (1,) * u.ndim)
    return (
        geometry.laplacian(grid, H, r2)
        - 2.0 * _frobenius_sq(shifted)
        - 2.0 * _dot(geometry.gradient(grid, H, r2), gu)
        - eps * R * H
        - R * _dot(gu, gu)
        - eps * R * (eps * R)
        - lap_u
    )


def _h_grad(grid, f, t, r2, _):
    u = -np.log(f)
    return geometry.gradient_norm_sq(grid, u, r2) - u * exp_correction(t)


def _h_grad_rhs(grid, f, t, r2, _):
    u = -np.log(f)
    H = _h_grad(grid, f, t, r2, _)
    gu = geometry.gradient(grid, u, r2)
    hess = geometry.hessian_frame(grid, u, r2)
    return (
        geometry.laplacian(grid, H, r2)
        - 2.0 * _dot(gu, geometry.gradient(grid, H, r2))
        - 2.0 * _frobenius_sq(hess)
        - (2.0 + exp_correction(t)) * H
    )


_LEMMAS = {
    Lemma.TRACE_LEMMA: (_p_trace, _p_trace_rhs),
    Lemma.MATRIX_LEMMA: (_p_matrix, _p_matrix_rhs),
    Lemma.H_EPSILON: (_h_eps, _h_eps_rhs),
    Lemma.H_GRADIENT: (_h_grad, _h_grad_rhs),
}


def _time_derivative(values: list[np.ndarray], times: np.ndarray, k: int) -> np.ndarray:
    """Fourth-order differences on five uniform snapshots (centred, or shifted by one at the ends), else 3-point."""
    n = len(times)
    if n >= 5:
        lo = min(max(k - 2, 0), n - 5)
        dts = np.diff(times[lo:lo + 5])
        if np.allclose(dts, dts[0], rtol=1e-9, atol=0):
            v = values[lo:lo + 5]
            d = dts[0]
            j = k - lo
            if j == 2:
                return (v[0] - 8.0 * v[1] + 8.0 * v[3] - v[4]) / (12.0 * d)
            if j == 1:
                return (-3.0 * v[0] - 10.0 * v[1] + 18.0 * v[2] - 6.0 * v[3] + v[4]) / (12.0 * d)
            if j == 3:
                return (v[0] - 6.0 * v[1] + 18.0 * v[2] - 10.0 * v[3] - 3.0 * v[4]) / (-12.0 * d)
    dl, dr = times[k] - times[k - 1], times[k + 1] - times[k]
    if not math.isclose(dl, dr, rel_tol=1e-9):
        raise ValueError("centred differencing needs uniformly spaced snapshots")
    return (values[k + 1] - values[k - 1]) / (dl + dr)


def evolution_residual(kind: Lemma | str, traj: Trajectory) -> float:
    """Max over interior snapshots and nodes of ``|d/dt Q - RHS(Q)|`` for an evolution identity.

    ``trace_lemma``/``matrix_lemma`` need a constrained pair on the torus (all
    curvature terms vanish); ``h_epsilon`` needs a log-Sobolev-eps run on the
    sphere; ``h_gradient`` needs a log-Sobolev run.
    """
    kind = Lemma(kind)
    if len(traj.times) < 3:
        raise ValueError("need at least three snapshots for centred time differencing")
    g = traj.grid
    eq = traj.spec.equation
    if kind in (Lemma.TRACE_LEMMA, Lemma.MATRIX_LEMMA):
        if not (traj.is_pair and g.is_torus and isinstance(eq, LogHeat)):
            raise KindMismatchError(f"{kind.value} needs a log-heat constrained pair on the torus")
        param = eq.a
        args = lambda i: (traj.phi[i], traj.psi[i])
    elif kind is Lemma.H_EPSILON:
        if not (g.is_sphere and isinstance(eq, LogSobolevEps)):
            raise KindMismatchError("h_epsilon needs a log-Sobolev-eps run on the sphere")
        param = eq.epsilon
        args = lambda i: (traj.psi[i],)
    else:
        if not isinstance(eq, LogSobolev):
            raise KindMismatchError("h_gradient needs a log-Sobolev run")
        param = None
        args = lambda i: (traj.psi[i],)
    quantity, rhs = _LEMMAS[kind]
    times = traj.times
    values = []
    for i, t in enumerate(times):
        values.append(quantity(g, *args(i), float(t), traj.r_squared(float(t)), param))
    worst = 0.0
    for k in range(1, len(times) - 1):
        t = float(times[k])
        dq = _time_derivative(values, times, k)
        res = np.abs(dq - rhs(g, *args(k), t, traj.r_squared(t), param))
        worst = max(worst, float(res.max()))
    return worst


# scalar in-proof claims ------------------------------------------------------------

@dataclass(frozen=True)
class ClaimResult:
    name: str
    samples: int
    violations: int
    worst_value: float
    worst_point: tuple[float, ...]

    @property
    def holds(self) -> bool:
        return self.violations == 0


@dataclass(frozen=True)
class ScalarClaimsReport:
    claims: tuple[ClaimResult, ...]

    @property
    def ok(self) -> bool:
        return all(c.holds for c in self.claims)

    @property
    def violations(self) -> int:
        return sum(c.violations for c in self.claims)


def _ratio_grid(m: int) -> np.ndarray:
    half = m // 2
    low = np.geomspace(1e-6, 0.5, half, endpoint=False)
    high = 1.0 - np.geomspace(1e-6, 0.5, m - half)
    return np.unique(np.concatenate([low, high]))


def ratio_log_monotonicity(h: np.ndarray) -> np.ndarray:
    """``1/h - h + 2 h ln h`` (the numerator of the derivative of ``ln h/(1-h^2)``)."""
    return (1.0 - h) * (1.0 + h) / h + 2.0 * h * np.log1p(h - 1.0)


def ratio_log_bound(h: np.ndarray) -> np.ndarray:
    """``1 + 2 ln h / (1 - h^2)``."""
    return 1.0 + 2.0 * np.log1p(h - 1.0) / ((1.0 - h) * (1.0 + h))


def _summarise(name: str, values: np.ndarray, points: np.ndarray, sign: int) -> ClaimResult:
    margin = sign * values
    bad = ~(margin > 0)
    j = int(np.argmin(margin))
    pt = tuple(float(p) for p in np.atleast_1d(points[j]))
    return ClaimResult(name, int(values.size), int(bad.sum()), float(values.flat[j]), pt)


def scalar_claims_check(samples: int = 10_000) -> ScalarClaimsReport:
    """Evaluate the scalar inequalities used inside the maximum-principle arguments."""
    if samples < 100:
        raise ValueError("need at least 100 samples")
    h = _ratio_grid(samples)
    t = np.geomspace(1e-6, 50.0, samples)
    claims = [
        _summarise("ratio_log_increasing", ratio_log_monotonicity(h), h, +1),
        _summarise("ratio_log_bound_negative", ratio_log_bound(h), h, -1),
    ]
    grow = t * np.exp(t) - np.expm1(t)
    consequence = 1.0 / np.expm1(t) + 1.0 - 1.0 / t
    claims.append(_summarise("t_exp_t_increasing", np.minimum(grow, consequence), t, +1))
    claims.append(_summarise("exp_correction_below_polynomial", 1.0 / t - 1.0 / np.expm1(t), t, +1))

    m = max(10, int(math.isqrt(samples)))
    c0 = _ratio_grid(m)
    frac = np.geomspace(1e-6, 1.0 - 1e-6, m)
    C0, F = np.meshgrid(c0, frac, indexing="ij")
    H = C0 + (1.0 - C0) * F
    K = -np.log(C0) / ((1.0 - C0) * (1.0 + C0)) - 0.5
    # tightest admissible K plus a looser one
    vals = np.concatenate([
        (2.0 * K + 1.0 + 2.0 * np.log(H) / ((1.0 - H) * (1.0 + H))).ravel(),
        (2.0 * (K + 0.5) + 1.0 + 2.0 * np.log(H) / ((1.0 - H) * (1.0 + H))).ravel(),
    ])
    pts = np.concatenate([np.stack([C0.ravel(), H.ravel(), K.ravel()], axis=1),
                          np.stack([C0.ravel(), H.ravel(), K.ravel() + 0.5], axis=1)])
    valid = pts[:, 1] < 1.0
    claims.append(_summarise("admissible_K_positive", vals[valid], pts[valid], +1))
    return ScalarClaimsReport(tuple(claims))
