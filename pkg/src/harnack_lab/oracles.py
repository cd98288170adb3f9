"""Closed-form reference solutions and residual/convergence oracles."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize

from .dynamics import (
    EpsRicciSphere,
    LogHeat,
    LogSobolev,
    LogSobolevEps,
    RicciSphere,
    StaticSphere,
    StaticTorus,
)
from .harnack import correction_term

EXACT_THRESHOLD = 1e-12


@dataclass(frozen=True)
class LogGaussianParams:
    a: float
    n: int
    C: float = 0.0

    def __post_init__(self):
        if self.a == 0:
            raise ValueError("a is a nonzero real constant")
        if self.n < 1:
            raise ValueError(f"dimension n must be >= 1, got {self.n}")


@dataclass(frozen=True)
class OracleValues:
    """``ln omega`` and its analytic spatial derivatives at one point."""

    log_omega: float
    grad: np.ndarray
    laplacian: float
    hessian: np.ndarray


@dataclass
class ResidualReport:
    max_abs_residual: float
    sample_count: int
    refinement_orders: list[float] = field(default_factory=list)
    errors: list[float] = field(default_factory=list)
    exact: bool = False
    diagnostics: list[str] = field(default_factory=list)


def log_gaussian(x, t: float, p: LogGaussianParams, paper_variant: bool = False) -> OracleValues:
    """The sharp log-Gaussian family on ``R^n``.

    ``ln omega = -a|x|^2 / (4 s) + e^{a t} (C - (n/2) ln|s|)`` with ``s = 1 - e^{-a t}``.
    ``paper_variant`` swaps the middle factor ``e^{a t}`` for ``e^{-a t}``, the
    printed form, which does not solve the equation.
    """
    if not t > 0:
        raise ValueError(f"log_gaussian needs t > 0, got {t}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (p.n,):
        raise ValueError(f"point must have {p.n} coordinates")
    a, n = p.a, p.n
    s = -math.expm1(-a * t)
    log_s = math.log(abs(s))
    if paper_variant:
        beta = -0.5 * n * math.exp(-a * t) * log_s + p.C * math.exp(a * t)
    else:
        beta = math.exp(a * t) * (p.C - 0.5 * n * log_s)
    k = a / (2.0 * s)
    value = -0.5 * k * float(x @ x) + beta
    return OracleValues(
        log_omega=value,
        grad=-k * x,
        laplacian=-correction_term(a, n, t),
        hessian=-correction_term(a, 1, t) * np.eye(n),
    )


def log_gaussian_handle(p: LogGaussianParams, paper_variant: bool = False) -> Callable[[np.ndarray, float], OracleValues]:
    return lambda x, t: log_gaussian(x, t, p, paper_variant)


def homogeneous_solution(equation, log_omega0: float, t: float, metric=None) -> float:
    """``ln omega(t)`` for spatially constant data.

    ``metric`` is needed for the eps-coupled equation, where the scalar
    curvature enters as a source term.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if isinstance(equation, LogHeat):
        return log_omega0 * math.exp(equation.a * t)
    if isinstance(equation, LogSobolev):
        return log_omega0 * math.exp(-t)
    if isinstance(equation, LogSobolevEps):
        if metric is None:
            raise ValueError("the eps-coupled equation needs its metric schedule")
        metric.r_squared(t)  # horizon check
        eps = equation.epsilon
        if isinstance(metric, StaticSphere) or (isinstance(metric, EpsRicciSphere) and metric.epsilon == 0):
            R = 2.0 / metric.r_squared(0.0)
            return math.exp(-t) * log_omega0 - eps * R * math.expm1(-t)
        if isinstance(metric, (EpsRicciSphere, RicciSphere)):
            source, _ = integrate.quad(
                lambda s: math.exp(s - t) * eps * 2.0 / metric.r_squared(s), 0.0, t,
                epsabs=1e-14, epsrel=1e-13, limit=200,
            )
            return math.exp(-t) * log_omega0 + source
        if isinstance(metric, StaticTorus):
            raise ValueError("the eps-coupled equation is posed on the sphere")
    raise TypeError(f"unknown equation {equation!r}")


def homogeneous_handle(equation: LogHeat, log_omega0: float, n: int) -> Callable[[np.ndarray, float], OracleValues]:
    """Spatially constant log-heat solution as an analytic handle for :func:`pde_residual`."""
    def handle(x, t):
        return OracleValues(homogeneous_solution(equation, log_omega0, t), np.zeros(n), 0.0, np.zeros((n, n)))
    return handle


def pde_residual(solution: Callable[[np.ndarray, float], OracleValues], points: Sequence, times: Sequence[float],
                 a: float, delta: float = 1e-4) -> ResidualReport:
    """Max ``|d_t ln w - (lap ln w + |grad ln w|^2 + a ln w)|`` over the sample set.

    Spatial terms are analytic; the time derivative uses 5-point centred differences.
    """
    worst = 0.0
    count = 0
    for t in times:
        if t - 2 * delta <= 0:
            raise ValueError("samples must keep t - 2 delta > 0")
        for x in points:
            v = solution(x, t)
            f = [solution(x, t + k * delta).log_omega for k in (-2, -1, 1, 2)]
            dt = (f[0] - 8.0 * f[1] + 8.0 * f[2] - f[3]) / (12.0 * delta)
            res = dt - (v.laplacian + float(v.grad @ v.grad) + a * v.log_omega)
            worst = max(worst, abs(res))
            count += 1
    return ResidualReport(max_abs_residual=worst, sample_count=count)


def convergence_order(experiment: Callable[[float], float], resolutions: Sequence[float]) -> ResidualReport:
    """Observed orders from successive error ratios of ``experiment(resolution)``.

    Resolutions may be point counts (errors fall as they grow) or step sizes
    (errors fall as they shrink); the order is ``log(e_i/e_{i+1}) / |log(r_{i+1}/r_i)|``.
    """
    if len(resolutions) < 3:
        raise ValueError("need at least three resolutions")
    return orders_from_errors([float(experiment(r)) for r in resolutions], resolutions)


def orders_from_errors(errors: Sequence[float], resolutions: Sequence[float]) -> ResidualReport:
    """Richardson orders for precomputed errors (see :func:`convergence_order`)."""
    if len(errors) != len(resolutions) or len(errors) < 2:
        raise ValueError("need one error per resolution and at least two of them")
    errors = [float(e) for e in errors]
    report = ResidualReport(max_abs_residual=max(errors), sample_count=len(errors), errors=errors)
    if all(e <= EXACT_THRESHOLD for e in errors):
        report.exact = True
        return report
    for i in range(len(errors) - 1):
        e0, e1 = errors[i], errors[i + 1]
        if not (e1 < e0) or e1 <= 0:
            report.refinement_orders.append(float("nan"))
            report.diagnostics.append(
                f"non-monotone errors between resolutions {resolutions[i]} and {resolutions[i + 1]}: {e0!r} -> {e1!r}"
            )
            continue
        report.refinement_orders.append(math.log(e0 / e1) / abs(math.log(resolutions[i + 1] / resolutions[i])))
    return report


def eigenmode_reference(grid, a: float, t: float, amplitude: float, wavenumber: int = 2) -> np.ndarray:
    """Linearised ``ln omega`` for ``ln omega0 = amplitude * cos(k x_0)`` on the torus.

    Around ``omega = 1`` the log-heat equation linearises to ``v_t = lap v + a v``,
    so each Fourier mode evolves by ``e^{(a - k^2) t}``.  The neglected quadratic
    term is ``O(amplitude^2)``.
    """
    if not grid.is_torus:
        raise ValueError("eigenmode reference is defined on the torus")
    k = 2.0 * math.pi * wavenumber / grid.side_length
    x0 = grid.coords()[0]
    return amplitude * math.exp((a - k * k) * t) * np.cos(k * x0)


def eigenmode_initial(grid, amplitude: float, wavenumber: int = 2) -> np.ndarray:
    return np.exp(eigenmode_reference(grid, 1.0, 0.0, amplitude, wavenumber))


def gamma_upper_bound(angle: float, t1: float, t2: float, metric) -> tuple[float, float]:
    """Golden-section search over speed profiles ``theta' ~ e^{-p t}``.

    Returns ``(gamma_hat, p_best)``, an upper bound on the path infimum of
    ``1/4 int e^t |gamma'|^2 dt`` for meridian paths subtending ``angle``.
    """
    def cost(p):
        w = lambda s: math.exp(-p * (s - t1))
        num, _ = integrate.quad(lambda s: math.exp(s) * metric.r_squared(s) * w(s) ** 2, t1, t2,
                                epsabs=0.0, epsrel=1e-12)
        den, _ = integrate.quad(w, t1, t2, epsabs=0.0, epsrel=1e-12)
        return 0.25 * angle * angle * num / (den * den)

    res = optimize.minimize_scalar(cost, bracket=(0.0, 4.0), method="golden", tol=1e-10)
    return float(res.fun), float(res.x)
