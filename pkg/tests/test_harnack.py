import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harnack_lab import dynamics as D
from harnack_lab import geometry as G
from harnack_lab import harnack as H
from harnack_lab import oracles

TWO_PI = 2.0 * math.pi


def test_correction_term_examples():
    assert H.correction_term(1.0, 2, math.log(2)) == pytest.approx(2.0, rel=1e-15)
    assert H.correction_term(-1.0, 2, math.log(2)) == pytest.approx(1.0, rel=1e-15)
    assert H.correction_term(0.0, 2, 1.0) == 1.0
    with pytest.raises(ValueError):
        H.correction_term(1.0, 2, 0.0)


avals = st.floats(-20, 20, allow_nan=False).filter(lambda a: a != 0)
tvals = st.floats(1e-4, 30, allow_nan=False)


@settings(max_examples=300, deadline=None)
@given(avals, st.integers(1, 5), tvals)
def test_correction_term_positive_and_decreasing(a, n, t):
    c = H.correction_term(a, n, t)
    assert c > 0
    later = H.correction_term(a, n, t * 1.01)
    # for large a t the value saturates at a n / 2 in floating point
    assert later < c if a * t < 20 else later <= c


def test_correction_term_limits():
    assert H.correction_term(2.0, 3, 60.0) == pytest.approx(3.0, rel=1e-12)
    assert H.correction_term(-2.0, 3, 60.0) < 1e-40
    for t in np.linspace(0.05, 5, 40):
        li_yau = H.correction_term(0.0, 2, t)
        for a in (1e-8, -1e-8):
            assert abs(H.correction_term(a, 2, t) - li_yau) <= 1e-6 * li_yau


def test_correction_bridges_log_sobolev_constant():
    for t in np.geomspace(1e-6, 50, 100):
        assert H.correction_term(-1.0, 2, t) == pytest.approx(1.0 / math.expm1(t), rel=4e-16)
        assert H.exp_correction(t) == 1.0 / math.expm1(t)


def test_tolerance_model():
    g = G.build_torus(2, 64, 1.0)
    assert H.tolerance(g, 1e-5) == pytest.approx(10 * ((1 / 64) ** 2 + 1e-5))
    assert H.tolerance(G.build_torus(1, 2**14, 1.0), 0.0) == 1e-7


def test_constraint_params():
    assert H.k_min(0.5) == pytest.approx(0.42420, abs=1e-5)
    p = H.ConstraintParams(0.5, 0.5)
    assert p.K >= H.k_min(p.c0)
    with pytest.raises(H.AdmissibilityError):
        H.ConstraintParams(0.5, 0.4)
    with pytest.raises(ValueError):
        H.ConstraintParams(1.5, 0.5)


def test_admissibility():
    unit = G.curvature(G.build_sphere(16, 1.0), 1.0)
    flat = G.curvature(G.build_torus(2, 8, 1.0))
    p = H.ConstraintParams(0.5, 0.5)
    H.check_admissible(H.Check.CONSTRAINED_TRACE, -1.0, unit, p)
    H.check_admissible(H.Check.CONSTRAINED_MATRIX, -1.0, unit, p)
    H.check_admissible(H.Check.CONSTRAINED_TRACE, 1.0, flat, None)
    with pytest.raises(H.AdmissibilityError):
        H.check_admissible(H.Check.CONSTRAINED_TRACE, -1.0, flat, p)
    with pytest.raises(H.AdmissibilityError):
        H.check_admissible(H.Check.CONSTRAINED_TRACE, -1.0, unit, None)
    # r^2 = 4 -> Ric = 0.25 < |a| K = 0.5
    with pytest.raises(H.AdmissibilityError):
        H.check_admissible(H.Check.CONSTRAINED_MATRIX, -1.0, G.curvature(G.build_sphere(16, 2.0), 4.0), p)


def test_constant_fields():
    g = G.build_torus(2, 16, TWO_PI)
    t = 0.7
    psi = np.full(g.shape, 2.0)
    np.testing.assert_allclose(H.trace_quantity(g, psi, t, 1.0, 1.0), H.correction_term(1.0, 2, t))
    np.testing.assert_allclose(H.matrix_min_margin(g, psi, t, 1.0, -1.0), H.correction_term(-1.0, 1, t))
    s = G.build_sphere(32, 1.0)
    f = np.full(s.shape, 0.3)
    np.testing.assert_allclose(H.interpolated_quantity(s, f, t, 0.5, 1.0), 4.0 + 1 / math.expm1(t), atol=1e-12)
    c = 1.3
    u = c * math.exp(-t)
    np.testing.assert_allclose(H.gradient_margin(g, np.full(g.shape, math.exp(-u)), t, 1.0),
                               u / math.expm1(t), rtol=1e-12)
    with pytest.raises(ValueError):
        H.interpolated_quantity(g, psi, t, 1.0, 1.0)
    with pytest.raises(ValueError):
        H.gradient_margin(g, psi, t, 1.0)


def test_constant_ratio_pair_reduces_to_unconstrained(torus_run):
    traj = torus_run(1.0, 1)
    g, psi, t = traj.grid, traj.psi[50], float(traj.times[50])
    phi = 0.4 * psi
    np.testing.assert_allclose(H.constrained_trace_margin(g, phi, psi, t, 1.0, 1.0),
                               H.trace_quantity(g, psi, t, 1.0, 1.0), atol=1e-12)
    np.testing.assert_allclose(H.constrained_matrix_min_margin(g, phi, psi, t, 1.0, 1.0),
                               H.matrix_min_margin(g, psi, t, 1.0, 1.0), atol=1e-12)
    with pytest.raises(ValueError):
        H.constrained_trace_margin(g, psi, psi, t, 1.0, 1.0)


def test_constant_pair_margin_is_correction():
    g = G.build_torus(2, 16, TWO_PI)
    for a in (1.0, -1.0):
        t = 0.6
        phi = np.full(g.shape, math.exp(-math.exp(a * t)))
        np.testing.assert_allclose(H.constrained_trace_margin(g, phi, np.ones(g.shape), t, 1.0, a),
                                   H.correction_term(a, 2, t))


def test_constrained_never_exceeds_unconstrained(torus_pair):
    traj = torus_pair(1.0, 1)
    for i in range(0, len(traj.times), 10):
        t = float(traj.times[i])
        args = (traj.grid, traj.phi[i], traj.psi[i], t, 1.0, 1.0)
        assert np.all(H.constrained_trace_margin(*args) <= H.trace_quantity(traj.grid, traj.psi[i], t, 1.0, 1.0))
        assert np.all(H.constrained_matrix_min_margin(*args)
                      <= H.matrix_min_margin(traj.grid, traj.psi[i], t, 1.0, 1.0) + 1e-12)


def test_trace_matrix_consistency(torus_run, sphere_pair):
    traj = torus_run(-1.0, 2)
    g = traj.grid
    for i in (0, 40, 99):
        t = float(traj.times[i])
        hess = G.hessian_frame(g, np.log(traj.psi[i]))
        n = g.manifold_dim
        summed = hess[0, 0] + hess[1, 1] + n * H.correction_term(-1.0, 1, t)
        np.testing.assert_allclose(summed, H.trace_quantity(g, traj.psi[i], t, 1.0, -1.0), atol=1e-10)
    sp = sphere_pair(1)
    s = sp.grid
    hess = G.hessian_frame(s, np.log(sp.psi[10]))
    t = float(sp.times[10])
    summed = hess[0, 0] + hess[1, 1] + 2 * H.correction_term(-1.0, 1, t)
    assert np.max(np.abs(summed - H.trace_quantity(s, sp.psi[10], t, 1.0, -1.0))) <= 10 * s.spacing**2 * 10


def _single_snapshot(grid, field, t, a=1.0):
    spec = D.FlowSpec(grid, D.LogHeat(a), D.StaticTorus(), t, (t,))
    return D.Trajectory(spec, np.array([t]), field[None].copy(), dt=1e-4)


def test_verify_single_constant_snapshot():
    g = G.build_torus(2, 16, TWO_PI)
    traj = _single_snapshot(g, np.full(g.shape, 3.0), math.log(2))
    rep = H.verify(traj, H.HarnackKind.trace(1.0), t_min=0.01, tol=1e-3)
    assert rep.overall_pass
    assert rep.records[0].min_margin == pytest.approx(2.0)


def test_verify_rejects_non_solution():
    g = G.build_torus(2, 64, TWO_PI)
    # ln psi = -10 |x - c|^2 / 4 near the centre: Laplacian of ln psi = -10 there
    x, y = g.coords()
    c = math.pi
    L = -2.5 * ((x - c) ** 2 + (y - c) ** 2)
    traj = _single_snapshot(g, np.exp(L), 10.0)
    rep = H.verify(traj, H.HarnackKind.trace(1.0), t_min=0.01, tol=1e-3)
    assert not rep.overall_pass
    assert rep.worst.min_margin == pytest.approx(-10 + H.correction_term(1.0, 2, 10.0), abs=1e-9)


def test_verify_kind_mismatch(torus_run, eps_run):
    with pytest.raises(H.KindMismatchError):
        H.verify(torus_run(1.0, 1), H.HarnackKind.trace(-1.0))
    with pytest.raises(H.KindMismatchError):
        H.verify(torus_run(1.0, 1), H.HarnackKind.gradient())
    with pytest.raises(H.KindMismatchError):
        H.verify(torus_run(1.0, 1), H.HarnackKind.constrained_trace(1.0))
    with pytest.raises(H.KindMismatchError):
        H.verify(eps_run(1.0), H.HarnackKind.interpolated(0.5))
    with pytest.raises(ValueError):
        H.verify(torus_run(1.0, 1), H.HarnackKind.trace(1.0), t_min=0.0)


def test_verify_respects_t_min(torus_run):
    rep = H.verify(torus_run(1.0, 1), H.HarnackKind.trace(1.0), t_min=0.5)
    assert rep.t_min_used == 0.5
    assert all(r.t >= 0.5 for r in rep.records)
    assert rep.overall_pass == all(r.min_margin >= -r.tolerance for r in rep.records)


def test_simulated_runs_pass_at_fixed_tolerance(torus_run, torus_pair, sphere_pair, eps_run, sobolev_runs):
    tol = 1e-3
    for a in (1.0, -1.0):
        assert H.verify(torus_run(a, 1), H.HarnackKind.trace(a), tol=tol).overall_pass
        assert H.verify(torus_run(a, 1), H.HarnackKind.matrix(a), tol=tol).overall_pass
    assert H.verify(torus_pair(1.0, 1), H.HarnackKind.constrained_trace(1.0), tol=tol).overall_pass
    p = H.ConstraintParams(0.5, 0.5)
    assert H.verify(sphere_pair(1), H.HarnackKind.constrained_matrix(-1.0, p), tol=tol).overall_pass
    assert H.verify(eps_run(1.0), H.HarnackKind.interpolated(1.0), tol=tol).overall_pass
    assert H.verify(sobolev_runs["torus"], H.HarnackKind.gradient(), tol=tol).overall_pass


def test_dominance_flags(eps_run, sobolev_runs):
    rep = H.verify(eps_run(0.5), H.HarnackKind.interpolated(0.5))
    assert rep.dominance_ok is True
    rep = H.verify(sobolev_runs["sphere"], H.HarnackKind.gradient())
    assert rep.dominance_ok is True
    for i in (0, 30, 79):
        traj = sobolev_runs["sphere"]
        t = float(traj.times[i])
        r2 = traj.r_squared(t)
        strong = H.gradient_margin(traj.grid, traj.psi[i], t, r2)
        weak = H.polynomial_gradient_margin(traj.grid, traj.psi[i], t, r2)
        assert np.all(weak >= strong)


def test_static_gamma_example():
    assert H.static_gamma(1.0, math.log(2), math.log(4)) == pytest.approx(1.0)


def test_sphere_gamma_matches_static_and_golden_section():
    static = D.StaticSphere(1.0)
    assert H.sphere_gamma(0.8, 0.1, 0.9, static) == pytest.approx(H.static_gamma(0.8, 0.1, 0.9), rel=1e-12)
    for eps in (0.5, 1.0):
        metric = D.EpsRicciSphere(1.0, eps)
        exact = H.sphere_gamma(1.2, 0.05, 0.35, metric)
        upper, _ = oracles.gamma_upper_bound(1.2, 0.05, 0.35, metric)
        assert exact <= upper * (1 + 1e-12)
        assert upper <= exact * 1.05


def test_integrated_homogeneous_example():
    g = G.build_torus(2, 16, TWO_PI)
    times = np.linspace(0.1, 1.0, 10)
    spec = D.FlowSpec(g, D.LogHeat(1.0), D.StaticTorus(), 1.0, tuple(times))
    psi = np.stack([np.exp(1.5 * np.exp(times[k])) * np.ones(g.shape) for k in range(10)])
    traj = D.Trajectory(spec, times, psi, dt=1e-4)
    r = H.integrated_check(traj, 5, 0.2, 5, 0.9, tol=0.0)
    assert r.lhs == pytest.approx(0.0, abs=1e-12)
    assert r.rhs == pytest.approx(math.log((1 - math.exp(-0.9)) / (1 - math.exp(-0.2))))
    assert r.satisfied and r.gamma_value == 0.0


def test_integrated_runs_and_range_errors(torus_run, torus_pair, sphere_pair, eps_run):
    traj = torus_run(1.0, 3)
    g = traj.grid
    antipode = int(np.ravel_multi_index((32, 32), g.shape))
    assert H.integrated_check(traj, 0, 0.1, antipode, 0.9).satisfied
    assert H.integrated_check(torus_pair(1.0, 1), 0, 0.1, antipode, 0.9).satisfied
    assert H.integrated_check(sphere_pair(1), 3, 0.2, 120, 0.8).satisfied
    assert H.integrated_check(eps_run(1.0), 10, 0.05, 100, 0.35).satisfied
    with pytest.raises(ValueError):
        H.integrated_check(traj, 0, 0.001, 1, 0.5)
    with pytest.raises(ValueError):
        H.integrated_check(traj, 0, 0.5, 1, 0.4)


def test_pair_path_integral_lowers_rhs(torus_pair):
    pair = torus_pair(1.0, 2)
    single = D.Trajectory(pair.spec, pair.times, pair.psi, dt=pair.dt)
    a = H.integrated_check(pair, 7, 0.2, 3000, 0.8)
    b = H.integrated_check(single, 7, 0.2, 3000, 0.8)
    assert a.lhs == b.lhs and a.rhs < b.rhs


def test_scalar_claim_examples():
    assert H.ratio_log_monotonicity(np.array([1.0]))[0] == 0.0
    assert 1 / math.expm1(1.0) == pytest.approx(0.5820, abs=1e-4)
    assert H.ratio_log_bound(np.array([0.5]))[0] == pytest.approx(1 - 1.8484, abs=1e-4)
    rep = H.scalar_claims_check(10_000)
    assert rep.ok and rep.violations == 0 and len(rep.claims) == 5
    with pytest.raises(ValueError):
        H.scalar_claims_check(50)


@settings(max_examples=300, deadline=None)
@given(st.floats(1e-9, 1 - 1e-9))
def test_scalar_claims_property(h):
    assert H.ratio_log_monotonicity(np.array([h]))[0] > 0
    assert H.ratio_log_bound(np.array([h]))[0] < 0


def _constant_pair_traj(a, n=16):
    g = G.build_torus(2, n, TWO_PI)
    ts = tuple(0.3 + 1e-3 * k for k in range(-2, 3))
    spec = D.FlowSpec(g, D.LogHeat(a), D.StaticTorus(), ts[-1], ts)
    return D.run_pair(spec, np.full(g.shape, math.exp(-1.0)), np.ones(g.shape))


@pytest.mark.parametrize("a", [1.0, -1.0])
def test_lemma_residuals_vanish_on_constant_pair(a):
    traj = _constant_pair_traj(a)
    assert H.evolution_residual("trace_lemma", traj) <= 1e-10
    assert H.evolution_residual(H.Lemma.MATRIX_LEMMA, traj) <= 1e-10


def test_residual_preconditions(torus_run):
    with pytest.raises(H.KindMismatchError):
        H.evolution_residual("trace_lemma", torus_run(1.0, 1))
    with pytest.raises(H.KindMismatchError):
        H.evolution_residual("h_epsilon", torus_run(1.0, 1))
    g = G.build_torus(1, 16, TWO_PI)
    spec = D.FlowSpec(g, D.LogSobolev(), D.StaticTorus(), 0.2, (0.1, 0.2))
    traj = D.run(spec, np.full(g.shape, 0.5))
    with pytest.raises(ValueError, match="three"):
        H.evolution_residual("h_gradient", traj)
