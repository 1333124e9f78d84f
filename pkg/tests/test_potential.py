import math

import numpy as np
import pytest

from modules.errors import DomainError, HypothesisError, MissingDataError
from modules.geometry import SPD
from modules.potential import (acceleration_threshold, certify_trace, coefficient_block, initial_d0,
                               potential_euclid, potential_riem, shrink_bounds, shrink_constant,
                               violation_count)
from modules.problems import make_karcher, make_quadratic, make_rng
from modules.solvers import SolverConfig, SolverMode, run, run_with_containment, step_params
from modules.xi_solver import CONTRACTION_SLOPE, solve_xi


def test_potential_arithmetic():
    assert potential_euclid(1.0, 2.0, 0.0, 0.0) == 0.0
    assert potential_euclid(1.0, 2.0, 0.5, 0.25) == pytest.approx(1.0)
    assert potential_riem(1.0, 2.0, 0.5, 0.25) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        potential_euclid(0.0, 1.0, 0.1, 0.1)


def test_initial_potential_is_d0(quadratic):
    config = SolverConfig(SolverMode.EUCLID_NESTEROV, quadratic.mu, quadratic.L, xi0=0.7, max_iters=3)
    trace = run(quadratic, config)
    assert trace.rows[0].potential == pytest.approx(initial_d0(quadratic, config), rel=1e-12)


def _chosen(rng):
    L = rng.uniform(1.0, 100.0)
    mu = L * rng.uniform(1e-3, 0.9)
    gamma = rng.uniform(0.2, 1.5) / L
    dg = gamma * (1.0 - L * gamma / 2.0)
    A, B = rng.uniform(0.1, 10.0), rng.uniform(0.01, 10.0)
    delta = 1.0 + rng.exponential(1.0)
    xi = solve_xi(4.0 * dg * B / (delta * A), 2.0 * mu * dg)
    params = step_params(xi, mu, dg)
    A1 = A / (1.0 - xi)
    B1 = xi * xi / (1.0 - xi) * A / (4.0 * dg)
    return A, B, A1, B1, params, mu, dg, delta


def test_coefficient_block_with_chosen_parameters(rng):
    for _ in range(1000):
        A, B, A1, B1, params, mu, dg, delta = _chosen(rng)
        c = coefficient_block(A, B, A1, B1, params, mu, dg, delta)
        scale = 1.0 + A1 + B1
        assert abs(c.c4) <= 1e-10 * scale
        assert abs(c.c5) <= 1e-10 * scale
        assert abs(c.c6) <= 1e-10 * scale
        assert max(c.c1, c.c2, c.c3) <= 1e-12 * scale
        assert c.riemannian == (delta != 1.0) and c.delta_used == delta


def test_coefficient_block_without_strong_convexity():
    params = step_params(0.4, 0.0, 0.5)
    c = coefficient_block(1.0, 2.0, 1.5, 3.0, params, 0.0, 0.5, 2.0)
    assert c.c2 == pytest.approx(3.0 - 2.0 / 2.0)


def test_perturbed_eta_breaks_the_block(rng):
    A, B, A1, B1, params, mu, dg, delta = _chosen(rng)
    c = coefficient_block(A, B, A1, B1, params._replace(eta=1.1 * params.eta), mu, dg, delta)
    assert abs(c.c6) > 1e-6 * (1.0 + A1 + B1)


def test_certify_euclidean_quadratic(quadratic):
    trace = run(quadratic, SolverConfig(SolverMode.EUCLID_NESTEROV, quadratic.mu, quadratic.L, max_iters=200))
    records = certify_trace(trace)
    assert len(records) == 200
    assert violation_count(records) == 0


@pytest.mark.parametrize('seed', [1, 2, 3])
def test_certify_random_quadratics(seed):
    rng = make_rng(seed)
    problem = make_quadratic(int(rng.integers(2, 30)), float(rng.uniform(1e-3, 0.5)), 1.0, seed=seed)
    config = SolverConfig(SolverMode.EUCLID_NESTEROV, problem.mu, 1.0, xi0=float(rng.uniform(0.05, 1.0)),
                          max_iters=500)
    assert violation_count(certify_trace(run(problem, config), problem)) == 0


def test_certify_hyperbolic_karcher(hyperbolic_karcher):
    p = hyperbolic_karcher
    trace = run_with_containment(p, SolverConfig(SolverMode.RAGD, p.mu, p.L, max_iters=200))
    records = certify_trace(trace)
    assert violation_count(records) == 0
    assert all(r.gradient_step_margin >= -1e-9 for r in records)


def test_certify_spd_karcher():
    m = SPD(2)
    rng = make_rng(21)
    problem = make_karcher(m, [m.random_point(rng, radius=1.0).coords for _ in range(5)])
    trace = run_with_containment(problem, SolverConfig(SolverMode.RAGD, problem.mu, problem.L, max_iters=150))
    assert violation_count(certify_trace(trace)) == 0


def test_negative_control_is_flagged():
    problem = make_quadratic(10, 0.01, 1.0, seed=0)
    config = SolverConfig(SolverMode.EUCLID_NESTEROV, 0.01, 1.0, max_iters=200, beta_offset=0.2)
    assert violation_count(certify_trace(run(problem, config), problem)) > 0


def test_raw_potential_decrease_is_checked_alongside_the_normalized_one(quadratic):
    problem = make_quadratic(10, 0.01, 1.0, seed=0)
    config = SolverConfig(SolverMode.EUCLID_NESTEROV, 0.01, 1.0, max_iters=200, beta_offset=0.2)
    records = certify_trace(run(problem, config), problem)
    assert any('potential decrease' in r.violations for r in records)
    assert any('theorem inequality' in r.violations for r in records)
    assert any(r.decrease_margin < 0 for r in records)

    clean = certify_trace(run(quadratic, SolverConfig(SolverMode.EUCLID_NESTEROV, quadratic.mu, quadratic.L,
                                                      max_iters=200)))
    assert not any('potential decrease' in r.violations for r in clean)


def test_certification_needs_iterates(quadratic):
    rgd = run(quadratic, SolverConfig(SolverMode.RGD, quadratic.mu, quadratic.L, max_iters=5))
    with pytest.raises(MissingDataError):
        certify_trace(rgd)
    bare = run(quadratic, SolverConfig(SolverMode.EUCLID_NESTEROV, quadratic.mu, quadratic.L, max_iters=5,
                                       record_diagnostics=False))
    with pytest.raises(MissingDataError):
        certify_trace(bare)


def test_shrink_constant_matches_second_transcription():
    mu, L, gamma = 1.0, 10.0, 0.105
    dg = gamma - L * gamma * gamma / 2.0
    a = 2.0 * mu * dg
    first = math.sqrt(2.0 / mu) + 1.0 / (mu * math.sqrt(dg)) + L * math.sqrt(2.0) / mu ** 1.5
    expected = first * (2.0 * L * dg + 1.0 - a) / ((gamma * L - 1.0) * (gamma * L - 1.0 + a)) \
        + L * math.sqrt(2.0) / mu ** 1.5
    assert shrink_constant(mu, L, gamma) == pytest.approx(expected, rel=1e-12)
    with pytest.raises(HypothesisError):
        shrink_constant(mu, L, 0.1)


def test_shrink_bounds_on_hyperbolic_run(hyperbolic_karcher):
    p = hyperbolic_karcher
    trace = run_with_containment(p, SolverConfig(SolverMode.RAGD, p.mu, p.L, max_iters=200))
    report = shrink_bounds(trace)
    assert report.ok, report.violations[:5]
    first = report.rows[0]
    assert first.pd_xz == pytest.approx(p.manifold.distance(trace.states[0].x, p.optimum), abs=1e-12)
    assert first.pd_xz <= first.pd_xz_bound


def test_shrink_bounds_skip_steps_outside_the_step_size_window(hyperbolic_karcher):
    p = hyperbolic_karcher
    trace = run_with_containment(p, SolverConfig(SolverMode.RAGD, p.mu, p.L, gamma=1.9 / p.L, max_iters=100))
    report = shrink_bounds(trace)
    assert report.skipped > 0
    assert report.rows[0].d_xz_bound == 0.0
    unchecked = [r for r in report.rows[1:] if math.isnan(r.d_xz_bound)]
    assert len(unchecked) == report.skipped
    # xi_1 starts near 1, far above 2 - gamma L
    assert math.isnan(report.rows[1].d_xz_bound)
    assert not [v for v in report.violations if v[1] == 'd_xz']


def test_acceleration_threshold_structure():
    config = SolverConfig(SolverMode.RAGD, 1.0, 10.0, gamma=0.105)
    a = config.a
    t1 = acceleration_threshold(config, 1.0, 1.0, eps=1e-3)
    t2 = acceleration_threshold(config, 1.0, 1.0, eps=5e-4)
    lam = 1.0 - CONTRACTION_SLOPE * a
    expected = math.log(2.0) / math.log(1.0 / lam) + math.log(2.0) / -math.log(1.0 - a)
    assert t2 - t1 == pytest.approx(expected, rel=1e-9)
    flat = acceleration_threshold(config, 0.0, 1.0, eps=1e-3)
    assert flat < t1
    with pytest.raises(HypothesisError):
        acceleration_threshold(SolverConfig(SolverMode.RAGD, 1.0, 10.0, gamma=0.1), 1.0, 1.0)


def test_xi_settles_by_the_predicted_threshold(hyperbolic_karcher):
    p = hyperbolic_karcher
    trace = run_with_containment(p, SolverConfig(SolverMode.RAGD, p.mu, p.L, max_iters=400))
    config = trace.config
    D0 = initial_d0(trace.problem, config)
    threshold = min(math.ceil(acceleration_threshold(config, p.manifold.kappa, D0, eps=1e-3)), 400)
    xis = trace.column('xi')
    assert np.all(np.abs(xis[threshold:] - math.sqrt(config.a)) <= 1e-3)
    assert np.all(xis[1:] > config.a)
