"""Randomised property suites run by ``ragd verify``.

Each suite draws its samples from one Philox stream and reports, per check,
the number of samples, the number of failures and the worst margin seen
(bound minus observed; negative means the property failed by that much).
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from modules.distortion import s_kappa, t_kappa, t_kappa_hat, trig_coeff
from modules.errors import RagdError
from modules.geometry import SPD, Euclidean, Hyperbolic, Sphere
from modules.potential import certify_trace, coefficient_block
from modules.problems import make_karcher, make_quadratic, make_rng
from modules.solvers import SolverConfig, SolverMode, run, run_with_containment, step_params
from modules.xi_solver import (CONTRACTION_SLOPE, XiParams, contraction_factor, fixed_point_gap_bound,
                               fixed_point_xi, iterate_xi, max_gap_delta, max_gap_radius, next_xi,
                               recursion_residual, solve_xi, theta, xi_gap_from_radius)

logger = logging.getLogger(__name__)

STAIRCASE = (0.9, 0.6625, 0.5748, 0.5360)


@dataclass
class Check:
    name: str
    slack: float = 0.0
    samples: int = 0
    failures: int = 0
    worst: float = math.inf

    def record(self, margin):
        self.samples += 1
        self.worst = min(self.worst, float(margin))
        if not margin >= -self.slack:
            self.failures += 1

    @property
    def passed(self):
        return self.failures == 0

    def to_dict(self):
        return {'check': self.name, 'samples': self.samples, 'failures': self.failures,
                'worst_margin': self.worst if math.isfinite(self.worst) else None}


@dataclass
class SuiteReport:
    name: str
    seed: int
    checks: list = field(default_factory=list)

    def check(self, name, slack=0.0):
        c = Check(name, slack)
        self.checks.append(c)
        return c

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def to_dict(self):
        return {'suite': self.name, 'seed': self.seed, 'passed': self.passed,
                'checks': [c.to_dict() for c in self.checks]}


def _n(count, size):
    return max(1, int(round(count * size)))


def _test_manifolds():
    return [Euclidean(3), Hyperbolic(2, 1.0), Hyperbolic(3, 2.0), SPD(2), SPD(3), Sphere(2, 1.0)]


def geometry_suite(seed, size=1.0):
    rng = make_rng(seed)
    report = SuiteReport('geometry', seed)
    roundtrip = report.check('exp/log roundtrip')
    isometry = report.check('radial isometry', 1e-8)
    projected = report.check('projected distance <= distance (Hadamard)', 1e-9)
    mirror = report.check('mirror-step identity')
    triangle = report.check('triangle inequality', 1e-9)
    for m in _test_manifolds():
        max_len = 3.0 if isinstance(m, Sphere) else 5.0
        ball = 0.7 if isinstance(m, Sphere) else 2.0
        for _ in range(_n(100, size)):
            x = m.random_point(rng, radius=ball)
            v = m.random_tangent(rng, x, max_len * rng.uniform())
            nv = m.norm(x, v)
            y = m.exp(x, v)
            roundtrip.record(1e-7 * (1.0 + nv) - m.norm(x, m.log(x, y) - v))
            isometry.record(-abs(m.distance(x, y) - nv))
        for _ in range(_n(200 if m.hadamard else 50, size)):
            u, w, z = (m.random_point(rng, radius=ball) for _ in range(3))
            if m.hadamard:
                projected.record(m.distance(w, z) - m.projected_distance(u, w, z))
            triangle.record(m.distance(u, w) + m.distance(w, z) - m.distance(u, z))
            g = m.random_tangent(rng, u, rng.uniform())
            v = 0.5 * m.log(u, w)
            s = rng.uniform(0.1, 1.0)
            lhs = (m.projected_distance(u, m.exp(u, v - s * g), z) ** 2
                   - m.projected_distance(u, m.exp(u, v), z) ** 2)
            rhs = s * s * m.inner(u, g, g) + 2.0 * s * m.inner(u, g, m.log(u, z) - v)
            mirror.record(1e-9 * (1.0 + abs(lhs) + abs(rhs)) - abs(lhs - rhs))
    return report


def distortion_suite(seed, size=1.0):
    rng = make_rng(seed)
    report = SuiteReport('distortion', seed)
    improved = report.check('improved distortion inequality', 1e-8)
    rauch = report.check('Rauch distortion inequality', 1e-8)
    trig = report.check('trigonometric inequality', 1e-8)
    sharp = report.check('t_kappa_hat <= t_kappa', 1e-12)
    small_r = report.check('T_kappa(r) <= 1 + 2 kappa r^2', 1e-9)
    sphere = report.check('non-Hadamard projection bound', 1e-8)
    for kappa in (0.5, 1.0, 2.0):
        m = Hyperbolic(3, kappa)
        for _ in range(_n(2000 / 3, size)):
            x, y, z = (m.random_point(rng, radius=1.5) for _ in range(3))
            dxy, dxz, dyz = m.distance(x, y), m.distance(x, z), m.distance(y, z)
            pd2 = m.projected_distance(x, y, z) ** 2
            improved.record(t_kappa(kappa, dxy) * pd2 - dyz ** 2)
            rauch.record(s_kappa(kappa, max(dxy, dxz)) * pd2 - dyz ** 2)
            A = m.angle(x, y, z)
            trig.record(trig_coeff(kappa, dxz) * dxy ** 2 + dxz ** 2 - 2.0 * dxy * dxz * math.cos(A) - dyz ** 2)
        for r in np.linspace(0.0, 3.0, _n(60, size)):
            sharp.record(t_kappa(kappa, r) - t_kappa_hat(kappa, r))
        for r in np.linspace(0.0, 1.0 / (2.0 * math.sqrt(kappa)), _n(200, size)):
            small_r.record(1.0 + 2.0 * kappa * r * r - t_kappa(kappa, r))
    for sigma in (1.0, 2.0):
        s = Sphere(2, sigma)
        # pairwise distances stay below the uniquely geodesic diameter pi / (2 sqrt(sigma))
        ball = math.pi / (4.0 * math.sqrt(sigma))
        for _ in range(_n(500, size)):
            x, y, z = (s.random_point(rng, radius=ball) for _ in range(3))
            dxy, dyz = s.distance(x, y), s.distance(y, z)
            sphere.record((1.0 + 2.0 * sigma * dxy ** 2) * dyz ** 2 - s.projected_distance(x, y, z) ** 2)
    return report


def xi_suite(seed, size=1.0):
    rng = make_rng(seed)
    report = SuiteReport('xi', seed)
    staircase = report.check('staircase a=0.25, delta=1, xi0=0.9')
    xs = iterate_xi(0.9, XiParams(0.25, 1.0), 200)
    for t, expected in enumerate(STAIRCASE):
        staircase.record(1e-3 - abs(xs[t] - expected))
    staircase.record(1e-8 - abs(xs[200] - 0.5))

    fixed = report.check('fixed point formulas')
    for a in (0.01, 0.09, 0.25):
        fixed.record(1e-12 - abs(fixed_point_xi(XiParams(a, 1.0)) - math.sqrt(a)))
    fixed.record(1e-6 - abs(fixed_point_xi(XiParams(0.25, 2.0)) - 0.366025))
    grid = np.arange(1.0, 10.0001, 0.1)
    for a in (0.01, 0.09, 0.25):
        values = [fixed_point_xi(XiParams(a, d)) for d in grid]
        for lo, hi in zip(values, values[1:]):
            fixed.record(lo - hi if lo > hi else -1.0)
        for d, v in zip(grid, values):
            fixed.record(v - a if v > a else -1.0)
            fixed.record(1e-12 - abs(next_xi(v, XiParams(a, d)) - v))

    contraction = report.check('contraction bound', 1e-12)
    residual = report.check('recursion residual')
    in_range = report.check('xi_t in [a, 1)')
    for _ in range(_n(100, size)):
        a = rng.uniform(0.001, 0.5)
        p = XiParams(a, 1.0 + rng.exponential(2.0))
        xi0 = rng.uniform(a, 1.0)
        target, q = fixed_point_xi(p), contraction_factor(p)
        xs = iterate_xi(xi0, p, 100)
        for t in range(1, 101):
            contraction.record(q ** t * abs(xi0 - target) - abs(xs[t] - target))
            rhs = xs[t - 1] ** 2 / p.delta
            residual.record(1e-12 * max(1.0, rhs) - abs(recursion_residual(xs[t], xs[t - 1], p)))
            in_range.record(min(xs[t] - a, 1.0 - xs[t]) if xs[t] < 1.0 else -1.0)

    derivative = report.check('0 <= theta(v) < 1 - c v')
    for v in np.linspace(0.01, 0.99, _n(99, size)):
        for a in np.linspace(0.0, v, 12)[1:-1]:
            th = theta(v, a)
            derivative.record(min(th, 1.0 - CONTRACTION_SLOPE * v - th))

    gaps = report.check('fixed-point gap bounds', 1e-12)
    for a in (0.01, 0.1, 0.3):
        for d in np.linspace(1.0, max_gap_delta(a), 20):
            g = fixed_point_gap_bound(d, a)
            gaps.record(min(g.value, g.bound - g.value))
        for kappa in (0.5, 1.0, 2.0):
            for r in np.linspace(0.0, max_gap_radius(kappa, a), 20):
                g = xi_gap_from_radius(kappa, r, a)
                gaps.record(min(g.value, g.bound - g.value))
    return report


CERTIFIED = (
    ('potential decrease', 'decrease_margin'),
    ('theorem inequality', 'theorem_inequality_margin'),
    ('quadratic-form bound', 'quadratic_form_margin'),
    ('gradient-step decrease', 'gradient_step_margin'),
    ('mirror-step identity', None),
    ('cumulative rate', 'cumulative_margin'),
)


def _certify_into(checks, trace, problem):
    for rec in certify_trace(trace, problem):
        for check, (name, attr) in zip(checks, CERTIFIED):
            margin = -rec.mirror_identity_error if attr is None else getattr(rec, attr)
            if name in rec.violations:
                check.record(margin if margin < 0 else -1.0)
            elif math.isfinite(margin):
                # within tolerance counts as zero margin
                check.record(max(margin, 0.0))


def potential_suite(seed, size=1.0):
    rng = make_rng(seed)
    report = SuiteReport('potential', seed)
    block = report.check('coefficient block with chosen parameters', 1e-10)
    for _ in range(_n(1000, size)):
        L = rng.uniform(1.0, 100.0)
        mu = L * rng.uniform(1e-3, 0.9)
        gamma = rng.uniform(0.2, 1.5) / L
        dg = gamma * (1.0 - L * gamma / 2.0)
        A, B = rng.uniform(0.1, 10.0), rng.uniform(0.0, 10.0)
        delta = 1.0 + rng.exponential(1.0)
        xi = solve_xi(4.0 * dg * B / (delta * A), 2.0 * mu * dg)
        if xi <= 0:
            continue
        p = step_params(xi, mu, dg)
        A1 = A / (1.0 - xi)
        B1 = xi * xi / (1.0 - xi) * A / (4.0 * dg)
        c = coefficient_block(A, B, A1, B1, p, mu, dg, delta)
        scale = 1.0 + A1 + B1
        block.record(min(-abs(c.c4), -abs(c.c5), -abs(c.c6)) / scale)
        block.record(-max(c.c1, c.c2, c.c3, 0.0) / scale)

    names = [name for name, _ in CERTIFIED]
    euclid = [report.check(f'euclidean: {n}') for n in names]
    for _ in range(_n(50, size)):
        dim = int(rng.integers(2, 51))
        L = 1.0
        mu = float(10.0 ** rng.uniform(-3.0, math.log10(0.5)))
        problem = make_quadratic(dim, mu, L, seed=int(rng.integers(2 ** 31)))
        config = SolverConfig(SolverMode.EUCLID_NESTEROV, mu, L, xi0=float(rng.uniform(0.05, 1.0)),
                              max_iters=_n(500, size))
        _certify_into(euclid, run(problem, config), problem)

    riem = [report.check(f'riemannian: {n}') for n in names]
    instances = [Hyperbolic(2, 1.0)] * _n(20, size) + [SPD(3)] * _n(10, size)
    for m in instances:
        anchors = [m.random_point(rng, radius=1.0).coords for _ in range(5)]
        problem = make_karcher(m, anchors)
        config = SolverConfig(SolverMode.RAGD, problem.mu, problem.L, max_iters=_n(500, size))
        trace = run_with_containment(problem, config)
        _certify_into(riem, trace, trace.problem)

    control = report.check('negative control (beta + 0.2) is flagged')
    problem = make_quadratic(10, 0.01, 1.0, seed=seed)
    config = SolverConfig(SolverMode.EUCLID_NESTEROV, 0.01, 1.0, max_iters=200, beta_offset=0.2)
    flagged = any(r.violations for r in certify_trace(run(problem, config), problem))
    control.record(0.0 if flagged else -1.0)
    return report


SUITES = {
    'geometry': geometry_suite,
    'distortion': distortion_suite,
    'xi': xi_suite,
    'potential': potential_suite,
}


def run_suites(name, seed, size=1.0):
    """Run one suite or all of them; a suite that raises is reported as one failed check."""
    names = list(SUITES) if name == 'all' else [name]
    reports = []
    for n in names:
        logger.info('running %s suite (seed %d)', n, seed)
        try:
            reports.append(SUITES[n](seed, size))
        except RagdError as e:
            logger.error('%s suite aborted: %s: %s', n, type(e).__name__, e)
            report = SuiteReport(n, seed)
            report.check(f'aborted with {type(e).__name__}: {e}').record(-math.inf)
            reports.append(report)
    return reports
