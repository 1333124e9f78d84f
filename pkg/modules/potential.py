"""Potential functions and post-hoc certification of solver traces.

The Euclidean potential is Phi_t = A_t (f(y_t) - f*) + B_t ||z_t - x*||^2; the
Riemannian one replaces the distance by the projected distance at x_t. All
checks run over recorded traces, never inside the solver loop.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from modules.errors import DomainError, HypothesisError, MissingDataError
from modules.solvers import SolverMode
from modules.xi_solver import CONTRACTION_SLOPE, iterations_to_threshold

logger = logging.getLogger(__name__)

REL_TOL = 1e-9
# rounding floor, in units of machine epsilon, for quantities scaled by A_t or B_t
NOISE_ULPS = 64.0
EPS = float(np.finfo(float).eps)


def potential_euclid(A, B, f_gap, dist_sq):
    if not A > 0:
        raise DomainError(f'A must be positive, got {A!r}')
    return A * f_gap + B * dist_sq


def potential_riem(A, B, f_gap, proj_dist_sq):
    if not A > 0:
        raise DomainError(f'A must be positive, got {A!r}')
    return A * f_gap + B * proj_dist_sq


@dataclass(frozen=True)
class CoefficientBlock:
    c1: float
    c2: float
    c3: float
    c4: float
    c5: float
    c6: float
    riemannian: bool
    delta_used: float

    def quadratic_form(self, w_sq, x_sq, g_sq, wx, wg, xg):
        """c1|W|^2 + c2|X|^2 + c3|g|^2 + c4<W,X> + c5<W,g> + c6<X,g>."""
        return (self.c1 * w_sq + self.c2 * x_sq + self.c3 * g_sq
                + self.c4 * wx + self.c5 * wg + self.c6 * xg)


def coefficient_block(A_t, B_t, A_t1, B_t1, params, mu, delta_gamma, delta_rate=1.0):
    """Coefficients bounding the potential change; B_t enters as B_t / delta."""
    if not delta_rate >= 1.0:
        raise DomainError(f'delta_rate must be >= 1, got {delta_rate!r}')
    alpha, beta, eta = params.alpha, params.beta, params.eta
    b_d = B_t / delta_rate
    r = alpha / (1.0 - alpha)
    return CoefficientBlock(
        c1=beta * beta * B_t1 - b_d - 0.5 * mu * r * r * A_t,
        c2=B_t1 - b_d - 0.5 * mu * (A_t1 - A_t),
        c3=eta * eta * B_t1 - delta_gamma * A_t1,
        c4=2.0 * (beta * B_t1 - b_d),
        c5=r * A_t - 2.0 * beta * eta * B_t1,
        c6=(A_t1 - A_t) - 2.0 * eta * B_t1,
        riemannian=delta_rate != 1.0,
        delta_used=float(delta_rate),
    )


@dataclass
class PotentialRecord:
    t: int
    phi_or_psi: float
    A: float
    B: float
    decrease_margin: float
    theorem_inequality_margin: float
    quadratic_form_margin: float
    gradient_step_margin: float
    mirror_identity_error: float
    cumulative_margin: float
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations


def _resolve_optimum(trace, problem, optimum):
    for candidate in (optimum, trace.optimum, getattr(problem, 'optimum', None)):
        if candidate is not None:
            return candidate
    raise MissingDataError('certification needs a known optimum')


def certify_trace(trace, problem=None, optimum=None):
    """Per-transition audit of a trace recorded with record_diagnostics.

    Record t covers the step from state t to state t + 1 and reports the
    potential decrease, the per-step theorem inequality, the quadratic-form
    upper bound, the gradient-step decrease, the mirror-step identity and the
    cumulative rate bound. Margins are bound minus observed; negative beyond
    tolerance is a violation.

    A_t grows geometrically and overflows long before a run ends on
    well-conditioned problems, so every inequality is checked after dividing
    by A_{t+1}, using B_t / A_t = xi_t^2 / (4 Delta). Only ``decrease_margin``
    is reported in raw potential units.
    """
    problem = problem if problem is not None else trace.problem
    if problem is None:
        raise MissingDataError('certification needs the problem the trace was run on')
    config = trace.config
    if config.mode is SolverMode.RGD:
        raise MissingDataError('rgd traces carry no step parameters to certify')
    states, params = trace.states, trace.params
    if len(states) < 2 or len(params) != len(states) - 1:
        raise MissingDataError('trace lacks iterates; run with record_diagnostics enabled')
    x_star = _resolve_optimum(trace, problem, optimum)
    m = problem.manifold
    f = problem.objective
    f_star = float(f(x_star))
    dg, mu = config.delta_gamma, config.mu
    scale = 1.0 + float(np.max(np.abs(x_star.coords)))

    def normalized(s):
        gap = float(f(s.y)) - f_star
        pd = m.projected_distance(s.x, s.z, x_star)
        ratio = s.B / s.A if math.isfinite(s.A) and math.isfinite(s.B) else s.xi * s.xi / (4.0 * dg)
        return gap, pd, ratio, gap + ratio * pd * pd

    def noise(gap, pd, ratio):
        return NOISE_ULPS * EPS * ((1.0 + abs(f_star) + abs(gap)) + ratio * (1.0 + pd) ** 2 * scale)

    records = []
    gap0, pd0, ratio0, bar0 = normalized(states[0])
    bar_initial = bar0
    shrink = 1.0
    for t, p in enumerate(params):
        s0, s1 = states[t], states[t + 1]
        gap1, pd1, ratio1, bar1 = normalized(s1)
        keep = 1.0 - p.xi
        x1 = s1.x
        g = problem.gradient(x1)
        g_sq = m.inner(x1, g, g)
        psi0 = s0.A * bar0
        tol = REL_TOL * (1.0 / s1.A + keep * abs(bar0)) + noise(gap1, pd1, ratio1) + keep * noise(gap0, pd0, ratio0)
        violations = []

        # Psi_{t+1} <= Psi_t, divided by A_{t+1}
        theorem = keep * bar0 - bar1
        if theorem < -tol:
            violations.append('theorem inequality')
        # raw Psi_t - Psi_{t+1}; skipped once A_t overflows
        decrease = psi0 - s1.A * bar1
        if math.isfinite(decrease) and decrease < -s1.A * tol:
            violations.append('potential decrease')

        # quadratic-form bound at base x_{t+1}, coefficients per unit A_{t+1}
        W = m.log(x1, s0.z)
        X = -m.log(x1, x_star)
        delta = s1.delta.value
        block = coefficient_block(keep, keep * ratio0, 1.0, ratio1, p, mu, dg, delta)
        q = block.quadratic_form(m.inner(x1, W, W), m.inner(x1, X, X), g_sq,
                                 m.inner(x1, W, X), m.inner(x1, W, g), m.inner(x1, X, g))
        pd_moved = m.norm(x1, W + X)
        moved = keep * (gap0 + ratio0 / delta * pd_moved * pd_moved)
        quad = q - (bar1 - moved)
        if quad < -tol:
            violations.append('quadratic-form bound')

        f_x1 = float(f(x1))
        grad_step = -dg * g_sq - (float(f(s1.y)) - f_x1)
        if grad_step < -REL_TOL * (1.0 + abs(f_x1)):
            violations.append('gradient-step decrease')

        v = p.beta * m.log(x1, s0.z)
        s = p.eta
        lhs_m = pd1 * pd1 - m.projected_distance(x1, m.exp(x1, v), x_star) ** 2
        rhs_m = s * s * g_sq + 2.0 * s * m.inner(x1, g, m.log(x1, x_star) - v)
        mirror = abs(lhs_m - rhs_m)
        if mirror > REL_TOL * (1.0 + abs(lhs_m) + abs(rhs_m)) * scale:
            violations.append('mirror-step identity')

        shrink *= keep
        cumulative = bar_initial * shrink - gap1
        if cumulative < -(REL_TOL * (1.0 + abs(bar_initial)) * shrink + noise(gap1, pd1, ratio1)):
            violations.append('cumulative rate')

        if violations:
            logger.debug('t=%d violations: %s', t, ', '.join(violations))
        records.append(PotentialRecord(t, psi0, s0.A, s0.B, decrease, theorem, quad, grad_step,
                                       mirror, cumulative, violations))
        gap0, pd0, ratio0, bar0 = gap1, pd1, ratio1, bar1
    return records


def violation_count(records):
    return sum(1 for r in records if r.violations)


def initial_d0(problem, config, x0=None, optimum=None):
    """f(x0) - f* + xi0^2 / (4 Delta) d(x0, x*)^2."""
    x_star = optimum if optimum is not None else problem.optimum
    if x_star is None:
        raise MissingDataError('D0 needs a known optimum')
    x0 = problem.start() if x0 is None else x0
    gap = float(problem.objective(x0)) - float(problem.objective(x_star))
    d = problem.manifold.distance(x0, x_star)
    return gap + config.xi0 ** 2 / (4.0 * config.delta_gamma) * d * d


def _check_shrink_hypotheses(mu, L, gamma):
    if not mu > 0:
        raise HypothesisError('distance bounds need mu > 0')
    if not gamma * L > 1.0:
        raise HypothesisError(f'gamma L = {gamma * L:.6g} must exceed 1')


def shrink_constant(mu, L, gamma):
    """Constant C with d(x_t, z_t) <= C sqrt(D0 prod_{j<t} (1 - xi_j))."""
    _check_shrink_hypotheses(mu, L, gamma)
    dg = gamma * (1.0 - L * gamma / 2.0)
    a = 2.0 * mu * dg
    s2 = math.sqrt(2.0 / mu)
    inner_sum = s2 + math.sqrt(1.0 / (mu * mu * dg)) + (L / mu) * s2
    gl = gamma * L - 1.0
    return inner_sum * (2.0 * L * dg + 1.0 - a) / (gl * (gl + a)) + (L / mu) * s2


class ShrinkRow(NamedTuple):
    t: int
    P: float
    pd_xz: float
    pd_xz_bound: float
    d_yopt: float
    d_yopt_bound: float
    pd_xyz: float
    pd_xyz_bound: float
    d_yz: float
    d_yz_bound: float
    d_xz: float
    d_xz_bound: float


@dataclass
class ShrinkReport:
    constant: float
    D0: float
    rows: list
    violations: list
    # rows whose d(x_t, z_t) bound was not checked because its hypotheses fail
    skipped: int = 0

    @property
    def ok(self):
        return not self.violations


def shrink_bounds(trace, config=None, D0=None, problem=None, optimum=None, slack=1e-9):
    """Observed distances against the distance bounds implied by potential decrease.

    A bound that needs xi > 2 mu Delta (or the step-size window) is reported as
    NaN at iterations where that hypothesis fails.
    """
    config = config if config is not None else trace.config
    problem = problem if problem is not None else trace.problem
    mu, L, gamma = config.mu, config.L, config.gamma
    C = shrink_constant(mu, L, gamma)
    if len(trace.states) < 1:
        raise MissingDataError('trace lacks iterates; run with record_diagnostics enabled')
    x_star = _resolve_optimum(trace, problem, optimum)
    m = problem.manifold
    dg = config.delta_gamma
    a = 2.0 * mu * dg
    if D0 is None:
        D0 = initial_d0(problem, config, trace.states[0].x, x_star)
    s2 = math.sqrt(2.0 / mu)
    s_pd = math.sqrt(1.0 / (mu * mu * dg))
    gl = gamma * L
    tail = (1.0 - a) / ((gl - 1.0) * (gl - 1.0 + a))

    rows, violations = [], []
    skipped = 0
    P_prev, P = D0, D0
    states = trace.states
    for t, s in enumerate(states):
        if t > 0:
            P_prev = P
            P = P * (1.0 - s.xi)
        rp = math.sqrt(max(P, 0.0))
        xi_ok = s.xi >= a
        pd_xz = m.projected_distance(s.x, s.z, x_star)
        d_yopt = m.distance(s.y, x_star)
        pd_xyz = m.projected_distance(s.x, s.y, s.z)
        d_yz = m.distance(s.y, s.z)
        d_xz = m.distance(s.x, s.z)
        pd_bound = rp * s_pd if xi_ok else math.nan
        pd_xyz_bound = rp * (s2 + s_pd) if xi_ok else math.nan
        d_yz_bound = math.nan
        if t + 1 < len(states):
            xi_next = states[t + 1].xi
            if xi_ok and xi_next > a and gl <= 2.0 - xi_next:
                d_yz_bound = rp / (1.0 - a / xi_next) * (s2 + s_pd + (L / mu) * s2) * tail
        if t == 0:
            d_xz_bound = 0.0
        elif s.xi > a and gl <= 2.0 - s.xi:
            d_xz_bound = C * math.sqrt(max(P_prev, 0.0))
        else:
            d_xz_bound = math.nan
            skipped += 1
        row = ShrinkRow(t, P, pd_xz, pd_bound, d_yopt, rp * s2, pd_xyz, pd_xyz_bound,
                        d_yz, d_yz_bound, d_xz, d_xz_bound)
        for name in ('pd_xz', 'd_yopt', 'pd_xyz', 'd_yz', 'd_xz'):
            bound = getattr(row, name + '_bound')
            if not math.isnan(bound) and getattr(row, name) > bound * (1.0 + slack) + slack:
                violations.append((t, name))
        rows.append(row)
    if violations:
        logger.warning('%d distance-bound violations', len(violations))
    if skipped:
        logger.info('d(x_t, z_t) bound skipped at %d of %d iterations', skipped, len(states))
    return ShrinkReport(C, D0, rows, violations, skipped)


def acceleration_threshold(config, kappa, D0, eps=1e-3, xi0=None):
    """Iteration count after which |xi_t - sqrt(2 mu Delta)| <= eps is guaranteed.

    Returned unrounded. When xi0 exceeds sqrt(mu/L) the steps needed to bring xi
    below sqrt(mu/L) are added first.
    """
    mu, L, gamma = config.mu, config.L, config.gamma
    C = shrink_constant(mu, L, gamma)
    if not kappa >= 0:
        raise HypothesisError('kappa must be nonnegative')
    dg = config.delta_gamma
    a = 2.0 * mu * dg
    slow = -math.log(1.0 - a)
    lam = 1.0 - CONTRACTION_SLOPE * a
    if kappa == 0:
        head = 0.0
    else:
        d_kappa = math.sqrt(3.0 / (1.0 + 1.0 / (4.0 * mu * dg))) / (2.0 * math.sqrt(kappa))
        term1 = 2.0 * math.log(C * math.sqrt(D0) / d_kappa) / slow
        term2 = math.log(2.0 * kappa * C * C * D0 / eps) / slow
        head = max(term1, term2, 0.0)
    term3 = max(math.log(2.0 * math.sqrt(a) / eps) / -math.log(lam), 0.0)
    xi0 = config.xi0 if xi0 is None else xi0
    offset = iterations_to_threshold(xi0, a, mu, L) if xi0 > math.sqrt(mu / L) else 0
    return head + term3 + offset
