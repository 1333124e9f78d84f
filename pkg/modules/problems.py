"""Benchmark problems: quadratics, Karcher means and sphere means.

A Problem bundles an objective, its Riemannian gradient and the constants
(mu, L) together with the ball on which those constants were certified.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize, stats

from config import Config
from modules.distortion import trig_coeff
from modules.errors import (CertifiedBallExit, ConfigError, ConvergenceError, DomainError,
                            RuntimeContainmentError)
from modules.geometry import (Euclidean, Hyperbolic, Manifold, ManifoldPoint, Sphere, TangentVector,
                              manifold_from_dict)

logger = logging.getLogger(__name__)

CONTAINMENT_SLACK = 1e-9


def make_rng(seed=None):
    """Counter-based Philox stream; identical seeds give identical draws everywhere."""
    return np.random.Generator(np.random.Philox(Config.DEFAULT_SEED if seed is None else int(seed)))


@dataclass
class Problem:
    manifold: Manifold
    objective: Callable[[ManifoldPoint], float]
    gradient: Callable[[ManifoldPoint], TangentVector]
    mu: float
    L: float
    optimum: Optional[ManifoldPoint] = None
    # ball around center on which mu and L hold
    feasible_radius: float = math.inf
    center: Optional[ManifoldPoint] = None
    initial: Optional[ManifoldPoint] = None
    # ball iterates must stay in; defaults to the certified ball
    containment_radius: Optional[float] = None
    # leaving the containment ball is fatal instead of triggering an enlarged-L re-run
    strict_containment: bool = False
    description: dict = field(default_factory=dict)
    enlarge_fn: Optional[Callable[['Problem'], 'Problem']] = field(default=None, repr=False)
    cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.mu <= self.L:
            raise DomainError(f'need 0 <= mu <= L, got mu={self.mu!r}, L={self.L!r}')
        if self.containment_radius is None:
            self.containment_radius = self.feasible_radius

    @property
    def f_star(self):
        if self.optimum is None:
            return None
        if 'f_star' not in self.cache:
            self.cache['f_star'] = float(self.objective(self.optimum))
        return self.cache['f_star']

    def f_gap(self, x):
        if self.optimum is None:
            return None
        return float(self.objective(x)) - self.f_star

    def start(self):
        if self.initial is not None:
            return self.initial
        return self.center if self.center is not None else self.manifold.origin()

    def check_containment(self, x, label='iterate'):
        r = self.containment_radius
        if self.center is None or r is None or math.isinf(r):
            return
        d = self.manifold.distance(self.center, x)
        if d > r * (1.0 + CONTAINMENT_SLACK) + CONTAINMENT_SLACK:
            msg = f'{label} at distance {d:.6g} from the center left the ball of radius {r:.6g}'
            if self.strict_containment:
                raise RuntimeContainmentError(msg)
            raise CertifiedBallExit(msg)

    def enlarge(self):
        """Copy of the problem with L doubled and the certified ball widened to match."""
        if self.enlarge_fn is None:
            raise RuntimeContainmentError('problem has no enlarged-L variant')
        return self.enlarge_fn(self)


def _validated_weights(weights, n):
    if weights is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise DomainError(f'expected {n} weights, got {w.shape}')
    if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
        raise DomainError('weights must be positive and sum to 1')
    return w


def _mean_objective(m, anchors, w):
    def objective(x):
        return 0.5 * sum(wi * m.distance(x, p) ** 2 for wi, p in zip(w, anchors))

    def gradient(x):
        g = -sum(wi * m.log(x, p).coords for wi, p in zip(w, anchors))
        return TangentVector(x, g)

    return objective, gradient


def make_quadratic(dim, mu, L, seed=None, H=None, c=None, initial=None):
    """f(x) = 1/2 (x - c)^T H (x - c) with spectrum of H in [mu, L], endpoints attained."""
    if not 0.0 < mu <= L:
        raise DomainError(f'need 0 < mu <= L, got mu={mu!r}, L={L!r}')
    rng = make_rng(seed)
    if H is None:
        if dim == 1:
            H = np.array([[mu]])
        else:
            eigs = np.concatenate([[mu, L], rng.uniform(mu, L, dim - 2)])
            Q = stats.ortho_group.rvs(dim, random_state=rng)
            H = (Q * eigs) @ Q.T
            H = 0.5 * (H + H.T)
    H = np.asarray(H, dtype=float)
    c = rng.standard_normal(dim) if c is None else np.asarray(c, dtype=float)
    if initial is None:
        initial = c + rng.standard_normal(dim)
    m = Euclidean(dim)

    def objective(x):
        r = x.coords - c
        return 0.5 * float(r @ H @ r)

    def gradient(x):
        return TangentVector(x, H @ (x.coords - c))

    optimum = m.point(c)
    description = {'type': 'quadratic', 'dim': dim, 'mu': mu, 'L': L, 'seed': seed,
                   'H': H.tolist(), 'c': c.tolist(), 'initial': np.asarray(initial, dtype=float).tolist()}
    return Problem(m, objective, gradient, mu, L, optimum=optimum, center=optimum,
                   initial=m.point(initial), description=description)


def reference_center(m, anchors):
    """Coordinate-wise mean of the anchors, mapped back onto the manifold."""
    mean = np.mean([p.coords for p in anchors], axis=0)
    if isinstance(m, Hyperbolic):
        return m.lift(mean[:-1])
    if isinstance(m, Sphere):
        n = np.linalg.norm(mean)
        if n < 1e-12:
            raise DomainError('anchors have no well-defined spherical center')
        return m.point(mean * (m.radius / n))
    return m.point(mean)


def _karcher_radius(kappa, anchor_radius, L):
    """Radius r with trig_coeff(kappa, anchor_radius + r) = L."""
    if kappa == 0:
        return math.inf
    hi = L / math.sqrt(kappa) + 1.0
    return optimize.brentq(lambda r: trig_coeff(kappa, anchor_radius + r) - L, 0.0, hi)


def make_karcher(manifold, anchors, weights=None, initial=None, optimum=None):
    """Weighted Karcher mean f(x) = 1/2 sum_i w_i d(x, p_i)^2 on a Hadamard manifold."""
    if isinstance(manifold, Sphere):
        raise DomainError('use make_sphere_mean for the sphere')
    anchors = [manifold.point(p) for p in anchors]
    if not anchors:
        raise DomainError('at least one anchor is required')
    w = _validated_weights(weights, len(anchors))
    center = reference_center(manifold, anchors)
    radii = [manifold.distance(center, p) for p in anchors]
    anchor_radius = max(radii)
    kappa = manifold.kappa
    L = trig_coeff(kappa, 2.0 * anchor_radius)
    objective, gradient = _mean_objective(manifold, anchors, w)
    if initial is None:
        initial = anchors[int(np.argmax(radii))]
    else:
        initial = manifold.point(initial)
    description = {'type': 'karcher', 'manifold': manifold.to_dict(),
                   'anchors': [p.coords.tolist() for p in anchors], 'weights': w.tolist(),
                   'initial': initial.coords.tolist()}

    def enlarge(problem):
        new_L = 2.0 * problem.L
        radius = _karcher_radius(kappa, anchor_radius, new_L)
        logger.warning('enlarging L from %.6g to %.6g (certified radius %.6g)', problem.L, new_L, radius)
        return Problem(manifold, objective, gradient, problem.mu, new_L, optimum=problem.optimum,
                       feasible_radius=radius, center=center, initial=problem.initial,
                       enlarge_fn=enlarge,
                       cache=dict(problem.cache))

    problem = Problem(manifold, objective, gradient, 1.0, L,
                      feasible_radius=math.inf if kappa == 0 else anchor_radius,
                      center=center, initial=initial, description=description, enlarge_fn=enlarge)
    if optimum is not None:
        problem.optimum = manifold.point(optimum)
    elif len(anchors) == 1:
        problem.optimum = anchors[0]
    else:
        problem.optimum = oracle_optimum(problem, start=center)
    return problem


def make_sphere_mean(manifold, anchors, weights=None, initial=None, mu_floor=None):
    """Weighted mean on Sphere(sigma), anchors strictly inside the ball of radius pi/(4 sqrt(sigma))."""
    if not isinstance(manifold, Sphere):
        raise DomainError('make_sphere_mean needs a Sphere manifold')
    mu_floor = Config.SPHERE_MU_FLOOR if mu_floor is None else mu_floor
    anchors = [manifold.point(p) for p in anchors]
    if not anchors:
        raise DomainError('at least one anchor is required')
    w = _validated_weights(weights, len(anchors))
    rs = math.sqrt(manifold.sigma)
    ball = math.pi / (4.0 * rs)
    center = reference_center(manifold, anchors)
    radii = [manifold.distance(center, p) for p in anchors]
    anchor_radius = max(radii)
    if anchor_radius >= ball:
        raise DomainError(f'anchors reach distance {anchor_radius:.6g}, outside the ball of radius {ball:.6g}')
    u = 2.0 * rs * anchor_radius
    mu = 1.0 if u == 0 else max(mu_floor, u / math.tan(u))
    objective, gradient = _mean_objective(manifold, anchors, w)
    initial = anchors[int(np.argmax(radii))] if initial is None else manifold.point(initial)
    description = {'type': 'sphere_mean', 'manifold': manifold.to_dict(),
                   'anchors': [p.coords.tolist() for p in anchors], 'weights': w.tolist(),
                   'initial': initial.coords.tolist()}
    problem = Problem(manifold, objective, gradient, mu, 1.0, feasible_radius=anchor_radius,
                      center=center, initial=initial, containment_radius=ball,
                      strict_containment=True, description=description)
    problem.optimum = anchors[0] if len(anchors) == 1 else oracle_optimum(problem, start=center)
    return problem


def oracle_optimum(problem, tol=None, start=None, max_iters=None):
    """Riemannian gradient descent with step 1/L until the gradient norm drops below tol."""
    tol = Config.ORACLE_TOL if tol is None else tol
    max_iters = Config.ORACLE_MAX_ITERS if max_iters is None else max_iters
    key = ('oracle', tol)
    if start is None and key in problem.cache:
        return problem.cache[key]
    m = problem.manifold
    x = problem.start() if start is None else start
    step = 1.0 / problem.L
    for it in range(max_iters):
        g = problem.gradient(x)
        gnorm = m.norm(x, g)
        if not math.isfinite(gnorm):
            raise ConvergenceError(f'oracle gradient became non-finite after {it} iterations')
        if gnorm <= tol:
            logger.debug('oracle converged in %d iterations (|grad| = %.3e)', it, gnorm)
            if start is None:
                problem.cache[key] = x
            return x
        x = m.exp(x, -step * g)
    raise ConvergenceError(f'oracle did not reach |grad| <= {tol:g} within {max_iters} iterations')


@dataclass
class AuditReport:
    max_rel_error: float
    convexity_violations: int
    smoothness_violations: int
    min_convexity_margin: float
    min_smoothness_margin: float
    n_points: int
    n_pairs: int

    @property
    def passed(self):
        return self.convexity_violations == 0 and self.smoothness_violations == 0


def audit_radius(problem):
    if math.isfinite(problem.feasible_radius):
        return problem.feasible_radius
    center = problem.center if problem.center is not None else problem.manifold.origin()
    return 1.0 + problem.manifold.distance(center, problem.start())


def gradient_audit(problem, n_points=100, seed=None, n_pairs=None, h=1e-5, tol=1e-9):
    """Finite-difference check of the gradient plus sampled convexity/smoothness inequalities."""
    m = problem.manifold
    rng = make_rng(seed)
    center = problem.center if problem.center is not None else m.origin()
    radius = audit_radius(problem)
    n_pairs = n_points if n_pairs is None else n_pairs

    worst = 0.0
    for _ in range(n_points):
        x = m.random_point(rng, center, radius)
        v = m.random_tangent(rng, x)
        fd = (problem.objective(m.exp(x, h * v)) - problem.objective(m.exp(x, -h * v))) / (2.0 * h)
        exact = m.inner(x, problem.gradient(x), v)
        worst = max(worst, abs(fd - exact) / max(1.0, abs(exact)))

    conv_bad = smooth_bad = 0
    conv_min = smooth_min = math.inf
    for _ in range(n_pairs):
        x = m.random_point(rng, center, radius)
        y = m.random_point(rng, center, radius)
        fx, fy = problem.objective(x), problem.objective(y)
        lin = fx + m.inner(x, problem.gradient(x), m.log(x, y))
        d2 = m.distance(x, y) ** 2
        slack = tol * (1.0 + abs(fy))
        conv = fy - lin - 0.5 * problem.mu * d2
        smooth = lin + 0.5 * problem.L * d2 - fy
        conv_min, smooth_min = min(conv_min, conv), min(smooth_min, smooth)
        conv_bad += conv < -slack
        smooth_bad += smooth < -slack
    report = AuditReport(worst, int(conv_bad), int(smooth_bad), conv_min, smooth_min, n_points, n_pairs)
    logger.debug('gradient audit: %s', report)
    return report


def _random_anchors(m, rng, n, radius):
    return [m.random_point(rng, radius=radius).coords for _ in range(n)]


def build_problem(desc, seed=None):
    """Problem from its JSON description (see problem_to_dict)."""
    try:
        kind = desc['type']
        seed = desc.get('seed', seed)
        if kind == 'quadratic':
            return make_quadratic(int(desc['dim']), float(desc['mu']), float(desc['L']), seed=seed,
                                  H=desc.get('H'), c=desc.get('c'), initial=desc.get('initial'))
        m = manifold_from_dict(desc['manifold'])
        anchors = desc.get('anchors')
        if anchors is None:
            default_radius = math.pi / (8.0 * math.sqrt(m.sigma)) if isinstance(m, Sphere) else 1.0
            anchors = _random_anchors(m, make_rng(seed), int(desc.get('n_anchors', 5)),
                                      float(desc.get('radius', default_radius)))
        if kind == 'karcher':
            return make_karcher(m, anchors, desc.get('weights'), initial=desc.get('initial'))
        if kind == 'sphere_mean':
            return make_sphere_mean(m, anchors, desc.get('weights'), initial=desc.get('initial'))
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, DomainError):
            raise
        raise ConfigError(f'malformed problem description: {e}') from e
    raise ConfigError(f'unknown problem type {kind!r}')


def problem_to_dict(problem):
    """Explicit description that rebuilds the same instance without a seed."""
    desc = dict(problem.description)
    desc.pop('seed', None)
    return desc

