"""Scalar dynamics of the shrinking ratio xi.

The step map solves xi (xi - a) / (1 - xi) = xi_t^2 / delta in closed form.
Every root here is written so the subtraction inside ``sqrt(b^2 + c) - b``
never cancels: when ``b`` is positive the conjugate form is used instead.
"""
import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

from modules.distortion import t_kappa
from modules.errors import DomainError, HypothesisError

logger = logging.getLogger(__name__)

# 4 / (5 + sqrt(5)), the slope constant of the contraction bound
CONTRACTION_SLOPE = 4.0 / (5.0 + math.sqrt(5.0))

_BELOW_ONE = math.nextafter(1.0, 0.0)


@dataclass(frozen=True)
class XiParams:
    a: float
    delta: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.a < 1.0:
            raise DomainError(f'a must lie in (0, 1), got {self.a!r}')
        if not self.delta >= 1.0:
            raise DomainError(f'delta must be >= 1, got {self.delta!r}')


GAP_SLACK = 1e-12


class GapBound(NamedTuple):
    value: float
    bound: float

    @property
    def holds(self):
        return -GAP_SLACK <= self.value <= self.bound + GAP_SLACK


def _positive_root(b, c):
    """Positive root of v^2 + b v - c = 0 for c >= 0."""
    disc = math.hypot(b, 2.0 * math.sqrt(c))
    if b > 0:
        return 2.0 * c / (disc + b) if c > 0 else 0.0
    return 0.5 * (disc - b)


def solve_xi(rhs, a):
    """Return v in [a, 1) with v (v - a) / (1 - v) = rhs."""
    if not rhs >= 0:
        raise DomainError(f'right-hand side must be nonnegative, got {rhs!r}')
    if not 0.0 <= a < 1.0:
        raise DomainError(f'a must lie in [0, 1), got {a!r}')
    v = _positive_root(rhs - a, rhs)
    return min(max(v, a), _BELOW_ONE)


def next_xi(xi_t, p):
    if not xi_t >= 0:
        raise DomainError(f'xi must be nonnegative, got {xi_t!r}')
    return solve_xi(xi_t * xi_t / p.delta, p.a)


def recursion_residual(xi_next, xi_t, p):
    return xi_next * (xi_next - p.a) / (1.0 - xi_next) - xi_t * xi_t / p.delta


def fixed_point_xi(p):
    """Unique fixed point xi(delta) of the step map; sqrt(a) at delta = 1."""
    # xi^2 + (delta - 1) xi - delta a = 0
    return _positive_root(p.delta - 1.0, p.delta * p.a)


def contraction_factor(p):
    rd = math.sqrt(p.delta)
    return (1.0 - CONTRACTION_SLOPE * p.a / rd) / rd


def theta(v, a):
    """Derivative of the delta = 1 step map at v."""
    w = v * v - a
    return (v * w + 2.0 * v) / math.sqrt(w * w + 4.0 * v * v) - v


def tau_prime(v, p):
    rd = math.sqrt(p.delta)
    return theta(v / rd, p.a) / rd


def iterate_xi(xi0, p, steps):
    """xi_0 .. xi_steps under a fixed delta."""
    xs = [float(xi0)]
    for _ in range(steps):
        xs.append(next_xi(xs[-1], p))
    return xs


def iterations_to_threshold(xi0, a, mu, L, delta_gamma=None):
    """Upper bound on the steps until xi_t <= sqrt(mu/L) with delta = 1.

    ``a`` defaults to 2 mu delta_gamma when passed as None.
    """
    if a is None:
        a = 2.0 * mu * delta_gamma
    target = math.sqrt(mu / L)
    if xi0 <= target:
        return 0
    s = math.sqrt(a)
    if s >= target:
        raise DomainError(f'sqrt(2 mu Delta) = {s:.6g} is not below sqrt(mu/L) = {target:.6g}; gamma L must differ from 1')
    lam = 1.0 - CONTRACTION_SLOPE * a
    count = math.log((xi0 - s) / (target - s)) / math.log(1.0 / lam)
    return max(0, math.ceil(count))


def max_gap_delta(a):
    return 1.0 + 3.0 / (1.0 + 1.0 / (2.0 * a))


def fixed_point_gap_bound(delta, a):
    """sqrt(a) - xi(delta) against (delta - 1) / 2 on its validity range."""
    if not 1.0 <= delta <= max_gap_delta(a):
        raise HypothesisError(f'delta = {delta!r} outside [1, {max_gap_delta(a):.6g}]')
    gap = math.sqrt(a) - fixed_point_xi(XiParams(a, delta))
    return GapBound(gap, (delta - 1.0) / 2.0)


def max_gap_radius(kappa, a):
    return math.sqrt(3.0 / (1.0 + 1.0 / (2.0 * a))) / (2.0 * math.sqrt(kappa))


def xi_gap_from_radius(kappa, r, a):
    """sqrt(a) - xi(T_kappa(r)) against kappa r^2 for r up to max_gap_radius."""
    if not kappa > 0:
        raise HypothesisError('the radius bound needs kappa > 0')
    if not 0.0 <= r <= max_gap_radius(kappa, a):
        raise HypothesisError(f'r = {r!r} outside [0, {max_gap_radius(kappa, a):.6g}]')
    gap = math.sqrt(a) - fixed_point_xi(XiParams(a, t_kappa(kappa, r)))
    return GapBound(gap, kappa * r * r)
