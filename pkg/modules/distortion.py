"""Metric-distortion factors and valid distortion rates.

All functions here are scalar and pure. Near r = 0 the closed forms are 0/0, so
``sinhc`` and ``xcothx`` switch to their 6th-order Taylor series below
``SERIES_CUTOFF``; at the switch point both branches agree to ~1e-13.
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import optimize

from modules.errors import DomainError

logger = logging.getLogger(__name__)

SERIES_CUTOFF = 1e-4

# epsilon grid for the inner minimisation of t_kappa_hat
_EPS_GRID = np.logspace(-4, 2, 241)


class RateSource(str, Enum):
    RAUCH_S = 'rauch_S'
    IMPROVED_T = 'improved_T'
    EPSILON_OPT_T_HAT = 'epsilon_opt_That'
    NONHADAMARD = 'nonhadamard'
    CONSTANT = 'constant'


@dataclass(frozen=True)
class DistortionRate:
    value: float
    source: RateSource

    def __post_init__(self):
        if not self.value >= 1.0:
            raise DomainError(f'distortion rate must be >= 1, got {self.value!r}')

    def __float__(self):
        return float(self.value)


def sinhc(u):
    """sinh(u)/u, equal to 1 at u = 0."""
    u = float(u)
    if abs(u) < SERIES_CUTOFF:
        u2 = u * u
        return 1.0 + u2 / 6.0 + u2 * u2 / 120.0 + u2 * u2 * u2 / 5040.0
    with np.errstate(over='ignore'):
        return float(np.sinh(u) / u)


def xcothx(u):
    """u/tanh(u), equal to 1 at u = 0."""
    u = float(u)
    if abs(u) < SERIES_CUTOFF:
        u2 = u * u
        return 1.0 + u2 / 3.0 - u2 * u2 / 45.0 + 2.0 * u2 * u2 * u2 / 945.0
    return float(u / np.tanh(u))


def _check_nonneg(**values):
    for name, value in values.items():
        if not value >= 0:
            raise DomainError(f'{name} must be nonnegative, got {value!r}')


def s_kappa(kappa, r):
    """Rauch distortion factor (sinh(sqrt(kappa) r) / (sqrt(kappa) r))^2."""
    _check_nonneg(kappa=kappa, r=r)
    return sinhc(math.sqrt(kappa) * r) ** 2


def trig_coeff(kappa, c):
    """Coefficient sqrt(kappa) c / tanh(sqrt(kappa) c) of the trigonometric inequality."""
    _check_nonneg(kappa=kappa, c=c)
    return xcothx(math.sqrt(kappa) * c)


def _t_branches(u, eps):
    # u = sqrt(kappa) * r; eps may be an array
    eps = np.asarray(eps, dtype=float)
    first = 1.0 + (1.0 + 1.0 / eps) ** 2 * (xcothx(u) - 1.0)
    s = (1.0 + eps) * u
    with np.errstate(over='ignore'):
        second = np.where(s < SERIES_CUTOFF,
                          (1.0 + s * s / 6.0) ** 2,
                          (np.sinh(s) / np.where(s == 0, 1.0, s)) ** 2)
    return np.maximum(first, second)


def t_kappa(kappa, r):
    """Improved distortion factor T_kappa(r); 1 at r = 0."""
    _check_nonneg(kappa=kappa, r=r)
    if r == 0 or kappa == 0:
        return 1.0
    u = math.sqrt(kappa) * r
    return max(1.0 + 4.0 * (xcothx(u) - 1.0), sinhc(2.0 * u) ** 2)


def t_kappa_hat(kappa, r):
    """T_kappa with the free epsilon optimised instead of fixed to 1.

    Log-spaced grid over epsilon, then golden-section refinement inside the
    bracket around the grid minimum. The objective is the max of a decreasing
    and an increasing function of epsilon, so it is unimodal.
    """
    _check_nonneg(kappa=kappa, r=r)
    if r == 0 or kappa == 0:
        return 1.0
    u = math.sqrt(kappa) * r
    values = _t_branches(u, _EPS_GRID)
    i = int(np.argmin(values))
    best = min(float(values[i]), t_kappa(kappa, r))
    if 0 < i < len(_EPS_GRID) - 1:
        bracket = (_EPS_GRID[i - 1], _EPS_GRID[i], _EPS_GRID[i + 1])
        try:
            res = optimize.minimize_scalar(lambda e: float(_t_branches(u, e)),
                                           bracket=bracket, method='golden',
                                           tol=1e-12)
            if res.x > 0:
                best = min(best, float(res.fun))
        except ValueError:
            logger.debug('golden-section bracket rejected at r=%g; keeping grid minimum', r)
    return max(best, 1.0)


def valid_rate_hadamard(kappa, d_xz):
    """Algorithm rate T_kappa(d(x_t, z_t)) for Hadamard manifolds."""
    return DistortionRate(t_kappa(kappa, d_xz), RateSource.IMPROVED_T)


def valid_rate_sharp(kappa, d_xz):
    return DistortionRate(t_kappa_hat(kappa, d_xz), RateSource.EPSILON_OPT_T_HAT)


def valid_rate_rauch(kappa, d_xz, d_xopt):
    """Rauch-based rate; needs d(x_t, x_*), so only usable when the optimum is known."""
    return DistortionRate(s_kappa(kappa, max(d_xz, d_xopt)), RateSource.RAUCH_S)


def valid_rate_nonhadamard(kappa, d_xz, d_yz, *, sigma=1.0, within_domain=True):
    """T_kappa(d(x_t,z_t)) * (1 + 2 sigma d(y_t,z_t)^2) for positively curved domains.

    sigma = 1 gives the plain factor (1 + 2 d(y_t,z_t)^2); other curvatures enter
    through the rescaled distance sqrt(sigma) d.

    ``within_domain`` is the caller's report that the iterates stay inside the
    uniquely geodesic ball of diameter pi / (2 sqrt(sigma)).
    """
    if not within_domain:
        raise DomainError('iterates left the uniquely geodesic domain of diameter pi/(2 sqrt(sigma))')
    _check_nonneg(d_yz=d_yz, sigma=sigma)
    value = t_kappa(kappa, d_xz) * (1.0 + 2.0 * sigma * d_yz ** 2)
    return DistortionRate(value, RateSource.NONHADAMARD)


def constant_rate(delta):
    return DistortionRate(float(delta), RateSource.CONSTANT)
