"""Accelerated and plain gradient solvers on a Problem.

Modes:
    euclid_nesterov      Nesterov's method with parameters from the potential argument
    ragd                 accelerated Riemannian gradient with adaptive distortion rate
    ragd_constant_delta  the same iteration with a fixed distortion rate
    rgd                  Riemannian gradient descent baseline

Each iteration computes the distortion rate from the current iterates, solves
for xi_{t+1}, derives (alpha, beta, eta) and takes the three-point step.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np

from config import Config
from modules.distortion import (DistortionRate, constant_rate, valid_rate_hadamard, valid_rate_nonhadamard,
                                valid_rate_rauch, valid_rate_sharp)
from modules.errors import CertifiedBallExit, DomainError, NonFiniteError, SolverAbort
from modules.geometry import Euclidean, ManifoldPoint, TangentVector
from modules.xi_solver import solve_xi

logger = logging.getLogger(__name__)

RATES = ('improved', 'sharp', 'rauch')


class SolverMode(str, Enum):
    EUCLID_NESTEROV = 'euclid_nesterov'
    RAGD = 'ragd'
    RAGD_CONSTANT_DELTA = 'ragd_constant_delta'
    RGD = 'rgd'


@dataclass(frozen=True)
class SolverConfig:
    mode: SolverMode
    mu: float
    L: float
    gamma: Optional[float] = None
    xi0: float = 1.0
    max_iters: int = 100
    record_diagnostics: bool = True
    optimum_hint: Optional[ManifoldPoint] = None
    # fixed rate for ragd_constant_delta
    delta_const: Optional[float] = None
    rate: str = 'improved'
    # added to beta every step; nonzero only for negative controls
    beta_offset: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'mode', SolverMode(self.mode))
        if self.gamma is None:
            factor = Config.RAGD_GAMMA_FACTOR if self.mode is SolverMode.RAGD else 1.0
            object.__setattr__(self, 'gamma', factor / self.L)
        if not (self.L > 0 and 0.0 <= self.mu <= self.L):
            raise DomainError(f'need 0 <= mu <= L and L > 0, got mu={self.mu!r}, L={self.L!r}')
        if not 0.0 < self.gamma < 2.0 / self.L:
            raise DomainError(f'gamma must lie in (0, 2/L), got {self.gamma!r}')
        if not self.xi0 > 0:
            raise DomainError(f'xi0 must be positive, got {self.xi0!r}')
        if int(self.max_iters) < 1:
            raise DomainError('max_iters must be positive')
        if self.rate not in RATES:
            raise DomainError(f'rate must be one of {RATES}, got {self.rate!r}')
        if self.mode is SolverMode.RAGD_CONSTANT_DELTA:
            if self.delta_const is None or not self.delta_const >= 1.0:
                raise DomainError('ragd_constant_delta needs delta_const >= 1')
        if self.mu == 0 and self.mode is not SolverMode.EUCLID_NESTEROV:
            raise DomainError('mu = 0 is only supported by euclid_nesterov')

    @property
    def delta_gamma(self):
        return self.gamma * (1.0 - self.L * self.gamma / 2.0)

    @property
    def a(self):
        return 2.0 * self.mu * self.delta_gamma

    def range_warnings(self):
        """Departures tolerated with a warning rather than an error."""
        notes = []
        if self.mode is SolverMode.RAGD:
            gl = self.gamma * self.L
            hi = 2.0 - math.sqrt(self.mu / self.L)
            if not 1.0 < gl <= hi:
                notes.append(f'gamma L = {gl:.6g} outside the full-acceleration window (1, {hi:.6g}]')
        return notes


class StepParams(NamedTuple):
    alpha: float
    beta: float
    eta: float
    xi: float


class SolverState(NamedTuple):
    x: ManifoldPoint
    y: ManifoldPoint
    z: ManifoldPoint
    xi: float
    A: float
    B: float
    t: int
    delta: DistortionRate


class TraceRow(NamedTuple):
    t: int
    f_gap: float
    xi: float
    delta_rate: float
    d_xz: float
    d_yz: float
    d_yopt: float
    potential: float
    decrease_margin: float


@dataclass
class ConvergenceTrace:
    config: SolverConfig
    rows: list = field(default_factory=list)
    # full iterates, kept when config.record_diagnostics is set
    states: list = field(default_factory=list)
    # params[t] produced state t+1
    params: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    optimum: Optional[ManifoldPoint] = None
    f_star: Optional[float] = None
    problem: object = None

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    @property
    def final_gap(self):
        return self.rows[-1].f_gap if self.rows else math.nan


def step_params(xi, mu, delta_gamma):
    a = 2.0 * mu * delta_gamma
    if not (a <= xi < 1.0 and xi > 0):
        raise DomainError(f'xi = {xi!r} outside [2 mu Delta, 1) = [{a:.6g}, 1)')
    alpha = (xi - a) / (1.0 - a)
    beta = 1.0 if a == 0 else 1.0 - a / xi
    return StepParams(alpha, beta, 2.0 * delta_gamma / xi, xi)


def _bookkeeping(state, params, delta_gamma):
    xi = params.xi
    A1 = state.A / (1.0 - xi)
    B1 = xi * xi / (1.0 - xi) * state.A / (4.0 * delta_gamma)
    return A1, B1


def _gradient_coords(g):
    coords = np.asarray(getattr(g, 'coords', g), dtype=float)
    if not np.all(np.isfinite(coords)):
        raise NonFiniteError('gradient has non-finite entries')
    return coords


def euclid_step(state, params, grad_oracle, config, delta=None):
    """x+ = y + alpha (z - y); y+ = x+ - gamma g; z+ = x+ + beta (z - x+) - eta g."""
    y, z = state.y.coords, state.z.coords
    x1 = ManifoldPoint(y + params.alpha * (z - y))
    g = _gradient_coords(grad_oracle(x1))
    y1 = ManifoldPoint(x1.coords - config.gamma * g)
    z1 = ManifoldPoint(x1.coords + params.beta * (z - x1.coords) - params.eta * g)
    A1, B1 = _bookkeeping(state, params, config.delta_gamma)
    return SolverState(x1, y1, z1, params.xi, A1, B1, state.t + 1, delta or constant_rate(1.0))


def ragd_step(state, params, problem, config, delta=None):
    """Three-point step with every tangent combination formed at x+."""
    m = problem.manifold
    x1 = m.exp(state.y, params.alpha * m.log(state.y, state.z))
    g = problem.gradient(x1)
    g = TangentVector(x1, _gradient_coords(g))
    y1 = m.exp(x1, -config.gamma * g)
    z1 = m.exp(x1, params.beta * m.log(x1, state.z) - params.eta * g)
    A1, B1 = _bookkeeping(state, params, config.delta_gamma)
    return SolverState(x1, y1, z1, params.xi, A1, B1, state.t + 1, delta or constant_rate(1.0))


def rgd_step(state, problem, config):
    m = problem.manifold
    g = TangentVector(state.y, _gradient_coords(problem.gradient(state.y)))
    y1 = m.exp(state.y, -config.gamma * g)
    a = config.a
    A1 = state.A / (1.0 - a)
    return SolverState(y1, y1, y1, a, A1, 0.0, state.t + 1, constant_rate(1.0))


def distortion_rate(state, problem, config, optimum=None):
    """delta_{t+1} from the iterates at time t."""
    if config.mode is SolverMode.RAGD_CONSTANT_DELTA:
        return constant_rate(config.delta_const)
    m = problem.manifold
    if config.mode is not SolverMode.RAGD or isinstance(m, Euclidean):
        return constant_rate(1.0)
    d_xz = m.distance(state.x, state.z)
    if not m.hadamard:
        d_yz = m.distance(state.y, state.z)
        diameter = math.pi / (2.0 * math.sqrt(m.sigma))
        inside = max(d_xz, d_yz, m.distance(state.x, state.y)) < diameter
        return valid_rate_nonhadamard(m.kappa, d_xz, d_yz, sigma=m.sigma, within_domain=inside)
    if config.rate == 'sharp':
        return valid_rate_sharp(m.kappa, d_xz)
    if config.rate == 'rauch':
        if optimum is None:
            raise DomainError('the Rauch rate needs a known optimum')
        return valid_rate_rauch(m.kappa, d_xz, m.distance(state.x, optimum))
    return valid_rate_hadamard(m.kappa, d_xz)


def _row(state, problem, optimum, f_value, f_star):
    m = problem.manifold
    d_xz = m.distance(state.x, state.z)
    d_yz = m.distance(state.y, state.z)
    if optimum is None:
        return TraceRow(state.t, math.nan, state.xi, state.delta.value, d_xz, d_yz, math.nan, math.nan, math.nan)
    gap = f_value - f_star
    pd = m.projected_distance(state.x, state.z, optimum)
    potential = state.A * gap + state.B * pd * pd
    return TraceRow(state.t, gap, state.xi, state.delta.value, d_xz, d_yz,
                    m.distance(state.y, optimum), potential, math.nan)


def _finish_rows(rows, f_values, known_optimum, rgd):
    if not known_optimum:
        best = min(f_values)
        rows = [r._replace(f_gap=f - best) for r, f in zip(rows, f_values)]
    if rgd:
        rows = [r._replace(potential=math.nan) for r in rows]
    out = []
    for i, r in enumerate(rows):
        margin = rows[i].potential - rows[i + 1].potential if i + 1 < len(rows) else math.nan
        out.append(r._replace(decrease_margin=margin))
    return out


def run(problem, config, check_containment=True):
    """Run config.max_iters iterations from x0 = y0 = z0 = problem.start()."""
    m = problem.manifold
    if config.mode is SolverMode.EUCLID_NESTEROV and not isinstance(m, Euclidean):
        raise DomainError('euclid_nesterov runs on Euclidean problems only')
    optimum = config.optimum_hint if config.optimum_hint is not None else problem.optimum
    f_star = float(problem.objective(optimum)) if optimum is not None else None
    dg, a = config.delta_gamma, config.a
    rgd = config.mode is SolverMode.RGD

    trace = ConvergenceTrace(config, optimum=optimum, f_star=f_star, problem=problem)
    for note in config.range_warnings():
        logger.warning(note)
        trace.warnings.append(note)

    x0 = problem.start()
    xi0 = a if rgd else config.xi0
    state = SolverState(x0, x0, x0, xi0, 1.0, 0.0 if rgd else xi0 * xi0 / (4.0 * dg), 0, constant_rate(1.0))
    f_values = [float(problem.objective(x0))]
    rows = [_row(state, problem, optimum, f_values[0], f_star)]
    if config.record_diagnostics:
        trace.states.append(state)

    for t in range(int(config.max_iters)):
        if rgd:
            state = rgd_step(state, problem, config)
        else:
            # x_0 = z_0, so the first rate is exactly 1
            delta = constant_rate(1.0) if t == 0 and config.mode is SolverMode.RAGD else \
                distortion_rate(state, problem, config, optimum)
            # B_t / A_t = xi_t^2 / (4 Delta), so the right-hand side never overflows with A_t
            xi = solve_xi(state.xi * state.xi / delta.value, a)
            if not (a <= xi < 1.0):
                raise SolverAbort(f'xi_{t + 1} = {xi!r} left [2 mu Delta, 1) = [{a:.6g}, 1)')
            params = step_params(xi, config.mu, dg)
            if config.beta_offset:
                params = params._replace(beta=params.beta + config.beta_offset)
            if config.mode is SolverMode.EUCLID_NESTEROV:
                state = euclid_step(state, params, problem.gradient, config, delta)
            else:
                state = ragd_step(state, params, problem, config, delta)
            trace.params.append(params)
        if check_containment:
            problem.check_containment(state.x, 'x_%d' % state.t)
            problem.check_containment(state.y, 'y_%d' % state.t)
        f_y = float(problem.objective(state.y))
        if not math.isfinite(f_y):
            raise NonFiniteError(f'objective is non-finite at y_{state.t}')
        f_values.append(f_y)
        rows.append(_row(state, problem, optimum, f_y, f_star))
        if config.record_diagnostics:
            trace.states.append(state)
        logger.debug('t=%d xi=%.6g delta=%.6g f=%.6e', state.t, state.xi, state.delta.value, f_y)

    trace.rows = _finish_rows(rows, f_values, optimum is not None, rgd)
    logger.info('%s: %d iterations, final gap %.3e', config.mode.value, config.max_iters, trace.final_gap)
    return trace


def run_with_containment(problem, config, retries=None):
    """run(), re-running with an enlarged L each time an iterate leaves the certified ball."""
    retries = Config.CONTAINMENT_RETRIES if retries is None else retries
    notes = []
    for attempt in range(retries + 1):
        try:
            trace = run(problem, config)
        except CertifiedBallExit as e:
            if attempt == retries:
                raise
            note = f'{e}; re-running with L = {2.0 * problem.L:.6g}'
            logger.warning(note)
            notes.append(note)
            old_L = problem.L
            problem = problem.enlarge()
            config = replace(config, L=problem.L, gamma=config.gamma * old_L / problem.L)
            continue
        trace.warnings = notes + trace.warnings
        return trace
