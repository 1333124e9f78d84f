"""Manifolds the solvers run on: Euclidean, hyperbolic, SPD and sphere.

Points and tangent vectors are immutable value objects over flat numpy
coordinates. A tangent vector carries its base point; combining vectors from
different tangent spaces is a DomainError.
"""
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from config import Config
from modules.distortion import sinhc
from modules.errors import AntipodalError, ConvergenceError, DomainError, InjectivityError

logger = logging.getLogger(__name__)

MEMBERSHIP_TOL = 1e-9
SYMMETRY_TOL = 1e-12
SPD_EIGEN_FLOOR = 1e-12


def _frozen(coords):
    arr = np.array(coords, dtype=float).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ManifoldPoint:
    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'coords', _frozen(self.coords))

    def __len__(self):
        return len(self.coords)

    def __repr__(self):
        return f'ManifoldPoint({np.array2string(self.coords, precision=6)})'


def same_point(p, q):
    if p is q:
        return True
    if p.coords.shape != q.coords.shape:
        return False
    scale = 1.0 + float(np.max(np.abs(p.coords), initial=0.0))
    return bool(np.max(np.abs(p.coords - q.coords), initial=0.0) <= 1e-12 * scale)


@dataclass(frozen=True, eq=False)
class TangentVector:
    base: ManifoldPoint
    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'coords', _frozen(self.coords))
        if self.coords.shape != self.base.coords.shape:
            raise DomainError('tangent coordinates do not match the base point dimension')

    def _same_space(self, other):
        if not same_point(self.base, other.base):
            raise DomainError('tangent vectors live in different tangent spaces')

    def __add__(self, other):
        self._same_space(other)
        return TangentVector(self.base, self.coords + other.coords)

    def __sub__(self, other):
        self._same_space(other)
        return TangentVector(self.base, self.coords - other.coords)

    def __neg__(self):
        return TangentVector(self.base, -self.coords)

    def __mul__(self, scalar):
        return TangentVector(self.base, float(scalar) * self.coords)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return TangentVector(self.base, self.coords / float(scalar))

    def is_finite(self):
        return bool(np.all(np.isfinite(self.coords)))


class Manifold(ABC):
    """Common interface; subclasses supply the ambient-coordinate formulas."""

    kind = None

    def __init__(self, dim):
        if int(dim) < 1:
            raise DomainError(f'dimension must be positive, got {dim!r}')
        self.dim = int(dim)

    # curvature bounds: sectional curvature lies in [-kappa, sigma]
    kappa = 0.0
    sigma = 0.0

    @property
    def hadamard(self):
        return self.sigma == 0.0

    @property
    def ambient_dim(self):
        return self.dim

    # --- formulas on raw coordinates ---

    @abstractmethod
    def _exp(self, x, v):
        ...

    @abstractmethod
    def _log(self, x, y):
        ...

    @abstractmethod
    def _dist(self, x, y):
        ...

    @abstractmethod
    def _inner(self, x, u, v):
        ...

    def _project_tangent(self, x, u):
        return u

    def _membership_error(self, x):
        """Return a message when x is not on the manifold, else None."""
        return None

    def _tangent_error(self, x, v):
        return None

    @abstractmethod
    def origin_coords(self):
        ...

    # --- public operations ---

    def point(self, coords):
        p = coords if isinstance(coords, ManifoldPoint) else ManifoldPoint(coords)
        self.check_point(p)
        return p

    def tangent(self, base, coords):
        v = TangentVector(base, coords)
        self.check_tangent(v)
        return v

    def check_point(self, p):
        if p.coords.shape != (self.ambient_dim,):
            raise DomainError(f'{self.kind} point needs {self.ambient_dim} coordinates, got {p.coords.shape}')
        if not np.all(np.isfinite(p.coords)):
            raise DomainError('point has non-finite coordinates')
        problem = self._membership_error(p.coords)
        if problem:
            raise DomainError(problem)

    def check_tangent(self, v):
        problem = self._tangent_error(v.base.coords, v.coords)
        if problem:
            raise DomainError(problem)

    def _check_base(self, x, v):
        if not same_point(v.base, x):
            raise DomainError('tangent vector is not based at the given point')

    def origin(self):
        return ManifoldPoint(self.origin_coords())

    def zero(self, x):
        return TangentVector(x, np.zeros_like(x.coords))

    def exp(self, x, v):
        self._check_base(x, v)
        if not np.any(v.coords):
            return x
        return ManifoldPoint(self._exp(x.coords, v.coords))

    def log(self, x, y):
        if x is y:
            return self.zero(x)
        return TangentVector(x, self._log(x.coords, y.coords))

    def distance(self, x, y):
        if x is y:
            return 0.0
        return float(self._dist(x.coords, y.coords))

    def inner(self, x, u, v):
        self._check_base(x, u)
        self._check_base(x, v)
        return float(self._inner(x.coords, u.coords, v.coords))

    def norm(self, x, v):
        return math.sqrt(max(self.inner(x, v, v), 0.0))

    def projected_distance(self, u, v, w):
        """Norm of log(u, v) - log(u, w) in the tangent space at u."""
        return self.norm(u, self.log(u, v) - self.log(u, w))

    def angle(self, x, y, z):
        """Angle at x of the geodesic triangle (x, y, z)."""
        a, b = self.log(x, y), self.log(x, z)
        na, nb = self.norm(x, a), self.norm(x, b)
        if na == 0 or nb == 0:
            return 0.0
        c = self.inner(x, a, b) / (na * nb)
        return math.acos(min(1.0, max(-1.0, c)))

    def random_tangent(self, rng, x, length=1.0):
        """Uniformly oriented tangent vector at x with the given norm."""
        while True:
            u = self._project_tangent(x.coords, rng.standard_normal(self.ambient_dim))
            n = math.sqrt(max(self._inner(x.coords, u, u), 0.0))
            if n > 1e-12:
                return TangentVector(x, u * (length / n))

    def random_point(self, rng, center=None, radius=1.0):
        """Point at geodesic distance at most radius from center (default origin)."""
        center = self.origin() if center is None else center
        return self.exp(center, self.random_tangent(rng, center, radius * rng.uniform()))

    def to_dict(self):
        return {'kind': self.kind, 'dim': self.dim}

    def __repr__(self):
        params = ', '.join(f'{k}={v}' for k, v in self.to_dict().items() if k != 'kind')
        return f'{type(self).__name__}({params})'


class Euclidean(Manifold):
    kind = 'euclidean'

    def _exp(self, x, v):
        return x + v

    def _log(self, x, y):
        return y - x

    def _dist(self, x, y):
        return np.linalg.norm(y - x)

    def _inner(self, x, u, v):
        return u @ v

    def origin_coords(self):
        return np.zeros(self.dim)


class Hyperbolic(Manifold):
    """Hyperboloid model {x : <x,x>_L = -1/kappa, x_n > 0}, last coordinate time-like."""

    kind = 'hyperbolic'

    def __init__(self, dim, kappa=1.0):
        super().__init__(dim)
        if not kappa > 0:
            raise DomainError(f'hyperbolic curvature magnitude must be positive, got {kappa!r}')
        self.kappa = float(kappa)

    @property
    def ambient_dim(self):
        return self.dim + 1

    @staticmethod
    def minkowski(u, v):
        return float(u[:-1] @ v[:-1] - u[-1] * v[-1])

    def _reproject(self, x):
        x = np.array(x, dtype=float)
        x[-1] = math.sqrt(1.0 / self.kappa + float(x[:-1] @ x[:-1]))
        return x

    def _membership_error(self, x):
        scale = max(1.0, x[-1] ** 2)
        residual = abs(self.minkowski(x, x) + 1.0 / self.kappa)
        if residual > MEMBERSHIP_TOL * scale or x[-1] <= 0:
            return f'point is off the hyperboloid (residual {residual:.3e})'
        return None

    def _tangent_error(self, x, v):
        scale = max(1.0, float(np.linalg.norm(x) * np.linalg.norm(v)))
        residual = abs(self.minkowski(x, v))
        if residual > MEMBERSHIP_TOL * scale:
            return f'vector is not tangent to the hyperboloid (residual {residual:.3e})'
        return None

    def _project_tangent(self, x, u):
        return u + self.kappa * self.minkowski(x, u) * x

    def _inner(self, x, u, v):
        return self.minkowski(u, v)

    def _exp(self, x, v):
        theta = math.sqrt(self.kappa * max(self.minkowski(v, v), 0.0))
        return self._reproject(math.cosh(theta) * x + sinhc(theta) * v)

    def _dist(self, x, y):
        diff = x - y
        chord = math.sqrt(max(self.minkowski(diff, diff), 0.0))
        rk = math.sqrt(self.kappa)
        return 2.0 / rk * math.asinh(rk * chord / 2.0)

    def _log(self, x, y):
        d = self._dist(x, y)
        if d == 0.0:
            return np.zeros_like(x)
        u = self._project_tangent(x, y + self.kappa * self.minkowski(x, y) * x)
        nu = math.sqrt(max(self.minkowski(u, u), 0.0))
        if nu == 0.0:
            return np.zeros_like(x)
        return (d / nu) * u

    def origin_coords(self):
        x = np.zeros(self.ambient_dim)
        x[-1] = 1.0 / math.sqrt(self.kappa)
        return x

    def lift(self, spatial):
        """Point of the hyperboloid with the given spatial coordinates."""
        return ManifoldPoint(self._reproject(np.append(np.asarray(spatial, dtype=float), 0.0)))

    def to_dict(self):
        return {'kind': self.kind, 'dim': self.dim, 'kappa': self.kappa}


class SPD(Manifold):
    """n x n symmetric positive definite matrices with the affine-invariant metric.

    Coordinates are the row-major flattening of the matrix.
    """

    kind = 'spd'

    def __init__(self, dim, kappa=None):
        super().__init__(dim)
        self.kappa = float(Config.SPD_KAPPA if kappa is None else kappa)
        if not self.kappa > 0:
            raise DomainError(f'SPD curvature bound must be positive, got {self.kappa!r}')

    @property
    def ambient_dim(self):
        return self.dim * self.dim

    def matrix(self, coords):
        return np.asarray(coords, dtype=float).reshape(self.dim, self.dim)

    @staticmethod
    def _sym(a):
        return 0.5 * (a + a.T)

    def _eigh(self, a):
        try:
            w, v = np.linalg.eigh(self._sym(a))
        except np.linalg.LinAlgError as e:
            raise ConvergenceError(f'symmetric eigendecomposition failed: {e}') from e
        return w, v

    def _roots(self, x):
        w, v = self._eigh(self.matrix(x))
        if w[0] <= SPD_EIGEN_FLOOR:
            raise DomainError(f'matrix is not positive definite (smallest eigenvalue {w[0]:.3e})')
        s = np.sqrt(w)
        return (v * s) @ v.T, (v / s) @ v.T

    def _apply(self, a, fn):
        w, v = self._eigh(a)
        return (v * fn(w)) @ v.T

    def _membership_error(self, x):
        m = self.matrix(x)
        scale = max(1.0, float(np.max(np.abs(m))))
        if np.max(np.abs(m - m.T)) > SYMMETRY_TOL * scale:
            return 'matrix is not symmetric'
        w = np.linalg.eigvalsh(self._sym(m))
        if w[0] <= SPD_EIGEN_FLOOR:
            return f'matrix is not positive definite (smallest eigenvalue {w[0]:.3e})'
        return None

    def _tangent_error(self, x, v):
        m = self.matrix(v)
        scale = max(1.0, float(np.max(np.abs(m))))
        if np.max(np.abs(m - m.T)) > SYMMETRY_TOL * scale:
            return 'tangent matrix is not symmetric'
        return None

    def _project_tangent(self, x, u):
        return self._sym(self.matrix(u)).reshape(-1)

    def _inner(self, x, u, v):
        xm = self.matrix(x)
        a = np.linalg.solve(xm, self.matrix(u))
        b = np.linalg.solve(xm, self.matrix(v))
        return np.trace(a @ b)

    def _exp(self, x, v):
        s, si = self._roots(x)
        inner = self._apply(si @ self.matrix(v) @ si, np.exp)
        return self._sym(s @ inner @ s).reshape(-1)

    def _log(self, x, y):
        s, si = self._roots(x)
        inner = self._apply(si @ self.matrix(y) @ si, np.log)
        return self._sym(s @ inner @ s).reshape(-1)

    def _dist(self, x, y):
        _, si = self._roots(x)
        w, _ = self._eigh(si @ self.matrix(y) @ si)
        if w[0] <= 0:
            raise DomainError('matrix is not positive definite')
        return math.sqrt(float(np.sum(np.log(w) ** 2)))

    def origin_coords(self):
        return np.eye(self.dim).reshape(-1)

    def to_dict(self):
        return {'kind': self.kind, 'dim': self.dim, 'kappa': self.kappa}


class Sphere(Manifold):
    """Sphere of radius 1/sqrt(sigma) in R^(n+1), curvature exactly sigma."""

    kind = 'sphere'

    def __init__(self, dim, sigma=1.0):
        super().__init__(dim)
        if not sigma > 0:
            raise DomainError(f'sphere curvature must be positive, got {sigma!r}')
        self.sigma = float(sigma)
        self.radius = 1.0 / math.sqrt(self.sigma)

    @property
    def ambient_dim(self):
        return self.dim + 1

    @property
    def injectivity_radius(self):
        return math.pi / math.sqrt(self.sigma)

    def _reproject(self, x):
        return x * (self.radius / np.linalg.norm(x))

    def _membership_error(self, x):
        residual = abs(float(np.linalg.norm(x)) - self.radius)
        if residual > MEMBERSHIP_TOL * max(1.0, self.radius):
            return f'point is off the sphere (residual {residual:.3e})'
        return None

    def _tangent_error(self, x, v):
        scale = max(1.0, float(np.linalg.norm(x) * np.linalg.norm(v)))
        residual = abs(float(x @ v))
        if residual > MEMBERSHIP_TOL * scale:
            return f'vector is not tangent to the sphere (residual {residual:.3e})'
        return None

    def _project_tangent(self, x, u):
        return u - self.sigma * float(x @ u) * x

    def _inner(self, x, u, v):
        return u @ v

    def _exp(self, x, v):
        nv = float(np.linalg.norm(v))
        if nv >= self.injectivity_radius:
            raise InjectivityError(f'|v| = {nv:.6g} reaches the injectivity radius {self.injectivity_radius:.6g}')
        theta = math.sqrt(self.sigma) * nv
        return self._reproject(math.cos(theta) * x + float(np.sinc(theta / math.pi)) * v)

    def _dist(self, x, y):
        return self.radius * 2.0 * math.atan2(np.linalg.norm(x - y), np.linalg.norm(x + y))

    def _log(self, x, y):
        if np.linalg.norm(x + y) <= MEMBERSHIP_TOL * self.radius:
            raise AntipodalError('log is undefined between antipodal points')
        d = self._dist(x, y)
        if d == 0.0:
            return np.zeros_like(x)
        u = self._project_tangent(x, y - self.sigma * float(x @ y) * x)
        nu = float(np.linalg.norm(u))
        if nu == 0.0:
            return np.zeros_like(x)
        return (d / nu) * u

    def origin_coords(self):
        x = np.zeros(self.ambient_dim)
        x[-1] = self.radius
        return x

    def to_dict(self):
        return {'kind': self.kind, 'dim': self.dim, 'sigma': self.sigma}


MANIFOLDS = {cls.kind: cls for cls in (Euclidean, Hyperbolic, SPD, Sphere)}


def manifold_from_dict(data):
    try:
        cls = MANIFOLDS[data['kind']]
    except KeyError as e:
        raise DomainError(f'unknown manifold description {data!r}') from e
    params = {k: v for k, v in data.items() if k != 'kind'}
    return cls(**params)


# module-level forms of the manifold operations

def exp(m, x, v):
    return m.exp(x, v)


def log(m, x, y):
    return m.log(x, y)


def distance(m, x, y):
    return m.distance(x, y)


def inner(m, x, u, v):
    return m.inner(x, u, v)


def norm(m, x, v):
    return m.norm(x, v)


def projected_distance(m, u, v, w):
    return m.projected_distance(u, v, w)
