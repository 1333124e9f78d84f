import math

import numpy as np
import pytest

from modules.errors import AntipodalError, DomainError, InjectivityError
from modules.geometry import (SPD, Euclidean, Hyperbolic, ManifoldPoint, Sphere, TangentVector, distance, exp,
                              inner, log, manifold_from_dict, projected_distance)

MANIFOLDS = [
    (Euclidean(3), 5.0),
    (Hyperbolic(2, 1.0), 5.0),
    (Hyperbolic(3, 2.0), 3.0),
    (SPD(2), 2.0),
    (SPD(3), 2.0),
    (Sphere(2, 1.0), 2.5),
]
IDS = ['euclidean', 'hyperbolic', 'hyperbolic-k2', 'spd2', 'spd3', 'sphere']


def test_euclidean_exp_log():
    m = Euclidean(2)
    x, y = m.point([1.0, 2.0]), m.point([4.0, 1.0])
    assert np.allclose(exp(m, x, m.tangent(x, [3.0, -1.0])).coords, [4.0, 1.0])
    assert np.allclose(log(m, x, y).coords, [3.0, -1.0])


def test_hyperbolic_closed_forms():
    m = Hyperbolic(2, 1.0)
    x = m.origin()
    assert np.allclose(x.coords, [0.0, 0.0, 1.0])
    y = exp(m, x, m.tangent(x, [1.0, 0.0, 0.0]))
    assert np.allclose(y.coords, [math.sinh(1.0), 0.0, math.cosh(1.0)], atol=1e-12)
    assert np.allclose(log(m, x, y).coords, [1.0, 0.0, 0.0], atol=1e-8)
    assert distance(m, x, y) == pytest.approx(1.0, abs=1e-12)


def test_spd_distance_and_inner():
    m = SPD(2)
    eye = m.origin()
    e = math.e
    y = m.point([e, 0.0, 0.0, e])
    assert distance(m, eye, y) == pytest.approx(math.sqrt(2.0), abs=1e-10)
    u = m.tangent(eye, [1.0, 0.0, 0.0, 1.0])
    assert inner(m, eye, u, u) == pytest.approx(2.0)


def test_euclidean_inner_is_dot_product():
    m = Euclidean(2)
    x = m.origin()
    assert inner(m, x, m.tangent(x, [1.0, 0.0]), m.tangent(x, [0.0, 1.0])) == 0.0


@pytest.mark.parametrize('m', [entry[0] for entry in MANIFOLDS], ids=IDS)
def test_exp_of_zero_and_log_of_self(m, rng):
    x = m.random_point(rng, radius=1.0)
    assert exp(m, x, m.zero(x)) is x
    assert not np.any(log(m, x, x).coords)
    assert distance(m, x, x) == 0.0


def test_base_mismatch_is_rejected():
    m = Hyperbolic(2, 1.0)
    x = m.origin()
    y = m.lift([0.5, 0.0])
    v = m.random_tangent(np.random.default_rng(0), y)
    with pytest.raises(DomainError):
        m.exp(x, v)
    with pytest.raises(DomainError):
        m.inner(x, v, v)
    with pytest.raises(DomainError):
        _ = m.zero(x) + v


def test_membership_checks():
    with pytest.raises(DomainError):
        Hyperbolic(2, 1.0).point([0.0, 0.0, 2.0])
    with pytest.raises(DomainError):
        SPD(2).point([1.0, 0.5, 0.0, 1.0])
    with pytest.raises(DomainError):
        SPD(2).point([1.0, 0.0, 0.0, -1.0])
    with pytest.raises(DomainError):
        Sphere(2, 4.0).point([0.0, 0.0, 1.0])
    with pytest.raises(DomainError):
        Hyperbolic(2, 1.0).tangent(Hyperbolic(2, 1.0).origin(), [0.0, 0.0, 1.0])


def test_sphere_errors():
    m = Sphere(2, 1.0)
    x = m.origin()
    with pytest.raises(InjectivityError):
        m.exp(x, m.tangent(x, [math.pi, 0.0, 0.0]))
    with pytest.raises(AntipodalError):
        m.log(x, ManifoldPoint(-x.coords))


@pytest.mark.parametrize('m,max_len', MANIFOLDS, ids=IDS)
def test_roundtrip_and_radial_isometry(m, max_len, rng):
    for _ in range(25):
        x = m.random_point(rng, radius=1.0)
        v = m.random_tangent(rng, x, max_len * rng.uniform())
        y = exp(m, x, v)
        m.check_point(y)
        nv = m.norm(x, v)
        back = log(m, x, y)
        assert np.linalg.norm(back.coords - v.coords) <= 1e-7 * (1.0 + nv)
        assert distance(m, x, y) == pytest.approx(nv, abs=1e-8 * (1.0 + nv))


@pytest.mark.parametrize('m', [entry[0] for entry in MANIFOLDS], ids=IDS)
def test_distance_is_symmetric_and_satisfies_triangle_inequality(m, rng):
    for _ in range(25):
        x, y, z = (m.random_point(rng, radius=0.7) for _ in range(3))
        assert distance(m, x, y) == pytest.approx(distance(m, y, x), abs=1e-10)
        assert distance(m, x, z) <= distance(m, x, y) + distance(m, y, z) + 1e-10
        assert m.norm(x, log(m, x, y)) == pytest.approx(distance(m, x, y), abs=1e-8)


def test_projected_distance_is_dominated_on_hyperbolic_space(rng):
    m = Hyperbolic(3, 1.0)
    for _ in range(300):
        x, y, z = (m.random_point(rng, radius=1.5) for _ in range(3))
        assert projected_distance(m, x, y, z) <= distance(m, y, z) + 1e-9
        assert projected_distance(m, x, y, y) == 0.0
        assert projected_distance(m, x, x, z) == pytest.approx(distance(m, x, z), abs=1e-10)


def test_projected_distance_is_exact_in_euclidean_space(rng):
    m = Euclidean(4)
    x, y, z = (m.random_point(rng, radius=3.0) for _ in range(3))
    assert projected_distance(m, x, y, z) == pytest.approx(np.linalg.norm(y.coords - z.coords))


@pytest.mark.parametrize('m', [entry[0] for entry in MANIFOLDS], ids=IDS)
def test_mirror_step_identity(m, rng):
    for _ in range(20):
        u = m.random_point(rng, radius=0.5)
        x_star = m.random_point(rng, radius=0.5)
        v = m.random_tangent(rng, u, 0.4 * rng.uniform())
        g = m.random_tangent(rng, u, 0.4 * rng.uniform())
        s = rng.uniform(0.1, 1.0)
        z = m.exp(u, v - s * g)
        lhs = projected_distance(m, u, z, x_star) ** 2 - projected_distance(m, u, m.exp(u, v), x_star) ** 2
        rhs = s * s * m.inner(u, g, g) + 2.0 * s * m.inner(u, g, m.log(u, x_star) - v)
        assert lhs == pytest.approx(rhs, abs=1e-9)


def test_angle_of_right_triangle():
    m = Euclidean(2)
    x, y, z = m.point([0.0, 0.0]), m.point([1.0, 0.0]), m.point([0.0, 2.0])
    assert m.angle(x, y, z) == pytest.approx(math.pi / 2.0)


def test_manifold_from_dict():
    m = manifold_from_dict({'kind': 'hyperbolic', 'dim': 3, 'kappa': 2.0})
    assert isinstance(m, Hyperbolic) and m.ambient_dim == 4 and m.kappa == 2.0
    assert SPD(2).kappa == 0.5
    assert Sphere(2, 4.0).hadamard is False
    with pytest.raises(DomainError):
        manifold_from_dict({'kind': 'torus', 'dim': 2})


def test_tangent_vector_is_read_only():
    x = ManifoldPoint([1.0, 2.0])
    v = TangentVector(x, [0.5, 0.5])
    with pytest.raises(ValueError):
        v.coords[0] = 3.0
    assert np.allclose((2.0 * v - v / 2.0).coords, [0.75, 0.75])
