import math

import numpy as np
import pytest
from scipy import optimize

from modules.distortion import (SERIES_CUTOFF, DistortionRate, RateSource, constant_rate, s_kappa, sinhc,
                                t_kappa, t_kappa_hat, trig_coeff, valid_rate_hadamard, valid_rate_nonhadamard,
                                valid_rate_rauch, valid_rate_sharp, xcothx)
from modules.errors import DomainError
from modules.geometry import Hyperbolic
from modules.suites import distortion_suite


def test_s_kappa():
    assert s_kappa(1.0, 0.0) == 1.0
    assert s_kappa(0.0, 5.0) == 1.0
    assert s_kappa(1.0, 1.0) == pytest.approx(math.sinh(1.0) ** 2, abs=1e-6)
    assert s_kappa(1.0, 1.0) == pytest.approx(1.381098, abs=1e-6)


def test_trig_coeff():
    assert trig_coeff(2.0, 0.0) == 1.0
    assert trig_coeff(0.0, 3.0) == 1.0
    assert trig_coeff(1.0, 1.0) == pytest.approx(1.313035, abs=1e-6)


def test_t_kappa():
    assert t_kappa(1.0, 0.0) == 1.0
    assert t_kappa(0.0, 2.0) == 1.0
    assert t_kappa(1.0, 1.0) == pytest.approx(3.288527, abs=1e-5)


def test_t_kappa_hat_matches_dense_grid():
    assert t_kappa_hat(1.0, 0.0) == 1.0
    hat = t_kappa_hat(1.0, 1.0)
    assert 1.0 <= hat <= t_kappa(1.0, 1.0)

    def first(eps):
        return 1.0 + (1.0 + 1.0 / eps) ** 2 * (1.0 / math.tanh(1.0) - 1.0)

    def second(eps):
        return (np.sinh(1.0 + eps) / (1.0 + eps)) ** 2

    grid = np.linspace(1e-3, 10.0, 10_000)
    assert hat <= float(np.min(np.maximum(first(grid), second(grid)))) + 1e-12
    # the minimum sits where the decreasing and increasing branches cross
    crossing = optimize.brentq(lambda e: first(e) - second(e), 1e-3, 10.0, xtol=1e-14)
    assert hat == pytest.approx(second(crossing), abs=1e-4)


@pytest.mark.parametrize('kappa', [0.5, 1.0, 2.0])
def test_factors_are_monotone_in_r(kappa):
    rs = np.linspace(0.0, 3.0, 61)
    for fn in (s_kappa, trig_coeff, t_kappa, t_kappa_hat):
        values = [fn(kappa, r) for r in rs]
        assert all(b >= a - 1e-9 for a, b in zip(values, values[1:])), fn.__name__
    assert all(t_kappa_hat(kappa, r) <= t_kappa(kappa, r) + 1e-12 for r in rs)


def test_series_branch_is_continuous():
    for fn in (sinhc, xcothx):
        below = fn(SERIES_CUTOFF * (1.0 - 1e-9))
        above = fn(SERIES_CUTOFF * (1.0 + 1e-9))
        assert below == pytest.approx(above, abs=1e-12)
    assert sinhc(0.0) == 1.0 and xcothx(0.0) == 1.0


def test_small_radius_quadratic_bound():
    for kappa in (0.5, 1.0, 2.0):
        for r in np.linspace(0.0, 0.5 / math.sqrt(kappa), 40):
            assert t_kappa(kappa, r) <= 1.0 + 2.0 * kappa * r * r + 1e-12


def test_valid_rates():
    assert valid_rate_hadamard(1.0, 0.0).value == 1.0
    assert valid_rate_hadamard(0.0, 7.0).value == 1.0
    rate = valid_rate_hadamard(1.0, 1.0)
    assert rate.source is RateSource.IMPROVED_T and float(rate) == pytest.approx(3.288527, abs=1e-5)
    assert valid_rate_sharp(1.0, 1.0).value <= rate.value
    assert valid_rate_rauch(1.0, 0.2, 1.0).value == pytest.approx(s_kappa(1.0, 1.0))
    assert constant_rate(2.0).source is RateSource.CONSTANT


def test_nonhadamard_rate():
    assert valid_rate_nonhadamard(1.0, 0.0, 0.0).value == 1.0
    assert valid_rate_nonhadamard(1.0, 0.0, 0.5).value == pytest.approx(1.5)
    assert valid_rate_nonhadamard(1.0, 1.0, 0.5).value == pytest.approx(4.932791, abs=1e-5)
    with pytest.raises(DomainError):
        valid_rate_nonhadamard(1.0, 0.1, 0.1, within_domain=False)


def test_rate_below_one_is_rejected():
    with pytest.raises(DomainError):
        DistortionRate(0.99, RateSource.CONSTANT)
    with pytest.raises(DomainError):
        t_kappa(1.0, -0.1)


@pytest.mark.parametrize('kappa', [0.5, 1.0, 2.0])
def test_improved_distortion_inequality_on_random_triples(kappa, rng):
    m = Hyperbolic(2, kappa)
    checked = 0
    while checked < 200:
        x, y, z = (m.random_point(rng, radius=1.5) for _ in range(3))
        if max(m.distance(x, y), m.distance(x, z), m.distance(y, z)) > 3.0:
            continue
        pd = m.projected_distance(x, y, z)
        assert m.distance(y, z) ** 2 <= t_kappa(kappa, m.distance(x, y)) * pd * pd + 1e-8
        assert m.distance(y, z) ** 2 <= t_kappa_hat(kappa, m.distance(x, y)) * pd * pd + 1e-8
        checked += 1


def test_distortion_suite_covers_the_sphere_domain():
    report = distortion_suite(0, size=0.1)
    assert report.passed, [c for c in report.checks if not c.passed]
    [sphere] = [c for c in report.checks if c.name == 'non-Hadamard projection bound']
    assert sphere.samples == 2 * 50
