"""Kernel shapes and moment constants."""

import numpy as np
import pytest

from clustersmooth import KERNELS, eval_product, eval_univariate, get_kernel

from oracles import quad_constants

ALL_NAMES = sorted(KERNELS)


def test_epanechnikov_hand_values():
    k = get_kernel("epanechnikov")
    assert eval_univariate(k, 0.0) == 0.75
    assert eval_univariate(k, 1.5) == 0.0
    assert eval_univariate(k, 0.25) == pytest.approx(0.703125, abs=1e-15)


def test_product_hand_values():
    k = get_kernel("epanechnikov")
    assert eval_product(k, [0.0, 0.0]) == pytest.approx(0.5625, abs=1e-15)
    assert eval_product(k, [0.25, 0.0]) == pytest.approx(0.52734375, abs=1e-15)


def test_product_zero_when_any_coordinate_outside():
    for name in ALL_NAMES:
        k = get_kernel(name)
        u = np.zeros(3)
        u[1] = k.support_radius + 0.1
        assert eval_product(k, u) == 0.0


@pytest.mark.parametrize("name", ALL_NAMES)
def test_constants_match_quadrature(name):
    k = get_kernel(name)
    kappa2, r_k = quad_constants(name)
    assert k.kappa2 == pytest.approx(kappa2, abs=1e-10)
    assert k.r_k == pytest.approx(r_k, abs=1e-10)


@pytest.mark.parametrize("name", ALL_NAMES)
def test_unit_mass(name):
    k = get_kernel(name)
    u = np.linspace(-k.support_radius, k.support_radius, 200001)
    mass = np.trapezoid(eval_univariate(k, u), u)
    assert mass == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("name", ALL_NAMES)
def test_symmetry_bounds_support(name):
    k = get_kernel(name)
    rng = np.random.default_rng(3)
    u = rng.uniform(-2.0 * k.support_radius, 2.0 * k.support_radius, size=500)
    v = eval_univariate(k, u)
    assert np.array_equal(v, eval_univariate(k, -u))
    assert np.all(v >= 0.0)
    assert np.all(v <= k.upper_bound + 1e-15)
    outside = np.abs(u) > k.support_radius
    assert np.all(v[outside] == 0.0)


def test_exact_constants():
    epan = get_kernel("epanechnikov")
    assert (epan.kappa2, epan.r_k) == (0.2, 0.6)
    quartic = get_kernel("quartic")
    assert (quartic.kappa2, quartic.r_k) == (1.0 / 7.0, 5.0 / 7.0)


def test_unknown_kernel_rejected():
    with pytest.raises(KeyError, match="unknown kernel"):
        get_kernel("triangular")
