from fractions import Fraction

import numpy as np
import pytest
import sympy

from modules.expr_kernel import VARIABLES
from modules.profiles import LOG_SYMMETRIC, CutoffProfile, Profile


def test_alpha_reflection_identity():
    alpha = CutoffProfile.alpha(Fraction(1, 2))
    t = np.geomspace(1e-3, 1e3, 401)
    assert np.max(np.abs(alpha.evaluate(t) + alpha.evaluate(1 / t) - 1)) <= 1e-12


def test_alpha_reflection_identity_other_band():
    alpha = CutoffProfile.alpha(Fraction(1, 3))
    assert alpha.kind == LOG_SYMMETRIC
    assert alpha.c1 == 3
    t = np.geomspace(1e-2, 1e2, 101)
    assert np.max(np.abs(alpha.evaluate(t) + alpha.evaluate(1 / t) - 1)) <= 1e-12


def test_plateaus_are_exact(plateau):
    assert np.all(plateau.evaluate(np.array([0.0, 0.1, 0.25, 0.5])) == 1.0)
    assert np.all(plateau.evaluate(np.array([1.0, 1.5, 10.0])) == 0.0)


def test_transition_is_monotone(plateau):
    t = np.linspace(0.5, 1.0, 201)
    values = plateau.evaluate(t)
    assert np.all(np.diff(values) <= 0)
    assert 0 < plateau.evaluate(np.array([0.75]))[0] < 1


@pytest.mark.parametrize("order", [1, 2, 3])
def test_euler_derivatives_supported_in_transition(plateau, order):
    outside = np.concatenate([np.linspace(0.0, 0.5, 20), np.linspace(1.0, 3.0, 20)])
    assert np.all(plateau.evaluate(outside, order) == 0.0)
    inside = np.linspace(0.55, 0.95, 9)
    assert np.any(plateau.evaluate(inside, order) != 0.0)


@pytest.mark.parametrize("order", [0, 1, 2])
def test_euler_derivative_matches_finite_difference(plateau, order):
    t = np.linspace(0.56, 0.94, 7)
    h = 1e-6
    numeric = t * (plateau.evaluate(t + h, order) - plateau.evaluate(t - h, order)) / (2 * h)
    assert np.allclose(plateau.evaluate(t, order + 1), numeric, rtol=1e-5, atol=1e-7)


def test_symbolic_profile_plateaus_and_derivative(plateau):
    assert plateau.apply(sympy.Rational(1, 4)) == 1
    assert plateau.apply(sympy.Rational(3, 2)) == 0
    assert plateau.apply(sympy.Rational(1, 4), 2) == 0
    x = VARIABLES[0]
    derivative = sympy.diff(plateau.apply(x), x)
    assert sympy.simplify(derivative - plateau.apply(x, 1) / x) == 0
    assert isinstance(plateau.apply(x), Profile)


def test_interval_enclosure(plateau):
    enclosure = plateau.interval(0.6, 0.8)
    values = plateau.evaluate(np.linspace(0.6, 0.8, 21))
    assert float(enclosure.a) <= values.min() and values.max() <= float(enclosure.b)
    derivative = plateau.interval(0.6, 0.8, 1)
    assert float(derivative.a) == float("-inf")


def test_invalid_band_rejected():
    with pytest.raises(ValueError):
        CutoffProfile(Fraction(1), Fraction(1, 2))
