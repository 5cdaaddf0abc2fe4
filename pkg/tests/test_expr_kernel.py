from fractions import Fraction

import numpy as np
import pytest
import sympy

from modules.expr_kernel import (VARIABLES, Monomial, UnitPower, ZPolynomial, certify_unit, eval_many, eval_real,
                                 factor_monomial, interval_eval, pow_z_eval, subst_monomial)

x, y = VARIABLES
UNIT_BOX = ((Fraction(0), Fraction(1)),)


def test_monomial_arithmetic():
    m = Monomial((2, 1))
    assert m * Monomial((1, 0)) == Monomial((3, 1))
    assert m / Monomial((0, 2)) == Monomial((2, -1))
    assert (m ** 2).degree == 6
    assert Monomial((2, -1)).positive_part() == Monomial((2, 0))
    assert Monomial((2, -1)).negative_part() == Monomial((0, 1))
    assert Monomial((0, 3)).support == (1,)
    assert Monomial.one(2).is_constant


def test_monomial_substitution():
    images = (Monomial((1, 1)), Monomial((0, 1)))
    assert Monomial((1, 1)).subst(images) == Monomial((1, 2))
    assert Monomial((2, -1)).subst(images) == Monomial((2, 1))


def test_monomial_bounds():
    box = ((Fraction(1, 2), Fraction(1)), (Fraction(1, 4), Fraction(1)))
    lo, hi = Monomial((1, -1)).bounds(box)
    assert lo == pytest.approx(0.5)
    assert hi == pytest.approx(4.0)
    assert Monomial((0, -1)).bounds(((0, 1), (0, 1)))[1] == float("inf")


def test_factor_monomial():
    monomial, unit = factor_monomial(x**3 * y + x**2 * y**2, 2)
    assert monomial == Monomial((2, 1))
    assert sympy.expand(unit - (x + y)) == 0


def test_subst_monomial_rejects_negative_images():
    with pytest.raises(ValueError):
        subst_monomial(x + y, (Monomial((1, -1)), Monomial((0, 1))))


def test_certify_positive_and_negative_units():
    assert certify_unit(1 + x**2, UNIT_BOX).sign == 1
    assert certify_unit(x - 2, UNIT_BOX).sign == -1
    box = ((Fraction(0), Fraction(1)), (Fraction(0), Fraction(1)))
    assert certify_unit(1 + x * y + y**2, box).sign == 1


def test_certify_rejects_vanishing_expressions():
    assert certify_unit(x - Fraction(1, 2), UNIT_BOX) is None
    assert certify_unit(sympy.S.Zero, UNIT_BOX) is None


def test_certify_needs_bisection():
    # 1 - x + x^2/2 > 0 everywhere, but the naive enclosure on [0, 2] contains 0
    certificate = certify_unit(1 - x + x**2 / 2, ((Fraction(0), Fraction(2)),))
    assert certificate is not None and certificate.sign == 1
    assert certificate.boxes > 1


def test_interval_eval_encloses_range():
    box = ((Fraction(0), Fraction(1)), (Fraction(0), Fraction(1)))
    value = interval_eval(x * y - 1, box)
    assert float(value.a) <= -1 and float(value.b) >= 0


def test_zpolynomial_algebra():
    p = ZPolynomial.constant(x**2)
    q = p.times_z() + ZPolynomial.constant(1)
    assert q.degree == 1
    assert q.coeffs == (sympy.S.One, x**2)
    assert q.diff(0).coeffs == (sympy.S.Zero, 2 * x)
    assert ZPolynomial.constant(0).is_zero
    assert q.depends_on(0) and not q.depends_on(1)


def test_eval_many_with_profiles(plateau):
    points = [np.array([0.25, 0.75, 1.5])]
    values, = eval_many([x * plateau.apply(x)], points, 1)
    assert np.allclose(values, points[0] * plateau.evaluate(points[0]))


def test_pow_z_eval_branch():
    unit = UnitPower(x - 2, -1)
    assert pow_z_eval(unit, 0.5, [1.0], branch=1) == pytest.approx(1j)
    assert pow_z_eval(unit, 0.5, [1.0], branch=-1) == pytest.approx(-1j)
    assert pow_z_eval(UnitPower(1 + x), 2.0, [1.0]) == pytest.approx(4.0)


def test_pow_z_eval_phase_follows_the_sign_tag():
    assert pow_z_eval(UnitPower(sympy.S.One, -1), 1.0, [0.5]) == pytest.approx(-1.0)
    assert pow_z_eval(UnitPower(2 - x, -1), 0.5, [1.0]) == pytest.approx(1j)
    assert pow_z_eval(UnitPower(2 - x), 0.5, [1.0]) == pytest.approx(1.0)


def test_unit_log_magnitude():
    unit = UnitPower(x - 2, -1)
    values = unit.log_magnitude(1, [np.array([0.0, 1.0])])
    assert np.allclose(values, np.log([2.0, 1.0]))


@pytest.mark.parametrize("expr", [1 + x * y - y**2 / 4, x - 3 - y, 2 - x**2 + x * y, (x - 2) * (y + 1)])
def test_certified_sign_holds_at_random_points(expr):
    box = ((Fraction(0), Fraction(1)), (Fraction(0), Fraction(1)))
    certificate = certify_unit(expr, box)
    assert certificate is not None
    rng = np.random.default_rng(11)
    points = [rng.uniform(0, 1, 100), rng.uniform(0, 1, 100)]
    assert np.all(np.sign(eval_real(expr, points, 2)) == certificate.sign)


def test_subst_monomial_is_a_ring_homomorphism(plateau):
    images = (Monomial((1, 1)), Monomial((0, 2)))
    p, q = 1 + x * y, x - y**2 + sympy.Rational(3, 2) * plateau.apply(x * y)
    assert sympy.expand(subst_monomial(p * q, images)
                        - subst_monomial(p, images) * subst_monomial(q, images)) == 0
    assert sympy.expand(subst_monomial(p + q, images)
                        - subst_monomial(p, images) - subst_monomial(q, images)) == 0
