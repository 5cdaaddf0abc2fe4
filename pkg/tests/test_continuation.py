import time
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
import sympy
from scipy import integrate

from modules.continuation import (CASE1, CASE2, CASE3, ContinuationConfig, Prefactor, _Frontier, case1_bound,
                                  case3_split, classify, continuation_target, continue_problem, continue_to,
                                  derivative_split, equalize_powers, ibp_step, pole_catalog)
from modules.errors import CertificationError, ResourceError
from modules.expr_kernel import VARIABLES, Monomial
from modules.geometry import resolve
from modules.numerics import eval_F, quad_piece
from modules.profiles import CutoffProfile
from modules.quadrature import QuadConfig

x, y = VARIABLES


def test_prefactor_locations_and_value():
    prefactor = Prefactor().times(Fraction(2), Fraction(1)).times(Fraction(2), Fraction(1))
    assert prefactor.locations() == Counter({Fraction(-1, 2): 2})
    assert complex(prefactor.evaluate(1.0)) == pytest.approx(1 / 9)
    assert str(Prefactor()) == "1"


@pytest.mark.parametrize("exponents, case, bounded", [
    ((-1, -1), CASE1, (0, 1)),
    ((0, -1), CASE2, (1,)),
    ((1, -1), CASE3, (0, 1)),
])
def test_classify_wedges(make_piece, record, plateau, exponents, case, bounded):
    wedge = record(plateau, exponents, order=1)
    piece = make_piece([(1, 0), (1, 0)], [wedge])
    assert classify(piece, wedge) == (case, bounded)


def test_classify_one_dimensional_is_case1(make_piece, record, plateau):
    wedge = record(plateau, (1,), order=1)
    piece = make_piece([(2, 0)], [wedge])
    assert classify(piece, wedge)[0] == CASE1


def test_case1_bound_one_dimensional(make_piece, record, plateau):
    wedge = record(plateau, (1,), order=1)
    bounded = case1_bound(make_piece([(2, 0)], [wedge]), wedge)
    lo, hi = bounded.box[0]
    assert Fraction(49, 100) < lo <= Fraction(1, 2)
    assert hi == 1
    assert bounded.threshold() is None


def test_case1_bound_on_product(make_piece, record, plateau):
    wedge = record(plateau, (-1, -1), order=1)
    piece = make_piece([(1, 0), (1, 0)], [wedge], box=((0, 2), (0, 2)))
    bounded = case1_bound(piece, wedge)
    # 1/(xy) <= 1 on the support, so x >= 1/2 and y >= 1/2 with the other side at most 2
    assert all(Fraction(49, 100) < lo <= Fraction(1, 2) for lo, _ in bounded.box)
    points = np.linspace(float(bounded.box[0][0]) / 2, float(bounded.box[0][0]) * 0.999, 5)
    assert np.all(plateau.evaluate(1 / (points * 2.0), 1) == 0)


def test_case1_bound_needs_a_positive_factor(make_piece, record, plateau):
    # c = y touches 0 on the box, so the free side has no positive lower bound
    wedge = record(plateau, (-1, 0), order=1, c=y)
    with pytest.raises(CertificationError):
        case1_bound(make_piece([(1, 0), (1, 0)], [wedge]), wedge)


def test_derivative_split_arity(make_piece, record, plateau):
    cutoff = record(plateau, (1,))
    piece = make_piece([(2, 0)], [cutoff], unit=1 + x)
    children = derivative_split(piece, 0)
    assert [tag for tag, _ in children] == ["D-UNIT", "D-CUTOFF[0]"]
    unit_child = children[0][1]
    assert unit_child.exponents[0] == (2, 1)
    assert unit_child.smooth.coeffs[0] == 0
    assert sympy.simplify(unit_child.smooth.coeffs[1] - 1 / (1 + x)) == 0
    cutoff_child = children[1][1]
    assert cutoff_child.exponents[0] == (2, 0)
    assert cutoff_child.cutoffs[0].order == 1


def test_derivative_split_constant_is_empty(make_piece):
    assert derivative_split(make_piece([(1, 0)]), 0) == []


def test_derivative_factor_of_ratio(record, plateau):
    cutoff = record(plateau, (2, -1))
    assert cutoff.derivative_factor(0) == 2
    assert cutoff.derivative_factor(1) == -1
    scaled = record(plateau, (1, 0), c=1 + y)
    assert sympy.simplify(scaled.derivative_factor(1) - y / (1 + y)) == 0


def test_derivative_split_matches_finite_differences(make_piece, record, plateau):
    cutoff = record(plateau, (2, -1))
    piece = make_piece([(1, 0), (1, 0)], [cutoff], unit=1 + x + y, smooth=x + y**2)
    z, px, py = 0.7, 0.7, 0.7

    def body(u):
        return (1 + u + py) ** z * (u + py**2) * plateau.evaluate(np.array([u**2 / py]))[0]

    h = 1e-6
    numeric = (body(px + h) - body(px - h)) / (2 * h)
    total = 0.0
    for _, child in derivative_split(piece, 0):
        coeffs = [float(c.subs({x: px, y: py})) for c in reversed(child.smooth.coeffs)]
        # cutoff children keep b_j and carry the 1/x_j of the Euler derivative
        extra = 1 / px if child.exponents[0][1] == 0 else 1.0
        point = (np.array([px]), np.array([py]))
        total += np.polyval(coeffs, z) * (1 + px + py) ** z * child.cutoff_product(point)[0] * extra
    assert numeric != 0
    assert total == pytest.approx(numeric, rel=1e-6)


def test_ibp_rejects_zero_exponent(make_piece):
    with pytest.raises(ValueError):
        ibp_step(make_piece([(0, 0)]), 0)


def test_ibp_identity_on_cutoff_power(make_piece, record, plateau):
    piece = make_piece([(1, 0)], [record(plateau, (1,))])
    (a, b), children = ibp_step(piece, 0)
    assert (a, b) == (1, 1)
    assert len(children) == 1
    sign, tag, child = children[0]
    assert tag == "D-CUTOFF[0]"
    z = 1.0
    direct = quad_piece(piece, z)
    reference, _ = integrate.quad(lambda t: t * plateau.evaluate(np.array([t]))[0], 0, 1, points=[0.5],
                                  epsabs=0, epsrel=1e-12)
    assert direct.real == pytest.approx(reference, rel=1e-8)
    rewritten = float(sign) / (float(a) * z + float(b)) * quad_piece(child, z)
    assert rewritten.real == pytest.approx(reference, rel=1e-8)


def test_equalize_powers(make_piece, record, plateau):
    wedge = record(plateau, (1, -2), order=1)
    piece = make_piece([(1, 0), (1, 0)], [wedge])
    equalized = equalize_powers(piece, wedge)
    assert equalized.exponents == ((2, 1), (1, 0))
    assert equalized.cutoffs[0].ratio == Monomial((2, -2))
    assert equalized.smooth.coeffs == (2,)


def test_equalize_powers_identity(make_piece, record, plateau):
    wedge = record(plateau, (1, -1), order=1)
    piece = make_piece([(1, 0), (1, 0)], [wedge])
    assert equalize_powers(piece, wedge) is piece


def test_equalize_powers_preserves_integral(make_piece):
    piece = make_piece([(1, 0)])
    rescaled = make_piece([(2, 1)], smooth=2)
    z = 0.4 + 0.3j
    assert quad_piece(piece, z) == pytest.approx(1 / (z + 1), rel=1e-9)
    assert quad_piece(rescaled, z) == pytest.approx(1 / (z + 1), rel=1e-9)


def test_case3_split_conserves_integral(make_piece, record, plateau):
    alpha = CutoffProfile.alpha(Fraction(1, 2))
    wedge = record(plateau, (1, -1), order=1)
    piece = make_piece([(1, 0), (1, 0)], [record(plateau, (1, 0)), record(plateau, (0, 1)), wedge])
    first, second = case3_split(piece, 0, 1, alpha)
    z = 1.5

    def parent(px, py):
        return (px * py) ** z * (plateau.evaluate(np.array([px]))[0] * plateau.evaluate(np.array([py]))[0]
                                 * plateau.evaluate(np.array([px / py]), 1)[0])

    reference, _ = integrate.dblquad(lambda px, py: parent(px, py), 0, 1, lambda py: py / 2,
                                     lambda py: py, epsabs=1e-13, epsrel=1e-11)
    cfg = QuadConfig(tol=1e-6)
    total = quad_piece(first, z, cfg) + quad_piece(second, z, cfg)
    assert total.real == pytest.approx(reference, rel=1e-5)
    # the wedge ratio loses the substituted variable in each child
    assert first.cutoffs[2].ratio == Monomial((1, 0))
    assert second.cutoffs[2].ratio == Monomial((0, -1))
    assert first.exponents == ((1, 0), (2, 1))
    assert second.exponents == ((2, 1), (1, 0))


def test_continuation_target_uses_smallest_exponent(make_piece):
    pieces = [make_piece([(6, 4), (2, 1)]), make_piece([(3, 2), (0, 0)])]
    assert continuation_target(pieces, 1) == (Fraction(-1), 2)
    assert continuation_target([make_piece([(0, 0)])], 3) == (Fraction(-4), 1)


def test_square_catalog(problem):
    resolution, rep = continue_problem(problem("square_1d.ini"))
    catalog = pole_catalog(rep)
    assert [(e.location, e.order_bound) for e in catalog.entries] == [(Fraction(-1, 2), 1)]
    assert catalog.N == 2
    assert rep.valid_threshold == float("-inf")


def test_double_pole_catalog(problem):
    _, rep = continue_problem(problem("double_pole.ini"))
    catalog = pole_catalog(rep)
    assert (Fraction(-1, 2), 2) in [(e.location, e.order_bound) for e in catalog.entries]
    for term in rep.terms:
        assert all(count <= 2 for count in term.prefactor.locations().values())


def test_unit_problem_is_entire(problem):
    _, rep = continue_problem(problem("unit.ini"))
    assert rep.is_entire
    assert pole_catalog(rep).entries == ()


def test_catalog_locations_have_pole_form(problem):
    for name in ("square_1d.ini", "double_pole.ini", "radial.ini"):
        _, rep = continue_problem(problem(name))
        catalog = pole_catalog(rep)
        for entry in catalog.entries:
            r = -entry.location * catalog.N
            assert r.denominator == 1 and r >= 1
            assert entry.order_bound <= rep.dimension
            assert entry.location >= catalog.target


def test_term_budget_is_enforced(problem):
    resolution = resolve(problem("square_1d.ini"))
    with pytest.raises(ResourceError):
        continue_to(resolution.pieces, ContinuationConfig(depth=2, term_budget=1))


def test_trace_tags(problem):
    _, rep = continue_problem(problem("square_1d.ini"), trace=True)
    tags = {line.split()[0] for line in rep.trace}
    assert {"PIECE", "IBP", "D-CUTOFF", CASE1} <= tags


def test_depth_monotonicity(problem):
    square = problem("square_1d.ini")
    _, shallow = continue_problem(square, depth=1)
    _, deep = continue_problem(square, depth=3)
    for z in (0.5, -0.3 + 0.4j, -0.2 - 0.1j):
        assert eval_F(shallow, z) == pytest.approx(eval_F(deep, z), rel=1e-8)


def test_frontier_merges_equal_structures(make_piece):
    frontier = _Frontier()
    frontier.push(Fraction(1), Prefactor(), make_piece([(0, 0)], smooth=x))
    frontier.push(Fraction(2), Prefactor(), make_piece([(0, 0)], smooth=1))
    frontier.push(Fraction(1), Prefactor().times(Fraction(1), Fraction(1)), make_piece([(0, 0)], smooth=1))
    merged, other = frontier.terms()
    assert merged.coefficient == 1
    assert quad_piece(merged.piece, 1.0) == pytest.approx(2.5, rel=1e-10)
    assert other.prefactor != merged.prefactor
    frontier.push(Fraction(-1), Prefactor().times(Fraction(1), Fraction(1)), make_piece([(0, 0)], smooth=1))
    assert len(frontier.terms()) == 1


@pytest.mark.slow
def test_cusp_continues_within_a_minute(problem):
    start = time.perf_counter()
    _, rep = continue_problem(problem("cusp.ini"), depth=1)
    assert time.perf_counter() - start < 60
    assert Fraction(-5, 6) in pole_catalog(rep).locations
