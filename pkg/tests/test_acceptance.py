"""End-to-end checks on the bundled problems against closed forms and the direct oracle."""

from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate
from scipy.special import expit

from modules.continuation import continue_problem, pole_catalog
from modules.numerics import CONFIRMED, UNDETECTED, RepEvaluator, pole_scan, verify_consistency
from modules.problem import load_problem, with_overrides

pytestmark = pytest.mark.slow

PROBLEMS = Path(__file__).resolve().parent.parent / "problems"


def _load(name):
    return load_problem(str(PROBLEMS / name))


def _run(name):
    problem = _load(name)
    resolution, rep = continue_problem(problem)
    evaluator = RepEvaluator(rep, branch=resolution.problem.branch_sign)
    catalog = pole_catalog(rep)
    return rep, evaluator, catalog, pole_scan(rep, catalog, evaluator=evaluator)


@pytest.fixture(scope="module")
def square():
    return _run("square_1d.ini")


@pytest.fixture(scope="module")
def double_pole():
    return _run("double_pole.ini")


@pytest.fixture(scope="module")
def radial():
    return _run("radial.ini")


@pytest.fixture(scope="module")
def cusp():
    return _run("cusp.ini")


def _plateau_derivative(x):
    """b'(x) of the (1/2, 1) plateau, written out by hand."""
    u = 2 * x - 1
    s = expit(-(1 / u - 1 / (1 - u)))
    return -2 * s * (1 - s) * (1 / u**2 + 1 / (1 - u) ** 2)


def _square_by_parts(z):
    # one integration by parts of the integral of x^(2z) b(x) over (0, 1); the rest is entire
    integral, _ = integrate.quad(lambda x: x ** (2 * z + 1) * _plateau_derivative(x), 0.5, 1,
                                 epsabs=0, epsrel=1e-13, limit=200)
    return -integral / (2 * z + 1)


@pytest.mark.parametrize("z", [-0.75, -1.2, -2.2])
def test_square_matches_integration_by_parts(square, z):
    _, evaluator, _, _ = square
    value, _ = evaluator.evaluate(z)
    assert abs(value.imag) < 1e-12
    assert value.real == pytest.approx(_square_by_parts(z), rel=1e-7)


def test_square_residue(square):
    _, _, _, scan = square
    assert len(scan) == 1
    assert scan[0].status == CONFIRMED
    assert scan[0].residue.real == pytest.approx(0.5, rel=1e-8)


def test_double_pole_is_attained(double_pole):
    rep, evaluator, _, scan = double_pole
    entry = next(e for e in scan if e.location == Fraction(-1, 2))
    assert entry.order_bound == 2
    assert entry.status == CONFIRMED and entry.order == 2
    assert entry.laurent.coefficient(2).real == pytest.approx(0.25, rel=1e-6)

    estimates = []
    for t in (1e-2, 1e-3, 1e-4):
        value, _ = evaluator.evaluate(-0.5 + t)
        estimates.append(t**2 * value.real)
    assert estimates[-1] != 0
    assert estimates[1] == pytest.approx(estimates[0], rel=2e-2)
    assert estimates[2] == pytest.approx(estimates[1], rel=1e-2)
    assert estimates[2] == pytest.approx(0.25, rel=1e-2)


def test_radial_residue(radial):
    _, _, _, scan = radial
    entry = next(e for e in scan if e.location == -1)
    assert entry.status == CONFIRMED and entry.order == 1
    assert entry.residue.real == pytest.approx(np.pi, abs=1e-5)
    for e in scan:
        if e.location.denominator == 2:
            assert e.status == UNDETECTED


def test_cusp_leading_pole(cusp):
    _, evaluator, catalog, scan = cusp
    assert catalog.entries[0].location == Fraction(-5, 6)
    assert scan[0].status == CONFIRMED and scan[0].order == 1
    residue = abs(scan[0].residue)
    # the drift of t |F| is proportional to t, so the check runs on the two smaller steps
    rates = [t * abs(evaluator.evaluate(-5 / 6 + t)[0]) for t in (1e-3, 1e-4)]
    assert rates[1] == pytest.approx(rates[0], rel=2e-2)
    assert rates[1] == pytest.approx(residue, rel=2e-3)


@pytest.mark.parametrize("name", ["square_1d.ini", "double_pole.ini", "radial.ini", "cusp.ini", "wedge.ini",
                                  "signed.ini"])
def test_continuation_agrees_with_direct_integration(name):
    report = verify_consistency(_load(name))
    assert len(report.points) == 15
    assert report.passed, report.max_deviation
    assert report.max_deviation <= 1e-6


@pytest.mark.parametrize("name", ["square_1d.ini", "double_pole.ini", "radial.ini", "cusp.ini", "wedge.ini",
                                  "signed.ini", "unit.ini"])
def test_pole_form(name):
    problem = _load(name)
    _, rep = continue_problem(problem)
    catalog = pole_catalog(rep)
    for entry in catalog.entries:
        r = -entry.location * catalog.N
        assert r.denominator == 1 and r >= 1
    for term in rep.terms:
        assert all(count <= problem.dimension for count in term.prefactor.locations().values())


def test_partition_invariance():
    problem = _load("cusp.ini")
    reference = continue_problem(problem)[1]
    varied = continue_problem(with_overrides(problem, partition_c0=Fraction(1, 3),
                                             partition_c1=Fraction(2, 3)))[1]
    lo = max(-1.0, reference.valid_threshold, varied.valid_threshold)
    points = [complex(re, 0.3) for re in np.linspace(lo, 0, 7)[1:-1]]
    first, second = RepEvaluator(reference), RepEvaluator(varied)
    for z in points:
        a, _ = first.evaluate(z)
        b, _ = second.evaluate(z)
        assert abs(a - b) <= 1e-6 * max(abs(a), 1.0)
