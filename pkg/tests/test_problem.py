from fractions import Fraction

import pytest
import sympy

from constants import DEFAULT_DEPTH, DEFAULT_WINDOW
from modules.errors import ProblemError
from modules.expr_kernel import VARIABLES
from modules.problem import (Problem, emit_problem, format_polynomial, load_problem, parse_polynomial,
                             parse_problem, save_problem, with_overrides)

x, y = VARIABLES

WEDGE = """\
# wedge x > |y|
[function]
f = x^2 - y^2

[domain]
window = [0, 1] x [-1, 1]
constraints = x - y; x + y

[cutoff]
eta = 1/2
multiplier = 1 + x*y

[run]
depth = 3
branch = lower
"""


def test_minimal_problem_defaults():
    problem = parse_problem("[function]\nf = x^2 + y^3\n")
    assert problem.dimension == 2
    assert problem.window == (DEFAULT_WINDOW, DEFAULT_WINDOW)
    assert problem.center == (0, 0)
    assert problem.depth == DEFAULT_DEPTH
    assert problem.branch == "upper"
    assert problem.multiplier == 1


def test_full_problem():
    problem = parse_problem(WEDGE)
    assert problem.dimension == 2
    assert problem.window == ((0, 1), (-1, 1))
    assert problem.constraints == (x - y, x + y)
    assert problem.eta == Fraction(1, 2)
    assert problem.multiplier == 1 + x * y
    assert problem.depth == 3
    assert problem.branch_sign == -1


def test_emit_parse_round_trip():
    problem = parse_problem(WEDGE)
    assert parse_problem(emit_problem(problem)) == problem


def test_save_and_load(tmp_path):
    problem = parse_problem(WEDGE)
    path = tmp_path / "nested" / "wedge.ini"
    save_problem(problem, str(path))
    assert load_problem(str(path)) == problem


def test_load_missing_file(tmp_path):
    with pytest.raises(ProblemError):
        load_problem(str(tmp_path / "absent.ini"))


@pytest.mark.parametrize("text, line", [
    ("[function]\nf = x^2 + z\n", 2),
    ("[function]\nf = x^2\ncolour = red\n", 3),
    ("[function]\nf = x^2\n\n[domain]\nwindow = [1, 0]\n", 5),
    ("[function]\nf = x^2\n[run]\ndepth = -1\n", 4),
    ("[function]\nf = x^2\n[run]\nbranch = left\n", 4),
    ("[function]\nf = x^2\n[cutoff]\nc0 = 2\n", 4),
    ("[function]\nf = x^2\n[function]\n", 3),
])
def test_errors_carry_line_numbers(text, line):
    with pytest.raises(ProblemError) as excinfo:
        parse_problem(text)
    assert excinfo.value.line == line
    assert f"строка {line}" in str(excinfo.value)


def test_missing_function():
    with pytest.raises(ProblemError):
        parse_problem("[domain]\nwindow = [0, 1]\n")


def test_zero_function_rejected():
    with pytest.raises(ProblemError):
        parse_problem("[function]\nf = x - x\n")


def test_dimension_from_window():
    problem = parse_problem("[function]\nf = x^2\n[domain]\nwindow = [0, 1] x [0, 1]\n")
    assert problem.dimension == 2


def test_with_overrides_ignores_missing_values():
    problem = Problem(dimension=1, f=x**2)
    assert with_overrides(problem, depth=None) is problem
    changed = with_overrides(problem, depth=4, tol=1e-8, unknown=1)
    assert changed.depth == 4 and changed.tol == 1e-8
    assert changed.f == problem.f


@pytest.mark.parametrize("expr", [x**2 - y**2, Fraction(1, 3) * x * y**2 + 1, -x**3 + 2 * y, sympy.Integer(5)])
def test_format_polynomial_round_trip(expr):
    expr = sympy.sympify(expr)
    assert sympy.expand(parse_polynomial(format_polynomial(expr)) - expr) == 0


def test_parse_polynomial_rejects_non_polynomials():
    with pytest.raises(ProblemError):
        parse_polynomial("x^(1/2)")
    with pytest.raises(ProblemError):
        parse_polynomial("y + 1", dimension=1)
