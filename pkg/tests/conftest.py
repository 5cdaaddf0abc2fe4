import sys
from fractions import Fraction
from pathlib import Path

import pytest
import sympy

ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from modules.expr_kernel import Monomial, UnitPower, ZPolynomial  # noqa: E402
from modules.pieces import CutoffRecord, PieceIntegrand  # noqa: E402
from modules.problem import load_problem  # noqa: E402
from modules.profiles import CutoffProfile  # noqa: E402

PROBLEMS = ROOT / "problems"


@pytest.fixture
def problem_path():
    def _path(name: str) -> str:
        return str(PROBLEMS / name)
    return _path


@pytest.fixture
def problem():
    def _load(name: str):
        return load_problem(str(PROBLEMS / name))
    return _load


@pytest.fixture
def plateau():
    return CutoffProfile(Fraction(1, 2), Fraction(1))


@pytest.fixture
def make_piece():
    """Piece factory: exponents as (a, b) pairs, box defaults to the unit cube."""

    def _make(exponents, cutoffs=(), box=None, unit=1, smooth=1, unit_sign=1):
        exponents = tuple((Fraction(a), Fraction(b)) for a, b in exponents)
        n = len(exponents)
        if box is None:
            box = ((Fraction(0), Fraction(1)),) * n
        smooth = smooth if isinstance(smooth, ZPolynomial) else ZPolynomial.constant(smooth)
        return PieceIntegrand(
            exponents=exponents,
            unit=UnitPower(sympy.sympify(unit), unit_sign),
            smooth=smooth,
            cutoffs=tuple(cutoffs),
            box=tuple((Fraction(lo), Fraction(hi)) for lo, hi in box),
            label="test",
        )

    return _make


@pytest.fixture
def record():
    def _record(profile, exponents, order=0, c=1):
        return CutoffRecord.build(profile, Monomial(tuple(exponents)), c, order)
    return _record
