# modules/pieces.py
"""
Piece integrands on the positive orthant.

A piece carries, per chart variable x_j, the exponent pair (a_j, b_j) of the
factor x_j^(a_j z + b_j), a unit power |d|^z, a smooth factor polynomial in z,
a list of cutoff records b(c * p / q) and a box. A variable whose lower face
is 0 is free; a positive lower face means the variable is bounded away from 0
(frozen by a wedge or a gap of a root split). The integrand vanishes beyond
the upper faces of the box.
"""

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from fractions import Fraction
from typing import Sequence

import numpy as np
import sympy

from .expr_kernel import VARIABLES, Monomial, UnitPower, ZPolynomial, canonical, eval_real, subst_monomial
from .profiles import CutoffProfile


def round_up(value: float) -> Fraction:
    """Rational upper bound with a dyadic denominator."""
    return Fraction(math.ceil(value * 2**30) + 1, 2**30)


def round_down(value: float) -> Fraction:
    return Fraction(max(math.floor(value * 2**30) - 1, 0), 2**30)


@lru_cache(maxsize=4096)
def _euler_factor(c: sympy.Expr, e: int, j: int) -> sympy.Expr:
    x = VARIABLES[j]
    return canonical((x * sympy.diff(c, x) + e * c) / c)


def root_bound(value: Fraction, e: int) -> Fraction:
    """Rational upper bound of value^(1/e), exact when the root is rational."""
    if e == 1:
        return value
    num, den = round(value.numerator ** (1 / e)), round(value.denominator ** (1 / e))
    if den and Fraction(num, den) ** e == value:
        return Fraction(num, den)
    return round_up(float(value) ** (1 / e))


@dataclass(frozen=True)
class CutoffRecord:
    """B_order(c * p / q) with c a positive unit and p, q sharing no variable."""

    profile: CutoffProfile
    order: int
    c: sympy.Expr
    p: Monomial
    q: Monomial

    @classmethod
    def build(cls, profile: CutoffProfile, ratio: Monomial, c=1, order: int = 0) -> "CutoffRecord":
        return cls(profile, order, sympy.sympify(c), ratio.positive_part(), ratio.negative_part())

    @property
    def ratio(self) -> Monomial:
        return self.p / self.q

    @property
    def is_wedge(self) -> bool:
        return self.order >= 1

    @property
    def is_constant(self) -> bool:
        return self.ratio.is_constant and not self.c.free_symbols

    def involves(self, j: int) -> bool:
        return self.ratio[j] != 0 or VARIABLES[j] in self.c.free_symbols

    def argument(self) -> sympy.Expr:
        return self.c * self.ratio.to_expr()

    def to_expr(self) -> sympy.Expr:
        return self.profile.apply(self.argument(), self.order)

    def raised(self) -> "CutoffRecord":
        return replace(self, order=self.order + 1)

    def derivative_factor(self, j: int) -> sympy.Expr:
        """s with x_j * d/dx_j B_k(c p/q) = s * B_(k+1)(c p/q)."""
        return _euler_factor(self.c, self.ratio[j], j)

    def subst(self, images: Sequence[Monomial]) -> "CutoffRecord":
        c = subst_monomial(self.c, images) if self.c.free_symbols else self.c
        return CutoffRecord.build(self.profile, self.ratio.subst(images), c, self.order)

    def shifted(self, j: int, root, side: int) -> "CutoffRecord":
        """Image under x_j -> root + side * x_j; the power of x_j moves into c."""
        x = VARIABLES[j]
        image = root + side * x
        e = self.ratio[j]
        c = sympy.sympify(self.c).xreplace({x: image}) * image ** e
        ratio = self.ratio.without([j])
        return CutoffRecord.build(self.profile, ratio, c, self.order)

    def values(self, points: Sequence[np.ndarray], n: int) -> np.ndarray:
        argument = eval_real(self.c, points, n) * self.ratio.values(points)
        return self.profile.evaluate(argument, self.order)

    def upper_bound(self, j: int) -> Fraction | None:
        """Bound on x_j beyond which the record vanishes, for a constant c and ratio x_j^e."""
        if self.c.free_symbols or self.ratio.support != (j,) or self.ratio[j] <= 0:
            return None
        c = Fraction(int(sympy.Rational(self.c).p), int(sympy.Rational(self.c).q))
        return root_bound(self.profile.c1 / c, self.ratio[j])

    def __str__(self) -> str:
        name = "b" if self.order == 0 else f"B{self.order}"
        return f"{name}({self.argument()})"


@dataclass(frozen=True)
class PieceIntegrand:
    exponents: tuple[tuple[Fraction, Fraction], ...]
    unit: UnitPower
    smooth: ZPolynomial
    cutoffs: tuple[CutoffRecord, ...]
    box: tuple[tuple[Fraction, Fraction], ...]
    label: str = ""
    cycle: int = 0
    path: tuple[str, ...] = field(default=(), compare=False)

    @property
    def n(self) -> int:
        return len(self.exponents)

    @property
    def free_indices(self) -> tuple[int, ...]:
        return tuple(j for j, (lo, _) in enumerate(self.box) if lo == 0)

    def threshold(self) -> Fraction | None:
        """Largest -(b_j + 1)/a_j over free variables with a_j > 0; None when entire."""
        values = [-(b + 1) / a for j, (a, b) in enumerate(self.exponents)
                  if a > 0 and self.box[j][0] == 0]
        return max(values) if values else None

    def structure_key(self) -> tuple:
        """Everything except the smooth factor; siblings sharing it can be summed."""
        return (self.exponents, self.unit, self.cutoffs, self.box)

    def normalized(self) -> "PieceIntegrand":
        """Absorbs records with a constant ratio into the smooth factor."""
        kept, absorbed = [], sympy.S.One
        for record in self.cutoffs:
            if record.ratio.is_constant:
                absorbed = absorbed * record.to_expr()
            else:
                kept.append(record)
        if absorbed == 1:
            return self
        return replace(self, smooth=self.smooth.scale(absorbed), cutoffs=tuple(kept))

    def with_path(self, tag: str) -> "PieceIntegrand":
        return replace(self, path=self.path + (tag,))

    def cutoff_product(self, points: Sequence[np.ndarray]) -> np.ndarray:
        result = np.ones(np.broadcast(*points).shape)
        for record in self.cutoffs:
            result = result * record.values(points, self.n)
        return result

    def describe(self) -> str:
        factors = [f"x{j}^({a}z+{b})" for j, (a, b) in enumerate(self.exponents) if a or b]
        unit = f"|{self.unit.base}|^z" if self.unit.base != 1 else ""
        records = " ".join(str(r) for r in self.cutoffs)
        return " ".join(s for s in (self.label, *factors, unit, records) if s)
