# modules/expr_kernel.py
"""
Symbolic kernel: monomials, smooth expressions over the chart variables,
unit powers |d|^z and interval certification of units.

Smooth expressions are sympy trees over VARIABLES plus Profile applications.
Factors polynomial in z are kept apart as ZPolynomial coefficient tuples, so
every expression handed to the numeric layer is independent of z.
"""

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
import sympy
from mpmath import iv

from constants import CERTIFY_DEPTH
from .logger import get_app_logger
from .profiles import CutoffProfile, Profile, profile_values

logger = get_app_logger()

VARIABLES = sympy.symbols("x y", real=True)
Z = sympy.Symbol("z")

Box = tuple[tuple[Fraction, Fraction], ...]


def to_rational(value) -> sympy.Rational:
    value = Fraction(value)
    return sympy.Rational(value.numerator, value.denominator)


def to_fraction(value) -> Fraction:
    if isinstance(value, sympy.Basic):
        rational = sympy.Rational(value)
        return Fraction(int(rational.p), int(rational.q))
    return Fraction(value)


@dataclass(frozen=True, order=True)
class Monomial:
    """x^e over a fixed number of variables; exponents may be negative for ratios."""

    exponents: tuple[int, ...]

    @classmethod
    def one(cls, n: int) -> "Monomial":
        return cls((0,) * n)

    @classmethod
    def variable(cls, j: int, n: int, power: int = 1) -> "Monomial":
        return cls(tuple(power if i == j else 0 for i in range(n)))

    @property
    def n(self) -> int:
        return len(self.exponents)

    def __mul__(self, other: "Monomial") -> "Monomial":
        return Monomial(tuple(a + b for a, b in zip(self.exponents, other.exponents)))

    def __truediv__(self, other: "Monomial") -> "Monomial":
        return Monomial(tuple(a - b for a, b in zip(self.exponents, other.exponents)))

    def __pow__(self, k: int) -> "Monomial":
        return Monomial(tuple(a * k for a in self.exponents))

    def __getitem__(self, j: int) -> int:
        return self.exponents[j]

    @property
    def degree(self) -> int:
        return sum(self.exponents)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(j for j, e in enumerate(self.exponents) if e != 0)

    @property
    def is_constant(self) -> bool:
        return not any(self.exponents)

    def positive_part(self) -> "Monomial":
        return Monomial(tuple(max(e, 0) for e in self.exponents))

    def negative_part(self) -> "Monomial":
        return Monomial(tuple(max(-e, 0) for e in self.exponents))

    def without(self, indices: Iterable[int]) -> "Monomial":
        indices = set(indices)
        return Monomial(tuple(0 if j in indices else e for j, e in enumerate(self.exponents)))

    def only(self, indices: Iterable[int]) -> "Monomial":
        indices = set(indices)
        return Monomial(tuple(e if j in indices else 0 for j, e in enumerate(self.exponents)))

    def subst(self, images: Sequence["Monomial"]) -> "Monomial":
        """Image under x_j -> images[j]."""
        result = Monomial.one(images[0].n)
        for e, image in zip(self.exponents, images):
            result = result * image ** e
        return result

    def to_expr(self) -> sympy.Expr:
        return sympy.Mul(*[VARIABLES[j] ** e for j, e in enumerate(self.exponents) if e])

    def values(self, points: Sequence[np.ndarray]):
        result = 1.0
        for e, x in zip(self.exponents, points):
            if e:
                result = result * np.asarray(x, dtype=float) ** e
        return result

    def bounds(self, box: Box) -> tuple[float, float]:
        """Range over a box with positive lower faces where negative powers occur."""
        lo, hi = 1.0, 1.0
        for e, (a, b) in zip(self.exponents, box):
            if e > 0:
                lo, hi = lo * float(a) ** e, hi * float(b) ** e
            elif e < 0:
                lo = lo * float(b) ** e
                hi = hi * float(a) ** e if a > 0 else float("inf")
        return lo, hi

    def __str__(self) -> str:
        return str(self.to_expr())


@dataclass(frozen=True)
class UnitPower:
    """|d|^z times exp(i*pi*z*branch) when d < 0 on the piece."""

    base: sympy.Expr
    sign: int = 1

    def depends_on(self, j: int) -> bool:
        return VARIABLES[j] in self.base.free_symbols

    def log_magnitude(self, n: int, points: Sequence[np.ndarray]) -> np.ndarray:
        magnitude = np.abs(eval_real(self.base, points, n))
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(np.where(magnitude > 0, magnitude, 1.0))

    def subst(self, mapping: dict) -> "UnitPower":
        return UnitPower(sympy.sympify(self.base).xreplace(mapping), self.sign)


@lru_cache(maxsize=65536)
def canonical(expr) -> sympy.Expr:
    """Cancelled p/q form over the variables, profile applications acting as generators."""
    expr = sympy.sympify(expr)
    if expr.is_Number or not expr.free_symbols:
        return expr
    return sympy.cancel(expr)


@lru_cache(maxsize=65536)
def _diff_canonical(expr: sympy.Expr, j: int) -> sympy.Expr:
    return canonical(sympy.diff(expr, VARIABLES[j]))


@lru_cache(maxsize=4096)
def log_derivative(expr: sympy.Expr, j: int) -> sympy.Expr:
    """d/dx_j log(expr) in canonical form."""
    return canonical(sympy.diff(expr, VARIABLES[j]) / expr)


@dataclass(frozen=True)
class ZPolynomial:
    """
    Sum of coeffs[k] * z^k with z-free smooth coefficients.

    Coefficients are kept canonical, so equal coefficients compare equal and
    repeated differentiation does not grow the expression trees.
    """

    coeffs: tuple[sympy.Expr, ...]

    @classmethod
    def constant(cls, expr) -> "ZPolynomial":
        return cls((canonical(sympy.sympify(expr)),))._trim()

    def _trim(self) -> "ZPolynomial":
        coeffs = list(self.coeffs)
        while coeffs and coeffs[-1] == 0:
            coeffs.pop()
        return ZPolynomial(tuple(coeffs))

    @property
    def is_zero(self) -> bool:
        return not any(c != 0 for c in self.coeffs)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def scale(self, factor) -> "ZPolynomial":
        factor = sympy.sympify(factor)
        if factor.is_Number:
            return ZPolynomial(tuple(c * factor for c in self.coeffs))._trim()
        return ZPolynomial(tuple(canonical(c * factor) for c in self.coeffs))._trim()

    def times_z(self) -> "ZPolynomial":
        return ZPolynomial((sympy.S.Zero,) + self.coeffs)._trim()

    def diff(self, j: int) -> "ZPolynomial":
        return ZPolynomial(tuple(_diff_canonical(c, j) for c in self.coeffs))._trim()

    def subst(self, mapping: dict) -> "ZPolynomial":
        return ZPolynomial(tuple(canonical(sympy.sympify(c).xreplace(mapping)) for c in self.coeffs))._trim()

    def __add__(self, other: "ZPolynomial") -> "ZPolynomial":
        size = max(len(self.coeffs), len(other.coeffs))
        pad = lambda cs: list(cs) + [sympy.S.Zero] * (size - len(cs))
        return ZPolynomial(tuple(canonical(a + b) for a, b in zip(pad(self.coeffs), pad(other.coeffs))))._trim()

    def depends_on(self, j: int) -> bool:
        return any(VARIABLES[j] in sympy.sympify(c).free_symbols for c in self.coeffs)

    def to_expr(self) -> sympy.Expr:
        return sum((c * Z ** k for k, c in enumerate(self.coeffs)), sympy.S.Zero)


@dataclass(frozen=True)
class SignCertificate:
    sign: int
    boxes: int


def diff(expr, j: int) -> sympy.Expr:
    """Partial derivative in variable j; profiles follow the chain rule."""
    return sympy.diff(sympy.sympify(expr), VARIABLES[j])


def subst_monomial(expr, images: Sequence[Monomial]) -> sympy.Expr:
    """Simultaneous substitution x_j -> images[j]; images must stay in the positive orthant."""
    for image in images:
        if any(e < 0 for e in image.exponents):
            error_msg = f"Образ {image} выходит из положительного ортанта"
            logger.error(error_msg)
            raise ValueError(error_msg)
    mapping = {VARIABLES[j]: image.to_expr() for j, image in enumerate(images)}
    return sympy.sympify(expr).xreplace(mapping)


def factor_monomial(expr, n: int) -> tuple[Monomial, sympy.Expr]:
    """Splits a polynomial as x^m * u with u not divisible by any variable."""
    poly = sympy.Poly(sympy.expand(expr), *VARIABLES[:n])
    if poly.is_zero:
        raise ValueError("Нулевой многочлен не допускает мономиального разложения")
    monoms = poly.monoms()
    shift = tuple(min(m[j] for m in monoms) for j in range(n))
    unit = sum((c * sympy.Mul(*[VARIABLES[j] ** (m[j] - shift[j]) for j in range(n)])
                for m, c in poly.terms()), sympy.S.Zero)
    return Monomial(shift), unit


@lru_cache(maxsize=4096)
def _compiled(exprs: tuple[sympy.Expr, ...], n: int):
    return sympy.lambdify(VARIABLES[:n], list(exprs),
                          modules=[{"Profile": profile_values}, "numpy"], cse=True)


def eval_many(exprs: Sequence, points: Sequence[np.ndarray], n: int) -> list[np.ndarray]:
    """Vectorized evaluation of several z-free expressions on a common grid."""
    exprs = tuple(sympy.sympify(e) for e in exprs)
    shape = np.broadcast(*[np.asarray(p) for p in points]).shape if points else ()
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        values = _compiled(exprs, n)(*points)
    return [np.broadcast_to(np.asarray(v, dtype=float), shape) for v in values]


def eval_real(expr, points: Sequence, n: int):
    return eval_many([expr], [np.asarray(p, dtype=float) for p in points], n)[0]


def pow_z_eval(unit: UnitPower, z: complex, point: Sequence[float], branch: int = 1) -> complex:
    """|d|^z with the phase exp(i*pi*z*branch) when the unit carries sign -1."""
    value = float(eval_real(unit.base, point, len(point)))
    if value == 0:
        raise ValueError(f"Единица обращается в ноль в точке {tuple(point)}")
    result = complex(abs(value) ** complex(z))
    if unit.sign < 0:
        result *= complex(np.exp(1j * np.pi * complex(z) * branch))
    return result


def _iv_number(value) -> "iv.mpf":
    rational = sympy.Rational(value)
    return iv.mpf(int(rational.p)) / iv.mpf(int(rational.q))


def _iv_fraction(value: Fraction):
    return iv.mpf(value.numerator) / iv.mpf(value.denominator)


def interval_eval(expr, box: Box):
    """Rigorous enclosure of expr over the box (variable j ranges over box[j])."""
    expr = sympy.sympify(expr)
    if expr.is_Rational or expr.is_Float:
        return _iv_number(expr)
    if expr.is_Symbol:
        j = VARIABLES.index(expr)
        lo, hi = box[j]
        return iv.mpf([_iv_fraction(Fraction(lo)).a, _iv_fraction(Fraction(hi)).b])
    if expr.is_Add:
        total = iv.mpf(0)
        for arg in expr.args:
            total = total + interval_eval(arg, box)
        return total
    if expr.is_Mul:
        total = iv.mpf(1)
        for arg in expr.args:
            total = total * interval_eval(arg, box)
        return total
    if expr.is_Pow and expr.exp.is_Integer:
        base = interval_eval(expr.base, box)
        exponent = int(expr.exp)
        if exponent >= 0:
            return base ** exponent
        return iv.mpf(1) / base ** (-exponent)
    if isinstance(expr, sympy.Abs):
        return abs(interval_eval(expr.args[0], box))
    if isinstance(expr, Profile):
        profile, order, argument = CutoffProfile.from_application(expr)
        enclosure = interval_eval(argument, box)
        return profile.interval(float(enclosure.a), float(enclosure.b), order)
    raise TypeError(f"Интервальная оценка не поддерживает {expr.func}")


def certify_unit(expr, box: Box, depth: int = CERTIFY_DEPTH) -> SignCertificate | None:
    """
    Proves that expr has a constant nonzero sign on the closed box.

    Interval evaluation with bisection of the widest relevant side up to the
    given depth. Returns None when the sign cannot be certified.
    """
    expr = sympy.sympify(expr)
    if expr.is_number:
        if expr == 0:
            return None
        return SignCertificate(1 if expr > 0 else -1, 1)
    relevant = [j for j, v in enumerate(VARIABLES[:len(box)]) if v in expr.free_symbols]
    sign = None
    checked = 0
    stack = [(tuple((Fraction(a), Fraction(b)) for a, b in box), 0)]
    while stack:
        sub, level = stack.pop()
        checked += 1
        try:
            value = interval_eval(expr, sub)
        except (ZeroDivisionError, ValueError):
            value = iv.mpf(["-inf", "inf"])
        if value.a > 0:
            current = 1
        elif value.b < 0:
            current = -1
        else:
            if level >= depth or not relevant:
                return None
            j = max(relevant, key=lambda k: sub[k][1] - sub[k][0])
            lo, hi = sub[j]
            mid = (lo + hi) / 2
            for half in ((lo, mid), (mid, hi)):
                stack.append((sub[:j] + (half,) + sub[j + 1:], level + 1))
            continue
        if sign is None:
            sign = current
        elif current != sign:
            return None
    return SignCertificate(sign, checked)
