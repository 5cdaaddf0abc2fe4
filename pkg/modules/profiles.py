# modules/profiles.py
"""
Cutoff profiles and their Euler derivatives.

A profile b is identically 1 on (-inf, c0], identically 0 on [c1, inf) and
strictly decreasing in between. The transition is the normalized exponential
smoothstep: b(t) = 1 - S(u) with S(u) = 1 / (1 + exp(1/u - 1/(1-u))). The
smoothstep kind uses u = (t - c0) / (c1 - c0); the log-symmetric kind uses
u = ln(t / c0) / ln(c1 / c0), which for c0 * c1 = 1 gives b(t) + b(1/t) = 1.

B_k = (t d/dt)^k b is generated once per (kind, k) as a polynomial in S with
coefficients rational in u, and evaluated through scipy's logistic.
"""

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
import sympy
from mpmath import iv
from scipy.special import expit
from sympy.core.function import ArgumentIndexError

SMOOTHSTEP = 0
LOG_SYMMETRIC = 1

_u, _S, _w = sympy.symbols("u S w", real=True)


@lru_cache(maxsize=None)
def _euler_expression(kind: int, order: int) -> sympy.Expr:
    """B_order in terms of (u, S, w); w is the Euler factor parameter of the kind."""
    if order == 0:
        return 1 - _S
    previous = _euler_expression(kind, order - 1)
    g_prime = sympy.diff(1 / _u - 1 / (1 - _u), _u)
    derivative = (sympy.diff(previous, _u)
                  + sympy.diff(previous, _S) * (-g_prime * _S * (1 - _S)))
    euler = (_u + _w) if kind == SMOOTHSTEP else _w
    return sympy.expand(euler * derivative)


@lru_cache(maxsize=None)
def _euler_function(kind: int, order: int):
    return sympy.lambdify((_u, _S, _w), _euler_expression(kind, order), modules="numpy")


def _coordinates(kind: int, c0: float, c1: float, t: np.ndarray) -> tuple[np.ndarray, float]:
    if kind == SMOOTHSTEP:
        return (t - c0) / (c1 - c0), c0 / (c1 - c0)
    span = np.log(c1 / c0)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(t > 0, np.log(np.where(t > 0, t, c0) / c0) / span, -np.inf)
    return u, 1.0 / span


def profile_values(kind, c0, c1, order, t) -> np.ndarray:
    """Numeric B_order(t) for array t; plateaus are exact."""
    t = np.asarray(t, dtype=float)
    kind, order = int(kind), int(order)
    u, w = _coordinates(kind, float(c0), float(c1), t)
    low = 1.0 if order == 0 else 0.0
    out = np.where(u <= 0, low, 0.0)
    inside = (u > 0) & (u < 1)
    if np.any(inside):
        ui = u[inside]
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            s = expit(-(1 / ui - 1 / (1 - ui)))
            values = np.broadcast_to(_euler_function(kind, order)(ui, s, w), ui.shape).astype(float)
            if order > 0:
                values = np.where(s * (1 - s) > 0, values, 0.0)
        out[inside] = np.nan_to_num(values, nan=0.0, posinf=0.0, neginf=0.0)
    return out


class Profile(sympy.Function):
    """Symbolic B_order(t): Profile(kind, c0, c1, order, t)."""

    nargs = 5
    is_real = True

    @classmethod
    def eval(cls, kind, c0, c1, order, t):
        if not t.is_Rational:
            return None
        if kind == LOG_SYMMETRIC and t <= 0:
            return sympy.S.One if order == 0 else sympy.S.Zero
        if t <= c0:
            return sympy.S.One if order == 0 else sympy.S.Zero
        if t >= c1:
            return sympy.S.Zero
        return None

    def fdiff(self, argindex=5):
        if argindex != 5:
            raise ArgumentIndexError(self, argindex)
        kind, c0, c1, order, t = self.args
        return Profile(kind, c0, c1, order + 1, t) / t


@dataclass(frozen=True)
class CutoffProfile:
    c0: Fraction
    c1: Fraction
    kind: int = SMOOTHSTEP

    def __post_init__(self):
        if not 0 < self.c0 < self.c1:
            raise ValueError(f"Некорректное плато профиля: c0={self.c0}, c1={self.c1}")

    @classmethod
    def alpha(cls, c0: Fraction) -> "CutoffProfile":
        """Log-symmetric profile on the band (c0, 1/c0)."""
        c0 = Fraction(c0)
        return cls(c0, 1 / c0, LOG_SYMMETRIC)

    @classmethod
    def from_application(cls, application: Profile) -> tuple["CutoffProfile", int, sympy.Expr]:
        kind, c0, c1, order, argument = application.args
        profile = cls(Fraction(int(c0.p), int(c0.q)), Fraction(int(c1.p), int(c1.q)), int(kind))
        return profile, int(order), argument

    def apply(self, argument, order: int = 0) -> sympy.Expr:
        return Profile(self.kind, sympy.Rational(self.c0.numerator, self.c0.denominator),
                       sympy.Rational(self.c1.numerator, self.c1.denominator), order, argument)

    def evaluate(self, t, order: int = 0) -> np.ndarray:
        return profile_values(self.kind, self.c0, self.c1, order, t)

    def interval(self, lo: float, hi: float, order: int = 0):
        """Enclosure of B_order over [lo, hi]; unbounded when a derivative meets the transition."""
        if hi <= self.c0 or lo >= self.c1:
            value = float(self.evaluate(np.array([lo]), order)[0])
            return iv.mpf([value, value])
        if order > 0:
            return iv.mpf(["-inf", "inf"])
        upper, lower = self.evaluate(np.array([lo, hi]), 0)
        return iv.mpf([max(float(lower) - 1e-15, 0.0), min(float(upper) + 1e-15, 1.0)])
