# modules/newton.py
"""
Newton polygons of bivariate polynomials, Kouchnirenko nondegeneracy and
unimodular fans refining the normal fan.
"""

from dataclasses import dataclass
from math import gcd

import sympy

from .errors import DegeneracyError
from .logger import get_app_logger

logger = get_app_logger()

_sigma = sympy.Symbol("sigma")


@dataclass(frozen=True)
class NewtonEdge:
    start: tuple[int, int]
    end: tuple[int, int]
    normal: tuple[int, int]
    polynomial: sympy.Expr  # dehomogenized edge polynomial in sigma

    def __str__(self) -> str:
        return f"{self.start}-{self.end} (нормаль {self.normal})"


@dataclass(frozen=True)
class NewtonPolygon:
    vertices: tuple[tuple[int, int], ...]
    edges: tuple[NewtonEdge, ...]

    @property
    def normals(self) -> tuple[tuple[int, int], ...]:
        return tuple(edge.normal for edge in self.edges)


def _cross(o, a, b) -> int:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def newton_polygon(poly: sympy.Poly) -> NewtonPolygon:
    """Compact faces of conv(support) + R^2_{>=0}, ordered from the y-axis side."""
    terms = dict(poly.terms())
    if not terms:
        raise ValueError("Многочлен тождественно равен нулю")
    lowest: dict[int, int] = {}
    for (i, j) in terms:
        lowest[i] = min(j, lowest.get(i, j))
    candidates = sorted(lowest.items())
    hull: list[tuple[int, int]] = []
    for point in candidates:
        while len(hull) >= 2 and _cross(hull[-2], hull[-1], point) <= 0:
            hull.pop()
        hull.append(point)
    # keep the strictly descending part: edges with nonnegative slope are not compact faces
    vertices = [hull[0]]
    for point in hull[1:]:
        if point[1] < vertices[-1][1]:
            vertices.append(point)
        else:
            break
    edges = []
    for start, end in zip(vertices, vertices[1:]):
        dx, dy = end[0] - start[0], start[1] - end[1]
        g = gcd(dx, dy)
        step = (dx // g, dy // g)
        coefficients = [terms.get((start[0] + k * step[0], start[1] - k * step[1]), 0) for k in range(g + 1)]
        polynomial = sum((c * _sigma ** k for k, c in enumerate(coefficients)), sympy.S.Zero)
        edges.append(NewtonEdge(start, end, (step[1], step[0]), polynomial))
    return NewtonPolygon(tuple(vertices), tuple(edges))


def is_nondegenerate(edge: NewtonEdge) -> bool:
    """The edge polynomial has no repeated root on the torus."""
    poly = sympy.Poly(edge.polynomial, _sigma)
    return sympy.gcd(poly, poly.diff(_sigma)).degree() == 0


def check_nondegenerate(polygon: NewtonPolygon, name: str = "f"):
    for edge in polygon.edges:
        if not is_nondegenerate(edge):
            error_msg = f"Многочлен {name} вырожден по Ньютону: реберный многочлен {edge.polynomial} не свободен от квадратов"
            logger.error(error_msg)
            raise DegeneracyError(error_msg, edge=str(edge))


def _primitive(ray: tuple[int, int]) -> tuple[int, int]:
    g = gcd(*ray)
    return (ray[0] // g, ray[1] // g)


def unimodular_fan(rays) -> list[tuple[int, int]]:
    """
    Ordered rays of a unimodular fan of the positive quadrant containing the given rays.

    Rays run from (1, 0) to (0, 1) by increasing angle; adjacent rays u, v satisfy
    det(u, v) = 1. Targets are reached by Stern-Brocot mediant insertion.
    """
    fan = [(1, 0), (0, 1)]
    for target in sorted({_primitive(r) for r in rays if r[0] > 0 and r[1] > 0},
                         key=lambda r: sympy.Rational(r[1], r[0])):
        while target not in fan:
            for k in range(len(fan) - 1):
                u, v = fan[k], fan[k + 1]
                if u[0] * target[1] - u[1] * target[0] > 0 and target[0] * v[1] - target[1] * v[0] > 0:
                    fan.insert(k + 1, (u[0] + v[0], u[1] + v[1]))
                    break
    return fan
