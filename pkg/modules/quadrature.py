# modules/quadrature.py
"""
Composite Gauss-Legendre rules on intervals and boxes.

An interval is cut into UNIFORM_CELLS cells; an end flagged as singular gets
its outer cell replaced by geometric cells (ratio GRADING_RATIO) down to a
relative FACE_TAIL, and the remaining tail [end, end + eps] is a single node
at eps/2 with weight eps. Level l splits every cell into 2^l subcells, so two
consecutive levels give the error estimate.

For piece integrands the tail node at a free face carries the power factor
x^w exactly: its log-weight is corrected by w ln 2 - ln(w + 1), which turns
eps * (eps/2)^w into the integral of x^w over [0, eps].
"""

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from constants import (ABS_FLOOR, DEFAULT_TOL, FACE_TAIL, GL_ORDER, GRADING_RATIO, MAX_LEVEL, SCALE_FLOOR,
                       UNIFORM_CELLS)


@dataclass(frozen=True)
class QuadConfig:
    order: int = GL_ORDER
    max_level: int = MAX_LEVEL
    tol: float = DEFAULT_TOL
    abs_floor: float = ABS_FLOOR
    scale_floor: float = SCALE_FLOOR

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError(f"Допуск должен быть положительным: {self.tol}")
        if self.order < 2:
            raise ValueError(f"Порядок правила Гаусса должен быть не меньше 2: {self.order}")
        if self.max_level < 1:
            raise ValueError(f"Требуется хотя бы один уровень уточнения: {self.max_level}")

    @classmethod
    def from_problem(cls, problem) -> "QuadConfig":
        return cls(problem.order, problem.max_level, problem.tol, problem.abs_floor)

    def with_tol(self, tol: float) -> "QuadConfig":
        return replace(self, tol=tol)

    def accepts(self, error: float, value: complex, scale: float = 0.0) -> bool:
        """
        Relative test against the value, floored by abs_floor and by a share of
        the scale, the sum of |integrand * weight| over the rule.
        """
        return error <= max(self.tol * abs(value), self.scale_floor * scale, self.abs_floor)


@dataclass(frozen=True, eq=False)
class AxisRule:
    nodes: np.ndarray
    weights: np.ndarray
    tail: np.ndarray

    @property
    def size(self) -> int:
        return len(self.nodes)


@lru_cache(maxsize=None)
def _gauss(order: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(order)


def _geometric_edges(length: float) -> tuple[np.ndarray, float]:
    """Offsets length * ratio^k from a singular end down to the tail, ascending."""
    count = int(np.ceil(np.log(FACE_TAIL) / np.log(GRADING_RATIO)))
    offsets = length * GRADING_RATIO ** np.arange(count, -1, -1, dtype=float)
    return offsets, float(offsets[0])


def _cells(edges: np.ndarray, order: int, level: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = _gauss(order)
    t = np.linspace(0.0, 1.0, 2**level + 1)
    lo, hi = edges[:-1, None], edges[1:, None]
    left = (lo + (hi - lo) * t[:-1]).ravel()
    right = (lo + (hi - lo) * t[1:]).ravel()
    half, mid = (right - left) / 2, (right + left) / 2
    return (mid[:, None] + half[:, None] * x).ravel(), (half[:, None] * w).ravel()


def interval_rule(lo: float, hi: float, order: int, level: int,
                  grade_lo: bool = False, grade_hi: bool = False) -> AxisRule:
    """Composite rule on [lo, hi], graded toward the flagged ends."""
    lo, hi = float(lo), float(hi)
    width = (hi - lo) / UNIFORM_CELLS
    edges = [lo + k * width for k in range(UNIFORM_CELLS + 1)]
    tails_at = []
    if grade_lo:
        offsets, eps = _geometric_edges(width)
        edges = list(lo + offsets) + edges[2:]
        tails_at.append((lo + eps / 2, eps))
    if grade_hi:
        offsets, eps = _geometric_edges(width)
        edges = edges[:-2] + list(hi - offsets[::-1])
        tails_at.append((hi - eps / 2, eps))
    nodes, weights = _cells(np.asarray(edges), order, level)
    tail = np.zeros(len(nodes), dtype=bool)
    if tails_at:
        extra_nodes = np.array([node for node, _ in tails_at])
        extra_weights = np.array([eps for _, eps in tails_at])
        nodes = np.concatenate([extra_nodes, nodes])
        weights = np.concatenate([extra_weights, weights])
        tail = np.concatenate([np.ones(len(tails_at), dtype=bool), tail])
    return AxisRule(nodes, weights, tail)


def piece_rules(box, order: int, level: int) -> list[AxisRule]:
    """Free axes (lower face 0) graded toward 0; bounded axes uniform."""
    return [interval_rule(lo, hi, order, level, grade_lo=(lo == 0)) for lo, hi in box]


def tensor_grid(rules: list[AxisRule]) -> tuple[list[np.ndarray], np.ndarray, list[np.ndarray]]:
    """Flattened tensor product: points per axis, weights, tail masks per axis."""
    points = np.meshgrid(*[r.nodes for r in rules], indexing="ij")
    weights = np.meshgrid(*[r.weights for r in rules], indexing="ij")
    tails = np.meshgrid(*[r.tail for r in rules], indexing="ij")
    total = np.ones(points[0].size)
    for w in weights:
        total = total * w.ravel()
    return [p.ravel() for p in points], total, [t.ravel() for t in tails]


def tail_log_correction(w: complex) -> complex:
    """log of (integral of x^w over [0, eps]) / (eps * (eps/2)^w)."""
    return w * np.log(2.0) - np.log(w + 1)
