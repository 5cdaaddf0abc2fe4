# modules/numerics.py
"""
Numerical layer: evaluation of the continued F, the direct-integration oracle
on Re z > 0, contour extraction of Laurent coefficients, pole confirmation and
the consistency check between the two evaluations.
"""

import cmath
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Sequence

import numpy as np
import sympy
from joblib import Parallel, delayed

from constants import (CONTOUR_AGREEMENT, CONTOUR_MAX_NODES, CONTOUR_NODES, EXCLUSION_RADIUS, RESIDUE_FLOOR,
                       RESIDUE_TOL, UNIFORM_CELLS, VERIFY_IM, VERIFY_RE, VERIFY_TOL)
from .continuation import MeromorphicRep, PoleCatalog, Prefactor, RepTerm, continue_problem, pole_catalog
from .errors import AccuracyError, PoleProximityError, RadiusError, ZetaError
from .expr_kernel import VARIABLES, eval_many, to_rational
from .logger import get_app_logger
from .pieces import PieceIntegrand
from .problem import Problem
from .quadrature import QuadConfig, interval_rule, piece_rules, tail_log_correction, tensor_grid

logger = get_app_logger()

CONFIRMED = "CONFIRMED"
UNDETECTED = "UNDETECTED"

_CACHED_LEVELS = 3
_CLEARING_RADIUS = 1e-3


@dataclass(frozen=True)
class LaurentData:
    center: Fraction
    coefficients: tuple[complex, ...]  # c_{-k}, ..., c_{-1}
    radius: float
    error: float
    nodes: int = CONTOUR_NODES

    def coefficient(self, j: int) -> complex:
        """c_{-j}."""
        return self.coefficients[len(self.coefficients) - j]

    @property
    def detected_order(self) -> int:
        for i, c in enumerate(self.coefficients):
            if c != 0:
                return len(self.coefficients) - i
        return 0


@dataclass(frozen=True)
class ScanEntry:
    location: Fraction
    order_bound: int
    status: str
    order: int
    laurent: LaurentData

    @property
    def residue(self) -> complex:
        return self.laurent.coefficients[-1] if self.laurent.coefficients else 0j


@dataclass(frozen=True)
class VerifyPoint:
    z: complex
    rep_value: complex | None
    oracle_value: complex | None
    deviation: float
    passed: bool
    note: str = ""


@dataclass(frozen=True)
class VerifyReport:
    points: tuple[VerifyPoint, ...]
    tolerance: float

    @property
    def max_deviation(self) -> float:
        return max((p.deviation for p in self.points), default=0.0)

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.points)


@dataclass
class _Part:
    exponents: tuple
    keys: list
    rows: np.ndarray


@dataclass
class _Block:
    logs: list[np.ndarray]
    tails: list[np.ndarray | None]
    log_unit: np.ndarray | None
    negative: bool
    parts: list[_Part]

    @property
    def size(self) -> int:
        return len(self.logs[0])


class RepEvaluator:
    """
    Evaluates a MeromorphicRep at complex z.

    Terms sharing a box and a unit share one tensor grid per level. The z-free
    part of every term (coefficient, cutoffs, smooth coefficients, weights) is
    compiled once per level into rows summed by (prefactor, power of z); the
    z-dependence is one complex exponential per exponent pattern.
    """

    def __init__(self, rep: MeromorphicRep, cfg: QuadConfig | None = None, branch: int = 1):
        self.rep = rep
        self.cfg = cfg or QuadConfig()
        self.branch = branch
        self.locations = sorted(rep.locations())
        self.threshold = rep.valid_threshold
        self._levels: dict[int, list[_Block]] = {}
        self._start = 0

    def _compile(self, level: int) -> list[_Block]:
        if level in self._levels:
            return self._levels[level]
        groups: dict = {}
        for term in self.rep.terms:
            groups.setdefault((term.piece.box, term.piece.unit), []).append(term)
        blocks = [self._block(box, unit, terms, level) for (box, unit), terms in groups.items()]
        if len(self._levels) >= _CACHED_LEVELS:
            del self._levels[max(self._levels, key=lambda k: abs(k - level))]
        self._levels[level] = blocks
        logger.debug(f"Уровень {level}: {len(blocks)} блоков, {sum(b.size for b in blocks)} узлов")
        return blocks

    def _block(self, box, unit, terms: Sequence[RepTerm], level: int) -> _Block:
        n = len(box)
        points, weights, tails = tensor_grid(piece_rules(box, self.cfg.order, level))
        logs = [np.log(p) for p in points]
        log_unit = unit.log_magnitude(n, points) if unit.base != 1 else None
        grouped: dict = {}
        for term in terms:
            piece = term.piece
            common = float(term.coefficient) * weights * piece.cutoff_product(points)
            rows = grouped.setdefault(piece.exponents, {})
            for k, values in enumerate(eval_many(piece.smooth.coeffs, points, n)):
                row = np.nan_to_num(common * values)
                key = (term.prefactor, k)
                rows[key] = rows[key] + row if key in rows else row
        parts = [_Part(exponents, list(rows), np.vstack(list(rows.values())))
                 for exponents, rows in grouped.items() if rows]
        return _Block(logs, [t if t.any() else None for t in tails], log_unit, unit.sign < 0, parts)

    def _block_value(self, block: _Block, z: complex, with_scale: bool = False) -> tuple[complex, float]:
        total, scale = 0j, 0.0
        for part in block.parts:
            exponent = z * block.log_unit if block.log_unit is not None else np.zeros(block.size, dtype=complex)
            for j, (a, b) in enumerate(part.exponents):
                w = float(a) * z + float(b)
                exponent = exponent + w * block.logs[j]
                if block.tails[j] is not None:
                    exponent = exponent + block.tails[j] * tail_log_correction(w)
            base = np.exp(exponent)
            values = part.rows @ base.real + 1j * (part.rows @ base.imag)
            magnitudes = np.abs(part.rows) @ np.abs(base) if with_scale else np.zeros(len(values))
            for (prefactor, k), value, magnitude in zip(part.keys, values, magnitudes):
                factor = complex(prefactor.evaluate(z)) * z ** k
                total += factor * value
                scale += abs(factor) * magnitude
        if block.negative:
            phase = cmath.exp(1j * cmath.pi * z * self.branch)
            total *= phase
            scale *= abs(phase)
        return total, scale

    def _level_sum(self, z: complex, level: int, with_scale: bool = False) -> tuple[complex, float]:
        value, scale = 0j, 0.0
        for block in self._compile(level):
            block_value, block_scale = self._block_value(block, complex(z), with_scale)
            value += block_value
            scale += block_scale
        return value, scale

    def value_at_level(self, z: complex, level: int) -> complex:
        """Sum over the terms with the fixed rule of the given level; no checks."""
        return self._level_sum(z, level)[0]

    def check(self, z: complex):
        if not z.real > self.threshold:
            error_msg = f"Re z = {z.real} не выше порога сходимости представления {self.threshold}"
            logger.error(error_msg)
            raise ZetaError(error_msg)
        for location in self.locations:
            if abs(z - float(location)) < EXCLUSION_RADIUS:
                error_msg = f"z = {z} лежит в окрестности кандидата в полюс {location}; используйте команду residues"
                logger.error(error_msg)
                raise PoleProximityError(error_msg, location)

    def evaluate(self, z: complex) -> tuple[complex, float]:
        """
        F(z) with an error estimate from two consecutive levels.

        @param z: Point above the validity threshold, away from candidate poles.
        @return: (value, error estimate).
        """
        z = complex(z)
        self.check(z)
        level = min(self._start, self.cfg.max_level - 1)
        previous = self.value_at_level(z, level)
        error = float("inf")
        while level < self.cfg.max_level:
            level += 1
            current, scale = self._level_sum(z, level, with_scale=True)
            error = abs(current - previous)
            if self.cfg.accepts(error, current, scale):
                self._start = level - 1
                return current, error
            previous = current
        error_msg = f"Квадратура не сошлась в z = {z} за {self.cfg.max_level} уровней"
        logger.error(error_msg)
        raise AccuracyError(error_msg, error)

    def evaluate_many(self, zs: Sequence[complex]) -> list[tuple[complex, float]]:
        return [self.evaluate(z) for z in zs]


def quad_piece(piece: PieceIntegrand, z: complex, cfg: QuadConfig | None = None, branch: int = 1) -> complex:
    """Integral of one piece integrand at z above its threshold."""
    threshold = piece.threshold()
    if threshold is not None and not complex(z).real > threshold:
        raise ValueError(f"Re z = {complex(z).real} не выше порога {threshold} куска {piece.label}")
    rep = MeromorphicRep((RepTerm(Fraction(1), Prefactor(), piece),), threshold or Fraction(0), 1, 0, piece.n)
    return RepEvaluator(rep, cfg, branch).evaluate(z)[0]


def eval_F(rep: MeromorphicRep, z: complex, cfg: QuadConfig | None = None, branch: int = 1) -> complex:
    return RepEvaluator(rep, cfg, branch).evaluate(z)[0]


def eval_F_many(rep: MeromorphicRep, zs: Sequence[complex], cfg: QuadConfig | None = None,
                branch: int = 1) -> list[tuple[complex, float]]:
    return RepEvaluator(rep, cfg, branch).evaluate_many(zs)


def contour_radius(rep: MeromorphicRep, location: Fraction, N: int) -> float:
    """
    min(1/(4N), half the distance to the nearest other candidate, distance to
    the validity boundary less 1/(8N)).
    """
    location = Fraction(location)
    radius = 1 / (4 * N)
    others = [abs(float(s - location)) for s in rep.locations() if s != location]
    if others:
        radius = min(radius, min(others) / 2)
    if np.isfinite(rep.valid_threshold):
        radius = min(radius, float(location) - rep.valid_threshold - 1 / (8 * N))
    if not radius > 2 * EXCLUSION_RADIUS:
        error_msg = f"Не удаётся выбрать радиус контура вокруг {location} (получено {radius:.3e})"
        logger.error(error_msg)
        raise RadiusError(error_msg, location)
    return radius


def _laurent(values: np.ndarray, offsets: np.ndarray, order: int) -> np.ndarray:
    # c_{-j} = mean of F * (z - s)^j over the circle
    return np.array([np.mean(values * offsets ** j) for j in range(order, 0, -1)])


def _trapezoid(evaluator: RepEvaluator, center: complex, radius: float, order: int,
               level: int) -> tuple[np.ndarray, int]:
    count = CONTOUR_NODES
    offsets = radius * np.exp(2j * np.pi * np.arange(count) / count)
    values = np.array([evaluator.value_at_level(center + o, level) for o in offsets])
    coefficients = _laurent(values, offsets, order)
    while count < CONTOUR_MAX_NODES:
        extra = radius * np.exp(2j * np.pi * (np.arange(count) + 0.5) / count)
        extra_values = np.array([evaluator.value_at_level(center + o, level) for o in extra])
        offsets = np.column_stack([offsets, extra]).ravel()
        values = np.column_stack([values, extra_values]).ravel()
        count *= 2
        refined = _laurent(values, offsets, order)
        scale = float(np.max(np.abs(refined))) if len(refined) else 0.0
        if np.max(np.abs(refined - coefficients), initial=0.0) <= max(CONTOUR_AGREEMENT * scale, RESIDUE_FLOOR / 10):
            return refined, count
        coefficients = refined
    logger.warning(f"Контур вокруг {center.real}: {CONTOUR_MAX_NODES} узлов без стабилизации")
    return coefficients, count


def residue_extract(rep: MeromorphicRep, location: Fraction, order_bound: int, cfg: QuadConfig | None = None, *,
                    N: int | None = None, radius: float | None = None, evaluator: RepEvaluator | None = None,
                    branch: int = 1) -> LaurentData:
    """
    Principal part of F at a candidate pole by trapezoidal contour integration.

    Every contour uses one fixed quadrature level, so the coefficients are
    compared across levels; coefficients below RESIDUE_FLOOR are reported as 0.

    @param location: Candidate pole location.
    @param order_bound: Number of coefficients c_{-1}..c_{-k} to extract.
    @param N: Denominator of the pole lattice; taken from the catalog when omitted.
    @return: LaurentData with the coefficients, the radius and the error estimate.
    """
    evaluator = evaluator or RepEvaluator(rep, cfg, branch)
    location = Fraction(location)
    N = N if N is not None else pole_catalog(rep).N
    radius = radius if radius is not None else contour_radius(rep, location, N)
    tolerance = min(evaluator.cfg.tol, RESIDUE_TOL)
    center = complex(float(location))
    previous, _ = _trapezoid(evaluator, center, radius, order_bound, 0)
    current, nodes, error = previous, CONTOUR_NODES, float("inf")
    for level in range(1, evaluator.cfg.max_level + 1):
        current, nodes = _trapezoid(evaluator, center, radius, order_bound, level)
        error = float(np.max(np.abs(current - previous), initial=0.0))
        scale = float(np.max(np.abs(current), initial=0.0))
        if error <= max(tolerance * scale, RESIDUE_FLOOR / 10):
            break
        previous = current
    else:
        logger.warning(f"Коэффициенты Лорана в {location} не стабилизировались: оценка {error:.3e}")
    coefficients = tuple(0j if abs(c) < RESIDUE_FLOOR else complex(c) for c in current)
    logger.debug(f"Лоран в {location}: r = {radius:.4g}, коэффициенты {coefficients}, оценка {error:.3e}")
    return LaurentData(location, coefficients, radius, error, nodes)


def pole_scan(rep: MeromorphicRep, catalog: PoleCatalog, cfg: QuadConfig | None = None,
              evaluator: RepEvaluator | None = None, branch: int = 1) -> tuple[ScanEntry, ...]:
    """Annotates every candidate CONFIRMED(order) or UNDETECTED."""
    evaluator = evaluator or RepEvaluator(rep, cfg, branch)
    entries = []
    for entry in catalog.entries:
        data = residue_extract(rep, entry.location, entry.order_bound, N=catalog.N, evaluator=evaluator)
        order = data.detected_order
        if order:
            logger.info(f"Полюс {entry.location} подтверждён, порядок {order}")
            entries.append(ScanEntry(entry.location, entry.order_bound, CONFIRMED, order, data))
        else:
            logger.warning(f"Кандидат {entry.location} не обнаружен: все коэффициенты ниже {RESIDUE_FLOOR}")
            entries.append(ScanEntry(entry.location, entry.order_bound, UNDETECTED, 0, data))
    return tuple(entries)


def log_canonical_threshold(scan: Sequence[ScanEntry]) -> Fraction | None:
    confirmed = [e.location for e in scan if e.status == CONFIRMED]
    return -max(confirmed) if confirmed else None


def eval_dF(rep: MeromorphicRep, z: complex, cfg: QuadConfig | None = None, evaluator: RepEvaluator | None = None,
            branch: int = 1, radius: float | None = None) -> complex:
    """F'(z) by the Cauchy formula on a circle inside the region of holomorphy."""
    evaluator = evaluator or RepEvaluator(rep, cfg, branch)
    z = complex(z)
    evaluator.check(z)
    if radius is None:
        limits = [0.1] + [abs(z - float(s)) / 2 for s in evaluator.locations]
        if np.isfinite(evaluator.threshold):
            limits.append((z.real - evaluator.threshold) / 2)
        radius = min(limits)
    offsets = radius * np.exp(2j * np.pi * np.arange(CONTOUR_NODES) / CONTOUR_NODES)
    values = np.array([evaluator.evaluate(z + o)[0] for o in offsets])
    return complex(np.mean(values / offsets))


def pole_orders(rep: MeromorphicRep) -> dict[Fraction, int]:
    """Largest prefactor multiplicity of every location over the terms."""
    orders: dict[Fraction, int] = {}
    for term in rep.terms:
        for location, count in term.prefactor.locations().items():
            orders[location] = max(orders.get(location, 0), count)
    return orders


def cleared_values(rep: MeromorphicRep, zs: Sequence[complex], cfg: QuadConfig | None = None,
                   evaluator: RepEvaluator | None = None, branch: int = 1) -> np.ndarray:
    """
    prod_s (z - s)^m_s * F(z) over the candidate poles s with multiplicities m_s.

    The product is entire; inside an exclusion zone it is evaluated by its mean
    over a small circle.
    """
    evaluator = evaluator or RepEvaluator(rep, cfg, branch)
    orders = {float(s): m for s, m in pole_orders(rep).items()}

    def cleared(w: complex) -> complex:
        factor = 1 + 0j
        for s, m in orders.items():
            factor *= (w - s) ** m
        return factor * evaluator.evaluate(w)[0]

    result = []
    for z in zs:
        z = complex(z)
        if any(abs(z - s) < 10 * EXCLUSION_RADIUS for s in orders):
            offsets = _CLEARING_RADIUS * np.exp(2j * np.pi * np.arange(CONTOUR_NODES) / CONTOUR_NODES)
            result.append(np.mean([cleared(z + o) for o in offsets]))
        else:
            result.append(cleared(z))
    return np.array(result, dtype=complex)


def cleared_sup(rep: MeromorphicRep, re_range: tuple[float, float], im_range: tuple[float, float],
                steps: int = 9, cfg: QuadConfig | None = None, evaluator: RepEvaluator | None = None,
                branch: int = 1) -> tuple[float, complex]:
    """Sampled sup of |cleared F| over a z-box inside the validity region, with its argmax."""
    evaluator = evaluator or RepEvaluator(rep, cfg, branch)
    zs = [complex(a, b) for a in np.linspace(*re_range, steps) for b in np.linspace(*im_range, steps)
          if a > evaluator.threshold + _CLEARING_RADIUS]
    if not zs:
        raise ZetaError(f"Прямоугольник {re_range} x {im_range} вне области представления")
    values = np.abs(cleared_values(rep, zs, evaluator=evaluator))
    k = int(np.argmax(values))
    return float(values[k]), zs[k]


def _coefficients(expr, var) -> np.ndarray:
    """Float coefficients, highest first, of the square-free part in var."""
    expr = sympy.expand(expr)
    if expr == 0 or var not in expr.free_symbols:
        return np.array([1.0])
    poly = sympy.sqf_part(sympy.Poly(expr, var))
    return np.array([float(c) for c in poly.all_coeffs()])


def _abscissas(coefficients, lo: float, hi: float, spread: float) -> list[float]:
    """
    Real parts in [lo, hi] of the roots lying within spread of the real axis.

    Roots on an end are kept: a zero of f on the boundary of the support needs
    the same grading as an interior one.
    """
    coefficients = np.trim_zeros(np.asarray(coefficients, dtype=float), "f")
    if len(coefficients) < 2:
        return []
    slack = (hi - lo) * 1e-12
    return sorted(min(max(float(r.real), lo), hi) for r in np.roots(coefficients)
                  if lo - slack <= r.real <= hi + slack and abs(r.imag) <= spread)


def _line_rule(lo: float, hi: float, graded: Sequence[float], plain: Sequence[float],
               order: int, level: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite rule on [lo, hi] split at every breakpoint, graded toward the graded ones."""
    merge = (hi - lo) * 1e-12
    items = sorted([(lo, False), (hi, False)] + [(p, True) for p in graded] + [(p, False) for p in plain])
    marks: list[tuple[float, bool]] = []
    for p, flag in items:
        p = min(max(p, lo), hi)
        if marks and p - marks[-1][0] <= merge:
            marks[-1] = (marks[-1][0], marks[-1][1] or flag)
        else:
            marks.append((p, flag))
    if marks[-1][0] != hi:
        marks[-1] = (hi, marks[-1][1])
    nodes, weights = [], []
    for (p, grade_p), (q, grade_q) in zip(marks, marks[1:]):
        rule = interval_rule(p, q, order, level, grade_p, grade_q)
        nodes.append(rule.nodes)
        weights.append(rule.weights)
    return np.concatenate(nodes), np.concatenate(weights)


def _inner_nodes(xs, wx, f_rows, g_rows, lo, hi, center, order, level):
    spread = (hi - lo) / UNIFORM_CELLS
    px, py, pw = [], [], []
    for i, (x, w) in enumerate(zip(xs, wx)):
        graded = _abscissas(f_rows[i], lo, hi, spread)
        plain = [center]
        for rows in g_rows:
            plain += _abscissas(rows[i], lo, hi, 1e-9 * (hi - lo))
        nodes, weights = _line_rule(lo, hi, graded, plain, order, level)
        px.append(np.full(len(nodes), x))
        py.append(nodes)
        pw.append(w * weights)
    return np.concatenate(px), np.concatenate(py), np.concatenate(pw)


def _coefficient_rows(expr, xs: np.ndarray) -> np.ndarray:
    """Coefficients in y (highest first) of the square-free part of expr at every x node."""
    x, y = VARIABLES
    expr = sympy.sqf_part(sympy.expand(expr))
    if y not in expr.free_symbols:
        return np.ones((len(xs), 1))
    coeffs = sympy.Poly(expr, y).all_coeffs()
    return np.column_stack(eval_many(coeffs, [xs], 1))


@dataclass
class _Cloud:
    weights: np.ndarray
    log_abs: np.ndarray
    negative: np.ndarray


class DirectOracle:
    """
    F(z) = integral over M of |f|^z (branch phase where f < 0) * phi, for
    Re z > 0, by quadrature in the original coordinates.

    Breakpoints are the real parts of the roots of f (graded), the roots of the
    constraints, the base point and the ends of the support of phi; in 2D the
    outer breakpoints come from discriminants, resultants and leading
    coefficients in y. The node cloud depends only on the problem and the
    level, so every z reuses it.
    """

    def __init__(self, problem: Problem, cfg: QuadConfig | None = None, n_jobs: int = 1):
        self.problem = problem
        self.cfg = cfg or QuadConfig.from_problem(problem)
        self.n_jobs = n_jobs
        self.branch = problem.branch_sign
        reach = problem.c1 * problem.eta
        self.exact_support = tuple((max(lo, c - reach), min(hi, c + reach))
                                   for (lo, hi), c in zip(problem.window, problem.center))
        self.support = tuple((float(lo), float(hi)) for lo, hi in self.exact_support)
        self._clouds: dict[int, _Cloud] = {}
        self._start = 0

    def _nodes_1d(self, level: int) -> tuple[list[np.ndarray], np.ndarray]:
        x = VARIABLES[0]
        lo, hi = self.support[0]
        graded = _abscissas(_coefficients(self.problem.f, x), lo, hi, (hi - lo) / UNIFORM_CELLS)
        plain = [float(self.problem.center[0])]
        for g in self.problem.constraints:
            plain += _abscissas(_coefficients(g, x), lo, hi, 1e-9 * (hi - lo))
        nodes, weights = _line_rule(lo, hi, graded, plain, self.problem.order, level)
        return [nodes], weights

    def _outer_breakpoints(self) -> list[float]:
        x, y = VARIABLES
        (lo, hi), _ = self.support
        ylo, yhi = (to_rational(v) for v in self.exact_support[1])
        f = sympy.sqf_part(sympy.expand(self.problem.f))
        constraints = [sympy.expand(g) for g in self.problem.constraints]
        exprs = []
        for h in [f] + constraints:
            exprs += [h.subs(y, ylo), h.subs(y, yhi)]
            degree = sympy.degree(h, y)
            if degree >= 1:
                exprs.append(sympy.Poly(h, y).LC())
            if degree >= 2:
                exprs.append(sympy.discriminant(h, y))
        for g, h in combinations([f] + constraints, 2):
            if sympy.degree(g, y) >= 1 and sympy.degree(h, y) >= 1:
                exprs.append(sympy.resultant(g, h, y))
        points = []
        for expr in exprs:
            points += _abscissas(_coefficients(expr, x), lo, hi, (hi - lo) / UNIFORM_CELLS)
        return points

    def _nodes_2d(self, level: int) -> tuple[list[np.ndarray], np.ndarray]:
        (lo, hi), (ylo, yhi) = self.support
        order = self.problem.order
        xs, wx = _line_rule(lo, hi, self._outer_breakpoints(), [float(self.problem.center[0])], order, level)
        f_rows = _coefficient_rows(self.problem.f, xs)
        g_rows = [_coefficient_rows(g, xs) for g in self.problem.constraints]
        chunks = np.array_split(np.arange(len(xs)), max(1, 4 * abs(self.n_jobs)))
        results = Parallel(n_jobs=self.n_jobs)(
            delayed(_inner_nodes)(xs[c], wx[c], f_rows[c], [rows[c] for rows in g_rows],
                                  ylo, yhi, float(self.problem.center[1]), order, level)
            for c in chunks if len(c))
        px = np.concatenate([r[0] for r in results])
        py = np.concatenate([r[1] for r in results])
        pw = np.concatenate([r[2] for r in results])
        return [px, py], pw

    def _cloud(self, level: int) -> _Cloud:
        if level in self._clouds:
            return self._clouds[level]
        problem = self.problem
        n = problem.dimension
        points, weights = self._nodes_1d(level) if n == 1 else self._nodes_2d(level)
        values = eval_many([problem.f, problem.phi_expr(), *problem.constraints], points, n)
        f, phi = values[0], values[1]
        weights = weights * phi
        for g in values[2:]:
            weights = weights * (g > 0)
        magnitude = np.abs(f)
        keep = (magnitude > 0) & (weights != 0)
        cloud = _Cloud(weights[keep], np.log(magnitude[keep]), (f < 0)[keep])
        if len(self._clouds) >= _CACHED_LEVELS:
            del self._clouds[max(self._clouds, key=lambda k: abs(k - level))]
        self._clouds[level] = cloud
        logger.debug(f"Оракул, уровень {level}: {len(cloud.weights)} узлов")
        return cloud

    def _level_sum(self, z: complex, level: int, derivative: bool = False) -> tuple[complex, float]:
        cloud = self._cloud(level)
        z = complex(z)
        phase = np.where(cloud.negative, cmath.exp(1j * cmath.pi * z * self.branch), 1.0)
        values = cloud.weights * np.exp(z * cloud.log_abs) * phase
        if derivative:
            values = values * (cloud.log_abs + 1j * np.pi * self.branch * cloud.negative)
        return complex(np.sum(values)), float(np.sum(np.abs(values)))

    def value_at_level(self, z: complex, level: int, derivative: bool = False) -> complex:
        return self._level_sum(z, level, derivative)[0]

    def evaluate(self, z: complex, derivative: bool = False) -> tuple[complex, float]:
        z = complex(z)
        if not z.real > 0:
            error_msg = f"Прямое интегрирование определено только при Re z > 0, получено {z}"
            logger.error(error_msg)
            raise ZetaError(error_msg)
        level = min(self._start, self.cfg.max_level - 1)
        previous = self.value_at_level(z, level, derivative)
        error = float("inf")
        while level < self.cfg.max_level:
            level += 1
            current, scale = self._level_sum(z, level, derivative)
            error = abs(current - previous)
            if self.cfg.accepts(error, current, scale):
                self._start = level - 1
                return current, error
            previous = current
        error_msg = f"Прямое интегрирование не сошлось в z = {z} за {self.cfg.max_level} уровней"
        logger.error(error_msg)
        raise AccuracyError(error_msg, error)


def direct_oracle(problem: Problem, z: complex, cfg: QuadConfig | None = None) -> complex:
    return DirectOracle(problem, cfg).evaluate(z)[0]


def derivative_oracle(problem: Problem, z: complex, cfg: QuadConfig | None = None) -> complex:
    """Integral of log(f) f^z phi over M for Re z > 0."""
    return DirectOracle(problem, cfg).evaluate(z, derivative=True)[0]


def verification_grid(re_values: Sequence[float] = VERIFY_RE,
                      im_values: Sequence[float] = VERIFY_IM) -> list[complex]:
    return [complex(a, b) for a in re_values for b in im_values]


def _deviation(value: complex, reference: complex, floor: float) -> float:
    difference = abs(value - reference)
    return difference / abs(reference) if abs(reference) > floor else difference


def verify_consistency(problem: Problem, depth: int | None = None, grid: Sequence[complex] | None = None,
                       cfg: QuadConfig | None = None, tolerance: float = VERIFY_TOL,
                       n_jobs: int = 1) -> VerifyReport:
    """
    Compares eval_F against the direct oracle on a z-grid in Re z > 0.

    A grid point whose evaluation fails is reported as failed with the cause.
    """
    resolution, rep = continue_problem(problem, depth, n_jobs=n_jobs)
    effective = resolution.problem
    cfg = cfg or QuadConfig.from_problem(problem)
    evaluator = RepEvaluator(rep, cfg, effective.branch_sign)
    oracle = DirectOracle(effective, cfg, n_jobs)
    points = []
    for z in grid if grid is not None else verification_grid():
        try:
            value, _ = evaluator.evaluate(z)
            reference, _ = oracle.evaluate(z)
        except ZetaError as e:
            points.append(VerifyPoint(complex(z), None, None, float("inf"), False, str(e)))
            continue
        deviation = _deviation(value, reference, cfg.abs_floor)
        points.append(VerifyPoint(complex(z), value, reference, deviation, deviation <= tolerance))
    report = VerifyReport(tuple(points), tolerance)
    logger.info(f"Проверка согласованности: {len(points)} точек, максимальное отклонение "
                f"{report.max_deviation:.3e}, {'PASS' if report.passed else 'FAIL'}")
    return report
