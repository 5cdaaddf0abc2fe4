# modules/geometry.py
"""
Local monomialization and pullback of the integrand to piece integrands.

Around the base point c, each sign pattern of x - c (a side in 1D, a
quadrant in 2D) is treated in coordinates X = sign * (x - c) > 0. There the
Newton fan of all factors (f and the constraint polynomials) is refined to a
unimodular fan; every cone gives a toric chart X = s^u t^v on which each
factor is a monomial times a strict transform. Real roots of univariate
strict-transform factors inside the chart box (all nonzero roots in 1D, the
edge roots of quasi-homogeneous factors in 2D) are split off by a second 1D
monomialization s = root +/- s' with a root-neighbourhood cutoff, the rest of
the box being covered by gap pieces. The cutoff phi and the partition of
unity subordinate to the fan are pulled back as cutoff records.
"""

from dataclasses import dataclass, field, replace
from fractions import Fraction
from itertools import product
from typing import Sequence

import numpy as np
import sympy

from constants import DELTA_HALVINGS, ETA_HALVINGS, ROOT_PRECISION
from .errors import CertificationError, DegeneracyError
from .expr_kernel import (VARIABLES, Monomial, UnitPower, ZPolynomial, certify_unit,
                          factor_monomial, to_fraction, to_rational)
from .logger import get_app_logger
from .newton import check_nondegenerate, newton_polygon, unimodular_fan
from .pieces import CutoffRecord, PieceIntegrand, round_down
from .problem import Problem
from .profiles import CutoffProfile

logger = get_app_logger()


@dataclass(frozen=True)
class RealRoot:
    value: Fraction
    exact: bool
    multiplicity: int


def isolate_real_roots(expr, j: int, lo: Fraction, hi: Fraction) -> list[RealRoot]:
    """
    Real roots in [lo, hi] of a polynomial in variable j.

    Rational roots are exact (linear factors over Q); irrational roots are
    isolated and refined to rational approximations within ROOT_PRECISION.
    """
    x = VARIABLES[j]
    poly = sympy.Poly(expr, x)
    if poly.degree() <= 0:
        return []
    roots = []
    _, factors = poly.factor_list()
    for factor, multiplicity in factors:
        if factor.degree() == 1:
            a, b = factor.all_coeffs()
            value = to_fraction(-b / a)
            if lo <= value <= hi:
                roots.append(RealRoot(value, True, multiplicity))
            continue
        for (s, t), _ in factor.intervals(eps=to_rational(ROOT_PRECISION),
                                          inf=to_rational(lo), sup=to_rational(hi)):
            value = (to_fraction(s) + to_fraction(t)) / 2
            roots.append(RealRoot(value, False, multiplicity))
    return sorted(roots, key=lambda r: r.value)


@dataclass(frozen=True)
class Shift:
    """Chart variable s_j replaced by root + side * s_j."""

    root: Fraction
    side: int


@dataclass(frozen=True)
class Chart:
    """x = center + signs * images(s), followed by optional per-variable shifts."""

    label: str
    center: tuple[Fraction, ...]
    signs: tuple[int, ...]
    images: tuple[Monomial, ...]
    box: tuple[tuple[Fraction, Fraction], ...]
    shifts: tuple[Shift | None, ...] = ()

    @property
    def n(self) -> int:
        return len(self.center)

    def _shifts(self) -> tuple[Shift | None, ...]:
        return self.shifts or (None,) * self.n

    def toric_map(self) -> dict:
        return {VARIABLES[j]: to_rational(self.center[j]) + self.signs[j] * self.images[j].to_expr()
                for j in range(self.n)}

    def shift_map(self) -> dict:
        return {VARIABLES[j]: to_rational(s.root) + s.side * VARIABLES[j]
                for j, s in enumerate(self._shifts()) if s is not None}

    def pull(self, expr) -> sympy.Expr:
        expr = sympy.sympify(expr).xreplace(self.toric_map())
        mapping = self.shift_map()
        return expr.xreplace(mapping) if mapping else expr

    def jacobian(self) -> tuple[Monomial, sympy.Expr]:
        """|det D(chart)| as chart monomial times a smooth positive factor."""
        exponents = [sum(image[k] for image in self.images) - 1 for k in range(self.n)]
        smooth = sympy.S.One
        for k, s in enumerate(self._shifts()):
            if s is not None:
                smooth = smooth * (to_rational(s.root) + s.side * VARIABLES[k]) ** exponents[k]
                exponents[k] = 0
        return Monomial(tuple(exponents)), smooth

    def forward(self, points: Sequence[np.ndarray]) -> list[np.ndarray]:
        """Original coordinates of chart points."""
        chart = [np.asarray(p, dtype=float) for p in points]
        for k, s in enumerate(self._shifts()):
            if s is not None:
                chart[k] = float(s.root) + s.side * chart[k]
        return [float(self.center[j]) + self.signs[j] * self.images[j].values(chart)
                for j in range(self.n)]


@dataclass(frozen=True)
class Factorization:
    monomial: Monomial
    unit: sympy.Expr
    sign: int = 0


@dataclass(frozen=True)
class QuasibumpPiece:
    """One summand of the partition of phi, as cutoff records in the X coordinates."""

    cone: int
    records: tuple[CutoffRecord, ...]


@dataclass(frozen=True)
class Segment:
    kind: str  # "full", "gap" or "root"
    lo: Fraction
    hi: Fraction
    root: Fraction | None = None
    side: int = 0
    smooth: sympy.Expr = sympy.S.One
    record: CutoffRecord | None = None

    @property
    def tag(self) -> str:
        if self.kind == "root":
            return f"r{float(self.root):.6g}{'+' if self.side > 0 else '-'}"
        if self.kind == "gap":
            return f"g[{float(self.lo):.6g},{float(self.hi):.6g}]"
        return ""


@dataclass(frozen=True)
class ResolvedChart:
    """A chart on which every factor is monomial times a certified unit."""

    chart: Chart
    factors: dict = field(compare=False)
    records: tuple[CutoffRecord, ...] = ()
    smooth: sympy.Expr = sympy.S.One
    jacobian: Monomial | None = None


@dataclass(frozen=True)
class Resolution:
    problem: Problem
    pieces: tuple[PieceIntegrand, ...]
    charts: tuple[ResolvedChart, ...]
    dropped: tuple[str, ...]
    partition_error: float


class _Uncertified(Exception):
    def __init__(self, chart: str, factor: str, obstruction: str | None = None):
        self.chart = chart
        self.factor = factor
        self.obstruction = obstruction
        super().__init__(f"{factor} в карте {chart}")


def quasibump_partition(fan: Sequence[tuple[int, int]] | None, eta: Fraction, phi: CutoffProfile,
                        alpha: CutoffProfile, n: int) -> list[QuasibumpPiece]:
    """
    Splits phi(X) = prod_j b(X_j / eta) along the fan.

    Piece i carries alpha(1/m_w) for the interior rays before cone i and
    alpha(m_w) for the ray closing it, with m_w = X1^w2 X2^-w1; the products
    telescope to 1 because alpha(t) + alpha(1/t) = 1.
    """
    base = tuple(CutoffRecord.build(phi, Monomial.variable(j, n), 1 / to_rational(eta)) for j in range(n))
    if n == 1 or fan is None or len(fan) == 2:
        return [QuasibumpPiece(0, base)]
    interior = fan[1:-1]
    pieces = []
    for i in range(len(fan) - 1):
        records = list(base)
        for w in interior[:i]:
            records.append(CutoffRecord.build(alpha, Monomial((-w[1], w[0]))))
        if i < len(interior):
            w = interior[i]
            records.append(CutoffRecord.build(alpha, Monomial((w[1], -w[0]))))
        pieces.append(QuasibumpPiece(i, tuple(records)))
    return pieces


def verify_partition(pieces: Sequence[QuasibumpPiece], eta: Fraction, phi: CutoffProfile, n: int,
                     samples: int = 25) -> float:
    """Max |sum_i phi_i - phi| on a sample grid of the positive orthant."""
    axis = np.geomspace(1e-3, float(phi.c1 * eta) * 1.05, samples)
    grid = np.meshgrid(*([axis] * n), indexing="ij")
    total = np.zeros(grid[0].shape)
    for piece in pieces:
        value = np.ones(grid[0].shape)
        for record in piece.records:
            value = value * record.values(grid, n)
        total += value
    expected = np.ones(grid[0].shape)
    for j in range(n):
        expected = expected * phi.evaluate(grid[j] / float(eta))
    return float(np.max(np.abs(total - expected)))


def _local_factor(expr, center, signs, n) -> sympy.Expr:
    mapping = {VARIABLES[j]: to_rational(center[j]) + signs[j] * VARIABLES[j] for j in range(n)}
    return sympy.expand(sympy.sympify(expr).xreplace(mapping))


def _sign_patterns(problem: Problem, eta: Fraction) -> list[tuple[tuple[int, ...], tuple[Fraction, ...]]]:
    """Included sign patterns with the distance from the base point to the window per axis."""
    sides = []
    for j in range(problem.dimension):
        lo, hi = problem.window[j]
        c = problem.center[j]
        options = []
        if hi > c:
            options.append((1, hi - c))
        if lo < c:
            options.append((-1, c - lo))
        sides.append(options)
    patterns = []
    for combo in product(*sides):
        patterns.append((tuple(s for s, _ in combo), tuple(d for _, d in combo)))
    return patterns


def _strict_transform_obstruction(unit, box, n) -> str | None:
    """Roots of a non-univariate strict-transform factor on the coordinate edges of the box."""
    if n == 1:
        return None
    _, factors = sympy.factor_list(unit, *VARIABLES[:n])
    for factor, _ in factors:
        if len(factor.free_symbols) < 2:
            continue
        for j in range(n):
            other = 1 - j
            restricted = sympy.expand(factor.xreplace({VARIABLES[j]: 0}))
            if isinstance(restricted, sympy.Expr) and restricted.free_symbols == {VARIABLES[other]}:
                if isolate_real_roots(restricted, other, box[other][0], box[other][1]):
                    return f"строгое преобразование {factor} не одномерно и имеет корни на ребре"
    return None


def _segments(j: int, roots: Sequence[Fraction], hi: Fraction, delta: Fraction,
              partition: CutoffProfile, n: int, hard_edge: bool = False) -> list[Segment]:
    """
    1D partition of [0, hi] in chart variable j around the given roots.

    A hard upper edge (a window cutting phi) without roots gets a core piece
    b(s / delta) at 0 so that the free variable vanishes at its upper face.
    """
    x = VARIABLES[j]
    if not roots and hard_edge:
        core = hi / (2 * partition.c1)
        record = CutoffRecord.build(partition, Monomial.variable(j, n), 1 / to_rational(core))
        return [Segment("core", Fraction(0), partition.c1 * core, record=record),
                Segment("gap", partition.c0 * core, hi,
                        smooth=1 - partition.apply(x / to_rational(core)))]
    if not roots:
        return [Segment("full", Fraction(0), hi)]
    width = partition.c1 * delta
    record = CutoffRecord.build(partition, Monomial.variable(j, n), 1 / to_rational(delta))
    segments = []
    for root in roots:
        segments.append(Segment("root", Fraction(0), width, root, -1, record=record))
        if root < hi:
            segments.append(Segment("root", Fraction(0), width, root, 1, record=record))
    points = [Fraction(0)] + list(roots) + ([hi] if roots[-1] < hi else [])
    is_root = set(roots)
    for p, q in zip(points, points[1:]):
        lo = p + partition.c0 * delta if p in is_root else p
        top = q - partition.c0 * delta if q in is_root else q
        if lo >= top:
            continue
        smooth = sympy.S.One
        if p in is_root:
            smooth *= 1 - partition.apply((x - to_rational(p)) / to_rational(delta))
        if q in is_root:
            smooth *= 1 - partition.apply((to_rational(q) - x) / to_rational(delta))
        segments.append(Segment("gap", lo, top, smooth=smooth))
    return segments


def _initial_delta(roots: Sequence[Fraction], hi: Fraction, eta: Fraction, partition: CutoffProfile) -> Fraction:
    limits = [eta, roots[0] / 2]
    limits += [(b - a) / 2 for a, b in zip(roots, roots[1:])]
    if roots[-1] < hi:
        limits.append(hi - roots[-1])
    return round_down(float(min(limits) / partition.c1)) or min(limits) / (2 * partition.c1)


def _shift_factorization(toric: Factorization, segments: Sequence[Segment], multiplicity: dict,
                         name: str, n: int) -> Factorization:
    exponents = list(toric.monomial.exponents)
    mapping, extra, drop = {}, sympy.S.One, {}
    for j, segment in enumerate(segments):
        if segment.kind != "root":
            continue
        image = to_rational(segment.root) + segment.side * VARIABLES[j]
        mapping[VARIABLES[j]] = image
        extra = extra * image ** exponents[j]
        drop[j] = multiplicity.get((j, segment.root, name), 0)
        exponents[j] = drop[j]
    if not mapping:
        return toric
    poly = sympy.Poly(sympy.expand(toric.unit.xreplace(mapping)), *VARIABLES[:n])
    unit = sympy.S.Zero
    for monom, coeff in poly.terms():
        if any(monom[j] < drop[j] for j in drop):
            continue
        unit += coeff * sympy.Mul(*[VARIABLES[k] ** (monom[k] - drop.get(k, 0)) for k in range(n)])
    return Factorization(Monomial(tuple(exponents)), unit * extra)


def product_resolve(problem: Problem, eta: Fraction | None = None) -> tuple[list[ResolvedChart], float]:
    """
    Charts on which f and every constraint polynomial are simultaneously monomial.

    Raises DegeneracyError for Newton-degenerate factors and _Uncertified when a
    unit cannot be certified at this eta.
    """
    eta = problem.eta if eta is None else eta
    n = problem.dimension
    names = ["f"] + [f"g{k + 1}" for k in range(len(problem.constraints))]
    exprs = [problem.f] + list(problem.constraints)
    resolved: list[ResolvedChart] = []
    partition_error = 0.0
    for signs, reach in _sign_patterns(problem, eta):
        pattern = "q" + "".join("+" if s > 0 else "-" for s in signs)
        local = [_local_factor(e, problem.center, signs, n) for e in exprs]
        fan = None
        if n == 2:
            normals = []
            for name, expr in zip(names, local):
                polygon = newton_polygon(sympy.Poly(expr, *VARIABLES))
                check_nondegenerate(polygon, f"{name} в квадранте {pattern}")
                normals.extend(polygon.normals)
            fan = unimodular_fan(normals)
            logger.debug(f"Квадрант {pattern}: веер {fan}")
        quasibumps = quasibump_partition(fan, eta, problem.phi_profile, problem.alpha_profile, n)
        partition_error = max(partition_error, verify_partition(quasibumps, eta, problem.phi_profile, n))
        cones = list(zip(fan, fan[1:])) if fan is not None else [None]
        for quasibump, cone in zip(quasibumps, cones):
            if cone is None:
                images = tuple(Monomial.variable(j, n) for j in range(n))
            else:
                u, v = cone
                images = (Monomial((u[0], v[0])), Monomial((u[1], v[1])))
            records = [r.subst(images) for r in quasibump.records]
            box, hard = [], []
            for k in range(n):
                bounds = [b for b in (r.upper_bound(k) for r in records) if b is not None]
                if not bounds:
                    raise RuntimeError(f"Переменная {k} карты не ограничена сверху")
                top = min(bounds)
                # 1D windows may cut phi: the cut is a hard edge of the box
                hard.append(n == 1 and reach[k] < top)
                box.append((Fraction(0), min(top, reach[k]) if n == 1 else top))
            label = f"{pattern}/c{quasibump.cone}"
            chart = Chart(label, problem.center, signs, images, tuple(box))
            toric = {}
            for name, expr in zip(names, exprs):
                monomial, unit = factor_monomial(chart.pull(expr), n)
                toric[name] = Factorization(monomial, unit)
            resolved.extend(_split_chart(chart, toric, records, problem, eta, tuple(hard)))
    return resolved, partition_error


def _split_chart(chart: Chart, toric: dict, records: list, problem: Problem, eta: Fraction,
                 hard: tuple[bool, ...]) -> list[ResolvedChart]:
    n = chart.n
    roots: dict[int, list[Fraction]] = {j: [] for j in range(n)}
    multiplicity: dict = {}
    for name, fz in toric.items():
        _, factors = sympy.factor_list(fz.unit, *VARIABLES[:n])
        for factor, power in factors:
            symbols = factor.free_symbols
            if len(symbols) != 1:
                continue
            j = VARIABLES.index(next(iter(symbols)))
            lo, hi = chart.box[j]
            for root in isolate_real_roots(factor, j, lo, hi):
                if root.value <= 0:
                    continue
                key = (j, root.value, name)
                multiplicity[key] = multiplicity.get(key, 0) + root.multiplicity * power
                if root.value not in roots[j]:
                    roots[j].append(root.value)
    for j in roots:
        roots[j].sort()
    partition = problem.partition_profile
    deltas = {j: _initial_delta(rs, chart.box[j][1], eta, partition) for j, rs in roots.items() if rs}
    failure = None
    for _ in range(DELTA_HALVINGS + 1):
        try:
            return _certified_pieces(chart, toric, records, problem, roots, deltas, multiplicity, hard)
        except _Uncertified as error:
            failure = error
            if not deltas:
                raise
            deltas = {j: d / 2 for j, d in deltas.items()}
            logger.debug(f"Карта {chart.label}: уменьшение радиуса окрестностей корней до {deltas}")
    raise failure


def _certified_pieces(chart, toric, records, problem, roots, deltas, multiplicity, hard) -> list[ResolvedChart]:
    n = chart.n
    partition = problem.partition_profile
    per_variable = [_segments(j, roots[j], chart.box[j][1], deltas.get(j, Fraction(0)), partition, n, hard[j])
                    for j in range(n)]
    result = []
    for segments in product(*per_variable):
        tags = [s.tag for s in segments if s.tag]
        label = chart.label + ("/" + ",".join(tags) if tags else "")
        shifts = tuple(Shift(s.root, s.side) if s.kind == "root" else None for s in segments)
        box = tuple((s.lo, s.hi) for s in segments)
        sub_chart = replace(chart, label=label, box=box, shifts=shifts)
        factors = {}
        for name, fz in toric.items():
            shifted = _shift_factorization(fz, segments, multiplicity, name, n)
            certificate = certify_unit(shifted.unit, box)
            if certificate is None:
                obstruction = _strict_transform_obstruction(fz.unit, chart.box, n)
                raise _Uncertified(label, name, obstruction)
            factors[name] = replace(shifted, sign=certificate.sign)
        pulled = list(records)
        smooth = sympy.S.One
        for j, segment in enumerate(segments):
            if segment.kind == "root":
                pulled = [r.shifted(j, to_rational(segment.root), segment.side) if r.involves(j) else r
                          for r in pulled]
            if segment.record is not None:
                pulled.append(segment.record)
            smooth = smooth * segment.smooth
        jacobian, jacobian_smooth = sub_chart.jacobian()
        result.append(ResolvedChart(sub_chart, factors, tuple(pulled), smooth * jacobian_smooth, jacobian))
    return result


def monomialize_1d(f, window: tuple[Fraction, Fraction], center: Fraction = Fraction(0),
                   eta: Fraction | None = None) -> list[tuple[Chart, sympy.Expr, Monomial]]:
    """Charts x = root +/- s and gap charts covering the window near the base point."""
    problem = Problem(dimension=1, f=sympy.sympify(f), window=(window,), center=(center,),
                      eta=eta if eta is not None else max(abs(window[0] - center), abs(window[1] - center)))
    charts, _ = product_resolve(problem)
    return [(rc.chart, rc.factors["f"].unit, rc.factors["f"].monomial) for rc in charts]


def monomialize_2d_newton(f, center=(Fraction(0), Fraction(0)), eta: Fraction = Fraction(1)
                          ) -> list[tuple[Chart, sympy.Expr, Monomial]]:
    """Toric charts of the Newton fan at the base point; degenerate edges are an error."""
    window = tuple((c - eta, c + eta) for c in center)
    problem = Problem(dimension=2, f=sympy.sympify(f), window=window, center=tuple(center), eta=eta)
    charts, _ = product_resolve(problem)
    return [(rc.chart, rc.factors["f"].unit, rc.factors["f"].monomial) for rc in charts]


def pullback(resolved: ResolvedChart, problem: Problem) -> PieceIntegrand | None:
    """Piece integrand of a resolved chart, or None when the chart lies outside the domain M."""
    chart = resolved.chart
    for name, fz in resolved.factors.items():
        if name != "f" and fz.sign < 0:
            logger.debug(f"Карта {chart.label} отброшена: {name} < 0")
            return None
    f = resolved.factors["f"]
    exponents = tuple((Fraction(f.monomial[j]), Fraction(resolved.jacobian[j])) for j in range(chart.n))
    smooth = resolved.smooth * chart.pull(problem.multiplier)
    piece = PieceIntegrand(
        exponents=exponents,
        unit=UnitPower(f.unit, f.sign),
        smooth=ZPolynomial.constant(smooth),
        cutoffs=resolved.records,
        box=chart.box,
        label=chart.label,
    )
    return piece.normalized()


def resolve(problem: Problem) -> Resolution:
    """
    Full local resolution with adaptive eta.

    eta is halved (at most ETA_HALVINGS times) until every unit is certified;
    the effective eta is recorded in the returned problem.
    """
    eta = problem.eta
    for j in range(problem.dimension):
        for side, distance in ((1, problem.window[j][1] - problem.center[j]),
                               (-1, problem.center[j] - problem.window[j][0])):
            if problem.dimension == 2 and 0 < distance < problem.c1 * eta:
                eta = distance / problem.c1
                logger.warning(f"Окно не содержит носитель φ: η уменьшено до {eta}")
    failure = None
    for attempt in range(ETA_HALVINGS + 1):
        try:
            charts, partition_error = product_resolve(problem, eta)
            break
        except _Uncertified as error:
            failure = error
            eta = eta / 2
            logger.warning(f"Не удалось сертифицировать единицу {error.factor} в карте {error.chart}; η = {eta}")
    else:
        if failure.obstruction:
            error_msg = f"Локальная мономиализация невозможна: {failure.obstruction}"
            logger.error(error_msg)
            raise DegeneracyError(error_msg, chart=failure.chart)
        error_msg = f"Не удалось сертифицировать единицу {failure.factor} после {ETA_HALVINGS} уменьшений η"
        logger.error(error_msg)
        raise CertificationError(error_msg, chart=failure.chart)

    effective = replace(problem, eta=eta)
    pieces, dropped = [], []
    for resolved in charts:
        piece = pullback(resolved, effective)
        if piece is None:
            dropped.append(resolved.chart.label)
        else:
            pieces.append(piece)
    logger.info(f"Разрешение: {len(charts)} карт, {len(pieces)} кусков, {len(dropped)} отброшено, η = {eta}")
    return Resolution(effective, tuple(pieces), tuple(charts), tuple(dropped), partition_error)
