# modules/continuation.py
"""
Meromorphic continuation of piece integrals by integration by parts.

Each IBP in a free variable x_j lowers the half-plane of convergence by
1/a_j and contributes the prefactor 1/(a_j z + b_j + 1). Differentiating a
cutoff b(c p/q) produces a wedge factor B(c p/q) whose support bounds p/q
away from 0 and infinity; wedges are settled before further IBPs:

- Case 1: the wedge bounds every free variable away from 0, the term is entire;
- Case 2: it bounds a proper subset J, which is frozen and the remaining
  variables are continued recursively;
- Case 3: free variables sit on both sides of the ratio; powers are equalized
  and the ratio is split by alpha(x_l/x_m) with x_l -> x_l x_m and the
  symmetric substitution.
"""

from collections import Counter
from dataclasses import dataclass, replace
from fractions import Fraction
from math import lcm
from typing import Sequence

import numpy as np
from joblib import Parallel, delayed

from constants import TERM_BUDGET
from .errors import CertificationError, ResourceError
from .expr_kernel import VARIABLES, Monomial, UnitPower, interval_eval, log_derivative, subst_monomial, to_rational
from .geometry import resolve
from .logger import get_app_logger
from .pieces import CutoffRecord, PieceIntegrand, root_bound, round_down
from .profiles import CutoffProfile

logger = get_app_logger()

CASE1, CASE2, CASE3 = "CASE1", "CASE2", "CASE3"


@dataclass(frozen=True)
class Prefactor:
    """prod 1/(a z + b) over the factors, kept sorted."""

    factors: tuple[tuple[Fraction, Fraction], ...] = ()

    def times(self, a: Fraction, b: Fraction) -> "Prefactor":
        return Prefactor(tuple(sorted(self.factors + ((a, b),))))

    def __mul__(self, other: "Prefactor") -> "Prefactor":
        return Prefactor(tuple(sorted(self.factors + other.factors)))

    def evaluate(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        value = np.ones_like(z)
        for a, b in self.factors:
            value = value / (float(a) * z + float(b))
        return value

    def locations(self) -> Counter:
        return Counter(-b / a for a, b in self.factors)

    def __str__(self) -> str:
        return "".join(f"/({a}z+{b})" for a, b in self.factors) or "1"


@dataclass(frozen=True)
class RepTerm:
    coefficient: Fraction
    prefactor: Prefactor
    piece: PieceIntegrand


@dataclass(frozen=True)
class MeromorphicRep:
    terms: tuple[RepTerm, ...]
    target: Fraction
    n0: int
    depth: int
    dimension: int
    trace: tuple[str, ...] = ()

    @property
    def valid_threshold(self) -> float:
        """Every term integral converges for Re z above this value."""
        values = [t.piece.threshold() for t in self.terms]
        values = [float(v) for v in values if v is not None]
        return max(values) if values else float("-inf")

    def locations(self) -> set[Fraction]:
        result = set()
        for term in self.terms:
            result.update(term.prefactor.locations())
        return result

    @property
    def is_entire(self) -> bool:
        return not any(t.prefactor.factors for t in self.terms)


@dataclass(frozen=True)
class ContinuationConfig:
    depth: int
    alpha: CutoffProfile = CutoffProfile.alpha(Fraction(1, 2))
    term_budget: int = TERM_BUDGET
    trace: bool = False
    n_jobs: int = 1


@dataclass(frozen=True)
class PoleEntry:
    location: Fraction
    order_bound: int


@dataclass(frozen=True)
class PoleCatalog:
    entries: tuple[PoleEntry, ...]
    N: int
    target: Fraction

    @property
    def locations(self) -> tuple[Fraction, ...]:
        return tuple(e.location for e in self.entries)


class _Context:
    def __init__(self, limit: Fraction, config: ContinuationConfig):
        self.limit = limit
        self.config = config
        self.count = 0
        self.lines: list[str] = []

    def tick(self):
        self.count += 1
        if self.count > self.config.term_budget:
            error_msg = f"Превышен бюджет термов ({self.config.term_budget}); уменьшите глубину"
            logger.error(error_msg)
            raise ResourceError(error_msg)

    def log(self, level: int, tag: str, piece: PieceIntegrand, detail: str = ""):
        if self.config.trace:
            self.lines.append(f"{'  ' * level}{tag} {piece.label}{' ' + detail if detail else ''}")


def _substitute(piece: PieceIntegrand, images: Sequence[Monomial]) -> PieceIntegrand:
    """Applies x_j -> images[j] to every factor except the exponents and the box."""
    mapping = {VARIABLES[j]: image.to_expr() for j, image in enumerate(images)}
    return replace(
        piece,
        unit=UnitPower(subst_monomial(piece.unit.base, images), piece.unit.sign),
        smooth=piece.smooth.subst(mapping),
        cutoffs=tuple(r.subst(images) for r in piece.cutoffs),
    )


def derivative_split(piece: PieceIntegrand, j: int) -> list[tuple[str, PieceIntegrand]]:
    """
    Product-rule expansion of d/dx_j of (unit power * smooth * cutoffs).

    Unit and smooth children carry b_j + 1; cutoff children absorb the 1/x_j of
    the Euler derivative into s = (x_j dc/dx_j + m c)/c and keep b_j.
    """
    a, b = piece.exponents[j]
    raised = piece.exponents[:j] + ((a, b + 1),) + piece.exponents[j + 1:]
    children = []
    if piece.unit.depends_on(j):
        smooth = piece.smooth.times_z().scale(log_derivative(piece.unit.base, j))
        if not smooth.is_zero:
            children.append(("D-UNIT", replace(piece, exponents=raised, smooth=smooth)))
    smooth = piece.smooth.diff(j)
    if not smooth.is_zero:
        children.append(("D-SMOOTH", replace(piece, exponents=raised, smooth=smooth)))
    for k, record in enumerate(piece.cutoffs):
        if not record.involves(j):
            continue
        s = record.derivative_factor(j)
        if s == 0:
            continue
        cutoffs = piece.cutoffs[:k] + (record.raised(),) + piece.cutoffs[k + 1:]
        children.append((f"D-CUTOFF[{k}]", replace(piece, smooth=piece.smooth.scale(s), cutoffs=cutoffs)))
    return children


def _merge(children: list[tuple[str, PieceIntegrand]]) -> list[tuple[str, PieceIntegrand]]:
    """Sums children that differ only in the smooth factor."""
    merged: dict = {}
    order = []
    for tag, child in children:
        key = child.structure_key()
        if key in merged:
            old_tag, old = merged[key]
            merged[key] = (f"{old_tag}+{tag}", replace(old, smooth=old.smooth + child.smooth))
        else:
            merged[key] = (tag, child)
            order.append(key)
    return [merged[key] for key in order if not merged[key][1].smooth.is_zero]


def ibp_step(piece: PieceIntegrand, j: int) -> tuple[tuple[Fraction, Fraction], list[tuple[Fraction, str, PieceIntegrand]]]:
    """One integration by parts in free variable j: the prefactor and the signed children."""
    a, b = piece.exponents[j]
    if a <= 0 or piece.box[j][0] != 0:
        raise ValueError(f"IBP невозможно по переменной {j}: a = {a}, нижняя грань {piece.box[j][0]}")
    cycle = (j + 1) % piece.n
    children = [(Fraction(-1), tag, replace(child, cycle=cycle).with_path(f"{tag}@{j}"))
                for tag, child in derivative_split(piece, j)]
    return (a, b + 1), children


def _free_sides(piece: PieceIntegrand, record: CutoffRecord) -> tuple[tuple[int, ...], tuple[int, ...]]:
    free = piece.free_indices
    return record.p.only(free).support, record.q.only(free).support


def _first_wedge(piece: PieceIntegrand) -> CutoffRecord | None:
    for record in piece.cutoffs:
        if record.is_wedge and any(_free_sides(piece, record)):
            return record
    return None


def classify(piece: PieceIntegrand, record: CutoffRecord) -> tuple[str, tuple[int, ...]]:
    """Case of a wedge factor relative to the free variables, with the bounded set J."""
    on_p, on_q = _free_sides(piece, record)
    if on_p and on_q:
        return CASE3, on_p + on_q
    bounded = on_p or on_q
    return (CASE1 if set(bounded) == set(piece.free_indices) else CASE2), bounded


def case1_bound(piece: PieceIntegrand, record: CutoffRecord) -> PieceIntegrand | None:
    """
    Lower box faces for the free variables of a single-sided wedge.

    On the support c0 <= c p/q <= c1 of B, the free monomial is bounded below;
    with upper faces on the others this bounds each variable. Returns None when
    the wedge support misses the box.
    """
    free = piece.free_indices
    on_p, on_q = _free_sides(piece, record)
    c = interval_eval(record.c, piece.box)
    c_lo, c_hi = float(c.a), float(c.b)
    if c_hi <= 0:
        return None
    if on_p:
        monomial = record.p.only(free)
        rest_lo, _ = record.q.bounds(piece.box)
        _, other_hi = record.p.without(free).bounds(piece.box)
        bound = float(record.profile.c0) * rest_lo / (c_hi * other_hi)
    else:
        monomial = record.q.only(free)
        rest_lo, _ = record.p.bounds(piece.box)
        _, other_hi = record.q.without(free).bounds(piece.box)
        bound = max(c_lo, 0.0) * rest_lo / (float(record.profile.c1) * other_hi)
    if not bound > 0:
        error_msg = f"Не удалось ограничить клин {record}: нижняя оценка {bound} не положительна"
        logger.error(error_msg)
        raise CertificationError(error_msg, chart=piece.label)
    box = list(piece.box)
    for j in monomial.support:
        others = 1.0
        for i in monomial.support:
            if i != j:
                others *= float(piece.box[i][1]) ** monomial[i]
        lo = round_down((bound / others) ** (1.0 / monomial[j]))
        if lo <= 0:
            error_msg = f"Нулевая нижняя грань для переменной {j} при ограничении клина {record}"
            logger.error(error_msg)
            raise CertificationError(error_msg, chart=piece.label)
        if lo >= piece.box[j][1]:
            return None
        box[j] = (lo, piece.box[j][1])
    return replace(piece, box=tuple(box))


def equalize_powers(piece: PieceIntegrand, record: CutoffRecord) -> PieceIntegrand:
    """x_j -> x_j^M_j so that every free variable of the ratio appears to the same power."""
    free = set(piece.free_indices)
    powers = {j: abs(record.ratio[j]) for j in record.ratio.support if j in free}
    common = lcm(*powers.values())
    scale = {j: common // e for j, e in powers.items() if common // e != 1}
    if not scale:
        return piece
    images = [Monomial.variable(j, piece.n, scale.get(j, 1)) for j in range(piece.n)]
    result = _substitute(piece, images)
    exponents = list(piece.exponents)
    box = list(piece.box)
    factor = 1
    for j, m in scale.items():
        a, b = exponents[j]
        exponents[j] = (m * a, m * b + m - 1)
        box[j] = (Fraction(0), root_bound(piece.box[j][1], m))
        factor *= m
    return replace(result, exponents=tuple(exponents), box=tuple(box),
                   smooth=result.smooth.scale(factor)).normalized()


def case3_split(piece: PieceIntegrand, l: int, m: int, alpha: CutoffProfile) -> tuple[PieceIntegrand, PieceIntegrand]:
    """alpha(x_l/x_m) with x_l -> x_l x_m, and alpha(x_m/x_l) with x_m -> x_m x_l."""
    result = []
    for first, second in ((l, m), (m, l)):
        ratio = Monomial.variable(first, piece.n) / Monomial.variable(second, piece.n)
        with_alpha = replace(piece, cutoffs=piece.cutoffs + (CutoffRecord.build(alpha, ratio),))
        images = [Monomial.variable(j, piece.n) for j in range(piece.n)]
        images[first] = Monomial.variable(first, piece.n) * Monomial.variable(second, piece.n)
        substituted = _substitute(with_alpha, images)
        exponents = list(piece.exponents)
        a_first, b_first = exponents[first]
        a_second, b_second = exponents[second]
        exponents[second] = (a_second + a_first, b_second + b_first + 1)
        box = list(piece.box)
        box[first] = (Fraction(0), alpha.c1)
        result.append(replace(substituted, exponents=tuple(exponents), box=tuple(box))
                      .normalized().with_path(f"CASE3[{first}/{second}]"))
    return result[0], result[1]


def _ibp_variable(piece: PieceIntegrand, limit: Fraction) -> int | None:
    free = set(piece.free_indices)
    for step in range(piece.n):
        j = (piece.cycle + step) % piece.n
        a, b = piece.exponents[j]
        if j in free and a > 0 and -(b + 1) / a > limit:
            return j
    return None


class _Frontier:
    """Pending (coefficient, prefactor, piece) triples; equal structures share one smooth factor."""

    def __init__(self):
        self._items: dict = {}

    def push(self, coefficient: Fraction, prefactor: Prefactor, piece: PieceIntegrand):
        key = (prefactor, piece.structure_key())
        if key not in self._items:
            self._items[key] = (coefficient, prefactor, piece)
            return
        kept, _, old = self._items[key]
        smooth = old.smooth + piece.smooth.scale(to_rational(coefficient / kept))
        if smooth.is_zero:
            del self._items[key]
        else:
            self._items[key] = (kept, prefactor, replace(old, smooth=smooth))

    def pop(self) -> tuple[Fraction, Prefactor, PieceIntegrand]:
        return self._items.pop(next(iter(self._items)))

    def __bool__(self) -> bool:
        return bool(self._items)

    def terms(self) -> list[RepTerm]:
        return [RepTerm(c, prefactor, piece) for c, prefactor, piece in self._items.values()]


def _expand(coefficient: Fraction, prefactor: Prefactor, piece: PieceIntegrand,
            ctx: _Context, level: int = 0) -> list[RepTerm]:
    """Rewrites one piece until every term converges below the limit."""
    if level > piece.n:
        raise RuntimeError("Глубина рекурсии случая 2 превысила размерность")
    out = _Frontier()
    pending = _Frontier()
    pending.push(coefficient, prefactor, piece)
    while pending:
        coefficient, prefactor, piece = pending.pop()
        ctx.tick()
        record = _first_wedge(piece)
        if record is not None:
            case, bounded = classify(piece, record)
            if case == CASE3:
                on_p, on_q = _free_sides(piece, record)
                l, m = min(on_p), min(on_q)
                equalized = equalize_powers(piece, record)
                if equalized is not piece:
                    ctx.log(level, "EQUALIZE", piece, str(record))
                first, second = case3_split(equalized, l, m, ctx.config.alpha)
                ctx.log(level, "CASE3-SPLIT", piece, f"x{l}/x{m}")
                pending.push(coefficient, prefactor, first)
                pending.push(coefficient, prefactor, second)
                continue
            if case == CASE1:
                bounded_piece = case1_bound(piece, record)
                ctx.log(level, CASE1, piece, str(record))
                if bounded_piece is not None:
                    out.push(coefficient, prefactor, bounded_piece.with_path(CASE1))
                continue
            ctx.log(level, CASE2, piece, f"J={bounded}")
            for term in case2_reduce(piece, record, ctx, level):
                out.push(coefficient * term.coefficient, prefactor * term.prefactor, term.piece)
            continue
        j = _ibp_variable(piece, ctx.limit)
        if j is None:
            out.push(coefficient, prefactor, piece)
            continue
        (a, b), children = ibp_step(piece, j)
        ctx.log(level, "IBP", piece, f"x{j} -> 1/({a}z+{b})")
        for tag, child in _merge([(tag, child) for _, tag, child in children]):
            for part in tag.split("+"):
                ctx.log(level + 1, part.split("[")[0] if part.startswith("D-CUTOFF") else part, child)
            pending.push(-coefficient, prefactor.times(a, b), child)
    return out.terms()


def case2_reduce(piece: PieceIntegrand, record: CutoffRecord, ctx: _Context, level: int) -> list[RepTerm]:
    """Freezes the wedge-bounded variables and continues in the remaining free ones."""
    frozen = case1_bound(piece, record)
    if frozen is None:
        return []
    assert len(frozen.free_indices) < len(piece.free_indices), "Мера завершения не убывает"
    return _expand(Fraction(1), Prefactor(), frozen.with_path(CASE2), ctx, level + 1)


def continuation_target(pieces: Sequence[PieceIntegrand], depth: int) -> tuple[Fraction, int]:
    """-(L+1)/N0 with N0 the smallest positive exponent a_j over all pieces."""
    values = [a.numerator for p in pieces for a, _ in p.exponents if a > 0]
    n0 = min(values) if values else 1
    return Fraction(-(depth + 1), n0), n0


def _expand_piece(piece: PieceIntegrand, limit: Fraction, config: ContinuationConfig):
    ctx = _Context(limit, config)
    ctx.log(0, "PIECE", piece)
    terms = _expand(Fraction(1), Prefactor(), piece, ctx)
    return terms, ctx.lines, ctx.count


def continue_to(pieces: Sequence[PieceIntegrand], config: ContinuationConfig) -> MeromorphicRep:
    """
    MeromorphicRep valid on Re z > -(depth+1)/N0.

    Terms are rewritten until their thresholds drop below the target by a
    margin of 1/(2 N0), which keeps contours around the deepest candidates
    inside the region of convergence.
    """
    target, n0 = continuation_target(pieces, config.depth)
    limit = target - Fraction(1, 2 * n0)
    logger.info(f"Продолжение: {len(pieces)} кусков, цель {target}, N0 = {n0}")
    results = Parallel(n_jobs=config.n_jobs)(delayed(_expand_piece)(p, limit, config) for p in pieces)
    terms, trace, count = [], [], 0
    for piece_terms, lines, piece_count in results:
        terms.extend(piece_terms)
        trace.extend(lines)
        count += piece_count
    if count > config.term_budget:
        error_msg = f"Превышен бюджет термов ({config.term_budget}); уменьшите глубину"
        logger.error(error_msg)
        raise ResourceError(error_msg)
    terms.sort(key=lambda t: (t.piece.label, t.piece.path, str(t.prefactor)))
    logger.info(f"Представление построено: {len(terms)} термов, {count} переписываний")
    return MeromorphicRep(tuple(terms), target, n0, config.depth,
                          pieces[0].n if pieces else 0, tuple(trace))


def pole_catalog(rep: MeromorphicRep) -> PoleCatalog:
    """Candidate poles at or above the target with order bounds clamped to the dimension."""
    orders: dict[Fraction, int] = {}
    a_values = []
    for term in rep.terms:
        a_values.extend(a.numerator for a, _ in term.prefactor.factors)
        for location, count in term.prefactor.locations().items():
            if location >= rep.target:
                orders[location] = max(orders.get(location, 0), count)
    n = max(rep.dimension, 1)
    entries = []
    for location in sorted(orders, reverse=True):
        order = orders[location]
        if order > n:
            logger.warning(f"Кратность {order} в {location} ограничена размерностью {n}")
            order = n
        entries.append(PoleEntry(location, order))
    N = lcm(*a_values) if a_values else rep.n0
    logger.info(f"Каталог полюсов: {len(entries)} кандидатов, N = {N}")
    return PoleCatalog(tuple(entries), N, rep.target)


def continue_problem(problem, depth: int | None = None, trace: bool = False, n_jobs: int = 1):
    """
    Resolution and MeromorphicRep of a problem.

    @param problem: Problem to continue.
    @param depth: Continuation depth L, the problem's depth when omitted.
    @return: (Resolution, MeromorphicRep); the resolution carries the effective eta.
    """
    resolution = resolve(problem)
    config = ContinuationConfig(depth=problem.depth if depth is None else depth,
                                alpha=resolution.problem.alpha_profile, trace=trace, n_jobs=n_jobs)
    return resolution, continue_to(resolution.pieces, config)
