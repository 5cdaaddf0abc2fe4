# modules/problem.py
"""
Problem descriptions: the integrand data and the run settings, with an
INI-like text form that is loaded from and saved to problem files.
"""

import os
import re
from dataclasses import dataclass, fields, replace
from fractions import Fraction

import sympy
from sympy.parsing.sympy_parser import parse_expr

from constants import (BRANCHES, DEFAULT_BRANCH, DEFAULT_C0, DEFAULT_C1, DEFAULT_DEPTH, DEFAULT_ETA,
                       DEFAULT_TOL, DEFAULT_WINDOW, GL_ORDER, MAX_LEVEL, ABS_FLOOR)
from .errors import ProblemError
from .expr_kernel import VARIABLES, to_rational
from .logger import get_app_logger
from .profiles import CutoffProfile

logger = get_app_logger()

_ALLOWED = re.compile(r"^[0-9xy+\-*/^().\s]*$")
_INTERVAL = re.compile(r"\[\s*([^,\]]+?)\s*,\s*([^\]]+?)\s*\]")


@dataclass(frozen=True)
class Problem:
    dimension: int
    f: sympy.Expr
    constraints: tuple[sympy.Expr, ...] = ()
    window: tuple[tuple[Fraction, Fraction], ...] = ()
    center: tuple[Fraction, ...] = ()
    eta: Fraction = DEFAULT_ETA
    c0: Fraction = DEFAULT_C0
    c1: Fraction = DEFAULT_C1
    partition_c0: Fraction = DEFAULT_C0
    partition_c1: Fraction = DEFAULT_C1
    multiplier: sympy.Expr = sympy.S.One
    branch: str = DEFAULT_BRANCH
    depth: int = DEFAULT_DEPTH
    tol: float = DEFAULT_TOL
    order: int = GL_ORDER
    max_level: int = MAX_LEVEL
    abs_floor: float = ABS_FLOOR

    def __post_init__(self):
        if not self.window:
            object.__setattr__(self, "window", (DEFAULT_WINDOW,) * self.dimension)
        if not self.center:
            object.__setattr__(self, "center", (Fraction(0),) * self.dimension)

    @property
    def variables(self) -> tuple[sympy.Symbol, ...]:
        return VARIABLES[:self.dimension]

    @property
    def phi_profile(self) -> CutoffProfile:
        return CutoffProfile(self.c0, self.c1)

    @property
    def partition_profile(self) -> CutoffProfile:
        return CutoffProfile(self.partition_c0, self.partition_c1)

    @property
    def alpha_profile(self) -> CutoffProfile:
        return CutoffProfile.alpha(self.partition_c0)

    @property
    def branch_sign(self) -> int:
        return 1 if self.branch == "upper" else -1

    def phi_expr(self) -> sympy.Expr:
        """phi in the original coordinates (used by the direct oracle)."""
        value = self.multiplier
        for j, x in enumerate(self.variables):
            value = value * self.phi_profile.apply(sympy.Abs(x - to_rational(self.center[j])) / to_rational(self.eta))
        return value


def parse_polynomial(text: str, dimension: int | None = None, line: int | None = None) -> sympy.Expr:
    """Polynomial with rational coefficients in x (and y); '^' and '**' both mean power."""
    text = text.replace("−", "-").strip()
    if not text or not _ALLOWED.match(text):
        raise ProblemError(f"недопустимый многочлен: {text!r}", line)
    variables = VARIABLES if dimension is None else VARIABLES[:dimension]
    try:
        expr = parse_expr(text.replace("^", "**"), local_dict={str(v): v for v in VARIABLES})
    except (SyntaxError, TypeError, ValueError, sympy.SympifyError) as e:
        raise ProblemError(f"не удалось разобрать многочлен {text!r}: {e}", line)
    expr = sympy.expand(expr)
    if not expr.free_symbols <= set(variables) or not expr.is_polynomial(*VARIABLES):
        raise ProblemError(f"{text!r} не является многочленом от {', '.join(map(str, variables))}", line)
    return expr


def format_polynomial(expr) -> str:
    """Canonical text of a polynomial, re-parsed to the same expression."""
    expr = sympy.expand(expr)
    if expr == 0:
        return "0"
    poly = sympy.Poly(expr, *VARIABLES)
    terms = []
    for monom, coeff in poly.terms():
        parts = [str(v) if e == 1 else f"{v}^{e}" for v, e in zip(VARIABLES, monom) if e]
        body = "*".join(parts)
        if not body:
            terms.append(str(coeff))
        elif coeff == 1:
            terms.append(body)
        elif coeff == -1:
            terms.append("-" + body)
        else:
            terms.append(f"{coeff}*{body}")
    return " + ".join(terms).replace("+ -", "- ")


def _fraction(text: str, line: int) -> Fraction:
    try:
        return Fraction(text.strip().replace("−", "-"))
    except (ValueError, ZeroDivisionError):
        raise ProblemError(f"ожидалось рациональное число, получено {text!r}", line)


def _window(text: str, line: int) -> tuple[tuple[Fraction, Fraction], ...]:
    intervals = _INTERVAL.findall(text)
    remainder = _INTERVAL.sub("", text).replace("x", "").replace("×", "").strip()
    if not intervals or remainder:
        raise ProblemError(f"некорректное окно {text!r}; ожидается [lo, hi] или [lo, hi] x [lo, hi]", line)
    return tuple((_fraction(lo, line), _fraction(hi, line)) for lo, hi in intervals)


_SCHEMA = {
    "function": {"f", "dimension"},
    "domain": {"window", "constraints", "center"},
    "cutoff": {"eta", "c0", "c1", "partition_c0", "partition_c1", "multiplier"},
    "run": {"branch", "depth", "tol", "order", "max_level", "abs_floor"},
}


def _read_sections(text: str) -> dict[str, dict[str, tuple[str, int]]]:
    sections: dict[str, dict[str, tuple[str, int]]] = {}
    current = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ProblemError(f"некорректный заголовок секции {line!r}", number)
            current = line[1:-1].strip().lower()
            if current not in _SCHEMA:
                raise ProblemError(f"неизвестная секция [{current}]", number)
            if current in sections:
                raise ProblemError(f"повторная секция [{current}]", number)
            sections[current] = {}
            continue
        if "=" not in line:
            raise ProblemError(f"ожидалась строка вида ключ = значение: {line!r}", number)
        if current is None:
            raise ProblemError("ключ вне секции", number)
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lower()
        if key not in _SCHEMA[current]:
            raise ProblemError(f"неизвестный ключ {key!r} в секции [{current}]", number)
        if key in sections[current]:
            raise ProblemError(f"повторный ключ {key!r}", number)
        sections[current][key] = (value, number)
    return sections


def parse_problem(text: str) -> Problem:
    """Builds a Problem from problem-file text; every error names its line."""
    sections = _read_sections(text)
    function = sections.get("function", {})
    domain = sections.get("domain", {})
    cutoff = sections.get("cutoff", {})
    run = sections.get("run", {})
    if "f" not in function:
        raise ProblemError("не задана функция f в секции [function]")

    window = _window(*domain["window"]) if "window" in domain else None
    if "dimension" in function:
        value, number = function["dimension"]
        if value not in ("1", "2"):
            raise ProblemError(f"размерность должна быть 1 или 2, получено {value!r}", number)
        dimension = int(value)
    elif window is not None:
        dimension = len(window)
    else:
        dimension = 2 if "y" in function["f"][0] or "y" in domain.get("constraints", ("", 0))[0] else 1

    f_text, f_line = function["f"]
    f = parse_polynomial(f_text, dimension, f_line)
    if f == 0:
        raise ProblemError("f тождественно равна нулю", f_line)

    constraints = ()
    if "constraints" in domain:
        value, number = domain["constraints"]
        constraints = tuple(parse_polynomial(part, dimension, number) for part in value.split(";") if part.strip())
        if any(g == 0 for g in constraints):
            raise ProblemError("ограничение тождественно равно нулю", number)

    if window is None:
        window = (DEFAULT_WINDOW,) * dimension
    elif len(window) != dimension:
        raise ProblemError(f"окно задано для {len(window)} переменных, размерность {dimension}", domain["window"][1])

    center = (Fraction(0),) * dimension
    if "center" in domain:
        value, number = domain["center"]
        center = tuple(_fraction(part, number) for part in value.split(","))
        if len(center) != dimension:
            raise ProblemError("число координат базовой точки не совпадает с размерностью", number)

    kwargs = {}
    for key in ("eta", "c0", "c1", "partition_c0", "partition_c1"):
        if key in cutoff:
            kwargs[key] = _fraction(*cutoff[key])
    if "multiplier" in cutoff:
        kwargs["multiplier"] = parse_polynomial(cutoff["multiplier"][0], dimension, cutoff["multiplier"][1])

    if "branch" in run:
        value, number = run["branch"]
        if value not in BRANCHES:
            raise ProblemError(f"ветвь должна быть upper или lower, получено {value!r}", number)
        kwargs["branch"] = value
    for key, cast in (("depth", int), ("order", int), ("max_level", int), ("tol", float), ("abs_floor", float)):
        if key in run:
            value, number = run[key]
            try:
                kwargs[key] = cast(value)
            except ValueError:
                raise ProblemError(f"некорректное значение {key} = {value!r}", number)

    problem = Problem(dimension=dimension, f=f, constraints=constraints, window=window, center=center, **kwargs)
    validate_problem(problem, sections)
    return problem


def _line_of(sections, section: str, key: str) -> int | None:
    return sections.get(section, {}).get(key, (None, None))[1]


def validate_problem(problem: Problem, sections=None):
    sections = sections or {}
    for j, (lo, hi) in enumerate(problem.window):
        if not lo < hi:
            raise ProblemError(f"пустое окно по переменной {j}", _line_of(sections, "domain", "window"))
        if not lo <= problem.center[j] <= hi:
            raise ProblemError("базовая точка вне окна", _line_of(sections, "domain", "center"))
    if problem.eta <= 0:
        raise ProblemError("η должно быть положительным", _line_of(sections, "cutoff", "eta"))
    if not 0 < problem.c0 < problem.c1:
        raise ProblemError("требуется 0 < c0 < c1", _line_of(sections, "cutoff", "c0"))
    if not 0 < problem.partition_c0 < min(problem.partition_c1, Fraction(1)):
        raise ProblemError("требуется 0 < partition_c0 < min(partition_c1, 1)",
                           _line_of(sections, "cutoff", "partition_c0"))
    if problem.depth < 0:
        raise ProblemError("глубина должна быть неотрицательной", _line_of(sections, "run", "depth"))
    if problem.tol <= 0 or problem.abs_floor <= 0:
        raise ProblemError("допуски должны быть положительными", _line_of(sections, "run", "tol"))
    if problem.order < 2 or problem.max_level < 1:
        raise ProblemError("order >= 2 и max_level >= 1", _line_of(sections, "run", "order"))


def emit_problem(problem: Problem) -> str:
    """Problem-file text; parse_problem(emit_problem(p)) == p."""
    window = " x ".join(f"[{lo}, {hi}]" for lo, hi in problem.window)
    lines = [
        "[function]",
        f"f = {format_polynomial(problem.f)}",
        f"dimension = {problem.dimension}",
        "",
        "[domain]",
        f"window = {window}",
        f"center = {', '.join(str(c) for c in problem.center)}",
    ]
    if problem.constraints:
        lines.append(f"constraints = {'; '.join(format_polynomial(g) for g in problem.constraints)}")
    lines += [
        "",
        "[cutoff]",
        f"eta = {problem.eta}",
        f"c0 = {problem.c0}",
        f"c1 = {problem.c1}",
        f"partition_c0 = {problem.partition_c0}",
        f"partition_c1 = {problem.partition_c1}",
        f"multiplier = {format_polynomial(problem.multiplier)}",
        "",
        "[run]",
        f"branch = {problem.branch}",
        f"depth = {problem.depth}",
        f"tol = {problem.tol!r}",
        f"order = {problem.order}",
        f"max_level = {problem.max_level}",
        f"abs_floor = {problem.abs_floor!r}",
    ]
    return "\n".join(lines) + "\n"


def load_problem(path: str) -> Problem:
    """
    Loads a problem file.

    @param path: Path to the problem file.
    @return: Parsed Problem.
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except FileNotFoundError:
        error_msg = f"Файл задачи не найден: {path}"
        logger.error(error_msg)
        raise ProblemError(error_msg)
    except OSError as e:
        error_msg = f"Ошибка при чтении {path}: {e}"
        logger.error(error_msg, exc_info=True)
        raise ProblemError(error_msg)
    try:
        problem = parse_problem(text)
    except ProblemError as e:
        logger.error(f"Ошибка в файле задачи {path}: {e}")
        raise
    logger.info(f"Задача загружена из {path}: f = {format_polynomial(problem.f)}, n = {problem.dimension}")
    return problem


def save_problem(problem: Problem, path: str):
    """
    Saves a problem to a file in canonical form.

    @param problem: Problem to save.
    @param path: Target path.
    """
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(emit_problem(problem))
    logger.info(f"Задача сохранена в {path}")


def with_overrides(problem: Problem, **overrides) -> Problem:
    """Problem with command-line overrides of the run settings applied."""
    known = {f.name for f in fields(Problem)}
    changes = {k: v for k, v in overrides.items() if v is not None and k in known}
    return replace(problem, **changes) if changes else problem
