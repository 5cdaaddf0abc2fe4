# modules/cli.py
"""
Command-line front end: zeta <command> <problem-file> [options].

Result tables go to stdout as CSV, diagnostics to stderr. Exit codes: 0 on
success, 1 on usage and problem-file errors, 2 on certification or
degeneracy failures, 3 on resource, accuracy, proximity and radius failures
and on a failed verify.
"""

import argparse
import sys

import numpy as np

from constants import BRANCHES, EXCLUSION_RADIUS, EXIT_OK, EXIT_RESOURCE, EXIT_USAGE, OUTPUT_DIR
from .continuation import continue_problem, pole_catalog
from .errors import ZetaError
from .logger import AppLogger, get_app_logger
from .numerics import RepEvaluator, log_canonical_threshold, pole_scan, verify_consistency
from .problem import load_problem, validate_problem, with_overrides
from .quadrature import QuadConfig
from .reports import (eval_table, generate_summary_report, laurent_table, plot_table, poles_table,
                      save_reports, to_csv_text, trace_text, verify_table)

logger = get_app_logger()

COMMANDS = ("poles", "eval", "verify", "residues", "trace")


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1; 2 belongs to certification failures."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: ошибка: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _complex(text: str) -> complex:
    try:
        re_part, im_part = text.split(",")
        return complex(float(re_part), float(im_part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"ожидалось re,im, получено {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="zeta", description="Мероморфное продолжение локальных дзета-функций")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("problem", help="файл задачи")
    parser.add_argument("--depth", type=int, help="глубина продолжения L")
    parser.add_argument("--tol", type=float, help="относительный допуск квадратуры")
    parser.add_argument("--z", type=_complex, action="append", default=[], help="точка re,im (повторяемый)")
    parser.add_argument("--branch", choices=BRANCHES, help="ветвь log(-1) = +iπ (upper) или -iπ (lower)")
    parser.add_argument("--plot", nargs=3, metavar=("A", "B", "N"), help="|F| на отрезке [A, B] вещественной оси")
    parser.add_argument("--trace", action="store_true", help="дерево переписываний в stderr")
    parser.add_argument("--save", nargs="?", const=OUTPUT_DIR, metavar="DIR", help="сохранить CSV и текстовый отчёт")
    parser.add_argument("--jobs", type=int, default=1, help="число параллельных процессов")
    parser.add_argument("--verbose", action="store_true", help="журнал уровня INFO в stderr")
    return parser


def _emit(table, args, name: str, report_text: str | None = None):
    sys.stdout.write(to_csv_text(table))
    if args.save:
        save_reports(args.save, name, table, report_text)


def _continue(problem, args, trace: bool = False):
    resolution, rep = continue_problem(problem, trace=trace or args.trace, n_jobs=args.jobs)
    if args.trace and args.command != "trace":
        sys.stderr.write(trace_text(rep))
    return resolution, rep


def _scan(problem, args):
    resolution, rep = _continue(problem, args)
    catalog = pole_catalog(rep)
    evaluator = RepEvaluator(rep, QuadConfig.from_problem(problem), resolution.problem.branch_sign)
    scan = pole_scan(rep, catalog, evaluator=evaluator)
    if rep.is_entire:
        print("ENTIRE", file=sys.stderr)
    elif all(piece.unit.sign > 0 for piece in resolution.pieces):
        lct = log_canonical_threshold(scan)
        if lct is not None:
            print(f"lct = {lct}", file=sys.stderr)
    return resolution, rep, catalog, scan


def run_poles(problem, args) -> int:
    resolution, rep, catalog, scan = _scan(problem, args)
    _emit(poles_table(scan), args, "poles", generate_summary_report(resolution, rep, catalog, scan))
    return EXIT_OK


def run_residues(problem, args) -> int:
    resolution, rep, catalog, scan = _scan(problem, args)
    _emit(laurent_table(scan), args, "residues", generate_summary_report(resolution, rep, catalog, scan))
    return EXIT_OK


def _plot_points(args, evaluator: RepEvaluator) -> list[float]:
    try:
        a, b, count = float(args.plot[0]), float(args.plot[1]), int(args.plot[2])
    except ValueError:
        raise ZetaError(f"--plot ожидает A B N, получено {' '.join(args.plot)}")
    if count < 2 or not a < b:
        raise ZetaError("--plot: требуется A < B и N >= 2")
    points = []
    for x in np.linspace(a, b, count):
        if x <= evaluator.threshold or any(abs(x - float(s)) < EXCLUSION_RADIUS for s in evaluator.locations):
            logger.warning(f"Точка {x} пропущена: вне области представления или у кандидата в полюс")
            continue
        points.append(float(x))
    return points


def run_eval(problem, args) -> int:
    if not args.z and not args.plot:
        print("eval: укажите хотя бы одну точку --z re,im или --plot A B N", file=sys.stderr)
        return EXIT_USAGE
    resolution, rep = _continue(problem, args)
    evaluator = RepEvaluator(rep, QuadConfig.from_problem(problem), resolution.problem.branch_sign)
    if args.z:
        values = [(z, *evaluator.evaluate(z)) for z in args.z]
        _emit(eval_table(values), args, "eval")
    if args.plot:
        samples = [(x, abs(evaluator.evaluate(complex(x))[0])) for x in _plot_points(args, evaluator)]
        if args.z:
            sys.stdout.write("\n")
        _emit(plot_table(samples), args, "plot")
    return EXIT_OK


def run_verify(problem, args) -> int:
    report = verify_consistency(problem, n_jobs=args.jobs)
    _emit(verify_table(report), args, "verify")
    print(f"Максимальное относительное отклонение {report.max_deviation:.3e}: "
          f"{'PASS' if report.passed else 'FAIL'}", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_RESOURCE


def run_trace(problem, args) -> int:
    _, rep = _continue(problem, args, trace=True)
    sys.stdout.write(trace_text(rep))
    return EXIT_OK


_RUNNERS = {
    "poles": run_poles,
    "eval": run_eval,
    "verify": run_verify,
    "residues": run_residues,
    "trace": run_trace,
}


def run_command(command: str, problem, args) -> int:
    """Runs one command on a validated problem and returns the exit status."""
    try:
        return _RUNNERS[command](problem, args)
    except ZetaError as e:
        print(f"Ошибка: {e}", file=sys.stderr)
        return e.exit_code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        AppLogger().set_console_level("INFO")
    try:
        problem = load_problem(args.problem)
        problem = with_overrides(problem, depth=args.depth, tol=args.tol, branch=args.branch)
        validate_problem(problem)
    except ZetaError as e:
        print(f"Ошибка: {e}", file=sys.stderr)
        return e.exit_code
    logger.info(f"Команда {args.command} для {args.problem}")
    return run_command(args.command, problem, args)
