# modules/reports.py
import os
from datetime import datetime
from typing import Sequence

import pandas as pd

from .continuation import MeromorphicRep, PoleCatalog
from .geometry import Resolution
from .logger import get_app_logger
from .numerics import CONFIRMED, ScanEntry, VerifyReport, log_canonical_threshold
from .problem import format_polynomial

logger = get_app_logger()

POLE_COLUMNS = ["location_num", "location_den", "order_bound", "status", "residue_re", "residue_im", "residue_err"]
EVAL_COLUMNS = ["z_re", "z_im", "F_re", "F_im", "err_est"]
PLOT_COLUMNS = ["z_re", "|F|"]
VERIFY_COLUMNS = ["z_re", "z_im", "F_re", "F_im", "oracle_re", "oracle_im", "deviation", "status"]
LAURENT_COLUMNS = ["location_num", "location_den", "j", "coefficient_re", "coefficient_im", "radius", "err", "status"]


def poles_table(scan: Sequence[ScanEntry]) -> pd.DataFrame:
    """Catalog with statuses and residues c_{-1}, one row per candidate, deepest last."""
    rows = [{
        "location_num": entry.location.numerator,
        "location_den": entry.location.denominator,
        "order_bound": entry.order_bound,
        "status": entry.status,
        "residue_re": entry.residue.real,
        "residue_im": entry.residue.imag,
        "residue_err": entry.laurent.error,
    } for entry in scan]
    return pd.DataFrame(rows, columns=POLE_COLUMNS)


def laurent_table(scan: Sequence[ScanEntry]) -> pd.DataFrame:
    """Full principal parts: c_{-j} for j = 1..order bound at every candidate."""
    rows = []
    for entry in scan:
        for j in range(1, entry.order_bound + 1):
            c = entry.laurent.coefficient(j)
            rows.append({
                "location_num": entry.location.numerator,
                "location_den": entry.location.denominator,
                "j": j,
                "coefficient_re": c.real,
                "coefficient_im": c.imag,
                "radius": entry.laurent.radius,
                "err": entry.laurent.error,
                "status": entry.status,
            })
    return pd.DataFrame(rows, columns=LAURENT_COLUMNS)


def eval_table(values: Sequence[tuple[complex, complex, float]]) -> pd.DataFrame:
    rows = [{"z_re": z.real, "z_im": z.imag, "F_re": value.real, "F_im": value.imag, "err_est": error}
            for z, value, error in values]
    return pd.DataFrame(rows, columns=EVAL_COLUMNS)


def plot_table(samples: Sequence[tuple[float, float]]) -> pd.DataFrame:
    return pd.DataFrame(list(samples), columns=PLOT_COLUMNS)


def verify_table(report: VerifyReport) -> pd.DataFrame:
    rows = []
    for point in report.points:
        value = point.rep_value if point.rep_value is not None else complex("nan")
        reference = point.oracle_value if point.oracle_value is not None else complex("nan")
        rows.append({
            "z_re": point.z.real,
            "z_im": point.z.imag,
            "F_re": value.real,
            "F_im": value.imag,
            "oracle_re": reference.real,
            "oracle_im": reference.imag,
            "deviation": point.deviation,
            "status": "PASS" if point.passed else "FAIL",
        })
    return pd.DataFrame(rows, columns=VERIFY_COLUMNS)


def to_csv_text(table: pd.DataFrame) -> str:
    return table.to_csv(index=False, float_format="%.12g", lineterminator="\n")


def trace_text(rep: MeromorphicRep) -> str:
    return "\n".join(rep.trace) + ("\n" if rep.trace else "")


def generate_summary_report(resolution: Resolution, rep: MeromorphicRep, catalog: PoleCatalog,
                            scan: Sequence[ScanEntry] | None = None) -> str:
    """
    Plain-text analytical summary of a run.

    @param resolution: Resolution with the effective problem.
    @param rep: Meromorphic representation.
    @param catalog: Pole catalog of the representation.
    @param scan: Pole scan, when it was run.
    @return: Report text.
    """
    problem = resolution.problem
    lines = []
    for entry in scan or ():
        mark = f"подтверждён, порядок {entry.order}" if entry.status == CONFIRMED else "не обнаружен"
        lines.append(f"- z = {entry.location}: кратность не выше {entry.order_bound}, {mark}, "
                     f"вычет {entry.residue.real:.6g}{entry.residue.imag:+.6g}i")
    if scan is None:
        lines = [f"- z = {e.location}: кратность не выше {e.order_bound}" for e in catalog.entries]
    catalog_str = "\n".join(lines) if lines else "- кандидатов нет (F целая)"

    lct = log_canonical_threshold(scan) if scan else None
    nonnegative = all(piece.unit.sign > 0 for piece in resolution.pieces)
    if lct is not None and nonnegative:
        lct_str = f"{lct}"
    elif not nonnegative:
        lct_str = "не определён: f меняет знак на M"
    else:
        lct_str = "не определён: подтверждённых полюсов нет"

    constraints = "; ".join(format_polynomial(g) for g in problem.constraints) or "нет"
    dropped = ", ".join(resolution.dropped) or "нет"

    report = f"""Аналитический отчет по мероморфному продолжению локальной дзета-функции

Дата формирования: {datetime.now().strftime('%d.%m.%Y %H:%M')}

Задача:
- f = {format_polynomial(problem.f)}, размерность {problem.dimension}
- Ограничения g > 0: {constraints}
- Эффективное η = {problem.eta}, ветвь {problem.branch}

Разрешение:
- Карт: {len(resolution.charts)}, кусков: {len(resolution.pieces)}
- Отброшенные карты (g < 0): {dropped}
- Погрешность разбиения единицы на сетке: {resolution.partition_error:.3e}

Продолжение:
- Глубина L = {rep.depth}, N0 = {rep.n0}, N = {catalog.N}
- Представление справедливо при Re z > {rep.valid_threshold:.6g}; термов: {len(rep.terms)}
- Каталог покрывает Re z >= {catalog.target}

Кандидаты в полюса:
{catalog_str}

Лог-канонический порог: {lct_str}

Отчет сформирован автоматически.
"""
    return report


def save_reports(directory: str, name: str, table: pd.DataFrame, report_text: str | None = None):
    """
    Writes the command's CSV table and, when given, the text summary.

    @param directory: Output directory, created when missing.
    @param name: Base name of the files.
    """
    os.makedirs(directory, exist_ok=True)
    results_path = os.path.join(directory, f"{name}.csv")
    table.to_csv(results_path, index=False, float_format="%.12g", encoding="utf-8")
    logger.info(f"Результаты сохранены: {results_path}")
    if report_text is not None:
        report_path = os.path.join(directory, f"{name}_report.txt")
        with open(report_path, "w", encoding="utf-8") as f:
            f.write(report_text)
        logger.info(f"Аналитический отчёт сохранён: {report_path}")
