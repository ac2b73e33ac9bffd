"""
Report Formatters
Human-readable tables printed next to the JSON reports.
"""

from typing import Optional

from src.models.reports import ClosedTestReport, FitReport, IcTable
from src.services.scoring import CRITERIA


def format_pvalue(value: Optional[float]) -> str:
    """Five decimals without the leading zero, e.g. .09793"""
    if value is None:
        return "-"
    text = f"{value:.5f}"
    return text[1:] if text.startswith("0") else text


def format_number(value: Optional[float], digits: int = 2) -> str:
    return "NA" if value is None else f"{value:.{digits}f}"


# =============================================================================
# Closed test
# =============================================================================


def format_closed_test_table(report: ClosedTestReport) -> str:
    """Rows per null model: eta, LR, df, p and q for the elementary models"""
    header = f"{'Model':<6}{'eta_M':>7}{'LR_M':>12}{'nu_M':>6}{'p_M':>9}{'q_M':>9}"
    lines = [
        f"Closed LR test ({report.method}, alpha={report.alpha}, k={report.k}, "
        f"n={report.n})",
        header,
        "-" * len(header),
    ]
    for row in report.rows:
        lines.append(
            f"{row.model:<6}{row.eta:>7}{row.lr:>12.5f}{row.df:>6}"
            f"{format_pvalue(row.p_value(report.method)):>9}"
            f"{format_pvalue(report.adjusted.get(row.model)):>9}"
        )
    lines.append(f"{'VVV':<6}{report.vvv_eta:>7}")
    lines.append(f"Retained model: {report.retained}")
    return "\n".join(lines)


# =============================================================================
# Information criteria
# =============================================================================


def format_ic_table(table: IcTable) -> str:
    """2l and the eight criteria per model; * marks the best per criterion"""
    names = ["2l"] + [criterion.upper() for criterion in CRITERIA]
    lines = [f"{'Model':<6}" + "".join(f"{name:>11}" for name in names)]
    for row in table.rows:
        cells = [format_number(row.two_loglik)]
        for criterion in CRITERIA:
            mark = "*" if table.best.get(criterion) == row.model else " "
            cells.append(format_number(getattr(row, criterion)) + mark)
        lines.append(f"{row.model:<6}" + "".join(f"{cell:>11}" for cell in cells))
    return "\n".join(lines)


def format_fit_summary(report: FitReport) -> str:
    status = "converged" if report.converged else "NOT converged"
    text = (
        f"{report.model} (k={report.k}, n={report.n}, p={report.p}): "
        f"2l = {report.two_loglik:.2f}, eta = {report.eta}, "
        f"{report.iterations} iterations, {status}"
    )
    if report.misallocated is not None:
        text += f", {report.misallocated} misallocated"
    return text


def format_error(exc: Exception) -> str:
    return f"error: {type(exc).__name__}: {exc}"
