"""
Data Repository - File Access for Observations and Reports
CSV in (numeric columns, optional header, optional trailing label column),
JSON and CSV out.
"""

import csv
import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

from pydantic import BaseModel

from src.core.exceptions import CsvParseError, InsufficientDataError
from src.models.gaussian import DataMatrix

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


@dataclass(frozen=True)
class LabeledData:
    """Observations plus the optional label column and header"""

    data: DataMatrix
    labels: Optional[List[str]] = None
    columns: Optional[List[str]] = None


def _as_number(field: str) -> Optional[float]:
    try:
        value = float(field)
    except ValueError:
        return None
    return value


class DataRepository:
    """Repository for reading datasets and writing reports"""

    def __init__(self, base_dir: Optional[PathLike] = None):
        self.base_dir = Path(base_dir) if base_dir is not None else None

    def _resolve(self, path: PathLike) -> Path:
        path = Path(path)
        if self.base_dir is not None and not path.is_absolute():
            return self.base_dir / path
        return path

    def load_csv(self, path: PathLike) -> LabeledData:
        """Read a comma-delimited file into a data matrix"""
        resolved = self._resolve(path)
        try:
            raw = resolved.read_bytes()
        except OSError as exc:
            raise CsvParseError(f"Cannot read {resolved}: {exc}", line=0) from exc
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            line = raw.count(b"\n", 0, exc.start) + 1
            raise CsvParseError(f"{resolved} is not UTF-8 text", line=line) from exc
        loaded = self.parse_csv(text)
        logger.info(
            f"Loaded {loaded.data.n} x {loaded.data.p} from {resolved}"
            + (" with labels" if loaded.labels is not None else "")
        )
        return loaded

    def parse_csv(self, text: str) -> LabeledData:
        rows = [
            (line_number, [field.strip() for field in fields])
            for line_number, fields in enumerate(csv.reader(io.StringIO(text)), start=1)
            if any(field.strip() for field in fields)
        ]
        if not rows:
            raise InsufficientDataError("CSV file contains no rows")

        columns = None
        # numeric columns come first, so a non-numeric first field marks a header
        if _as_number(rows[0][1][0]) is None:
            columns = rows[0][1]
            rows = rows[1:]
        if not rows:
            raise InsufficientDataError("CSV file contains a header but no observations")

        first_line, first = rows[0]
        has_labels = len(first) > 1 and _as_number(first[-1]) is None
        width = len(first)
        numeric_width = width - 1 if has_labels else width
        if columns is not None and len(columns) != width:
            raise CsvParseError(
                f"header has {len(columns)} fields, data has {width}", line=first_line
            )

        values: List[List[float]] = []
        labels: List[str] = []
        for line_number, fields in rows:
            if len(fields) != width:
                raise CsvParseError(
                    f"expected {width} fields, found {len(fields)}", line=line_number
                )
            row = []
            for column, field in enumerate(fields[:numeric_width], start=1):
                number = _as_number(field)
                if number is None or not math.isfinite(number):
                    raise CsvParseError(
                        f"not a finite number: {field!r}", line=line_number, column=column
                    )
                row.append(number)
            values.append(row)
            if has_labels:
                labels.append(fields[-1])

        return LabeledData(
            data=DataMatrix(values),
            labels=labels if has_labels else None,
            columns=columns[:numeric_width] if columns is not None else None,
        )

    def write_json(self, report: BaseModel, path: Optional[PathLike] = None) -> str:
        """Serialize a report; written to path when one is given"""
        payload = report.model_dump_json(indent=2) + "\n"
        if path is not None:
            resolved = self._resolve(path)
            resolved.parent.mkdir(parents=True, exist_ok=True)
            resolved.write_text(payload, encoding="utf-8")
            logger.info(f"Report written to {resolved}")
        return payload

    def write_pvalues_csv(self, p_values: Sequence[float], path: PathLike) -> None:
        """Sorted p-values, one per row, with a header"""
        resolved = self._resolve(path)
        resolved.parent.mkdir(parents=True, exist_ok=True)
        with resolved.open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["rank", "p_value"])
            for rank, value in enumerate(sorted(p_values), start=1):
                writer.writerow([rank, repr(float(value))])
        logger.info(f"{len(p_values)} p-values written to {resolved}")
