"""
CSV and JSON writers for the command line. Reals go out with 12 significant
digits; reports keep their schema field names ("schema", "pass").
"""

import csv
import json
import math
from typing import Any, Dict, Iterable, List, Sequence, TextIO

from pydantic import BaseModel

from app.models.schemas import ChordScanRow, LadderPoint, OutputFormat, VerificationReport, ZeroPair

DIGITS = 12

REPORT_COLUMNS = ["schema", "name", "T", "U", "lhs", "rhs", "ratio", "band_lo", "band_hi",
                  "pass", "assertable", "notes", "elapsed_ms"]


def fmt(value: Any) -> Any:
    """12 significant digits for reals, everything else unchanged."""
    if isinstance(value, bool) or not isinstance(value, float):
        return value
    if not math.isfinite(value):
        return str(value)
    return float(f"{value:.{DIGITS}g}")


def _rounded(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: _rounded(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_rounded(v) for v in obj]
    return fmt(obj)


def report_dict(report: VerificationReport) -> Dict[str, Any]:
    return _rounded(report.model_dump(by_alias=True))


def report_row(report: VerificationReport) -> Dict[str, Any]:
    data = report_dict(report)
    data["band_lo"], data["band_hi"] = data.pop("band")
    data.pop("details", None)
    return {k: data[k] for k in REPORT_COLUMNS}


def zero_rows(pairs: Iterable[ZeroPair]) -> List[Dict[str, Any]]:
    return [{"gamma": fmt(p.gamma), "gamma_prime": fmt(p.gamma_prime)} for p in pairs]


def ladder_rows(points: Iterable[LadderPoint]) -> List[Dict[str, Any]]:
    return [{"T": fmt(p.T), "phi": fmt(p.phi), "residual": fmt(p.residual), "a": fmt(p.a_param)} for p in points]


def profile_rows(t: Sequence[float], phi1: Sequence[float]) -> List[Dict[str, Any]]:
    return [{"t": fmt(float(a)), "phi1": fmt(float(b))} for a, b in zip(t, phi1)]


def scan_rows(rows: Iterable[ChordScanRow]) -> List[Dict[str, Any]]:
    columns = ["gamma", "U", "tan_alpha", "lhs", "rhs", "ratio"]
    return [{k: fmt(getattr(r, k)) for k in columns} for r in rows]


def write_rows(rows: List[Dict[str, Any]], out: TextIO, fmt_: OutputFormat, columns: Sequence[str] = None):
    """Rows as CSV with a header line, or as a JSON array."""
    if fmt_ == OutputFormat.JSON:
        json.dump(rows, out, indent=2)
        out.write("\n")
        return
    columns = list(columns or (rows[0].keys() if rows else []))
    writer = csv.DictWriter(out, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)


def write_reports(reports: List[VerificationReport], out: TextIO, fmt_: OutputFormat):
    if fmt_ == OutputFormat.JSON:
        payload: Any = [report_dict(r) for r in reports]
        json.dump(payload[0] if len(payload) == 1 else payload, out, indent=2)
        out.write("\n")
        return
    write_rows([report_row(r) for r in reports], out, fmt_, REPORT_COLUMNS)


def dump_model(model: BaseModel) -> Dict[str, Any]:
    return _rounded(model.model_dump(by_alias=True))
