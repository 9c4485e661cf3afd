import csv
import io
import json
from pathlib import Path

from ..errors import EmitError
from .experiment import Report

CSV_COLUMNS = ("method", "steps", "seed", "mean_ep", "std", "n", "p_value")


def report_json(report: Report) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"


def report_csv(report: Report) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for c in report.rows:
        writer.writerow(["" if getattr(c, k) is None else getattr(c, k) for k in CSV_COLUMNS])
    return buf.getvalue()


def emit_report(report: Report, directory) -> tuple[Path, Path]:
    """Write ``report.json`` and ``report.csv``; returns their paths."""
    out = Path(directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
        jpath, cpath = out / "report.json", out / "report.csv"
        jpath.write_text(report_json(report), encoding="utf-8")
        cpath.write_text(report_csv(report), encoding="utf-8")
    except (OSError, ValueError) as exc:
        raise EmitError(f"cannot write report to {out}: {exc}") from exc
    return jpath, cpath
