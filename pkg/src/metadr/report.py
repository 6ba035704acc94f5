"""Report documents and their csv / markdown / aligned-text renderers.

Every table that can diverge from a published reference value carries an
annotation column; an annotated row always shows both the computed and
the published value so discrepancies stay auditable. Output is
deterministic for fixed inputs (diff-stable in CI).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

FORMATS = ("text", "csv", "md")


@dataclass
class ReportDocument:
    title: str
    columns: list[str]
    rows: list[list] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)


def _fmt_cell(value) -> str:
    if isinstance(value, float):
        if value != value or value in (float("inf"), float("-inf")):
            return str(value)
        if value == int(value) and abs(value) < 1e15:
            return str(int(value))
        if 0 < abs(value) < 5e-4:
            return f"{value:.3g}"
        return f"{value:.4f}".rstrip("0").rstrip(".")
    return str(value)


def render_csv(doc: ReportDocument) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(doc.columns)
    for row in doc.rows:
        writer.writerow([_fmt_cell(c) for c in row])
    return buf.getvalue()


def render_md(doc: ReportDocument) -> str:
    lines = [f"### {doc.title}", ""]
    lines.append("| " + " | ".join(doc.columns) + " |")
    lines.append("|" + "|".join(" --- " for _ in doc.columns) + "|")
    for row in doc.rows:
        lines.append("| " + " | ".join(_fmt_cell(c) for c in row) + " |")
    for note in doc.notes:
        lines.append("")
        lines.append(f"> {note}")
    return "\n".join(lines) + "\n"


def render_text(doc: ReportDocument) -> str:
    cells = [[_fmt_cell(c) for c in row] for row in doc.rows]
    widths = [len(col) for col in doc.columns]
    for row in cells:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = [doc.title, "-" * len(doc.title)]
    lines.append("  ".join(col.ljust(widths[i]) for i, col in enumerate(doc.columns)))
    for row in cells:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    for note in doc.notes:
        lines.append(f"note: {note}")
    return "\n".join(lines) + "\n"


def render(doc: ReportDocument, fmt: str) -> str:
    if fmt == "csv":
        return render_csv(doc)
    if fmt == "md":
        return render_md(doc)
    if fmt == "text":
        return render_text(doc)
    raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
