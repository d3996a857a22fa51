"""Styled .xlsx bundle of a run directory.

One Summary sheet, then one sheet per CSV artifact and one per JSON report
(flattened to dotted key/value rows). The workbook is a convenience view and
is not covered by the byte-identity contract of the CSV/JSON artifacts.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Tuple

from openpyxl import Workbook
from openpyxl.styles import Alignment, Font, PatternFill
from openpyxl.utils import get_column_letter

from gespfactor.serializers.artifacts import read_csv
from gespfactor.version import APP_DISPLAY_VERSION

WORKBOOK_NAME = "artifacts.xlsx"
MAX_SHEET_ROWS = 5000

HEADER_FONT = Font(bold=True, color="FFFFFF")
HEADER_FILL = PatternFill(start_color="212529", end_color="212529", fill_type="solid")


def style_sheet(ws, headers: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    ws.append(list(headers))
    for cell in ws[1]:
        cell.font = HEADER_FONT
        cell.fill = HEADER_FILL
        cell.alignment = Alignment(vertical="center")
    for row in rows:
        ws.append(list(row))
    # Auto-size columns, capped at 45
    for col_idx in range(1, len(headers) + 1):
        letter = get_column_letter(col_idx)
        max_len = max((len(str(c.value)) for c in ws[letter] if c.value is not None), default=0)
        ws.column_dimensions[letter].width = min(max(max_len + 2, 10), 45)
    ws.freeze_panes = "A2"


def _flatten(payload: Any, prefix: str = "") -> List[Tuple[str, Any]]:
    if isinstance(payload, dict):
        out: List[Tuple[str, Any]] = []
        for key in sorted(payload):
            out.extend(_flatten(payload[key], f"{prefix}.{key}" if prefix else str(key)))
        return out
    if isinstance(payload, list) and payload and all(isinstance(v, (dict, list)) for v in payload):
        out = []
        for i, item in enumerate(payload):
            out.extend(_flatten(item, f"{prefix}[{i}]"))
        return out
    if isinstance(payload, list):
        return [(prefix, json.dumps(payload))]
    return [(prefix, payload)]


def _numeric(cell: str) -> Any:
    try:
        return float(cell)
    except ValueError:
        return cell


def _sheet_title(path: Path, taken: set) -> str:
    title = path.stem[:28]
    while title in taken:
        title = title[:26] + f"_{len(taken)}"
    taken.add(title)
    return title


def export_workbook(out_dir: Path, command: str, passes: Dict[str, bool]) -> Path:
    """Bundle every CSV/JSON artifact in ``out_dir`` into artifacts.xlsx."""
    out_dir = Path(out_dir)
    wb = Workbook()

    summary = wb.active
    summary.title = "Summary"
    summary.append([f"{APP_DISPLAY_VERSION} run"])
    summary["A1"].font = Font(bold=True, size=14)
    summary.append([])
    summary.append(["Command", command])
    summary.append(["Output directory", str(out_dir)])
    for name in sorted(passes):
        summary.append([f"pass: {name}", "yes" if passes[name] else "NO"])
    summary.column_dimensions["A"].width = 40
    summary.column_dimensions["B"].width = 24
    for row in summary.iter_rows(min_row=3, max_col=1):
        row[0].font = Font(bold=True)

    taken = {"Summary"}
    for path in sorted(out_dir.glob("*.csv")):
        table = read_csv(path)
        if not table:
            continue
        ws = wb.create_sheet(_sheet_title(path, taken))
        style_sheet(ws, table[0], ([_numeric(c) for c in row] for row in table[1:MAX_SHEET_ROWS + 1]))
    for path in sorted(out_dir.glob("*.json")):
        payload = json.loads(path.read_text(encoding="utf-8"))
        ws = wb.create_sheet(_sheet_title(path, taken))
        style_sheet(ws, ["key", "value"], _flatten(payload))

    target = out_dir / WORKBOOK_NAME
    wb.save(target)
    return target
