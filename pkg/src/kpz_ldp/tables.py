"""Record tables as CSV with a schema comment line, and their JSON mirror."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

HEADER_PREFIX = "# kpz-ldp "


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return repr(value)
    return str(value)


def _parse(text: str):
    if text in ("true", "false"):
        return text == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def format_table(schema: str, columns, rows) -> str:
    """CSV text; ``rows`` are mappings or sequences in column order."""
    buf = io.StringIO()
    buf.write(f"{HEADER_PREFIX}{schema} v1\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        values = [row[c] for c in columns] if isinstance(row, dict) else list(row)
        writer.writerow([_fmt(v) for v in values])
    return buf.getvalue()


def write_table(path, schema: str, columns, rows) -> None:
    Path(path).write_text(format_table(schema, columns, rows))


def read_table(path) -> tuple[str, list[dict]]:
    """(schema, records) from a file written by write_table."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith(HEADER_PREFIX):
        raise ValueError(f"{path}: missing schema header")
    schema = lines[0][len(HEADER_PREFIX):].rsplit(" v", 1)[0]
    reader = csv.DictReader(lines[1:])
    return schema, [{k: _parse(v) for k, v in rec.items()} for rec in reader]


def records_json(columns, rows) -> str:
    recs = [dict(zip(columns, [row[c] for c in columns] if isinstance(row, dict) else row)) for row in rows]
    clean = [{k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in r.items()} for r in recs]
    return json.dumps(clean, indent=1)
