"""Deterministic report emission: canonical JSON, CSV tables, hashing.

The report body is canonical JSON (sorted keys, shortest-round-trip float
repr), so identical scenario inputs produce byte-identical files; wall
clock timings go to a separate sidecar excluded from the determinism
contract.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      allow_nan=True) + "\n"


def report_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def write_json(obj, path):
    Path(path).write_text(canonical_json(obj))


def read_json(path):
    return json.loads(Path(path).read_text())


def write_csv(rows, path, columns=None):
    """CSV with repr-encoded floats so re-parsing reproduces values exactly."""
    rows = list(rows)
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    lines = [",".join(columns)]
    for row in rows:
        cells = []
        for c in columns:
            v = row[c]
            cells.append(repr(float(v)) if isinstance(v, float) else str(v))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path):
    text = Path(path).read_text().strip().splitlines()
    columns = text[0].split(",")
    rows = []
    for line in text[1:]:
        cells = line.split(",")
        row = {}
        for c, cell in zip(columns, cells):
            try:
                row[c] = int(cell)
            except ValueError:
                try:
                    row[c] = float(cell)
                except ValueError:
                    row[c] = cell
        rows.append(row)
    return columns, rows


def output_root(explicit=None) -> Path:
    """Output directory: explicit argument, then $FNLAB_OUTPUT_ROOT, then ./fnlab_out."""
    root = explicit or os.environ.get("FNLAB_OUTPUT_ROOT") or "fnlab_out"
    path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path
