"""CSV artifacts with a provenance preamble.

An artifact is a CSV file preceded by ``# key: value`` comment lines; the
preamble always carries the command, the SHA-256 of the canonical run
configuration and the seed.  Floats are written with ``repr`` so that values
round-trip exactly and identical runs give byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = ["Artifact", "config_hash", "format_value", "write_artifact", "read_artifact", "render_artifact"]


def config_hash(config: dict) -> str:
    """SHA-256 of the config serialized with sorted keys and no whitespace."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


@dataclass
class Artifact:
    columns: list[str]
    rows: list[list]
    meta: dict[str, str] = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        j = self.columns.index(name)
        return np.array([r[j] for r in self.rows])

    def as_array(self) -> np.ndarray:
        return np.array(self.rows, dtype=float)


def render_artifact(columns: Sequence[str], rows: Iterable[Sequence], meta: dict) -> str:
    buf = io.StringIO()
    for k, v in meta.items():
        buf.write(f"# {k}: {v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_value(v) for v in r])
    return buf.getvalue()


def write_artifact(path, columns: Sequence[str], rows: Iterable[Sequence], meta: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = render_artifact(columns, rows, meta)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(text)
    return path


def _parse(cell: str):
    if cell in ("true", "false"):
        return cell == "true"
    try:
        return int(cell)
    except ValueError:
        pass
    try:
        return float(cell)
    except ValueError:
        return cell


def read_artifact(path) -> Artifact:
    """Parse a file written by :func:`write_artifact`."""
    meta: dict[str, str] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(":")
            meta[key.strip()] = value.strip()
        else:
            body.append(line)
    reader = csv.reader(body)
    columns = next(reader)
    rows = [[_parse(c) for c in r] for r in reader]
    return Artifact(columns, rows, meta)
