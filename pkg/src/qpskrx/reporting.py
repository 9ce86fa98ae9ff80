"""Tabular results and on-disk formats.

Result tables are written as CSV (``#``-prefixed metadata lines, then a
header row) and mirrored as JSON.  Shot records are newline-delimited JSON
with a header object on the first line.  Every format carries
``format_version``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

FORMAT_VERSION = 1

COLUMNS = (
    "alpha2", "receiver", "t2", "beta", "gamma2", "phi",
    "err", "err_lo", "err_hi", "source", "rel_het", "n", "flag",
)
_FLOAT_COLUMNS = {"alpha2", "t2", "beta", "gamma2", "phi", "err", "err_lo", "err_hi", "rel_het"}


@dataclass(frozen=True)
class SweepRow:
    alpha2: float
    receiver: str
    err: float
    t2: float = math.nan
    beta: float = math.nan
    gamma2: float = math.nan
    phi: float = math.nan
    err_lo: float = math.nan
    err_hi: float = math.nan
    source: str = "analytic"
    rel_het: float = math.nan
    n: int = 0
    flag: str = ""


@dataclass
class SweepResult:
    rows: list[SweepRow] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.rows)

    def __iter__(self) -> Iterator[SweepRow]:
        return iter(self.rows)

    def append(self, row: SweepRow) -> None:
        self.rows.append(row)

    def extend(self, rows: Iterable[SweepRow]) -> None:
        self.rows.extend(rows)

    def select(self, receiver: str | None = None, source: str | None = None) -> SweepResult:
        rows = [
            r for r in self.rows
            if (receiver is None or r.receiver == receiver) and (source is None or r.source == source)
        ]
        return SweepResult(rows, dict(self.meta))

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    @property
    def flagged(self) -> list[SweepRow]:
        return [r for r in self.rows if r.flag]


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _fmt(name, value) -> str:
    if name in _FLOAT_COLUMNS:
        return format(float(value), ".12g")
    return str(value)


def format_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    buf.write(f"# format_version: {FORMAT_VERSION}\n")
    for key in sorted(result.meta):
        buf.write(f"# {key}: {result.meta[key]}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in result.rows:
        writer.writerow([_fmt(c, getattr(row, c)) for c in COLUMNS])
    return buf.getvalue()


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def format_json(result: SweepResult) -> str:
    doc = {
        "format_version": FORMAT_VERSION,
        **result.meta,
        "columns": list(COLUMNS),
        "rows": [{k: _json_value(v) for k, v in asdict(r).items()} for r in result.rows],
    }
    return json.dumps(doc, indent=1, sort_keys=False) + "\n"


def write_result(result: SweepResult, path: str | Path, fmt: str = "csv") -> list[Path]:
    """Write ``result`` as ``path.csv`` and/or ``path.json``; returns the files written."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    out = []
    if fmt in ("csv", "both"):
        p = path.with_suffix(".csv")
        p.write_text(format_csv(result))
        out.append(p)
    if fmt in ("json", "both"):
        p = path.with_suffix(".json")
        p.write_text(format_json(result))
        out.append(p)
    if not out:
        raise ValueError(f"unknown output format {fmt!r}")
    return out


def read_csv(path: str | Path) -> SweepResult:
    meta, rows = {}, []
    with open(path, newline="") as fh:
        lines = []
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition(": ")
                meta[key] = value
            else:
                lines.append(line)
    types = {f.name: f.type for f in fields(SweepRow)}
    for rec in csv.DictReader(lines):
        kw = {}
        for k, v in rec.items():
            if k in _FLOAT_COLUMNS:
                kw[k] = float(v)
            elif types[k] == "int":
                kw[k] = int(v)
            else:
                kw[k] = v
        rows.append(SweepRow(**kw))
    meta.pop("format_version", None)
    return SweepResult(rows, meta)


def read_json(path: str | Path) -> SweepResult:
    doc = json.loads(Path(path).read_text())
    if doc.pop("format_version") != FORMAT_VERSION:
        raise ValueError("unsupported format_version")
    rows = [
        SweepRow(**{k: (math.nan if v is None else v) for k, v in r.items()})
        for r in doc.pop("rows")
    ]
    doc.pop("columns", None)
    return SweepResult(rows, doc)


# -- shot records ----------------------------------------------------------


class RecordWriter:
    """Incremental NDJSON writer for structured record arrays.

    The header line (format version, field list, caller metadata) is
    written with the first batch.
    """

    def __init__(self, path: str | Path, header: dict | None = None):
        self.path = Path(path)
        self.header = header or {}
        self.count = 0
        self._fh = None

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w")
        return self

    def __exit__(self, *exc):
        self._fh.close()
        return False

    def write(self, batch: np.ndarray) -> None:
        names = batch.dtype.names
        if self.count == 0 and self._fh.tell() == 0:
            head = {
                "format_version": FORMAT_VERSION,
                "kind": "shot-records",
                "fields": [[nm, batch.dtype[nm].str] for nm in names],
                **self.header,
            }
            self._fh.write(json.dumps(head) + "\n")
        cols = [batch[nm].tolist() for nm in names]
        self._fh.writelines(json.dumps(dict(zip(names, values))) + "\n" for values in zip(*cols))
        self.count += batch.size

    def tee(self, batches: Iterable[np.ndarray]) -> Iterator[np.ndarray]:
        for batch in batches:
            self.write(batch)
            yield batch


def write_records(path: str | Path, batches: Iterable[np.ndarray], header: dict | None = None) -> int:
    """Write record batches to an NDJSON file; returns the record count."""
    with RecordWriter(path, header) as writer:
        for batch in batches:
            writer.write(batch)
    if writer.count == 0:
        raise ValueError("no records to write")
    return writer.count


def read_records(path: str | Path) -> tuple[dict, np.ndarray]:
    with open(path) as fh:
        head = json.loads(fh.readline())
        if head.get("format_version") != FORMAT_VERSION or head.get("kind") != "shot-records":
            raise ValueError(f"{path}: not a version-{FORMAT_VERSION} shot-record file")
        dtype = np.dtype([(nm, code) for nm, code in head["fields"]])
        rows = [tuple(json.loads(line)[nm] for nm in dtype.names) for line in fh if line.strip()]
    return head, np.array(rows, dtype=dtype)
