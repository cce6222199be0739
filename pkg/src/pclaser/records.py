"""CSV / JSON-lines readers and writers for traces, tables and result records."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, units
from .dynamics import TimeTrace, TraceError

TRACE_HEADER = ("time_ps", "intensity")


class SchemaError(ValueError):
    def __init__(self, message, row=None):
        super().__init__(f"row {row}: {message}" if row is not None else message)
        self.row = row


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    if value is None:
        return "null"
    return str(value)


def write_trace_csv(path, trace: TimeTrace, comments=None):
    """Write ``time_ps,intensity`` rows; metadata goes to ``#`` comment lines."""
    lines = []
    meta = dict(trace.meta)
    meta.update(comments or {})
    for k, v in meta.items():
        if isinstance(v, (list, tuple, np.ndarray)):
            continue
        lines.append(f"# {k} = {_fmt(v)}")
    lines.append(",".join(TRACE_HEADER))
    t_ps = units.from_si(trace.t, "ps")
    lines.extend(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(t_ps, trace.y))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse_meta(line):
    body = line.lstrip("#").strip()
    if "=" not in body:
        return None
    k, v = (s.strip() for s in body.split("=", 1))
    if k == "noise_sigma":
        try:
            return k, float(v)
        except ValueError:
            return None
    return k, v


def load_trace_csv(path) -> TimeTrace:
    """Read a ``time_ps,intensity`` CSV; ``#`` lines are comments."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise OSError(f"cannot read trace {path}: {exc}") from exc
    meta = {}
    rows = []
    header_seen = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            kv = _parse_meta(stripped)
            if kv:
                meta[kv[0]] = kv[1]
            continue
        cells = [c.strip() for c in next(csv.reader([stripped]))]
        if not header_seen:
            if tuple(cells) != TRACE_HEADER:
                raise SchemaError(f"expected header {','.join(TRACE_HEADER)!r}, got {stripped!r}",
                                  lineno)
            header_seen = True
            continue
        if len(cells) != 2:
            raise SchemaError(f"expected 2 columns, got {len(cells)}", lineno)
        try:
            t, y = float(cells[0]), float(cells[1])
        except ValueError:
            raise SchemaError(f"non-numeric cell in {stripped!r}", lineno) from None
        if not (math.isfinite(t) and math.isfinite(y)):
            raise SchemaError(f"non-finite value in {stripped!r}", lineno)
        if rows and t <= rows[-1][1]:
            kind = "duplicate" if t == rows[-1][1] else "decreasing"
            raise SchemaError(f"{kind} timestamp {cells[0]}", lineno)
        rows.append((lineno, t, y))
    if not header_seen:
        raise SchemaError("missing header line")
    if len(rows) < 2:
        raise SchemaError(f"need at least 2 data rows, got {len(rows)}")
    t = units.to_si(np.array([r[1] for r in rows]), "ps")
    y = np.array([r[2] for r in rows])
    try:
        return TimeTrace(t, y, meta)
    except TraceError as exc:
        raise SchemaError(str(exc)) from exc


def write_table(path, columns: dict, fmt="csv"):
    """Write equal-length columns as CSV or as one JSON object per row."""
    names = list(columns)
    arrays = [np.asarray(columns[n]) for n in names]
    n = len(arrays[0]) if arrays else 0
    if fmt == "csv":
        buf = io.StringIO()
        buf.write(",".join(names) + "\n")
        for i in range(n):
            buf.write(",".join(_fmt(a[i].item()) for a in arrays) + "\n")
        Path(path).write_text(buf.getvalue(), encoding="utf-8")
    elif fmt == "jsonl":
        with open(path, "w", encoding="utf-8") as fh:
            for i in range(n):
                fh.write(json.dumps({k: _jsonable(a[i].item()) for k, a in zip(names, arrays)})
                         + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


def read_table(path) -> dict:
    """Inverse of :func:`write_table`; format from the file suffix."""
    path = Path(path)
    if path.suffix == ".jsonl":
        rows = [json.loads(line) for line in path.read_text("utf-8").splitlines() if line]
        names = list(rows[0]) if rows else []
        return {k: np.array([_unjson(r[k]) for r in rows]) for k in names}
    lines = [ln for ln in path.read_text("utf-8").splitlines()
             if ln and not ln.startswith("#")]
    names = lines[0].split(",")
    data = [[float(c) for c in ln.split(",")] for ln in lines[1:]]
    arr = np.array(data).reshape(len(data), len(names))
    return {k: arr[:, i] for i, k in enumerate(names)}


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    return v


def _unjson(v):
    if v in ("inf", "-inf", "nan"):
        return float(v)
    return v


def flatten(obj, prefix=""):
    """Nested dicts / sequences -> flat {dotted.key: scalar}."""
    out = {}
    if isinstance(obj, dict):
        for k, v in obj.items():
            out.update(flatten(v, f"{prefix}{k}."))
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            out.update(flatten(v, f"{prefix}{i}."))
    else:
        key = prefix[:-1]
        if isinstance(obj, np.generic):
            obj = obj.item()
        out[key] = obj
    return out


@dataclass
class ResultRecord:
    command: str
    input_digest: str
    outputs: dict = field(default_factory=dict)
    version: str = __version__

    def flat(self):
        d = {"command": self.command, "input_digest": self.input_digest,
             "version": self.version}
        d.update({f"out.{k}": v for k, v in flatten(self.outputs).items()})
        return d

    def write(self, path, fmt="jsonl"):
        flat = self.flat()
        if fmt == "jsonl":
            Path(path).write_text(
                json.dumps({k: _jsonable(v) for k, v in flat.items()}) + "\n", encoding="utf-8")
        elif fmt == "csv":
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["name", "value"])
            for k, v in flat.items():
                w.writerow([k, _fmt(v)])
            Path(path).write_text(buf.getvalue(), encoding="utf-8")
        else:
            raise ValueError(f"unknown format {fmt!r}")

    @classmethod
    def read(cls, path) -> ResultRecord:
        path = Path(path)
        text = path.read_text("utf-8")
        if path.suffix == ".jsonl":
            flat = {k: _unjson(v) for k, v in json.loads(text.splitlines()[0]).items()}
        else:
            rows = list(csv.reader(io.StringIO(text)))
            flat = {k: v if k in _RAW_KEYS else _parse_cell(v) for k, v in rows[1:]}
        outputs = {k[len("out."):]: v for k, v in flat.items() if k.startswith("out.")}
        return cls(str(flat["command"]), str(flat["input_digest"]), outputs,
                   str(flat["version"]))


_RAW_KEYS = ("command", "input_digest", "version")


def _parse_cell(v):
    if v == "null":
        return None
    if v in ("True", "False"):
        return v == "True"
    try:
        return int(v) if v.lstrip("-").isdigit() else float(v)
    except ValueError:
        return v
