"""CSV ingestion, report emission, and run manifests."""

from __future__ import annotations

import csv
import datetime as _dt
import io as _io
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .core import ConfmaError, Dataset, Ordering, validate_dataset
from .harness import REPORT_FIELDS, EvalRow


class MissingColumn(ConfmaError, KeyError):
    pass


class ParseError(ConfmaError, ValueError):
    def __init__(self, row: int, col: str, value: str = ""):
        super().__init__(f"cannot parse {value!r} at row {row}, column {col!r}")
        self.row = row
        self.col = col
        self.value = value


class IoError(ConfmaError, OSError):
    pass


def _read_text(path) -> str:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            return fh.read()
    except FileNotFoundError:
        raise
    except OSError as exc:
        raise IoError(str(exc)) from exc


def load_csv(path, y_column: str, ordering=Ordering.EXCHANGEABLE) -> Dataset:
    """Read a headed numeric CSV; ``y_column`` is the outcome, the rest are ``X``.

    Rows are numbered from 1 for the first data row.  LF and CRLF line
    endings are both accepted.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    text = _read_text(path)
    reader = csv.reader(_io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError(0, "", "empty file") from None
    if y_column not in header:
        raise MissingColumn(f"column {y_column!r} not in header {header}")
    values = []
    for r, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(r, "", f"{len(row)} fields, expected {len(header)}")
        parsed = []
        for name, cell in zip(header, row):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(r, name, cell) from None
            parsed.append(v)
        values.append(parsed)
    if not values:
        raise ParseError(1, "", "no data rows")
    A = np.array(values)
    yi = header.index(y_column)
    xcols = [j for j in range(len(header)) if j != yi]
    if not xcols:
        raise MissingColumn("no covariate columns besides the outcome")
    return validate_dataset(A[:, xcols], A[:, yi], Ordering(ordering),
                            column_names=[header[j] for j in xcols])


def format_real(v) -> str:
    """Six significant digits, trailing zeros kept (0.904999 -> '0.905000')."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if v == 0:
        return "0.00000"
    exp = math.floor(math.log10(abs(float(f"{v:.5e}"))))
    if -5 <= exp < 6:
        return f"{v:.{max(5 - exp, 0)}f}"
    return f"{v:.5e}"


def _cell(key, value) -> str:
    if key in ("scheme", "variant"):
        return str(value)
    return format_real(value)


def render_csv(rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_FIELDS)
    for r in rows:
        d = r.as_dict()
        w.writerow([_cell(k, d[k]) for k in REPORT_FIELDS])
    return buf.getvalue()


def _json_value(key, value):
    if key in ("scheme", "variant"):
        return str(value)
    if key == "adaptive":
        return bool(value)
    if key == "n_evals":
        return int(value)
    v = float(value)
    # rendered precision, so CSV and JSON carry the same numbers
    return float(format_real(v)) if math.isfinite(v) else None


def render_json(rows) -> str:
    objs = [{k: _json_value(k, r.as_dict()[k]) for k in REPORT_FIELDS} for r in rows]
    return json.dumps(objs, indent=2) + "\n"


def _write(path, text):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoError(str(exc)) from exc


def emit_report(rows, fmt: str, path) -> None:
    rows = list(rows)
    if not rows:
        raise ValueError("no rows to emit")
    if fmt == "csv":
        _write(path, render_csv(rows))
    elif fmt == "json":
        _write(path, render_json(rows))
    else:
        raise ValueError(f"unknown format {fmt!r}")


def _parse_field(key, text):
    if key in ("scheme", "variant"):
        return text
    if key == "adaptive":
        return text == "true"
    if key == "n_evals":
        return int(text)
    return float(text)


def read_report_csv(path) -> list[EvalRow]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != REPORT_FIELDS:
            raise ParseError(0, "", "unexpected report header")
        return [EvalRow(**{k: _parse_field(k, row[k]) for k in REPORT_FIELDS}) for row in reader]


def read_report_json(path) -> list[EvalRow]:
    with open(path, encoding="utf-8") as fh:
        objs = json.load(fh)
    return [EvalRow(**{k: (math.nan if o[k] is None else o[k]) for k in REPORT_FIELDS})
            for o in objs]


PLOT_METRICS = ("coverage", "se_coverage", "avg_length", "sd_length", "rmspe", "mspe", "hit_rate")


def render_plot_csv(rows) -> str:
    """Long format ``scheme,variant,adaptive,metric,value`` for plotting tools."""
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("scheme", "variant", "adaptive", "metric", "value"))
    for r in rows:
        d = r.as_dict()
        for m in PLOT_METRICS:
            w.writerow((d["scheme"], d["variant"], format_real(d["adaptive"]), m,
                        format_real(d[m])))
    return buf.getvalue()


def emit_plot_csv(rows, path) -> None:
    _write(path, render_plot_csv(rows))


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    config_echo: dict
    master_seed: int
    tool_version: str
    started_at: str = field(default_factory=_now)
    finished_at: str | None = None
    outputs: list = field(default_factory=list)

    def finish(self):
        self.finished_at = _now()

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n"

    def write(self, path) -> None:
        _write(path, self.to_json())

    @classmethod
    def read(cls, path) -> "RunManifest":
        with open(path, encoding="utf-8") as fh:
            return cls(**json.load(fh))
