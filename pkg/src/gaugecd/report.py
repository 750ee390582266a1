"""Structured check outcomes with deterministic JSON and CSV serialisation."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

# JSON Schema for serialised reports.  Extended reals appear as the strings
# "inf", "-inf" and "nan"; every other number is a JSON number printed with
# 17 significant digits.
_NUMBER = {"anyOf": [{"type": "number"}, {"enum": ["inf", "-inf", "nan"]}]}
_SCALAR = {"anyOf": [_NUMBER, {"type": "string"}, {"type": "boolean"}, {"type": "null"}]}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "VerificationReport",
    "type": "object",
    "required": ["suite", "passed", "tolerance", "columns", "summary", "records"],
    "properties": {
        "suite": {"type": "string"},
        "passed": {"type": "boolean"},
        "tolerance": _NUMBER,
        "columns": {"type": "array", "items": {"type": "string"}},
        "summary": {"type": "object", "additionalProperties": {
            "anyOf": [_SCALAR, {"type": "array"}, {"type": "object"}]}},
        "records": {"type": "array", "items": {"type": "object", "additionalProperties": _SCALAR}},
    },
    "additionalProperties": False,
}


def format_number(v):
    """Text form of a number: 17 significant digits, or an extended-real sentinel."""
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".17g")


class _Raw(str):
    """A pre-formatted JSON number."""


def _prepare(obj):
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return _Raw(format_number(v)) if math.isfinite(v) else format_number(v)
    if isinstance(obj, dict):
        return {str(k): _prepare(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_prepare(v) for v in obj]
    return obj


def _dump(obj, indent=0):
    pad = "  " * indent
    if isinstance(obj, _Raw):
        return str(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}  {json.dumps(k)}: {_dump(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_dump(v) for v in obj) + "]"
        items = [pad + "  " + _dump(v, indent + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    return json.dumps(obj)


def dumps(obj):
    """Deterministic JSON text with 17-digit numbers and extended-real sentinels."""
    return _dump(_prepare(obj)) + "\n"


def parse_number(v):
    """Inverse of the sentinel encoding used in reports."""
    if isinstance(v, str):
        return float(v)
    return float(v)


@dataclass
class VerificationReport:
    """Outcome of one numeric check.

    ``records`` are flat dicts (one per evaluated case) and ``columns`` fixes
    the CSV column order; ``summary`` carries aggregate statistics such as the
    minimum deficit, violation counts, fitted exponents and confidence radii.
    """

    suite: str
    passed: bool
    tolerance: float
    columns: tuple = ()
    records: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "suite": self.suite,
            "passed": bool(self.passed),
            "tolerance": self.tolerance,
            "columns": list(self.columns),
            "summary": self.summary,
            "records": self.records,
        }

    def to_json(self):
        return dumps(self.to_dict())

    def to_csv(self):
        cols = list(self.columns) or (sorted(self.records[0]) if self.records else [])
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for rec in self.records:
            row = []
            for c in cols:
                v = rec.get(c, "")
                if isinstance(v, (bool, np.bool_)):
                    row.append("true" if v else "false")
                elif isinstance(v, (float, np.floating, int, np.integer)):
                    row.append(format_number(v))
                else:
                    row.append(v)
            w.writerow(row)
        return buf.getvalue()

    def line(self):
        """One-line human summary."""
        verdict = "PASS" if self.passed else "FAIL"
        keys = [k for k in ("min_deficit", "violations", "slope", "max_error") if k in self.summary]
        extra = ", ".join(f"{k}={self.summary[k]}" for k in keys)
        return f"{verdict} {self.suite}" + (f" ({extra})" if extra else "")
