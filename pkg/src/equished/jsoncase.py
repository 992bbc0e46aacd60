"""Native JSON case format.

The document mirrors :class:`NetworkCase` one-to-one::

    {"name": ..., "base_mva": 100.0,
     "buses": [{"id": 1, "p_demand": 0.0, ...}],
     "generators": [{"at_bus": 1, ..., "cost_coeffs": [0.043, 20.0, 0.0]}],
     "branches": [{"from_bus": 1, "to_bus": 2, ...}]}

Powers are MW / MVAr, impedances and voltages per-unit, ``shift`` in radians.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

from .case import Branch, Bus, Generator, NetworkCase
from .errors import SchemaError

_RECORDS = {"buses": Bus, "generators": Generator, "branches": Branch}
_INT_FIELDS = {"id", "at_bus", "from_bus", "to_bus"}
_BOOL_FIELDS = {"is_reference", "in_service"}


def case_to_dict(case: NetworkCase) -> dict:
    out = {"name": case.name, "base_mva": case.base_mva}
    for key in _RECORDS:
        rows = []
        for rec in getattr(case, key):
            d = dataclasses.asdict(rec)
            if "cost_coeffs" in d:
                d["cost_coeffs"] = list(d["cost_coeffs"])
            rows.append(d)
        out[key] = rows
    return out


def serialize_json(case: NetworkCase, indent=2) -> str:
    return json.dumps(case_to_dict(case), indent=indent)


def _check_number(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{where}: expected a number, got {value!r}", field=where)
    return float(value)


def _record(cls, raw, where):
    if not isinstance(raw, dict):
        raise SchemaError(f"{where}: expected an object", field=where)
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(raw) - set(fields)
    if unknown:
        name = sorted(unknown)[0]
        raise SchemaError(f"{where}: unknown field '{name}'", field=f"{where}.{name}")
    kwargs = {}
    for name, f in fields.items():
        path = f"{where}.{name}"
        if name not in raw:
            if f.default is dataclasses.MISSING:
                raise SchemaError(f"missing required field '{path}'", field=path)
            continue
        value = raw[name]
        if name in _INT_FIELDS:
            if isinstance(value, bool) or not isinstance(value, int):
                raise SchemaError(f"{path}: expected an integer, got {value!r}", field=path)
        elif name in _BOOL_FIELDS:
            if not isinstance(value, bool):
                raise SchemaError(f"{path}: expected true/false, got {value!r}", field=path)
        elif name == "cost_coeffs":
            if not isinstance(value, list):
                raise SchemaError(f"{path}: expected a list of numbers", field=path)
            value = tuple(_check_number(v, path) for v in value)
        else:
            value = _check_number(value, path)
        kwargs[name] = value
    return cls(**kwargs)


def case_from_dict(doc) -> NetworkCase:
    if not isinstance(doc, dict):
        raise SchemaError("top level must be a JSON object")
    for key in ("base_mva", *_RECORDS):
        if key not in doc:
            raise SchemaError(f"missing required field '{key}'", field=key)
    name = doc.get("name", "")
    if not isinstance(name, str):
        raise SchemaError("name: expected a string", field="name")
    base = _check_number(doc["base_mva"], "base_mva")
    parts = {}
    for key, cls in _RECORDS.items():
        rows = doc[key]
        if not isinstance(rows, list):
            raise SchemaError(f"{key}: expected a list", field=key)
        parts[key] = [_record(cls, r, f"{key}[{i}]") for i, r in enumerate(rows)]
    return NetworkCase(base_mva=base, name=name, **parts)


def parse_json_case(text: str) -> NetworkCase:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from exc
    return case_from_dict(doc)


def load_json(path) -> NetworkCase:
    return parse_json_case(Path(path).read_text())
