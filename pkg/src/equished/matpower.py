"""Reader for the matrix-literal subset of the Matpower case format.

Only ``mpc.baseMVA``, ``mpc.bus``, ``mpc.gen``, ``mpc.branch`` and
``mpc.gencost`` carry data; ``mpc.version`` is accepted and ignored.
Anything else (``mpc.areas``, ``mpc.dcline``, cell arrays, expressions)
raises :class:`UnsupportedFeatureError`.
"""

from __future__ import annotations

import math
import re
from importlib import resources
from pathlib import Path

from .case import Branch, Bus, Generator, NetworkCase
from .errors import ParseError, StructuralError, UnsupportedFeatureError, ValidationError

REQUIRED = ("baseMVA", "bus", "gen", "branch", "gencost")
IGNORED = ("version",)

# minimum column counts of the Matpower version 2 tables
MIN_COLS = {"bus": 13, "gen": 10, "branch": 11, "gencost": 4}

_ASSIGN = re.compile(r"^\s*mpc\.(\w+)\s*=\s*(.*)$")
_FUNCTION = re.compile(r"^\s*function\s+(?:\w+\s*=\s*)?(\w+)")
_NUMBER = re.compile(r"^[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?$|^[+-]?(?:Inf|inf|NaN|nan)$")


def _strip_comment(line):
    # no string literal in the subset contains '%', except inside quotes of mpc.version
    out, quoted = [], False
    for ch in line:
        if ch == "'":
            quoted = not quoted
        elif ch == "%" and not quoted:
            break
        out.append(ch)
    return "".join(out)


def _as_int(value, what):
    if not math.isfinite(value) or value != int(value):
        raise ValidationError(f"{what} must be an integer, got {value}")
    return int(value)


def _parse_number(tok, lineno):
    if not _NUMBER.match(tok):
        raise ParseError(f"malformed number {tok!r} in matrix literal", lineno)
    return float(tok)


def _split_rows(body, lineno):
    """Split one source line of matrix body into rows; ``None`` marks a row end."""
    out = []
    for piece in re.split(r"(;)", body):
        if piece == ";":
            out.append(None)
            continue
        toks = [t for t in re.split(r"[\s,]+", piece.strip()) if t]
        if toks:
            out.append([_parse_number(t, lineno) for t in toks])
    return out


def _read_blocks(text):
    name = ""
    scalars = {}
    matrices = {}
    unsupported = []
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        lineno = i + 1
        line = _strip_comment(lines[i]).strip()
        i += 1
        if not line:
            continue
        m = _FUNCTION.match(line)
        if m:
            name = m.group(1)
            continue
        m = _ASSIGN.match(line)
        if not m:
            if line in ("end", "return"):
                continue
            raise ParseError(f"unrecognized statement {line!r}", lineno)
        key, rhs = m.group(1), m.group(2).strip()
        if rhs.startswith("{"):
            unsupported.append(key)
            while "}" not in rhs and i < len(lines):
                rhs = _strip_comment(lines[i])
                i += 1
            continue
        if rhs.startswith("["):
            start = lineno
            body = rhs[1:]
            rows, row_lines, current = [], [], []
            while True:
                closed = "]" in body
                if closed:
                    head, _, tail = body.partition("]")
                    if tail.strip() not in ("", ";"):
                        raise ParseError(f"unexpected text after matrix literal: {tail.strip()!r}", lineno)
                    body = head
                for item in _split_rows(body, lineno):
                    if item is None:
                        if current:
                            rows.append(current)
                            row_lines.append(lineno)
                        current = []
                    else:
                        current.extend(item)
                if closed:
                    break
                # a newline also ends a row
                if current:
                    rows.append(current)
                    row_lines.append(lineno)
                    current = []
                if i >= len(lines):
                    raise ParseError(f"unterminated matrix literal for mpc.{key}", start)
                lineno = i + 1
                body = _strip_comment(lines[i])
                i += 1
            if current:
                rows.append(current)
                row_lines.append(lineno)
            for r, where in zip(rows, row_lines):
                if len(r) != len(rows[0]):
                    raise ParseError(
                        f"mpc.{key} row has {len(r)} columns, expected {len(rows[0])}", where
                    )
            if key in REQUIRED:
                matrices[key] = rows
            else:
                unsupported.append(key)
            continue
        rhs = rhs.rstrip(";").strip()
        if key in IGNORED:
            continue
        if key != "baseMVA":
            unsupported.append(key)
            continue
        scalars[key] = _parse_number(rhs, lineno)
    return name, scalars, matrices, unsupported


def parse_matpower_case(text: str, *, strict: bool = True) -> NetworkCase:
    """Parse Matpower case-file text into a :class:`NetworkCase`.

    With ``strict=False`` unsupported blocks are skipped instead of rejected.
    """
    name, scalars, mats, unsupported = _read_blocks(text)
    if unsupported and strict:
        raise UnsupportedFeatureError(
            "unsupported Matpower blocks: " + ", ".join(f"mpc.{u}" for u in unsupported),
            features=unsupported,
        )
    missing = [k for k in REQUIRED if k not in scalars and k not in mats]
    if missing:
        raise StructuralError("missing required block(s): " + ", ".join(f"mpc.{k}" for k in missing))
    if not mats["bus"]:
        raise StructuralError("case has no buses")
    for key, ncol in MIN_COLS.items():
        if mats[key] and len(mats[key][0]) < ncol:
            raise StructuralError(f"mpc.{key} needs at least {ncol} columns, got {len(mats[key][0])}")

    base = scalars["baseMVA"]
    buses = []
    for row in mats["bus"]:
        btype = _as_int(row[1], "bus type")
        if btype == 4:
            raise UnsupportedFeatureError(f"isolated bus {row[0]:g} (type 4)", features=["bus type 4"])
        buses.append(
            Bus(
                id=_as_int(row[0], "bus id"),
                p_demand=row[2],
                q_demand=row[3],
                v_min=row[12],
                v_max=row[11],
                shunt_g=row[4],
                shunt_b=row[5],
                is_reference=btype == 3,
            )
        )

    gens_raw, costs = mats["gen"], mats["gencost"]
    if len(costs) != len(gens_raw):
        if len(costs) == 2 * len(gens_raw):
            raise UnsupportedFeatureError("reactive power costs in mpc.gencost", features=["gencost Q rows"])
        raise StructuralError(f"mpc.gencost has {len(costs)} rows for {len(gens_raw)} generators")
    generators = []
    for k, (row, crow) in enumerate(zip(gens_raw, costs), start=1):
        generators.append(
            Generator(
                at_bus=_as_int(row[0], f"generator {k} bus"),
                p_min=row[9],
                p_max=row[8],
                q_min=row[4],
                q_max=row[3],
                cost_coeffs=_polynomial(crow, k),
                in_service=row[7] > 0,
            )
        )

    branches = []
    for row in mats["branch"]:
        ratio = row[8]
        branches.append(
            Branch(
                from_bus=_as_int(row[0], "branch from bus"),
                to_bus=_as_int(row[1], "branch to bus"),
                r=row[2],
                x=row[3],
                b_charging=row[4],
                tap=ratio if ratio != 0 else 1.0,
                shift=math.radians(row[9]),
                rate=row[5],
                in_service=row[10] > 0,
            )
        )
    return NetworkCase(base_mva=base, buses=buses, generators=generators, branches=branches, name=name)


def _polynomial(crow, k):
    model = _as_int(crow[0], f"generator {k} cost model")
    if model != 2:
        raise UnsupportedFeatureError(
            f"generator {k}: piecewise-linear cost (model {model})", features=["gencost model 1"]
        )
    n = _as_int(crow[3], f"generator {k} cost term count")
    coeffs = tuple(crow[4 : 4 + n])
    if len(coeffs) != n:
        raise StructuralError(f"generator {k}: gencost row declares {n} coefficients, has {len(coeffs)}")
    if n == 0:
        return (0.0,)
    if n > 3:
        # higher-order terms that are all zero are harmless
        lead, coeffs = coeffs[: n - 3], coeffs[n - 3 :]
        if any(c != 0 for c in lead):
            raise UnsupportedFeatureError(
                f"generator {k}: cost polynomial of degree {n - 1}", features=["cost degree > 2"]
            )
    return coeffs


def load_matpower(path) -> NetworkCase:
    return parse_matpower_case(Path(path).read_text())


def builtin_case_text(name: str = "case14") -> str:
    return resources.files("equished.data").joinpath(f"{name}.m").read_text()


def case14() -> NetworkCase:
    """The stock IEEE 14-bus case shipped with the package."""
    return parse_matpower_case(builtin_case_text("case14"))
