"""Case and reported-dispatch files.

Case files are UTF-8 JSON.  Numeric fields may be JSON numbers or decimal
strings; strings are parsed with :class:`decimal.Decimal` and converted to
float once, so a published ``"0.0070"`` becomes the nearest double to 0.007
rather than whatever a chain of float operations would produce.  Unbounded
ramp rates and reserve caps are written as ``null`` or omitted.
"""

from __future__ import annotations

import json
import math
from dataclasses import replace
from decimal import Decimal, InvalidOperation
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .model import (
    DispatchError,
    LossModel,
    OperatingZone,
    SystemCase,
    Unit,
    validate_case,
)

SCHEMA_VERSION = 1

_UNIT_REQUIRED = ("id", "a", "b", "c", "p_min", "p_max")
_UNIT_OPTIONAL = {"e": 0.0, "f": 0.0, "p_prev": None, "ramp_up": math.inf, "ramp_down": math.inf, "reserve_cap": math.inf}


class ParseError(DispatchError, ValueError):
    """A file could not be read into the expected structure."""

    def __init__(self, message: str, *, path=None, field: str = "", line: Optional[int] = None):
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(field)
        super().__init__(f"{': '.join(where)}: {message}" if where else message)
        self.path = path
        self.field = field
        self.line = line


class HasLossModel(DispatchError, ValueError):
    """Replication of a case with a loss model is not supported."""


# ---------------------------------------------------------------------------
# number handling
# ---------------------------------------------------------------------------


def _num(value, field, path, *, allow_none=False, default=None):
    if value is None:
        if allow_none:
            return default
        raise ParseError("missing value", path=path, field=field)
    if isinstance(value, bool):
        raise ParseError(f"expected a number, got {value!r}", path=path, field=field)
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        text = value.strip()
        if text.lower() in ("inf", "+inf", "infinity"):
            return math.inf
        try:
            return float(Decimal(text))
        except InvalidOperation:
            raise ParseError(f"not a decimal number: {value!r}", path=path, field=field) from None
    raise ParseError(f"expected a number, got {type(value).__name__}", path=path, field=field)


def _fmt(x: float):
    """Shortest decimal string that round-trips to ``x``; ``None`` for infinity."""
    if math.isinf(x):
        return None
    return repr(float(x))


# ---------------------------------------------------------------------------
# cases
# ---------------------------------------------------------------------------


def _parse_unit(raw, idx, path) -> Unit:
    tag = f"units[{idx}]"
    if not isinstance(raw, dict):
        raise ParseError("unit entry must be an object", path=path, field=tag)
    for key in _UNIT_REQUIRED:
        if key not in raw:
            raise ParseError("missing required field", path=path, field=f"{tag}.{key}")
    vals = {k: _num(raw[k], f"{tag}.{k}", path) for k in _UNIT_REQUIRED if k != "id"}
    for key, default in _UNIT_OPTIONAL.items():
        vals[key] = _num(raw.get(key), f"{tag}.{key}", path, allow_none=True, default=default)
    zones_raw = raw.get("zones")
    if zones_raw is None:
        zones = ()
    else:
        if not isinstance(zones_raw, list):
            raise ParseError("zones must be a list of [lower, upper] pairs", path=path, field=f"{tag}.zones")
        zones = []
        for k, z in enumerate(zones_raw):
            if not (isinstance(z, list) and len(z) == 2):
                raise ParseError("zone must be a [lower, upper] pair", path=path, field=f"{tag}.zones[{k}]")
            zones.append(OperatingZone(_num(z[0], f"{tag}.zones[{k}][0]", path), _num(z[1], f"{tag}.zones[{k}][1]", path)))
        zones = tuple(zones)
    return Unit(id=str(raw["id"]), zones=zones, **vals)


def _parse_loss(raw, n, path) -> LossModel:
    if not isinstance(raw, dict):
        raise ParseError("loss block must be an object", path=path, field="loss")
    try:
        B = [[_num(v, f"loss.B[{i}][{j}]", path) for j, v in enumerate(row)] for i, row in enumerate(raw["B"])]
        B0 = [_num(v, f"loss.B0[{i}]", path) for i, v in enumerate(raw.get("B0") or [0.0] * n)]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed loss block ({exc})", path=path, field="loss") from None
    if len({len(r) for r in B}) > 1:
        raise ParseError("B rows have different lengths", path=path, field="loss.B")
    return LossModel(
        B=np.array(B, dtype=float).reshape(len(B), -1) if B else np.zeros((0, 0)),
        B0=np.array(B0, dtype=float),
        B00=_num(raw.get("B00", 0.0), "loss.B00", path),
        base_mva=_num(raw.get("base_mva", 100.0), "loss.base_mva", path),
    )


def case_from_dict(doc: dict, path=None, *, validate: bool = True) -> SystemCase:
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object", path=path)
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ParseError(f"unsupported schema_version {version!r}", path=path, field="schema_version")
    units_raw = doc.get("units")
    if not isinstance(units_raw, list):
        raise ParseError("units must be a list", path=path, field="units")
    units = tuple(_parse_unit(u, i, path) for i, u in enumerate(units_raw))
    loss = _parse_loss(doc["loss"], len(units), path) if doc.get("loss") is not None else None
    prov = doc.get("provenance") or {}
    if not isinstance(prov, dict):
        raise ParseError("provenance must be an object", path=path, field="provenance")
    case = SystemCase(
        units=units,
        demand=_num(doc.get("demand_mw"), "demand_mw", path),
        reserve_req=_num(doc.get("reserve_mw"), "reserve_mw", path, allow_none=True, default=0.0),
        loss=loss,
        name=str(doc.get("name", "")),
        provenance=tuple((str(k), str(v)) for k, v in prov.items()),
    )
    return validate_case(case) if validate else case


def load_case(path) -> SystemCase:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(str(exc), path=path) from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path=path, line=exc.lineno) from None
    return case_from_dict(doc, path)


def case_to_dict(case: SystemCase) -> dict:
    units = []
    for u in case.units:
        d: dict[str, Any] = {"id": u.id, "a": _fmt(u.a), "b": _fmt(u.b), "c": _fmt(u.c)}
        if u.e or u.f:
            d["e"] = _fmt(u.e)
            d["f"] = _fmt(u.f)
        d["p_min"] = _fmt(u.p_min)
        d["p_max"] = _fmt(u.p_max)
        if u.p_prev is not None:
            d["p_prev"] = _fmt(u.p_prev)
        for key in ("ramp_up", "ramp_down", "reserve_cap"):
            v = getattr(u, key)
            if not math.isinf(v):
                d[key] = _fmt(v)
        d["zones"] = [[_fmt(z.lower), _fmt(z.upper)] for z in u.zones]
        units.append(d)
    doc: dict[str, Any] = {"schema_version": SCHEMA_VERSION, "name": case.name, "demand_mw": _fmt(case.demand)}
    if case.reserve_req:
        doc["reserve_mw"] = _fmt(case.reserve_req)
    doc["units"] = units
    if case.loss is not None:
        lm = case.loss
        doc["loss"] = {
            "base_mva": _fmt(lm.base_mva),
            "B": [[_fmt(v) for v in row] for row in lm.B],
            "B0": [_fmt(v) for v in lm.B0],
            "B00": _fmt(lm.B00),
        }
    if case.provenance:
        doc["provenance"] = dict(case.provenance)
    return doc


def write_case(case: SystemCase, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(case_to_dict(case), indent=1) + "\n", encoding="utf-8")
    tmp.replace(path)


def replicate_case(case: SystemCase, n: int) -> SystemCase:
    """``n`` independent copies of every unit, with demand and reserve scaled by ``n``."""
    if case.loss is not None:
        raise HasLossModel("cannot replicate a case that has a loss model")
    if n < 1:
        raise ValueError("n must be >= 1")
    if n == 1:
        return case
    units = tuple(replace(u, id=f"{u.id}#{r + 1}") for r in range(n) for u in case.units)
    return replace(
        case,
        units=units,
        demand=case.demand * n,
        reserve_req=case.reserve_req * n,
        name=f"{case.name} x{n}" if case.name else f"x{n}",
    )


# ---------------------------------------------------------------------------
# reported dispatches
# ---------------------------------------------------------------------------


def load_reported(path):
    """Read a reported-dispatch file: a JSON list of rows (or ``{"rows": [...]}``)."""
    from .audit import ReportedDispatch

    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(str(exc), path=path) from None
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path=path, line=exc.lineno) from None
    rows = doc.get("rows") if isinstance(doc, dict) else doc
    if not isinstance(rows, list):
        raise ParseError("expected a list of rows", path=path)
    out = []
    for i, r in enumerate(rows):
        tag = f"rows[{i}]"
        if not isinstance(r, dict) or "method" not in r or "p_mw" not in r:
            raise ParseError("row needs 'method' and 'p_mw'", path=path, field=tag)
        p = np.array([_num(v, f"{tag}.p_mw[{j}]", path) for j, v in enumerate(r["p_mw"])])
        out.append(
            ReportedDispatch(
                method_name=str(r["method"]),
                p=p,
                reported_loss=_num(r.get("loss_mw"), f"{tag}.loss_mw", path, allow_none=True),
                reported_cost=_num(r.get("cost"), f"{tag}.cost", path, allow_none=True),
                cpu_ghz=_num(r.get("cpu_ghz"), f"{tag}.cpu_ghz", path, allow_none=True),
                cpu_time_s=_num(r.get("cpu_time_s"), f"{tag}.cpu_time_s", path, allow_none=True),
                expected={k: _num(v, f"{tag}.expected.{k}", path) for k, v in (r.get("expected") or {}).items()},
            )
        )
    return out


# ---------------------------------------------------------------------------
# bundled data
# ---------------------------------------------------------------------------


def data_dir() -> Path:
    return Path(str(resources.files("zonedispatch") / "data"))


def bundled_case_path(name: str) -> Path:
    p = data_dir() / "cases" / (name if name.endswith(".json") else f"{name}.json")
    if not p.exists():
        raise FileNotFoundError(f"no bundled case named {name!r}")
    return p


def bundled_case(name: str) -> SystemCase:
    return load_case(bundled_case_path(name))


def bundled_reported_path(name: str) -> Path:
    p = data_dir() / "reported" / (name if name.endswith(".json") else f"{name}.json")
    if not p.exists():
        raise FileNotFoundError(f"no bundled reported-dispatch file named {name!r}")
    return p


def bundled_cases() -> list[str]:
    return sorted(p.stem for p in (data_dir() / "cases").glob("*.json") if not p.name.endswith(".expected.json"))
