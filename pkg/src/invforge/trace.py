"""Trace records, their line-delimited on-disk format, and split composition."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

VALUE_KINDS = ("int", "float", "string", "object", "array", "null")
POINTS = ("entry", "exit")
TRACE_SUFFIX = ".trace"


class FormatError(ValueError):
    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class MissingTrace(KeyError):
    def __init__(self, test: str):
        self.test = test
        super().__init__(f"no trace for test {test!r}")


@dataclass(frozen=True)
class ValueSnapshot:
    """One observed value.  Array elements are snapshots with an empty path."""

    path: str
    kind: str
    value: object = None

    def __post_init__(self):
        problem = _snapshot_problem(self)
        if problem:
            raise ValueError(problem)

    @property
    def is_null(self) -> bool:
        return self.kind == "null"


def _snapshot_problem(snap: ValueSnapshot) -> str | None:
    kind, value = snap.kind, snap.value
    if kind not in VALUE_KINDS:
        return f"unknown kind {kind!r}"
    if kind == "null":
        return None if value is None else "null snapshot carries a value"
    if value is None:
        return f"{kind} snapshot without value"
    if kind in ("int", "object"):
        if type(value) is not int:
            return f"{kind} value must be an integer"
    elif kind == "float":
        if type(value) is not float:
            return "float value must be a float"
    elif kind == "string":
        if not isinstance(value, str):
            return "string value must be a string"
    elif kind == "array":
        if not isinstance(value, tuple) or not all(isinstance(e, ValueSnapshot) for e in value):
            return "array value must be a tuple of snapshots"
        kinds = {e.kind for e in value if e.kind != "null"}
        if len(kinds) > 1:
            return f"array elements of mixed kinds {sorted(kinds)}"
    return None


@dataclass(frozen=True)
class TraceRecord:
    test: str
    method: str
    point: str
    call_index: int
    vars: tuple[ValueSnapshot, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.point not in POINTS:
            raise ValueError(f"unknown point {self.point!r}")
        if type(self.call_index) is not int or self.call_index < 1:
            raise ValueError("call_index must be a positive integer")
        paths = [v.path for v in self.vars]
        if len(set(paths)) != len(paths):
            raise ValueError("duplicate paths in record")
        if self.point == "exit" and "return" not in paths:
            raise ValueError("exit record without 'return'")

    @cached_property
    def lookup(self) -> dict[str, ValueSnapshot]:
        return {v.path: v for v in self.vars}


@dataclass(frozen=True)
class SplitTraces:
    split_id: int
    tests: frozenset[str]
    records: tuple[TraceRecord, ...]

    def __post_init__(self):
        stray = {r.test for r in self.records} - self.tests
        if stray:
            raise ValueError(f"records from tests outside the split: {sorted(stray)}")


# -- serialization -------------------------------------------------------------


def _encode_value(snap: ValueSnapshot):
    if snap.kind == "array":
        return [_encode_elem(e) for e in snap.value]
    return snap.value


def _encode_elem(snap: ValueSnapshot) -> dict:
    out = {"kind": snap.kind}
    if snap.kind != "null":
        out["value"] = _encode_value(snap)
    return out


def _encode_snapshot(snap: ValueSnapshot) -> dict:
    out = {"path": snap.path, "kind": snap.kind}
    if snap.kind != "null":
        out["value"] = _encode_value(snap)
    return out


def encode_record(rec: TraceRecord) -> str:
    payload = {
        "test": rec.test,
        "method": rec.method,
        "point": rec.point,
        "call_index": rec.call_index,
        "vars": [_encode_snapshot(v) for v in rec.vars],
    }
    # json writes floats with repr(), the shortest round-tripping decimal
    return json.dumps(payload, ensure_ascii=False, separators=(",", ":"))


def write_records(records: Iterable[TraceRecord]) -> bytes:
    return "".join(encode_record(r) + "\n" for r in records).encode("utf-8")


def _decode_snapshot(obj, path: str | None = None) -> ValueSnapshot:
    if not isinstance(obj, dict):
        raise ValueError("snapshot must be an object")
    if path is None:
        path = obj.get("path")
        if not isinstance(path, str) or not path:
            raise ValueError("snapshot without path")
    kind = obj.get("kind")
    if "value" not in obj:
        if kind != "null":
            raise ValueError(f"{kind} snapshot without value")
        return ValueSnapshot(path, kind)
    value = obj["value"]
    if kind == "array":
        if not isinstance(value, list):
            raise ValueError("array value must be a list")
        value = tuple(_decode_snapshot(e, "") for e in value)
    return ValueSnapshot(path, kind, value)


def decode_record(line: str) -> TraceRecord:
    obj = json.loads(line)
    if not isinstance(obj, dict):
        raise ValueError("record must be an object")
    missing = {"test", "method", "point", "call_index", "vars"} - set(obj)
    if missing:
        raise ValueError(f"missing fields {sorted(missing)}")
    if not isinstance(obj["test"], str) or not isinstance(obj["method"], str):
        raise ValueError("test and method must be strings")
    if not isinstance(obj["vars"], list):
        raise ValueError("vars must be a list")
    snaps = tuple(_decode_snapshot(v) for v in obj["vars"])
    return TraceRecord(obj["test"], obj["method"], obj["point"], obj["call_index"], snaps)


def read_records(data: bytes | str) -> list[TraceRecord]:
    """Parse a line-delimited trace stream, rejecting any malformed record.

    Exit records are also checked against their entry record (same test, method and
    call index) when both are present: every entry path must be mirrored as ``orig(path)``.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    records: list[TraceRecord] = []
    entries: dict[tuple[str, str, int], TraceRecord] = {}
    for lineno, line in enumerate(data.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = decode_record(line)
        except (ValueError, TypeError, KeyError) as exc:
            raise FormatError(lineno, str(exc)) from None
        key = (rec.test, rec.method, rec.call_index)
        if rec.point == "entry":
            entries[key] = rec
        elif key in entries:
            want = {f"orig({v.path})" for v in entries[key].vars}
            have = set(rec.lookup)
            if not want <= have:
                raise FormatError(lineno, f"exit record lacks {sorted(want - have)}")
        records.append(rec)
    return records


def same_records(a: list[TraceRecord], b: list[TraceRecord]) -> bool:
    """Record equality that treats NaN as equal to itself (encoding is the identity)."""
    return len(a) == len(b) and all(encode_record(x) == encode_record(y) for x, y in zip(a, b))


# -- per-test files and split composition -------------------------------------------


def trace_path(trace_dir, test: str) -> Path:
    return Path(trace_dir) / f"{test}{TRACE_SUFFIX}"


def write_trace_dir(trace_dir, per_test: Mapping[str, list[TraceRecord]]) -> None:
    trace_dir = Path(trace_dir)
    trace_dir.mkdir(parents=True, exist_ok=True)
    for test, records in per_test.items():
        trace_path(trace_dir, test).write_bytes(write_records(records))


def read_trace_dir(trace_dir) -> dict[str, list[TraceRecord]]:
    trace_dir = Path(trace_dir)
    if not trace_dir.is_dir():
        raise FileNotFoundError(f"trace directory {trace_dir} does not exist")
    out = {}
    for path in sorted(trace_dir.glob(f"*{TRACE_SUFFIX}")):
        test = path.name[: -len(TRACE_SUFFIX)]
        try:
            out[test] = read_records(path.read_bytes())
        except FormatError as exc:
            raise FormatError(exc.line, f"{path}: {exc.reason}") from None
    return out


def compose_split(per_test: Mapping[str, list[TraceRecord]], tests: Iterable[str], split_id: int = 0) -> SplitTraces:
    """Concatenate the selected tests' records in test-name order (no re-execution)."""
    tests = frozenset(tests)
    records: list[TraceRecord] = []
    for test in sorted(tests):
        if test not in per_test:
            raise MissingTrace(test)
        records.extend(per_test[test])
    return SplitTraces(split_id, tests, tuple(records))
