"""Random trace records for property tests."""

from __future__ import annotations

import random

from invforge.trace import TraceRecord, ValueSnapshot

NUMBERS = [-7, -1, 0, 1, 2, 3, 15, 16, 17, 100, 999, 1000, 1023, 1024, 65535]
STRINGS = ["a", "b", "open"]


def _leaf(rng: random.Random, kind: str, path: str) -> ValueSnapshot:
    if kind == "int":
        return ValueSnapshot(path, "int", rng.choice(NUMBERS) if rng.random() < 0.8 else rng.randint(-3000, 3000))
    if kind == "float":
        r = rng.random()
        v = float("nan") if r < 0.05 else float(rng.choice(NUMBERS)) if r < 0.5 else rng.uniform(-50, 50)
        return ValueSnapshot(path, "float", v)
    if kind == "string":
        return ValueSnapshot(path, "string", rng.choice(STRINGS))
    if kind == "object":
        return ValueSnapshot(path, "object", rng.randint(1, 2))
    if kind == "null":
        return ValueSnapshot(path, "null")
    elem_kind = rng.choice(["int", "string", "object", "float"])
    n = rng.choice([0, 1, 2, 3, 4, 5])
    elems = tuple(
        ValueSnapshot("", "null") if rng.random() < 0.15 else _leaf(rng, elem_kind, "") for _ in range(n)
    )
    return ValueSnapshot(path, "array", elems)


def random_schema(rng: random.Random, point: str) -> dict[str, list[str]]:
    """path -> kinds a record may take there (a skewed choice keeps invariants likely)."""
    names = ["x", "y", "p", "p.f", "s", "a", "b"]
    if point == "exit":
        names += ["return", "orig(x)", "orig(p)", "orig(a)"]
    kinds = ["int", "float", "string", "object", "array", "null"]
    out = {}
    for name in rng.sample(names, rng.randint(1, min(5, len(names)))):
        main = rng.choice(kinds)
        extra = [main] if rng.random() < 0.6 else [main, rng.choice(kinds)]
        out[name] = extra
    if point == "exit" and "return" not in out:
        out["return"] = [rng.choice(kinds)]
    return out


def _membership_records(rng: random.Random, n: int, point: str, method: str) -> list[TraceRecord]:
    """Object ``p`` usually inside array ``a``; string arrays in ``s``."""
    records = []
    word = rng.choice(STRINGS)
    for i in range(n):
        k = rng.randint(1, 2)
        others = [ValueSnapshot("", "object", rng.randint(1, 4)) for _ in range(rng.randint(0, 2))]
        if rng.random() < 0.93:
            others.insert(rng.randint(0, len(others)), ValueSnapshot("", "object", k))
        words = tuple(ValueSnapshot("", "string", word if rng.random() < 0.95 else "b") for _ in range(rng.randint(0, 3)))
        snaps = [ValueSnapshot("p", "object", k), ValueSnapshot("a", "array", tuple(others)), ValueSnapshot("s", "array", words)]
        if point == "exit":
            snaps.append(ValueSnapshot("return", "object", k) if rng.random() < 0.9 else ValueSnapshot("return", "null"))
        records.append(TraceRecord("t", method, point, i + 1, tuple(snaps)))
    return records


def random_records(rng: random.Random, n: int, point: str = "entry", method: str = "m") -> list[TraceRecord]:
    if rng.random() < 0.15:
        return _membership_records(rng, n, point, method)
    schema = random_schema(rng, point)
    # a few fixed values make equalities and constant bounds common
    pinned = {path: _leaf(rng, kinds[0], path) for path, kinds in schema.items() if rng.random() < 0.6}
    records = []
    for i in range(n):
        snaps = []
        for path, kinds in schema.items():
            if path != "return" and rng.random() < 0.05:
                continue
            if path in pinned and rng.random() < 0.95:
                snaps.append(pinned[path])
            else:
                snaps.append(_leaf(rng, rng.choice(kinds), path))
        records.append(TraceRecord("t", method, point, i + 1, tuple(snaps)))
    return records
