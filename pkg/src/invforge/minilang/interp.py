"""Tree-walking interpreter with entry/exit tracing of core functions."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Protocol

from ..trace import TraceRecord, ValueSnapshot
from . import syntax as s

INT_BITS = 64
_MASK = (1 << INT_BITS) - 1
_HALF = 1 << (INT_BITS - 1)

# MMIX linear congruential generator (Knuth); the high 31 bits are used as output.
LCG_MULTIPLIER = 6364136223846793005
LCG_INCREMENT = 1442695040888963407

FLATTEN_DEPTH = 2
MAX_STEPS = 2_000_000
MAX_CALL_DEPTH = 100


def wrap_int(x: int) -> int:
    return ((x + _HALF) & _MASK) - _HALF


class MiniRuntimeError(Exception):
    def __init__(self, test: str, message: str):
        self.test = test
        self.message = message
        super().__init__(f"{test}: {message}")


class _Fault(Exception):
    """Internal: a runtime fault before the test name is attached."""


class Lcg:
    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next(self) -> int:
        self.state = (self.state * LCG_MULTIPLIER + LCG_INCREMENT) & _MASK
        return self.state >> 33

    def randint(self, lo: int, hi: int) -> int:
        if hi < lo:
            raise _Fault(f"rand: empty range [{lo}, {hi}]")
        return lo + self.next() % (hi - lo + 1)


def test_seed(seed: int, test: str) -> int:
    """Per-test generator seed, so a test's values do not depend on which other tests run."""
    digest = hashlib.blake2b(test.encode("utf-8"), digest_size=8).digest()
    return (seed ^ int.from_bytes(digest, "little")) & _MASK


def sample_decision(call_index: int) -> bool:
    """Exponential back-off: calls 1-10, then 20..100 by 10, 200..1000 by 100, and so on."""
    if call_index < 1:
        raise ValueError("call_index must be >= 1")
    if call_index <= 10:
        return True
    step = 10
    while call_index > step * 10:
        step *= 10
    return call_index % step == 0


class Record:
    __slots__ = ("oid", "type_name", "fields")

    def __init__(self, oid: int, type_name: str, fields: dict):
        self.oid = oid
        self.type_name = type_name
        self.fields = fields


class Array:
    __slots__ = ("oid", "items")

    def __init__(self, oid: int, items: list):
        self.oid = oid
        self.items = items


class TraceSink(Protocol):
    def emit(self, record: TraceRecord) -> None: ...


@dataclass
class ListSink:
    records: list[TraceRecord] = field(default_factory=list)

    def emit(self, record: TraceRecord) -> None:
        self.records.append(record)

    def by_test(self) -> dict[str, list[TraceRecord]]:
        out: dict[str, list[TraceRecord]] = {}
        for rec in self.records:
            out.setdefault(rec.test, []).append(rec)
        return out


@dataclass
class TestOutcome:
    passed: bool
    error: str | None = None


@dataclass
class ExecutionReport:
    tests: dict[str, TestOutcome] = field(default_factory=dict)
    calls: dict[str, int] = field(default_factory=dict)

    @property
    def n_passed(self) -> int:
        return sum(o.passed for o in self.tests.values())

    def to_json(self) -> dict:
        return {
            "tests": {k: {"passed": v.passed, "error": v.error} for k, v in self.tests.items()},
            "calls": dict(sorted(self.calls.items())),
        }


# -- snapshots -------------------------------------------------------------------


def _elem_snapshot(value) -> ValueSnapshot:
    if value is None:
        return ValueSnapshot("", "null")
    if isinstance(value, int):
        return ValueSnapshot("", "int", value)
    if isinstance(value, float):
        return ValueSnapshot("", "float", value)
    if isinstance(value, str):
        return ValueSnapshot("", "string", value)
    return ValueSnapshot("", "object", value.oid)


def snapshot(path: str, value, depth: int = 0) -> list[ValueSnapshot]:
    """Flatten a value to dotted-path snapshots, following record fields to depth 2."""
    if value is None:
        return [ValueSnapshot(path, "null")]
    if isinstance(value, int):
        return [ValueSnapshot(path, "int", value)]
    if isinstance(value, float):
        return [ValueSnapshot(path, "float", value)]
    if isinstance(value, str):
        return [ValueSnapshot(path, "string", value)]
    if isinstance(value, Array):
        elems = tuple(_elem_snapshot(v) for v in value.items)
        if len({e.kind for e in elems if e.kind != "null"}) > 1:
            # heterogeneous arrays are only recorded by identity
            return [ValueSnapshot(path, "object", value.oid)]
        return [ValueSnapshot(path, "array", elems)]
    out = [ValueSnapshot(path, "object", value.oid)]
    if depth < FLATTEN_DEPTH:
        for name, fv in value.fields.items():
            out.extend(snapshot(f"{path}.{name}", fv, depth + 1))
    return out


# -- interpreter -----------------------------------------------------------------------


class _Returned(Exception):
    def __init__(self, value):
        self.value = value


class Interpreter:
    def __init__(self, program: s.Program, sink: TraceSink | None, seed: int):
        self.program = program
        self.sink = sink
        self.seed = seed
        self.calls: dict[str, int] = {}

    def run_test(self, name: str) -> TestOutcome:
        fn = self.program.functions[name]
        self.test = name
        self.rng = Lcg(test_seed(self.seed, name))
        self.next_oid = 1
        self.steps = 0
        self.depth = 0
        self.counters: dict[str, int] = {}
        try:
            self.call(fn, [])
        except _Fault as exc:
            return TestOutcome(False, str(exc))
        except RecursionError:
            return TestOutcome(False, "recursion too deep")
        return TestOutcome(True)

    # -- calls --

    def call(self, fn: s.FunctionDecl, args: list):
        if len(args) != len(fn.param_names):
            raise _Fault(f"{fn.name} expects {len(fn.param_names)} arguments, got {len(args)}")
        if self.depth >= MAX_CALL_DEPTH:
            raise _Fault("call depth exceeded")
        env = dict(zip(fn.param_names, args))
        entry = None
        if fn.name in self.program.core:
            self.calls[fn.name] = self.calls.get(fn.name, 0) + 1
            index = self.counters[fn.name] = self.counters.get(fn.name, 0) + 1
            if sample_decision(index):
                snaps = []
                for p in fn.param_names:
                    snaps.extend(snapshot(p, env[p]))
                entry = (index, tuple(snaps), [(p, env[p]) for p in fn.param_names if isinstance(env[p], (Record, Array))])
                self.sink_emit(fn.name, "entry", index, entry[1])
        self.depth += 1
        try:
            self.exec_block(fn.body, env)
            result = None
        except _Returned as ret:
            result = ret.value
        finally:
            self.depth -= 1
        if entry is not None:
            index, entry_snaps, refs = entry
            snaps = snapshot("return", result)
            for p, obj in refs:
                snaps.extend(snapshot(p, obj))
            snaps.extend(ValueSnapshot(f"orig({v.path})", v.kind, v.value) for v in entry_snaps)
            self.sink_emit(fn.name, "exit", index, tuple(snaps))
        return result

    def sink_emit(self, method: str, point: str, index: int, snaps) -> None:
        if self.sink is not None:
            self.sink.emit(TraceRecord(self.test, method, point, index, snaps))

    def builtin(self, name: str, args: list):
        if name == "len":
            self._arity(name, args, 1)
            a = args[0]
            if isinstance(a, Array):
                return len(a.items)
            if isinstance(a, str):
                return len(a)
            raise _Fault(f"len of {_type_name(a)}")
        if name == "array":
            if len(args) not in (1, 2):
                raise _Fault("array expects 1 or 2 arguments")
            n = args[0]
            if not isinstance(n, int) or n < 0 or n > 1_000_000:
                raise _Fault("array size must be a small non-negative int")
            init = args[1] if len(args) == 2 else None
            return self.new_array([init] * n)
        if name == "push":
            self._arity(name, args, 2)
            if not isinstance(args[0], Array):
                raise _Fault(f"push onto {_type_name(args[0])}")
            args[0].items.append(args[1])
            return None
        if name == "rand":
            self._arity(name, args, 2)
            lo, hi = args
            if not (isinstance(lo, int) and isinstance(hi, int)):
                raise _Fault("rand bounds must be ints")
            return self.rng.randint(lo, hi)
        raise _Fault(f"unknown function {name}")

    @staticmethod
    def _arity(name, args, n):
        if len(args) != n:
            raise _Fault(f"{name} expects {n} arguments, got {len(args)}")

    def new_array(self, items: list) -> Array:
        arr = Array(self.next_oid, items)
        self.next_oid += 1
        return arr

    # -- statements --

    def exec_block(self, block: s.Block, env: dict) -> None:
        for stmt in block.stmts:
            self.exec_stmt(stmt, env)

    def exec_stmt(self, stmt, env: dict) -> None:
        self.steps += 1
        if self.steps > MAX_STEPS:
            raise _Fault("step limit exceeded")
        if isinstance(stmt, s.Assign):
            value = self.eval(stmt.value, env)
            target = stmt.target
            if isinstance(target, s.Name):
                env[target.name] = value
            elif isinstance(target, s.Field):
                obj = self.eval(target.obj, env)
                if not isinstance(obj, Record):
                    raise _Fault(f"field assignment on {_type_name(obj)}")
                if target.name not in obj.fields:
                    raise _Fault(f"record {obj.type_name} has no field {target.name}")
                obj.fields[target.name] = value
            else:
                arr = self.eval(target.obj, env)
                idx = self.eval(target.index, env)
                self._check_index(arr, idx)
                arr.items[idx] = value
        elif isinstance(stmt, s.ExprStmt):
            self.eval(stmt.expr, env)
        elif isinstance(stmt, s.If):
            if truthy(self.eval(stmt.cond, env)):
                self.exec_block(stmt.then, env)
            elif isinstance(stmt.orelse, s.If):
                self.exec_stmt(stmt.orelse, env)
            elif stmt.orelse is not None:
                self.exec_block(stmt.orelse, env)
        elif isinstance(stmt, s.While):
            while truthy(self.eval(stmt.cond, env)):
                self.exec_block(stmt.body, env)
                self.steps += 1
                if self.steps > MAX_STEPS:
                    raise _Fault("step limit exceeded")
        elif isinstance(stmt, s.Return):
            raise _Returned(None if stmt.value is None else self.eval(stmt.value, env))
        else:  # pragma: no cover - parser produces no other statements
            raise _Fault(f"unknown statement {type(stmt).__name__}")

    @staticmethod
    def _check_index(arr, idx) -> None:
        if not isinstance(arr, Array):
            raise _Fault(f"index into {_type_name(arr)}")
        if not isinstance(idx, int):
            raise _Fault(f"index of type {_type_name(idx)}")
        if not 0 <= idx < len(arr.items):
            raise _Fault(f"index {idx} out of bounds for length {len(arr.items)}")

    # -- expressions --

    def eval(self, e, env: dict):
        if isinstance(e, s.Name):
            try:
                return env[e.name]
            except KeyError:
                raise _Fault(f"undefined variable {e.name}") from None
        if isinstance(e, s.IntLit):
            return wrap_int(e.value)
        if isinstance(e, s.Binary):
            if e.op == "&&":
                return int(truthy(self.eval(e.left, env)) and truthy(self.eval(e.right, env)))
            if e.op == "||":
                return int(truthy(self.eval(e.left, env)) or truthy(self.eval(e.right, env)))
            return binary_op(e.op, self.eval(e.left, env), self.eval(e.right, env))
        if isinstance(e, s.Field):
            obj = self.eval(e.obj, env)
            if not isinstance(obj, Record):
                raise _Fault(f"field {e.name} of {_type_name(obj)}")
            try:
                return obj.fields[e.name]
            except KeyError:
                raise _Fault(f"record {obj.type_name} has no field {e.name}") from None
        if isinstance(e, s.Call):
            args = [self.eval(a, env) for a in e.args.items]
            fn = self.program.functions.get(e.func)
            if fn is None:
                return self.builtin(e.func, args)
            return self.call(fn, args)
        if isinstance(e, s.NullLit):
            return None
        if isinstance(e, s.StrLit):
            return e.value
        if isinstance(e, s.FloatLit):
            return e.value
        if isinstance(e, s.Unary):
            v = self.eval(e.operand, env)
            if e.op == "!":
                return int(not truthy(v))
            if isinstance(v, int):
                return wrap_int(-v)
            if isinstance(v, float):
                return -v
            raise _Fault(f"negation of {_type_name(v)}")
        if isinstance(e, s.Index):
            arr = self.eval(e.obj, env)
            idx = self.eval(e.index, env)
            self._check_index(arr, idx)
            return arr.items[idx]
        if isinstance(e, s.ArrayLit):
            return self.new_array([self.eval(x, env) for x in e.items])
        if isinstance(e, s.NewRecord):
            decl = self.program.records.get(e.type_name)
            if decl is None:
                raise _Fault(f"unknown record type {e.type_name}")
            fields = dict.fromkeys(decl.fields)
            for init in e.inits:
                if init.name not in fields:
                    raise _Fault(f"record {decl.name} has no field {init.name}")
                fields[init.name] = self.eval(init.value, env)
            rec = Record(self.next_oid, decl.name, fields)
            self.next_oid += 1
            return rec
        raise _Fault(f"cannot evaluate {type(e).__name__}")  # pragma: no cover


def _type_name(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, Record):
        return v.type_name
    if isinstance(v, Array):
        return "array"
    return {int: "int", float: "float", str: "string"}[type(v)]


def truthy(v) -> bool:
    if v is None:
        return False
    if isinstance(v, (int, float)):
        return v != 0
    return True


def binary_op(op: str, a, b):
    num_a = isinstance(a, (int, float))
    num_b = isinstance(b, (int, float))
    if op in ("==", "!="):
        if num_a and num_b:
            eq = a == b
        elif isinstance(a, str) and isinstance(b, str):
            eq = a == b
        else:
            eq = a is b
        return int(eq if op == "==" else not eq)
    if op in ("<", "<=", ">", ">="):
        if not ((num_a and num_b) or (isinstance(a, str) and isinstance(b, str))):
            raise _Fault(f"cannot compare {_type_name(a)} and {_type_name(b)}")
        return int({"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[op])
    if op == "+" and isinstance(a, str) and isinstance(b, str):
        return a + b
    if not (num_a and num_b):
        raise _Fault(f"operator {op} on {_type_name(a)} and {_type_name(b)}")
    if isinstance(a, int) and isinstance(b, int):
        if op == "+":
            return wrap_int(a + b)
        if op == "-":
            return wrap_int(a - b)
        if op == "*":
            return wrap_int(a * b)
        if b == 0:
            raise _Fault("division by zero")
        q = abs(a) // abs(b)
        q = q if (a >= 0) == (b >= 0) else -q
        return wrap_int(q) if op == "/" else wrap_int(a - b * q)
    a, b = float(a), float(b)
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if b == 0.0:
        raise _Fault("division by zero")
    return a / b if op == "/" else a - b * int(a / b)


def run_tests(program: s.Program, selected, tracer: TraceSink | None, seed: int) -> ExecutionReport:
    """Run the selected tests in name order, tracing calls to the program's core functions.

    A failing test is recorded in the report and does not stop the remaining tests.
    Call sampling is counted per method and per test, so each test's trace is independent
    of the others and per-test traces can later be composed into splits.
    """
    selected = sorted(set(selected))
    unknown = [t for t in selected if t not in program.tests]
    if unknown:
        raise KeyError(f"not test functions: {', '.join(unknown)}")
    interp = Interpreter(program, tracer, seed)
    report = ExecutionReport()
    for name in selected:
        report.tests[name] = interp.run_test(name)
    report.calls = dict(sorted(interp.calls.items()))
    return report
