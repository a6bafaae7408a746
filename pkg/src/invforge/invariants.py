"""Invariant grammar, evaluation on trace records, implication, and inference.

Terms name values in a trace record: ``Var`` (a dotted path), ``Return`` (the result, or
a field of it), ``Orig`` (a parameter path as it was at entry), ``Len`` (length of an
array term) and ``Elem`` (the element placeholder inside ``AllElems``).  Predicates are
evaluated strictly: a null dereference, a missing path or a kind mismatch makes the
predicate false on that record.
"""

from __future__ import annotations

import bisect
import json
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Union

from .trace import SplitTraces, TraceRecord, ValueSnapshot

CONSTANT_POOL: tuple[int, ...] = tuple(
    sorted(
        {-1, 0, 1}
        | {2**n for n in range(4, 31)}
        | {2**n - 1 for n in range(4, 31)}
        | {10**n for n in range(2, 10)}
    )
)
_POOL_SET = frozenset(CONSTANT_POOL)

REL_OPS = ("==", "<", "<=", ">", ">=")
_REL_IMPLIES = {("==", "<="), ("==", ">="), ("<", "<="), (">", ">=")}
_REF_KINDS = frozenset({"object", "string", "array", "null"})
_NUM_KINDS = frozenset({"int", "float"})
_POINT_OF = {"pre": "entry", "post": "exit"}


class UnresolvableTerm(KeyError):
    def __init__(self, path: str):
        self.path = path
        super().__init__(f"path {path!r} was never observed for this method")


class NoObservations(LookupError):
    def __init__(self, method: str, point: str):
        self.method = method
        self.point = point
        super().__init__(f"no records for {point} {method}")


@dataclass(frozen=True)
class InferenceConfig:
    min_support: int = 5
    flatten_depth: int = 2

    def __post_init__(self):
        if self.min_support < 1:
            raise ValueError("min_support must be >= 1")


# -- terms -----------------------------------------------------------------------


@dataclass(frozen=True)
class Var:
    path: str

    @property
    def key(self) -> str:
        return self.path

    def render(self) -> str:
        return self.path


@dataclass(frozen=True)
class Return:
    field: str = ""

    @property
    def key(self) -> str:
        return f"return.{self.field}" if self.field else "return"

    def render(self) -> str:
        return self.key


@dataclass(frozen=True)
class Orig:
    inner: Var

    @property
    def key(self) -> str:
        return f"orig({self.inner.path})"

    def render(self) -> str:
        return self.key


@dataclass(frozen=True)
class Len:
    inner: Union[Var, Return, Orig]

    @property
    def key(self) -> str:
        return self.inner.key

    def render(self) -> str:
        return f"len({self.inner.render()})"


@dataclass(frozen=True)
class Elem:
    key = ""

    def render(self) -> str:
        return "elem"


ELEM = Elem()
Term = Union[Var, Return, Orig, Len, Elem]


def term_from_key(key: str) -> Union[Var, Return, Orig]:
    if key == "return":
        return Return()
    if key.startswith("return."):
        return Return(key[len("return.") :])
    if key.startswith("orig(") and key.endswith(")"):
        return Orig(Var(key[5:-1]))
    return Var(key)


def term_order(t: Term) -> tuple:
    """Canonical term order: results first, then current values, then entry values."""
    if isinstance(t, Len):
        return term_order(t.inner)[:2] + (1,)
    rank = {Return: 0, Var: 1, Orig: 2, Elem: 3}[type(t)]
    return (rank, t.key, 0)


def is_exit_only(t: Term) -> bool:
    if isinstance(t, Len):
        return is_exit_only(t.inner)
    return isinstance(t, (Return, Orig))


# -- predicates ---------------------------------------------------------------------


def _check_const(c) -> None:
    if type(c) is not int or c not in _POOL_SET:
        raise ValueError(f"constant {c!r} is not in the constant pool")


@dataclass(frozen=True)
class IsNull:
    term: Term


@dataclass(frozen=True)
class NotNull:
    term: Term


@dataclass(frozen=True)
class StrEq:
    term: Term
    literal: str


@dataclass(frozen=True)
class NumEq:
    term: Term
    const: int

    def __post_init__(self):
        _check_const(self.const)


@dataclass(frozen=True)
class NumGe:
    term: Term
    const: int

    def __post_init__(self):
        _check_const(self.const)


@dataclass(frozen=True)
class NumLe:
    term: Term
    const: int

    def __post_init__(self):
        _check_const(self.const)


@dataclass(frozen=True)
class AllElems:
    term: Term
    elem: Union[NotNull, StrEq, NumEq, NumGe, NumLe]


@dataclass(frozen=True)
class AnyElemNull:
    term: Term


@dataclass(frozen=True)
class RefEq:
    left: Term
    right: Term


@dataclass(frozen=True)
class Contains:
    term: Term
    array: Term


@dataclass(frozen=True)
class Rel:
    left: Term
    op: str
    right: Term

    def __post_init__(self):
        if self.op not in REL_OPS:
            raise ValueError(f"unknown relation {self.op!r}")


Pred = Union[IsNull, NotNull, StrEq, NumEq, NumGe, NumLe, AllElems, AnyElemNull, RefEq, Contains, Rel]
_FLIP = {"==": "==", "<": ">", "<=": ">=", ">": "<", ">=": "<="}


def make_rel(left: Term, op: str, right: Term) -> Rel:
    """Build a relation with its operands in canonical term order."""
    if term_order(right) < term_order(left):
        return Rel(right, _FLIP[op], left)
    return Rel(left, op, right)


def make_refeq(left: Term, right: Term) -> RefEq:
    if term_order(right) < term_order(left):
        left, right = right, left
    return RefEq(left, right)


def subject(pred: Pred):
    """The term (or term pair) a predicate talks about; implication never crosses subjects."""
    if isinstance(pred, (RefEq, Rel)):
        return (pred.left, pred.right)
    if isinstance(pred, Contains):
        return (pred.term, pred.array)
    return pred.term


def pred_terms(pred: Pred) -> list[Term]:
    if isinstance(pred, (RefEq, Rel)):
        return [pred.left, pred.right]
    if isinstance(pred, Contains):
        return [pred.term, pred.array]
    return [pred.term]


@dataclass(frozen=True)
class Invariant:
    method: str
    point: str
    pred: Pred

    def __post_init__(self):
        if self.point not in _POINT_OF:
            raise ValueError(f"point must be 'pre' or 'post', not {self.point!r}")
        if self.point == "pre" and any(is_exit_only(t) for t in pred_terms(self.pred)):
            raise ValueError("orig() and return are only legal in post-conditions")

    def render(self) -> str:
        return f"{self.point} {self.method}: {render_pred(self.pred)}"

    def __str__(self) -> str:
        return self.render()

    @property
    def sort_key(self) -> tuple:
        return (self.method, self.point, render_pred(self.pred))


# -- rendering and parsing ---------------------------------------------------------


def render_pred(p: Pred) -> str:
    if isinstance(p, IsNull):
        return f"{p.term.render()} == null"
    if isinstance(p, NotNull):
        return f"{p.term.render()} != null"
    if isinstance(p, StrEq):
        return f"{p.term.render()} == {json.dumps(p.literal, ensure_ascii=False)}"
    if isinstance(p, NumEq):
        return f"{p.term.render()} == {p.const}"
    if isinstance(p, NumGe):
        return f"{p.term.render()} >= {p.const}"
    if isinstance(p, NumLe):
        return f"{p.term.render()} <= {p.const}"
    if isinstance(p, AllElems):
        return f"forall({p.term.render()}, {render_pred(p.elem)})"
    if isinstance(p, AnyElemNull):
        return f"exists({p.term.render()}, elem == null)"
    if isinstance(p, RefEq):
        return f"same({p.left.render()}, {p.right.render()})"
    if isinstance(p, Contains):
        return f"contains({p.array.render()}, {p.term.render()})"
    return f"{p.left.render()} {p.op} {p.right.render()}"


_TOKEN_RE = re.compile(
    r'\s*(?:(?P<str>"(?:[^"\\]|\\.)*")|(?P<num>-?\d+)|(?P<op>==|!=|<=|>=|<|>|[(),.])|(?P<name>[A-Za-z_][A-Za-z0-9_]*))'
)


class _InvParser:
    def __init__(self, text: str):
        self.toks: list[tuple[str, str]] = []
        pos = 0
        text = text.rstrip()
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if not m or m.end() == pos:
                raise ValueError(f"cannot parse invariant near {text[pos:]!r}")
            kind = m.lastgroup
            self.toks.append((kind, m.group(kind)))
            pos = m.end()
        self.i = 0

    def peek(self, k: int = 0):
        j = self.i + k
        return self.toks[j] if j < len(self.toks) else (None, None)

    def take(self, text: str | None = None, kind: str | None = None) -> str:
        k, t = self.peek()
        if (text is not None and t != text) or (kind is not None and k != kind) or k is None:
            raise ValueError(f"expected {text or kind}, found {t!r}")
        self.i += 1
        return t

    def path(self) -> str:
        parts = [self.take(kind="name")]
        while self.peek()[1] == ".":
            self.take(".")
            parts.append(self.take(kind="name"))
        return ".".join(parts)

    def term(self, in_elem: bool = False) -> Term:
        k, t = self.peek()
        if t == "orig" and self.peek(1)[1] == "(":
            self.take("orig")
            self.take("(")
            inner = Var(self.path())
            self.take(")")
            return Orig(inner)
        if t == "len" and self.peek(1)[1] == "(":
            self.take("len")
            self.take("(")
            inner = self.term()
            self.take(")")
            if not isinstance(inner, (Var, Return, Orig)):
                raise ValueError("len() of a non-path term")
            return Len(inner)
        if in_elem and t == "elem":
            self.take("elem")
            return ELEM
        path = self.path()
        return term_from_key(path)

    def comparison(self, in_elem: bool = False) -> Pred:
        left = self.term(in_elem)
        op = self.take(kind="op")
        k, t = self.peek()
        if t == "null":
            self.take("null")
            if op == "==":
                return IsNull(left)
            if op == "!=":
                return NotNull(left)
            raise ValueError(f"bad null comparison {op}")
        if k == "str":
            self.take(kind="str")
            if op != "==":
                raise ValueError("strings only support ==")
            return StrEq(left, json.loads(t))
        if k == "num":
            self.take(kind="num")
            cls = {"==": NumEq, ">=": NumGe, "<=": NumLe}.get(op)
            if cls is None:
                raise ValueError(f"constant comparison {op} not in grammar")
            return cls(left, int(t))
        right = self.term(in_elem)
        if op not in REL_OPS:
            raise ValueError(f"bad relation {op}")
        return Rel(left, op, right)

    def pred(self) -> Pred:
        _, t = self.peek()
        if t in ("forall", "exists", "same", "contains") and self.peek(1)[1] == "(":
            self.take(t)
            self.take("(")
            first = self.term()
            self.take(",")
            if t == "forall":
                elem = self.comparison(in_elem=True)
                result: Pred = AllElems(first, elem)
            elif t == "exists":
                self.take("elem")
                self.take("==")
                self.take("null")
                result = AnyElemNull(first)
            elif t == "same":
                result = RefEq(first, self.term())
            else:
                result = Contains(self.term(), first)
            self.take(")")
            return result
        return self.comparison()

    def done(self) -> None:
        if self.i != len(self.toks):
            raise ValueError(f"trailing input {self.toks[self.i][1]!r}")


def parse_pred(text: str) -> Pred:
    p = _InvParser(text)
    pred = p.pred()
    p.done()
    return pred


def parse_invariant(text: str) -> Invariant:
    """Inverse of ``Invariant.render``: ``"<pre|post> <method>: <predicate>"``."""
    point, _, rest = text.partition(" ")
    method, sep, body = rest.partition(": ")
    if not sep:
        raise ValueError(f"not an invariant: {text!r}")
    return Invariant(method, point, parse_pred(body))


# -- structured encoding -------------------------------------------------------------


def term_to_json(t: Term) -> dict:
    if isinstance(t, Var):
        return {"var": t.path}
    if isinstance(t, Return):
        return {"return": t.field}
    if isinstance(t, Orig):
        return {"orig": t.inner.path}
    if isinstance(t, Len):
        return {"len": term_to_json(t.inner)}
    return {"elem": True}


def term_from_json(obj: dict) -> Term:
    if "var" in obj:
        return Var(obj["var"])
    if "return" in obj:
        return Return(obj["return"])
    if "orig" in obj:
        return Orig(Var(obj["orig"]))
    if "len" in obj:
        return Len(term_from_json(obj["len"]))
    if obj.get("elem"):
        return ELEM
    raise ValueError(f"bad term encoding {obj!r}")


def pred_to_json(p: Pred) -> dict:
    out: dict = {"kind": type(p).__name__}
    if isinstance(p, (RefEq, Rel)):
        out["left"] = term_to_json(p.left)
        if isinstance(p, Rel):
            out["op"] = p.op
        out["right"] = term_to_json(p.right)
        return out
    out["term"] = term_to_json(p.term)
    if isinstance(p, StrEq):
        out["literal"] = p.literal
    elif isinstance(p, (NumEq, NumGe, NumLe)):
        out["const"] = p.const
    elif isinstance(p, AllElems):
        out["elem"] = pred_to_json(p.elem)
    elif isinstance(p, Contains):
        out["array"] = term_to_json(p.array)
    return out


_PRED_CLASSES = {c.__name__: c for c in (IsNull, NotNull, StrEq, NumEq, NumGe, NumLe, AllElems, AnyElemNull, RefEq, Contains, Rel)}


def pred_from_json(obj: dict) -> Pred:
    cls = _PRED_CLASSES[obj["kind"]]
    if cls is Rel:
        return Rel(term_from_json(obj["left"]), obj["op"], term_from_json(obj["right"]))
    if cls is RefEq:
        return RefEq(term_from_json(obj["left"]), term_from_json(obj["right"]))
    t = term_from_json(obj["term"])
    if cls is StrEq:
        return StrEq(t, obj["literal"])
    if cls in (NumEq, NumGe, NumLe):
        return cls(t, int(obj["const"]))
    if cls is AllElems:
        return AllElems(t, pred_from_json(obj["elem"]))
    if cls is Contains:
        return Contains(t, term_from_json(obj["array"]))
    return cls(t)


def invariant_to_json(inv: Invariant) -> dict:
    return {"method": inv.method, "point": inv.point, "invariant": render_pred(inv.pred), "rendered": inv.render(), "encoding": pred_to_json(inv.pred)}


def invariant_from_json(obj: dict) -> Invariant:
    return Invariant(obj["method"], obj["point"], pred_from_json(obj["encoding"]))


# -- evaluation -----------------------------------------------------------------------


def _snap(t: Term, lookup: dict) -> ValueSnapshot | None:
    return lookup.get(t.key)


def _num(t: Term, lookup: dict):
    if isinstance(t, Len):
        s = lookup.get(t.inner.key)
        return len(s.value) if s is not None and s.kind == "array" else None
    s = lookup.get(t.key)
    if s is not None and s.kind in _NUM_KINDS:
        return s.value
    return None


def _elem_holds(p: Pred, e: ValueSnapshot) -> bool:
    if isinstance(p, NotNull):
        return e.kind != "null"
    if isinstance(p, StrEq):
        return e.kind == "string" and e.value == p.literal
    if e.kind not in _NUM_KINDS:
        return False
    if isinstance(p, NumEq):
        return e.value == p.const
    if isinstance(p, NumGe):
        return e.value >= p.const
    return e.value <= p.const


def holds(p: Pred, lookup: dict) -> bool:
    """Evaluate a predicate against one record's ``path -> snapshot`` map."""
    if isinstance(p, (NumEq, NumGe, NumLe)):
        v = _num(p.term, lookup)
        if v is None:
            return False
        if isinstance(p, NumEq):
            return v == p.const
        if isinstance(p, NumGe):
            return v >= p.const
        return v <= p.const
    if isinstance(p, Rel):
        a = _num(p.left, lookup)
        b = _num(p.right, lookup)
        if a is None or b is None:
            return False
        op = p.op
        if op == "==":
            return a == b
        if op == "<":
            return a < b
        if op == "<=":
            return a <= b
        if op == ">":
            return a > b
        return a >= b
    if isinstance(p, (RefEq, Contains)):
        first, second = (p.left, p.right) if isinstance(p, RefEq) else (p.term, p.array)
        a, b = _snap(first, lookup), _snap(second, lookup)
        if a is None or b is None or a.kind != "object":
            return False
        if isinstance(p, RefEq):
            return b.kind == "object" and a.value == b.value
        return b.kind == "array" and any(e.kind == "object" and e.value == a.value for e in b.value)
    s = _snap(p.term, lookup)
    if s is None:
        return False
    if isinstance(p, IsNull):
        return s.kind == "null"
    if isinstance(p, NotNull):
        return s.kind != "null"
    if isinstance(p, StrEq):
        return s.kind == "string" and s.value == p.literal
    if s.kind != "array":
        return False
    if isinstance(p, AllElems):
        return all(_elem_holds(p.elem, e) for e in s.value)
    return any(e.kind == "null" for e in s.value)


def evaluate(inv: Invariant, record: TraceRecord, schema: "MethodSchema | None" = None) -> bool:
    """Strict evaluation of ``inv`` on ``record``.

    With a schema, a term whose path was never observed for the method raises
    UnresolvableTerm; a path that is merely absent from this record (say, below a null
    object) just makes the invariant false.
    """
    if _POINT_OF[inv.point] != record.point:
        raise ValueError(f"{inv.point} invariant evaluated on an {record.point} record")
    if schema is not None:
        for t in pred_terms(inv.pred):
            key = t.inner.key if isinstance(t, Len) else t.key
            if key not in schema.paths:
                raise UnresolvableTerm(key)
    return holds(inv.pred, record.lookup)


# -- implication -------------------------------------------------------------------------


def pred_implies(j: Pred, i: Pred) -> bool:
    if j == i:
        return True
    if isinstance(i, NotNull):
        return isinstance(j, (StrEq, NumEq, NumGe, NumLe, AllElems)) and j.term == i.term
    if isinstance(i, NumGe):
        return isinstance(j, (NumEq, NumGe)) and j.term == i.term and i.const <= j.const
    if isinstance(i, NumLe):
        return isinstance(j, (NumEq, NumLe)) and j.term == i.term and i.const >= j.const
    if isinstance(i, AllElems):
        return isinstance(j, AllElems) and j.term == i.term and pred_implies(j.elem, i.elem)
    if isinstance(i, Rel):
        return (
            isinstance(j, Rel)
            and j.left == i.left
            and j.right == i.right
            and (j.op, i.op) in _REL_IMPLIES
        )
    return False


def implies(j: Invariant, i: Invariant) -> bool:
    """Single-premise syntactic entailment: does ``j`` holding guarantee ``i`` holds?"""
    if j.method != i.method or j.point != i.point:
        return False
    return pred_implies(j.pred, i.pred)


def strongest(preds: Iterable[Pred]) -> set[Pred]:
    """Drop every predicate implied by another member of the set."""
    by_subject: dict = {}
    for p in preds:
        by_subject.setdefault(subject(p), set()).add(p)
    out: set[Pred] = set()
    for group in by_subject.values():
        for p in group:
            if not any(q != p and pred_implies(q, p) for q in group):
                out.add(p)
    return out


# -- schemas and candidate enumeration ----------------------------------------------------


@dataclass
class PathInfo:
    kinds: set[str] = field(default_factory=set)
    strings: set[str] = field(default_factory=set)
    elem_kinds: set[str] = field(default_factory=set)
    elem_strings: set[str] = field(default_factory=set)


@dataclass
class MethodSchema:
    """Paths, kinds and string literals observed for one method at one program point."""

    paths: dict[str, PathInfo] = field(default_factory=dict)

    @classmethod
    def from_records(cls, records: Iterable[TraceRecord]) -> "MethodSchema":
        paths: dict[str, PathInfo] = {}
        for rec in records:
            for snap in rec.vars:
                info = paths.get(snap.path)
                if info is None:
                    info = paths[snap.path] = PathInfo()
                info.kinds.add(snap.kind)
                if snap.kind == "string":
                    info.strings.add(snap.value)
                elif snap.kind == "array":
                    for e in snap.value:
                        info.elem_kinds.add(e.kind)
                        if e.kind == "string":
                            info.elem_strings.add(e.value)
        return cls(paths)

    @classmethod
    def from_kinds(cls, kinds: dict[str, str]) -> "MethodSchema":
        return cls({path: PathInfo({kind}) for path, kind in kinds.items()})


def _elem_candidates(info: PathInfo) -> list[Pred]:
    out: list[Pred] = []
    if info.elem_kinds & _REF_KINDS:
        out.append(NotNull(ELEM))
    out.extend(StrEq(ELEM, s) for s in sorted(info.elem_strings))
    if info.elem_kinds & _NUM_KINDS:
        out.extend(_numeric_candidates(ELEM))
    return out


def _numeric_candidates(t: Term) -> list[Pred]:
    return (
        [NumEq(t, c) for c in CONSTANT_POOL]
        + [NumGe(t, c) for c in CONSTANT_POOL]
        + [NumLe(t, c) for c in CONSTANT_POOL]
    )


def _ordered_keys(schema: MethodSchema, point: str) -> list[str]:
    keys = []
    for key in schema.paths:
        if point == "pre" and is_exit_only(term_from_key(key)):
            continue
        keys.append(key)
    return sorted(keys, key=lambda k: term_order(term_from_key(k)))


def _term_pools(schema: MethodSchema, point: str):
    numeric: list[Term] = []
    objects: list[Term] = []
    arrays: list[Term] = []
    for key in _ordered_keys(schema, point):
        t, info = term_from_key(key), schema.paths[key]
        if info.kinds & _NUM_KINDS:
            numeric.append(t)
        if "array" in info.kinds:
            numeric.append(Len(t))
            arrays.append(t)
        if "object" in info.kinds:
            objects.append(t)
    numeric.sort(key=term_order)
    return numeric, objects, arrays


def enumerate_candidates(schema: MethodSchema | dict, point: str, method: str = "") -> list[Invariant]:
    """Every grammar instance over the schema's terms and the constant pool, in a fixed order."""
    if isinstance(schema, dict):
        schema = MethodSchema.from_kinds(schema)
    preds: list[Pred] = []
    for key in _ordered_keys(schema, point):
        t, info = term_from_key(key), schema.paths[key]
        if info.kinds & _REF_KINDS:
            preds += [IsNull(t), NotNull(t)]
        preds += [StrEq(t, s) for s in sorted(info.strings)]
        if info.kinds & _NUM_KINDS:
            preds += _numeric_candidates(t)
        if "array" in info.kinds:
            preds.append(AnyElemNull(t))
            preds += [AllElems(t, e) for e in _elem_candidates(info)]
            preds += _numeric_candidates(Len(t))
    numeric, objects, arrays = _term_pools(schema, point)
    for a_i, a in enumerate(numeric):
        for b in numeric[a_i + 1 :]:
            preds += [Rel(a, op, b) for op in REL_OPS]
    for a_i, a in enumerate(objects):
        for b in objects[a_i + 1 :]:
            preds.append(RefEq(a, b))
    for t in objects:
        for arr in arrays:
            preds.append(Contains(t, arr))
    return [Invariant(method, point, p) for p in preds]


# -- inference --------------------------------------------------------------------------


def _bounds(t: Term, values: list) -> list[Pred]:
    """Strongest constant-pool equality/bounds satisfied by every value."""
    if not values or any(isinstance(v, float) and math.isnan(v) for v in values):
        return []
    lo, hi = min(values), max(values)
    if lo == hi and lo in _POOL_SET:
        return [NumEq(t, int(lo))]
    out: list[Pred] = []
    i = bisect.bisect_right(CONSTANT_POOL, lo)
    if i > 0:
        out.append(NumGe(t, CONSTANT_POOL[i - 1]))
    j = bisect.bisect_left(CONSTANT_POOL, hi)
    if j < len(CONSTANT_POOL):
        out.append(NumLe(t, CONSTANT_POOL[j]))
    return out


def _rel_strongest(holding: set[str]) -> list[str]:
    if "==" in holding:
        return ["=="]
    out = [op for op in ("<", ">") if op in holding]
    if "<=" in holding and "<" not in holding:
        out.append("<=")
    if ">=" in holding and ">" not in holding:
        out.append(">=")
    return out


def _elem_strongest(info: PathInfo, elems: list[ValueSnapshot]) -> list[Pred]:
    out: list[Pred] = []
    has_ref = bool(info.elem_kinds & _REF_KINDS)
    no_nulls = all(e.kind != "null" for e in elems)
    specific: list[Pred] = []
    if info.elem_strings and elems and all(e.kind == "string" for e in elems):
        lits = {e.value for e in elems}
        if len(lits) == 1:
            specific.append(StrEq(ELEM, lits.pop()))
    if info.elem_kinds & _NUM_KINDS and all(e.kind in _NUM_KINDS for e in elems):
        specific.extend(_bounds(ELEM, [e.value for e in elems]))
    out.extend(specific)
    if has_ref and no_nulls and not specific:
        out.append(NotNull(ELEM))
    return out


def infer_records(records: list[TraceRecord], method: str, point: str) -> set[Invariant]:
    schema = MethodSchema.from_records(records)
    lookups = [r.lookup for r in records]
    preds: list[Pred] = []
    for key in _ordered_keys(schema, point):
        t, info = term_from_key(key), schema.paths[key]
        snaps = [lk.get(key) for lk in lookups]
        if any(s is None for s in snaps):
            continue
        kinds = {s.kind for s in snaps}
        specific: list[Pred] = []
        if kinds == {"string"} and len({s.value for s in snaps}) == 1:
            specific.append(StrEq(t, snaps[0].value))
        if kinds <= _NUM_KINDS:
            specific.extend(_bounds(t, [s.value for s in snaps]))
        if kinds == {"array"}:
            arrays = [s.value for s in snaps]
            if all(any(e.kind == "null" for e in arr) for arr in arrays):
                preds.append(AnyElemNull(t))
            elems = [e for arr in arrays for e in arr]
            specific.extend(AllElems(t, e) for e in _elem_strongest(info, elems))
            preds.extend(_bounds(Len(t), [len(arr) for arr in arrays]))
        preds.extend(specific)
        if info.kinds & _REF_KINDS:
            if kinds == {"null"}:
                preds.append(IsNull(t))
            elif "null" not in kinds and not specific:
                preds.append(NotNull(t))
    numeric, objects, arrays = _term_pools(schema, point)
    num_values = {}
    for t in numeric:
        vals = [_num(t, lk) for lk in lookups]
        if all(v is not None for v in vals):
            num_values[t] = vals
    for a_i, a in enumerate(numeric):
        va = num_values.get(a)
        if va is None:
            continue
        for b in numeric[a_i + 1 :]:
            vb = num_values.get(b)
            if vb is None:
                continue
            holding = set(REL_OPS)
            for x, y in zip(va, vb):
                if not x == y:
                    holding.discard("==")
                if not x < y:
                    holding.discard("<")
                if not x <= y:
                    holding.discard("<=")
                if not x > y:
                    holding.discard(">")
                if not x >= y:
                    holding.discard(">=")
                if not holding:
                    break
            preds.extend(Rel(a, op, b) for op in _rel_strongest(holding))
    for a_i, a in enumerate(objects):
        for b in objects[a_i + 1 :]:
            p = RefEq(a, b)
            if all(holds(p, lk) for lk in lookups):
                preds.append(p)
    for t in objects:
        for arr in arrays:
            p = Contains(t, arr)
            if all(holds(p, lk) for lk in lookups):
                preds.append(p)
    return {Invariant(method, point, p) for p in preds}


def records_for(records: Iterable[TraceRecord], method: str, point: str) -> list[TraceRecord]:
    want = _POINT_OF[point]
    return [r for r in records if r.method == method and r.point == want]


def infer(traces: SplitTraces | Iterable[TraceRecord], method: str, point: str, cfg: InferenceConfig = InferenceConfig()) -> frozenset[Invariant]:
    """Strongest invariants holding on every record of ``method`` at ``point``.

    Returns the empty set when fewer than ``cfg.min_support`` records are available.
    """
    records = traces.records if isinstance(traces, SplitTraces) else traces
    recs = records_for(records, method, point)
    if not recs:
        raise NoObservations(method, point)
    if len(recs) < cfg.min_support:
        return frozenset()
    return frozenset(infer_records(recs, method, point))


def group_records(records: Iterable[TraceRecord]) -> dict[tuple[str, str], list[TraceRecord]]:
    """Records keyed by (method, 'pre'|'post'), in first-seen order."""
    out: dict[tuple[str, str], list[TraceRecord]] = {}
    for r in records:
        out.setdefault((r.method, "pre" if r.point == "entry" else "post"), []).append(r)
    return out


def infer_all(traces: SplitTraces | Iterable[TraceRecord], cfg: InferenceConfig = InferenceConfig()) -> dict[tuple[str, str], frozenset[Invariant]]:
    """Infer for every (method, point) present; pairs below min_support map to an empty set."""
    records = traces.records if isinstance(traces, SplitTraces) else traces
    out = {}
    for (method, point), recs in group_records(records).items():
        out[(method, point)] = frozenset(infer_records(recs, method, point)) if len(recs) >= cfg.min_support else frozenset()
    return out
