"""Typed-edge program graphs, invariant injection, subtokens and vocabularies.

A method graph is its syntax tree plus six edge kinds: Child/Parent along the tree,
NextToken/PrevToken along the leaves in lexical order, and NextUse/LastUse between
consecutive leaf identifiers with the same text.  Edges are always regenerated from the
tree, so injection and removal of an invariant subtree are exact inverses.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

from .invariants import (
    AllElems,
    AnyElemNull,
    Contains,
    Elem,
    Invariant,
    IsNull,
    Len,
    NotNull,
    NumEq,
    NumGe,
    NumLe,
    Orig,
    RefEq,
    Rel,
    Return,
    StrEq,
    Term,
    Var,
    render_pred,
)
from .minilang.syntax import AstNode

MAX_NODES = 500
EDGE_KINDS = ("Child", "Parent", "NextToken", "PrevToken", "NextUse", "LastUse")
EDGE_INDEX = {k: i for i, k in enumerate(EDGE_KINDS)}
ANCHOR_KINDS = {"pre": "PreconditionAnchor", "post": "PostconditionAnchor"}
USE_KIND = "Identifier"

# every node kind the front end and injection can produce
NODE_KINDS = (
    "Function", "Params", "Block", "If", "While", "ReturnStmt", "Assign", "ExprStmt",
    "Binary", "Unary", "Call", "Args", "FieldAccess", "Index", "ArrayLit", "NewRecord",
    "FieldInit", "Identifier", "Keyword", "IntLit", "FloatLit", "StrLit", "Punct",
    "PreconditionAnchor", "PostconditionAnchor", "Orig", "Return", "Elem",
)


class MethodTooLarge(ValueError):
    def __init__(self, n_nodes: int):
        self.n_nodes = n_nodes
        super().__init__(f"graph has {n_nodes} nodes (limit {MAX_NODES})")


_CAMEL = re.compile(r"(?<=[a-z])(?=[A-Z])")


def subtokenize(identifier: str) -> list[str]:
    """Split at underscores and lower-to-upper case changes, lowercased, empties dropped."""
    out = []
    for chunk in identifier.split("_"):
        out.extend(p.lower() for p in _CAMEL.split(chunk) if p)
    return out


@dataclass
class MethodGraph:
    kinds: list[str]
    texts: list[str | None]
    children: list[list[int]]
    root: int = 0
    invariant_nodes: tuple[int, ...] = ()
    method: str = ""
    project: str = ""
    point: str = ""
    invariant: str = ""
    label: str | None = None
    score: float | None = None
    edges: list[tuple[int, int, str]] = field(default_factory=list)

    def __post_init__(self):
        if not self.edges:
            self.edges = compute_edges(self.children, self.kinds, self.texts, self.root)

    @property
    def n_nodes(self) -> int:
        return len(self.kinds)

    @property
    def nodes(self) -> list[tuple[int, str, str | None]]:
        return [(i, k, t) for i, (k, t) in enumerate(zip(self.kinds, self.texts))]

    @property
    def graph_id(self) -> str:
        return f"{self.project}::{self.method}::{self.point}::{self.invariant}"

    def leaves(self) -> list[int]:
        """Leaf ids in lexical order."""
        return _leaf_order(self.children, self.root)

    def tokens(self) -> list[str]:
        return [self.texts[i] for i in self.leaves()]

    def to_json(self) -> dict:
        return {
            "project": self.project,
            "method": self.method,
            "point": self.point,
            "invariant": self.invariant,
            "label": self.label,
            "score": self.score,
            "root": self.root,
            "nodes": [[i, k, t] for i, k, t in self.nodes],
            "edges": [[s, d, k] for s, d, k in self.edges],
            "invariant_nodes": list(self.invariant_nodes),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MethodGraph":
        nodes = obj["nodes"]
        if [n[0] for n in nodes] != list(range(len(nodes))):
            raise ValueError("node ids must be 0..N-1")
        children: list[list[int]] = [[] for _ in nodes]
        edges = [(int(s), int(d), str(k)) for s, d, k in obj["edges"]]
        for s, d, k in edges:
            if k not in EDGE_INDEX:
                raise ValueError(f"unknown edge kind {k!r}")
            if k == "Child":
                children[s].append(d)
        g = cls(
            kinds=[n[1] for n in nodes],
            texts=[n[2] for n in nodes],
            children=children,
            root=obj.get("root", 0),
            invariant_nodes=tuple(obj.get("invariant_nodes", ())),
            method=obj.get("method", ""),
            project=obj.get("project", ""),
            point=obj.get("point", ""),
            invariant=obj.get("invariant", ""),
            label=obj.get("label"),
            score=obj.get("score"),
            edges=edges,
        )
        return g


def _leaf_order(children: list[list[int]], root: int) -> list[int]:
    out = []
    stack = [root]
    while stack:
        n = stack.pop()
        if not children[n]:
            out.append(n)
        else:
            stack.extend(reversed(children[n]))
    return out


def _preorder(children: list[list[int]], root: int) -> list[int]:
    out = []
    stack = [root]
    while stack:
        n = stack.pop()
        out.append(n)
        stack.extend(reversed(children[n]))
    return out


def compute_edges(children: list[list[int]], kinds: list[str], texts: list[str | None], root: int = 0) -> list[tuple[int, int, str]]:
    """All six edge kinds, derived from the tree alone."""
    child = [(p, c) for p in _preorder(children, root) for c in children[p]]
    leaves = _leaf_order(children, root)
    nxt = list(zip(leaves, leaves[1:]))
    last_seen: dict[str, int] = {}
    uses = []
    for leaf in leaves:
        if kinds[leaf] == USE_KIND:
            text = texts[leaf]
            if text in last_seen:
                uses.append((last_seen[text], leaf))
            last_seen[text] = leaf
    edges = [(p, c, "Child") for p, c in child]
    edges += [(c, p, "Parent") for p, c in child]
    edges += [(a, b, "NextToken") for a, b in nxt]
    edges += [(b, a, "PrevToken") for a, b in nxt]
    edges += [(a, b, "NextUse") for a, b in uses]
    edges += [(b, a, "LastUse") for a, b in uses]
    return edges


def _make(kinds, texts, children, root=0, **meta) -> MethodGraph:
    if len(kinds) > MAX_NODES:
        raise MethodTooLarge(len(kinds))
    edges = compute_edges(children, kinds, texts, root)
    return MethodGraph(kinds, texts, children, root, edges=edges, **meta)


def build_graph(tree: list[AstNode], method: str = "", project: str = "") -> MethodGraph:
    """Graph of a function syntax tree (preorder ids, root 0)."""
    if not tree or tree[0].kind != "Function":
        raise ValueError("graph construction needs a tree rooted at a Function node")
    kinds = [n.kind for n in tree]
    texts = [n.text for n in tree]
    children = [list(n.children) for n in tree]
    return _make(kinds, texts, children, 0, method=method, project=project)


# -- invariant subtrees ---------------------------------------------------------------


class _SubtreeBuilder:
    def __init__(self, base: int):
        self.base = base
        self.kinds: list[str] = []
        self.texts: list[str | None] = []
        self.children: list[list[int]] = []

    def node(self, kind: str, text: str | None = None, kids: Iterable[int] = ()) -> int:
        nid = self.base + len(self.kinds)
        self.kinds.append(kind)
        self.texts.append(text)
        self.children.append(list(kids))
        return nid

    def interior(self, kind: str) -> int:
        return self.node(kind)

    def add(self, parent: int, *kids: int) -> None:
        self.children[parent - self.base].extend(kids)

    # nodes are created parent-first so the subtree's ids are in preorder
    def path(self, path: str) -> int:
        parts = path.split(".")
        return self._dotted(parts)

    def _dotted(self, parts: list[str], head=None) -> int:
        if len(parts) == 1:
            return head() if head is not None else self.node("Identifier", parts[0])
        n = self.interior("FieldAccess")
        left = self._dotted(parts[:-1], head)
        self.add(n, left, self.node("Punct", "."), self.node("Identifier", parts[-1]))
        return n

    def term(self, t: Term) -> int:
        if isinstance(t, Var):
            return self.path(t.path)
        if isinstance(t, Return):
            if not t.field:
                return self.node("Return", "return")
            return self._dotted([""] + t.field.split("."), head=lambda: self.node("Return", "return"))
        if isinstance(t, Orig):
            return self.call("Orig", "orig", [t.inner])
        if isinstance(t, Len):
            return self.call("Identifier", "len", [t.inner])
        if isinstance(t, Elem):
            return self.node("Elem", "elem")
        raise TypeError(t)

    def call(self, head_kind: str, head_text: str, items: list) -> int:
        n = self.interior("Call")
        head = self.node(head_kind, head_text)
        args = self.interior("Args")
        self.add(n, head, args)
        self.add(args, self.node("Punct", "("))
        for i, item in enumerate(items):
            if i:
                self.add(args, self.node("Punct", ","))
            self.add(args, self.term(item) if not _is_pred(item) else self.pred(item))
        self.add(args, self.node("Punct", ")"))
        return n

    def binary(self, left, op: str, right_kind: str | None, right) -> int:
        n = self.interior("Binary")
        lhs = self.term(left)
        opn = self.node("Punct", op)
        rhs = self.node(right_kind, right) if right_kind else self.term(right)
        self.add(n, lhs, opn, rhs)
        return n

    def pred(self, p) -> int:
        if isinstance(p, IsNull):
            return self.binary(p.term, "==", "Keyword", "null")
        if isinstance(p, NotNull):
            return self.binary(p.term, "!=", "Keyword", "null")
        if isinstance(p, StrEq):
            return self.binary(p.term, "==", "StrLit", json.dumps(p.literal, ensure_ascii=False))
        if isinstance(p, NumEq):
            return self.binary(p.term, "==", "IntLit", str(p.const))
        if isinstance(p, NumGe):
            return self.binary(p.term, ">=", "IntLit", str(p.const))
        if isinstance(p, NumLe):
            return self.binary(p.term, "<=", "IntLit", str(p.const))
        if isinstance(p, Rel):
            return self.binary(p.left, p.op, None, p.right)
        if isinstance(p, AllElems):
            return self.call("Keyword", "forall", [p.term, p.elem])
        if isinstance(p, AnyElemNull):
            return self.call("Keyword", "exists", [p.term, IsNull(Elem())])
        if isinstance(p, RefEq):
            return self.call("Keyword", "same", [p.left, p.right])
        if isinstance(p, Contains):
            return self.call("Keyword", "contains", [p.array, p.term])
        raise TypeError(p)


def _is_pred(x) -> bool:
    return isinstance(x, (IsNull, NotNull, StrEq, NumEq, NumGe, NumLe, AllElems, AnyElemNull, RefEq, Contains, Rel))


def _anchor_subtree(inv: Invariant, base: int) -> _SubtreeBuilder:
    b = _SubtreeBuilder(base)
    anchor = b.interior(ANCHOR_KINDS[inv.point])
    b.add(anchor, b.pred(inv.pred))
    return b


def _body_block(g: MethodGraph) -> int:
    blocks = [c for c in g.children[g.root] if g.kinds[c] == "Block"]
    if not blocks:
        raise ValueError("method tree has no body block")
    return blocks[-1]


def inject_invariant(graph: MethodGraph, inv: Invariant, label: str | None = None, score: float | None = None) -> MethodGraph:
    """Graph with ``inv`` attached under an anchor at the start (pre) or end (post) of the body."""
    if graph.method and inv.method != graph.method:
        raise ValueError(f"invariant for {inv.method} injected into {graph.method}")
    if graph.invariant_nodes:
        raise ValueError("graph already carries an invariant")
    base = graph.n_nodes
    sub = _anchor_subtree(inv, base)
    kinds = graph.kinds + sub.kinds
    if len(kinds) > MAX_NODES:
        raise MethodTooLarge(len(kinds))
    texts = graph.texts + sub.texts
    children = [list(c) for c in graph.children] + sub.children
    body = _body_block(graph)
    if inv.point == "pre":
        children[body].insert(0, base)
    else:
        children[body].append(base)
    return _make(
        kinds, texts, children, graph.root,
        invariant_nodes=tuple(range(base + 1, len(kinds))),
        method=inv.method, project=graph.project, point=inv.point,
        invariant=render_pred(inv.pred), label=label, score=score,
    )


def remove_invariant(graph: MethodGraph) -> MethodGraph:
    """Inverse of inject_invariant: drop the anchor subtree and regenerate edges."""
    if not graph.invariant_nodes:
        return graph
    anchor = min(graph.invariant_nodes) - 1
    keep = anchor
    children = [[c for c in kids if c < keep] for kids in graph.children[:keep]]
    return _make(graph.kinds[:keep], graph.texts[:keep], children, graph.root, method=graph.method, project=graph.project)


def invariant_graph(inv: Invariant, label: str | None = None, score: float | None = None, project: str = "") -> MethodGraph:
    """The invariant subtree alone (rooted at its anchor), for the no-context model."""
    sub = _anchor_subtree(inv, 0)
    return _make(
        sub.kinds, sub.texts, sub.children, 0,
        invariant_nodes=tuple(range(1, len(sub.kinds))),
        method=inv.method, project=project, point=inv.point,
        invariant=render_pred(inv.pred), label=label, score=score,
    )


def without_context(graph: MethodGraph) -> MethodGraph:
    """Cut an injected graph down to its anchor subtree, renumbered from 0."""
    if not graph.invariant_nodes:
        raise ValueError("graph has no injected invariant")
    anchor = min(graph.invariant_nodes) - 1
    n = graph.n_nodes
    children = [[c - anchor for c in graph.children[i]] for i in range(anchor, n)]
    return replace(
        _make(graph.kinds[anchor:], graph.texts[anchor:], children, 0, method=graph.method, project=graph.project),
        invariant_nodes=tuple(i - anchor for i in graph.invariant_nodes),
        point=graph.point, invariant=graph.invariant, label=graph.label, score=graph.score,
    )


def split_tokens(graph: MethodGraph) -> tuple[list[str], list[str]]:
    """(method tokens, invariant tokens) in lexical order, for sequence models."""
    inv = set(graph.invariant_nodes)
    method, invariant = [], []
    for leaf in graph.leaves():
        (invariant if leaf in inv else method).append(graph.texts[leaf])
    return method, invariant


# -- vocabulary -----------------------------------------------------------------------


UNKNOWN = "<unk>"


def node_subtokens(text: str | None) -> list[str]:
    if not text:
        return []
    return subtokenize(text) or [text]


@dataclass
class Vocabulary:
    subtokens: dict[str, int]
    kinds: dict[str, int]
    counts: dict[str, int]
    unknown: int = 0

    def subtoken_id(self, tok: str) -> int:
        return self.subtokens.get(tok, self.unknown)

    def kind_id(self, kind: str) -> int:
        return self.kinds.get(kind, self.unknown)

    @property
    def n_subtokens(self) -> int:
        return len(self.subtokens) + 1

    @property
    def n_kinds(self) -> int:
        return len(self.kinds) + 1

    def to_json(self) -> dict:
        return {
            "subtokens": sorted(self.subtokens, key=self.subtokens.get),
            "kinds": sorted(self.kinds, key=self.kinds.get),
            "counts": [self.counts[t] for t in sorted(self.subtokens, key=self.subtokens.get)],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Vocabulary":
        subs = {t: i + 1 for i, t in enumerate(obj["subtokens"])}
        kinds = {k: i + 1 for i, k in enumerate(obj["kinds"])}
        counts = dict(zip(obj["subtokens"], obj.get("counts", [0] * len(subs))))
        return cls(subs, kinds, counts)

    def fingerprint(self) -> str:
        import hashlib

        return hashlib.sha256(json.dumps(self.to_json(), sort_keys=True).encode()).hexdigest()[:16]


def build_vocab(training_graphs: Iterable[MethodGraph], min_count: int = 2) -> Vocabulary:
    """Subtokens seen at least ``min_count`` times, indexed by (count desc, text); 0 is unknown."""
    counts: Counter = Counter()
    seen_kinds = set()
    for g in training_graphs:
        seen_kinds.update(g.kinds)
        for text in g.texts:
            counts.update(node_subtokens(text))
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    kinds = list(NODE_KINDS) + sorted(seen_kinds - set(NODE_KINDS))
    return Vocabulary({t: i + 1 for i, t in enumerate(kept)}, {k: i + 1 for i, k in enumerate(kinds)}, {t: counts[t] for t in kept})


# -- files ------------------------------------------------------------------------------


def write_graphs(path, graphs: Iterable[MethodGraph]) -> None:
    lines = [json.dumps(g.to_json(), ensure_ascii=False, separators=(",", ":")) for g in graphs]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_graphs(path) -> list[MethodGraph]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            out.append(MethodGraph.from_json(json.loads(line)))
    return out


def read_graph_dir(path) -> list[MethodGraph]:
    path = Path(path)
    files = [path] if path.is_file() else sorted(path.glob("*.graphs.jsonl"))
    out = []
    for f in files:
        out.extend(read_graphs(f))
    return out


def graphs_for_labeled(program, labeled, project: str = "", skipped: list | None = None) -> list[MethodGraph]:
    """One injected graph per labeled invariant; methods over the node limit are skipped."""
    bases: dict[str, MethodGraph | None] = {}
    out = []
    for li in labeled:
        inv = li.invariant
        if inv.method not in bases:
            try:
                bases[inv.method] = build_graph(program.functions[inv.method].tree(), inv.method, project)
            except MethodTooLarge:
                bases[inv.method] = None
        base = bases[inv.method]
        if base is None:
            if skipped is not None:
                skipped.append(inv)
            continue
        try:
            out.append(inject_invariant(base, inv, li.label, li.score))
        except MethodTooLarge:
            if skipped is not None:
                skipped.append(inv)
    return out
