"""Typed syntax nodes, the Program container, and conversion to the dense AstNode tree.

Every syntax node remembers the half-open token span it was parsed from.  The dense
tree used by graph construction is derived from those spans: tokens inside a node's span
that are not covered by one of its sub-nodes become leaf children, so the leaves of a
function tree are exactly its tokens in lexical order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

from .lexer import Token

LEAF_KINDS = {
    "identifier": "Identifier",
    "keyword": "Keyword",
    "int-literal": "IntLit",
    "float-literal": "FloatLit",
    "string-literal": "StrLit",
    "punctuation": "Punct",
}


@dataclass
class Node:
    span: tuple[int, int] = field(default=(0, 0), kw_only=True, compare=False)

    kind = "Node"
    is_token = False

    def parts(self) -> list["Node"]:
        return []


# -- expressions -------------------------------------------------------------


@dataclass
class Name(Node):
    is_token = True
    name: str


@dataclass
class IntLit(Node):
    is_token = True
    value: int


@dataclass
class FloatLit(Node):
    is_token = True
    value: float


@dataclass
class StrLit(Node):
    is_token = True
    value: str


@dataclass
class NullLit(Node):
    is_token = True


@dataclass
class Binary(Node):
    op: str
    left: "Expr"
    right: "Expr"
    kind = "Binary"

    def parts(self):
        return [self.left, self.right]


@dataclass
class Unary(Node):
    op: str
    operand: "Expr"
    kind = "Unary"

    def parts(self):
        return [self.operand]


@dataclass
class Field(Node):
    obj: "Expr"
    name: str
    kind = "FieldAccess"

    def parts(self):
        return [self.obj]


@dataclass
class Index(Node):
    obj: "Expr"
    index: "Expr"
    kind = "Index"

    def parts(self):
        return [self.obj, self.index]


@dataclass
class Args(Node):
    items: list["Expr"]
    kind = "Args"

    def parts(self):
        return list(self.items)


@dataclass
class Call(Node):
    func: str
    args: Args
    kind = "Call"

    def parts(self):
        return [self.args]


@dataclass
class ArrayLit(Node):
    items: list["Expr"]
    kind = "ArrayLit"

    def parts(self):
        return list(self.items)


@dataclass
class FieldInit(Node):
    name: str
    value: "Expr"
    kind = "FieldInit"

    def parts(self):
        return [self.value]


@dataclass
class NewRecord(Node):
    type_name: str
    inits: list[FieldInit]
    kind = "NewRecord"

    def parts(self):
        return list(self.inits)


Expr = Union[Name, IntLit, FloatLit, StrLit, NullLit, Binary, Unary, Field, Index, Call, ArrayLit, NewRecord]


# -- statements --------------------------------------------------------------


@dataclass
class Block(Node):
    stmts: list["Stmt"]
    kind = "Block"

    def parts(self):
        return list(self.stmts)


@dataclass
class Assign(Node):
    target: Expr
    value: Expr
    kind = "Assign"

    def parts(self):
        return [self.target, self.value]


@dataclass
class ExprStmt(Node):
    expr: Expr
    kind = "ExprStmt"

    def parts(self):
        return [self.expr]


@dataclass
class If(Node):
    cond: Expr
    then: Block
    orelse: "Block | If | None" = None
    kind = "If"

    def parts(self):
        out = [self.cond, self.then]
        if self.orelse is not None:
            out.append(self.orelse)
        return out


@dataclass
class While(Node):
    cond: Expr
    body: Block
    kind = "While"

    def parts(self):
        return [self.cond, self.body]


@dataclass
class Return(Node):
    value: Expr | None = None
    kind = "ReturnStmt"

    def parts(self):
        return [] if self.value is None else [self.value]


Stmt = Union[Assign, ExprStmt, If, While, Return]


# -- declarations ------------------------------------------------------------


@dataclass
class Params(Node):
    names: list[str]
    kind = "Params"


@dataclass
class FunctionDecl(Node):
    name: str
    params: Params
    body: Block
    tokens: list[Token] = field(default_factory=list, repr=False, compare=False)
    kind = "Function"

    def parts(self):
        return [self.params, self.body]

    @property
    def param_names(self) -> list[str]:
        return self.params.names

    def tree(self) -> list["AstNode"]:
        return to_tree(self, self.tokens)


@dataclass
class RecordDecl(Node):
    name: str
    fields: list[str]


@dataclass
class AstNode:
    id: int
    kind: str
    text: str | None
    children: list[int]

    @property
    def is_leaf(self) -> bool:
        return not self.children


def to_tree(root: Node, tokens: list[Token]) -> list[AstNode]:
    """Flatten ``root`` into preorder AstNodes with token leaves interleaved by position."""
    nodes: list[AstNode] = []

    def leaf(tok: Token) -> int:
        nid = len(nodes)
        nodes.append(AstNode(nid, LEAF_KINDS[tok.kind], tok.text, []))
        return nid

    def visit(node: Node) -> int:
        start, end = node.span
        subs = node.parts()
        if node.is_token:
            return leaf(tokens[start])
        nid = len(nodes)
        me = AstNode(nid, node.kind, None, [])
        nodes.append(me)
        pos = start
        for sub in sorted(subs, key=lambda s: s.span[0]):
            while pos < sub.span[0]:
                me.children.append(leaf(tokens[pos]))
                pos += 1
            me.children.append(visit(sub))
            pos = sub.span[1]
        while pos < end:
            me.children.append(leaf(tokens[pos]))
            pos += 1
        return nid

    visit(root)
    return nodes


@dataclass
class Program:
    functions: dict[str, FunctionDecl] = field(default_factory=dict)
    records: dict[str, RecordDecl] = field(default_factory=dict)
    core: frozenset[str] = frozenset()

    @property
    def tests(self) -> list[str]:
        return sorted(name for name in self.functions if name.startswith("test_"))

    def with_core(self, names) -> "Program":
        names = frozenset(names)
        unknown = names - set(self.functions)
        if unknown:
            raise KeyError(f"unknown core functions: {', '.join(sorted(unknown))}")
        return Program(dict(self.functions), dict(self.records), names)

    def merge(self, other: "Program") -> "Program":
        dup = (set(self.functions) & set(other.functions)) | (set(self.records) & set(other.records))
        if dup:
            raise ValueError(f"duplicate declarations: {', '.join(sorted(dup))}")
        return Program({**self.functions, **other.functions}, {**self.records, **other.records}, self.core | other.core)
