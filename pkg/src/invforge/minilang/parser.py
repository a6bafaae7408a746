"""Recursive-descent parser for MiniLang.

Grammar (informal)::

    program   := (record | function)*
    record    := 'record' IDENT '{' [IDENT (',' IDENT)*] '}'
    function  := 'fn' IDENT '(' [IDENT (',' IDENT)*] ')' block
    block     := '{' stmt* '}'
    stmt      := 'if' '(' expr ')' block ['else' (if | block)]
               | 'while' '(' expr ')' block
               | 'return' [expr] ';'
               | expr ['=' expr] ';'
    expr      := or;  or := and ('||' and)*;  and := eq ('&&' eq)*
    eq        := rel (('=='|'!=') rel)*;  rel := add (('<'|'<='|'>'|'>=') add)*
    add       := mul (('+'|'-') mul)*;  mul := unary (('*'|'/'|'%') unary)*
    unary     := ('-'|'!') unary | postfix
    postfix   := primary ('.' IDENT | '[' expr ']')*
    primary   := INT | FLOAT | STRING | 'null' | IDENT ['(' args ')'] | '(' expr ')'
               | '[' args ']' | 'new' IDENT ['{' [IDENT ':' expr (',' ...)*] '}']
"""

from __future__ import annotations

from pathlib import Path

from . import syntax as s
from .lexer import MiniSyntaxError, Token, string_value, tokenize

_BINARY_LEVELS = (
    ("||",),
    ("&&",),
    ("==", "!="),
    ("<", "<=", ">", ">="),
    ("+", "-"),
    ("*", "/", "%"),
)


class _Parser:
    def __init__(self, tokens: list[Token], source: str):
        self.toks = tokens
        self.pos = 0
        lines = source.split("\n")
        self.eof_pos = (len(lines), len(lines[-1]) + 1)

    # -- token helpers --

    def peek(self, offset: int = 0) -> Token | None:
        i = self.pos + offset
        return self.toks[i] if i < len(self.toks) else None

    def at(self, text: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.text == text and tok.kind in ("punctuation", "keyword")

    def fail(self, expected) -> MiniSyntaxError:
        tok = self.peek()
        if tok is None:
            return MiniSyntaxError(self.eof_pos, expected)
        return MiniSyntaxError(tok.position, expected, tok.text)

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise self.fail({text})
        tok = self.toks[self.pos]
        self.pos += 1
        return tok

    def ident(self) -> Token:
        tok = self.peek()
        if tok is None or tok.kind != "identifier":
            raise self.fail({"identifier"})
        self.pos += 1
        return tok

    # -- declarations --

    def program(self) -> s.Program:
        prog = s.Program()
        while self.peek() is not None:
            if self.at("fn"):
                fn = self.function()
                if fn.name in prog.functions:
                    raise MiniSyntaxError(self.toks[fn.span[0] + 1].position, {"unique function name"}, fn.name)
                prog.functions[fn.name] = fn
            elif self.at("record"):
                rec = self.record()
                if rec.name in prog.records:
                    raise MiniSyntaxError(self.toks[rec.span[0] + 1].position, {"unique record name"}, rec.name)
                prog.records[rec.name] = rec
            else:
                raise self.fail({"fn", "record"})
        for name, fn in prog.functions.items():
            if name.startswith("test_") and fn.param_names:
                raise MiniSyntaxError(self.toks[fn.params.span[0]].position, {")"}, fn.param_names[0])
        return prog

    def _name_list(self, close: str) -> list[str]:
        names: list[str] = []
        if not self.at(close):
            names.append(self.ident().text)
            while self.at(","):
                self.pos += 1
                names.append(self.ident().text)
        return names

    def record(self) -> s.RecordDecl:
        start = self.pos
        self.expect("record")
        name = self.ident().text
        self.expect("{")
        fields = self._name_list("}")
        self.expect("}")
        if len(set(fields)) != len(fields):
            raise MiniSyntaxError(self.toks[start].position, {"unique field names"}, name)
        return s.RecordDecl(name, fields, span=(start, self.pos))

    def function(self) -> s.FunctionDecl:
        start = self.pos
        self.expect("fn")
        name = self.ident().text
        pstart = self.pos
        self.expect("(")
        params = self._name_list(")")
        self.expect(")")
        if len(set(params)) != len(params):
            raise MiniSyntaxError(self.toks[pstart].position, {"unique parameter names"}, name)
        plist = s.Params(params, span=(pstart, self.pos))
        body = self.block()
        return s.FunctionDecl(name, plist, body, self.toks, span=(start, self.pos))

    # -- statements --

    def block(self) -> s.Block:
        start = self.pos
        self.expect("{")
        stmts = []
        while not self.at("}"):
            if self.peek() is None:
                raise self.fail({"}"})
            stmts.append(self.statement())
        self.expect("}")
        return s.Block(stmts, span=(start, self.pos))

    def statement(self):
        start = self.pos
        if self.at("if"):
            return self.if_stmt()
        if self.at("while"):
            self.pos += 1
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            body = self.block()
            return s.While(cond, body, span=(start, self.pos))
        if self.at("return"):
            self.pos += 1
            value = None if self.at(";") else self.expr()
            self.expect(";")
            return s.Return(value, span=(start, self.pos))
        target = self.expr()
        if self.at("="):
            if not isinstance(target, (s.Name, s.Field, s.Index)):
                raise MiniSyntaxError(self.toks[start].position, {"assignable expression"}, self.toks[start].text)
            self.pos += 1
            value = self.expr()
            self.expect(";")
            return s.Assign(target, value, span=(start, self.pos))
        self.expect(";")
        return s.ExprStmt(target, span=(start, self.pos))

    def if_stmt(self) -> s.If:
        start = self.pos
        self.expect("if")
        self.expect("(")
        cond = self.expr()
        self.expect(")")
        then = self.block()
        orelse = None
        if self.at("else"):
            self.pos += 1
            orelse = self.if_stmt() if self.at("if") else self.block()
        return s.If(cond, then, orelse, span=(start, self.pos))

    # -- expressions --

    def expr(self):
        return self.binary(0)

    def binary(self, level: int):
        if level == len(_BINARY_LEVELS):
            return self.unary()
        start = self.pos
        left = self.binary(level + 1)
        ops = _BINARY_LEVELS[level]
        while any(self.at(op) for op in ops):
            op = self.toks[self.pos].text
            self.pos += 1
            right = self.binary(level + 1)
            left = s.Binary(op, left, right, span=(start, self.pos))
        return left

    def unary(self):
        start = self.pos
        if self.at("-") or self.at("!"):
            op = self.toks[self.pos].text
            self.pos += 1
            operand = self.unary()
            return s.Unary(op, operand, span=(start, self.pos))
        return self.postfix()

    def postfix(self):
        start = self.pos
        node = self.primary()
        while True:
            if self.at("."):
                self.pos += 1
                name = self.ident().text
                node = s.Field(node, name, span=(start, self.pos))
            elif self.at("["):
                self.pos += 1
                index = self.expr()
                self.expect("]")
                node = s.Index(node, index, span=(start, self.pos))
            else:
                return node

    def _args(self, open_: str, close: str) -> s.Args:
        start = self.pos
        self.expect(open_)
        items = []
        if not self.at(close):
            items.append(self.expr())
            while self.at(","):
                self.pos += 1
                items.append(self.expr())
        self.expect(close)
        return s.Args(items, span=(start, self.pos))

    def primary(self):
        tok = self.peek()
        start = self.pos
        if tok is None:
            raise self.fail({"expression"})
        if tok.kind == "int-literal":
            self.pos += 1
            return s.IntLit(int(tok.text), span=(start, self.pos))
        if tok.kind == "float-literal":
            self.pos += 1
            return s.FloatLit(float(tok.text), span=(start, self.pos))
        if tok.kind == "string-literal":
            self.pos += 1
            return s.StrLit(string_value(tok.text), span=(start, self.pos))
        if tok.kind == "identifier":
            self.pos += 1
            if self.at("("):
                args = self._args("(", ")")
                return s.Call(tok.text, args, span=(start, self.pos))
            return s.Name(tok.text, span=(start, self.pos))
        if self.at("null"):
            self.pos += 1
            return s.NullLit(span=(start, self.pos))
        if self.at("("):
            self.pos += 1
            inner = self.expr()
            self.expect(")")
            # parentheses are kept as tokens of the enclosing node; the inner span is unchanged
            return inner
        if self.at("["):
            args = self._args("[", "]")
            return s.ArrayLit(args.items, span=(start, self.pos))
        if self.at("new"):
            self.pos += 1
            type_name = self.ident().text
            inits = []
            if self.at("{"):
                self.pos += 1
                if not self.at("}"):
                    inits.append(self.field_init())
                    while self.at(","):
                        self.pos += 1
                        inits.append(self.field_init())
                self.expect("}")
            return s.NewRecord(type_name, inits, span=(start, self.pos))
        raise self.fail({"expression"})

    def field_init(self) -> s.FieldInit:
        start = self.pos
        name = self.ident().text
        self.expect(":")
        value = self.expr()
        return s.FieldInit(name, value, span=(start, self.pos))


def parse(source: str) -> s.Program:
    """Parse MiniLang source into a Program (no core functions marked)."""
    tokens = tokenize(source)
    return _Parser(tokens, source).program()


def parse_files(paths) -> s.Program:
    """Parse and merge several ``.mini`` files, in the order given."""
    program = s.Program()
    for path in paths:
        program = program.merge(parse(Path(path).read_text(encoding="utf-8")))
    return program


def load_program(path) -> s.Program:
    """Load a single ``.mini`` file, or a project directory holding ``src/`` and ``tests/``."""
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("src/*.mini")) + sorted(path.glob("tests/*.mini"))
        if not files:
            files = sorted(path.glob("*.mini"))
        return parse_files(files)
    return parse(path.read_text(encoding="utf-8"))
