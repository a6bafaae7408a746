"""Tokenizer for MiniLang source text."""

from __future__ import annotations

from dataclasses import dataclass

KEYWORDS = frozenset({"fn", "if", "else", "while", "return", "null", "new", "record"})

# longest first, so "<=" wins over "<"
PUNCTUATION = (
    "==", "!=", "<=", ">=", "&&", "||",
    "{", "}", "(", ")", "[", "]", ",", ";", ".", ":",
    "=", "<", ">", "+", "-", "*", "/", "%", "!",
)

TOKEN_KINDS = ("identifier", "keyword", "int-literal", "float-literal", "string-literal", "punctuation")

_ESCAPES = {"n": "\n", "t": "\t", '"': '"', "\\": "\\"}


class MiniSyntaxError(Exception):
    """Raised for malformed source; carries a 1-based (line, column) and what was expected."""

    def __init__(self, position: tuple[int, int], expected: frozenset[str] | set[str], found: str = ""):
        self.position = position
        self.expected = frozenset(expected)
        self.found = found
        line, col = position
        want = ", ".join(sorted(self.expected)) or "?"
        super().__init__(f"line {line}, column {col}: expected {want}, found {found or 'end of input'!r}")


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    position: tuple[int, int]

    @property
    def line(self) -> int:
        return self.position[0]


def string_value(text: str) -> str:
    """Decode the body of a string-literal token (quotes included in ``text``)."""
    out = []
    i = 1
    while i < len(text) - 1:
        ch = text[i]
        if ch == "\\":
            out.append(_ESCAPES[text[i + 1]])
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def quote(value: str) -> str:
    body = value.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t")
    return f'"{body}"'


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(source)

    def advance(count: int) -> None:
        nonlocal i, line, col
        for _ in range(count):
            if source[i] == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1

    while i < n:
        ch = source[i]
        if ch in " \t\r\n":
            advance(1)
            continue
        if source.startswith("//", i):
            while i < n and source[i] != "\n":
                advance(1)
            continue
        start = (line, col)
        if ch.isalpha() or ch == "_":
            j = i + 1
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            text = source[i:j]
            tokens.append(Token("keyword" if text in KEYWORDS else "identifier", text, start))
            advance(j - i)
            continue
        if ch.isdigit():
            j = i
            while j < n and source[j].isdigit():
                j += 1
            kind = "int-literal"
            if j + 1 < n and source[j] == "." and source[j + 1].isdigit():
                j += 1
                while j < n and source[j].isdigit():
                    j += 1
                kind = "float-literal"
            if j < n and source[j] in "eE":
                k = j + 1
                if k < n and source[k] in "+-":
                    k += 1
                if k < n and source[k].isdigit():
                    while k < n and source[k].isdigit():
                        k += 1
                    j = k
                    kind = "float-literal"
            tokens.append(Token(kind, source[i:j], start))
            advance(j - i)
            continue
        if ch == '"':
            j = i + 1
            while j < n and source[j] != '"':
                if source[j] == "\n":
                    break
                if source[j] == "\\":
                    if j + 1 >= n or source[j + 1] not in _ESCAPES:
                        raise MiniSyntaxError(start, {"string escape"}, source[j : j + 2])
                    j += 2
                else:
                    j += 1
            if j >= n or source[j] != '"':
                raise MiniSyntaxError(start, {'closing "'}, source[i:j])
            tokens.append(Token("string-literal", source[i : j + 1], start))
            advance(j + 1 - i)
            continue
        for punct in PUNCTUATION:
            if source.startswith(punct, i):
                tokens.append(Token("punctuation", punct, start))
                advance(len(punct))
                break
        else:
            raise MiniSyntaxError(start, {"token"}, ch)
    return tokens
