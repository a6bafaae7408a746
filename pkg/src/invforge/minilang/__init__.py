"""MiniLang: a small imperative language whose instrumented runs produce traces."""

from .interp import ExecutionReport, ListSink, run_tests, sample_decision
from .lexer import MiniSyntaxError, Token, tokenize
from .parser import load_program, parse, parse_files
from .syntax import AstNode, Program

__all__ = [
    "AstNode",
    "ExecutionReport",
    "ListSink",
    "MiniSyntaxError",
    "Program",
    "Token",
    "load_program",
    "parse",
    "parse_files",
    "run_tests",
    "sample_decision",
    "tokenize",
]
