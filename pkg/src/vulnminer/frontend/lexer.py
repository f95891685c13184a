"""Lexer for the PHP subset."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from ..errors import ParseError
from ..source import SourceUnit, Span

KEYWORDS = frozenset({
    "if", "else", "while", "for", "foreach", "as", "function", "return",
    "echo", "include", "include_once", "require", "require_once",
})

# Longest first so maximal munch works with a linear scan.
_OPERATORS = (
    "===", "!==", "==", "!=", "<=", ">=", "&&", "||", "=>",
    "=", "<", ">", ".", "+", "-", "*", "/", "%", "!",
    "(", ")", "{", "}", "[", "]", ";", ",",
)

_IDENT_START = frozenset("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_")
_IDENT_CONT = _IDENT_START | frozenset("0123456789")
_DIGITS = frozenset("0123456789")

_DQ_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", "\\": "\\", '"': '"', "$": "$"}


@dataclass
class Token:
    kind: str          # open_tag close_tag var ident keyword string interp_string number op comment eof
    text: str
    span: Span
    value: Any = None  # decoded payload (string value, numeric value, var name)
    parts: list = field(default_factory=list)  # interp_string only

    def __repr__(self):
        return f"Token({self.kind}, {self.text!r})"


@dataclass
class InterpPart:
    """One segment of a double-quoted interpolated string."""

    kind: str                 # "lit" or "expr"
    text: str = ""            # decoded literal text (lit)
    var: str | None = None    # variable name without $ (expr)
    index: tuple | None = None  # ("str", v) | ("num", text) | None
    start: int = 0            # absolute offsets into the source text
    end: int = 0


def tokenize(unit: SourceUnit) -> list[Token]:
    """Lex a source unit; comments are kept as tokens of kind ``comment``."""
    return _Lexer(unit).run()


class _Lexer:
    def __init__(self, unit: SourceUnit):
        self.unit = unit
        self.text = unit.text
        self.pos = 0
        self.tokens: list[Token] = []

    def run(self) -> list[Token]:
        self._open_tag()
        n = len(self.text)
        while self.pos < n:
            ch = self.text[self.pos]
            if ch in " \t\r\n":
                self.pos += 1
            elif ch == "/" and self._peek(1) == "/":
                self._line_comment(2)
            elif ch == "#":
                self._line_comment(1)
            elif ch == "/" and self._peek(1) == "*":
                self._block_comment()
            elif ch == "$":
                self._variable()
            elif ch == "'":
                self._single_quoted()
            elif ch == '"':
                self._double_quoted()
            elif ch in _DIGITS:
                self._number()
            elif ch in _IDENT_START:
                self._ident()
            elif ch == "?" and self._peek(1) == ">":
                self._close_tag()
            else:
                self._operator()
        self.tokens.append(Token("eof", "", self.unit.span_between(n, n + 1)))
        return self.tokens

    # -- helpers ------------------------------------------------------------

    def _peek(self, ahead: int = 0) -> str:
        i = self.pos + ahead
        return self.text[i] if i < len(self.text) else ""

    def _emit(self, kind: str, start: int, value=None, parts=None):
        tok = Token(
            kind,
            self.text[start:self.pos],
            self.unit.span_between(start, self.pos),
            value=value,
            parts=parts or [],
        )
        self.tokens.append(tok)

    def _error(self, message: str, at: int, expected=None):
        raise ParseError(message, span=self.unit.span_between(at, at + 1),
                         expected=expected, path=self.unit.path)

    # -- token scanners ------------------------------------------------------

    def _open_tag(self):
        stripped = 0
        while stripped < len(self.text) and self.text[stripped] in " \t\r\n":
            stripped += 1
        if not self.text.startswith("<?php", stripped):
            self._error("missing opening <?php tag", stripped, expected="<?php")
        self.pos = stripped + 5
        self._emit("open_tag", stripped)

    def _close_tag(self):
        start = self.pos
        self.pos += 2
        if self.text[self.pos:].strip():
            self._error("content after closing tag is not supported", self.pos)
        self._emit("close_tag", start)
        self.pos = len(self.text)

    def _line_comment(self, marker_len: int):
        start = self.pos
        self.pos += marker_len
        while self.pos < len(self.text) and self.text[self.pos] != "\n":
            self.pos += 1
        self._emit("comment", start)

    def _block_comment(self):
        start = self.pos
        end = self.text.find("*/", self.pos + 2)
        if end < 0:
            self._error("unterminated comment", start)
        self.pos = end + 2
        self._emit("comment", start)

    def _variable(self):
        start = self.pos
        self.pos += 1
        if self._peek() not in _IDENT_START:
            self._error("expected variable name after $", start)
        while self._peek() in _IDENT_CONT:
            self.pos += 1
        self._emit("var", start, value=self.text[start + 1:self.pos])

    def _ident(self):
        start = self.pos
        while self._peek() in _IDENT_CONT:
            self.pos += 1
        word = self.text[start:self.pos]
        self._emit("keyword" if word in KEYWORDS else "ident", start, value=word)

    def _number(self):
        start = self.pos
        while self._peek() in _DIGITS:
            self.pos += 1
        if self._peek() == "." and self._peek(1) in _DIGITS:
            self.pos += 1
            while self._peek() in _DIGITS:
                self.pos += 1
            value = float(self.text[start:self.pos])
        else:
            value = int(self.text[start:self.pos])
        self._emit("number", start, value=value)

    def _operator(self):
        for op in _OPERATORS:
            if self.text.startswith(op, self.pos):
                start = self.pos
                self.pos += len(op)
                self._emit("op", start, value=op)
                return
        self._error(f"unexpected character {self.text[self.pos]!r}", self.pos)

    def _single_quoted(self):
        start = self.pos
        self.pos += 1
        out = []
        while True:
            if self.pos >= len(self.text):
                self._error("unterminated string", start)
            ch = self.text[self.pos]
            if ch == "\\" and self._peek(1) in ("'", "\\"):
                out.append(self._peek(1))
                self.pos += 2
            elif ch == "'":
                self.pos += 1
                break
            else:
                out.append(ch)
                self.pos += 1
        self._emit("string", start, value="".join(out))

    def _double_quoted(self):
        start = self.pos
        self.pos += 1
        parts: list[InterpPart] = []
        lit: list[str] = []
        lit_start = self.pos

        def flush_lit(end: int):
            if lit:
                parts.append(InterpPart("lit", text="".join(lit), start=lit_start, end=end))
                lit.clear()

        while True:
            if self.pos >= len(self.text):
                self._error("unterminated string", start)
            ch = self.text[self.pos]
            if ch == "\\":
                esc = self._peek(1)
                if esc in _DQ_ESCAPES:
                    lit.append(_DQ_ESCAPES[esc])
                    self.pos += 2
                else:
                    lit.append("\\")
                    self.pos += 1
            elif ch == '"':
                flush_lit(self.pos)
                self.pos += 1
                break
            elif ch == "$" and self._peek(1) in _IDENT_START:
                flush_lit(self.pos)
                parts.append(self._interp_simple())
                lit_start = self.pos
            elif ch == "{" and self._peek(1) == "$":
                flush_lit(self.pos)
                parts.append(self._interp_curly())
                lit_start = self.pos
            else:
                lit.append(ch)
                self.pos += 1

        if any(p.kind == "expr" for p in parts):
            self._emit("interp_string", start, parts=parts)
        else:
            self._emit("string", start, value=parts[0].text if parts else "")

    def _interp_simple(self) -> InterpPart:
        # "$var" or "$var[bareword]" / "$var[123]" (PHP simple syntax: no quotes)
        start = self.pos
        self.pos += 1
        name_start = self.pos
        while self._peek() in _IDENT_CONT:
            self.pos += 1
        name = self.text[name_start:self.pos]
        index = None
        if self._peek() == "[":
            save = self.pos
            self.pos += 1
            index = self._interp_bare_index()
            if index is None:
                self.pos = save  # not a simple index; '[' is literal text
        return InterpPart("expr", var=name, index=index, start=start, end=self.pos)

    def _interp_bare_index(self):
        idx_start = self.pos
        if self._peek() in _DIGITS:
            while self._peek() in _DIGITS:
                self.pos += 1
            text = self.text[idx_start:self.pos]
            if self._peek() != "]":
                return None
            self.pos += 1
            return ("num", text)
        if self._peek() in _IDENT_START:
            while self._peek() in _IDENT_CONT:
                self.pos += 1
            word = self.text[idx_start:self.pos]
            if self._peek() != "]":
                return None
            self.pos += 1
            return ("str", word)
        return None

    def _interp_curly(self) -> InterpPart:
        # "{$var}" or "{$var['key']}" / "{$var[123]}"
        start = self.pos
        self.pos += 2
        name_start = self.pos
        if self._peek() not in _IDENT_START:
            self._error("expected variable in {$...} interpolation", start)
        while self._peek() in _IDENT_CONT:
            self.pos += 1
        name = self.text[name_start:self.pos]
        index = None
        if self._peek() == "[":
            self.pos += 1
            if self._peek() in ("'", '"'):
                quote = self._peek()
                self.pos += 1
                key_start = self.pos
                while self._peek() not in (quote, ""):
                    self.pos += 1
                if self._peek() != quote:
                    self._error("unterminated string", key_start)
                index = ("str", self.text[key_start:self.pos])
                self.pos += 1
            elif self._peek() in _DIGITS:
                key_start = self.pos
                while self._peek() in _DIGITS:
                    self.pos += 1
                index = ("num", self.text[key_start:self.pos])
            else:
                self._error("unsupported index in {$...} interpolation", self.pos)
            if self._peek() != "]":
                self._error("expected ] in {$...} interpolation", self.pos, expected="]")
            self.pos += 1
        if self._peek() != "}":
            self._error("expected } in {$...} interpolation", self.pos, expected="}")
        self.pos += 1
        return InterpPart("expr", var=name, index=index, start=start, end=self.pos)
