"""Recursive-descent parser producing the subset AST."""

from __future__ import annotations

from ..errors import ParseError
from ..source import SourceUnit, Span
from .lexer import Token, tokenize
from .nodes import AstNode, NodeKind, SUPERGLOBAL_NAMES, INCLUDE_FLAVORS

# Binary precedence tiers, loosest first. Concatenation binds looser than
# arithmetic, so tainted fragments stay visible at the top of a chain.
_BINARY_TIERS = (
    ("||",),
    ("&&",),
    ("==", "!=", "===", "!=="),
    ("<", "<=", ">", ">="),
    (".",),
    ("+", "-"),
    ("*", "/", "%"),
)


def parse(unit: SourceUnit) -> AstNode:
    """Parse a source unit into a Program node or raise ParseError."""
    tokens = [t for t in tokenize(unit) if t.kind != "comment"]
    return _Parser(unit, tokens).program()


def parse_text(path: str, text: str) -> AstNode:
    return parse(SourceUnit.from_text(path, text))


class _Parser:
    def __init__(self, unit: SourceUnit, tokens: list[Token]):
        self.unit = unit
        self.tokens = tokens
        self.i = 0

    # -- token plumbing -----------------------------------------------------

    def peek(self) -> Token:
        return self.tokens[self.i]

    def at(self, kind: str, value=None) -> bool:
        tok = self.peek()
        return tok.kind == kind and (value is None or tok.value == value)

    def advance(self) -> Token:
        tok = self.tokens[self.i]
        if tok.kind != "eof":
            self.i += 1
        return tok

    def expect(self, kind: str, value=None, what: str | None = None) -> Token:
        if not self.at(kind, value):
            want = what or (value if value is not None else kind)
            self.fail(f"expected {want}", expected=want)
        return self.advance()

    def fail(self, message: str, expected=None):
        raise ParseError(message, span=self.peek().span, expected=expected,
                         path=self.unit.path)

    # -- grammar ------------------------------------------------------------

    def program(self) -> AstNode:
        open_tok = self.expect("open_tag")
        body = []
        while not self.at("eof") and not self.at("close_tag"):
            body.append(self.statement())
        if self.at("close_tag"):
            self.advance()
        end = self.tokens[self.i].span if self.tokens else open_tok.span
        span = open_tok.span.cover(body[-1].span if body else end)
        return AstNode(NodeKind.PROGRAM, children=body, span=span)

    def statement(self) -> AstNode:
        tok = self.peek()
        if tok.kind == "keyword":
            handler = {
                "if": self._if_stmt,
                "while": self._while_stmt,
                "for": self._for_stmt,
                "foreach": self._foreach_stmt,
                "function": self._function_decl,
                "return": self._return_stmt,
                "echo": self._echo_stmt,
            }.get(tok.value)
            if handler is not None:
                return handler()
            if tok.value in INCLUDE_FLAVORS:
                return self._include_stmt()
            self.fail(f"keyword {tok.value!r} cannot start a statement")
        if tok.kind == "var":
            return self._assignment()
        if tok.kind in ("ident", "number", "string", "interp_string") or self.at("op", "("):
            return self._expr_statement()
        self.fail("expected statement or block", expected="statement")

    def _block_or_stmt(self) -> list[AstNode]:
        if self.at("op", "{"):
            self.advance()
            body = []
            while not self.at("op", "}"):
                if self.at("eof"):
                    self.fail("expected statement or block", expected="}")
                body.append(self.statement())
            self.advance()
            return body
        if self.at("eof") or self.at("op", ";"):
            self.fail("expected statement or block", expected="statement")
        return [self.statement()]

    def _if_stmt(self) -> AstNode:
        start = self.advance().span
        self.expect("op", "(")
        cond = self.expression()
        self.expect("op", ")")
        then = self._block_or_stmt()
        other: list[AstNode] = []
        if self.at("keyword", "else"):
            self.advance()
            other = self._block_or_stmt()
        last = (other or then)[-1].span
        return AstNode(NodeKind.IF, children=[cond] + then + other,
                       attrs={"then_len": len(then), "else_len": len(other)},
                       span=start.cover(last))

    def _while_stmt(self) -> AstNode:
        start = self.advance().span
        self.expect("op", "(")
        cond = self.expression()
        self.expect("op", ")")
        body = self._block_or_stmt()
        return AstNode(NodeKind.WHILE, children=[cond] + body,
                       span=start.cover(body[-1].span if body else cond.span))

    def _for_stmt(self) -> AstNode:
        start = self.advance().span
        self.expect("op", "(")
        init = self._assignment_core()
        self.expect("op", ";")
        cond = self.expression()
        self.expect("op", ";")
        step = self._assignment_core()
        self.expect("op", ")")
        body = self._block_or_stmt()
        return AstNode(NodeKind.FOR, children=[init, cond, step] + body,
                       span=start.cover(body[-1].span if body else step.span))

    def _foreach_stmt(self) -> AstNode:
        start = self.advance().span
        self.expect("op", "(")
        iterable = self.expression()
        self.expect("keyword", "as")
        first = self._var_node(self.expect("var"))
        key = None
        if self.at("op", "=>"):
            self.advance()
            key = first
            value = self._var_node(self.expect("var"))
        else:
            value = first
        self.expect("op", ")")
        body = self._block_or_stmt()
        children = [iterable] + ([key] if key is not None else []) + [value] + body
        return AstNode(NodeKind.FOREACH, children=children,
                       attrs={"has_key": key is not None},
                       span=start.cover(body[-1].span if body else value.span))

    def _function_decl(self) -> AstNode:
        start = self.advance().span
        name = self.expect("ident", what="function name").value
        self.expect("op", "(")
        params: list[AstNode] = []
        if not self.at("op", ")"):
            params.append(self._var_node(self.expect("var")))
            while self.at("op", ","):
                self.advance()
                params.append(self._var_node(self.expect("var")))
        self.expect("op", ")")
        if not self.at("op", "{"):
            self.fail("expected statement or block", expected="{")
        body = self._block_or_stmt()
        return AstNode(NodeKind.FUNCTION_DECL, children=params + body,
                       attrs={"name": name, "n_params": len(params)},
                       span=start.cover(body[-1].span if body else start))

    def _return_stmt(self) -> AstNode:
        start = self.advance().span
        if self.at("op", ";"):
            end = self.advance().span
            return AstNode(NodeKind.RETURN, attrs={"has_value": False},
                           span=start.cover(end))
        value = self.expression()
        end = self.expect("op", ";").span
        return AstNode(NodeKind.RETURN, children=[value],
                       attrs={"has_value": True}, span=start.cover(end))

    def _echo_stmt(self) -> AstNode:
        start = self.advance().span
        value = self.expression()
        end = self.expect("op", ";").span
        return AstNode(NodeKind.ECHO, children=[value], span=start.cover(end))

    def _include_stmt(self) -> AstNode:
        tok = self.advance()
        value = self.expression()
        end = self.expect("op", ";").span
        return AstNode(NodeKind.INCLUDE_STMT, children=[value],
                       attrs={"flavor": tok.value}, span=tok.span.cover(end))

    def _assignment(self) -> AstNode:
        node = self._assignment_core()
        end = self.expect("op", ";").span
        node.span = node.span.cover(end)
        return node

    def _assignment_core(self) -> AstNode:
        target = self._lvalue()
        self.expect("op", "=")
        value = self.expression()
        return AstNode(NodeKind.ASSIGN, children=[target, value],
                       span=target.span.cover(value.span))

    def _lvalue(self) -> AstNode:
        tok = self.expect("var")
        if tok.value in SUPERGLOBAL_NAMES:
            self.fail(f"cannot assign to superglobal ${tok.value}")
        node = self._var_node(tok)
        while self.at("op", "["):
            self.advance()
            idx = self.expression()
            end = self.expect("op", "]").span
            node = AstNode(NodeKind.INDEX, children=[node, idx],
                           span=node.span.cover(end))
        return node

    def _expr_statement(self) -> AstNode:
        expr = self.expression()
        end = self.expect("op", ";").span
        return AstNode(NodeKind.EXPR_STMT, children=[expr],
                       span=expr.span.cover(end))

    # -- expressions ----------------------------------------------------------

    def expression(self) -> AstNode:
        return self._binary(0)

    def _binary(self, tier: int) -> AstNode:
        if tier >= len(_BINARY_TIERS):
            return self._unary()
        ops = _BINARY_TIERS[tier]
        node = self._binary(tier + 1)
        while self.peek().kind == "op" and self.peek().value in ops:
            op = self.advance().value
            rhs = self._binary(tier + 1)
            kind = NodeKind.CONCAT if op == "." else NodeKind.BINARY_OP
            attrs = {} if op == "." else {"op": op}
            node = AstNode(kind, children=[node, rhs], attrs=attrs,
                           span=node.span.cover(rhs.span))
        return node

    def _unary(self) -> AstNode:
        if self.at("op", "!") or self.at("op", "-"):
            tok = self.advance()
            operand = self._unary()
            if tok.value == "-" and operand.kind is NodeKind.NUMBER_LIT:
                return AstNode(NodeKind.NUMBER_LIT,
                               attrs={"text": "-" + operand.attrs["text"],
                                      "value": -operand.attrs["value"]},
                               span=tok.span.cover(operand.span))
            return AstNode(NodeKind.BINARY_OP, children=[operand],
                           attrs={"op": tok.value},
                           span=tok.span.cover(operand.span))
        return self._postfix()

    def _postfix(self) -> AstNode:
        node = self._primary()
        while self.at("op", "["):
            self.advance()
            idx = self.expression()
            end = self.expect("op", "]").span
            node = AstNode(NodeKind.INDEX, children=[node, idx],
                           span=node.span.cover(end))
        return node

    def _primary(self) -> AstNode:
        tok = self.peek()
        if tok.kind == "var":
            return self._var_node(self.advance())
        if tok.kind == "number":
            self.advance()
            return AstNode(NodeKind.NUMBER_LIT,
                           attrs={"text": tok.text, "value": tok.value},
                           span=tok.span)
        if tok.kind == "string":
            self.advance()
            return AstNode(NodeKind.STRING_LIT, attrs={"value": tok.value},
                           span=tok.span)
        if tok.kind == "interp_string":
            return self._interp(self.advance())
        if tok.kind == "ident":
            return self._call(self.advance())
        if self.at("op", "("):
            self.advance()
            node = self.expression()
            self.expect("op", ")")
            return node
        self.fail(f"unexpected token {tok.text!r} in expression")

    def _call(self, name_tok: Token) -> AstNode:
        self.expect("op", "(", what="( after function name")
        args: list[AstNode] = []
        if not self.at("op", ")"):
            args.append(self.expression())
            while self.at("op", ","):
                self.advance()
                args.append(self.expression())
        end = self.expect("op", ")").span
        return AstNode(NodeKind.CALL, children=args,
                       attrs={"name": name_tok.value},
                       span=name_tok.span.cover(end))

    def _var_node(self, tok: Token) -> AstNode:
        if tok.value in SUPERGLOBAL_NAMES:
            return AstNode(NodeKind.SUPERGLOBAL,
                           attrs={"sg": SUPERGLOBAL_NAMES[tok.value]},
                           span=tok.span)
        return AstNode(NodeKind.VAR, attrs={"name": tok.value}, span=tok.span)

    # -- interpolation desugaring ---------------------------------------------

    def _interp(self, tok: Token) -> AstNode:
        """Desugar "a $x b" into an explicit concat chain."""
        interp = self._interp_node(tok)
        pieces = interp.children
        if not pieces:
            return AstNode(NodeKind.STRING_LIT, attrs={"value": ""}, span=tok.span)
        node = pieces[0]
        for piece in pieces[1:]:
            node = AstNode(NodeKind.CONCAT, children=[node, piece],
                           span=tok.span, attrs={"from_interp": True})
        return node

    def _interp_node(self, tok: Token) -> AstNode:
        """Intermediate node whose children alternate literal/expression parts."""
        children: list[AstNode] = []
        for part in tok.parts:
            span = self.unit.span_between(part.start, part.end)
            if part.kind == "lit":
                if part.text == "":
                    continue
                node = AstNode(NodeKind.STRING_LIT,
                               attrs={"value": part.text, "from_interp": True},
                               span=span)
            else:
                node = self._interp_expr(part, span)
            if (children and children[-1].kind is NodeKind.STRING_LIT
                    and node.kind is NodeKind.STRING_LIT):
                raise ParseError("interpolation parts must alternate",
                                 span=span, path=self.unit.path)
            children.append(node)
        return AstNode(NodeKind.INTERP_STRING, children=children, span=tok.span)

    def _interp_expr(self, part, span: Span) -> AstNode:
        if part.var in SUPERGLOBAL_NAMES:
            base = AstNode(NodeKind.SUPERGLOBAL,
                           attrs={"sg": SUPERGLOBAL_NAMES[part.var],
                                  "from_interp": True},
                           span=span)
        else:
            base = AstNode(NodeKind.VAR,
                           attrs={"name": part.var, "from_interp": True},
                           span=span)
        if part.index is None:
            return base
        idx_kind, idx_text = part.index
        if idx_kind == "num":
            idx = AstNode(NodeKind.NUMBER_LIT,
                          attrs={"text": idx_text, "value": int(idx_text),
                                 "from_interp": True},
                          span=span)
        else:
            idx = AstNode(NodeKind.STRING_LIT,
                          attrs={"value": idx_text, "from_interp": True},
                          span=span)
        return AstNode(NodeKind.INDEX, children=[base, idx],
                       attrs={"from_interp": True}, span=span)
