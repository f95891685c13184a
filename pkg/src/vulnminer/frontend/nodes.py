"""AST node model for the supported PHP subset."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterator

from ..source import Span


class NodeKind(str, Enum):
    PROGRAM = "Program"
    FUNCTION_DECL = "FunctionDecl"
    IF = "If"
    WHILE = "While"
    FOR = "For"
    FOREACH = "Foreach"
    RETURN = "Return"
    ECHO = "Echo"
    ASSIGN = "Assign"
    EXPR_STMT = "ExprStmt"
    INCLUDE_STMT = "IncludeStmt"
    CALL = "Call"
    BINARY_OP = "BinaryOp"
    CONCAT = "Concat"
    INDEX = "Index"
    VAR = "Var"
    SUPERGLOBAL = "Superglobal"
    STRING_LIT = "StringLit"
    NUMBER_LIT = "NumberLit"
    INTERP_STRING = "InterpString"


STATEMENT_KINDS = frozenset({
    NodeKind.FUNCTION_DECL,
    NodeKind.IF,
    NodeKind.WHILE,
    NodeKind.FOR,
    NodeKind.FOREACH,
    NodeKind.RETURN,
    NodeKind.ECHO,
    NodeKind.ASSIGN,
    NodeKind.EXPR_STMT,
    NodeKind.INCLUDE_STMT,
})

SUPERGLOBAL_CLASSES = ("GET", "POST", "REQUEST", "COOKIE", "SERVER", "FILES")
SUPERGLOBAL_NAMES = {f"_{cls}": cls for cls in SUPERGLOBAL_CLASSES}

INCLUDE_FLAVORS = ("include", "include_once", "require", "require_once")

_node_ids = itertools.count(1)


def _next_id() -> int:
    return next(_node_ids)


@dataclass(eq=False)
class AstNode:
    """One tree node; ``attrs`` holds the kind-specific payload.

    Attr conventions:
      FunctionDecl: name, n_params (params are the first n_params Var children)
      If: then_len, else_len (children = [cond, *then, *else])
      For: children = [init, cond, step, *body]
      Foreach: has_key (children = [iterable, key?, value, *body])
      Return: has_value
      IncludeStmt: flavor
      Call: name
      BinaryOp: op (one child means prefix unary)
      Var: name (without $)
      Superglobal: sg (GET/POST/...)
      StringLit: value, from_interp
      NumberLit: text, value
    """

    kind: NodeKind
    children: list["AstNode"] = field(default_factory=list)
    attrs: dict[str, Any] = field(default_factory=dict)
    span: Span | None = None
    node_id: int = field(default_factory=_next_id)

    def attr(self, key: str, default=None):
        return self.attrs.get(key, default)

    def walk(self) -> Iterator["AstNode"]:
        """Pre-order depth-first traversal."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def find_all(self, kind: NodeKind) -> list["AstNode"]:
        return [n for n in self.walk() if n.kind is kind]

    # -- structured accessors used by analyses and the printer -------------

    def if_parts(self):
        assert self.kind is NodeKind.IF
        t, e = self.attrs["then_len"], self.attrs["else_len"]
        cond = self.children[0]
        return cond, self.children[1:1 + t], self.children[1 + t:1 + t + e]

    def loop_parts(self):
        if self.kind is NodeKind.WHILE:
            return self.children[0], self.children[1:]
        if self.kind is NodeKind.FOR:
            return self.children[1], self.children[3:]
        raise ValueError(f"not a while/for loop: {self.kind}")

    def foreach_parts(self):
        assert self.kind is NodeKind.FOREACH
        if self.attrs["has_key"]:
            return self.children[0], self.children[1], self.children[2], self.children[3:]
        return self.children[0], None, self.children[1], self.children[2:]

    def function_parts(self):
        assert self.kind is NodeKind.FUNCTION_DECL
        n = self.attrs["n_params"]
        return self.attrs["name"], self.children[:n], self.children[n:]

    def __repr__(self):
        tag = self.kind.value
        for key in ("name", "op", "sg", "flavor"):
            if key in self.attrs:
                tag += f":{self.attrs[key]}"
                break
        if self.kind is NodeKind.VAR:
            tag = f"Var:{self.attrs['name']}"
        return f"<{tag} #{self.node_id} ({len(self.children)} children)>"


_EQUALITY_ATTRS = {
    NodeKind.FUNCTION_DECL: ("name", "n_params"),
    NodeKind.IF: ("then_len", "else_len"),
    NodeKind.FOREACH: ("has_key",),
    NodeKind.RETURN: ("has_value",),
    NodeKind.INCLUDE_STMT: ("flavor",),
    NodeKind.CALL: ("name",),
    NodeKind.BINARY_OP: ("op",),
    NodeKind.VAR: ("name",),
    NodeKind.SUPERGLOBAL: ("sg",),
    NodeKind.STRING_LIT: ("value",),
    NodeKind.NUMBER_LIT: ("text",),
}


def ast_equal(a: AstNode, b: AstNode) -> bool:
    """Structural equality; node ids and spans are ignored."""
    if a.kind is not b.kind or len(a.children) != len(b.children):
        return False
    for key in _EQUALITY_ATTRS.get(a.kind, ()):
        if a.attrs.get(key) != b.attrs.get(key):
            return False
    return all(ast_equal(x, y) for x, y in zip(a.children, b.children))


def ast_signature(node: AstNode) -> tuple:
    """Hashable shape used for set-of-trees comparisons."""
    keyed = tuple(node.attrs.get(k) for k in _EQUALITY_ATTRS.get(node.kind, ()))
    return (node.kind.value, keyed, tuple(ast_signature(c) for c in node.children))


def check_tree(root: AstNode) -> None:
    """Validate id uniqueness and single-parent structure; raises on violation."""
    seen: set[int] = set()
    parents: dict[int, int] = {}
    for node in root.walk():
        if node.node_id in seen:
            raise ValueError(f"duplicate node id {node.node_id}")
        seen.add(node.node_id)
        for child in node.children:
            if child.node_id in parents:
                raise ValueError(f"node {child.node_id} has two parents")
            parents[child.node_id] = node.node_id


def copy_tree(node: AstNode) -> AstNode:
    """Deep copy with fresh node ids."""
    return AstNode(
        kind=node.kind,
        children=[copy_tree(c) for c in node.children],
        attrs=dict(node.attrs),
        span=node.span,
    )
