"""Deterministic source printer; output re-parses to an identical tree."""

from __future__ import annotations

from .nodes import AstNode, NodeKind

_PREC = {
    "||": 1, "&&": 2,
    "==": 3, "!=": 3, "===": 3, "!==": 3,
    "<": 4, "<=": 4, ">": 4, ">=": 4,
    ".": 5,
    "+": 6, "-": 6,
    "*": 7, "/": 7, "%": 7,
}
_UNARY_PREC = 8
_ATOM_PREC = 9

_INDENT = "    "


def print_source(root: AstNode) -> str:
    """Render a Program back to PHP text, one statement per line."""
    assert root.kind is NodeKind.PROGRAM, "print_source expects a Program"
    lines = ["<?php"]
    for stmt in root.children:
        lines.extend(_stmt_lines(stmt, 0))
    return "\n".join(lines) + "\n"


def print_statement(stmt: AstNode) -> str:
    return "\n".join(_stmt_lines(stmt, 0))


def _stmt_lines(node: AstNode, depth: int) -> list[str]:
    pad = _INDENT * depth
    k = node.kind
    if k is NodeKind.ASSIGN:
        target, value = node.children
        return [f"{pad}{_expr(target, 0)} = {_expr(value, 0)};"]
    if k is NodeKind.EXPR_STMT:
        return [f"{pad}{_expr(node.children[0], 0)};"]
    if k is NodeKind.ECHO:
        return [f"{pad}echo {_expr(node.children[0], 0)};"]
    if k is NodeKind.RETURN:
        if node.attrs.get("has_value"):
            return [f"{pad}return {_expr(node.children[0], 0)};"]
        return [f"{pad}return;"]
    if k is NodeKind.INCLUDE_STMT:
        return [f"{pad}{node.attrs['flavor']} {_expr(node.children[0], 0)};"]
    if k is NodeKind.IF:
        cond, then, other = node.if_parts()
        lines = [f"{pad}if ({_expr(cond, 0)}) {{"]
        lines += _body_lines(then, depth + 1)
        if other:
            lines.append(f"{pad}}} else {{")
            lines += _body_lines(other, depth + 1)
        lines.append(f"{pad}}}")
        return lines
    if k is NodeKind.WHILE:
        cond, body = node.loop_parts()
        lines = [f"{pad}while ({_expr(cond, 0)}) {{"]
        lines += _body_lines(body, depth + 1)
        lines.append(f"{pad}}}")
        return lines
    if k is NodeKind.FOR:
        init, cond, step = node.children[0], node.children[1], node.children[2]
        body = node.children[3:]
        head = (f"{pad}for ({_assign_inline(init)}; {_expr(cond, 0)}; "
                f"{_assign_inline(step)}) {{")
        lines = [head]
        lines += _body_lines(body, depth + 1)
        lines.append(f"{pad}}}")
        return lines
    if k is NodeKind.FOREACH:
        iterable, key, value, body = node.foreach_parts()
        if key is not None:
            head = (f"{pad}foreach ({_expr(iterable, 0)} as {_expr(key, 0)} => "
                    f"{_expr(value, 0)}) {{")
        else:
            head = f"{pad}foreach ({_expr(iterable, 0)} as {_expr(value, 0)}) {{"
        lines = [head]
        lines += _body_lines(body, depth + 1)
        lines.append(f"{pad}}}")
        return lines
    if k is NodeKind.FUNCTION_DECL:
        name, params, body = node.function_parts()
        args = ", ".join(_expr(p, 0) for p in params)
        lines = [f"{pad}function {name}({args}) {{"]
        lines += _body_lines(body, depth + 1)
        lines.append(f"{pad}}}")
        return lines
    raise ValueError(f"not a statement kind: {k}")


def _body_lines(stmts: list[AstNode], depth: int) -> list[str]:
    lines: list[str] = []
    for stmt in stmts:
        lines.extend(_stmt_lines(stmt, depth))
    return lines


def _assign_inline(node: AstNode) -> str:
    target, value = node.children
    return f"{_expr(target, 0)} = {_expr(value, 0)}"


def _expr(node: AstNode, parent_prec: int) -> str:
    k = node.kind
    if k is NodeKind.VAR:
        return f"${node.attrs['name']}"
    if k is NodeKind.SUPERGLOBAL:
        return f"$_{node.attrs['sg']}"
    if k is NodeKind.NUMBER_LIT:
        return node.attrs["text"]
    if k is NodeKind.STRING_LIT:
        return _string_literal(node.attrs["value"])
    if k is NodeKind.CALL:
        args = ", ".join(_expr(a, 0) for a in node.children)
        return f"{node.attrs['name']}({args})"
    if k is NodeKind.INDEX:
        base, idx = node.children
        return f"{_expr(base, _ATOM_PREC)}[{_expr(idx, 0)}]"
    if k is NodeKind.CONCAT:
        return _binary_text(node, ".", parent_prec)
    if k is NodeKind.BINARY_OP:
        op = node.attrs["op"]
        if len(node.children) == 1:
            inner = _expr(node.children[0], _UNARY_PREC)
            text = f"{op}{inner}"
            return f"({text})" if parent_prec > _UNARY_PREC else text
        return _binary_text(node, op, parent_prec)
    raise ValueError(f"not an expression kind: {k}")


def _binary_text(node: AstNode, op: str, parent_prec: int) -> str:
    prec = _PREC[op]
    left = _expr(node.children[0], prec)
    right = _expr(node.children[1], prec + 1)
    text = f"{left} {op} {right}"
    return f"({text})" if parent_prec > prec else text


def _string_literal(value: str) -> str:
    if any(ch in value for ch in "\n\t\r"):
        escaped = (value.replace("\\", "\\\\").replace('"', '\\"')
                   .replace("$", "\\$").replace("\n", "\\n")
                   .replace("\t", "\\t").replace("\r", "\\r"))
        return f'"{escaped}"'
    escaped = value.replace("\\", "\\\\").replace("'", "\\'")
    return f"'{escaped}'"
