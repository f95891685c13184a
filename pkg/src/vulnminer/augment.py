"""Semantics-preserving augmentation for balancing training corpora."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import VulnMinerError
from .flows import augment_flows, file_is_vulnerable, file_vuln_types, taint_trace
from .frontend import normalize, parse_text, print_source
from .frontend.nodes import AstNode, NodeKind, copy_tree
from .lexicon import DEFAULT_LEXICON, RESERVED_FUNCTION_NAMES
from .linearize import linearize

OP_KINDS = ("Rename", "LoopToRecursion", "SyntaxTransform")

_NAME_SUFFIXES = ("alt", "val", "tmp", "inp", "raw", "buf")


@dataclass(frozen=True)
class AugmentationOp:
    kind: str
    seed: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in OP_KINDS:
            raise VulnMinerError(f"unknown augmentation op {self.kind!r}")


@dataclass
class AugmentedSample:
    origin: str
    ops: list[str]
    output_path: str
    label: int
    vuln_type: str | None
    text: str

    def record(self) -> dict:
        return {"origin": self.origin, "ops": self.ops,
                "output": self.output_path, "label": self.label,
                "vuln_type": self.vuln_type}


# ---------------------------------------------------------------------------
# Individual operators
# ---------------------------------------------------------------------------

def rename_variables(ast: AstNode, seed: int) -> AstNode:
    """Consistent one-to-one renaming of user variables and functions."""
    rng = np.random.default_rng(seed)
    reserved = RESERVED_FUNCTION_NAMES

    var_names: list[str] = []
    fn_names: list[str] = []
    for node in ast.walk():
        if node.kind is NodeKind.VAR and node.attrs["name"] not in var_names:
            var_names.append(node.attrs["name"])
        elif node.kind in (NodeKind.FUNCTION_DECL, NodeKind.CALL):
            name = node.attrs["name"]
            if name not in reserved and name not in fn_names:
                fn_names.append(name)

    taken = set(var_names) | set(fn_names) | set(reserved)

    def variant(name: str) -> str:
        choices = [
            f"{name}_{_NAME_SUFFIXES[int(rng.integers(len(_NAME_SUFFIXES)))]}",
            f"{name[0]}_{name[1:]}" if len(name) > 2 else f"{name}_v",
            f"my_{name}",
            f"{name}_{int(rng.integers(2, 100))}",
        ]
        pick = choices[int(rng.integers(len(choices)))]
        while pick in taken:
            pick = f"{pick}{int(rng.integers(10))}"
        taken.add(pick)
        return pick

    var_map = {n: variant(n) for n in var_names}
    fn_map = {n: variant(n) for n in fn_names}

    out = copy_tree(ast)
    for node in out.walk():
        if node.kind is NodeKind.VAR:
            node.attrs["name"] = var_map[node.attrs["name"]]
        elif node.kind in (NodeKind.FUNCTION_DECL, NodeKind.CALL):
            if node.attrs["name"] in fn_map:
                node.attrs["name"] = fn_map[node.attrs["name"]]
    return out


def _loop_vars(loop: AstNode) -> tuple[set[str], set[str]]:
    """(modified, used) variable names of a while/for loop."""
    modified: set[str] = set()
    used: set[str] = set()
    if loop.kind is NodeKind.FOR:
        _init, cond, step = loop.children[:3]
        body = loop.children[3:]
        segments = [cond, step] + body
        modified.add(step.children[0].attrs["name"])
    else:
        cond, body = loop.loop_parts()
        segments = [cond] + list(body)
    for seg in segments:
        for node in seg.walk():
            if node.kind is NodeKind.VAR:
                used.add(node.attrs["name"])
            if (node.kind is NodeKind.ASSIGN
                    and node.children[0].kind is NodeKind.VAR):
                modified.add(node.children[0].attrs["name"])
    return modified, used


def loop_to_recursion(ast: AstNode, seed: int) -> tuple[AstNode, bool]:
    """Rewrite the first eligible while/for loop as a recursive helper.

    Eligible: a top-level (or function-body) loop whose body modifies at
    most one variable. Returns (tree, applied).
    """
    rng = np.random.default_rng(seed)
    fn_name = f"loop_step_{int(rng.integers(1, 1000))}"
    existing = {n.attrs["name"] for n in ast.walk()
                if n.kind is NodeKind.FUNCTION_DECL}
    while fn_name in existing:
        fn_name += "x"

    def rebuild_body(stmts: list[AstNode], applied: list[bool]) -> list[AstNode]:
        out: list[AstNode] = []
        for stmt in stmts:
            if (not applied[0] and stmt.kind in (NodeKind.WHILE, NodeKind.FOR)
                    and _eligible(stmt)):
                out.extend(_recursive_form(stmt, fn_name))
                applied[0] = True
            else:
                out.append(copy_tree(stmt))
        return out

    applied = [False]
    if ast.kind is not NodeKind.PROGRAM:
        raise VulnMinerError("loop_to_recursion expects a Program")
    new_children: list[AstNode] = []
    for child in ast.children:
        if child.kind is NodeKind.FUNCTION_DECL:
            name, params, body = child.function_parts()
            new_body = rebuild_body(body, applied)
            new_children.append(AstNode(
                NodeKind.FUNCTION_DECL,
                children=[copy_tree(p) for p in params] + new_body,
                attrs={"name": name, "n_params": len(params)},
                span=child.span))
        else:
            new_children.extend(rebuild_body([child], applied))
    tree = AstNode(NodeKind.PROGRAM, children=new_children, span=ast.span)
    return tree, applied[0]


def _eligible(loop: AstNode) -> bool:
    modified, _ = _loop_vars(loop)
    if len(modified) > 1:
        return False
    body = loop.children[3:] if loop.kind is NodeKind.FOR else loop.children[1:]
    for stmt in body:
        for node in stmt.walk():
            if node.kind in (NodeKind.RETURN, NodeKind.FUNCTION_DECL):
                return False
    return True


def _recursive_form(loop: AstNode, fn_name: str) -> list[AstNode]:
    from .localize.rewrite import mk_assign, mk_call, mk_expr_stmt, mk_var

    modified, used = _loop_vars(loop)
    params = sorted(used | modified)
    carry = next(iter(modified)) if modified else None

    if loop.kind is NodeKind.FOR:
        init, cond, step = loop.children[:3]
        body = [copy_tree(s) for s in loop.children[3:]] + [copy_tree(step)]
        prelude = [copy_tree(init)]
    else:
        cond, body_nodes = loop.loop_parts()
        body = [copy_tree(s) for s in body_nodes]
        prelude = []

    recurse = mk_call(fn_name, [mk_var(p) for p in params])
    then_body = body + [AstNode(NodeKind.RETURN, children=[recurse],
                                attrs={"has_value": True})]
    base_value = (mk_var(carry) if carry
                  else AstNode(NodeKind.NUMBER_LIT,
                               attrs={"text": "0", "value": 0}))
    fn_body = [
        AstNode(NodeKind.IF, children=[copy_tree(cond)] + then_body,
                attrs={"then_len": len(then_body), "else_len": 0}),
        AstNode(NodeKind.RETURN, children=[base_value],
                attrs={"has_value": True}),
    ]
    decl = AstNode(NodeKind.FUNCTION_DECL,
                   children=[mk_var(p) for p in params] + fn_body,
                   attrs={"name": fn_name, "n_params": len(params)})
    call = mk_call(fn_name, [mk_var(p) for p in params])
    call_stmt = (mk_assign(mk_var(carry), call) if carry
                 else mk_expr_stmt(call))
    return [decl] + prelude + [call_stmt]


def transform_syntax_tree(ast: AstNode, seed: int) -> tuple[AstNode, bool]:
    """Apply one effect-order-preserving rewrite from the fixed catalog.

    The constant-guard wrap is the fallback for programs too small for the
    expression-level rewrites.
    """
    rng = np.random.default_rng(seed)
    transforms = [_flip_if_else, _swap_independent, _split_concat]
    order = list(rng.permutation(len(transforms)))
    for idx in order:
        tree, applied = transforms[idx](ast, rng)
        if applied:
            return tree, True
    return _wrap_constant_if(ast, rng)


def _flip_if_else(ast: AstNode, rng) -> tuple[AstNode, bool]:
    applied = [False]

    def rebuild(node: AstNode) -> AstNode:
        if node.kind is NodeKind.IF and not applied[0]:
            cond, then, other = node.if_parts()
            if other:
                applied[0] = True
                negated = AstNode(NodeKind.BINARY_OP,
                                  children=[rebuild(cond)], attrs={"op": "!"})
                new_then = [rebuild(s) for s in other]
                new_else = [rebuild(s) for s in then]
                return AstNode(NodeKind.IF,
                               children=[negated] + new_then + new_else,
                               attrs={"then_len": len(new_then),
                                      "else_len": len(new_else)})
        out = AstNode(node.kind, children=[rebuild(c) for c in node.children],
                      attrs=dict(node.attrs), span=node.span)
        return out

    return rebuild(ast), applied[0]


def _stmt_defs_uses(stmt: AstNode) -> tuple[set[str], set[str], bool]:
    """(defs, uses, pure) for swap eligibility; calls make a statement impure."""
    defs: set[str] = set()
    uses: set[str] = set()
    pure = stmt.kind is NodeKind.ASSIGN
    if pure:
        target, value = stmt.children
        if target.kind is NodeKind.VAR:
            defs.add(target.attrs["name"])
        else:
            pure = False
        for node in value.walk():
            if node.kind is NodeKind.VAR:
                uses.add(node.attrs["name"])
            if node.kind is NodeKind.CALL:
                pure = False
    return defs, uses, pure


def _swap_independent(ast: AstNode, rng) -> tuple[AstNode, bool]:
    applied = [False]

    def rebuild_body(stmts: list[AstNode]) -> list[AstNode]:
        out = [copy_tree(s) for s in stmts]
        if applied[0]:
            return out
        for i in range(len(out) - 1):
            a, b = stmts[i], stmts[i + 1]
            d1, u1, p1 = _stmt_defs_uses(a)
            d2, u2, p2 = _stmt_defs_uses(b)
            if not (p1 and p2):
                continue
            if (d1 & (d2 | u2)) or (d2 & (d1 | u1)):
                continue
            out[i], out[i + 1] = out[i + 1], out[i]
            applied[0] = True
            break
        return out

    tree = _rebuild_bodies(ast, rebuild_body)
    return tree, applied[0]


def _split_concat(ast: AstNode, rng) -> tuple[AstNode, bool]:
    from .localize.rewrite import mk_assign, mk_var

    applied = [False]
    temp = f"part_{int(rng.integers(1, 1000))}"

    def rebuild_body(stmts: list[AstNode]) -> list[AstNode]:
        out: list[AstNode] = []
        for stmt in stmts:
            if (not applied[0] and stmt.kind is NodeKind.ASSIGN
                    and stmt.children[0].kind is NodeKind.VAR
                    and stmt.children[1].kind is NodeKind.CONCAT):
                left, right = stmt.children[1].children
                applied[0] = True
                out.append(mk_assign(mk_var(temp), copy_tree(left)))
                out.append(mk_assign(
                    copy_tree(stmt.children[0]),
                    AstNode(NodeKind.CONCAT,
                            children=[mk_var(temp), copy_tree(right)])))
            else:
                out.append(copy_tree(stmt))
        return out

    tree = _rebuild_bodies(ast, rebuild_body)
    return tree, applied[0]


def _wrap_constant_if(ast: AstNode, rng) -> tuple[AstNode, bool]:
    """Wrap the last top-level statement in an always-true branch."""
    applied = [False]

    def rebuild_body(stmts: list[AstNode]) -> list[AstNode]:
        out = [copy_tree(s) for s in stmts]
        if applied[0] or not out:
            return out
        last = out[-1]
        if last.kind is NodeKind.FUNCTION_DECL:
            return out
        applied[0] = True
        cond = AstNode(NodeKind.NUMBER_LIT, attrs={"text": "1", "value": 1})
        out[-1] = AstNode(NodeKind.IF, children=[cond, last],
                          attrs={"then_len": 1, "else_len": 0})
        return out

    # wrap only at the top level so function bodies keep their returns
    new_children: list[AstNode] = []
    pending: list[AstNode] = []
    for child in ast.children:
        if child.kind is NodeKind.FUNCTION_DECL:
            new_children.extend(copy_tree(p) for p in pending)
            pending.clear()
            new_children.append(copy_tree(child))
        else:
            pending.append(child)
    new_children.extend(rebuild_body(pending))
    tree = AstNode(NodeKind.PROGRAM, children=new_children, span=ast.span)
    return tree, applied[0]


def _rebuild_bodies(ast: AstNode, rebuild_body) -> AstNode:
    """Apply a body-level rewrite at the program and function-body levels."""
    new_children: list[AstNode] = []
    pending: list[AstNode] = []

    def flush():
        if pending:
            new_children.extend(rebuild_body(pending))
            pending.clear()

    for child in ast.children:
        if child.kind is NodeKind.FUNCTION_DECL:
            flush()
            name, params, body = child.function_parts()
            new_children.append(AstNode(
                NodeKind.FUNCTION_DECL,
                children=[copy_tree(p) for p in params] + rebuild_body(body),
                attrs={"name": name, "n_params": len(params)},
                span=child.span))
        else:
            pending.append(child)
    flush()
    return AstNode(NodeKind.PROGRAM, children=new_children, span=ast.span)


# ---------------------------------------------------------------------------
# Corpus-level driver
# ---------------------------------------------------------------------------

def _oracle_signature(text: str, path: str, lex) -> tuple:
    findings = taint_trace(augment_flows(parse_text(path, text)), lex)
    return file_is_vulnerable(findings), file_vuln_types(findings)


def _normalized_stream(text: str, path: str) -> tuple[str, ...]:
    ast = normalize(parse_text(path, text))
    return tuple(linearize(augment_flows(ast), flow_markers=False).tokens)


_OP_PLANS = (
    ("SyntaxTransform",),
    ("Rename", "SyntaxTransform"),
    ("LoopToRecursion",),
    ("Rename", "LoopToRecursion"),
    ("SyntaxTransform", "Rename"),
)


def augment_sample(text: str, path: str, plan: tuple[str, ...], seed: int,
                   lex=None) -> tuple[str, list[str]] | None:
    """Apply an op plan; None when nothing structural applied or a gate failed."""
    lex = lex or DEFAULT_LEXICON
    ast = parse_text(path, text)
    applied_ops: list[str] = []
    structural = False
    for i, op in enumerate(plan):
        op_seed = seed + 7919 * i
        if op == "Rename":
            ast = rename_variables(ast, op_seed)
            applied_ops.append("Rename")
        elif op == "LoopToRecursion":
            ast, ok = loop_to_recursion(ast, op_seed)
            if ok:
                applied_ops.append("LoopToRecursion")
                structural = True
        elif op == "SyntaxTransform":
            ast, ok = transform_syntax_tree(ast, op_seed)
            if ok:
                applied_ops.append("SyntaxTransform")
                structural = True
    if not structural:
        return None
    new_text = print_source(ast)
    if _oracle_signature(new_text, path, lex) != _oracle_signature(text, path, lex):
        return None
    if _normalized_stream(new_text, path) == _normalized_stream(text, path):
        return None
    return new_text, applied_ops


def augment_corpus(entries, target_ratio: float, seed: int,
                   out_dir: str | Path, lex=None):
    """Augment vulnerable samples until the requested positive ratio.

    Every emitted sample passed the taint-oracle label recheck and differs
    from its origin in normalized token stream. Returns (samples, reached).
    """
    if not 0.0 < target_ratio < 1.0:
        raise VulnMinerError("target ratio must be inside (0, 1)")
    lex = lex or DEFAULT_LEXICON
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    positives = [e for e in entries if e.label == 1]
    total = len(entries)
    n_pos = len(positives)
    if not positives:
        raise VulnMinerError("no vulnerable samples to augment")
    needed = max(0, math.ceil((target_ratio * total - n_pos)
                              / (1.0 - target_ratio)))

    samples: list[AugmentedSample] = []
    attempts = 0
    max_attempts = max(20 * needed, 100)
    i = 0
    while len(samples) < needed and attempts < max_attempts:
        entry = positives[i % len(positives)]
        plan = _OP_PLANS[(i + attempts) % len(_OP_PLANS)]
        text = Path(entry.path).read_text(encoding="utf-8")
        result = augment_sample(text, entry.path, plan,
                                seed + 31 * attempts, lex=lex)
        attempts += 1
        i += 1
        if result is None:
            continue
        new_text, ops = result
        name = f"aug_{len(samples):04d}_{Path(entry.path).stem}.php"
        out_path = out / name
        out_path.write_text(new_text, encoding="utf-8")
        samples.append(AugmentedSample(
            origin=entry.path, ops=ops, output_path=str(out_path),
            label=entry.label, vuln_type=entry.vuln_type, text=new_text))
    reached = len(samples) >= needed
    return samples, reached


def save_augment_manifest(samples, path: str | Path) -> None:
    lines = [json.dumps(s.record(), sort_keys=True) for s in samples]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""),
                          encoding="utf-8")
