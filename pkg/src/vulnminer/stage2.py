"""Semantic verification stage: normalization plus risk-biased attention."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ParseError
from .flows import augment_flows
from .frontend import normalize, parse
from .lexicon import DEFAULT_LEXICON, TaintLexicon
from .linearize import TokenSequence, embed_sequence, linearize
from .nn import RiskMatrix, attention_forward, risky_attention_mass
from .source import SourceUnit


@dataclass(frozen=True)
class StageTwoScore:
    file_id: str
    score: float
    risky_positions: tuple[int, ...]
    risky_mass: float

    def record(self) -> dict:
        return {"path": self.file_id, "stage2_score": self.score}


def build_risk_matrix(seq: TokenSequence, lex: TaintLexicon,
                      beta: float) -> RiskMatrix:
    """Bias every row toward columns whose symbol is a known source or sink."""
    risky = lex.risky_names()
    columns = tuple(i for i, tok in enumerate(seq.tokens) if tok in risky)
    return RiskMatrix.build(len(seq.tokens), columns, beta)


def semantic_sequence(unit: SourceUnit, normalized: bool = True,
                      canonical: bool = True) -> TokenSequence:
    """Clean (normalize) then linearize without flow markers."""
    ast = parse(unit)
    if normalized:
        ast = normalize(ast)
    graph = augment_flows(ast)
    return linearize(graph, canonical=canonical, flow_markers=False)


def verify_semantic(unit: SourceUnit, bundle, lex: TaintLexicon | None = None,
                    beta: float | None = None, normalized: bool = True) -> StageTwoScore:
    """Attention score for one stage-one hypothesis."""
    lex = lex or DEFAULT_LEXICON
    beta = bundle.fusion.beta if beta is None else beta
    try:
        seq = semantic_sequence(unit, normalized=normalized,
                                canonical=normalized)
    except ParseError as exc:
        exc.path = exc.path or unit.path
        raise
    bias = build_risk_matrix(seq, lex, beta)
    emb = embed_sequence(seq, bundle.embedding, bundle.vocab)
    score, _, attn, _ = attention_forward(emb, bundle.stage2, bias)
    return StageTwoScore(
        file_id=unit.path,
        score=score,
        risky_positions=bias.risky_columns,
        risky_mass=risky_attention_mass(attn, bias.risky_columns),
    )


def save_stage2_scores(scores, path: str | Path) -> None:
    lines = [json.dumps(s.record(), sort_keys=True) for s in scores]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""),
                          encoding="utf-8")
