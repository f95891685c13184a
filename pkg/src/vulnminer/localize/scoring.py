"""Dual scoring and best-candidate selection."""

from __future__ import annotations

import difflib
from dataclasses import dataclass, field

import numpy as np

from ..cascade import fuse_scores
from ..errors import ParseError
from ..linearize import embed_sequence
from ..source import SourceUnit
from ..stage1 import score_structural
from ..stage2 import semantic_sequence, verify_semantic
from .constraints import CandidateContext, ConstraintSet, evaluate_constraint
from .ir import IntermediateRepresentation


@dataclass
class Candidate:
    candidate_id: str
    template_id: str
    variant: str
    text: str
    backend: str
    parse_ok: bool = True
    s_sec: float = 0.0
    s_sem: float = 0.0
    utility: float = 0.0
    edit_distance: float = 1.0
    constraint_results: dict[str, bool] = field(default_factory=dict)
    failure: str | None = None
    context: CandidateContext | None = None

    def passes_hard(self, constraints: ConstraintSet) -> bool:
        return all(self.constraint_results.get(c.cid, False)
                   for c in constraints.hard())


def edit_distance(original: str, candidate: str) -> float:
    """Normalized in [0, 1]; 0 means identical text."""
    ratio = difflib.SequenceMatcher(None, original, candidate).ratio()
    return 1.0 - ratio


def _mean_embedding(unit: SourceUnit, bundle) -> np.ndarray | None:
    seq = semantic_sequence(unit)
    emb = embed_sequence(seq, bundle.embedding, bundle.vocab)
    if emb.shape[0] == 0:
        return None
    return emb.mean(axis=0)


def score_candidate(candidate: Candidate, ir: IntermediateRepresentation,
                    bundle, constraints: ConstraintSet,
                    alpha: float = 0.6, query_built: bool = False) -> Candidate:
    """Security score from the frozen cascade, semantic score from embeddings."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must be in [0, 1]")
    unit = SourceUnit.from_text(ir.unit.path + ".candidate", candidate.text)
    try:
        one = score_structural(unit, bundle)
        two = verify_semantic(unit, bundle)
    except ParseError:
        candidate.parse_ok = False
        candidate.failure = "candidate does not parse"
        candidate.s_sec = 0.0
        candidate.s_sem = 0.0
        candidate.utility = 0.0
        return candidate
    fused = fuse_scores(one.score, two.score, bundle.fusion.lam)
    candidate.s_sec = 1.0 - fused

    origin_vec = _mean_embedding(ir.unit, bundle)
    cand_vec = _mean_embedding(unit, bundle)
    if origin_vec is None or cand_vec is None:
        sim = 0.0
    else:
        denom = float(np.linalg.norm(origin_vec) * np.linalg.norm(cand_vec))
        sim = float(origin_vec @ cand_vec / denom) if denom > 0 else 0.0
    candidate.s_sem = min(1.0, max(0.0, sim))

    candidate.utility = alpha * candidate.s_sec + (1 - alpha) * candidate.s_sem
    candidate.edit_distance = edit_distance(ir.unit.text, candidate.text)

    ctx = CandidateContext.build(candidate.text, ir, query_built)
    candidate.context = ctx
    for constraint in constraints.constraints:
        candidate.constraint_results[constraint.cid] = evaluate_constraint(
            constraint, ctx)
    return candidate


def select_best(candidates: list[Candidate],
                constraints: ConstraintSet,
                enforce_constraints: bool = True) -> Candidate | None:
    """Max utility among hard-constraint survivors; edit distance breaks ties."""
    pool = [c for c in candidates if c.parse_ok]
    if enforce_constraints:
        pool = [c for c in pool if c.passes_hard(constraints)]
    if not pool:
        return None
    return min(pool, key=lambda c: (-c.utility, c.edit_distance, c.template_id))
