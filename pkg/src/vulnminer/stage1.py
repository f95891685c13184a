"""Structural detector stage: recall-first hypothesis generation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParseError, VulnMinerError
from .flows import augment_flows
from .frontend import parse
from .linearize import embed_sequence, linearize
from .nn import gru_forward
from .source import SourceUnit

DEFAULT_TAU1 = 0.2


@dataclass(frozen=True)
class StageOneScore:
    file_id: str
    score: float
    passed: bool
    tokens: int = 0
    truncated: bool = False

    def record(self) -> dict:
        return {"path": self.file_id, "score": self.score, "passed": self.passed}


@dataclass
class HypothesisSet:
    """Stage-one survivors, strongest first, plus the rejects for the log."""

    hypotheses: list[StageOneScore]
    corpus: str = ""
    skip_log: list[StageOneScore] = field(default_factory=list)
    errors: list[tuple[str, str]] = field(default_factory=list)

    def paths(self) -> list[str]:
        return [h.file_id for h in self.hypotheses]


def structural_sequence(unit: SourceUnit, flow_markers: bool = True,
                        canonical: bool = True):
    """Parse, flow-augment and linearize one file."""
    graph = augment_flows(parse(unit))
    return linearize(graph, canonical=canonical, flow_markers=flow_markers)


def score_structural(unit: SourceUnit, bundle, tau1: float | None = None,
                     flow_markers: bool = True) -> StageOneScore:
    """GRU score over the linearized flow-enhanced tree."""
    tau1 = bundle.fusion.tau1 if tau1 is None else tau1
    try:
        seq = structural_sequence(unit, flow_markers=flow_markers)
    except ParseError as exc:
        exc.path = exc.path or unit.path
        raise
    emb = embed_sequence(seq, bundle.embedding, bundle.vocab)
    score, _, _ = gru_forward(emb, bundle.stage1)
    return StageOneScore(file_id=unit.path, score=score, passed=score > tau1,
                         tokens=seq.n, truncated=seq.truncated)


def propose_hypotheses(units, bundle, tau1: float | None = None,
                       flow_markers: bool = True,
                       corpus: str = "") -> HypothesisSet:
    """Score every parseable file; keep those above the low bar."""
    tau1 = bundle.fusion.tau1 if tau1 is None else tau1
    if not 0.0 <= tau1 < 1.0:
        raise VulnMinerError("tau1 must be in [0, 1)")
    passed: list[StageOneScore] = []
    skipped: list[StageOneScore] = []
    errors: list[tuple[str, str]] = []
    for unit in units:
        try:
            result = score_structural(unit, bundle, tau1=tau1,
                                      flow_markers=flow_markers)
        except ParseError as exc:
            errors.append((unit.path, str(exc)))
            continue
        (passed if result.passed else skipped).append(result)
    passed.sort(key=lambda h: (-h.score, h.file_id))
    return HypothesisSet(hypotheses=passed, corpus=corpus,
                         skip_log=skipped, errors=errors)


def save_hypotheses(hset: HypothesisSet, path: str | Path) -> None:
    lines = [json.dumps(h.record(), sort_keys=True) for h in hset.hypotheses]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""),
                          encoding="utf-8")


def load_hypotheses(path: str | Path) -> list[StageOneScore]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            obj = json.loads(line)
            out.append(StageOneScore(file_id=obj["path"], score=obj["score"],
                                     passed=bool(obj["passed"])))
    return out
