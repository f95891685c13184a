"""Versioned on-disk model bundle (vocabulary, embeddings, both stages)."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .linearize import EmbeddingTable, Vocabulary
from .nn import AttentionParams, GruParams
from .training import TrainConfig

FORMAT_VERSION = 1


@dataclass
class FusionSettings:
    lam: float = 0.5
    tau: float = 0.5
    tau1: float = 0.2
    beta: float = 2.0

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError("lambda must be in [0, 1]")
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError("tau must be in [0, 1]")
        if not 0.0 <= self.tau1 < 1.0:
            raise ConfigError("tau1 must be in [0, 1)")
        if self.beta < 0.0:
            raise ConfigError("beta must be >= 0")


@dataclass
class ModelBundle:
    vocab: Vocabulary
    embedding: EmbeddingTable
    stage1: GruParams
    stage2: AttentionParams
    fusion: FusionSettings
    stage1_config: TrainConfig
    stage2_config: TrainConfig
    curves: dict[str, list[float]]

    def validate(self) -> None:
        self.embedding.validate(self.vocab)
        self.stage1.validate()
        self.stage2.validate()
        if self.stage1.dim != self.embedding.dim:
            raise ConfigError("stage-one width differs from embedding width")
        if self.stage2.dim != self.embedding.dim:
            raise ConfigError("stage-two width differs from embedding width")


def _array_out(arr: np.ndarray):
    return {"shape": list(arr.shape), "data": arr.ravel().tolist()}


def _array_in(obj, what: str) -> np.ndarray:
    arr = np.asarray(obj["data"], dtype=float)
    shape = tuple(obj["shape"])
    expected = int(np.prod(shape)) if shape else 1
    if arr.size != expected:
        raise ConfigError(f"{what}: payload length {arr.size} != shape {shape}")
    return arr.reshape(shape)


def _params_out(params) -> dict:
    return {k: _array_out(v) for k, v in params.arrays().items()}


def save_model(bundle: ModelBundle, path: str | Path) -> None:
    bundle.validate()
    doc = {
        "format_version": FORMAT_VERSION,
        "vocab": bundle.vocab.symbols,
        "vocab_hash": bundle.vocab.stable_hash(),
        "embedding": _array_out(bundle.embedding.matrix),
        "stage1": _params_out(bundle.stage1),
        "stage2": dict(_params_out(bundle.stage2),
                       project_qkv=bundle.stage2.project_qkv),
        "fusion": asdict(bundle.fusion),
        "stage1_config": asdict(bundle.stage1_config),
        "stage2_config": asdict(bundle.stage2_config),
        "curves": bundle.curves,
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1),
                          encoding="utf-8")


def load_model(path: str | Path) -> ModelBundle:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"model file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"model file {path} is not valid JSON: {exc}")
    if doc.get("format_version") != FORMAT_VERSION:
        raise ConfigError(
            f"unsupported model format {doc.get('format_version')!r}")

    vocab = Vocabulary(symbols=list(doc["vocab"]))
    if vocab.stable_hash() != doc["vocab_hash"]:
        raise ConfigError("vocabulary hash mismatch; model file corrupted")
    embedding = EmbeddingTable(matrix=_array_in(doc["embedding"], "embedding"))

    s1 = {k: _array_in(v, f"stage1.{k}") for k, v in doc["stage1"].items()}
    stage1 = GruParams(**s1)
    s2_doc = dict(doc["stage2"])
    project = bool(s2_doc.pop("project_qkv", True))
    s2 = {k: _array_in(v, f"stage2.{k}") for k, v in s2_doc.items()}
    stage2 = AttentionParams(**s2, project_qkv=project)

    bundle = ModelBundle(
        vocab=vocab,
        embedding=embedding,
        stage1=stage1,
        stage2=stage2,
        fusion=FusionSettings(**doc["fusion"]),
        stage1_config=TrainConfig(**doc["stage1_config"]),
        stage2_config=TrainConfig(**doc["stage2_config"]),
        curves={k: list(v) for k, v in doc.get("curves", {}).items()},
    )
    bundle.validate()
    return bundle
