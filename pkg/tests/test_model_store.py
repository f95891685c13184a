import json

import numpy as np
import pytest

from vulnminer.errors import ConfigError
from vulnminer.model_store import FusionSettings, load_model, save_model


def test_fusion_settings_validation():
    with pytest.raises(ConfigError):
        FusionSettings(lam=1.5)
    with pytest.raises(ConfigError):
        FusionSettings(tau1=1.0)
    with pytest.raises(ConfigError):
        FusionSettings(beta=-0.5)


def test_save_load_round_trip_bitexact(bundle, tmp_path):
    path = tmp_path / "model.json"
    save_model(bundle, path)
    loaded = load_model(path)
    assert loaded.vocab.symbols == bundle.vocab.symbols
    assert np.array_equal(loaded.embedding.matrix, bundle.embedding.matrix)
    for key, arr in bundle.stage1.arrays().items():
        assert np.array_equal(arr, loaded.stage1.arrays()[key]), key
    for key, arr in bundle.stage2.arrays().items():
        assert np.array_equal(arr, loaded.stage2.arrays()[key]), key
    assert loaded.fusion == bundle.fusion
    assert loaded.curves == bundle.curves


def test_save_is_deterministic(bundle, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    save_model(bundle, a)
    save_model(bundle, b)
    assert a.read_bytes() == b.read_bytes()


def test_missing_file_raises():
    with pytest.raises(ConfigError, match="not found"):
        load_model("/nonexistent/model.json")


def test_corrupted_vocab_hash_detected(bundle, tmp_path):
    path = tmp_path / "model.json"
    save_model(bundle, path)
    doc = json.loads(path.read_text())
    doc["vocab"][5] = doc["vocab"][5] + "_tampered"
    path.write_text(json.dumps(doc))
    with pytest.raises(ConfigError, match="hash"):
        load_model(path)


def test_shape_mismatch_detected(bundle, tmp_path):
    path = tmp_path / "model.json"
    save_model(bundle, path)
    doc = json.loads(path.read_text())
    doc["stage1"]["w"]["data"] = doc["stage1"]["w"]["data"][:-1]
    path.write_text(json.dumps(doc))
    with pytest.raises(ConfigError):
        load_model(path)


def test_unknown_format_version(bundle, tmp_path):
    path = tmp_path / "model.json"
    save_model(bundle, path)
    doc = json.loads(path.read_text())
    doc["format_version"] = 99
    path.write_text(json.dumps(doc))
    with pytest.raises(ConfigError, match="format"):
        load_model(path)
