import json
import os

import numpy as np
import pytest

from chatctl.bundle import load_bundle, save_bundle
from chatctl.errors import BundleError
from chatctl.svm import predict_intent
from chatctl.textfeat import sentence_vector, tokenize


@pytest.fixture()
def loaded(bundle_dir):
    return load_bundle(bundle_dir)


class TestRoundTrip:
    def test_predictions_identical_after_reload(self, artifacts, loaded):
        rng = np.random.default_rng(0)
        dim = artifacts.intent_model.dimension
        for _ in range(50):
            vec = rng.normal(size=dim)
            before = predict_intent(artifacts.intent_model, vec)
            after = predict_intent(loaded.intent_model, vec)
            assert before == after

    def test_parse_identical_after_reload(self, engine, loaded):
        reloaded_engine = loaded.make_engine()
        for text in ["xin chào", "học phần là cái gì", "khou hoc may tinh la gi"]:
            a_pred, a_ents = engine.parse(text)
            b_pred, b_ents = reloaded_engine.parse(text)
            assert a_pred == b_pred
            assert a_ents == b_ents

    def test_domain_and_models_survive(self, artifacts, loaded):
        assert loaded.domain == artifacts.domain
        assert loaded.policy_model.actions == artifacts.policy_model.actions
        for key, value in artifacts.policy_model.params.items():
            assert np.array_equal(loaded.policy_model.params[key], value)
        assert np.array_equal(loaded.entity_model.emission, artifacts.entity_model.emission)
        assert loaded.knn_index == artifacts.knn_index

    def test_embedding_fallback_survives(self, artifacts, loaded):
        text = "một từ lạ hoắc"
        before = sentence_vector(tokenize(text), artifacts.embeddings)
        after = sentence_vector(tokenize(text), loaded.embeddings)
        assert np.array_equal(before, after)


class TestDeterminism:
    def test_two_saves_byte_identical(self, artifacts, tmp_path):
        first = tmp_path / "one"
        second = tmp_path / "two"
        save_bundle(artifacts, str(first))
        save_bundle(artifacts, str(second))
        names = sorted(os.listdir(first))
        assert names == sorted(os.listdir(second))
        for name in names:
            assert (first / name).read_bytes() == (second / name).read_bytes(), name


class TestIntegrity:
    def test_missing_manifest_rejected(self, tmp_path):
        with pytest.raises(BundleError, match="manifest"):
            load_bundle(str(tmp_path))

    def test_tampered_file_rejected(self, artifacts, tmp_path):
        out = tmp_path / "bundle"
        save_bundle(artifacts, str(out))
        policy_path = out / "policy.json"
        payload = json.loads(policy_path.read_text(encoding="utf-8"))
        payload["hidden_size"] += 1
        policy_path.write_text(json.dumps(payload), encoding="utf-8")
        with pytest.raises(BundleError, match="checksum"):
            load_bundle(str(out))

    def test_missing_model_file_rejected(self, artifacts, tmp_path):
        out = tmp_path / "bundle"
        save_bundle(artifacts, str(out))
        os.remove(out / "svm.json")
        with pytest.raises(BundleError, match="svm.json"):
            load_bundle(str(out))

    def test_wrong_schema_version_rejected(self, artifacts, tmp_path):
        out = tmp_path / "bundle"
        save_bundle(artifacts, str(out))
        manifest_path = out / "manifest.json"
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        manifest["schema_version"] = 99
        manifest_path.write_text(json.dumps(manifest), encoding="utf-8")
        with pytest.raises(BundleError, match="schema"):
            load_bundle(str(out))

    def test_manifest_lists_training_data_checksums(self, loaded):
        assert {"nlu", "templates", "stories", "lexicon", "knowledge"} <= set(
            loaded.manifest["training_data"]
        )
