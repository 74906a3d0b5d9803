"""Model bundle persistence: a versioned directory of JSON documents.

Every float is serialized as its shortest decimal form that round-trips
exactly, so a saved-then-loaded model predicts bit-identically and two
training runs with the same seed produce byte-identical bundles. The
manifest records a schema version, the domain fingerprint, and SHA-256
checksums of every bundle file (verified on load) plus of the training
data files (informational).
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .corpus import DomainSpec, ResponseTemplate
from .crf import CrfHyper, CrfModel
from .engine import DialogueEngine, KnowledgeBase
from .errors import BundleError
from .knn import KnnIndex
from .pipeline import TrainedArtifacts, engine_config
from .policy import PARAM_KEYS, PolicyModel
from .svm import KernelSpec, PairMachine, SvmModel
from .textfeat import EmbeddingTable

SCHEMA_VERSION = 1

_MODEL_FILES = (
    "config.json",
    "domain.json",
    "templates.json",
    "embeddings.json",
    "svm.json",
    "crf.json",
    "knn.json",
    "policy.json",
    "knowledge.json",
)


def _dump(path: str, payload) -> None:
    text = json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=1)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(text + "\n")


def _load(path: str):
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _floats(array: np.ndarray) -> list:
    return [float(x) for x in np.asarray(array).ravel()]


def _svm_payload(model: SvmModel) -> dict:
    return {
        "classes": list(model.classes),
        "kernel": {
            "kind": model.kernel.kind,
            "gamma": model.kernel.gamma,
            "degree": model.kernel.degree,
            "coef0": model.kernel.coef0,
        },
        "C": model.C,
        "dimension": model.dimension,
        "machines": [
            {
                "class_a": m.class_a,
                "class_b": m.class_b,
                "bias": float(m.bias),
                "sv_indices": [int(i) for i in m.sv_indices],
                "dual_coef": _floats(m.dual_coef),
                "support_vectors": [_floats(row) for row in m.support_vectors],
            }
            for m in model.machines
        ],
    }


def _svm_from_payload(payload: dict) -> SvmModel:
    kernel = KernelSpec(
        kind=payload["kernel"]["kind"],
        gamma=payload["kernel"]["gamma"],
        degree=payload["kernel"]["degree"],
        coef0=payload["kernel"]["coef0"],
    )
    dimension = payload["dimension"]
    machines = []
    for m in payload["machines"]:
        vectors = np.array(m["support_vectors"], dtype=np.float64)
        if vectors.size == 0:
            vectors = np.zeros((0, dimension))
        machines.append(
            PairMachine(
                class_a=m["class_a"],
                class_b=m["class_b"],
                support_vectors=vectors,
                dual_coef=np.array(m["dual_coef"], dtype=np.float64),
                bias=m["bias"],
                sv_indices=tuple(m["sv_indices"]),
            )
        )
    return SvmModel(
        classes=tuple(payload["classes"]),
        kernel=kernel,
        C=payload["C"],
        machines=tuple(machines),
        dimension=dimension,
    )


def _crf_payload(model: CrfModel) -> dict:
    rows, cols = np.nonzero(model.emission)
    return {
        "labels": list(model.labels),
        "feature_ids": list(model.feature_ids),
        "hyper": {
            "l1": model.hyper.l1,
            "l2": model.hyper.l2,
            "max_iterations": model.hyper.max_iterations,
            "initial_step": model.hyper.initial_step,
        },
        "emission": [
            [int(r), int(c), float(model.emission[r, c])] for r, c in zip(rows, cols)
        ],
        "transition": [_floats(row) for row in model.transition],
        "objective_trace": [float(x) for x in model.objective_trace],
    }


def _crf_from_payload(payload: dict) -> CrfModel:
    labels = tuple(payload["labels"])
    feature_ids = tuple(payload["feature_ids"])
    emission = np.zeros((len(feature_ids), len(labels)))
    for r, c, w in payload["emission"]:
        emission[r, c] = w
    return CrfModel(
        labels=labels,
        feature_ids=feature_ids,
        emission=emission,
        transition=np.array(payload["transition"], dtype=np.float64),
        hyper=CrfHyper(**payload["hyper"]),
        objective_trace=tuple(payload["objective_trace"]),
    )


def _knn_payload(index: KnnIndex) -> dict:
    return {
        "k": index.k,
        "reject_radius": index.reject_radius,
        "points": [
            {"label": label, "vector": {k: float(v) for k, v in vec.items()}}
            for vec, label in index.points
        ],
    }


def _knn_from_payload(payload: dict) -> KnnIndex:
    points = tuple(
        (dict(point["vector"]), point["label"]) for point in payload["points"]
    )
    return KnnIndex(points=points, k=payload["k"], reject_radius=payload["reject_radius"])


def _policy_payload(model: PolicyModel) -> dict:
    return {
        "hidden_size": model.hidden_size,
        "max_history": model.max_history,
        "state_size": model.state_size,
        "actions": list(model.actions),
        "domain_fingerprint": model.domain_fingerprint,
        "params": {
            key: {"shape": list(model.params[key].shape), "data": _floats(model.params[key])}
            for key in PARAM_KEYS
        },
    }


def _policy_from_payload(payload: dict) -> PolicyModel:
    params = {
        key: np.array(value["data"], dtype=np.float64).reshape(value["shape"])
        for key, value in payload["params"].items()
    }
    return PolicyModel(
        hidden_size=payload["hidden_size"],
        max_history=payload["max_history"],
        state_size=payload["state_size"],
        actions=tuple(payload["actions"]),
        domain_fingerprint=payload["domain_fingerprint"],
        params=params,
    )


def save_bundle(artifacts: TrainedArtifacts, out_dir: str) -> str:
    """Write the bundle; returns the manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    domain = artifacts.domain
    _dump(os.path.join(out_dir, "config.json"), artifacts.config.to_dict())
    _dump(
        os.path.join(out_dir, "domain.json"),
        {
            "intents": list(domain.intents),
            "entity_names": list(domain.entity_names),
            "slot_names": list(domain.slot_names),
            "actions": list(domain.actions),
        },
    )
    _dump(
        os.path.join(out_dir, "templates.json"),
        {t.action_name: list(t.variants) for t in artifacts.templates},
    )
    _dump(
        os.path.join(out_dir, "embeddings.json"),
        {
            "dimension": artifacts.embeddings.dimension,
            "fallback_seed": artifacts.embeddings.fallback_seed,
            "vectors": {w: _floats(v) for w, v in artifacts.embeddings.vectors.items()},
        },
    )
    _dump(os.path.join(out_dir, "svm.json"), _svm_payload(artifacts.intent_model))
    _dump(os.path.join(out_dir, "crf.json"), _crf_payload(artifacts.entity_model))
    _dump(os.path.join(out_dir, "knn.json"), _knn_payload(artifacts.knn_index))
    _dump(os.path.join(out_dir, "policy.json"), _policy_payload(artifacts.policy_model))
    _dump(
        os.path.join(out_dir, "knowledge.json"),
        _nested_knowledge(artifacts.knowledge),
    )

    data_checksums = {}
    config = artifacts.config
    for role, path in (
        ("nlu", config.nlu_path),
        ("templates", config.templates_path),
        ("stories", config.stories_path),
        ("lexicon", config.lexicon_path),
        ("knowledge", config.knowledge_path),
        ("embeddings", config.embeddings_path),
    ):
        if path and os.path.exists(path):
            data_checksums[role] = _sha256(path)

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "domain_fingerprint": domain.fingerprint(),
        "files": {name: _sha256(os.path.join(out_dir, name)) for name in _MODEL_FILES},
        "training_data": data_checksums,
    }
    manifest_path = os.path.join(out_dir, "manifest.json")
    _dump(manifest_path, manifest)
    return manifest_path


def _nested_knowledge(kb: KnowledgeBase) -> dict:
    nested: dict[str, dict[str, str]] = {}
    for (action, key), answer in kb.entries.items():
        nested.setdefault(action, {})[key] = answer
    return nested


@dataclass
class LoadedBundle:
    config: PipelineConfig
    domain: DomainSpec
    embeddings: EmbeddingTable
    intent_model: SvmModel
    entity_model: CrfModel
    knn_index: KnnIndex
    policy_model: PolicyModel
    knowledge: KnowledgeBase
    manifest: dict

    def make_engine(self) -> DialogueEngine:
        return DialogueEngine(
            domain=self.domain,
            embeddings=self.embeddings,
            intent_model=self.intent_model,
            entity_model=self.entity_model,
            knn_index=self.knn_index,
            policy_model=self.policy_model,
            knowledge=self.knowledge,
            config=engine_config(self.config),
        )


def load_bundle(bundle_dir: str) -> LoadedBundle:
    """Load and checksum-verify a bundle directory."""
    manifest_path = os.path.join(bundle_dir, "manifest.json")
    if not os.path.exists(manifest_path):
        raise BundleError(f"no manifest.json in {bundle_dir!r}")
    manifest = _load(manifest_path)
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise BundleError(
            f"bundle schema {manifest.get('schema_version')!r} is not {SCHEMA_VERSION}"
        )
    for name, expected in manifest["files"].items():
        path = os.path.join(bundle_dir, name)
        if not os.path.exists(path):
            raise BundleError(f"bundle file {name} is missing")
        actual = _sha256(path)
        if actual != expected:
            raise BundleError(f"checksum mismatch for {name}")

    config = PipelineConfig.from_dict(_load(os.path.join(bundle_dir, "config.json")))
    domain_payload = _load(os.path.join(bundle_dir, "domain.json"))
    templates_payload = _load(os.path.join(bundle_dir, "templates.json"))
    templates = {
        name: ResponseTemplate(action_name=name, variants=tuple(variants))
        for name, variants in templates_payload.items()
    }
    domain = DomainSpec(
        intents=tuple(domain_payload["intents"]),
        entity_names=tuple(domain_payload["entity_names"]),
        slot_names=tuple(domain_payload["slot_names"]),
        actions=tuple(domain_payload["actions"]),
        templates=templates,
    )
    emb_payload = _load(os.path.join(bundle_dir, "embeddings.json"))
    embeddings = EmbeddingTable(
        dimension=emb_payload["dimension"],
        vectors={
            w: np.array(v, dtype=np.float64) for w, v in emb_payload["vectors"].items()
        },
        fallback_seed=emb_payload["fallback_seed"],
    )
    intent_model = _svm_from_payload(_load(os.path.join(bundle_dir, "svm.json")))
    entity_model = _crf_from_payload(_load(os.path.join(bundle_dir, "crf.json")))
    knn_index = _knn_from_payload(_load(os.path.join(bundle_dir, "knn.json")))
    policy_model = _policy_from_payload(_load(os.path.join(bundle_dir, "policy.json")))
    if policy_model.domain_fingerprint != domain.fingerprint():
        raise BundleError("domain fingerprint mismatch between policy and domain")
    if manifest["domain_fingerprint"] != domain.fingerprint():
        raise BundleError("manifest fingerprint does not match domain")
    knowledge_payload = _load(os.path.join(bundle_dir, "knowledge.json"))
    entries = {
        (action, key): answer
        for action, items in knowledge_payload.items()
        for key, answer in items.items()
    }
    return LoadedBundle(
        config=config,
        domain=domain,
        embeddings=embeddings,
        intent_model=intent_model,
        entity_model=entity_model,
        knn_index=knn_index,
        policy_model=policy_model,
        knowledge=KnowledgeBase(entries=entries),
        manifest=manifest,
    )
