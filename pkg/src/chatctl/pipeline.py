"""End-to-end training: parse the corpus, fit all four models, and
assemble a ready-to-serve engine."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .corpus import (
    DomainSpec,
    IntentDef,
    ResponseTemplate,
    Story,
    build_domain,
    parse_nlu,
    parse_stories,
    parse_templates,
)
from .crf import CrfHyper, CrfModel, TaggedSequence, train_crf
from .engine import DialogueEngine, EngineConfig, KnowledgeBase, load_knowledge_base
from .errors import TrainingError
from .knn import (
    CorruptionSpec,
    EntityLexicon,
    KnnIndex,
    build_index,
    lexicon_from_nlu,
    load_lexicon,
)
from .policy import PolicyModel, TrainingTrace, stories_to_sequences, train_policy
from .svm import GridSearchResult, KernelSpec, SvmModel, grid_search_C, train_svm
from .textfeat import (
    EmbeddingTable,
    bilou_encode,
    crf_features,
    load_embeddings,
    sentence_vector,
    tokenize,
)


@dataclass
class TrainedArtifacts:
    config: PipelineConfig
    intents: list[IntentDef]
    templates: list[ResponseTemplate]
    stories: list[Story]
    domain: DomainSpec
    embeddings: EmbeddingTable
    intent_model: SvmModel
    grid_result: GridSearchResult | None
    entity_model: CrfModel
    lexicon: EntityLexicon
    knn_index: KnnIndex
    policy_model: PolicyModel
    policy_trace: TrainingTrace
    knowledge: KnowledgeBase


def kernel_from_config(config: PipelineConfig) -> KernelSpec:
    return KernelSpec(
        kind=config.svm_kernel,
        gamma=config.svm_gamma,
        degree=config.svm_degree,
        coef0=config.svm_coef0,
    )


def sweep_kernels(config: PipelineConfig) -> tuple[KernelSpec, ...]:
    """All four kernel kinds with the configured gamma/degree/coef0."""
    return tuple(
        KernelSpec(
            kind=kind,
            gamma=None if kind == "linear" else config.svm_gamma,
            degree=config.svm_degree,
            coef0=config.svm_coef0,
        )
        for kind in ("linear", "poly", "sigmoid", "rbf")
    )


def corruption_spec(config: PipelineConfig, seed_offset: int = 0) -> CorruptionSpec:
    return CorruptionSpec(
        rules=config.knn_rules,
        variants_per_value=config.knn_variants_per_value,
        seed=config.seed + seed_offset,
    )


def load_corpus(config: PipelineConfig):
    with open(config.nlu_path, encoding="utf-8") as handle:
        intents = parse_nlu(handle.read())
    with open(config.templates_path, encoding="utf-8") as handle:
        templates = parse_templates(handle.read())
    with open(config.stories_path, encoding="utf-8") as handle:
        stories = parse_stories(handle.read())
    domain = build_domain(
        intents, templates, stories, tuple(sorted(config.custom_action_slots))
    )
    return intents, templates, stories, domain


def intent_dataset(
    intents: list[IntentDef], embeddings: EmbeddingTable
) -> list[tuple[np.ndarray, str]]:
    data = []
    for intent in intents:
        for utt in intent.patterns:
            data.append((sentence_vector(tokenize(utt.text), embeddings), intent.name))
    return data


def entity_sequences(intents: list[IntentDef]) -> list[TaggedSequence]:
    sequences = []
    for intent in intents:
        for utt in intent.patterns:
            pairs = bilou_encode(utt)
            tokens = [token for token, _ in pairs]
            tags = tuple(tag for _, tag in pairs)
            features = tuple(crf_features(tokens, i) for i in range(len(tokens)))
            sequences.append(TaggedSequence(features=features, tags=tags))
    return sequences


def train_pipeline(config: PipelineConfig) -> TrainedArtifacts:
    intents, templates, stories, domain = load_corpus(config)

    if config.embeddings_path:
        embeddings = load_embeddings(
            config.embeddings_path, fallback_seed=config.seed
        )
    else:
        embeddings = EmbeddingTable(
            dimension=config.embedding_dim, vectors={}, fallback_seed=config.seed
        )

    data = intent_dataset(intents, embeddings)
    kernel = kernel_from_config(config)
    grid = tuple(float(c) for c in config.svm_c_grid)
    if not grid:
        raise TrainingError("svm_c_grid must not be empty")
    if len(grid) > 1:
        grid_result = grid_search_C(
            data, kernel, grid=grid, folds=config.svm_folds, seed=config.seed
        )
        best_c = grid_result.best_c
    else:
        grid_result = None
        best_c = grid[0]
    intent_model = train_svm(data, kernel, best_c)

    hyper = CrfHyper(
        l1=config.crf_l1, l2=config.crf_l2, max_iterations=config.crf_max_iterations
    )
    entity_model = train_crf(entity_sequences(intents), hyper)

    if config.lexicon_path:
        lexicon = load_lexicon(config.lexicon_path)
    else:
        lexicon = lexicon_from_nlu(intents)
    knn_index = build_index(
        lexicon,
        corruption_spec(config),
        k=config.knn_k,
        reject_radius=config.knn_reject_radius,
    )

    sequences = stories_to_sequences(stories, domain, config.policy_max_history)
    policy_model, policy_trace = train_policy(
        sequences,
        domain,
        epochs=config.policy_epochs,
        learning_rate=config.policy_learning_rate,
        seed=config.seed,
        hidden_size=config.policy_hidden,
        max_history=config.policy_max_history,
    )

    knowledge = (
        load_knowledge_base(config.knowledge_path)
        if config.knowledge_path
        else KnowledgeBase()
    )

    return TrainedArtifacts(
        config=config,
        intents=intents,
        templates=templates,
        stories=stories,
        domain=domain,
        embeddings=embeddings,
        intent_model=intent_model,
        grid_result=grid_result,
        entity_model=entity_model,
        lexicon=lexicon,
        knn_index=knn_index,
        policy_model=policy_model,
        policy_trace=policy_trace,
        knowledge=knowledge,
    )


def engine_config(config: PipelineConfig) -> EngineConfig:
    return EngineConfig(
        confidence_threshold=config.confidence_threshold,
        fallback_action=config.fallback_action,
        fallback_text=config.fallback_text,
        kb_missing_text=config.kb_missing_text,
        custom_action_slots=dict(config.custom_action_slots),
    )


def make_engine(artifacts: TrainedArtifacts) -> DialogueEngine:
    return DialogueEngine(
        domain=artifacts.domain,
        embeddings=artifacts.embeddings,
        intent_model=artifacts.intent_model,
        entity_model=artifacts.entity_model,
        knn_index=artifacts.knn_index,
        policy_model=artifacts.policy_model,
        knowledge=artifacts.knowledge,
        config=engine_config(artifacts.config),
    )
