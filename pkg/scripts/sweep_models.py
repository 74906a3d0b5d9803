#!/usr/bin/env python3
"""Kernel and k sweeps on the bundled corpus: the two hyperparameter tables
of the evaluation report, printed standalone.

    python scripts/sweep_models.py [config]
"""

import sys
from pathlib import Path

from chatctl.config import load_config
from chatctl.knn import DEFAULT_KS, build_index, generate_corruptions, k_sweep, load_lexicon
from chatctl.pipeline import corruption_spec, intent_dataset, load_corpus, sweep_kernels
from chatctl.svm import kernel_sweep
from chatctl.textfeat import EmbeddingTable

DEFAULT_CONFIG = Path(__file__).resolve().parent.parent / "data" / "config.toml"


def main() -> int:
    config_path = sys.argv[1] if len(sys.argv) > 1 else str(DEFAULT_CONFIG)
    config = load_config(config_path)
    intents, _, _, _ = load_corpus(config)

    embeddings = EmbeddingTable(
        dimension=config.embedding_dim, vectors={}, fallback_seed=config.seed
    )
    data = intent_dataset(intents, embeddings)
    print("kernel sweep (cross-validated intent accuracy):")
    for row in kernel_sweep(
        data,
        kernels=sweep_kernels(config),
        grid=tuple(float(c) for c in config.svm_c_grid),
        folds=config.svm_folds,
        seed=config.seed,
    ):
        print(f"  {row.kernel:<8} {row.accuracy:6.2f}%  (C={row.best_c:g})")

    lexicon = load_lexicon(config.lexicon_path)
    index = build_index(
        lexicon,
        corruption_spec(config),
        k=config.knn_k,
        reject_radius=config.knn_reject_radius,
    )
    eval_spec = corruption_spec(config, seed_offset=1)
    eval_set = [
        (variant, value)
        for value in lexicon.values()
        for variant in generate_corruptions(value, eval_spec)
    ]
    print("\nkNN k sweep (corrupted-surface recovery):")
    sweep = k_sweep(index, eval_set, ks=DEFAULT_KS)
    for row in sweep.rows:
        marker = "  <-- best" if row.k == sweep.best_k else ""
        print(f"  k={row.k:<3} {row.accuracy:6.2f}%{marker}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
