"""Seeded stratified k-fold partitioning."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class FoldSplit:
    """A partition of example indices into k disjoint, exhaustive folds."""

    folds: tuple[tuple[int, ...], ...]

    @property
    def k(self) -> int:
        return len(self.folds)

    def train_test(self, fold: int) -> tuple[list[int], list[int]]:
        test = list(self.folds[fold])
        train = [i for f, members in enumerate(self.folds) if f != fold for i in members]
        return train, test


def stratified_kfold(labels: list[str], k: int = 10, seed: int = 0) -> FoldSplit:
    """Partition indices into k folds with per-class counts within +/-1 of n_c/k.

    Per class, indices are shuffled with the seed and dealt round-robin into
    folds, which satisfies the stratification bound constructively.
    """
    if k < 1:
        raise ValidationError("k must be at least 1")
    by_class: dict[str, list[int]] = {}
    for i, label in enumerate(labels):
        by_class.setdefault(label, []).append(i)
    for label in sorted(by_class):
        count = len(by_class[label])
        if count < k:
            raise ValidationError(
                f"class {label!r} has only {count} examples; "
                f"reduce k to at most {count}"
            )
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    for label in sorted(by_class):
        members = by_class[label]
        order = rng.permutation(len(members))
        for position, member_pos in enumerate(order):
            folds[position % k].append(members[int(member_pos)])
    return FoldSplit(folds=tuple(tuple(sorted(fold)) for fold in folds))
