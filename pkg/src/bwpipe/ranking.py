"""Feature ranking container shared by the selection and model layers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RankEntry:
    feature: str
    score: float
    rank: int


@dataclass(frozen=True)
class SelectorRanking:
    """Scores for every feature under one method.

    Entries are sorted by score descending with ties broken by column
    order; ranks are the 1-based positions in that order.
    ``feature_order`` preserves the original column order so consensus
    aggregation can reproduce the same tie-breaking.
    """

    method_id: str
    entries: tuple[RankEntry, ...]
    feature_order: tuple[str, ...]
    direction: str = "higher_is_better"

    def __post_init__(self) -> None:
        ranks = sorted(e.rank for e in self.entries)
        if ranks != list(range(1, len(self.entries) + 1)):
            raise ValueError("ranks must form a permutation of 1..n")
        if {e.feature for e in self.entries} != set(self.feature_order):
            raise ValueError("entries and feature_order must cover the same features")

    @property
    def n_features(self) -> int:
        return len(self.entries)

    def scores(self) -> dict[str, float]:
        return {e.feature: e.score for e in self.entries}

    def ranks(self) -> dict[str, int]:
        return {e.feature: e.rank for e in self.entries}

    def top(self, k: int) -> list[str]:
        if not 1 <= k <= self.n_features:
            raise ValueError(f"k must lie in [1, {self.n_features}]")
        ordered = sorted(self.entries, key=lambda e: e.rank)
        return [e.feature for e in ordered[:k]]

    def to_rows(self) -> list[tuple[str, str, float, int]]:
        return [
            (self.method_id, e.feature, e.score, e.rank)
            for e in sorted(self.entries, key=lambda e: e.rank)
        ]


def make_ranking(
    method_id: str, feature_names: list[str] | tuple[str, ...], scores: np.ndarray
) -> SelectorRanking:
    """Build a ranking from scores aligned with column order; ties
    resolve to the earlier column."""
    scores = np.asarray(scores, dtype=float)
    if len(feature_names) != len(scores):
        raise ValueError("scores length must match feature names")
    order = sorted(range(len(scores)), key=lambda j: (-scores[j], j))
    entries = [
        RankEntry(feature=feature_names[j], score=float(scores[j]), rank=pos + 1)
        for pos, j in enumerate(order)
    ]
    return SelectorRanking(
        method_id=method_id, entries=tuple(entries), feature_order=tuple(feature_names)
    )
