"""Incrementally maintained item-based kNN over binary user-item co-occurrence."""

from __future__ import annotations

from collections import Counter
from typing import Mapping, Sequence

import numpy as np

from ..interactions import InteractionLog
from ..splitting import PredictionRequest
from .base import Model, ModelContext, register


class ItemKNNIncremental(Model):
    """Item-based collaborative filtering with per-event updates.

    Maintains, over binary user vectors, the per-item user count n_i and the
    co-occurrence matrix C[i][j] (users who touched both items), giving cosine
    similarity sim(i, j) = C[i][j] / sqrt(n_i * n_j). A candidate j is scored
    for user u by summing sim(i, j) over the history items i that rank among
    j's n_neighbors nearest; items already in u's history are excluded. Users
    without any observed history fall back to a raw popularity ranking.

    :param n_neighbors: neighbourhood size per candidate item.
    :param top_n: ranked-list length.
    """

    _INITIAL_CAPACITY = 256

    def __init__(self, n_neighbors: int = 50, top_n: int = 10):
        if n_neighbors < 1:
            raise ValueError("n_neighbors must be >= 1")
        self.n_neighbors = n_neighbors
        self.top_n = top_n
        self._item_index: dict[str, int] = {}
        self._item_ids: list[str] = []
        self._histories: dict[str, set[int]] = {}
        self._popularity: Counter[str] = Counter()
        self._capacity = self._INITIAL_CAPACITY
        self._cooc = np.zeros((self._capacity, self._capacity), dtype=np.int32)
        self._user_counts = np.zeros(self._capacity, dtype=np.int64)
        self._version = 0
        self._cached_version = -1
        self._cached_knn: np.ndarray | None = None

    @property
    def n_items(self) -> int:
        return len(self._item_ids)

    def _index_of(self, item_id: str) -> int:
        idx = self._item_index.get(item_id)
        if idx is None:
            idx = len(self._item_ids)
            self._item_index[item_id] = idx
            self._item_ids.append(item_id)
            if idx >= self._capacity:
                self._grow()
        return idx

    def _grow(self) -> None:
        new_cap = self._capacity * 2
        cooc = np.zeros((new_cap, new_cap), dtype=np.int32)
        cooc[: self._capacity, : self._capacity] = self._cooc
        counts = np.zeros(new_cap, dtype=np.int64)
        counts[: self._capacity] = self._user_counts
        self._cooc = cooc
        self._user_counts = counts
        self._capacity = new_cap

    def fit(self, log: InteractionLog) -> None:
        for rec in log:
            self._popularity[rec.item_id] += 1
            idx = self._index_of(rec.item_id)
            history = self._histories.setdefault(rec.user_id, set())
            if idx in history:
                continue  # binary vectors: repeat events change nothing
            if history:
                prior = np.fromiter(history, dtype=np.int64, count=len(history))
                self._cooc[idx, prior] += 1
                self._cooc[prior, idx] += 1
            self._cooc[idx, idx] += 1
            self._user_counts[idx] += 1
            history.add(idx)
        self._version += 1

    def similarity(self, item_a: str, item_b: str) -> float:
        """Cosine similarity between two items' binary user vectors."""
        a = self._item_index.get(item_a)
        b = self._item_index.get(item_b)
        if a is None or b is None:
            return 0.0
        denom = float(self._user_counts[a]) * float(self._user_counts[b])
        if denom == 0:
            return 0.0
        return float(self._cooc[a, b]) / denom**0.5

    def _knn_matrix(self) -> np.ndarray:
        """Similarity matrix with, per column j, only j's nearest neighbours kept."""
        if self._cached_version == self._version and self._cached_knn is not None:
            return self._cached_knn
        m = self.n_items
        counts = self._user_counts[:m].astype(np.float64)
        sim = self._cooc[:m, :m].astype(np.float64)
        denom = np.sqrt(np.outer(counts, counts))
        np.divide(sim, denom, out=sim, where=denom > 0)
        np.fill_diagonal(sim, 0.0)  # an item is not its own neighbour
        if m > self.n_neighbors:
            # Stable order makes neighbour ties deterministic (first-seen item wins).
            order = np.argsort(-sim, axis=0, kind="stable")
            keep = np.zeros_like(sim, dtype=bool)
            keep[order[: self.n_neighbors], np.arange(m)] = True
            sim[~keep] = 0.0
        self._cached_knn = sim
        self._cached_version = self._version
        return sim

    def _popularity_ranking(self) -> list[str]:
        ranked = sorted(self._popularity.items(), key=lambda kv: (-kv[1], kv[0]))
        return [item for item, _ in ranked[: self.top_n]]

    def _rank_for_user(self, user_id: str, knn: np.ndarray, fallback: list[str]) -> list[str]:
        history = self._histories.get(user_id)
        if not history:
            return list(fallback)
        hist = np.fromiter(history, dtype=np.int64, count=len(history))
        scores = knn[hist, :].sum(axis=0)
        scores[hist] = 0.0
        candidates = np.nonzero(scores > 0)[0]
        if candidates.size == 0:
            return []
        ranked = sorted(
            ((float(scores[c]), self._item_ids[c]) for c in candidates),
            key=lambda sc: (-sc[0], sc[1]),
        )
        return [item for _, item in ranked[: self.top_n]]

    def predict(self, requests: Sequence[PredictionRequest]) -> dict[str, list[str]]:
        if self.n_items == 0:
            return {r.request_id: [] for r in requests}
        knn = self._knn_matrix()
        fallback = self._popularity_ranking()
        per_user: dict[str, list[str]] = {}
        rankings: dict[str, list[str]] = {}
        for r in requests:
            if r.user_id not in per_user:
                per_user[r.user_id] = self._rank_for_user(r.user_id, knn, fallback)
            rankings[r.request_id] = list(per_user[r.user_id])
        return rankings


@register("item_knn_incremental")
def _item_knn(params: Mapping, context: ModelContext) -> ItemKNNIncremental:
    n_neighbors = int(params.get("n_neighbors", 50))
    return ItemKNNIncremental(n_neighbors=n_neighbors, top_n=context.top_n)
