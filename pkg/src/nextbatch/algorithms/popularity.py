"""Popularity baselines: trailing-horizon counts and exponentially decayed counts."""

from __future__ import annotations

import math
from collections import Counter, deque
from typing import Mapping, Sequence

from ..interactions import InteractionLog
from ..splitting import PredictionRequest
from .base import Model, ModelContext, register


class RecentPopularity(Model):
    """Ranks items by interaction count within a trailing time horizon.

    Only events with timestamp in (t_newest - horizon, t_newest] are counted,
    where t_newest is the newest timestamp seen so far. Ties break by
    ascending item id.

    :param horizon: horizon length in seconds; defaults to one window width.
    :param top_n: ranked-list length.
    """

    def __init__(self, horizon: int, top_n: int = 10):
        if horizon <= 0:
            raise ValueError("horizon must be positive")
        self.horizon = horizon
        self.top_n = top_n
        self._events: deque[tuple[int, str]] = deque()
        self._counts: Counter[str] = Counter()
        self._t_newest: int | None = None

    def fit(self, log: InteractionLog) -> None:
        for rec in log:
            self._events.append((rec.timestamp, rec.item_id))
            self._counts[rec.item_id] += 1
            if self._t_newest is None or rec.timestamp > self._t_newest:
                self._t_newest = rec.timestamp

    def _prune(self) -> None:
        # Events leave the horizon permanently: t_newest never decreases.
        if self._t_newest is None:
            return
        cutoff = self._t_newest - self.horizon
        while self._events and self._events[0][0] <= cutoff:
            _, item = self._events.popleft()
            self._counts[item] -= 1
            if self._counts[item] == 0:
                del self._counts[item]

    def _ranking(self) -> list[str]:
        self._prune()
        ranked = sorted(self._counts.items(), key=lambda kv: (-kv[1], kv[0]))
        return [item for item, _ in ranked[: self.top_n]]

    def predict(self, requests: Sequence[PredictionRequest]) -> dict[str, list[str]]:
        ranking = self._ranking()
        return {r.request_id: list(ranking) for r in requests}


class DecayPopularity(Model):
    """Ranks items by exponentially decayed interaction counts.

    Each event adds 1 to its item's score after decaying the previous score by
    exp(-decay * dt). Scores are decayed lazily, so an untouched item only
    pays for decay when it is read. decay=0 reduces to all-time counts.

    :param decay: decay rate per second (lambda), must be >= 0.
    :param top_n: ranked-list length.
    """

    def __init__(self, decay: float = 1e-6, top_n: int = 10):
        if decay < 0:
            raise ValueError("decay must be >= 0")
        self.decay = decay
        self.top_n = top_n
        self._scores: dict[str, tuple[float, int]] = {}  # item -> (score, last_update)
        self._t_newest: int | None = None

    def fit(self, log: InteractionLog) -> None:
        for rec in log:
            score, last = self._scores.get(rec.item_id, (0.0, rec.timestamp))
            score = score * math.exp(-self.decay * (rec.timestamp - last)) + 1.0
            self._scores[rec.item_id] = (score, rec.timestamp)
            if self._t_newest is None or rec.timestamp > self._t_newest:
                self._t_newest = rec.timestamp

    def score_of(self, item_id: str, at: int) -> float:
        """Decayed score of one item as of timestamp ``at``."""
        if item_id not in self._scores:
            return 0.0
        score, last = self._scores[item_id]
        return score * math.exp(-self.decay * (at - last))

    def _ranking(self) -> list[str]:
        if self._t_newest is None:
            return []
        now = self._t_newest
        decayed = {item: self.score_of(item, now) for item in self._scores}
        ranked = sorted(decayed.items(), key=lambda kv: (-kv[1], kv[0]))
        return [item for item, _ in ranked[: self.top_n]]

    def predict(self, requests: Sequence[PredictionRequest]) -> dict[str, list[str]]:
        ranking = self._ranking()
        return {r.request_id: list(ranking) for r in requests}


@register("recent_popularity")
def _recent_popularity(params: Mapping, context: ModelContext) -> RecentPopularity:
    horizon = int(params.get("horizon", context.window_width))
    return RecentPopularity(horizon=horizon, top_n=context.top_n)


@register("decay_popularity")
def _decay_popularity(params: Mapping, context: ModelContext) -> DecayPopularity:
    decay = float(params.get("decay", params.get("lambda", 1e-6)))
    return DecayPopularity(decay=decay, top_n=context.top_n)
