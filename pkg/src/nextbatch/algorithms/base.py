"""Model contract and registry.

A model consumes interaction batches through ``fit`` and answers masked
requests through ``predict``. Fitting must be cumulative: feeding batches one
by one leaves the model in the same state as feeding their union at once.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

from ..interactions import InteractionLog
from ..splitting import PredictionRequest


@dataclass(frozen=True)
class ModelContext:
    """Run-level hints handed to model constructors.

    ``top_n`` caps ranked-list length (the largest metric cutoff);
    ``window_width`` is the evaluation window width in seconds.
    """

    top_n: int
    window_width: int


class Model(ABC):
    """Client-side contract: cumulative fit, ranked-list predict."""

    @abstractmethod
    def fit(self, log: InteractionLog) -> None: ...

    @abstractmethod
    def predict(self, requests: Sequence[PredictionRequest]) -> dict[str, list[str]]:
        """Ranked item ids per request_id, best first, each list at most top_n long."""


_REGISTRY: dict[str, Callable[[Mapping, ModelContext], Model]] = {}


def register(name: str):
    def wrap(factory: Callable[[Mapping, ModelContext], Model]):
        _REGISTRY[name] = factory
        return factory

    return wrap


def available_models() -> list[str]:
    return sorted(_REGISTRY)


def create_model(name: str, params: Mapping | None, context: ModelContext) -> Model:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; available: {available_models()}") from None
    return factory(dict(params or {}), context)
