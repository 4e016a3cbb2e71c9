"""Partition the global timeline into background data plus ordered evaluation windows.

Window boundaries are computed with exact rational arithmetic so identical
inputs always produce identical plans. Within each window the earliest
interactions per user become masked prediction targets; everything else is
"remaining" data released after the model has answered.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

from .errors import DegenerateSpan, EmptyDataset, InvalidConfig, SplitOutOfRange
from .interactions import Interaction, InteractionLog


@dataclass(frozen=True)
class SplitConfig:
    """Evaluation plan: where background data ends and how windows behave."""

    t_background_end: int
    n_windows: int
    n_max_requests_per_user: int = 2
    include_unknown_users: bool = False
    include_unknown_items: bool = False
    k_values: tuple[int, ...] = (10,)

    def __post_init__(self) -> None:
        object.__setattr__(self, "k_values", tuple(self.k_values))
        if self.n_windows < 1:
            raise InvalidConfig("n_windows must be >= 1")
        if self.n_max_requests_per_user < 1:
            raise InvalidConfig("n_max_requests_per_user must be >= 1")
        if not self.k_values:
            raise InvalidConfig("k_values must not be empty")
        if any(k < 1 for k in self.k_values):
            raise InvalidConfig("k_values must be positive")
        if any(a >= b for a, b in zip(self.k_values, self.k_values[1:])):
            raise InvalidConfig("k_values must be strictly increasing")

    @property
    def max_k(self) -> int:
        return self.k_values[-1]

    def to_flat_dict(self) -> dict:
        return {
            "t_background_end": self.t_background_end,
            "n_windows": self.n_windows,
            "n_max_requests_per_user": self.n_max_requests_per_user,
            "include_unknown_users": self.include_unknown_users,
            "include_unknown_items": self.include_unknown_items,
            "k_values": list(self.k_values),
        }

    @classmethod
    def from_flat_dict(cls, doc: Mapping) -> "SplitConfig":
        known = {
            "t_background_end",
            "n_windows",
            "n_max_requests_per_user",
            "include_unknown_users",
            "include_unknown_items",
            "k_values",
        }
        unknown = set(doc) - known
        if unknown:
            raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(
                t_background_end=int(doc["t_background_end"]),
                n_windows=int(doc["n_windows"]),
                n_max_requests_per_user=int(doc.get("n_max_requests_per_user", 2)),
                include_unknown_users=bool(doc.get("include_unknown_users", False)),
                include_unknown_items=bool(doc.get("include_unknown_items", False)),
                k_values=tuple(int(k) for k in doc.get("k_values", (10,))),
            )
        except KeyError as exc:
            raise InvalidConfig(f"missing config key: {exc.args[0]}") from exc
        except (TypeError, ValueError) as exc:
            raise InvalidConfig(str(exc)) from exc


@dataclass(frozen=True)
class EvaluationWindow:
    """Half-open slot [t_start, t_end) on the timeline; the last window closes at t_end."""

    index: int
    t_start: int
    t_end: int
    closed_end: bool = False

    def slice_bounds(self) -> tuple[int, int]:
        # Timestamps are integer seconds, so a closed right edge is t_end + 1 half-open.
        return (self.t_start, self.t_end + 1 if self.closed_end else self.t_end)

    def contains(self, t: int) -> bool:
        lo, hi = self.slice_bounds()
        return lo <= t < hi


@dataclass(frozen=True)
class PredictionRequest:
    """A masked interaction: the model sees who and when, never what."""

    request_id: str
    user_id: str
    timestamp: int
    window_index: int


@dataclass(frozen=True)
class WindowMaterialization:
    """One window's evaluable content: masked targets, their answers, and the rest."""

    window: EvaluationWindow
    requests: tuple[PredictionRequest, ...]
    ground_truth: dict[str, str]
    remaining: InteractionLog

    @property
    def request_ids(self) -> frozenset[str]:
        return frozenset(r.request_id for r in self.requests)


def plan_windows(log: InteractionLog, config: SplitConfig) -> list[EvaluationWindow]:
    """Tile (t_background_end, t_max] with n equal-width windows.

    Boundary i sits at t_background_end + round(i * span / n_windows), computed
    exactly; the final window includes t_max.
    """
    span = log.span
    if span is None:
        raise EmptyDataset("cannot plan windows over an empty log")
    t_min, t_max = span
    if config.t_background_end < t_min or config.t_background_end > t_max:
        raise SplitOutOfRange(
            f"t_background_end {config.t_background_end} outside span [{t_min}, {t_max}]"
        )
    if config.t_background_end == t_max:
        raise DegenerateSpan("no data after t_background_end")
    width = t_max - config.t_background_end
    if width < config.n_windows:
        raise DegenerateSpan(
            f"span of {width}s cannot hold {config.n_windows} non-empty windows"
        )
    bounds = [
        config.t_background_end + round(Fraction(i * width, config.n_windows))
        for i in range(config.n_windows + 1)
    ]
    last = config.n_windows - 1
    return [
        EvaluationWindow(
            index=i, t_start=bounds[i], t_end=bounds[i + 1], closed_end=(i == last)
        )
        for i in range(config.n_windows)
    ]


def background_data(log: InteractionLog, config: SplitConfig) -> InteractionLog:
    """Everything strictly before t_background_end."""
    span = log.span
    if span is None:
        return log
    return log.slice(span[0], config.t_background_end)


def _request_id(window_index: int, target: Interaction) -> str:
    # seq is unique within the log, so this id is unique within the run.
    return f"w{window_index}-s{target.seq}"


def materialize_window(
    log: InteractionLog,
    window: EvaluationWindow,
    config: SplitConfig,
    known_users: frozenset[str] | set[str],
    known_items: frozenset[str] | set[str],
) -> WindowMaterialization:
    """Split one window's interactions into prediction targets and remaining data.

    Eligible users are those active in the window (intersected with
    ``known_users`` when unknown-user evaluation is off). Each eligible user's
    earliest interactions, up to the per-user cap, become targets. With
    unknown-item evaluation off, targets for unseen items are demoted back to
    remaining, so the interaction still reaches the model after submission.
    """
    lo, hi = window.slice_bounds()
    window_log = log.slice(lo, hi)

    by_user: dict[str, list[Interaction]] = {}
    for rec in window_log:
        by_user.setdefault(rec.user_id, []).append(rec)

    targets: list[Interaction] = []
    remaining: list[Interaction] = []
    for user, events in by_user.items():
        if not config.include_unknown_users and user not in known_users:
            remaining.extend(events)
            continue
        n_targets = min(config.n_max_requests_per_user, len(events))
        candidates = events[:n_targets]
        remaining.extend(events[n_targets:])
        if not config.include_unknown_items:
            kept = [e for e in candidates if e.item_id in known_items]
            remaining.extend(e for e in candidates if e.item_id not in known_items)
            candidates = kept
        targets.extend(candidates)

    targets.sort(key=lambda r: (r.timestamp, r.seq))
    requests = tuple(
        PredictionRequest(
            request_id=_request_id(window.index, t),
            user_id=t.user_id,
            timestamp=t.timestamp,
            window_index=window.index,
        )
        for t in targets
    )
    ground_truth = {
        _request_id(window.index, t): t.item_id for t in targets
    }
    return WindowMaterialization(
        window=window,
        requests=requests,
        ground_truth=ground_truth,
        remaining=InteractionLog.from_records(remaining),
    )
