"""Ranking metrics and their user / window / macro / micro aggregation.

Each prediction request carries exactly one ground-truth item, so per-request
scores reduce to the rank of that item in the submitted list. Aggregation
climbs three levels: per-user mean within a window, unweighted mean over a
window's users, then a macro mean over windows and a micro mean over every
(user, window) pair. Sums use math.fsum so results do not depend on
accumulation order; rounding happens only when a report is serialized.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import DuplicateInRanking, EmptyWindow, NoEvaluableWindows

METRICS = ("hit_rate", "ndcg", "precision", "recall")

REPORT_SCHEMA = "nextbatch.report.v1"
CSV_HEADER = ("window_index", "metric", "k", "value", "n_users")


def rank_of(ranked_items: Sequence[str], truth: str) -> int | None:
    """1-based rank of the ground-truth item, or None on a miss."""
    if len(set(ranked_items)) != len(ranked_items):
        raise DuplicateInRanking("submitted list repeats an item")
    for pos, item in enumerate(ranked_items, start=1):
        if item == truth:
            return pos
    return None


def scores_at_k(rank: int | None, k: int) -> dict[str, float]:
    """Per-request scores given the truth's rank (None = miss)."""
    hit = 1.0 if rank is not None and rank <= k else 0.0
    ndcg = 1.0 / math.log2(rank + 1) if hit else 0.0
    return {
        "hit_rate": hit,
        "ndcg": ndcg,
        "precision": hit / k,
        "recall": hit,
    }


def score_request(ranked_items: Sequence[str], truth: str, k: int) -> dict[str, float]:
    if k < 1:
        raise ValueError("k must be >= 1")
    return scores_at_k(rank_of(ranked_items, truth), k)


@dataclass(frozen=True)
class RequestOutcome:
    """Rank of the true item in one submitted list (None on miss)."""

    request_id: str
    rank: int | None
    list_length: int


@dataclass(frozen=True)
class UserWindowScore:
    """Mean of one user's request scores within one window."""

    user_id: str
    window_index: int
    n_requests: int
    values: dict[str, dict[int, float]]  # metric -> k -> value


@dataclass(frozen=True)
class WindowScore:
    """Unweighted mean over a window's evaluated users; values is None when no user was evaluated."""

    window_index: int
    n_users: int
    values: dict[str, dict[int, float]] | None

    def to_json_dict(self) -> dict:
        return {
            "window_index": self.window_index,
            "n_users": self.n_users,
            "values": _round_values(self.values),
        }


def user_window_score(
    user_id: str,
    window_index: int,
    outcomes: Sequence[RequestOutcome],
    k_values: Sequence[int],
) -> UserWindowScore:
    if not outcomes:
        raise ValueError("a user score needs at least one outcome")
    values: dict[str, dict[int, float]] = {m: {} for m in METRICS}
    for k in k_values:
        per_request = [scores_at_k(o.rank, k) for o in outcomes]
        for m in METRICS:
            values[m][k] = math.fsum(s[m] for s in per_request) / len(outcomes)
    return UserWindowScore(
        user_id=user_id, window_index=window_index, n_requests=len(outcomes), values=values
    )


def window_score(window_index: int, users: Sequence[UserWindowScore]) -> WindowScore:
    if not users:
        raise EmptyWindow(f"window {window_index} evaluated no users")
    k_values = list(users[0].values[METRICS[0]])
    values: dict[str, dict[int, float]] = {m: {} for m in METRICS}
    for m in METRICS:
        for k in k_values:
            values[m][k] = math.fsum(u.values[m][k] for u in users) / len(users)
    return WindowScore(window_index=window_index, n_users=len(users), values=values)


@dataclass(frozen=True)
class WindowResult:
    """All user scores of one window, input to aggregate()."""

    window_index: int
    t_start: int
    t_end: int
    users: tuple[UserWindowScore, ...]


@dataclass(frozen=True)
class WindowReportRow:
    window_index: int
    t_start: int
    t_end: int
    n_users: int
    values: dict[str, dict[int, float]] | None


@dataclass(frozen=True)
class MetricReport:
    """Per-window, macro, and micro values plus run metadata."""

    model: dict
    config: dict
    k_values: tuple[int, ...]
    partial: bool
    windows: tuple[WindowReportRow, ...]
    macro: dict[str, dict[int, float]]
    micro: dict[str, dict[int, float]]
    n_user_windows: int

    def to_json_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "model": self.model,
            "config": self.config,
            "k_values": list(self.k_values),
            "metrics": list(METRICS),
            "partial": self.partial,
            "windows": [
                {
                    "window_index": w.window_index,
                    "t_start": w.t_start,
                    "t_end": w.t_end,
                    "n_users": w.n_users,
                    "values": _round_values(w.values),
                }
                for w in self.windows
            ],
            "macro": _round_values(self.macro),
            "micro": _round_values(self.micro),
            "n_user_windows": self.n_user_windows,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        """Flat rows: one per (window, metric, k), then macro and micro rows."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for w in self.windows:
            for m in METRICS:
                for k in self.k_values:
                    value = "" if w.values is None else f"{w.values[m][k]:.5f}"
                    writer.writerow((w.window_index, m, k, value, w.n_users))
        for label, values in (("macro", self.macro), ("micro", self.micro)):
            for m in METRICS:
                for k in self.k_values:
                    writer.writerow((label, m, k, f"{values[m][k]:.5f}", self.n_user_windows))
        return buf.getvalue()

    def series_csv(self) -> str:
        """Per-window plot data only: window_index,metric,k,value."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("window_index", "metric", "k", "value"))
        for w in self.windows:
            for m in METRICS:
                for k in self.k_values:
                    value = "" if w.values is None else f"{w.values[m][k]:.5f}"
                    writer.writerow((w.window_index, m, k, value))
        return buf.getvalue()


def _round_values(values: Mapping[str, Mapping[int, float]] | None) -> dict | None:
    if values is None:
        return None
    return {m: {str(k): round(v, 5) for k, v in ks.items()} for m, ks in values.items()}


def aggregate(
    windows: Sequence[WindowResult],
    *,
    model: Mapping,
    config: Mapping,
    k_values: Sequence[int],
    partial: bool = False,
) -> MetricReport:
    """Build the report. Windows that evaluated no user appear as rows but are
    excluded from the macro mean and contribute nothing to the micro mean."""
    evaluable = [w for w in windows if w.users]
    if not evaluable:
        raise NoEvaluableWindows("no window evaluated any user")

    rows = []
    for w in windows:
        ws = window_score(w.window_index, w.users) if w.users else None
        rows.append(
            WindowReportRow(
                window_index=w.window_index,
                t_start=w.t_start,
                t_end=w.t_end,
                n_users=len(w.users),
                values=None if ws is None else ws.values,
            )
        )

    k_values = tuple(k_values)
    macro: dict[str, dict[int, float]] = {m: {} for m in METRICS}
    micro: dict[str, dict[int, float]] = {m: {} for m in METRICS}
    n_user_windows = sum(len(w.users) for w in evaluable)
    for m in METRICS:
        for k in k_values:
            window_means = [
                math.fsum(u.values[m][k] for u in w.users) / len(w.users) for w in evaluable
            ]
            macro[m][k] = math.fsum(window_means) / len(window_means)
            micro[m][k] = (
                math.fsum(u.values[m][k] for w in evaluable for u in w.users) / n_user_windows
            )

    return MetricReport(
        model=dict(model),
        config=dict(config),
        k_values=k_values,
        partial=partial,
        windows=tuple(rows),
        macro=macro,
        micro=micro,
        n_user_windows=n_user_windows,
    )
