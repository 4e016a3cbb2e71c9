"""Run lifecycle state machine: the single authority on what a model has seen.

Every run advances through a fixed call order: register, receive background
data once, then per window ask for masked requests, submit predictions, and
receive ground truth plus remaining interactions. Data flows out only at the
two release points, so nothing with a timestamp at or past the current window
start is ever visible while the model predicts.

State is a pure fold over an append-only event list. Live calls validate,
mutate, then hand the event to a sink; replaying the same events against the
same dataset and config reconstructs the identical state, which is what
crash recovery in the service layer relies on.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, Protocol, Sequence

from .errors import (
    CorruptLog,
    DuplicateInRanking,
    NoEvaluableWindows,
    OutOfOrder,
    StaleWindow,
    UnknownRequestId,
    UnknownRun,
)
from .interactions import InteractionLog
from .metrics import (
    MetricReport,
    RequestOutcome,
    UserWindowScore,
    WindowResult,
    WindowScore,
    aggregate,
    rank_of,
    user_window_score,
    window_score,
)
from .splitting import (
    PredictionRequest,
    SplitConfig,
    WindowMaterialization,
    background_data,
    materialize_window,
    plan_windows,
)


class Phase(str, Enum):
    REGISTERED = "REGISTERED"
    TRAINING_RELEASED = "TRAINING_RELEASED"  # transient, never observed at rest
    AWAITING_PREDICTION = "AWAITING_PREDICTION"
    PREDICTION_RECEIVED = "PREDICTION_RECEIVED"
    RESULTS_RELEASED = "RESULTS_RELEASED"  # transient, never observed at rest
    COMPLETED = "COMPLETED"
    FAILED = "FAILED"


@dataclass(frozen=True)
class PredictionSubmission:
    """One window's answers: request_id -> ranked item ids (best first)."""

    run_id: str
    window_index: int
    predictions: Mapping[str, Sequence[str]]


class EventSink(Protocol):
    def append(self, run_id: str, event: dict) -> None: ...


class _NullSink:
    def append(self, run_id: str, event: dict) -> None:
        pass


@dataclass
class _Run:
    run_id: str
    metadata: dict
    phase: Phase = Phase.REGISTERED
    current_window: int = 0
    known_users: set[str] = field(default_factory=set)
    known_items: set[str] = field(default_factory=set)
    materializations: dict[int, WindowMaterialization] = field(default_factory=dict)
    # per window: (user_id, outcome) in request order
    outcomes: dict[int, list[tuple[str, RequestOutcome]]] = field(default_factory=dict)
    failure: str | None = None
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)


class EvaluationEngine:
    """Owns one dataset + split config and serializes all runs against them."""

    def __init__(
        self,
        log: InteractionLog,
        config: SplitConfig,
        sink: EventSink | None = None,
    ):
        self.log = log
        self.config = config
        self.windows = plan_windows(log, config)
        self.background = background_data(log, config)
        self.sink = sink if sink is not None else _NullSink()
        self._runs: dict[str, _Run] = {}
        self._registry_lock = threading.Lock()

    # ---- event application (shared by live calls and replay) ----

    def _apply(self, run: _Run, event: dict) -> None:
        etype = event.get("type")
        if run.phase is Phase.FAILED:
            raise OutOfOrder("run has failed")
        if etype == "training_released":
            if run.phase is not Phase.REGISTERED:
                raise OutOfOrder(f"training already released (phase {run.phase.value})")
            run.known_users.update(self.background.user_ids)
            run.known_items.update(self.background.item_ids)
            self._enter_window(run, 0)
        elif etype == "predictions_submitted":
            self._apply_submission(run, event)
        elif etype == "results_released":
            if run.phase is not Phase.PREDICTION_RECEIVED:
                raise OutOfOrder(f"no accepted submission to release (phase {run.phase.value})")
            if event["window_index"] != run.current_window:
                raise OutOfOrder("release does not match current window")
            w = run.current_window
            lo, hi = self.windows[w].slice_bounds()
            window_log = self.log.slice(lo, hi)
            run.known_users.update(window_log.user_ids)
            run.known_items.update(window_log.item_ids)
            if w + 1 < len(self.windows):
                self._enter_window(run, w + 1)
            else:
                run.phase = Phase.COMPLETED
        elif etype == "aborted":
            run.phase = Phase.FAILED
            run.failure = event.get("reason", "aborted")
        else:
            raise CorruptLog(f"unknown event type {etype!r}")

    def _enter_window(self, run: _Run, index: int) -> None:
        run.current_window = index
        run.phase = Phase.AWAITING_PREDICTION
        run.materializations[index] = materialize_window(
            self.log,
            self.windows[index],
            self.config,
            run.known_users,
            run.known_items,
        )

    def _apply_submission(self, run: _Run, event: dict) -> None:
        if run.phase is not Phase.AWAITING_PREDICTION:
            raise OutOfOrder(f"not awaiting predictions (phase {run.phase.value})")
        w = run.current_window
        if event["window_index"] != w:
            raise StaleWindow(
                f"submission for window {event['window_index']}, current window is {w}"
            )
        mat = run.materializations[w]
        predictions: Mapping[str, Sequence[str]] = event["predictions"]
        unknown = set(predictions) - mat.request_ids
        if unknown:
            raise UnknownRequestId(f"not in window {w}: {sorted(unknown)[:5]}")
        max_k = self.config.max_k
        scored: list[tuple[str, RequestOutcome]] = []
        for request in mat.requests:
            ranked = list(predictions.get(request.request_id, ()))
            rank = rank_of(ranked, mat.ground_truth[request.request_id])
            # Only the first max_k positions can ever score.
            if rank is not None and rank > max_k:
                rank = None
            scored.append(
                (
                    request.user_id,
                    RequestOutcome(
                        request_id=request.request_id,
                        rank=rank,
                        list_length=min(len(ranked), max_k),
                    ),
                )
            )
        run.outcomes[w] = scored
        run.phase = Phase.PREDICTION_RECEIVED

    # ---- lifecycle calls ----

    def register_model(self, metadata: Mapping | None = None) -> str:
        run_id = str(uuid.uuid4())
        run = _Run(run_id=run_id, metadata=dict(metadata or {}))
        with self._registry_lock:
            self._runs[run_id] = run
        self.sink.append(run_id, {"type": "registered", "run_id": run_id, "metadata": run.metadata})
        return run_id

    def _get(self, run_id: str) -> _Run:
        try:
            return self._runs[run_id]
        except KeyError:
            raise UnknownRun(f"no run {run_id}") from None

    def get_training_data(self, run_id: str) -> InteractionLog:
        run = self._get(run_id)
        with run.lock:
            event = {"type": "training_released"}
            self._apply(run, event)
            self.sink.append(run_id, event)
            return self.background

    def get_unlabeled_data(self, run_id: str) -> list[PredictionRequest]:
        """Idempotent within AWAITING_PREDICTION: repeated calls return the same list."""
        run = self._get(run_id)
        with run.lock:
            if run.phase is not Phase.AWAITING_PREDICTION:
                raise OutOfOrder(f"no outstanding prediction phase (phase {run.phase.value})")
            return list(run.materializations[run.current_window].requests)

    def submit_prediction(self, submission: PredictionSubmission) -> WindowScore:
        run = self._get(submission.run_id)
        with run.lock:
            event = {
                "type": "predictions_submitted",
                "window_index": submission.window_index,
                "predictions": {
                    rid: [str(i) for i in items] for rid, items in submission.predictions.items()
                },
            }
            self._apply(run, event)
            self.sink.append(run.run_id, event)
            return self._provisional(run, submission.window_index)

    def _provisional(self, run: _Run, window_index: int) -> WindowScore:
        users = self._user_scores(run, window_index)
        if not users:
            return WindowScore(window_index=window_index, n_users=0, values=None)
        return window_score(window_index, users)

    def get_results(self, run_id: str) -> tuple[dict[str, str], InteractionLog]:
        run = self._get(run_id)
        with run.lock:
            w = run.current_window
            if run.phase is not Phase.PREDICTION_RECEIVED:
                raise OutOfOrder(f"no accepted submission to release (phase {run.phase.value})")
            mat = run.materializations[w]
            event = {"type": "results_released", "window_index": w}
            self._apply(run, event)
            self.sink.append(run_id, event)
            return dict(mat.ground_truth), mat.remaining

    def get_report(self, run_id: str, partial: bool = False) -> MetricReport:
        run = self._get(run_id)
        with run.lock:
            released = self._released_windows(run)
            if run.phase is not Phase.COMPLETED:
                if not released:
                    raise NoEvaluableWindows("no window has released results yet")
                if not partial:
                    raise OutOfOrder("run still in progress; pass partial=True for an interim report")
            results = []
            for w in released:
                window = self.windows[w]
                results.append(
                    WindowResult(
                        window_index=w,
                        t_start=window.t_start,
                        t_end=window.t_end,
                        users=tuple(self._user_scores(run, w)),
                    )
                )
            return aggregate(
                results,
                model=run.metadata,
                config=self.config.to_flat_dict(),
                k_values=self.config.k_values,
                partial=len(released) < len(self.windows),
            )

    def abort(self, run_id: str, reason: str = "operator abort") -> None:
        run = self._get(run_id)
        with run.lock:
            event = {"type": "aborted", "reason": reason}
            self._apply(run, event)
            self.sink.append(run_id, event)

    # ---- reads used by the service layer ----

    def run_ids(self) -> list[str]:
        with self._registry_lock:
            return list(self._runs)

    def run_status(self, run_id: str) -> dict:
        run = self._get(run_id)
        with run.lock:
            return {
                "run_id": run.run_id,
                "metadata": dict(run.metadata),
                "phase": run.phase.value,
                "current_window": run.current_window,
                "n_windows": len(self.windows),
                "failure": run.failure,
            }

    def released_log(self, run_id: str) -> InteractionLog:
        """All interactions released to this run so far (background plus closed windows).

        Releases always form a prefix of the timeline, so this is a single slice.
        Used by crash recovery to rebuild a model; it exposes nothing the run
        has not already seen.
        """
        run = self._get(run_id)
        with run.lock:
            released = self._released_windows(run)
            if run.phase is Phase.REGISTERED:
                return InteractionLog(records=())
            span = self.log.span
            assert span is not None
            if not released:
                return self.background
            lo, hi = self.windows[released[-1]].slice_bounds()
            return self.log.slice(span[0], hi)

    # ---- helpers ----

    def _released_windows(self, run: _Run) -> list[int]:
        if run.phase is Phase.COMPLETED:
            return list(range(len(self.windows)))
        if run.phase in (Phase.AWAITING_PREDICTION, Phase.PREDICTION_RECEIVED):
            return list(range(run.current_window))
        return []

    def _user_scores(self, run: _Run, window_index: int) -> list[UserWindowScore]:
        scored = run.outcomes.get(window_index, [])
        by_user: dict[str, list[RequestOutcome]] = {}
        for user_id, outcome in scored:
            by_user.setdefault(user_id, []).append(outcome)
        return [
            user_window_score(user_id, window_index, outcomes, self.config.k_values)
            for user_id, outcomes in by_user.items()
        ]

    # ---- replay ----

    def recover_run(self, events: Sequence[dict]) -> str:
        """Rebuild one run by folding its event log. Raises CorruptLog on any
        event the live path would have rejected."""
        if not events or events[0].get("type") != "registered":
            raise CorruptLog("event log must start with a registration event")
        head = events[0]
        run_id = head.get("run_id")
        if not run_id:
            raise CorruptLog("registration event lacks run_id")
        run = _Run(run_id=run_id, metadata=dict(head.get("metadata") or {}))
        for event in events[1:]:
            try:
                self._apply(run, event)
            except CorruptLog:
                raise
            except Exception as exc:
                raise CorruptLog(f"invalid event during replay: {exc}") from exc
        with self._registry_lock:
            self._runs[run_id] = run
        return run_id

    def mark_failed(self, run_id: str, metadata: Mapping | None, reason: str) -> None:
        """Register a run in FAILED state (recovery of a corrupt log)."""
        run = _Run(run_id=run_id, metadata=dict(metadata or {}))
        run.phase = Phase.FAILED
        run.failure = reason
        with self._registry_lock:
            self._runs[run_id] = run
