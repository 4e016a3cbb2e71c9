"""Drive a model through the full evaluation loop against an engine.

Used by the CLI for in-process runs and by the service's background jobs.
Also supports resuming an interrupted run: the model is rebuilt from the data
the run has already been given (legal because fitting is cumulative), then
the loop continues from the recorded phase.
"""

from __future__ import annotations

from typing import Callable, Mapping, Sequence

from .algorithms import Model, ModelContext, create_model
from .interactions import InteractionLog
from .protocol import EvaluationEngine, Phase, PredictionSubmission
from .splitting import PredictionRequest


def model_context(engine: EvaluationEngine) -> ModelContext:
    first = engine.windows[0]
    lo, hi = first.slice_bounds()
    return ModelContext(top_n=engine.config.max_k, window_width=max(1, hi - lo))


def _release_batch(
    requests: Sequence[PredictionRequest],
    ground_truth: Mapping[str, str],
    remaining: InteractionLog,
) -> InteractionLog:
    # Revealed truth plus remaining data form the window's training batch.
    events = [(r.user_id, ground_truth[r.request_id], r.timestamp) for r in requests]
    events.extend((r.user_id, r.item_id, r.timestamp) for r in remaining)
    events.sort(key=lambda e: e[2])
    return InteractionLog.from_events(events)


def run_model(
    engine: EvaluationEngine,
    model_name: str,
    params: Mapping | None = None,
    *,
    metadata: Mapping | None = None,
    resume_run_id: str | None = None,
    on_window_done: Callable[[int, int], None] | None = None,
) -> str:
    """Run a built-in model to completion; returns the run id.

    ``on_window_done(completed, total)`` fires after each window's results
    have been folded back into the model.
    """
    model = create_model(model_name, params, model_context(engine))
    total = len(engine.windows)

    if resume_run_id is None:
        meta = dict(metadata or {"name": model_name, "params": dict(params or {})})
        run_id = engine.register_model(meta)
        model.fit(engine.get_training_data(run_id))
    else:
        run_id = resume_run_id
        phase = engine.run_status(run_id)["phase"]
        if phase == Phase.REGISTERED.value:
            model.fit(engine.get_training_data(run_id))
        else:
            if phase == Phase.PREDICTION_RECEIVED.value:
                # The submission survived the crash; collect the release so the
                # released data becomes a clean timeline prefix, then refit.
                engine.get_results(run_id)
            released = engine.released_log(run_id)
            if released:
                model.fit(released)

    pending: list[PredictionRequest] = []
    while True:
        status = engine.run_status(run_id)
        phase = status["phase"]
        if phase == Phase.COMPLETED.value:
            return run_id
        if phase == Phase.FAILED.value:
            raise RuntimeError(f"run {run_id} failed: {status['failure']}")
        window = status["current_window"]
        if phase == Phase.AWAITING_PREDICTION.value:
            pending = engine.get_unlabeled_data(run_id)
            predictions = model.predict(pending)
            engine.submit_prediction(
                PredictionSubmission(run_id=run_id, window_index=window, predictions=predictions)
            )
        elif phase == Phase.PREDICTION_RECEIVED.value:
            ground_truth, remaining = engine.get_results(run_id)
            model.fit(_release_batch(pending, ground_truth, remaining))
            if on_window_done is not None:
                on_window_done(window + 1, total)
        else:
            raise RuntimeError(f"unexpected phase {phase}")
