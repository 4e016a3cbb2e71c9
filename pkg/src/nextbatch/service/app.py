"""HTTP facade over the evaluation engine.

One process serves many runs. Engines are cached per (dataset, config) pair
and every run mutation is journaled through the storage layer, so a restart
replays the event logs and resumes where it stopped. Background jobs drive
built-in models through the same engine the HTTP handlers use.
"""

from __future__ import annotations

import io
import json
import os
import threading
import time
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import Depends, FastAPI, File, Form, Request, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse, Response
from pydantic import BaseModel

from ..algorithms import available_models
from ..errors import (
    ConfigMissing,
    CorruptLog,
    HarnessError,
    NoEvaluableWindows,
    OutOfOrder,
    StaleWindow,
    UnknownRequestId,
    UnknownRun,
)
from ..interactions import DatasetDescriptor, ingest
from ..protocol import EvaluationEngine, PredictionSubmission
from ..splitting import SplitConfig
from .jobs import JobManager
from .storage import DataRoot, RunEventSink

_STATUS_BY_CODE = {
    OutOfOrder.code: 409,
    StaleWindow.code: 409,
    NoEvaluableWindows.code: 409,
    UnknownRun.code: 404,
    UnknownRequestId.code: 404,
    CorruptLog.code: 500,
}


class RunCreate(BaseModel):
    dataset_id: str
    config_id: str
    metadata: dict = {}


class PredictionsBody(BaseModel):
    window_index: int
    predictions: dict[str, list[str]]


class JobCreate(BaseModel):
    dataset_id: str
    config_id: str
    model: str
    params: dict = {}


@dataclass
class Settings:
    host: str = "127.0.0.1"
    port: int = 8321
    data_dir: str = "./nextbatch-data"
    auth_token: str | None = None
    job_concurrency: int = 4
    studio_dir: str | None = None

    @classmethod
    def from_env(cls) -> "Settings":
        env = os.environ
        return cls(
            host=env.get("NEXTBATCH_HOST", cls.host),
            port=int(env.get("NEXTBATCH_PORT", cls.port)),
            data_dir=env.get("NEXTBATCH_DATA_DIR", cls.data_dir),
            auth_token=env.get("NEXTBATCH_AUTH_TOKEN") or None,
            job_concurrency=int(env.get("NEXTBATCH_JOB_CONCURRENCY", cls.job_concurrency)),
            studio_dir=env.get("NEXTBATCH_STUDIO_DIR") or None,
        )


@dataclass
class _State:
    root: DataRoot
    jobs: JobManager = None  # type: ignore[assignment]
    engines: dict[tuple[str, str], EvaluationEngine] = field(default_factory=dict)
    run_index: dict[str, tuple[str, str]] = field(default_factory=dict)
    orphans: dict[str, dict] = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def engine_for(self, dataset_id: str, config_id: str) -> EvaluationEngine:
        key = (dataset_id, config_id)
        with self.lock:
            engine = self.engines.get(key)
        if engine is not None:
            return engine
        # Built outside the lock: loading a large dataset should not stall
        # unrelated requests. A racing duplicate build is harmless; first
        # one registered wins.
        log = self.root.load_dataset(dataset_id)
        config = self.root.load_config(config_id)
        engine = EvaluationEngine(log, config, sink=RunEventSink(self.root))
        with self.lock:
            return self.engines.setdefault(key, engine)

    def engine_for_run(self, run_id: str) -> EvaluationEngine:
        with self.lock:
            key = self.run_index.get(run_id)
        if key is None:
            # Runs registered by a job worker only wrote their binding to
            # disk; pick it up lazily.
            try:
                binding = self.root.run_binding(run_id)
            except FileNotFoundError:
                raise UnknownRun(f"no run {run_id}") from None
            key = (binding["dataset_id"], binding["config_id"])
            self.track_run(run_id, *key)
        return self.engine_for(*key)

    def track_run(self, run_id: str, dataset_id: str, config_id: str) -> None:
        with self.lock:
            self.run_index[run_id] = (dataset_id, config_id)


def _recover(state: _State) -> None:
    """Replay every persisted run into a rebuilt engine."""
    for run_id in state.root.list_run_ids():
        binding = state.root.run_binding(run_id)
        dataset_id, config_id = binding["dataset_id"], binding["config_id"]
        if not (state.root.has_dataset(dataset_id) and state.root.has_config(config_id)):
            state.orphans[run_id] = {
                "run_id": run_id,
                "metadata": {},
                "phase": "FAILED",
                "current_window": None,
                "n_windows": None,
                "failure": "dataset or config no longer present",
                "dataset_id": dataset_id,
                "config_id": config_id,
            }
            continue
        engine = state.engine_for(dataset_id, config_id)
        try:
            events = state.root.read_events(run_id)
            engine.recover_run(events)
        except CorruptLog as exc:
            engine.mark_failed(run_id, None, str(exc))
        state.track_run(run_id, dataset_id, config_id)


def create_app(settings: Settings | None = None) -> FastAPI:
    settings = settings or Settings.from_env()
    state = _State(root=DataRoot(settings.data_dir))
    state.jobs = JobManager(
        state.root, state.engine_for, concurrency=settings.job_concurrency
    )

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        _recover(state)
        # Interrupted jobs restart only after recovery so their runs are
        # already rebuilt when a worker touches them.
        state.jobs.resume_pending()
        yield
        state.jobs.shutdown()

    app = FastAPI(title="nextbatch service", version="1", lifespan=lifespan)
    app.state.ctx = state
    app.state.settings = settings

    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(HarnessError)
    async def harness_error(_request: Request, exc: HarnessError):
        status = _STATUS_BY_CODE.get(exc.code, 422)
        return JSONResponse(
            status_code=status, content={"error": exc.code, "detail": str(exc)}
        )

    @app.exception_handler(RequestValidationError)
    async def validation_error(_request: Request, exc: RequestValidationError):
        errors = exc.errors()
        malformed = any(str(e.get("type", "")).startswith("json_invalid") for e in errors)
        status = 400 if malformed else 422
        code = "MalformedRequest" if malformed else "ValidationError"
        detail = [
            {"loc": [str(p) for p in e.get("loc", ())], "msg": e.get("msg", "")}
            for e in errors
        ]
        return JSONResponse(status_code=status, content={"error": code, "detail": detail})

    async def require_write(request: Request):
        token = settings.auth_token
        if not token:
            return
        supplied = request.headers.get("authorization", "")
        if supplied != f"Bearer {token}":
            raise _Unauthorized()

    write = [Depends(require_write)]

    # ---- health ----

    @app.get("/v1/health")
    async def health():
        return {"status": "ok", "time": int(time.time())}

    @app.get("/v1/models")
    async def models():
        return {"models": available_models()}

    # ---- datasets ----

    @app.post("/v1/datasets", dependencies=write)
    async def create_dataset(
        file: UploadFile = File(...),
        name: str = Form(""),
        mapping: str = Form('{"user": 0, "item": 1, "timestamp": 2}'),
        delimiter: str = Form(","),
        header: bool = Form(False),
    ):
        try:
            columns = json.loads(mapping)
        except json.JSONDecodeError as exc:
            return JSONResponse(
                status_code=422,
                content={"error": "InvalidDescriptor", "detail": f"mapping is not JSON: {exc}"},
            )
        descriptor = DatasetDescriptor(
            name=name or (file.filename or "upload"),
            source_uri=file.filename or "upload",
            column_mapping=columns,
            delimiter=delimiter,
            header=header,
        )
        body = (await file.read()).decode("utf-8", errors="replace")
        result = ingest(descriptor, io.StringIO(body))
        span = result.log.span
        stats = {
            "n_interactions": result.n_accepted,
            "n_rejected": result.n_rejected,
            "n_users": len(result.log.user_ids),
            "n_items": len(result.log.item_ids),
            "t_min": span[0] if span else None,
            "t_max": span[1] if span else None,
        }
        dataset_id = state.root.save_dataset(descriptor.name, result.log, stats)
        return {
            "dataset_id": dataset_id,
            "name": descriptor.name,
            **stats,
            "rejections": [
                {"line_number": r.line_number, "reason": r.reason}
                for r in result.rejections
            ],
        }

    @app.get("/v1/datasets")
    async def list_datasets():
        return {"datasets": state.root.list_datasets()}

    @app.get("/v1/datasets/{dataset_id}")
    async def get_dataset(dataset_id: str):
        if not state.root.has_dataset(dataset_id):
            raise _NotFound(f"no dataset {dataset_id}")
        return state.root.dataset_meta(dataset_id)

    @app.delete("/v1/datasets/{dataset_id}", dependencies=write)
    async def delete_dataset(dataset_id: str):
        if not state.root.has_dataset(dataset_id):
            raise _NotFound(f"no dataset {dataset_id}")
        state.root.delete_dataset(dataset_id)
        return Response(status_code=204)

    # ---- configs ----

    @app.post("/v1/configs", dependencies=write)
    async def create_config(body: dict):
        config = SplitConfig.from_flat_dict(body)
        config_id = state.root.save_config(config)
        return {"config_id": config_id, **config.to_flat_dict()}

    @app.get("/v1/configs")
    async def list_configs():
        return {"configs": state.root.list_configs()}

    @app.get("/v1/configs/{config_id}")
    async def get_config(config_id: str):
        if not state.root.has_config(config_id):
            raise _NotFound(f"no config {config_id}")
        return state.root.config_meta(config_id)

    @app.delete("/v1/configs/{config_id}", dependencies=write)
    async def delete_config(config_id: str):
        if not state.root.has_config(config_id):
            raise _NotFound(f"no config {config_id}")
        state.root.delete_config(config_id)
        return Response(status_code=204)

    # ---- runs ----

    def _require_refs(dataset_id: str, config_id: str) -> None:
        if not state.root.has_dataset(dataset_id):
            raise ConfigMissing(f"no dataset {dataset_id}")
        if not state.root.has_config(config_id):
            raise ConfigMissing(f"no config {config_id}")

    @app.post("/v1/runs", dependencies=write)
    async def create_run(body: RunCreate):
        _require_refs(body.dataset_id, body.config_id)
        engine = state.engine_for(body.dataset_id, body.config_id)
        run_id = engine.register_model(body.metadata)
        state.root.save_run_binding(run_id, body.dataset_id, body.config_id)
        state.track_run(run_id, body.dataset_id, body.config_id)
        status = engine.run_status(run_id)
        return {**status, "dataset_id": body.dataset_id, "config_id": body.config_id}

    @app.get("/v1/runs")
    async def list_runs():
        rows = []
        for run_id in state.root.list_run_ids():
            with state.lock:
                known = run_id in state.run_index or run_id in state.orphans
            if not known:
                state.engine_for_run(run_id)
        with state.lock:
            index = dict(state.run_index)
            orphans = list(state.orphans.values())
        for run_id, (dataset_id, config_id) in sorted(index.items()):
            engine = state.engine_for(dataset_id, config_id)
            rows.append(
                {
                    **engine.run_status(run_id),
                    "dataset_id": dataset_id,
                    "config_id": config_id,
                }
            )
        rows.extend(sorted(orphans, key=lambda r: r["run_id"]))
        return {"runs": rows}

    @app.get("/v1/runs/{run_id}")
    async def get_run(run_id: str):
        with state.lock:
            orphan = state.orphans.get(run_id)
        if orphan:
            return orphan
        engine = state.engine_for_run(run_id)
        dataset_id, config_id = state.run_index[run_id]
        return {
            **engine.run_status(run_id),
            "dataset_id": dataset_id,
            "config_id": config_id,
        }

    @app.get("/v1/runs/{run_id}/training-data")
    async def training_data(run_id: str):
        engine = state.engine_for_run(run_id)
        log = engine.get_training_data(run_id)
        return PlainTextResponse(log.to_csv_text(), media_type="text/csv")

    @app.get("/v1/runs/{run_id}/unlabeled")
    async def unlabeled(run_id: str):
        engine = state.engine_for_run(run_id)
        requests = engine.get_unlabeled_data(run_id)
        window_index = requests[0].window_index if requests else engine.run_status(run_id)["current_window"]
        return {
            "run_id": run_id,
            "window_index": window_index,
            "requests": [
                {
                    "request_id": r.request_id,
                    "user_id": r.user_id,
                    "item_id": "-1",
                    "timestamp": r.timestamp,
                    "window_index": r.window_index,
                }
                for r in requests
            ],
        }

    @app.post("/v1/runs/{run_id}/predictions", dependencies=write)
    async def predictions(run_id: str, body: PredictionsBody):
        engine = state.engine_for_run(run_id)
        submission = PredictionSubmission(
            run_id=run_id,
            window_index=body.window_index,
            predictions=body.predictions,
        )
        provisional = engine.submit_prediction(submission)
        return {"run_id": run_id, "provisional": provisional.to_json_dict()}

    @app.get("/v1/runs/{run_id}/results")
    async def results(run_id: str):
        engine = state.engine_for_run(run_id)
        window_index = engine.run_status(run_id)["current_window"]
        ground_truth, remaining = engine.get_results(run_id)
        return {
            "run_id": run_id,
            "window_index": window_index,
            "ground_truth": ground_truth,
            "remaining": [
                {"user_id": r.user_id, "item_id": r.item_id, "timestamp": r.timestamp}
                for r in remaining.records
            ],
        }

    @app.get("/v1/runs/{run_id}/report")
    async def report(run_id: str, partial: bool = False, format: str = "json"):
        engine = state.engine_for_run(run_id)
        doc = engine.get_report(run_id, partial=partial)
        if format == "csv":
            return PlainTextResponse(doc.to_csv(), media_type="text/csv")
        return JSONResponse(content=doc.to_json_dict())

    # ---- jobs ----

    @app.post("/v1/jobs", dependencies=write)
    async def create_job(body: JobCreate):
        _require_refs(body.dataset_id, body.config_id)
        if body.model not in available_models():
            return JSONResponse(
                status_code=422,
                content={
                    "error": "InvalidConfig",
                    "detail": f"unknown model {body.model!r}; available: {available_models()}",
                },
            )
        record = state.jobs.submit(body.dataset_id, body.config_id, body.model, body.params)
        return record

    @app.get("/v1/jobs")
    async def list_jobs():
        return {"jobs": state.root.list_jobs()}

    @app.get("/v1/jobs/{job_id}")
    async def get_job(job_id: str):
        if not state.root.has_job(job_id):
            raise _NotFound(f"no job {job_id}")
        return state.root.load_job(job_id)

    _mount_studio(app, settings)
    return app


class _NotFound(HarnessError):
    code = "NotFound"


class _Unauthorized(HarnessError):
    code = "Unauthorized"


_STATUS_BY_CODE[_NotFound.code] = 404
_STATUS_BY_CODE[_Unauthorized.code] = 401


def _mount_studio(app: FastAPI, settings: Settings) -> None:
    if not settings.studio_dir:
        return
    directory = Path(settings.studio_dir)
    if not directory.is_dir():
        return
    from fastapi.staticfiles import StaticFiles

    app.mount("/studio", StaticFiles(directory=directory, html=True), name="studio")
