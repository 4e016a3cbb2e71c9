"""Background execution of full evaluation loops over built-in models.

Submission only writes a QUEUED record and hands the job to a bounded thread
pool, so the API call returns before any window is touched. Workers publish
progress by rewriting the job record atomically after each window. On startup
any QUEUED or RUNNING record from a previous process is re-enqueued; a job
that already registered its run resumes from the persisted event log instead
of starting over.
"""

from __future__ import annotations

import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

from ..protocol import EvaluationEngine
from ..runner import run_model
from .storage import DataRoot

QUEUED = "QUEUED"
RUNNING = "RUNNING"
COMPLETED = "COMPLETED"
FAILED = "FAILED"


class JobManager:
    """FIFO thread-pool runner for evaluation jobs, persisted via DataRoot."""

    def __init__(
        self,
        root: DataRoot,
        engine_for: Callable[[str, str], EvaluationEngine],
        concurrency: int = 4,
    ):
        self.root = root
        self.engine_for = engine_for
        self._pool = ThreadPoolExecutor(
            max_workers=max(1, concurrency), thread_name_prefix="eval-job"
        )
        self._lock = threading.Lock()

    def submit(
        self, dataset_id: str, config_id: str, model: str, params: dict
    ) -> dict:
        record = {
            "job_id": uuid.uuid4().hex[:12],
            "run_id": None,
            "dataset_id": dataset_id,
            "config_id": config_id,
            "model": model,
            "params": params,
            "status": QUEUED,
            "progress": {"completed": 0, "total": None},
            "error": None,
            "created_at": time.time(),
            "started_at": None,
            "finished_at": None,
        }
        self.root.save_job(record)
        self._pool.submit(self._run_job, record["job_id"])
        return record

    def resume_pending(self) -> list[str]:
        """Re-enqueue jobs that a previous process left unfinished."""
        resumed = []
        for record in self.root.list_jobs():
            if record["status"] in (QUEUED, RUNNING):
                record["status"] = QUEUED
                self.root.save_job(record)
                self._pool.submit(self._run_job, record["job_id"])
                resumed.append(record["job_id"])
        return resumed

    def shutdown(self) -> None:
        self._pool.shutdown(wait=True)

    def _save(self, record: dict) -> None:
        with self._lock:
            self.root.save_job(record)

    def _run_job(self, job_id: str) -> None:
        record = self.root.load_job(job_id)
        record["status"] = RUNNING
        record["started_at"] = time.time()
        self._save(record)
        try:
            engine = self.engine_for(record["dataset_id"], record["config_id"])
            record["progress"]["total"] = len(engine.windows)
            if record["run_id"] is None:
                run_id = engine.register_model(
                    {"name": record["model"], "params": record["params"]}
                )
                self.root.save_run_binding(
                    run_id, record["dataset_id"], record["config_id"]
                )
                record["run_id"] = run_id
            self._save(record)

            def on_window_done(done: int, total: int) -> None:
                record["progress"] = {"completed": done, "total": total}
                self._save(record)

            run_model(
                engine,
                record["model"],
                record["params"],
                resume_run_id=record["run_id"],
                on_window_done=on_window_done,
            )
            record["status"] = COMPLETED
        except Exception as exc:
            record["status"] = FAILED
            record["error"] = f"{type(exc).__name__}: {exc}"
        record["finished_at"] = time.time()
        self._save(record)
