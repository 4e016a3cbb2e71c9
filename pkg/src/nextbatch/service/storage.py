"""Single-directory persistence: datasets, configs, run event logs, job records.

Everything lives under one data directory as flat files. Run history is an
append-only JSON-lines log per run; replaying it through the engine rebuilds
the run exactly, which is the whole crash-recovery story. Job and metadata
documents are replaced atomically so a crash never leaves half a record.
"""

from __future__ import annotations

import json
import os
import uuid
from pathlib import Path

from ..errors import CorruptLog
from ..interactions import InteractionLog
from ..splitting import SplitConfig


def _new_id() -> str:
    return uuid.uuid4().hex[:12]


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _read_json(path: Path) -> dict:
    return json.loads(path.read_text(encoding="utf-8"))


class DataRoot:
    """Owns the on-disk layout under one root directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        for sub in ("datasets", "configs", "runs", "jobs"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)

    # ---- datasets ----

    def _dataset_csv(self, dataset_id: str) -> Path:
        return self.root / "datasets" / f"{dataset_id}.csv"

    def _dataset_meta(self, dataset_id: str) -> Path:
        return self.root / "datasets" / f"{dataset_id}.json"

    def save_dataset(self, name: str, log: InteractionLog, stats: dict) -> str:
        dataset_id = _new_id()
        self._dataset_csv(dataset_id).write_text(log.to_csv_text(), encoding="utf-8")
        meta = {"dataset_id": dataset_id, "name": name, **stats}
        _atomic_write(self._dataset_meta(dataset_id), json.dumps(meta, indent=2))
        return dataset_id

    def has_dataset(self, dataset_id: str) -> bool:
        return self._dataset_meta(dataset_id).exists()

    def dataset_meta(self, dataset_id: str) -> dict:
        return _read_json(self._dataset_meta(dataset_id))

    def load_dataset(self, dataset_id: str) -> InteractionLog:
        with open(self._dataset_csv(dataset_id), encoding="utf-8") as fh:
            return InteractionLog.from_csv(fh)

    def list_datasets(self) -> list[dict]:
        metas = [_read_json(p) for p in sorted((self.root / "datasets").glob("*.json"))]
        return sorted(metas, key=lambda m: m["dataset_id"])

    def delete_dataset(self, dataset_id: str) -> None:
        self._dataset_csv(dataset_id).unlink(missing_ok=True)
        self._dataset_meta(dataset_id).unlink(missing_ok=True)

    # ---- configs ----

    def _config_path(self, config_id: str) -> Path:
        return self.root / "configs" / f"{config_id}.json"

    def save_config(self, config: SplitConfig) -> str:
        config_id = _new_id()
        doc = {"config_id": config_id, **config.to_flat_dict()}
        _atomic_write(self._config_path(config_id), json.dumps(doc, indent=2))
        return config_id

    def has_config(self, config_id: str) -> bool:
        return self._config_path(config_id).exists()

    def config_meta(self, config_id: str) -> dict:
        return _read_json(self._config_path(config_id))

    def load_config(self, config_id: str) -> SplitConfig:
        doc = self.config_meta(config_id)
        doc.pop("config_id", None)
        return SplitConfig.from_flat_dict(doc)

    def list_configs(self) -> list[dict]:
        metas = [_read_json(p) for p in sorted((self.root / "configs").glob("*.json"))]
        return sorted(metas, key=lambda m: m["config_id"])

    def delete_config(self, config_id: str) -> None:
        self._config_path(config_id).unlink(missing_ok=True)

    # ---- runs ----

    def _run_events(self, run_id: str) -> Path:
        return self.root / "runs" / f"{run_id}.events.jsonl"

    def _run_binding(self, run_id: str) -> Path:
        return self.root / "runs" / f"{run_id}.meta.json"

    def save_run_binding(self, run_id: str, dataset_id: str, config_id: str) -> None:
        doc = {"run_id": run_id, "dataset_id": dataset_id, "config_id": config_id}
        _atomic_write(self._run_binding(run_id), json.dumps(doc, indent=2))

    def run_binding(self, run_id: str) -> dict:
        return _read_json(self._run_binding(run_id))

    def list_run_ids(self) -> list[str]:
        return sorted(
            p.name.removesuffix(".meta.json")
            for p in (self.root / "runs").glob("*.meta.json")
        )

    def append_event(self, run_id: str, event: dict) -> None:
        line = json.dumps(event, sort_keys=True)
        with open(self._run_events(run_id), "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def read_events(self, run_id: str) -> list[dict]:
        """Parse a run's event log; a truncated or garbled tail is CorruptLog."""
        path = self._run_events(run_id)
        if not path.exists():
            raise CorruptLog(f"missing event log for run {run_id}")
        events = []
        with open(path, encoding="utf-8", newline="") as fh:
            for raw in fh:
                if not raw.endswith("\n"):
                    raise CorruptLog(f"truncated final event in run {run_id}")
                try:
                    events.append(json.loads(raw))
                except json.JSONDecodeError as exc:
                    raise CorruptLog(f"garbled event in run {run_id}: {exc}") from exc
        if not events:
            raise CorruptLog(f"empty event log for run {run_id}")
        return events

    def delete_run(self, run_id: str) -> None:
        self._run_events(run_id).unlink(missing_ok=True)
        self._run_binding(run_id).unlink(missing_ok=True)

    # ---- jobs ----

    def _job_path(self, job_id: str) -> Path:
        return self.root / "jobs" / f"{job_id}.json"

    def save_job(self, record: dict) -> None:
        _atomic_write(self._job_path(record["job_id"]), json.dumps(record, indent=2))

    def load_job(self, job_id: str) -> dict:
        return _read_json(self._job_path(job_id))

    def has_job(self, job_id: str) -> bool:
        return self._job_path(job_id).exists()

    def list_jobs(self) -> list[dict]:
        records = [_read_json(p) for p in sorted((self.root / "jobs").glob("*.json"))]
        return sorted(records, key=lambda r: (r.get("created_at", 0), r["job_id"]))


class RunEventSink:
    """EventSink adapter writing through a DataRoot."""

    def __init__(self, root: DataRoot):
        self.root = root

    def append(self, run_id: str, event: dict) -> None:
        self.root.append_event(run_id, event)
