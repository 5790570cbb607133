"""On-disk removal jobs and the FIFO worker that executes them.

Each job owns a directory ``<data>/<job_id>/`` holding the exact input bytes,
the config, a status file and, once finished, the result image and curve log.
``status.json`` is always written via temp-file-and-rename, so readers and
restarts only ever see complete states.
"""

from __future__ import annotations

import json
import os
import queue
import threading
import time
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .backend import create_backend
from .errors import InvalidInputError, ObjEraseError
from .images import decode_image, decode_mask, encode_png
from .latent import RemovalConfig
from .pipeline import run_removal

INPUT_NAME = "input.png"
MASK_NAME = "mask.png"
CONFIG_NAME = "config.json"
STATUS_NAME = "status.json"
RESULT_NAME = "result.png"
CURVES_NAME = "curves.jsonl"

QUEUED = "queued"
RUNNING = "running"
DONE = "done"
FAILED = "failed"


class UnknownJobError(KeyError):
    pass


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


@dataclass
class JobStore:
    """Directory-backed job records; safe for one writer per job."""

    data_dir: Path

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def job_dir(self, job_id: str) -> Path:
        return self.data_dir / job_id

    def create(self, image_bytes: bytes, mask_bytes: bytes, config: RemovalConfig) -> str:
        """Validate and persist a new queued job, returning its id."""
        image = decode_image(image_bytes)
        mask = decode_mask(mask_bytes)
        if mask.shape != image.shape[:2]:
            raise InvalidInputError(
                f"mask {mask.shape} does not match image {image.shape[:2]}"
            )
        job_id = uuid.uuid4().hex
        d = self.job_dir(job_id)
        d.mkdir(parents=True)
        (d / INPUT_NAME).write_bytes(image_bytes)
        (d / MASK_NAME).write_bytes(mask_bytes)
        (d / CONFIG_NAME).write_text(config.to_json())
        self._write_status(
            job_id,
            {
                "job_id": job_id,
                "status": QUEUED,
                "config": config.to_dict(),
                "error": None,
                "timing": {"queued_at": time.time(), "started_at": None, "finished_at": None},
                "result": None,
                "curves": None,
            },
        )
        return job_id

    def _write_status(self, job_id: str, payload: dict) -> None:
        _atomic_write(self.job_dir(job_id) / STATUS_NAME, json.dumps(payload, indent=2).encode())

    def status(self, job_id: str) -> dict:
        path = self.job_dir(job_id) / STATUS_NAME
        if not path.is_file():
            raise UnknownJobError(job_id)
        return json.loads(path.read_text())

    def _transition(self, job_id: str, updates: dict) -> dict:
        with self._lock:
            payload = self.status(job_id)
            payload.update(updates)
            self._write_status(job_id, payload)
            return payload

    def mark_running(self, job_id: str) -> bool:
        """Move queued -> running; False if the job is no longer queued."""
        with self._lock:
            payload = self.status(job_id)
            if payload["status"] != QUEUED:
                return False
            payload["status"] = RUNNING
            payload["timing"]["started_at"] = time.time()
            self._write_status(job_id, payload)
            return True

    def mark_done(self, job_id: str, result_png: bytes, curves_jsonl: str) -> None:
        d = self.job_dir(job_id)
        _atomic_write(d / RESULT_NAME, result_png)
        _atomic_write(d / CURVES_NAME, curves_jsonl.encode())
        payload = self.status(job_id)
        finished = time.time()
        started = payload["timing"].get("started_at") or finished
        self._transition(
            job_id,
            {
                "status": DONE,
                "result": RESULT_NAME,
                "curves": CURVES_NAME,
                "timing": {**payload["timing"], "finished_at": finished, "duration_s": finished - started},
            },
        )

    def mark_failed(self, job_id: str, error: str) -> None:
        payload = self.status(job_id)
        self._transition(
            job_id,
            {
                "status": FAILED,
                "error": error,
                "timing": {**payload["timing"], "finished_at": time.time()},
            },
        )

    def cancel(self, job_id: str) -> bool:
        """Cancel a queued job; False if it already left the queue."""
        with self._lock:
            payload = self.status(job_id)
            if payload["status"] != QUEUED:
                return False
            payload["status"] = FAILED
            payload["error"] = "cancelled before execution"
            payload["timing"]["finished_at"] = time.time()
            self._write_status(job_id, payload)
            return True

    def result_bytes(self, job_id: str) -> bytes:
        return (self.job_dir(job_id) / RESULT_NAME).read_bytes()

    def curves_text(self, job_id: str) -> str:
        return (self.job_dir(job_id) / CURVES_NAME).read_text()

    def load_inputs(self, job_id: str) -> tuple[bytes, bytes, RemovalConfig]:
        d = self.job_dir(job_id)
        config = RemovalConfig.from_json((d / CONFIG_NAME).read_text())
        return (d / INPUT_NAME).read_bytes(), (d / MASK_NAME).read_bytes(), config

    def recover(self) -> list[str]:
        """Re-queue persisted queued jobs after a restart, oldest first.

        Jobs caught mid-run by the previous process are marked failed: their
        partial outputs are untrusted and the status machine has no
        running -> queued edge.
        """
        queued: list[tuple[float, str]] = []
        for entry in sorted(self.data_dir.iterdir()):
            if not (entry / STATUS_NAME).is_file():
                continue
            payload = json.loads((entry / STATUS_NAME).read_text())
            job_id = payload["job_id"]
            if payload["status"] == QUEUED:
                queued.append((payload["timing"].get("queued_at") or 0.0, job_id))
            elif payload["status"] == RUNNING:
                self.mark_failed(job_id, "interrupted by service restart")
        queued.sort()
        return [job_id for _, job_id in queued]


def execute_job(store: JobStore, job_id: str) -> None:
    """Run one job to completion, recording done/failed state on disk."""
    image_bytes, mask_bytes, config = store.load_inputs(job_id)
    image = decode_image(image_bytes)
    mask = decode_mask(mask_bytes)
    backend = create_backend(
        config.backend, steps=config.steps, seed=config.seed, image_shape=image.shape
    )
    result = run_removal(image, mask, config, backend, job_id=job_id)
    store.mark_done(job_id, encode_png(result.image), result.curves_jsonl())


class JobWorker:
    """Single background thread draining the FIFO queue.

    Each execution builds a fresh backend instance, so concurrent workers
    (if ever configured) never share one.
    """

    def __init__(self, store: JobStore):
        self.store = store
        self._queue: queue.Queue[str] = queue.Queue()
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self._pending = 0
        self._pending_lock = threading.Lock()

    def submit(self, job_id: str) -> None:
        with self._pending_lock:
            self._pending += 1
        self._queue.put(job_id)

    def start(self) -> None:
        for job_id in self.store.recover():
            self.submit(job_id)
        self._thread = threading.Thread(target=self._loop, name="objerase-worker", daemon=True)
        self._thread.start()

    def stop(self, timeout: float = 10.0) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout)

    def _loop(self) -> None:
        while not self._stop.is_set():
            try:
                job_id = self._queue.get(timeout=0.1)
            except queue.Empty:
                continue
            try:
                if self.store.mark_running(job_id):
                    execute_job(self.store, job_id)
            except (ObjEraseError, OSError, ValueError) as exc:
                self.store.mark_failed(job_id, f"{type(exc).__name__}: {exc}")
            finally:
                with self._pending_lock:
                    self._pending -= 1

    def wait_idle(self, timeout: float = 30.0) -> bool:
        """Test helper: block until all submitted jobs finished or timeout."""
        deadline = time.time() + timeout
        while time.time() < deadline:
            with self._pending_lock:
                if self._pending == 0:
                    return True
            time.sleep(0.02)
        return False
