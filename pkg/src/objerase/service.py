"""HTTP job service: submit removal jobs, poll, fetch results and curves.

Routes (all under /v1):
    POST   /v1/jobs            multipart image + mask (+ config JSON field)
    GET    /v1/jobs/{id}       status document
    GET    /v1/jobs/{id}/result  result PNG (409 until done)
    GET    /v1/jobs/{id}/curves  presence log as JSONL (409 until done)
    DELETE /v1/jobs/{id}       cancel a queued job

Jobs persist under the data directory (flag or OBJERASE_DATA_DIR) and are
re-queued on restart.
"""

from __future__ import annotations

import os
from contextlib import asynccontextmanager
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, File, Form, Response, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse

from .errors import ConfigError, InvalidInputError
from .jobs import DONE, JobStore, JobWorker, UnknownJobError
from .latent import RemovalConfig

DATA_DIR_ENV = "OBJERASE_DATA_DIR"
DEFAULT_DATA_DIR = "objerase-data"


def resolve_data_dir(explicit: Optional[str] = None) -> Path:
    return Path(explicit or os.environ.get(DATA_DIR_ENV) or DEFAULT_DATA_DIR)


def create_app(data_dir: Optional[str | Path] = None) -> FastAPI:
    store = JobStore(resolve_data_dir(str(data_dir) if data_dir else None))
    worker = JobWorker(store)

    @asynccontextmanager
    async def lifespan(_: FastAPI):
        worker.start()
        try:
            yield
        finally:
            worker.stop()

    app = FastAPI(title="objerase", lifespan=lifespan)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.store = store
    app.state.worker = worker

    def _status_or_404(job_id: str):
        try:
            return store.status(job_id)
        except UnknownJobError:
            return None

    @app.post("/v1/jobs", status_code=201)
    async def submit_job(
        image: UploadFile = File(...),
        mask: UploadFile = File(...),
        config: str = Form(default=""),
    ):
        try:
            cfg = RemovalConfig.from_json(config) if config.strip() else RemovalConfig()
            job_id = store.create(await image.read(), await mask.read(), cfg)
        except (InvalidInputError, ConfigError) as exc:
            return JSONResponse(status_code=422, content={"detail": str(exc)})
        worker.submit(job_id)
        return {"job_id": job_id}

    @app.get("/v1/jobs/{job_id}")
    async def job_status(job_id: str):
        payload = _status_or_404(job_id)
        if payload is None:
            return JSONResponse(status_code=404, content={"detail": "unknown job"})
        return payload

    @app.get("/v1/jobs/{job_id}/result")
    async def job_result(job_id: str):
        payload = _status_or_404(job_id)
        if payload is None:
            return JSONResponse(status_code=404, content={"detail": "unknown job"})
        if payload["status"] != DONE:
            return JSONResponse(
                status_code=409,
                content={"detail": f"job is {payload['status']}, result not available"},
            )
        return Response(content=store.result_bytes(job_id), media_type="image/png")

    @app.get("/v1/jobs/{job_id}/curves")
    async def job_curves(job_id: str):
        payload = _status_or_404(job_id)
        if payload is None:
            return JSONResponse(status_code=404, content={"detail": "unknown job"})
        if payload["status"] != DONE:
            return JSONResponse(
                status_code=409,
                content={"detail": f"job is {payload['status']}, curves not available"},
            )
        return PlainTextResponse(store.curves_text(job_id), media_type="application/x-ndjson")

    @app.delete("/v1/jobs/{job_id}")
    async def cancel_job(job_id: str):
        payload = _status_or_404(job_id)
        if payload is None:
            return JSONResponse(status_code=404, content={"detail": "unknown job"})
        if not store.cancel(job_id):
            return JSONResponse(
                status_code=409,
                content={"detail": f"job is {payload['status']}, only queued jobs cancel"},
            )
        return {"job_id": job_id, "status": "cancelled"}

    return app
