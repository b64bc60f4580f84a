"""HTTP/JSON surface over the screening service."""

from __future__ import annotations

import json

from fastapi import (BackgroundTasks, FastAPI, File, Form, HTTPException,
                     Response, UploadFile)
from pydantic import BaseModel

from ..classifier import ClassifierError
from ..phantom import PhantomError
from .core import (DuplicateCaseError, ScreeningService, ServiceError,
                   StateError, UnknownCaseError, UnknownExtractionError,
                   UnknownJobError, evaluate_cohort, load_cohort_dir)


class AdjudicationRequest(BaseModel):
    decision: str
    reviewer: str
    note: str = ""


def _http_error(exc: Exception) -> HTTPException:
    if isinstance(exc, (UnknownJobError, UnknownCaseError, UnknownExtractionError)):
        return HTTPException(status_code=404, detail=str(exc))
    if isinstance(exc, (DuplicateCaseError, StateError)):
        return HTTPException(status_code=409, detail=str(exc))
    return HTTPException(status_code=400, detail=str(exc))


def create_app(service: ScreeningService) -> FastAPI:
    app = FastAPI(title="coroscreen service")
    app.state.service = service

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/studies")
    async def ingest(background: BackgroundTasks,
                     header: UploadFile = File(...),
                     volume: UploadFile = File(...),
                     phase_pct: float = Form(...)):
        try:
            head = json.loads((await header.read()).decode())
            raw = await volume.read()
            job_id = service.ingest_study(head, raw, phase_pct)
        except (ServiceError, PhantomError, ValueError, KeyError) as exc:
            raise _http_error(exc)
        if service.get_job(job_id)["state"] == "Queued":
            background.add_task(service.run_pipeline, job_id)
        return {"job_id": job_id}

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        try:
            return service.get_job(job_id)
        except ServiceError as exc:
            raise _http_error(exc)

    @app.post("/jobs/{job_id}/process")
    def process_job(job_id: str):
        try:
            service.run_pipeline(job_id)
            return service.get_job(job_id)
        except (ServiceError, ClassifierError) as exc:
            raise _http_error(exc)

    @app.get("/cases")
    def cases():
        return service.worklist()

    @app.get("/cases/{case_id}/result")
    def case_result(case_id: str):
        try:
            return service.get_result(case_id)
        except ServiceError as exc:
            raise _http_error(exc)

    @app.get("/cases/{case_id}/mpv/{extraction_id}")
    def case_mpv(case_id: str, extraction_id: str, part: str = "image"):
        try:
            png, meta = service.get_mpv(case_id, extraction_id)
        except ServiceError as exc:
            raise _http_error(exc)
        if part == "meta":
            return meta
        return Response(content=png, media_type="image/png")

    @app.post("/cases/{case_id}/adjudication")
    def adjudicate(case_id: str, body: AdjudicationRequest):
        try:
            return service.adjudicate(case_id, body.decision, body.reviewer,
                                      body.note)
        except ServiceError as exc:
            raise _http_error(exc)

    @app.get("/cases/{case_id}/adjudication")
    def case_adjudication(case_id: str):
        try:
            history = service.adjudication_history(case_id)
        except ServiceError as exc:
            raise _http_error(exc)
        return {"case_id": case_id,
                "latest": history[-1] if history else None,
                "history": history}

    @app.get("/metrics/cohort")
    def cohort_metrics(set: str):
        if service.model is None:
            raise HTTPException(status_code=409, detail="no model configured")
        try:
            records = load_cohort_dir(set)
        except ServiceError as exc:
            raise _http_error(exc)
        return evaluate_cohort(records, service.model, service.threshold)

    return app
