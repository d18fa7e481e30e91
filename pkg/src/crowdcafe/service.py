"""HTTP service: Kitchen endpoints for requestors, Cafe endpoints for workers.

Bodies use the canonical JSON forms from the model module.  Errors map to
4xx responses with machine-readable codes, e.g. {"error": "insufficient_funds"}.
State-mutating Cafe endpoints honor an Idempotency-Key header: a retried
request with the same key replays the original response.
"""

from __future__ import annotations

import csv
import io
import json
import os
import threading
from typing import Dict, Optional, Tuple

from fastapi import Depends, FastAPI, Header, Request, Response, UploadFile
from fastapi.responses import JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles

from . import ledger
from .engine import Platform
from .ingestion import FeedQuery
from .model import CrowdCafeError, Job, Unit
from .templates import load_template, render_template

__all__ = ["create_app"]

_STATUS_BY_CODE = {
    "already_credited": 409,
    "already_reserved": 409,
    "conflict": 409,
    "insufficient_funds": 402,
    "missing_answer_field": 400,
    "not_eligible": 403,
    "not_reserver": 403,
    "nothing_available": 404,
    "reservation_expired": 410,
    "sold_out": 409,
    "template_fetch_error": 502,
    "unknown_adapter": 400,
    "unknown_instance": 404,
    "unknown_job": 404,
}


class _Principal:
    def __init__(self, principal: str, role: str):
        self.id = principal
        self.role = role


def create_app(platform: Platform, static_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="crowdcafe")
    idempotency_cache: Dict[Tuple[str, str, str], Tuple[int, dict]] = {}
    cache_lock = threading.Lock()

    @app.exception_handler(CrowdCafeError)
    async def domain_error(request: Request, exc: CrowdCafeError):
        status = _STATUS_BY_CODE.get(exc.code, 400)
        return JSONResponse(status_code=status, content=exc.to_json())

    from fastapi import HTTPException

    @app.exception_handler(HTTPException)
    async def http_error(request: Request, exc: HTTPException):
        content = (
            exc.detail if isinstance(exc.detail, dict) else {"error": str(exc.detail)}
        )
        return JSONResponse(
            status_code=exc.status_code, content=content, headers=exc.headers
        )

    def authenticated(authorization: Optional[str] = Header(None)) -> _Principal:
        if not authorization or not authorization.startswith("Bearer "):
            raise _http_error(401, "unauthenticated")
        session = platform.authenticate(authorization[len("Bearer ") :])
        if session is None:
            raise _http_error(401, "unauthenticated")
        return _Principal(session["principal"], session["role"])

    def require(principal: _Principal, *roles: str) -> _Principal:
        if principal.role not in roles and principal.role != "admin":
            raise _http_error(403, "forbidden")
        return principal

    def replay_or_run(principal, request: Request, idempotency_key, handler):
        if not idempotency_key:
            return handler()
        cache_key = (principal.id, request.url.path, idempotency_key)
        with cache_lock:
            cached = idempotency_cache.get(cache_key)
        if cached is not None:
            status, body = cached
            return JSONResponse(status_code=status, content=body)
        result = handler()
        status, body = 200, result
        if isinstance(result, JSONResponse):
            status, body = result.status_code, json.loads(result.body)
        with cache_lock:
            idempotency_cache[cache_key] = (status, body)
        return result

    # -- health ------------------------------------------------------------

    @app.get("/healthz", response_class=PlainTextResponse)
    def healthz():
        return "ok"

    # -- kitchen -----------------------------------------------------------

    @app.post("/kitchen/jobs", status_code=201)
    def create_job(draft: dict, principal: _Principal = Depends(authenticated)):
        require(principal, "requestor")
        job = platform.create_job(draft, owner_id=principal.id)
        return job.to_json()

    @app.post("/kitchen/jobs/{job_id}/data")
    async def add_data(
        job_id: str,
        request: Request,
        principal: _Principal = Depends(authenticated),
    ):
        require(principal, "requestor")
        _require_owner(platform, job_id, principal)
        content_type = request.headers.get("content-type", "")
        if content_type.startswith("multipart/form-data"):
            form = await request.form()
            upload = form.get("file")
            if upload is None:
                raise _http_error(400, "missing_file")
            return platform.add_data(job_id, csv_bytes=await upload.read())
        body = await request.body()
        payload = json.loads(body) if body else {}
        if payload.get("feed"):
            return platform.add_data(
                job_id, feed_query=FeedQuery.from_json(payload["feed"])
            )
        return platform.add_data(job_id)  # survey: no input data

    @app.post("/kitchen/jobs/{job_id}/gold")
    def add_gold(
        job_id: str, gold: dict, principal: _Principal = Depends(authenticated)
    ):
        require(principal, "requestor")
        _require_owner(platform, job_id, principal)
        return {"count": platform.add_gold(job_id, gold)}

    @app.post("/kitchen/jobs/{job_id}/publish")
    def publish(job_id: str, principal: _Principal = Depends(authenticated)):
        require(principal, "requestor")
        _require_owner(platform, job_id, principal)
        return platform.publish(job_id).to_json()

    @app.get("/kitchen/jobs/{job_id}/results")
    def results(
        job_id: str,
        principal: _Principal = Depends(authenticated),
        accept: Optional[str] = Header(None),
    ):
        require(principal, "requestor")
        _require_owner(platform, job_id, principal)
        report = platform.results(job_id)
        if accept and "text/csv" in accept:
            return PlainTextResponse(_results_csv(report), media_type="text/csv")
        return report

    # -- cafe --------------------------------------------------------------

    @app.get("/cafe/categories")
    def categories(principal: _Principal = Depends(authenticated)):
        require(principal, "worker")
        return platform.categories(principal.id)

    @app.get("/cafe/jobs")
    def cafe_jobs(
        category: Optional[str] = None,
        limit: int = 50,
        offset: int = 0,
        principal: _Principal = Depends(authenticated),
    ):
        require(principal, "worker")
        jobs = platform.list_jobs(principal.id, category)
        return jobs[offset : offset + limit]

    @app.post("/cafe/jobs/{job_id}/claim")
    def claim(
        job_id: str,
        request: Request,
        principal: _Principal = Depends(authenticated),
        idempotency_key: Optional[str] = Header(None, alias="Idempotency-Key"),
    ):
        require(principal, "worker")

        def handler():
            instance, units = platform.claim(principal.id, job_id)
            job = platform.get_job(job_id)
            template = load_template(job.ui_template_ref)
            return {
                "instance": instance.to_json(),
                "units": [
                    {**unit, "rendered": render_template(template, unit["payload"])}
                    for unit in units
                ],
                "template": template,
                "answer_fields": list(job.answer_fields),
                "instructions": job.instructions,
            }

        return replay_or_run(principal, request, idempotency_key, handler)

    @app.post("/cafe/instances/{instance_id}/submit")
    def submit(
        instance_id: str,
        body: dict,
        request: Request,
        principal: _Principal = Depends(authenticated),
        idempotency_key: Optional[str] = Header(None, alias="Idempotency-Key"),
    ):
        require(principal, "worker")

        def handler():
            result = platform.submit(
                principal.id,
                instance_id,
                body.get("answers", {}),
                body.get("context", "unspecified"),
            )
            return {
                **result.to_json(),
                "balance": {
                    "cents": platform.balance(principal.id),
                    "currency": "EUR",
                },
            }

        return replay_or_run(principal, request, idempotency_key, handler)

    @app.get("/cafe/rewards")
    def rewards(
        limit: int = 50,
        offset: int = 0,
        principal: _Principal = Depends(authenticated),
    ):
        require(principal, "worker")
        return platform.rewards_catalog()[offset : offset + limit]

    @app.post("/cafe/rewards/{reward_id}/purchase")
    def purchase(
        reward_id: str,
        request: Request,
        principal: _Principal = Depends(authenticated),
        idempotency_key: Optional[str] = Header(None, alias="Idempotency-Key"),
    ):
        require(principal, "worker")

        def handler():
            coupon = platform.purchase(principal.id, reward_id)
            return {
                **coupon.to_json(),
                "balance": {
                    "cents": platform.balance(principal.id),
                    "currency": "EUR",
                },
            }

        return replay_or_run(principal, request, idempotency_key, handler)

    @app.get("/cafe/transactions")
    def transactions(
        limit: int = 50,
        offset: int = 0,
        principal: _Principal = Depends(authenticated),
    ):
        require(principal, "worker")
        entries = platform.transactions(principal.id)
        return {
            "balance": {"cents": platform.balance(principal.id), "currency": "EUR"},
            "transactions": [t.to_json() for t in entries[offset : offset + limit]],
        }

    @app.get("/cafe/me")
    def me(principal: _Principal = Depends(authenticated)):
        require(principal, "worker")
        record = platform.store.get("workers", principal.id) or {}
        return {
            "id": principal.id,
            "display_name": record.get("display_name", principal.id),
            "balance": {"cents": platform.balance(principal.id), "currency": "EUR"},
        }

    if static_dir and os.path.isdir(static_dir):
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="webui")

    return app


def _require_owner(platform: Platform, job_id: str, principal: _Principal) -> Job:
    job = platform.get_job(job_id)
    if principal.role != "admin" and job.owner_id != principal.id:
        raise _http_error(403, "forbidden")
    return job


def _http_error(status: int, code: str):
    from fastapi import HTTPException

    return HTTPException(status_code=status, detail={"error": code})


def _results_csv(report: dict) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["unit_id", "status", "agreed_value", "judgment_count"])
    for row in report["units"]:
        unit = row["unit"]
        status = unit["status"]
        writer.writerow(
            [
                unit["id"],
                status["state"],
                json.dumps(status.get("value")) if status.get("value") else "",
                len(row["judgments"]),
            ]
        )
    return out.getvalue()
