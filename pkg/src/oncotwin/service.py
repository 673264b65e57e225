"""HTTP service exposing twins, matching, analytics, what-if, and
recommendations. All bodies use the canonical record serialization; errors
come back as {status, code, message, detail} with stable codes.

No authentication by design: deployment sits inside the secured clinic
network, and the default bind address is loopback.
"""
from __future__ import annotations

import datetime as dt
import itertools
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Any

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import evaluation, extraction, matcher, recommender
from .model import decode_twin, encode_twin, errors_of, validate_twin
from .store import NotFoundError, QueryError, StoreError, TwinStore, ValidationRejected


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, detail: Any = None):
        assert status in (400, 404, 409, 422, 500)
        self.status = status
        self.code = code
        self.message = message
        self.detail = detail
        super().__init__(message)

    def body(self) -> dict[str, Any]:
        payload: dict[str, Any] = {"status": self.status, "code": self.code, "message": self.message}
        if self.detail is not None:
            payload["detail"] = self.detail
        return payload


def create_app(
    store: TwinStore,
    kb_path: str | None = None,
    stale_after_months: int = 24,
) -> FastAPI:
    app = FastAPI(title="oncotwin", version="1")
    kb = recommender.load_kb(kb_path)
    jobs: dict[str, dict[str, Any]] = {}
    job_counter = itertools.count(1)
    job_lock = threading.Lock()
    executor = ThreadPoolExecutor(max_workers=2)

    @app.exception_handler(ApiError)
    async def api_error_handler(_: Request, exc: ApiError) -> JSONResponse:
        return JSONResponse(status_code=exc.status, content=exc.body())

    @app.exception_handler(Exception)
    async def unexpected_error_handler(_: Request, exc: Exception) -> JSONResponse:
        return JSONResponse(
            status_code=500,
            content={"status": 500, "code": "internal", "message": str(exc)},
        )

    def get_twin_or_404(twin_id: str):
        try:
            return store.get(twin_id)
        except NotFoundError:
            raise ApiError(404, "twin_not_found", f"no twin with id {twin_id!r}")

    def twin_from_body(body: dict[str, Any]):
        if body.get("id") and "twin" not in body and isinstance(body.get("id"), str):
            return get_twin_or_404(body["id"])
        twin_obj = body.get("twin")
        if twin_obj is None:
            raise ApiError(400, "missing_twin", "request needs a twin id or an inline twin object")
        try:
            return decode_twin(twin_obj)
        except (KeyError, ValueError) as exc:
            raise ApiError(422, "malformed_twin", f"cannot decode twin: {exc}")

    def spec_from_body(body: dict[str, Any]) -> matcher.EligibilitySpec:
        try:
            return matcher.EligibilitySpec.from_dict(body.get("spec") or {})
        except ValueError as exc:
            raise ApiError(422, "bad_spec", str(exc))

    @app.get("/v1/healthz")
    def healthz() -> dict[str, Any]:
        return {"status": "ok", "twins": store.count, "schema_version": store.schema_version}

    @app.get("/v1/twins")
    def list_twins(query: str = "") -> dict[str, Any]:
        try:
            twins = store.query(query) if query else store.all_twins()
        except QueryError as exc:
            raise ApiError(400, "bad_query", str(exc))
        return {"count": len(twins), "twins": [encode_twin(t) for t in twins]}

    @app.get("/v1/twins/{twin_id}")
    def get_twin(twin_id: str) -> dict[str, Any]:
        return encode_twin(get_twin_or_404(twin_id))

    @app.post("/v1/twins", status_code=201)
    async def put_twin(request: Request) -> dict[str, Any]:
        body = await request.json()
        try:
            twin = decode_twin(body)
        except (KeyError, ValueError) as exc:
            raise ApiError(422, "malformed_twin", f"cannot decode twin: {exc}")
        issues = validate_twin(twin)
        errors = errors_of(issues)
        if errors:
            raise ApiError(
                422,
                "validation_failed",
                "twin failed validation",
                detail=[{"field": i.field, "severity": i.severity, "message": i.message} for i in errors],
            )
        try:
            store.put(twin)
        except ValidationRejected as exc:  # defense in depth; same shape
            raise ApiError(422, "validation_failed", str(exc))
        return {"id": twin.id, "versions": len(store.versions(twin.id))}

    @app.post("/v1/twins/{twin_id}/outcome")
    async def record_outcome(twin_id: str, request: Request) -> dict[str, Any]:
        body = await request.json()
        get_twin_or_404(twin_id)
        try:
            store.record_outcome(twin_id, body)
        except StoreError as exc:
            raise ApiError(422, "bad_outcome_update", str(exc))
        return {"id": twin_id, "versions": len(store.versions(twin_id))}

    @app.post("/v1/match")
    async def match(request: Request) -> dict[str, Any]:
        body = await request.json() if await request.body() else {}
        spec = spec_from_body(body)
        twins = store.all_twins()
        if body.get("ids"):
            wanted = set(body["ids"])
            twins = [t for t in twins if t.id in wanted]
        stages = matcher.cohort_funnel(twins, spec)
        return {"spec": spec.to_dict(), "stages": [s.to_dict() for s in stages]}

    @app.post("/v1/whatif")
    async def whatif(request: Request) -> dict[str, Any]:
        body = await request.json()
        twin = twin_from_body(body)
        spec = spec_from_body(body)
        try:
            result = matcher.whatif(twin, body.get("overrides") or {}, spec, store.all_twins())
        except matcher.OverrideError as exc:
            raise ApiError(422, "bad_override", str(exc))
        return result.to_dict()

    @app.post("/v1/recommend")
    async def recommend(request: Request) -> dict[str, Any]:
        body = await request.json()
        twin = twin_from_body(body)
        if body.get("overrides"):
            try:
                twin = matcher.apply_overrides(twin, body["overrides"])
            except matcher.OverrideError as exc:
                raise ApiError(422, "bad_override", str(exc))
        as_of = None
        if body.get("as_of"):
            try:
                as_of = dt.date.fromisoformat(body["as_of"])
            except ValueError as exc:
                raise ApiError(422, "bad_date", f"as_of: {exc}")
        context = recommender.RecommendContext(
            region=body.get("region"),
            allow_off_label=bool(body.get("allow_off_label", False)),
            as_of=as_of,
            stale_after_months=int(body.get("stale_after_months", stale_after_months)),
        )
        recs = recommender.recommend(twin, kb, context)
        return {"twin_id": twin.id, "recommendations": [r.to_dict() for r in recs]}

    @app.post("/v1/evaluate")
    async def evaluate(request: Request) -> dict[str, Any]:
        body = await request.json()
        records_obj = body.get("records")
        if not isinstance(records_obj, list):
            raise ApiError(400, "missing_records", "body needs a `records` list")
        try:
            records = [evaluation.AdjudicationRecord.from_dict(r) for r in records_obj]
        except (KeyError, TypeError) as exc:
            raise ApiError(422, "malformed_record", f"cannot decode adjudication record: {exc}")
        try:
            rows = evaluation.evaluate_run(records)
        except evaluation.AdjudicationConflict as exc:
            raise ApiError(409, "adjudication_conflict", str(exc))
        except ValueError as exc:
            raise ApiError(422, "bad_adjudications", str(exc))
        return {"rows": [r.to_dict() for r in rows]}

    @app.get("/v1/kb")
    def knowledge_base() -> dict[str, Any]:
        return {"entries": [e.to_dict() for e in kb]}

    @app.post("/v1/extract", status_code=202)
    async def extract(request: Request) -> dict[str, Any]:
        body = await request.json()
        backend_kind = body.get("backend", "mock")
        if backend_kind != "mock":
            raise ApiError(400, "backend_unsupported", "service-side extraction supports the mock backend only")
        replies_dir = body.get("replies_dir")
        if not replies_dir:
            raise ApiError(400, "missing_replies_dir", "mock backend needs replies_dir")
        docs_obj = body.get("docs")
        if not isinstance(docs_obj, list) or not docs_obj:
            raise ApiError(400, "missing_docs", "body needs a non-empty `docs` list")
        from .ingestion import SourceDocument, content_hash, normalize_text, page_count

        docs = []
        for d in docs_obj:
            text = normalize_text(d.get("text", ""))
            if not text.strip():
                raise ApiError(422, "empty_document", "every document needs text")
            docs.append(
                SourceDocument(
                    doc_id=d.get("doc_id") or content_hash(text),
                    origin=d.get("origin", "literature"),
                    media="text",
                    text=text,
                    pages=page_count(text),
                    chars=len(text),
                    patient_hint=d.get("patient_hint"),
                )
            )
        backend = extraction.MockBackend(replies_dir)
        job = extraction.ExtractionJob(
            doc_ids=tuple(d.doc_id for d in docs),
            backend=backend.spec,
            seed=int(body.get("seed", 0)),
        )
        with job_lock:
            job_id = f"job-{next(job_counter)}"
            jobs[job_id] = {"status": "running", "report": None, "twins": None, "error": None}

        def run() -> None:
            try:
                results, report = extraction.run_job(job, docs, backend)
                twins = [encode_twin(r.twin) for r in results if r.twin is not None]
                if body.get("store", False):
                    for r in results:
                        if r.twin is not None:
                            store.put(r.twin)
                with job_lock:
                    jobs[job_id].update(status="done", report=report.to_dict(), twins=twins)
            except Exception as exc:  # failure is job state, not a 500
                with job_lock:
                    jobs[job_id].update(status="failed", error=str(exc))

        executor.submit(run)
        return {"job_id": job_id, "status": "running"}

    @app.get("/v1/jobs/{job_id}")
    def job_status(job_id: str) -> dict[str, Any]:
        with job_lock:
            if job_id not in jobs:
                raise ApiError(404, "job_not_found", f"no job {job_id!r}")
            state = dict(jobs[job_id])
        return {"job_id": job_id, **state}

    return app


def serve(store_path: str, bind: str = "127.0.0.1:8756", kb_path: str | None = None) -> None:
    """Run the service with uvicorn (blocking)."""
    import uvicorn

    host, _, port = bind.partition(":")
    app = create_app(TwinStore(store_path), kb_path=kb_path)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8756), log_level="info")
