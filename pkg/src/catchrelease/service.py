"""HTTP face of the collection desk.

One FastAPI app wired around a runtime (stores + registry + transcriber).
Every package error maps to a machine-readable ``{code, message}`` body with
a status that distinguishes missing things (404), conflicts with current
state (409), bad input (422), and transient downstream failures (503).

Auth is a flat bearer-token scheme: each configured token names a role
(harvester < expert < admin). With no tokens configured the API is open,
which is the desk-local default.
"""

from __future__ import annotations

import datetime as dt
import json
from pathlib import Path

from fastapi import Depends, FastAPI, Request, Response, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from . import errors as E
from .media import SEASONS, CaptureMeta, Segment
from .pipeline import run_segment_pipeline
from .transcribe import attach_voiceover

ROLE_RANK = {"harvester": 1, "expert": 2, "admin": 3}

STATUS_BY_ERROR = {
    E.UnknownTask: 404,
    E.UnknownItem: 404,
    E.UnknownBatch: 404,
    E.UnknownTaxon: 404,
    E.UnknownVersion: 404,
    E.IllegalTransition: 409,
    E.WrongState: 409,
    E.GuardFailed: 409,
    E.AlreadyResolved: 409,
    E.StaleEventId: 409,
    E.TranscriberUnavailable: 503,
    E.StorageFull: 507,
}
# Everything else (validation, parsing, bad media) is a 422.


def _status_for(err: E.CatchReleaseError) -> int:
    for cls, status in STATUS_BY_ERROR.items():
        if isinstance(err, cls):
            return status
    return 422


def create_app(runtime) -> FastAPI:
    app = FastAPI(title="catchrelease", docs_url=None, redoc_url=None)
    # the browser annotation tool is served from its own origin; auth still
    # rides the bearer token, so reflecting any origin is safe here
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    rt = runtime
    tokens: dict = rt.config.service.tokens or {}

    def require(min_role: str):
        def check(request: Request) -> str:
            if not tokens:
                return "admin"
            header = request.headers.get("authorization", "")
            token = header.removeprefix("Bearer ").strip()
            role = tokens.get(token)
            if role is None:
                raise PermissionError("missing or unknown bearer token")
            if ROLE_RANK.get(role, 0) < ROLE_RANK[min_role]:
                raise PermissionError(f"requires {min_role} role")
            return role
        return Depends(check)

    @app.exception_handler(E.CatchReleaseError)
    async def _domain_error(request: Request, err: E.CatchReleaseError):
        return JSONResponse(
            status_code=_status_for(err),
            content={"code": err.code, "message": str(err)},
        )

    @app.exception_handler(PermissionError)
    async def _auth_error(request: Request, err: PermissionError):
        return JSONResponse(
            status_code=401, content={"code": "Unauthorized", "message": str(err)}
        )

    @app.exception_handler(KeyError)
    async def _missing(request: Request, err: KeyError):
        return JSONResponse(
            status_code=404, content={"code": "NotFound", "message": str(err)}
        )

    # -- videos -----------------------------------------------------------------

    @app.post("/videos", status_code=201)
    async def upload_video(
        file: UploadFile,
        request: Request,
        role: str = require("harvester"),
    ):
        form = await request.form()
        capture = CaptureMeta(
            harvester_id=str(form.get("harvester_id", "")),
            site=str(form.get("site", "")),
            capture_date=dt.date.fromisoformat(str(form.get("capture_date", ""))),
            season=str(form.get("season", "")),
            device_note=str(form["device_note"]) if form.get("device_note") else None,
        )
        data = await file.read()
        video = rt.media.ingest_video(data, capture)
        return video.to_dict()

    @app.get("/videos/{video_id}")
    def get_video(video_id: str, role: str = require("harvester")):
        return rt.media.load_video(video_id).to_dict()

    @app.get("/videos/{video_id}/content")
    def video_content(video_id: str, role: str = require("harvester")):
        rt.media.load_video(video_id)
        return Response(rt.content.get(video_id), media_type="video/mp4")

    @app.get("/frames/{frame_id}/content")
    def frame_content(frame_id: str, role: str = require("harvester")):
        meta = rt.content.get_meta(frame_id)
        if meta is None or meta.get("kind") != "frame":
            raise E.UnknownItem(f"no frame {frame_id}")
        return Response(rt.content.get(frame_id), media_type="image/png")

    # -- taxa ---------------------------------------------------------------------

    @app.get("/taxa")
    def list_taxa(role: str = require("harvester")):
        out = []
        for taxon_id in sorted(rt.registry.taxa):
            rec = rt.registry[taxon_id]
            out.append({
                "taxon_id": rec.taxon_id,
                "common_name": rec.common_name,
                "scientific_name": rec.scientific_name,
                "aliases": list(rec.aliases),
            })
        return out

    # -- tasks ----------------------------------------------------------------------

    @app.post("/tasks", status_code=201)
    def create_task(body: dict, role: str = require("expert")):
        return rt.workflow.create_task(body["target_taxon"]).to_dict()

    @app.get("/tasks/{task_id}")
    def get_task(task_id: str, role: str = require("harvester")):
        return rt.workflow.get_task(task_id).to_dict()

    @app.post("/tasks/{task_id}/advance")
    def advance_task(task_id: str, body: dict, role: str = require("expert")):
        return rt.workflow.advance(
            task_id,
            int(body["to_state"]),
            actor=str(body.get("actor", role)),
            note=str(body.get("note", "")),
        ).to_dict()

    @app.post("/tasks/{task_id}/videos")
    def link_video(task_id: str, body: dict, role: str = require("harvester")):
        video = rt.media.load_video(body["video_id"])
        rt.workflow.link_video(task_id, video.video_id, video.capture.harvester_id)
        return rt.workflow.get_task(task_id).to_dict()

    @app.post("/tasks/{task_id}/payments", status_code=201)
    def record_payment(task_id: str, body: dict, role: str = require("admin")):
        entry = rt.workflow.record_payment(
            task_id,
            harvester_id=body["harvester_id"],
            amount_usd=body["amount_usd"],
            fx_rate=body["fx_rate"],
            confirmation_ref=str(body.get("confirmation_ref", "")),
        )
        return entry.to_dict()

    @app.post("/tasks/{task_id}/results", status_code=201)
    async def attach_result(
        task_id: str,
        file: UploadFile,
        request: Request,
        role: str = require("expert"),
    ):
        form = await request.form()
        kind = str(form.get("kind", ""))
        document = await file.read()
        return rt.workflow.attach_external_result(task_id, kind, document)

    # -- review -------------------------------------------------------------------

    @app.get("/review")
    def list_reviews(state: str | None = None, role: str = require("harvester")):
        if state == "unresolved":
            items = rt.workflow.unresolved_reviews()
        else:
            items = list(rt.workflow.reviews.values())
        return [i.to_dict() for i in items]

    @app.post("/review/{item_id}/resolve")
    def resolve_review(item_id: str, body: dict, role: str = require("expert")):
        item = rt.workflow.resolve_review(
            item_id, decision=str(body["decision"]), actor=str(body.get("actor", role))
        )
        return item.to_dict()

    # -- segments -----------------------------------------------------------------

    @app.post("/videos/{video_id}/segments", status_code=201)
    def create_segment(video_id: str, body: dict, role: str = require("harvester")):
        video = rt.media.load_video(video_id)
        seg = Segment(
            video_id=video_id,
            start_min=int(body["start_min"]),
            start_s=int(body["start_s"]),
            end_min=int(body["end_min"]),
            end_s=int(body["end_s"]),
        )
        seg.validate_against(video)
        segment_id = rt.workflow.register_segment(seg)
        return {"segment_id": segment_id, **seg.to_dict()}

    @app.get("/segments/{segment_id}")
    def get_segment(segment_id: str, role: str = require("harvester")):
        seg = rt.workflow.get_segment(segment_id)
        return {"segment_id": segment_id, **seg.to_dict()}

    @app.post("/segments/{segment_id}/voiceover", status_code=201)
    async def upload_voiceover(
        segment_id: str, file: UploadFile, role: str = require("harvester")
    ):
        seg = rt.workflow.get_segment(segment_id)
        video = rt.media.load_video(seg.video_id)
        wav_data = await file.read()
        track = rt.media.store_wav_audio(wav_data, video.video_id)
        canonical = rt.content.get(track.audio_id)
        utts = attach_voiceover(
            video, seg, track, canonical, rt.registry, rt.transcriber,
            language_hint=rt.config.language_hint,
        )
        rt.workflow.add_utterances(video.video_id, segment_id, utts)
        return {"audio_id": track.audio_id, "utterances": [u.to_dict() for u in utts]}

    @app.post("/segments/{segment_id}/pipeline", status_code=201)
    def run_pipeline(segment_id: str, body: dict, role: str = require("expert")):
        seg = rt.workflow.get_segment(segment_id)
        result = run_segment_pipeline(
            seg.video_id,
            seg,
            float(body["fps"]),
            media=rt.media,
            dataset=rt.dataset,
            workflow=rt.workflow,
            registry=rt.registry,
            transcriber=rt.transcriber,
            thresholds=rt.config.qc,
            lead_pad_s=rt.config.align.lead_pad_s,
            min_confidence=rt.config.align.min_confidence,
            language_hint=rt.config.language_hint,
            actor=str(body.get("actor", role)),
        )
        return result.to_dict()

    @app.get("/batches/{batch_id}")
    def get_batch(batch_id: str, role: str = require("harvester")):
        return rt.workflow.get_batch(batch_id).to_dict()

    # -- datasets ------------------------------------------------------------------

    def _resolve_version(version: str) -> int | None:
        if version in ("current", "latest"):
            return None
        try:
            return int(version)
        except ValueError:
            raise E.UnknownVersion(f"not a version: {version!r}")

    @app.get("/datasets/{version}/report")
    def dataset_report(version: str, role: str = require("harvester")):
        report = rt.dataset.balance_report(_resolve_version(version))
        return report.to_dict()

    @app.get("/datasets/{version}/manifest")
    def dataset_manifest(version: str, role: str = require("harvester")):
        manifest = rt.dataset.manifest(_resolve_version(version))
        return json.loads(manifest.canonical_bytes())

    @app.post("/datasets/{version}/export", status_code=201)
    def dataset_export(version: str, body: dict, role: str = require("admin")):
        root = Path(body["root"])
        summary = rt.dataset.export_dataset(
            _resolve_version(version), root, rt.content, rt.registry
        )
        return summary.to_dict()

    return app


def main() -> None:
    """Serve the API: python -m catchrelease.service [config-path]."""
    import sys

    import uvicorn

    from .config import build_runtime, load_config

    cfg = load_config(sys.argv[1] if len(sys.argv) > 1 else None)
    runtime = build_runtime(cfg)
    host_port = cfg.service.endpoint.rsplit("://", 1)[-1]
    host, _, port = host_port.partition(":")
    uvicorn.run(create_app(runtime), host=host or "127.0.0.1", port=int(port or 8077))


if __name__ == "__main__":
    main()
