"""FastAPI app: batch endpoints wrapping the handlers plus streaming sessions.

A session owns one tracker instance fed frame by frame, which is the shape a
camera pipeline uses; batch endpoints process whole sequences per request.
Session state is in-memory and per-process.
"""

from __future__ import annotations

import threading
import uuid

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..metrics import track_boxes_from_results
from ..tracker import ShooterTracker
from . import handlers, models


class _Session:
    def __init__(self, tracker: ShooterTracker):
        self.tracker = tracker
        self.lock = threading.Lock()


def create_app() -> FastAPI:
    app = FastAPI(title="threattrack", version=__version__)
    sessions: dict[str, _Session] = {}
    sessions_lock = threading.Lock()

    def run(handler, request):
        try:
            return handler(request)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None

    @app.get("/v1/health", response_model=models.HealthResponse)
    def health():
        return models.HealthResponse(status="ok")

    @app.get("/v1/version", response_model=models.VersionResponse)
    def version():
        return models.VersionResponse(name="threattrack", version=__version__)

    @app.post("/v1/track", response_model=models.TrackResponse)
    def track(request: models.TrackRequest):
        return run(handlers.handle_track, request)

    @app.post("/v1/evaluate", response_model=models.EvalResponse)
    def evaluate(request: models.EvalRequest):
        return run(handlers.handle_eval, request)

    @app.post("/v1/sweep", response_model=models.SweepResponse)
    def sweep(request: models.SweepRequest):
        return run(handlers.handle_sweep, request)

    @app.post("/v1/window-metrics", response_model=models.WindowMetricsResponse)
    def window_metrics(request: models.WindowMetricsRequest):
        return run(handlers.handle_window_metrics, request)

    @app.post("/v1/augment", response_model=models.AugmentResponse)
    def augment(request: models.AugmentRequest):
        return run(handlers.handle_augment, request)

    @app.post("/v1/recolor", response_model=models.RecolorResponse)
    def recolor(request: models.RecolorRequest):
        return run(handlers.handle_recolor, request)

    @app.post("/v1/annotate", response_model=models.AnnotateResponse)
    def annotate(request: models.AnnotateRequest):
        return run(handlers.handle_annotate, request)

    @app.post("/v1/bench", response_model=models.BenchResponse)
    def bench(request: models.BenchRequest):
        return run(handlers.handle_bench, request)

    @app.post("/v1/sessions", response_model=models.SessionCreateResponse, status_code=201)
    def create_session(request: models.SessionCreateRequest):
        try:
            tracker = ShooterTracker(request.config.to_domain())
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        session_id = uuid.uuid4().hex
        with sessions_lock:
            sessions[session_id] = _Session(tracker)
        return models.SessionCreateResponse(session_id=session_id)

    def get_session(session_id: str) -> _Session:
        with sessions_lock:
            session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return session

    @app.post("/v1/sessions/{session_id}/frames", response_model=models.SessionStepResponse)
    def step_session(session_id: str, request: models.SessionStepRequest):
        session = get_session(session_id)
        frame = request.frame - 1
        with session.lock:
            last = session.tracker.last_frame
            if last is not None and frame <= last:
                raise HTTPException(
                    status_code=409,
                    detail=f"frame {request.frame} is not after frame {last + 1}",
                )
            try:
                detections = handlers.attach_detections(request.detections, request.embeddings)
                for det in detections:
                    if det.frame != frame:
                        raise ValueError(
                            f"detection frame {det.frame + 1} does not match request frame {request.frame}"
                        )
                result = session.tracker.step(frame, detections)
            except ValueError as exc:
                raise HTTPException(status_code=400, detail=str(exc)) from None
        rows = track_boxes_from_results([result])
        return models.SessionStepResponse(
            frame=request.frame, rows=[models.TrackRowModel.from_domain(r) for r in rows]
        )

    @app.delete("/v1/sessions/{session_id}", status_code=204)
    def delete_session(session_id: str):
        with sessions_lock:
            if session_id not in sessions:
                raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
            del sessions[session_id]

    return app


app = create_app()
