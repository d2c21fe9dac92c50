"""Backends the CLI talks to: the service in-process, or a remote server.

Both expose the same typed operations; the local backend calls the handler
layer the HTTP routes wrap, so CLI runs need no server while exercising the
exact service contract.
"""

from __future__ import annotations

import httpx

from .service import handlers, models


class ClientError(Exception):
    def __init__(self, status: int, detail: str):
        super().__init__(f"server returned {status}: {detail}")
        self.status = status
        self.detail = detail


class LocalBackend:
    def track(self, req: models.TrackRequest) -> models.TrackResponse:
        return handlers.handle_track(req)

    def evaluate(self, req: models.EvalRequest) -> models.EvalResponse:
        return handlers.handle_eval(req)

    def sweep(self, req: models.SweepRequest) -> models.SweepResponse:
        return handlers.handle_sweep(req)

    def window_metrics(self, req: models.WindowMetricsRequest) -> models.WindowMetricsResponse:
        return handlers.handle_window_metrics(req)

    def augment(self, req: models.AugmentRequest) -> models.AugmentResponse:
        return handlers.handle_augment(req)

    def recolor(self, req: models.RecolorRequest) -> models.RecolorResponse:
        return handlers.handle_recolor(req)

    def annotate(self, req: models.AnnotateRequest) -> models.AnnotateResponse:
        return handlers.handle_annotate(req)

    def bench(self, req: models.BenchRequest) -> models.BenchResponse:
        return handlers.handle_bench(req)


class HttpBackend:
    def __init__(self, base_url: str, timeout: float = 600.0, transport=None):
        self._client = httpx.Client(base_url=base_url, timeout=timeout, transport=transport)

    def _post(self, path: str, request, response_cls):
        response = self._client.post(path, json=request.model_dump(mode="json"))
        if response.status_code >= 400:
            try:
                detail = response.json().get("detail", response.text)
            except ValueError:
                detail = response.text
            raise ClientError(response.status_code, str(detail))
        return response_cls.model_validate(response.json())

    def track(self, req):
        return self._post("/v1/track", req, models.TrackResponse)

    def evaluate(self, req):
        return self._post("/v1/evaluate", req, models.EvalResponse)

    def sweep(self, req):
        return self._post("/v1/sweep", req, models.SweepResponse)

    def window_metrics(self, req):
        return self._post("/v1/window-metrics", req, models.WindowMetricsResponse)

    def augment(self, req):
        return self._post("/v1/augment", req, models.AugmentResponse)

    def recolor(self, req):
        return self._post("/v1/recolor", req, models.RecolorResponse)

    def annotate(self, req):
        return self._post("/v1/annotate", req, models.AnnotateResponse)

    def bench(self, req):
        return self._post("/v1/bench", req, models.BenchResponse)


def make_backend(server: str | None):
    return HttpBackend(server) if server else LocalBackend()
