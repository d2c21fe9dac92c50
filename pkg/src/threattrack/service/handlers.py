"""Request handlers shared by the HTTP routes and the in-process CLI backend.

Handlers are pure functions from request models to response models; anything
stateful (the streaming sessions) lives in the app. Domain validation failures
raise ValueError and are mapped to 400s at the edge.
"""

from __future__ import annotations

import base64
import io
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np

from .. import bench as bench_mod
from .. import fileio, metrics, synthdata
from ..tracker import Detection, run_sequence
from . import models


def attach_detections(
    det_models: Sequence[models.DetectionModel], emb_models: Sequence[models.EmbeddingModel]
) -> list[Detection]:
    detections = [d.to_domain() for d in det_models]
    if not emb_models:
        return detections
    table = {}
    dim = None
    per_frame: dict[int, int] = {}
    for d in detections:
        per_frame[d.frame] = per_frame.get(d.frame, 0) + 1
    for e in emb_models:
        frame = e.frame - 1
        if e.det >= per_frame.get(frame, 0):
            raise ValueError(
                f"embedding references detection {e.det} in frame {e.frame}, "
                f"which has {per_frame.get(frame, 0)} detections"
            )
        vector = np.asarray(e.v, dtype=float)
        if dim is None:
            dim = vector.size
        elif vector.size != dim:
            raise ValueError(f"embedding dimension {vector.size} differs from {dim}")
        table[(frame, e.det)] = vector
    return fileio.attach_embeddings(detections, table)


def handle_track(req: models.TrackRequest) -> models.TrackResponse:
    detections = attach_detections(req.detections, req.embeddings)
    results = run_sequence(detections, req.config.to_domain())
    rows = metrics.track_boxes_from_results(results)
    return models.TrackResponse(rows=[models.TrackRowModel.from_domain(r) for r in rows])


def handle_eval(req: models.EvalRequest) -> models.EvalResponse:
    counts, report = metrics.evaluate(
        [g.to_domain() for g in req.gt],
        [t.to_domain() for t in req.tracks],
        req.iou_thresh,
    )
    return models.EvalResponse(metrics=models.MetricsModel.from_domain(counts, report))


def handle_sweep(req: models.SweepRequest) -> models.SweepResponse:
    detections = attach_detections(req.detections, req.embeddings)
    rows = metrics.sweep_thresholds(
        detections,
        [g.to_domain() for g in req.gt],
        config=req.config.to_domain(),
        grid=tuple(req.grid) if req.grid else metrics.DEFAULT_GRID,
        iou_thresh=req.iou_thresh,
        jobs=req.jobs,
    )
    return models.SweepResponse(
        rows=[
            models.SweepRowModel(
                mode=r.mode,
                gun_thresh=r.gun_thresh,
                shooter_thresh=r.shooter_thresh,
                metrics=models.MetricsModel.from_domain(r.counts, r.report),
            )
            for r in rows
        ]
    )


def handle_window_metrics(req: models.WindowMetricsRequest) -> models.WindowMetricsResponse:
    gt = [g.to_domain() for g in req.gt]
    tracks = [t.to_domain() for t in req.tracks]
    rows = []
    for requested in req.windows:
        rep = metrics.windowed_prf(gt, tracks, requested, req.iou_thresh)
        rows.append(
            models.WindowRowModel(
                requested_window=requested,
                window=rep.window,
                precision=rep.precision,
                recall=rep.recall,
                f1=rep.f1,
            )
        )
    return models.WindowMetricsResponse(rows=rows)


def _decode_png(payload: models.ImagePayload) -> bytes:
    try:
        return base64.b64decode(payload.png_b64, validate=True)
    except Exception as exc:
        raise ValueError(f"image {payload.name!r} is not valid base64: {exc}") from None


def _encode_png(write) -> str:
    buf = io.BytesIO()
    write(buf)
    return base64.b64encode(buf.getvalue()).decode("ascii")


def handle_augment(req: models.AugmentRequest) -> models.AugmentResponse:
    profile = req.profile.to_domain()

    def augment_one(indexed: tuple[int, models.ImagePayload]) -> models.ImagePayload:
        index, payload = indexed
        img = synthdata.load_image(io.BytesIO(_decode_png(payload)))
        rng = synthdata.rng_for_image(req.seed, index)
        params = synthdata.sample_effect_params(rng, profile)
        result = synthdata.apply_sensor_effects(img, params)
        return models.ImagePayload(
            name=payload.name,
            png_b64=_encode_png(lambda buf: synthdata.save_image(buf, result)),
        )

    items = list(enumerate(req.images))
    if req.jobs > 1:
        # Per-image RNG streams make the output independent of execution order.
        with ThreadPoolExecutor(max_workers=req.jobs) as pool:
            out = list(pool.map(augment_one, items))
    else:
        out = [augment_one(item) for item in items]
    return models.AugmentResponse(images=out)


def handle_recolor(req: models.RecolorRequest) -> models.RecolorResponse:
    cmap = req.color_map.to_domain()
    results = []
    for index, payload in enumerate(req.images):
        mask = synthdata.load_mask(io.BytesIO(_decode_png(payload)))
        rng = synthdata.rng_for_image(req.seed, index)
        recolored, new_map, warnings = synthdata.recolor_mask(
            mask, rng, cmap, keep_background=req.keep_background, min_pixels=req.min_pixels
        )
        results.append(
            models.RecolorResult(
                image=models.ImagePayload(
                    name=payload.name,
                    png_b64=_encode_png(lambda buf, m=recolored: synthdata.save_mask(buf, m)),
                ),
                color_map=models.ColorMapModel.from_domain(new_map),
                warnings=["".join(f"{c:02X}" for c in color) for color in warnings],
            )
        )
    return models.RecolorResponse(results=results)


def handle_annotate(req: models.AnnotateRequest) -> models.AnnotateResponse:
    cmap = req.color_map.to_domain()
    detections: list[models.DetectionModel] = []
    names = []
    for index, payload in enumerate(req.images):
        mask = synthdata.load_mask(io.BytesIO(_decode_png(payload)))
        names.append(payload.name)
        for mask_class, box in synthdata.extract_boxes(mask, cmap, min_side=req.min_side):
            detections.append(
                models.DetectionModel(
                    frame=index + 1,
                    class_id=0 if mask_class == synthdata.MaskClass.SHOOTER else 1,
                    x=box.x,
                    y=box.y,
                    w=box.w,
                    h=box.h,
                    conf=1.0,
                )
            )
    return models.AnnotateResponse(detections=detections, image_names=names)


def handle_bench(req: models.BenchRequest) -> models.BenchResponse:
    detections = attach_detections(req.detections, req.embeddings)
    result = bench_mod.run_bench(detections, req.config.to_domain(), repeat=req.repeat)

    def stats(s: bench_mod.StageStats) -> models.StageStatsModel:
        return models.StageStatsModel(mean_ms=s.mean_ms, p50_ms=s.p50_ms, p95_ms=s.p95_ms)

    return models.BenchResponse(
        frames=result.frames,
        repeats=result.repeats,
        stages={name: stats(s) for name, s in result.stages.items()},
        total=stats(result.total),
        fps=result.fps,
    )
