"""Pydantic request/response models for the HTTP service.

Wire conventions match the file formats: frames are 1-based, boxes are
corner-based continuous pixels, class 0 is the person class and 1 the weapon
class. Undefined metric ratios cross the wire as null rather than NaN.
"""

from __future__ import annotations

import math

from pydantic import BaseModel, Field

from .. import metrics as metrics_mod
from ..geometry import BBox
from ..motion import KalmanParams
from ..synthdata import AugmentProfile, ColorMap, ColorMapEntry, MaskClass
from ..tracker import ClassId, Detection, TrackerConfig


class DetectionModel(BaseModel):
    frame: int = Field(ge=1)
    class_id: int = Field(ge=0, le=1)
    x: float
    y: float
    w: float = Field(gt=0)
    h: float = Field(gt=0)
    conf: float = Field(ge=0, le=1)

    def to_domain(self) -> Detection:
        return Detection(
            frame=self.frame - 1,
            class_id=ClassId(self.class_id),
            bbox=BBox(self.x, self.y, self.w, self.h),
            confidence=self.conf,
        )

    @classmethod
    def from_domain(cls, det: Detection) -> "DetectionModel":
        return cls(
            frame=det.frame + 1,
            class_id=int(det.class_id),
            x=det.bbox.x,
            y=det.bbox.y,
            w=det.bbox.w,
            h=det.bbox.h,
            conf=det.confidence,
        )


class EmbeddingModel(BaseModel):
    frame: int = Field(ge=1)
    det: int = Field(ge=0)
    v: list[float] = Field(min_length=1)


class TrackerConfigModel(BaseModel):
    """Overrides for the tracker defaults; unset fields keep their defaults."""

    shooter_conf_thresh: float | None = Field(default=None, ge=0, le=1)
    gun_conf_thresh: float | None = Field(default=None, ge=0, le=1)
    gun_confirm: bool | None = None
    gun_overlap_mode: str | None = None
    gun_containment_min: float | None = Field(default=None, ge=0, le=1)
    iou_gate: float | None = Field(default=None, ge=0, le=1)
    lambda_ocm: float | None = None
    lambda_app: float | None = None
    w_aw: float | None = None
    delta_t: int | None = Field(default=None, ge=1)
    alpha_fixed: float | None = Field(default=None, ge=0, le=1)
    conf_floor: float | None = Field(default=None, ge=0, le=1)
    max_age: int | None = Field(default=None, ge=1)
    min_hits: int | None = Field(default=None, ge=1)
    ocr: bool | None = None
    kalman_initial_cov_diag: list[float] | None = Field(default=None, min_length=7, max_length=7)
    kalman_process_noise_diag: list[float] | None = Field(default=None, min_length=7, max_length=7)
    kalman_measurement_noise_diag: list[float] | None = Field(
        default=None, min_length=4, max_length=4
    )

    @classmethod
    def from_domain(cls, cfg: TrackerConfig) -> "TrackerConfigModel":
        return cls(
            shooter_conf_thresh=cfg.shooter_conf_thresh,
            gun_conf_thresh=cfg.gun_conf_thresh,
            gun_confirm=cfg.gun_confirm,
            gun_overlap_mode=cfg.gun_overlap_mode,
            gun_containment_min=cfg.gun_containment_min,
            iou_gate=cfg.iou_gate,
            lambda_ocm=cfg.lambda_ocm,
            lambda_app=cfg.lambda_app,
            w_aw=cfg.w_aw,
            delta_t=cfg.delta_t,
            alpha_fixed=cfg.alpha_fixed,
            conf_floor=cfg.conf_floor,
            max_age=cfg.max_age,
            min_hits=cfg.min_hits,
            ocr=cfg.ocr,
            kalman_initial_cov_diag=list(cfg.kalman.initial_cov_diag),
            kalman_process_noise_diag=list(cfg.kalman.process_noise_diag),
            kalman_measurement_noise_diag=list(cfg.kalman.measurement_noise_diag),
        )

    def to_domain(self, base: TrackerConfig | None = None) -> TrackerConfig:
        cfg = base or TrackerConfig()
        overrides = {
            k: v
            for k, v in self.model_dump().items()
            if v is not None and not k.startswith("kalman_")
        }
        kalman = cfg.kalman
        if (
            self.kalman_initial_cov_diag is not None
            or self.kalman_process_noise_diag is not None
            or self.kalman_measurement_noise_diag is not None
        ):
            overrides["kalman"] = KalmanParams(
                initial_cov_diag=tuple(self.kalman_initial_cov_diag or kalman.initial_cov_diag),
                process_noise_diag=tuple(
                    self.kalman_process_noise_diag or kalman.process_noise_diag
                ),
                measurement_noise_diag=tuple(
                    self.kalman_measurement_noise_diag or kalman.measurement_noise_diag
                ),
            )
        return cfg.replace(**overrides)


class TrackRowModel(BaseModel):
    frame: int = Field(ge=1)
    track_id: int = Field(ge=1)
    class_id: int = Field(ge=0, le=1)
    x: float
    y: float
    w: float = Field(ge=0)
    h: float = Field(ge=0)
    conf: float = Field(ge=0, le=1)
    confirmed: bool

    def to_domain(self) -> metrics_mod.TrackBox:
        return metrics_mod.TrackBox(
            frame=self.frame - 1,
            track_id=self.track_id,
            class_id=ClassId(self.class_id),
            bbox=BBox(self.x, self.y, self.w, self.h),
            confidence=self.conf,
            confirmed=self.confirmed,
        )

    @classmethod
    def from_domain(cls, row: metrics_mod.TrackBox) -> "TrackRowModel":
        return cls(
            frame=row.frame + 1,
            track_id=row.track_id,
            class_id=int(row.class_id),
            x=row.bbox.x,
            y=row.bbox.y,
            w=row.bbox.w,
            h=row.bbox.h,
            conf=row.confidence,
            confirmed=row.confirmed,
        )


class GtRowModel(BaseModel):
    frame: int = Field(ge=1)
    gt_id: int
    class_id: int = Field(ge=0, le=1)
    x: float
    y: float
    w: float = Field(ge=0)
    h: float = Field(ge=0)

    def to_domain(self) -> metrics_mod.GtBox:
        return metrics_mod.GtBox(
            frame=self.frame - 1,
            gt_id=self.gt_id,
            class_id=ClassId(self.class_id),
            bbox=BBox(self.x, self.y, self.w, self.h),
        )

    @classmethod
    def from_domain(cls, row: metrics_mod.GtBox) -> "GtRowModel":
        return cls(
            frame=row.frame + 1,
            gt_id=row.gt_id,
            class_id=int(row.class_id),
            x=row.bbox.x,
            y=row.bbox.y,
            w=row.bbox.w,
            h=row.bbox.h,
        )


def _nullable(v: float) -> float | None:
    return None if math.isnan(v) else v


class MetricsModel(BaseModel):
    num_gt: int
    matched: int
    fp: int
    fn: int
    idsw: int
    idtp: int
    idfp: int
    idfn: int
    mota: float | None
    precision: float | None
    recall: float | None
    idf1: float | None
    idp: float | None
    idr: float | None

    @classmethod
    def from_domain(
        cls, counts: metrics_mod.MotCounts, report: metrics_mod.MetricsReport
    ) -> "MetricsModel":
        return cls(
            num_gt=counts.num_gt,
            matched=counts.matched,
            fp=counts.fp,
            fn=counts.fn,
            idsw=counts.idsw,
            idtp=counts.idtp,
            idfp=counts.idfp,
            idfn=counts.idfn,
            mota=_nullable(report.mota),
            precision=_nullable(report.precision),
            recall=_nullable(report.recall),
            idf1=_nullable(report.idf1),
            idp=_nullable(report.idp),
            idr=_nullable(report.idr),
        )

    def to_domain(self) -> tuple[metrics_mod.MotCounts, metrics_mod.MetricsReport]:
        counts = metrics_mod.MotCounts(
            matched=self.matched,
            fp=self.fp,
            fn=self.fn,
            idsw=self.idsw,
            num_gt=self.num_gt,
            idtp=self.idtp,
            idfp=self.idfp,
            idfn=self.idfn,
        )

        def back(v: float | None) -> float:
            return math.nan if v is None else v

        report = metrics_mod.MetricsReport(
            mota=back(self.mota),
            precision=back(self.precision),
            recall=back(self.recall),
            idf1=back(self.idf1),
            idp=back(self.idp),
            idr=back(self.idr),
        )
        return counts, report


class TrackRequest(BaseModel):
    detections: list[DetectionModel]
    embeddings: list[EmbeddingModel] = []
    config: TrackerConfigModel = TrackerConfigModel()


class TrackResponse(BaseModel):
    rows: list[TrackRowModel]


class EvalRequest(BaseModel):
    gt: list[GtRowModel]
    tracks: list[TrackRowModel]
    iou_thresh: float = Field(default=0.5, gt=0, le=1)


class EvalResponse(BaseModel):
    metrics: MetricsModel


class SweepRequest(BaseModel):
    detections: list[DetectionModel]
    gt: list[GtRowModel]
    embeddings: list[EmbeddingModel] = []
    config: TrackerConfigModel = TrackerConfigModel()
    grid: list[float] | None = None
    iou_thresh: float = Field(default=0.5, gt=0, le=1)
    jobs: int = Field(default=1, ge=1)


class SweepRowModel(BaseModel):
    mode: str
    gun_thresh: float
    shooter_thresh: float
    metrics: MetricsModel


class SweepResponse(BaseModel):
    rows: list[SweepRowModel]


class WindowMetricsRequest(BaseModel):
    gt: list[GtRowModel]
    tracks: list[TrackRowModel]
    windows: list[int] = Field(min_length=1)
    iou_thresh: float = Field(default=0.5, gt=0, le=1)


class WindowRowModel(BaseModel):
    requested_window: int
    window: int  # effective odd window
    precision: float
    recall: float
    f1: float


class WindowMetricsResponse(BaseModel):
    rows: list[WindowRowModel]


class ImagePayload(BaseModel):
    name: str
    png_b64: str


class AugmentProfileModel(BaseModel):
    apply_prob: float | None = Field(default=None, ge=0, le=1)
    noise_sigma_max: float | None = Field(default=None, ge=0)
    blur_sigma_max: float | None = Field(default=None, ge=0)
    ca_scale_min: float | None = Field(default=None, gt=0)
    ca_scale_max: float | None = Field(default=None, gt=0)
    ca_shift_max: float | None = Field(default=None, ge=0)
    exposure_stops_max: float | None = Field(default=None, ge=0)
    color_shift_max: float | None = Field(default=None, ge=0)

    def to_domain(self) -> AugmentProfile:
        profile = AugmentProfile()
        for key, value in self.model_dump().items():
            if value is not None:
                setattr(profile, key, value)
        return profile


class AugmentRequest(BaseModel):
    images: list[ImagePayload]
    seed: int
    profile: AugmentProfileModel = AugmentProfileModel()
    jobs: int = Field(default=1, ge=1)


class AugmentResponse(BaseModel):
    images: list[ImagePayload]


class ColorMapEntryModel(BaseModel):
    color_hex: str = Field(pattern=r"^#?[0-9a-fA-F]{6}$")
    class_name: str
    object_id: int

    def to_domain(self) -> ColorMapEntry:
        text = self.color_hex.lstrip("#")
        color = tuple(int(text[i : i + 2], 16) for i in (0, 2, 4))
        return ColorMapEntry(color, MaskClass(self.class_name), self.object_id)

    @classmethod
    def from_domain(cls, entry: ColorMapEntry) -> "ColorMapEntryModel":
        return cls(
            color_hex="".join(f"{c:02X}" for c in entry.color),
            class_name=entry.mask_class.value,
            object_id=entry.object_id,
        )


class ColorMapModel(BaseModel):
    entries: list[ColorMapEntryModel]

    def to_domain(self) -> ColorMap:
        return ColorMap([e.to_domain() for e in self.entries])

    @classmethod
    def from_domain(cls, cmap: ColorMap) -> "ColorMapModel":
        return cls(entries=[ColorMapEntryModel.from_domain(e) for e in cmap.entries])


class RecolorRequest(BaseModel):
    images: list[ImagePayload]
    seed: int
    color_map: ColorMapModel
    keep_background: bool = True
    min_pixels: int = Field(default=8, ge=1)


class RecolorResult(BaseModel):
    image: ImagePayload
    color_map: ColorMapModel
    warnings: list[str]  # hex colors occurring suspiciously few times


class RecolorResponse(BaseModel):
    results: list[RecolorResult]


class AnnotateRequest(BaseModel):
    images: list[ImagePayload]
    color_map: ColorMapModel
    min_side: float = Field(default=8, ge=0)


class AnnotateResponse(BaseModel):
    detections: list[DetectionModel]  # frame i+1 corresponds to image_names[i]
    image_names: list[str]


class BenchRequest(BaseModel):
    detections: list[DetectionModel]
    embeddings: list[EmbeddingModel] = []
    config: TrackerConfigModel = TrackerConfigModel()
    repeat: int = Field(default=1, ge=1)


class StageStatsModel(BaseModel):
    mean_ms: float
    p50_ms: float
    p95_ms: float


class BenchResponse(BaseModel):
    frames: int
    repeats: int
    stages: dict[str, StageStatsModel]
    total: StageStatsModel
    fps: float


class SessionCreateRequest(BaseModel):
    config: TrackerConfigModel = TrackerConfigModel()


class SessionCreateResponse(BaseModel):
    session_id: str


class SessionStepRequest(BaseModel):
    frame: int = Field(ge=1)
    detections: list[DetectionModel] = []
    embeddings: list[EmbeddingModel] = []


class SessionStepResponse(BaseModel):
    frame: int
    rows: list[TrackRowModel]


class HealthResponse(BaseModel):
    status: str


class VersionResponse(BaseModel):
    name: str
    version: str
