"""Per-frame tracking state machine with weapon-confirmed track initialization.

Each frame is processed in six stages:

  1. threshold filtering (person-class and weapon-class detections separately;
     weapon detections are never tracked themselves),
  2. Kalman prediction for every live track,
  3. fused-cost association between predictions and person detections, with a
     rollback re-update when a track is re-acquired after a gap,
  4. a recovery pass matching the remaining detections against the tracks'
     last *observed* boxes (not predictions) on IoU alone,
  5. initialization: a leftover person detection becomes a track only if a
     weapon detection overlaps it; otherwise it is discarded with no record,
  6. lifecycle: stale tracks are dropped, current tracks are emitted.

Once confirmed, a track never needs weapon evidence again; its identity is
carried by motion and appearance alone.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, fields
from enum import IntEnum
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import association, motion
from .geometry import BBox, containment_ratio, intersection_area


class ClassId(IntEnum):
    SHOOTER = 0
    GUN = 1


@dataclass
class Detection:
    frame: int
    class_id: ClassId
    bbox: BBox
    confidence: float
    embedding: np.ndarray | None = None

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if self.bbox.area <= 0.0:
            raise ValueError(f"detection box must have positive area: {self.bbox}")


GUN_OVERLAP_MODES = ("any_overlap", "containment")


@dataclass
class TrackerConfig:
    shooter_conf_thresh: float = 0.6
    gun_conf_thresh: float = 0.8
    gun_confirm: bool = True
    gun_overlap_mode: str = "any_overlap"
    gun_containment_min: float = 0.5
    iou_gate: float = 0.3
    lambda_ocm: float = 0.2
    lambda_app: float = 0.5
    w_aw: float = 0.5
    delta_t: int = 3
    alpha_fixed: float = 0.95  # EMA floor for the appearance model
    conf_floor: float = 0.5  # confidence at which the dynamic EMA factor tops out
    max_age: int = 30
    min_hits: int = 1
    ocr: bool = True  # second association pass against last observations
    kalman: motion.KalmanParams = field(default_factory=motion.KalmanParams)

    def __post_init__(self):
        for name in (
            "shooter_conf_thresh",
            "gun_conf_thresh",
            "gun_containment_min",
            "iou_gate",
            "alpha_fixed",
            "conf_floor",
        ):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} outside [0, 1]")
        if self.gun_overlap_mode not in GUN_OVERLAP_MODES:
            raise ValueError(f"gun_overlap_mode must be one of {GUN_OVERLAP_MODES}")
        if self.max_age < 1:
            raise ValueError("max_age must be >= 1")
        if self.delta_t < 1:
            raise ValueError("delta_t must be >= 1")
        if self.min_hits < 1:
            raise ValueError("min_hits must be >= 1")

    def replace(self, **kwargs) -> "TrackerConfig":
        current = {f.name: getattr(self, f.name) for f in fields(self)}
        current.update(kwargs)
        return TrackerConfig(**current)


@dataclass
class TrackObservation:
    track_id: int
    bbox: BBox
    confidence: float
    confirmed: bool


@dataclass
class FrameResult:
    frame: int
    entries: list[TrackObservation]


class Track:
    """Identity-bearing state for one tracked person."""

    def __init__(self, track_id: int, det: Detection, cfg: TrackerConfig):
        self.id = track_id
        self.state = motion.kf_init(det.bbox, cfg.kalman)
        self.snapshot = motion.StateSnapshot(det.frame, self.state.copy())
        # Ring of accepted observations keyed by frame, newest kept.
        self.history: dict[int, BBox] = {det.frame: det.bbox}
        self.history_capacity = max(cfg.delta_t + 1, 2)
        self.ema_embedding: np.ndarray | None = None
        if det.embedding is not None:
            self.ema_embedding = association.normalize_embedding(det.embedding)
        self.hits = 1
        self.time_since_update = 0
        self.confirmed = False  # set exactly once, at initialization
        self.last_confidence = det.confidence

    def predict(self, cfg: TrackerConfig) -> BBox:
        self.state = motion.kf_predict(self.state, cfg.kalman)
        self.time_since_update += 1
        return motion.state_to_bbox(self.state)

    def last_observation(self) -> BBox:
        return self.history[max(self.history)]

    def update(self, det: Detection, cfg: TrackerConfig) -> None:
        gap = self.time_since_update
        if gap > 1:
            t_last = self.snapshot.frame
            self.state = motion.oru_reupdate(
                self.snapshot, self.history[t_last], det.bbox, t_last, det.frame, cfg.kalman
            )
        else:
            self.state = motion.kf_update(self.state, det.bbox, cfg.kalman)
        self.history[det.frame] = det.bbox
        while len(self.history) > self.history_capacity:
            del self.history[min(self.history)]
        self.snapshot = motion.StateSnapshot(det.frame, self.state.copy())
        self.hits += 1
        self.time_since_update = 0
        self.last_confidence = det.confidence
        if det.embedding is not None:
            self._update_embedding(det.embedding, det.confidence, cfg)

    def _update_embedding(self, emb: np.ndarray, conf: float, cfg: TrackerConfig) -> None:
        emb = association.normalize_embedding(emb)
        if self.ema_embedding is None:
            self.ema_embedding = emb
            return
        # Low-confidence detections move the appearance model less: the EMA
        # factor scales linearly from 1 at conf_floor down to alpha_fixed at
        # full confidence.
        if cfg.conf_floor >= 1.0:
            trust = 1.0
        else:
            trust = (min(max(conf, cfg.conf_floor), 1.0) - cfg.conf_floor) / (1.0 - cfg.conf_floor)
        alpha = cfg.alpha_fixed + (1.0 - cfg.alpha_fixed) * (1.0 - trust)
        mixed = alpha * self.ema_embedding + (1.0 - alpha) * emb
        self.ema_embedding = association.normalize_embedding(mixed)


def confirm_with_gun(shooter: Detection, guns: Sequence[Detection], cfg: TrackerConfig) -> bool:
    """True iff some weapon detection overlaps the person box under the configured mode."""
    for gun in guns:
        if cfg.gun_overlap_mode == "any_overlap":
            if intersection_area(gun.bbox, shooter.bbox) > 0.0:
                return True
        else:
            if containment_ratio(gun.bbox, shooter.bbox) >= cfg.gun_containment_min:
                return True
    return False


class ShooterTracker:
    """Owns one sequence; strictly single-threaded, frames in increasing order."""

    STAGES = ("predict", "associate", "recover", "lifecycle")

    def __init__(self, config: TrackerConfig | None = None, collect_timings: bool = False):
        self.config = config or TrackerConfig()
        self.tracks: list[Track] = []
        self._next_id = 1
        self._last_frame: int | None = None
        self.timings: dict[str, list[float]] | None = (
            {name: [] for name in self.STAGES} if collect_timings else None
        )

    @property
    def last_frame(self) -> int | None:
        return self._last_frame

    def step(self, frame: int, detections: Sequence[Detection]) -> FrameResult:
        if self._last_frame is not None and frame <= self._last_frame:
            raise ValueError(f"frames must strictly increase: got {frame} after {self._last_frame}")
        self._last_frame = frame
        for det in detections:
            if det.frame != frame:
                raise ValueError(f"detection frame {det.frame} does not match step frame {frame}")
        cfg = self.config

        shooters = [
            d for d in detections
            if d.class_id == ClassId.SHOOTER and d.confidence >= cfg.shooter_conf_thresh
        ]
        guns = [
            d for d in detections
            if d.class_id == ClassId.GUN and d.confidence >= cfg.gun_conf_thresh
        ]

        t0 = time.perf_counter()
        predicted = [track.predict(cfg) for track in self.tracks]
        t1 = time.perf_counter()

        unmatched_tracks, unmatched_dets = self._associate_fused(predicted, shooters)
        t2 = time.perf_counter()

        if cfg.ocr and unmatched_tracks and unmatched_dets:
            unmatched_tracks, unmatched_dets = self._recover(
                unmatched_tracks, unmatched_dets, shooters
            )
        t3 = time.perf_counter()

        for di in unmatched_dets:
            det = shooters[di]
            if not cfg.gun_confirm:
                self._start_track(det, confirmed=False)
            elif confirm_with_gun(det, guns, cfg):
                self._start_track(det, confirmed=True)
            # otherwise the detection is discarded with no record

        entries: list[TrackObservation] = []
        alive: list[Track] = []
        for track in self.tracks:
            if track.time_since_update == 0 and track.hits >= cfg.min_hits:
                entries.append(
                    TrackObservation(
                        track_id=track.id,
                        bbox=motion.state_to_bbox(track.state),
                        confidence=track.last_confidence,
                        confirmed=track.confirmed,
                    )
                )
            if track.time_since_update <= cfg.max_age:
                alive.append(track)
        self.tracks = alive
        entries.sort(key=lambda e: e.track_id)
        t4 = time.perf_counter()

        if self.timings is not None:
            self.timings["predict"].append(t1 - t0)
            self.timings["associate"].append(t2 - t1)
            self.timings["recover"].append(t3 - t2)
            self.timings["lifecycle"].append(t4 - t3)
        return FrameResult(frame=frame, entries=entries)

    def _associate_fused(
        self, predicted: list[BBox], shooters: list[Detection]
    ) -> tuple[list[int], list[int]]:
        if not self.tracks or not shooters:
            return list(range(len(self.tracks))), list(range(len(shooters)))
        cfg = self.config
        det_boxes = [d.bbox for d in shooters]
        iou_c = association.iou_cost(predicted, det_boxes, cfg.iou_gate)
        angles = association.ocm_matrix(
            [t.history for t in self.tracks], det_boxes, cfg.delta_t
        )
        sims = association.similarity_matrix(
            [t.ema_embedding for t in self.tracks], [d.embedding for d in shooters]
        )
        fused = association.fuse_costs(
            iou_c, angles, sims, cfg.lambda_ocm, cfg.lambda_app, cfg.w_aw
        )
        matches, unmatched_tracks, unmatched_dets = association.solve_assignment(fused)
        for ti, di in matches:
            self.tracks[ti].update(shooters[di], cfg)
        return unmatched_tracks, unmatched_dets

    def _recover(
        self, unmatched_tracks: list[int], unmatched_dets: list[int], shooters: list[Detection]
    ) -> tuple[list[int], list[int]]:
        cfg = self.config
        last_boxes = [self.tracks[ti].last_observation() for ti in unmatched_tracks]
        det_boxes = [shooters[di].bbox for di in unmatched_dets]
        matches, um_rows, um_cols = association.solve_assignment(
            association.iou_cost(last_boxes, det_boxes, cfg.iou_gate)
        )
        for row, col in matches:
            self.tracks[unmatched_tracks[row]].update(shooters[unmatched_dets[col]], cfg)
        return [unmatched_tracks[r] for r in um_rows], [unmatched_dets[c] for c in um_cols]

    def _start_track(self, det: Detection, confirmed: bool) -> None:
        track = Track(self._next_id, det, self.config)
        track.confirmed = confirmed
        self._next_id += 1
        self.tracks.append(track)


def group_by_frame(detections: Iterable[Detection]) -> dict[int, list[Detection]]:
    grouped: dict[int, list[Detection]] = {}
    for det in detections:
        grouped.setdefault(det.frame, []).append(det)
    return grouped


def run_sequence(
    detections: Iterable[Detection] | Mapping[int, Sequence[Detection]],
    config: TrackerConfig | None = None,
) -> list[FrameResult]:
    """Fold the tracker over every frame from the first to the last detection frame.

    Frames without detections are stepped with an empty list so tracks age
    through gaps exactly as they would on live video.
    """
    if isinstance(detections, Mapping):
        grouped = {f: list(ds) for f, ds in detections.items()}
    else:
        grouped = group_by_frame(detections)
    if not grouped:
        return []
    tracker = ShooterTracker(config)
    results = []
    for frame in range(min(grouped), max(grouped) + 1):
        results.append(tracker.step(frame, grouped.get(frame, [])))
    return results
