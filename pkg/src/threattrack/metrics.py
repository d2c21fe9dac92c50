"""Tracking evaluation: CLEAR accounting, identity metrics, windowed P/R/F1, sweeps.

Only person-class boxes are evaluated; weapon boxes exist solely to gate track
initialization and never appear in tracker output. The spatial match criterion
is IoU >= iou_thresh (0.5 by default) everywhere.

Undefined ratios (zero denominators) are reported as NaN rather than silently
mapped to a number, except in the windowed system metric where an empty side
scores 0 so the F1 curve stays defined.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import association
from .geometry import BBox, iou
from .tracker import ClassId, Detection, FrameResult, TrackerConfig, run_sequence

DEFAULT_IOU_THRESH = 0.5

# Pairing cost used to exclude impossible slots in the identity-metric matrix.
_FORBIDDEN = 1e12


@dataclass(frozen=True)
class GtBox:
    frame: int
    gt_id: int
    class_id: ClassId
    bbox: BBox


@dataclass(frozen=True)
class TrackBox:
    frame: int
    track_id: int
    class_id: ClassId
    bbox: BBox
    confidence: float
    confirmed: bool


@dataclass
class MotCounts:
    matched: int = 0
    fp: int = 0
    fn: int = 0
    idsw: int = 0
    num_gt: int = 0
    idtp: int = 0
    idfp: int = 0
    idfn: int = 0


@dataclass
class MetricsReport:
    mota: float
    precision: float
    recall: float
    idf1: float
    idp: float
    idr: float


@dataclass
class WindowedReport:
    window: int  # effective (odd) window actually evaluated
    precision: float
    recall: float
    f1: float


@dataclass
class SweepRow:
    mode: str  # "gun_confirmed" or "shooter_only"
    gun_thresh: float
    shooter_thresh: float
    counts: MotCounts
    report: MetricsReport


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else math.nan


def report_from_counts(counts: MotCounts) -> MetricsReport:
    """Derive the metric ratios from raw accumulator counts."""
    mota = 1.0 - _ratio(counts.fp + counts.fn + counts.idsw, counts.num_gt)
    return MetricsReport(
        mota=mota,
        precision=_ratio(counts.matched, counts.matched + counts.fp),
        recall=_ratio(counts.matched, counts.num_gt),
        idf1=_ratio(2 * counts.idtp, 2 * counts.idtp + counts.idfp + counts.idfn),
        idp=_ratio(counts.idtp, counts.idtp + counts.idfp),
        idr=_ratio(counts.idtp, counts.idtp + counts.idfn),
    )


def track_boxes_from_results(results: Iterable[FrameResult]) -> list[TrackBox]:
    rows = []
    for res in results:
        for entry in res.entries:
            rows.append(
                TrackBox(
                    frame=res.frame,
                    track_id=entry.track_id,
                    class_id=ClassId.SHOOTER,
                    bbox=entry.bbox,
                    confidence=entry.confidence,
                    confirmed=entry.confirmed,
                )
            )
    return rows


def _shooter_gt(gt: Iterable[GtBox]) -> list[GtBox]:
    return [g for g in gt if g.class_id == ClassId.SHOOTER]


def _shooter_pred(pred: Iterable[TrackBox]) -> list[TrackBox]:
    return [p for p in pred if p.class_id == ClassId.SHOOTER]


def _by_frame(rows, key):
    out: dict[int, list] = {}
    for row in rows:
        out.setdefault(row.frame, []).append(row)
    return out


def compute_clear(
    gt: Sequence[GtBox], pred: Sequence[TrackBox], iou_thresh: float = DEFAULT_IOU_THRESH
) -> tuple[MotCounts, MetricsReport]:
    """Frame-level accounting: matches, FP, FN, and identity switches.

    Matching prefers continuation: a (gt, track) pair matched in the previous
    frame is kept while both are present and still overlap at the threshold;
    the remainder are paired by minimum-cost assignment on 1 - IoU. A switch
    is counted whenever a ground-truth id is matched to a different track id
    than the one it was last matched with, however long ago that was.
    """
    gt = _shooter_gt(gt)
    pred = _shooter_pred(pred)
    gt_frames = _by_frame(gt, key=None)
    pred_frames = _by_frame(pred, key=None)
    counts = MotCounts(num_gt=len(gt))

    prev_pairs: dict[int, int] = {}  # gt_id -> track_id matched in the previous frame
    last_matched: dict[int, int] = {}  # gt_id -> track_id at its most recent match
    for frame in sorted(set(gt_frames) | set(pred_frames)):
        gts = gt_frames.get(frame, [])
        preds = pred_frames.get(frame, [])
        pred_by_id = {p.track_id: p for p in preds}
        frame_pairs: dict[int, int] = {}

        leftover_gt = []
        for g in gts:
            kept = prev_pairs.get(g.gt_id)
            if kept is not None and kept in pred_by_id and kept not in frame_pairs.values():
                if iou(g.bbox, pred_by_id[kept].bbox) >= iou_thresh:
                    frame_pairs[g.gt_id] = kept
                    continue
            leftover_gt.append(g)
        leftover_pred = [p for p in preds if p.track_id not in frame_pairs.values()]

        if leftover_gt and leftover_pred:
            cost = association.iou_cost(
                [g.bbox for g in leftover_gt], [p.bbox for p in leftover_pred], iou_thresh
            )
            matches, _, _ = association.solve_assignment(cost)
            for gi, pi in matches:
                frame_pairs[leftover_gt[gi].gt_id] = leftover_pred[pi].track_id

        counts.matched += len(frame_pairs)
        counts.fn += len(gts) - len(frame_pairs)
        counts.fp += len(preds) - len(frame_pairs)
        for gt_id, track_id in frame_pairs.items():
            if gt_id in last_matched and last_matched[gt_id] != track_id:
                counts.idsw += 1
            last_matched[gt_id] = track_id
        prev_pairs = frame_pairs
    return counts, report_from_counts(counts)


def compute_id_metrics(
    gt: Sequence[GtBox], pred: Sequence[TrackBox], iou_thresh: float = DEFAULT_IOU_THRESH
) -> tuple[int, int, int]:
    """Globally optimal identity pairing; returns (IDTP, IDFP, IDFN).

    The bipartite problem pairs each ground-truth identity with at most one
    predicted identity; the cost of a pair is the number of frames on which
    the two fail to match at the threshold, counting both sides' unmatched
    frames. Dummy rows and columns let identities stay unpaired at the cost of
    all their frames.
    """
    gt = _shooter_gt(gt)
    pred = _shooter_pred(pred)
    gt_ids = sorted({g.gt_id for g in gt})
    pred_ids = sorted({p.track_id for p in pred})
    gt_traj = {i: {g.frame: g.bbox for g in gt if g.gt_id == i} for i in gt_ids}
    pred_traj = {i: {p.frame: p.bbox for p in pred if p.track_id == i} for i in pred_ids}
    total_gt = sum(len(t) for t in gt_traj.values())
    total_pred = sum(len(t) for t in pred_traj.values())
    n_g, n_p = len(gt_ids), len(pred_ids)
    if n_g == 0 or n_p == 0:
        return 0, total_pred, total_gt

    overlap = np.zeros((n_g, n_p), dtype=int)
    for a, g_id in enumerate(gt_ids):
        for b, p_id in enumerate(pred_ids):
            traj_g, traj_p = gt_traj[g_id], pred_traj[p_id]
            overlap[a, b] = sum(
                1
                for f, box in traj_g.items()
                if f in traj_p and iou(box, traj_p[f]) >= iou_thresh
            )

    size = n_g + n_p
    cost = np.full((size, size), _FORBIDDEN)
    for a, g_id in enumerate(gt_ids):
        for b, p_id in enumerate(pred_ids):
            cost[a, b] = len(gt_traj[g_id]) + len(pred_traj[p_id]) - 2 * overlap[a, b]
        cost[a, n_p + a] = len(gt_traj[g_id])  # leave this identity unpaired
    for b, p_id in enumerate(pred_ids):
        cost[n_g + b, b] = len(pred_traj[p_id])
    cost[n_g:, n_p:] = 0.0

    rows, cols = linear_sum_assignment(cost)
    idtp = int(sum(overlap[a, b] for a, b in zip(rows, cols) if a < n_g and b < n_p))
    return idtp, total_pred - idtp, total_gt - idtp


def evaluate(
    gt: Sequence[GtBox], pred: Sequence[TrackBox], iou_thresh: float = DEFAULT_IOU_THRESH
) -> tuple[MotCounts, MetricsReport]:
    """Full evaluation: CLEAR counts plus the identity pairing, one report."""
    counts, _ = compute_clear(gt, pred, iou_thresh)
    counts.idtp, counts.idfp, counts.idfn = compute_id_metrics(gt, pred, iou_thresh)
    return counts, report_from_counts(counts)


def normalize_window(window: int) -> int:
    """Window sizes are centered spans; even requests round up to the next odd."""
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    return window if window % 2 == 1 else window + 1


def windowed_prf(
    gt: Sequence[GtBox],
    pred: Sequence[TrackBox],
    window: int,
    iou_thresh: float = DEFAULT_IOU_THRESH,
) -> WindowedReport:
    """System-level P/R/F1 with a symmetric frame window; identities ignored.

    A ground-truth box counts as covered if any predicted box within the
    window around its frame overlaps it at the threshold (compared at the
    ground-truth box's own coordinates); a predicted box counts as valid under
    the mirrored rule. window=1 degenerates to frame-exact per-box P/R.
    """
    window = normalize_window(window)
    radius = window // 2
    gt = _shooter_gt(gt)
    pred = _shooter_pred(pred)
    gt_frames = _by_frame(gt, key=None)
    pred_frames = _by_frame(pred, key=None)

    def hit_in_window(box: BBox, frame: int, table: dict[int, list]) -> bool:
        for f in range(frame - radius, frame + radius + 1):
            for other in table.get(f, []):
                if iou(box, other.bbox) >= iou_thresh:
                    return True
        return False

    covered = sum(1 for g in gt if hit_in_window(g.bbox, g.frame, pred_frames))
    valid = sum(1 for p in pred if hit_in_window(p.bbox, p.frame, gt_frames))
    recall = covered / len(gt) if gt else 0.0
    precision = valid / len(pred) if pred else 0.0
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return WindowedReport(window=window, precision=precision, recall=recall, f1=f1)


DEFAULT_GRID = tuple(i / 10 for i in range(1, 10))
SWEEP_MODES = ("gun_confirmed", "shooter_only")


def sweep_thresholds(
    detections: Sequence[Detection],
    gt: Sequence[GtBox],
    config: TrackerConfig | None = None,
    grid: Sequence[float] = DEFAULT_GRID,
    iou_thresh: float = DEFAULT_IOU_THRESH,
    jobs: int = 1,
) -> list[SweepRow]:
    """Run the tracker over the full (gun, shooter) threshold grid in both modes.

    Detections should be raw (unthresholded); each grid point applies its own
    confidence cuts. Row order is fixed to (mode, gun threshold, shooter
    threshold) regardless of how the grid points were executed.
    """
    base = config or TrackerConfig()
    points = [
        (mode, gun_t, shooter_t)
        for mode in SWEEP_MODES
        for gun_t in grid
        for shooter_t in grid
    ]

    def run_point(point):
        mode, gun_t, shooter_t = point
        cfg = base.replace(
            gun_conf_thresh=gun_t,
            shooter_conf_thresh=shooter_t,
            gun_confirm=(mode == "gun_confirmed"),
        )
        rows = track_boxes_from_results(run_sequence(list(detections), cfg))
        counts, report = evaluate(gt, rows, iou_thresh)
        return SweepRow(mode, gun_t, shooter_t, counts, report)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_point, points))
    else:
        results = [run_point(p) for p in points]
    results.sort(key=lambda r: (r.mode, r.gun_thresh, r.shooter_thresh))
    return results
