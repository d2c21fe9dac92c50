"""Shared fixture builders for the test suite."""

from __future__ import annotations

import numpy as np

from threattrack.geometry import BBox
from threattrack.metrics import GtBox, TrackBox
from threattrack.tracker import ClassId, Detection


def det(frame, x, y, w=40.0, h=80.0, conf=0.9, class_id=ClassId.SHOOTER, embedding=None):
    return Detection(
        frame=frame,
        class_id=class_id,
        bbox=BBox(x, y, w, h),
        confidence=conf,
        embedding=embedding,
    )


def gun(frame, x, y, w=12.0, h=8.0, conf=0.95):
    return det(frame, x, y, w, h, conf, class_id=ClassId.GUN)


def gt_box(frame, gt_id, x, y, w=40.0, h=80.0, class_id=ClassId.SHOOTER):
    return GtBox(frame=frame, gt_id=gt_id, class_id=class_id, bbox=BBox(x, y, w, h))


def track_box(frame, track_id, x, y, w=40.0, h=80.0, conf=0.9, confirmed=True):
    return TrackBox(
        frame=frame,
        track_id=track_id,
        class_id=ClassId.SHOOTER,
        bbox=BBox(x, y, w, h),
        confidence=conf,
        confirmed=confirmed,
    )


def pillar_stop_fixture(gun_at_reappearance=True):
    """Shooter walks right for frames 0..9, is occluded for 10 frames, and
    reappears standing at the frame-9 position for frames 20..29.

    The prediction keeps drifting right through the gap, so first-stage
    association fails at reappearance and only the recovery pass (matching
    against the last observed box) can reattach the track. A gun overlaps the
    shooter in frame 0 (initial confirmation) and optionally at frame 20 so an
    unrecovered detection can re-confirm as a fresh identity.
    """
    dets = []
    for f in range(10):
        x = 100.0 + 10.0 * f
        dets.append(det(f, x, 50.0))
        if f == 0:
            dets.append(gun(f, x + 10.0, 70.0))
    for f in range(20, 30):
        dets.append(det(f, 190.0, 50.0))
        if f == 20 and gun_at_reappearance:
            dets.append(gun(f, 200.0, 70.0))
    return dets


def emitted_ids(results):
    ids = set()
    for res in results:
        for entry in res.entries:
            ids.add(entry.track_id)
    return ids


def random_eval_fixture(rng: np.random.Generator, n_gt_ids=4, n_pred_ids=4, frames=12):
    """Random trajectories for metric stress tests.

    Each predicted identity loosely follows one random ground-truth identity
    with jitter that straddles the IoU-0.5 boundary, so fixtures mix clean
    matches, misses, and identity ambiguity.
    """
    gt, pred = [], []
    anchors = {}
    for g in range(1, n_gt_ids + 1):
        x0, y0 = rng.uniform(0, 400, 2)
        anchors[g] = (x0, y0)
        for f in range(frames):
            if rng.random() < 0.8:
                gt.append(gt_box(f, g, x0 + 3.0 * f, y0))
    for p in range(1, n_pred_ids + 1):
        followed = int(rng.integers(1, n_gt_ids + 1))
        x0, y0 = anchors[followed]
        for f in range(frames):
            if rng.random() < 0.8:
                jitter = rng.uniform(-30, 30, 2)
                pred.append(track_box(f, p, x0 + 3.0 * f + jitter[0], y0 + jitter[1]))
    return gt, pred
