"""Latency measurement for the tracking step, per stage and end to end.

Only the tracker is timed; detector and embedding inference happen upstream
and are out of scope here.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import BBox
from .tracker import ClassId, Detection, ShooterTracker, TrackerConfig, group_by_frame


@dataclass
class StageStats:
    mean_ms: float
    p50_ms: float
    p95_ms: float


@dataclass
class BenchResult:
    frames: int
    repeats: int
    stages: dict[str, StageStats]
    total: StageStats
    fps: float


def _stats(seconds: Sequence[float]) -> StageStats:
    ms = np.asarray(seconds) * 1e3
    return StageStats(
        mean_ms=float(ms.mean()),
        p50_ms=float(np.percentile(ms, 50)),
        p95_ms=float(np.percentile(ms, 95)),
    )


def run_bench(
    detections: Sequence[Detection], config: TrackerConfig | None = None, repeat: int = 1
) -> BenchResult:
    """Run the tracker `repeat` times over the sequence, collecting step timings."""
    if repeat < 1:
        raise ValueError("repeat must be >= 1")
    grouped = group_by_frame(detections)
    if not grouped:
        raise ValueError("no detections to benchmark")
    frames = range(min(grouped), max(grouped) + 1)
    stage_times: dict[str, list[float]] = {name: [] for name in ShooterTracker.STAGES}
    totals: list[float] = []
    for _ in range(repeat):
        tracker = ShooterTracker(config, collect_timings=True)
        for frame in frames:
            t0 = time.perf_counter()
            tracker.step(frame, grouped.get(frame, []))
            totals.append(time.perf_counter() - t0)
        for name in ShooterTracker.STAGES:
            stage_times[name].extend(tracker.timings[name])
    total_stats = _stats(totals)
    return BenchResult(
        frames=len(frames),
        repeats=repeat,
        stages={name: _stats(times) for name, times in stage_times.items()},
        total=total_stats,
        fps=1e3 / total_stats.mean_ms if total_stats.mean_ms > 0 else float("inf"),
    )


def synthetic_workload(
    frames: int = 1000, confirmed_tracks: int = 10, dets_per_frame: int = 20
) -> list[Detection]:
    """Deterministic load fixture: `confirmed_tracks` persistent movers (gun-
    confirmed in frame 0) plus unconfirmed clutter filling up to
    `dets_per_frame` person detections per frame."""
    dets: list[Detection] = []
    clutter = max(dets_per_frame - confirmed_tracks, 0)
    for frame in range(frames):
        for k in range(confirmed_tracks):
            x = 50.0 + 120.0 * k + 0.8 * frame
            y = 60.0 + 10.0 * k
            dets.append(Detection(frame, ClassId.SHOOTER, BBox(x, y, 40.0, 80.0), 0.9))
            if frame == 0:
                dets.append(Detection(frame, ClassId.GUN, BBox(x + 10.0, y + 20.0, 12.0, 8.0), 0.95))
        for k in range(clutter):
            x = 3000.0 + 90.0 * k + (frame % 7)
            y = 900.0 + 25.0 * k
            dets.append(Detection(frame, ClassId.SHOOTER, BBox(x, y, 40.0, 80.0), 0.7))
    return dets
