"""Readers and writers for the interchange formats.

All text formats are comma-separated with `\n` line endings, `#` comments, and
blank lines ignored. Frames are 1-based in files and 0-based in memory; the
conversion happens here and nowhere else. Boxes are corner-based (x, y = top
left) in continuous pixels. Floats are written with up to six decimal places,
trailing zeros trimmed, so identical runs produce byte-identical files.

Formats:
  detections   frame,class,x,y,w,h,conf          class: 0=Shooter, 1=Gun
  embeddings   JSON Lines {"frame": f, "det": i, "v": [...]}; det is the
               0-based index of the detection within its frame, in detection-
               file order; all vectors share one dimension and are
               L2-normalized on load
  ground truth frame,id,class,x,y,w,h
  tracks       frame,id,class,x,y,w,h,conf,confirmed   confirmed: 0/1
  color map    color_hex,class,object_id CSV with header
  config       flat `key = value` lines
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import association
from .geometry import BBox
from .metrics import GtBox, MetricsReport, MotCounts, SweepRow, TrackBox, WindowedReport
from .synthdata import ColorMap, ColorMapEntry, MaskClass
from .tracker import ClassId, Detection, TrackerConfig

CONFIG_ENV_VAR = "THREATTRACK_CONFIG"

METRICS_HEADER = "num_gt,matched,fp,fn,idsw,idtp,idfp,idfn,mota,precision,recall,idf1,idp,idr"
SWEEP_HEADER = "mode,gun_thresh,shooter_thresh," + METRICS_HEADER
WINDOWED_HEADER = "requested_window,window,precision,recall,f1"
COLOR_MAP_HEADER = "color_hex,class,object_id"


class FormatError(ValueError):
    """Malformed or semantically invalid interchange file."""


@dataclass
class SequenceBundle:
    """Everything known about one sequence, as loaded from files."""

    detections: list[Detection]
    embeddings: dict[tuple[int, int], np.ndarray] | None = None
    ground_truth: list[GtBox] | None = None
    frame_rate: float | None = None
    image_size: tuple[int, int] | None = None


def fmt(value) -> str:
    """Canonical text form: ints plain, floats with <= 6 decimals, no trailing zeros."""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    v = float(value)
    if math.isnan(v):
        return "nan"
    s = f"{v:.6f}".rstrip("0").rstrip(".")
    if s in ("", "-", "-0"):
        return "0"
    return s


def _data_lines(path) -> list[tuple[int, str]]:
    lines = []
    with open(path, "r", encoding="utf-8") as f:
        for n, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            lines.append((n, line))
    return lines


def _parse_int(text: str, path, line_no: int, what: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise FormatError(f"{path}:{line_no}: {what} is not an integer: {text!r}") from None


def _parse_float(text: str, path, line_no: int, what: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise FormatError(f"{path}:{line_no}: {what} is not a number: {text!r}") from None
    if math.isnan(v) or math.isinf(v):
        raise FormatError(f"{path}:{line_no}: {what} is not finite: {text!r}")
    return v


def _parse_frame(text: str, path, line_no: int) -> int:
    frame = _parse_int(text, path, line_no, "frame")
    if frame < 1:
        raise FormatError(f"{path}:{line_no}: frame must be a positive integer, got {frame}")
    return frame - 1  # files are 1-based, memory is 0-based


def _parse_class(text: str, path, line_no: int) -> ClassId:
    value = _parse_int(text, path, line_no, "class")
    try:
        return ClassId(value)
    except ValueError:
        raise FormatError(f"{path}:{line_no}: unknown class id {value} (0=Shooter, 1=Gun)") from None


def _parse_bbox(parts: Sequence[str], path, line_no: int) -> BBox:
    x = _parse_float(parts[0], path, line_no, "x")
    y = _parse_float(parts[1], path, line_no, "y")
    w = _parse_float(parts[2], path, line_no, "w")
    h = _parse_float(parts[3], path, line_no, "h")
    if w < 0 or h < 0:
        raise FormatError(f"{path}:{line_no}: negative box size w={w}, h={h}")
    return BBox(x, y, w, h)


def _expect_fields(parts: list[str], count: int, path, line_no: int) -> None:
    if len(parts) != count:
        raise FormatError(f"{path}:{line_no}: expected {count} fields, got {len(parts)}")


def read_detections(path) -> list[Detection]:
    """Load detections, stably sorted by frame (in-frame file order preserved)."""
    rows: list[Detection] = []
    for line_no, line in _data_lines(path):
        parts = [p.strip() for p in line.split(",")]
        _expect_fields(parts, 7, path, line_no)
        frame = _parse_frame(parts[0], path, line_no)
        class_id = _parse_class(parts[1], path, line_no)
        bbox = _parse_bbox(parts[2:6], path, line_no)
        conf = _parse_float(parts[6], path, line_no, "confidence")
        if not 0.0 <= conf <= 1.0:
            raise FormatError(f"{path}:{line_no}: confidence out of range: {conf}")
        try:
            rows.append(Detection(frame=frame, class_id=class_id, bbox=bbox, confidence=conf))
        except ValueError as exc:
            raise FormatError(f"{path}:{line_no}: {exc}") from None
    rows.sort(key=lambda d: d.frame)  # stable: in-frame order is file order
    return rows


def write_detections(path, detections: Iterable[Detection]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for d in detections:
            b = d.bbox
            f.write(
                f"{d.frame + 1},{int(d.class_id)},{fmt(b.x)},{fmt(b.y)},"
                f"{fmt(b.w)},{fmt(b.h)},{fmt(d.confidence)}\n"
            )


def read_embeddings(path, detections: Sequence[Detection]) -> dict[tuple[int, int], np.ndarray]:
    """Load the (frame, det index) -> vector table, validated against `detections`."""
    per_frame: dict[int, int] = {}
    for d in detections:
        per_frame[d.frame] = per_frame.get(d.frame, 0) + 1
    table: dict[tuple[int, int], np.ndarray] = {}
    dim: int | None = None
    for line_no, line in _data_lines(path):
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}:{line_no}: invalid JSON: {exc}") from None
        if not isinstance(record, dict) or not {"frame", "det", "v"} <= record.keys():
            raise FormatError(f"{path}:{line_no}: record needs keys frame, det, v")
        frame = record["frame"]
        det = record["det"]
        if not isinstance(frame, int) or frame < 1:
            raise FormatError(f"{path}:{line_no}: frame must be a positive integer, got {frame!r}")
        if not isinstance(det, int) or det < 0:
            raise FormatError(f"{path}:{line_no}: det must be a non-negative integer, got {det!r}")
        frame -= 1
        if det >= per_frame.get(frame, 0):
            raise FormatError(
                f"{path}:{line_no}: detection index {det} does not exist in frame {frame + 1} "
                f"({per_frame.get(frame, 0)} detections)"
            )
        vector = np.asarray(record["v"], dtype=float)
        if vector.ndim != 1 or vector.size == 0:
            raise FormatError(f"{path}:{line_no}: v must be a non-empty flat vector")
        if dim is None:
            dim = vector.size
        elif vector.size != dim:
            raise FormatError(
                f"{path}:{line_no}: embedding dimension {vector.size} differs from {dim}"
            )
        try:
            table[(frame, det)] = association.normalize_embedding(vector)
        except ValueError as exc:
            raise FormatError(f"{path}:{line_no}: {exc}") from None
    return table


def write_embeddings(path, records: Mapping[tuple[int, int], np.ndarray]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for (frame, det) in sorted(records):
            vector = records[(frame, det)]
            payload = {"frame": frame + 1, "det": det, "v": [float(v) for v in vector]}
            f.write(json.dumps(payload, separators=(",", ":")) + "\n")


def attach_embeddings(
    detections: Sequence[Detection], table: Mapping[tuple[int, int], np.ndarray]
) -> list[Detection]:
    """Pair each detection with its embedding by (frame, in-frame index)."""
    out = []
    index_in_frame: dict[int, int] = {}
    for d in detections:
        idx = index_in_frame.get(d.frame, 0)
        index_in_frame[d.frame] = idx + 1
        emb = table.get((d.frame, idx))
        out.append(replace(d, embedding=emb) if emb is not None else d)
    return out


def load_sequence(dets_path, embs_path=None) -> list[Detection]:
    detections = read_detections(dets_path)
    if embs_path is not None:
        detections = attach_embeddings(detections, read_embeddings(embs_path, detections))
    return detections


def read_ground_truth(path) -> list[GtBox]:
    rows: list[GtBox] = []
    seen: set[tuple[int, int]] = set()
    for line_no, line in _data_lines(path):
        parts = [p.strip() for p in line.split(",")]
        _expect_fields(parts, 7, path, line_no)
        frame = _parse_frame(parts[0], path, line_no)
        gt_id = _parse_int(parts[1], path, line_no, "id")
        class_id = _parse_class(parts[2], path, line_no)
        bbox = _parse_bbox(parts[3:7], path, line_no)
        if (frame, gt_id) in seen:
            raise FormatError(f"{path}:{line_no}: duplicate box for id {gt_id} in frame {frame + 1}")
        seen.add((frame, gt_id))
        rows.append(GtBox(frame=frame, gt_id=gt_id, class_id=class_id, bbox=bbox))
    rows.sort(key=lambda g: g.frame)
    return rows


def write_ground_truth(path, rows: Iterable[GtBox]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for g in rows:
            b = g.bbox
            f.write(
                f"{g.frame + 1},{g.gt_id},{int(g.class_id)},{fmt(b.x)},{fmt(b.y)},"
                f"{fmt(b.w)},{fmt(b.h)}\n"
            )


def read_tracks(path) -> list[TrackBox]:
    rows: list[TrackBox] = []
    for line_no, line in _data_lines(path):
        parts = [p.strip() for p in line.split(",")]
        _expect_fields(parts, 9, path, line_no)
        frame = _parse_frame(parts[0], path, line_no)
        track_id = _parse_int(parts[1], path, line_no, "id")
        class_id = _parse_class(parts[2], path, line_no)
        bbox = _parse_bbox(parts[3:7], path, line_no)
        conf = _parse_float(parts[7], path, line_no, "confidence")
        if not 0.0 <= conf <= 1.0:
            raise FormatError(f"{path}:{line_no}: confidence out of range: {conf}")
        confirmed = _parse_int(parts[8], path, line_no, "confirmed")
        if confirmed not in (0, 1):
            raise FormatError(f"{path}:{line_no}: confirmed must be 0 or 1, got {confirmed}")
        rows.append(
            TrackBox(
                frame=frame,
                track_id=track_id,
                class_id=class_id,
                bbox=bbox,
                confidence=conf,
                confirmed=bool(confirmed),
            )
        )
    rows.sort(key=lambda t: t.frame)
    return rows


def write_tracks(path, rows: Iterable[TrackBox]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for t in rows:
            b = t.bbox
            f.write(
                f"{t.frame + 1},{t.track_id},{int(t.class_id)},{fmt(b.x)},{fmt(b.y)},"
                f"{fmt(b.w)},{fmt(b.h)},{fmt(t.confidence)},{1 if t.confirmed else 0}\n"
            )


def _metrics_values(counts: MotCounts, report: MetricsReport) -> str:
    return ",".join(
        [
            fmt(counts.num_gt),
            fmt(counts.matched),
            fmt(counts.fp),
            fmt(counts.fn),
            fmt(counts.idsw),
            fmt(counts.idtp),
            fmt(counts.idfp),
            fmt(counts.idfn),
            fmt(report.mota),
            fmt(report.precision),
            fmt(report.recall),
            fmt(report.idf1),
            fmt(report.idp),
            fmt(report.idr),
        ]
    )


def write_metrics_csv(path, counts: MotCounts, report: MetricsReport) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(METRICS_HEADER + "\n")
        f.write(_metrics_values(counts, report) + "\n")


def write_sweep_csv(path, rows: Iterable[SweepRow]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(SWEEP_HEADER + "\n")
        for row in rows:
            f.write(
                f"{row.mode},{fmt(row.gun_thresh)},{fmt(row.shooter_thresh)},"
                + _metrics_values(row.counts, row.report)
                + "\n"
            )


def write_windowed_csv(path, rows: Iterable[tuple[int, WindowedReport]]) -> None:
    """Rows are (requested window, report with the effective odd window)."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(WINDOWED_HEADER + "\n")
        for requested, rep in rows:
            f.write(
                f"{requested},{rep.window},{fmt(rep.precision)},{fmt(rep.recall)},{fmt(rep.f1)}\n"
            )


def read_color_map(path) -> ColorMap:
    entries = []
    for line_no, line in _data_lines(path):
        if line == COLOR_MAP_HEADER:
            continue
        parts = [p.strip() for p in line.split(",")]
        _expect_fields(parts, 3, path, line_no)
        hex_text = parts[0].lstrip("#")
        if len(hex_text) != 6:
            raise FormatError(f"{path}:{line_no}: color must be 6 hex digits, got {parts[0]!r}")
        try:
            color = tuple(int(hex_text[i : i + 2], 16) for i in (0, 2, 4))
        except ValueError:
            raise FormatError(f"{path}:{line_no}: invalid hex color {parts[0]!r}") from None
        try:
            mask_class = MaskClass(parts[1])
        except ValueError:
            names = ", ".join(c.value for c in MaskClass)
            raise FormatError(f"{path}:{line_no}: unknown class {parts[1]!r} (one of {names})") from None
        object_id = _parse_int(parts[2], path, line_no, "object_id")
        entries.append(ColorMapEntry(color, mask_class, object_id))
    try:
        return ColorMap(entries)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def write_color_map(path, color_map: ColorMap) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(COLOR_MAP_HEADER + "\n")
        for e in color_map.entries:
            hex_text = "".join(f"{c:02X}" for c in e.color)
            f.write(f"{hex_text},{e.mask_class.value},{e.object_id}\n")


def read_config(path) -> dict[str, object]:
    """Flat `key = value` file; values are typed by shape (bool/int/float/list/str)."""
    values: dict[str, object] = {}
    for line_no, line in _data_lines(path):
        if "=" not in line:
            raise FormatError(f"{path}:{line_no}: expected `key = value`, got {line!r}")
        key, _, raw = line.partition("=")
        values[key.strip()] = _parse_config_value(raw.strip())
    return values


def _parse_config_value(text: str) -> object:
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    if "," in text:
        return tuple(float(p.strip()) for p in text.split(","))
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


_CONFIG_SCALAR_KEYS = (
    "shooter_conf_thresh",
    "gun_conf_thresh",
    "gun_confirm",
    "gun_overlap_mode",
    "gun_containment_min",
    "iou_gate",
    "lambda_ocm",
    "lambda_app",
    "w_aw",
    "delta_t",
    "alpha_fixed",
    "conf_floor",
    "max_age",
    "min_hits",
    "ocr",
)
_CONFIG_KALMAN_KEYS = {
    "kalman_initial_cov_diag": "initial_cov_diag",
    "kalman_process_noise_diag": "process_noise_diag",
    "kalman_measurement_noise_diag": "measurement_noise_diag",
}


def tracker_config_from_mapping(
    values: Mapping[str, object], base: TrackerConfig | None = None
) -> TrackerConfig:
    cfg = base or TrackerConfig()
    overrides: dict[str, object] = {}
    kalman_kwargs: dict[str, object] = {}
    for key, value in values.items():
        if key in _CONFIG_SCALAR_KEYS:
            overrides[key] = value
        elif key in _CONFIG_KALMAN_KEYS:
            kalman_kwargs[_CONFIG_KALMAN_KEYS[key]] = tuple(value)  # type: ignore[arg-type]
        else:
            raise FormatError(f"unknown config key: {key}")
    if kalman_kwargs:
        current = cfg.kalman
        overrides["kalman"] = type(current)(
            initial_cov_diag=kalman_kwargs.get("initial_cov_diag", current.initial_cov_diag),
            process_noise_diag=kalman_kwargs.get("process_noise_diag", current.process_noise_diag),
            measurement_noise_diag=kalman_kwargs.get(
                "measurement_noise_diag", current.measurement_noise_diag
            ),
        )
    try:
        return cfg.replace(**overrides)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"invalid config value: {exc}") from None


def default_config_path() -> Path | None:
    value = os.environ.get(CONFIG_ENV_VAR)
    return Path(value) if value else None
