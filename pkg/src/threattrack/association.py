"""Cost-matrix construction and assignment for track/detection matching.

The fused cost combines three terms, all computed from observations rather
than filter internals where possible:

  cost = (1 - IoU) + lambda_ocm * angle - (lambda_app + row_boost + col_boost) * sim

where `angle` penalizes direction change between a track's historical motion
and the step towards a candidate detection, `sim` is cosine similarity of
appearance embeddings, and the boosts raise the appearance weight for rows or
columns whose best similarity clearly separates from the second best.

Pairs below the IoU gate are forbidden and can never be matched, whatever the
other terms say.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import BBox, iou

# Stand-in cost for gated pairs; far above any reachable fused cost, kept
# finite so the solver stays well-defined when a forbidden match is forced.
LARGE_COST = 1e5

# Direction vectors shorter than this (in px) carry no usable heading.
_MIN_DIRECTION_NORM = 1e-6


def normalize_embedding(v: np.ndarray) -> np.ndarray:
    """L2-normalize, validating finiteness. Near-unit vectors pass through unchanged."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("embedding contains non-finite values")
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ValueError("embedding has zero norm")
    if abs(norm - 1.0) < 1e-9:
        return v
    return v / norm


@dataclass
class CostMatrix:
    costs: np.ndarray  # (n_tracks, n_detections), lower is better
    forbidden: np.ndarray  # bool mask of gated pairs

    @property
    def shape(self) -> tuple[int, int]:
        return self.costs.shape


def iou_matrix(track_boxes: Sequence[BBox], det_boxes: Sequence[BBox]) -> np.ndarray:
    out = np.zeros((len(track_boxes), len(det_boxes)))
    for i, tb in enumerate(track_boxes):
        for j, db in enumerate(det_boxes):
            out[i, j] = iou(tb, db)
    return out


def iou_cost(
    track_boxes: Sequence[BBox], det_boxes: Sequence[BBox], iou_gate: float = 0.3
) -> CostMatrix:
    """Cost 1 - IoU, with pairs under the gate marked forbidden."""
    overlaps = iou_matrix(track_boxes, det_boxes)
    return CostMatrix(costs=1.0 - overlaps, forbidden=overlaps < iou_gate)


def ocm_cost(history: Mapping[int, BBox], det_box: BBox, delta_t: int) -> float:
    """Angle in [0, pi] between a track's historical heading and the step to `det_box`.

    The historical heading runs from the observation delta_t frames before the
    most recent one to the most recent one; if that exact frame is missing the
    oldest stored observation is used instead. Tracks with fewer than two
    observations, or degenerate (near-zero) direction vectors, contribute 0.
    """
    if len(history) < 2:
        return 0.0
    t_last = max(history)
    ref_frame = t_last - delta_t
    if ref_frame not in history:
        ref_frame = min(history)
    if ref_frame == t_last:
        return 0.0
    hist_vec = np.subtract(history[t_last].center, history[ref_frame].center)
    new_vec = np.subtract(det_box.center, history[t_last].center)
    if np.linalg.norm(hist_vec) < _MIN_DIRECTION_NORM or np.linalg.norm(new_vec) < _MIN_DIRECTION_NORM:
        return 0.0
    cos = float(
        np.dot(hist_vec, new_vec) / (np.linalg.norm(hist_vec) * np.linalg.norm(new_vec))
    )
    return float(np.arccos(np.clip(cos, -1.0, 1.0)))


def ocm_matrix(
    histories: Sequence[Mapping[int, BBox]], det_boxes: Sequence[BBox], delta_t: int
) -> np.ndarray:
    out = np.zeros((len(histories), len(det_boxes)))
    for i, hist in enumerate(histories):
        for j, db in enumerate(det_boxes):
            out[i, j] = ocm_cost(hist, db, delta_t)
    return out


def appearance_cost(track_emb: np.ndarray | None, det_emb: np.ndarray | None) -> float:
    """Cosine similarity of normalized embeddings; 0 (neutral) when either is missing."""
    if track_emb is None or det_emb is None:
        return 0.0
    if track_emb.shape != det_emb.shape:
        raise ValueError(
            f"embedding dimensions differ: {track_emb.shape} vs {det_emb.shape}"
        )
    return float(np.dot(track_emb, det_emb))


def similarity_matrix(
    track_embs: Sequence[np.ndarray | None], det_embs: Sequence[np.ndarray | None]
) -> np.ndarray:
    out = np.zeros((len(track_embs), len(det_embs)))
    for i, te in enumerate(track_embs):
        for j, de in enumerate(det_embs):
            out[i, j] = appearance_cost(te, de)
    return out


def adaptive_boosts(sim: np.ndarray, w_aw: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-row and per-column appearance-weight boosts.

    A row's boost is w_aw times the gap between its best and second-best
    similarity (its discriminativeness); columns are treated symmetrically.
    Rows with fewer than two columns (and vice versa) get 0.
    """
    n_rows, n_cols = sim.shape
    row_boosts = np.zeros(n_rows)
    col_boosts = np.zeros(n_cols)
    if n_cols >= 2:
        part = np.sort(sim, axis=1)
        row_boosts = w_aw * (part[:, -1] - part[:, -2])
    if n_rows >= 2:
        part = np.sort(sim, axis=0)
        col_boosts = w_aw * (part[-1, :] - part[-2, :])
    return row_boosts, col_boosts


def fuse_costs(
    iou_c: CostMatrix,
    angles: np.ndarray,
    sims: np.ndarray,
    lambda_ocm: float,
    lambda_app: float,
    w_aw: float,
) -> CostMatrix:
    """Combine IoU, direction-consistency, and appearance terms into one matrix."""
    if angles.shape != iou_c.shape or sims.shape != iou_c.shape:
        raise ValueError(
            f"matrix shapes differ: iou {iou_c.shape}, angle {angles.shape}, sim {sims.shape}"
        )
    row_boosts, col_boosts = adaptive_boosts(sims, w_aw)
    app_weight = lambda_app + row_boosts[:, None] + col_boosts[None, :]
    fused = iou_c.costs + lambda_ocm * angles - app_weight * sims
    return CostMatrix(costs=fused, forbidden=iou_c.forbidden.copy())


def solve_assignment(
    c: CostMatrix,
) -> tuple[list[tuple[int, int]], list[int], list[int]]:
    """Minimum-cost one-to-one assignment over allowed pairs.

    Rectangular matrices are padded to square with zero-cost dummy slots, so
    the assignment always covers min(rows, cols) pairs before gating; matches
    that land on forbidden pairs are dropped. Ties between equally cheap
    assignments are broken towards the lowest row index, then the lowest
    column index, so repeated runs are bit-identical.
    """
    n_rows, n_cols = c.shape
    if n_rows == 0 or n_cols == 0:
        return [], list(range(n_rows)), list(range(n_cols))
    n = max(n_rows, n_cols)
    padded = np.zeros((n, n))
    padded[:n_rows, :n_cols] = np.where(c.forbidden, LARGE_COST, c.costs)
    col_of_row = _lexicographic_min_assignment(padded)
    matches: list[tuple[int, int]] = []
    unmatched_rows: list[int] = []
    for row in range(n_rows):
        col = col_of_row[row]
        if col >= n_cols or c.forbidden[row, col]:
            unmatched_rows.append(row)
        else:
            matches.append((row, col))
    matched_cols = {col for _, col in matches}
    unmatched_cols = [col for col in range(n_cols) if col not in matched_cols]
    return matches, unmatched_rows, unmatched_cols


def _lexicographic_min_assignment(m: np.ndarray, tol: float = 1e-9) -> list[int]:
    """Column per row of a minimum-total-cost perfect matching on a square matrix.

    Among all optimal matchings, returns the one that assigns row 0 the
    smallest possible column, then row 1 the smallest column compatible with
    that, and so on. Each candidate column is accepted only if an optimal
    completion through it exists, checked with a row-minima lower bound before
    paying for an exact sub-solve.
    """
    n = m.shape[0]
    rows, cols = linear_sum_assignment(m)
    best_total = float(m[rows, cols].sum())
    completion = {int(r): int(c) for r, c in zip(rows, cols)}
    free = sorted(completion.values())
    result: list[int] = []
    prefix = 0.0
    for i in range(n):
        planned = completion[i]
        rest_rows = list(range(i + 1, n))
        chosen = planned
        for j in free:
            if j == planned:
                break  # the planned column is part of a known optimal completion
            if not rest_rows:
                if prefix + m[i, j] <= best_total + tol:
                    chosen = j
                    completion = {i: j}
                    break
                continue
            sub_cols = [col for col in free if col != j]
            sub = m[np.ix_(rest_rows, sub_cols)]
            bound = prefix + m[i, j] + float(sub.min(axis=1).sum())
            if bound > best_total + tol:
                continue
            sub_r, sub_c = linear_sum_assignment(sub)
            total = prefix + m[i, j] + float(sub[sub_r, sub_c].sum())
            if total <= best_total + tol:
                chosen = j
                completion = {rest_rows[a]: sub_cols[b] for a, b in zip(sub_r, sub_c)}
                completion[i] = j
                break
        result.append(chosen)
        prefix += m[i, chosen]
        free.remove(chosen)
    return result
