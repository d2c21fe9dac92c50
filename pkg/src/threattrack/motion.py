"""Constant-velocity Kalman filter over bounding boxes, with rollback support.

The state vector is [u, v, s, r, du, dv, ds]: box center (u, v) in pixels,
area s in square pixels, aspect ratio r = w/h, and per-frame rates for the
first three. Aspect ratio is assumed constant. The measurement is [u, v, s, r].

A track keeps a snapshot of the filter taken at its last accepted observation.
When the track is re-associated after a gap, `oru_reupdate` rolls back to that
snapshot and replays the filter along a virtual observation trajectory that
linearly interpolates the measurement between the observation before the gap
and the one after it, discarding the drift accumulated by blind prediction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import BBox

# Floor applied to the area component after predict; keeps s positive when a
# negative area velocity would otherwise drive it through zero.
AREA_FLOOR = 1e-6


@dataclass
class KalmanParams:
    """Noise configuration. Defaults follow the SORT lineage."""

    initial_cov_diag: tuple = (10.0, 10.0, 10.0, 10.0, 1e4, 1e4, 1e4)
    process_noise_diag: tuple = (1.0, 1.0, 1.0, 1.0, 0.01, 0.01, 1e-4)
    measurement_noise_diag: tuple = (1.0, 1.0, 10.0, 10.0)


@dataclass
class KalmanState:
    mean: np.ndarray  # shape (7,)
    cov: np.ndarray  # shape (7, 7)

    def copy(self) -> "KalmanState":
        return KalmanState(self.mean.copy(), self.cov.copy())


@dataclass
class StateSnapshot:
    """Filter state captured at the frame of the last accepted observation."""

    frame: int
    state: KalmanState = field(repr=False)


# Constant-velocity transition: u += du, v += dv, s += ds; r constant.
_F = np.array(
    [
        [1, 0, 0, 0, 1, 0, 0],
        [0, 1, 0, 0, 0, 1, 0],
        [0, 0, 1, 0, 0, 0, 1],
        [0, 0, 0, 1, 0, 0, 0],
        [0, 0, 0, 0, 1, 0, 0],
        [0, 0, 0, 0, 0, 1, 0],
        [0, 0, 0, 0, 0, 0, 1],
    ],
    dtype=float,
)

_H = np.array(
    [
        [1, 0, 0, 0, 0, 0, 0],
        [0, 1, 0, 0, 0, 0, 0],
        [0, 0, 1, 0, 0, 0, 0],
        [0, 0, 0, 1, 0, 0, 0],
    ],
    dtype=float,
)


def bbox_to_measurement(box: BBox) -> np.ndarray:
    """[u, v, s, r] measurement vector for a positive-area box."""
    if box.area <= 0.0:
        raise ValueError(f"zero-area box cannot be measured: {box}")
    u, v = box.center
    return np.array([u, v, box.area, box.w / box.h], dtype=float)


def measurement_to_bbox(z: np.ndarray) -> BBox:
    """Inverse of `bbox_to_measurement`: w = sqrt(s*r), h = s/w."""
    u, v, s, r = float(z[0]), float(z[1]), float(z[2]), float(z[3])
    s = max(s, AREA_FLOOR)
    r = max(r, AREA_FLOOR)
    w = float(np.sqrt(s * r))
    h = s / w
    return BBox(u - w / 2.0, v - h / 2.0, w, h)


def state_to_bbox(state: KalmanState) -> BBox:
    return measurement_to_bbox(state.mean[:4])


def kf_init(z: BBox, params: KalmanParams | None = None) -> KalmanState:
    """Initialize from a first observation: zero velocities, configured covariance."""
    params = params or KalmanParams()
    mean = np.zeros(7)
    mean[:4] = bbox_to_measurement(z)
    cov = np.diag(np.asarray(params.initial_cov_diag, dtype=float))
    return KalmanState(mean, cov)


def kf_predict(state: KalmanState, params: KalmanParams | None = None) -> KalmanState:
    """Advance one frame: mean through F, covariance through F P F^T + Q."""
    params = params or KalmanParams()
    mean = state.mean.copy()
    # Zero the area velocity if it would push the area non-positive this step.
    if mean[2] + mean[6] <= 0.0:
        mean[6] = 0.0
    mean = _F @ mean
    mean[2] = max(mean[2], AREA_FLOOR)
    q = np.diag(np.asarray(params.process_noise_diag, dtype=float))
    cov = _F @ state.cov @ _F.T + q
    cov = (cov + cov.T) / 2.0
    return KalmanState(mean, cov)


def kf_update(state: KalmanState, z: BBox, params: KalmanParams | None = None) -> KalmanState:
    if z.area <= 0.0:
        raise ValueError(f"zero-area box cannot update the filter: {z}")
    return _update_with_measurement(state, bbox_to_measurement(z), params)


def _update_with_measurement(
    state: KalmanState, z: np.ndarray, params: KalmanParams | None = None
) -> KalmanState:
    params = params or KalmanParams()
    r = np.diag(np.asarray(params.measurement_noise_diag, dtype=float))
    innovation = z - _H @ state.mean
    s = _H @ state.cov @ _H.T + r
    gain = state.cov @ _H.T @ np.linalg.inv(s)
    mean = state.mean + gain @ innovation
    # Joseph form keeps the covariance symmetric positive semi-definite.
    a = np.eye(7) - gain @ _H
    cov = a @ state.cov @ a.T + gain @ r @ gain.T
    cov = (cov + cov.T) / 2.0
    return KalmanState(mean, cov)


def oru_reupdate(
    snapshot: StateSnapshot,
    z_last: BBox,
    z_new: BBox,
    t_last: int,
    t_new: int,
    params: KalmanParams | None = None,
) -> KalmanState:
    """Replay the filter from `snapshot` across an observation gap.

    Virtual measurements for the unobserved frames t_last < t < t_new are
    linear interpolations of [u, v, s, r] between `z_last` and `z_new`. The
    replay runs predict+update through every virtual measurement and finally
    through `z_new` itself; the returned state replaces the drifted one.
    With no gap (t_new == t_last + 1) this is exactly predict+update(z_new).
    """
    if t_new <= t_last:
        raise ValueError(f"re-update needs t_new > t_last, got {t_last} -> {t_new}")
    if snapshot.frame != t_last:
        raise ValueError(f"snapshot frame {snapshot.frame} does not match t_last {t_last}")
    m_last = bbox_to_measurement(z_last)
    m_new = bbox_to_measurement(z_new)
    span = t_new - t_last
    state = snapshot.state.copy()
    for t in range(t_last + 1, t_new):
        frac = (t - t_last) / span
        virtual = (1.0 - frac) * m_last + frac * m_new
        state = _update_with_measurement(kf_predict(state, params), virtual, params)
    return _update_with_measurement(kf_predict(state, params), m_new, params)
