import numpy as np
import pytest

from threattrack.geometry import BBox
from threattrack.motion import (
    KalmanParams,
    KalmanState,
    StateSnapshot,
    bbox_to_measurement,
    kf_init,
    kf_predict,
    kf_update,
    measurement_to_bbox,
    oru_reupdate,
    state_to_bbox,
)

PARAMS = KalmanParams()


class ScalarKalman:
    """Independent 1D constant-velocity filter; the (u, du) block of the box
    filter decouples exactly, so this must agree with it to float precision."""

    def __init__(self, u0, p_diag=(10.0, 1e4), q_diag=(1.0, 0.01), r=1.0):
        self.x = np.array([u0, 0.0])
        self.P = np.diag(p_diag)
        self.F = np.array([[1.0, 1.0], [0.0, 1.0]])
        self.Q = np.diag(q_diag)
        self.H = np.array([[1.0, 0.0]])
        self.R = np.array([[r]])

    def predict(self):
        self.x = self.F @ self.x
        self.P = self.F @ self.P @ self.F.T + self.Q

    def update(self, z):
        y = z - self.H @ self.x
        S = self.H @ self.P @ self.H.T + self.R
        K = self.P @ self.H.T @ np.linalg.inv(S)
        self.x = self.x + K @ y
        A = np.eye(2) - K @ self.H
        self.P = A @ self.P @ A.T + K @ self.R @ K.T


class OracleBoxKalman:
    """Second, straightforward implementation of the full 7-state recursion,
    written independently of the module under test."""

    F = np.eye(7)
    F[0, 4] = F[1, 5] = F[2, 6] = 1.0
    H = np.zeros((4, 7))
    H[0, 0] = H[1, 1] = H[2, 2] = H[3, 3] = 1.0

    def __init__(self, z4, params=PARAMS):
        self.x = np.zeros(7)
        self.x[:4] = z4
        self.P = np.diag(np.array(params.initial_cov_diag, dtype=float))
        self.Q = np.diag(np.array(params.process_noise_diag, dtype=float))
        self.R = np.diag(np.array(params.measurement_noise_diag, dtype=float))

    def predict(self):
        if self.x[2] + self.x[6] <= 0:
            self.x[6] = 0.0
        self.x = self.F @ self.x
        self.x[2] = max(self.x[2], 1e-6)
        self.P = self.F @ self.P @ self.F.T + self.Q
        self.P = (self.P + self.P.T) / 2

    def update(self, z4):
        y = z4 - self.H @ self.x
        S = self.H @ self.P @ self.H.T + self.R
        K = self.P @ self.H.T @ np.linalg.inv(S)
        self.x = self.x + K @ y
        A = np.eye(7) - K @ self.H
        self.P = A @ self.P @ A.T + K @ self.R @ K.T
        self.P = (self.P + self.P.T) / 2


def manual_transition_cov(P, q_diag):
    """F P F^T + Q via explicit index loops (no matrix ops)."""
    F = np.eye(7)
    F[0, 4] = F[1, 5] = F[2, 6] = 1.0
    out = np.zeros((7, 7))
    for i in range(7):
        for j in range(7):
            acc = 0.0
            for k in range(7):
                for m in range(7):
                    acc += F[i, k] * P[k, m] * F[j, m]
            out[i, j] = acc
    return out + np.diag(np.asarray(q_diag, dtype=float))


def test_init_converts_box_directly():
    state = kf_init(BBox(0, 0, 10, 10))
    assert np.allclose(state.mean, [5, 5, 100, 1, 0, 0, 0])
    state = kf_init(BBox(10, 20, 4, 8))
    assert np.allclose(state.mean, [12, 24, 32, 0.5, 0, 0, 0])


def test_init_covariance_shape():
    state = kf_init(BBox(3, 4, 5, 6))
    assert np.allclose(state.cov, state.cov.T)
    assert (np.diag(state.cov) > 0).all()


def test_init_rejects_zero_area():
    with pytest.raises(ValueError):
        kf_init(BBox(0, 0, 0, 10))


def test_predict_zero_velocity_fixed_point():
    state = kf_init(BBox(0, 0, 10, 10))
    predicted = kf_predict(state)
    assert np.allclose(predicted.mean[:4], state.mean[:4])


def test_predict_applies_velocity():
    state = kf_init(BBox(0, 0, 10, 10))
    state.mean[4] = 2.0
    predicted = kf_predict(state)
    assert predicted.mean[0] == pytest.approx(5 + 2)


def test_predict_covariance_matches_manual_product():
    rng = np.random.default_rng(7)
    a = rng.normal(size=(7, 7))
    cov = a @ a.T + np.eye(7)
    state = KalmanState(np.array([5, 5, 100, 1, 0.5, -0.2, 0.1]), cov)
    predicted = kf_predict(state, PARAMS)
    expected = manual_transition_cov(cov, PARAMS.process_noise_diag)
    assert np.allclose(predicted.cov, expected, atol=1e-9)
    assert np.trace(predicted.cov) > np.trace(cov)


def test_predict_clamps_area():
    state = kf_init(BBox(0, 0, 2, 2))
    state.mean[6] = -10.0  # would push area negative
    predicted = kf_predict(state)
    assert predicted.mean[2] > 0


def test_update_zero_innovation_keeps_mean():
    state = kf_init(BBox(0, 0, 10, 10))
    state = kf_predict(state)
    z = measurement_to_bbox(state.mean[:4])
    updated = kf_update(state, z)
    assert np.allclose(updated.mean, state.mean, atol=1e-9)


def test_update_rejects_zero_area():
    state = kf_init(BBox(0, 0, 10, 10))
    with pytest.raises(ValueError):
        kf_update(state, BBox(1, 1, 0, 5))


def test_update_shrinks_measured_variances():
    state = kf_init(BBox(0, 0, 10, 10))
    state = kf_predict(state)
    updated = kf_update(state, BBox(1, 0, 10, 10))
    assert (np.diag(updated.cov)[:4] <= np.diag(state.cov)[:4] + 1e-12).all()


def test_velocity_estimate_matches_scalar_oracle():
    """Box sliding +1 px/frame: the u/du trajectory must equal an independent
    scalar filter exactly, and both must estimate the velocity within 0.05 of 1."""
    state = kf_init(BBox(0, 0, 10, 10))
    oracle = ScalarKalman(u0=5.0)
    for t in range(1, 21):
        state = kf_predict(state)
        oracle.predict()
        state = kf_update(state, BBox(float(t), 0, 10, 10))
        oracle.update(np.array([5.0 + t]))
    assert state.mean[4] == pytest.approx(oracle.x[1], abs=1e-9)
    assert abs(state.mean[4] - 1.0) < 0.05


def test_center_prediction_error_converges():
    state = kf_init(BBox(0, 0, 10, 10))
    errors = []
    for t in range(1, 25):
        state = kf_predict(state)
        predicted_center = state_to_bbox(state).center
        true_center = (5.0 + 2.0 * t, 5.0)
        errors.append(np.hypot(*(np.subtract(predicted_center, true_center))))
        state = kf_update(state, BBox(2.0 * t, 0, 10, 10))
    assert errors[19] < 0.5


def test_repeated_identical_observations_converge_covariance():
    state = kf_init(BBox(0, 0, 10, 10))
    prev = state.cov
    delta = np.inf
    for _ in range(200):
        state = kf_predict(state)
        state = kf_update(state, BBox(0, 0, 10, 10))
        delta = np.abs(state.cov - prev).max()
        prev = state.cov
    assert delta < 1e-6


def test_symmetry_preserved_many_steps():
    rng = np.random.default_rng(3)
    state = kf_init(BBox(0, 0, 10, 10))
    for t in range(1, 50):
        state = kf_predict(state)
        assert np.abs(state.cov - state.cov.T).max() < 1e-9
        state = kf_update(state, BBox(rng.uniform(0, 5), rng.uniform(0, 5), 10, 10))
        assert np.abs(state.cov - state.cov.T).max() < 1e-9


def _run_oracle_oru(snapshot_state, z_last, z_new, t_last, t_new):
    oracle = OracleBoxKalman(np.zeros(4))
    oracle.x = snapshot_state.mean.copy()
    oracle.P = snapshot_state.cov.copy()
    m_last = bbox_to_measurement(z_last)
    m_new = bbox_to_measurement(z_new)
    for t in range(t_last + 1, t_new + 1):
        frac = (t - t_last) / (t_new - t_last)
        z = (1 - frac) * m_last + frac * m_new
        oracle.predict()
        oracle.update(z)
    return oracle


def test_oru_zero_gap_equals_predict_update():
    state = kf_init(BBox(0, 0, 10, 10))
    snap = StateSnapshot(4, state.copy())
    z_new = BBox(1, 1, 10, 10)
    direct = kf_update(kf_predict(state), z_new)
    replayed = oru_reupdate(snap, BBox(0, 0, 10, 10), z_new, 4, 5)
    assert np.allclose(replayed.mean, direct.mean, atol=1e-12)
    assert np.allclose(replayed.cov, direct.cov, atol=1e-12)


def test_oru_midpoint_interpolation():
    """Gap of one frame between centers (0,0) and (10,0): the virtual
    observation must sit at center (5,0)."""
    state = kf_init(BBox(-5, -5, 10, 10))
    snap = StateSnapshot(0, state.copy())
    z_last, z_new = BBox(-5, -5, 10, 10), BBox(5, -5, 10, 10)
    replayed = oru_reupdate(snap, z_last, z_new, 0, 2)
    manual = state.copy()
    manual = kf_update(kf_predict(manual), BBox(0, -5, 10, 10))  # center (5, 0)
    manual = kf_update(kf_predict(manual), z_new)
    assert np.allclose(replayed.mean, manual.mean, atol=1e-12)


def test_oru_requires_matching_snapshot_frame():
    state = kf_init(BBox(0, 0, 10, 10))
    snap = StateSnapshot(3, state)
    with pytest.raises(ValueError):
        oru_reupdate(snap, BBox(0, 0, 10, 10), BBox(1, 1, 10, 10), 4, 8)


@pytest.mark.parametrize("seed", range(10))
def test_oru_matches_independent_recursion(seed):
    rng = np.random.default_rng(seed)
    base = BBox(rng.uniform(0, 200), rng.uniform(0, 200), rng.uniform(5, 50), rng.uniform(5, 50))
    state = kf_init(base)
    # Burn in a few regular updates so the snapshot is a realistic mid-track state.
    t_last = 0
    for t in range(1, 4):
        state = kf_update(kf_predict(state), base.translated(2.0 * t, 1.0 * t))
        t_last = t
    snap = StateSnapshot(t_last, state.copy())
    z_last = base.translated(2.0 * t_last, 1.0 * t_last)
    gap = int(rng.integers(2, 21))
    t_new = t_last + gap
    z_new = base.translated(rng.uniform(-40, 40), rng.uniform(-40, 40))
    replayed = oru_reupdate(snap, z_last, z_new, t_last, t_new)
    oracle = _run_oracle_oru(snap.state, z_last, z_new, t_last, t_new)
    assert np.allclose(replayed.mean, oracle.x, atol=1e-9)
    assert np.allclose(replayed.cov, oracle.P, atol=1e-9)
