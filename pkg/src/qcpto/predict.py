"""Next-position prediction, turn classification and ROI construction.

A constant-velocity Kalman filter tracks each user from its measured trace
positions. State is [px, py, vx, vy]; only positions are measured. After the
measurement update at slot tau, a one-step prediction gives the expected
position at tau+1. The signed angle between the reported heading and the
predicted displacement classifies the next movement as a left turn, a right
turn, or straight driving; turning users get a triangular region of interest
pointing sideways from their heading.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Optional

import numpy as np

from .errors import SingularInnovation
from .model import Roi, Turn, VehicleState

PSD_TOL = 1e-9


def _check_psd(mat: np.ndarray, name: str, tol: float = PSD_TOL) -> None:
    if not np.allclose(mat, mat.T, atol=tol):
        raise ValueError(f"{name} must be symmetric")
    eig = np.linalg.eigvalsh(0.5 * (mat + mat.T))
    if eig.min() < -tol:
        raise ValueError(f"{name} must be positive semi-definite, min eig {eig.min():.3e}")


@dataclass(frozen=True)
class KfState:
    """Filter state of one tracked user."""

    x_hat: np.ndarray   # (4,) [px, py, vx, vy]
    p_cov: np.ndarray   # (4, 4)
    a_mat: np.ndarray   # (4, 4) state transition
    h_mat: np.ndarray   # (2, 4) position-selecting measurement matrix
    q_proc: np.ndarray  # (4, 4) process noise covariance
    r_meas: np.ndarray  # (2, 2) measurement noise covariance
    updates: int = 0    # measurement updates consumed so far

    def __post_init__(self):
        for name in ("x_hat", "p_cov", "a_mat", "h_mat", "q_proc", "r_meas"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.x_hat.shape != (4,):
            raise ValueError("state must be a 4-vector")
        _check_psd(self.p_cov, "p_cov")
        _check_psd(self.q_proc, "q_proc")
        _check_psd(self.r_meas, "r_meas")


@dataclass(frozen=True)
class PredictorConfig:
    """Tunables of the mobility predictor; all values config-overridable."""

    delta: float = 1.0
    p0_diag: tuple[float, float, float, float] = (1.0, 1.0, 10.0, 10.0)
    q_diag: tuple[float, float, float, float] = (0.01, 0.01, 0.1, 0.1)
    r_diag: tuple[float, float] = (0.25, 0.25)
    theta_turn: float = math.radians(15.0)
    warmup_slots: int = 3
    roi_height: float = 10.0
    measurement_noise_std: float = 0.0  # optional additive noise, off by default


def cv_transition(delta: float) -> np.ndarray:
    return np.array([
        [1.0, 0.0, delta, 0.0],
        [0.0, 1.0, 0.0, delta],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ])


MEASUREMENT_MATRIX = np.array([
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
])


def init_state(first_pos, cfg: PredictorConfig) -> KfState:
    """Filter for a newly seen user: measured position, zero velocity."""
    x0 = np.array([float(first_pos[0]), float(first_pos[1]), 0.0, 0.0])
    return KfState(
        x_hat=x0,
        p_cov=np.diag(cfg.p0_diag).astype(float),
        a_mat=cv_transition(cfg.delta),
        h_mat=MEASUREMENT_MATRIX.copy(),
        q_proc=np.diag(cfg.q_diag).astype(float),
        r_meas=np.diag(cfg.r_diag).astype(float),
        updates=1,
    )


def kf_predict(s: KfState) -> tuple[np.ndarray, np.ndarray]:
    """One-step-ahead state and covariance prediction."""
    x_pred = s.a_mat @ s.x_hat
    p_pred = s.a_mat @ s.p_cov @ s.a_mat.T + s.q_proc
    p_pred = 0.5 * (p_pred + p_pred.T)
    return x_pred, p_pred


def kf_update(s: KfState, x_pred: np.ndarray, p_pred: np.ndarray,
              z: np.ndarray) -> KfState:
    """Fold measurement z into the predicted state.

    Raises SingularInnovation when the 2x2 innovation covariance is singular
    beyond tolerance 1e-12.
    """
    z = np.asarray(z, dtype=float)
    h = s.h_mat
    innovation = z - h @ x_pred
    s_mat = h @ p_pred @ h.T + s.r_meas
    if abs(float(np.linalg.det(s_mat))) < 1e-12:
        raise SingularInnovation(f"innovation covariance is singular: {s_mat.tolist()}")
    gain = np.linalg.solve(s_mat.T, (p_pred @ h.T).T).T
    x_new = x_pred + gain @ innovation
    p_new = (np.eye(4) - gain @ h) @ p_pred
    p_new = 0.5 * (p_new + p_new.T)
    return replace(s, x_hat=x_new, p_cov=p_new, updates=s.updates + 1)


def coast(s: KfState) -> KfState:
    """Advance a filter one slot without a measurement."""
    x_pred, p_pred = kf_predict(s)
    return replace(s, x_hat=x_pred, p_cov=p_pred)


def signed_heading_angle(heading: float, displacement) -> float:
    """Signed angle from the heading vector to a displacement, ccw positive."""
    hx, hy = math.cos(heading), math.sin(heading)
    dx, dy = float(displacement[0]), float(displacement[1])
    return math.atan2(hx * dy - hy * dx, hx * dx + hy * dy)


def classify_turn(current: VehicleState, predicted_pos,
                  theta_turn: float) -> Turn:
    """Left/Right/Straight from the predicted displacement vs the heading."""
    dx = float(predicted_pos[0]) - current.position[0]
    dy = float(predicted_pos[1]) - current.position[1]
    if dx == 0.0 and dy == 0.0:
        return Turn.STRAIGHT
    phi = signed_heading_angle(current.heading, (dx, dy))
    if phi > theta_turn:
        return Turn.LEFT
    if phi < -theta_turn:
        return Turn.RIGHT
    return Turn.STRAIGHT


def estimate_roi(current: VehicleState, turn: Turn, roi_height: float) -> Roi:
    """Equilateral triangle of the given height pointing sideways from the heading.

    Apex sits at the current position; the triangle axis is the heading
    rotated +pi/2 for a left turn and -pi/2 for a right turn. Straight
    driving carries an empty ROI.
    """
    if roi_height <= 0:
        raise ValueError(f"roi height must be positive, got {roi_height}")
    if turn is Turn.STRAIGHT:
        return Roi(triangle=None, turn=turn)
    axis = current.heading + (math.pi / 2 if turn is Turn.LEFT else -math.pi / 2)
    ux, uy = math.cos(axis), math.sin(axis)
    nx, ny = -uy, ux
    half_base = roi_height / math.sqrt(3.0)  # equilateral: side = 2h/sqrt(3)
    x, y = current.position
    bx, by = x + roi_height * ux, y + roi_height * uy
    tri = ((x, y),
           (bx + half_base * nx, by + half_base * ny),
           (bx - half_base * nx, by - half_base * ny))
    return Roi(triangle=tri, turn=turn)


@dataclass(frozen=True)
class PredictorOutput:
    predicted_pos: tuple[float, float]
    turn: Turn
    roi: Roi
    state: KfState


def run_predictor(trace, slot: int, kf_bank: Mapping[int, KfState],
                  cfg: PredictorConfig,
                  rng: Optional[np.random.Generator] = None) -> dict[int, PredictorOutput]:
    """Advance every user present at the slot and classify its next movement.

    New users are initialized from their first measurement. Classification is
    suppressed (Straight) until a filter has consumed ``warmup_slots``
    measurements. Inputs are not mutated; callers merge the returned states
    into their bank.
    """
    record = trace.record_at(slot)
    out: dict[int, PredictorOutput] = {}
    if record is None:
        return out
    for state in record.states:
        uid = state.user_id
        z = np.array(state.position, dtype=float)
        if cfg.measurement_noise_std > 0.0:
            if rng is None:
                raise ValueError("measurement noise enabled but no rng supplied")
            z = z + rng.normal(0.0, cfg.measurement_noise_std, size=2)
        prior = kf_bank.get(uid)
        if prior is None:
            kf = init_state(z, cfg)
        else:
            x_pred, p_pred = kf_predict(prior)
            kf = kf_update(prior, x_pred, p_pred, z)
        ahead, _ = kf_predict(kf)
        predicted_pos = (float(ahead[0]), float(ahead[1]))
        if kf.updates >= cfg.warmup_slots:
            turn = classify_turn(state, predicted_pos, cfg.theta_turn)
        else:
            turn = Turn.STRAIGHT
        roi = estimate_roi(state, turn, cfg.roi_height)
        out[uid] = PredictorOutput(predicted_pos, turn, roi, kf)
    return out
