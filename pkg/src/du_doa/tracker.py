"""Constant-velocity Kalman smoothing of DOA estimates.

State layout is ``[angles..., velocities...]``: ``[az, el, v_az, v_el]`` in
azimuth-elevation mode and ``[az, v_az]`` in azimuth-only mode, in degrees
and degrees/second. Process noise enters as an acceleration through ``B``,
so the per-step process covariance is ``B Q B^T``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .array import Direction
from .errors import ConfigurationError, StateMachineError
from .localizer import DoaEstimate
from .vad import VadDecision


class TrackerMode(str, Enum):
    AZIMUTH_ONLY = "azimuth-only"
    AZIMUTH_ELEVATION = "azimuth-elevation"


class Source(str, Enum):
    CORRECTED = "corrected"
    PREDICTED = "predicted-only"
    NONE = "none"


@dataclass(frozen=True)
class TrackerConfig:
    """Filter constants.

    ``circular_azimuth`` selects how azimuth is kept in range: wrapped to
    (-180, 180] for full-sphere grids, clamped to [0, 180] for line arrays
    (whose azimuth is not periodic).
    """

    dt: float = 0.2667
    sigma_q2: float = 1e-3
    sigma_r2: float = 1e-4
    mode: TrackerMode = TrackerMode.AZIMUTH_ELEVATION
    circular_azimuth: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", TrackerMode(self.mode))
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        if not (self.sigma_q2 > 0 and self.sigma_r2 > 0):
            raise ConfigurationError("noise variances must be positive")

    @property
    def n_angles(self) -> int:
        return 1 if self.mode is TrackerMode.AZIMUTH_ONLY else 2

    def matrices(self) -> dict[str, np.ndarray]:
        """``A, B, Q, C, R`` for the configured dimension."""
        n, dt = self.n_angles, self.dt
        eye = np.eye(n)
        zero = np.zeros((n, n))
        return {
            "A": np.block([[eye, dt * eye], [zero, eye]]),
            "B": np.vstack([0.5 * dt**2 * eye, dt * eye]),
            "Q": self.sigma_q2 * eye,
            "C": np.hstack([eye, zero]),
            "R": self.sigma_r2 * eye,
        }

    def process_covariance(self) -> np.ndarray:
        mats = self.matrices()
        return mats["B"] @ mats["Q"] @ mats["B"].T


@dataclass(frozen=True)
class TrackState:
    y: np.ndarray = field(default_factory=lambda: np.zeros(4))
    P: np.ndarray = field(default_factory=lambda: np.zeros((4, 4)))
    initialized: bool = False
    last_vad: bool | None = None

    @property
    def angles(self) -> np.ndarray:
        return self.y[: self.y.shape[0] // 2]

    @property
    def velocities(self) -> np.ndarray:
        return self.y[self.y.shape[0] // 2 :]

    def direction(self) -> Direction:
        ang = self.angles
        return Direction(float(ang[0]), float(ang[1]) if ang.shape[0] > 1 else 0.0)


@dataclass(frozen=True)
class SmoothedEstimate:
    frame_index: int
    time_s: float
    direction: Direction | None
    source: Source


def wrap_angle(deg):
    """Map degrees into (-180, 180]."""
    out = np.mod(np.asarray(deg, dtype=float) + 180.0, 360.0) - 180.0
    out = np.where(out == -180.0, 180.0, out)
    return out if np.ndim(out) else float(out)


def _measurement(est: DoaEstimate, config: TrackerConfig) -> np.ndarray:
    d = est.direction
    return np.array([d.azimuth_deg, d.elevation_deg][: config.n_angles])


def _constrain(y: np.ndarray, config: TrackerConfig) -> np.ndarray:
    y = y.copy()
    if config.circular_azimuth:
        y[0] = wrap_angle(y[0])
    else:
        y[0] = min(max(y[0], 0.0), 180.0)
    if config.n_angles == 2:
        y[1] = min(max(y[1], -90.0), 90.0)
    return y


def _symmetrize(p: np.ndarray) -> np.ndarray:
    return 0.5 * (p + p.T)


def initialize(measurement: DoaEstimate, config: TrackerConfig) -> TrackState:
    n = config.n_angles
    y = np.zeros(2 * n)
    y[:n] = _measurement(measurement, config)
    return TrackState(
        _constrain(y, config), config.process_covariance(), True, bool(measurement.vad)
    )


def predict(state: TrackState, config: TrackerConfig) -> TrackState:
    if not state.initialized:
        raise StateMachineError("predict called before initialization")
    mats = config.matrices()
    a = mats["A"]
    y = _constrain(a @ state.y, config)
    p = _symmetrize(a @ state.P @ a.T + config.process_covariance())
    return replace(state, y=y, P=p)


def kalman_gain(p_pred: np.ndarray, config: TrackerConfig) -> np.ndarray:
    mats = config.matrices()
    c, r = mats["C"], mats["R"]
    s = c @ p_pred @ c.T + r
    try:
        s_inv = np.linalg.inv(s)
    except np.linalg.LinAlgError as exc:
        raise FloatingPointError("singular innovation covariance") from exc
    return p_pred @ c.T @ s_inv


def innovation(measured: np.ndarray, predicted: np.ndarray, config: TrackerConfig) -> np.ndarray:
    nu = np.asarray(measured, float) - np.asarray(predicted, float)
    if config.circular_azimuth:
        nu[0] = wrap_angle(nu[0])
    return nu


def correct(
    state: TrackState,
    measurement: DoaEstimate,
    config: TrackerConfig,
    *,
    gain: np.ndarray | None = None,
) -> TrackState:
    """Measurement update. ``gain`` overrides the Kalman gain (test hook)."""
    if not state.initialized:
        raise StateMachineError("correct called before initialization")
    c = config.matrices()["C"]
    k = kalman_gain(state.P, config) if gain is None else np.asarray(gain, float)
    nu = innovation(_measurement(measurement, config), c @ state.y, config)
    y = _constrain(state.y + k @ nu, config)
    p = _symmetrize((np.eye(state.y.shape[0]) - k @ c) @ state.P)
    return replace(state, y=y, P=p)


def step(
    state: TrackState,
    vad: VadDecision,
    measurement: DoaEstimate | None,
    config: TrackerConfig,
    *,
    time_s: float | None = None,
) -> tuple[TrackState, SmoothedEstimate]:
    """Advance the tracker by one block.

    A rising VAD edge (re-)initializes from the measurement; active blocks
    predict and correct; inactive blocks coast on the prediction.
    """
    t = time_s if time_s is not None else (measurement.time_s if measurement else 0.0)
    k = vad.frame_index
    rising = vad.active and not state.last_vad
    if vad.active and measurement is not None and (rising or not state.initialized):
        new = initialize(measurement, config)
        return new, SmoothedEstimate(k, t, new.direction(), Source.CORRECTED)
    if not state.initialized:
        return replace(state, last_vad=vad.active), SmoothedEstimate(k, t, None, Source.NONE)
    pred = predict(state, config)
    if vad.active and measurement is not None:
        new = replace(correct(pred, measurement, config), last_vad=True)
        return new, SmoothedEstimate(k, t, new.direction(), Source.CORRECTED)
    new = replace(pred, last_vad=vad.active)
    return new, SmoothedEstimate(k, t, new.direction(), Source.PREDICTED)


class Tracker:
    """Stateful convenience wrapper around :func:`step`."""

    def __init__(self, config: TrackerConfig):
        self.config = config
        n = 2 * config.n_angles
        self.state = TrackState(np.zeros(n), np.zeros((n, n)))

    def update(self, vad: VadDecision, measurement: DoaEstimate | None, time_s: float | None = None) -> SmoothedEstimate:
        self.state, out = step(self.state, vad, measurement, self.config, time_s=time_s)
        return out
