"""Far-field synthetic scenes: plane waves from a (possibly moving) source.

Each microphone receives the source signal delayed by its plane-wave delay,
evaluated per output sample along a piecewise-linear trajectory and applied
with a 63-tap Blackman-windowed sinc interpolator. White Gaussian noise is
then added at the requested per-channel SNR.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numba
import numpy as np
from scipy.signal import lfilter

from .array import (
    ArrayGeometry,
    Direction,
    builtin_geometry_path,
    geometry_from_dict,
    load_geometry,
    unit_vector,
)
from .errors import ConfigurationError, QueryError
from .spectral import MultichannelBuffer, read_wav

SINC_TAPS = 63
_HALF = SINC_TAPS // 2


class SourceKind(str, Enum):
    WHITE_NOISE = "white-noise"
    SPEECH_LIKE = "speech-like"
    FILE = "file"


@dataclass(frozen=True)
class Trajectory:
    """Knots ``(time_s, azimuth_deg, elevation_deg)``, linearly interpolated.

    Azimuth follows the shorter arc between knots, so 170 -> -170 passes
    through 180 rather than 0.
    """

    times: np.ndarray
    azimuth_deg: np.ndarray
    elevation_deg: np.ndarray

    def __post_init__(self) -> None:
        t = np.atleast_1d(np.asarray(self.times, float))
        az = np.atleast_1d(np.asarray(self.azimuth_deg, float))
        el = np.atleast_1d(np.asarray(self.elevation_deg, float))
        if not (t.shape == az.shape == el.shape) or t.ndim != 1 or t.size == 0:
            raise ConfigurationError("trajectory columns must be equal-length 1-D")
        if np.any(np.diff(t) <= 0):
            raise ConfigurationError("trajectory times must be strictly increasing")
        if np.any(np.abs(az) > 180) or np.any(np.abs(el) > 90):
            raise ConfigurationError("trajectory angles out of range")
        for name, v in (("times", t), ("azimuth_deg", az), ("elevation_deg", el)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @classmethod
    def static(cls, azimuth_deg: float, elevation_deg: float = 0.0, duration_s: float = 1.0) -> Trajectory:
        return cls([0.0, duration_s], [azimuth_deg] * 2, [elevation_deg] * 2)

    @classmethod
    def from_points(cls, points) -> Trajectory:
        arr = np.asarray(points, float)
        if arr.ndim != 2 or arr.shape[1] not in (2, 3):
            raise ConfigurationError("trajectory points must be [t, az] or [t, az, el] rows")
        el = arr[:, 2] if arr.shape[1] == 3 else np.zeros(arr.shape[0])
        return cls(arr[:, 0], arr[:, 1], el)

    @property
    def start(self) -> float:
        return float(self.times[0])

    @property
    def end(self) -> float:
        return float(self.times[-1])

    def covers(self, t0: float, t1: float) -> bool:
        return self.start <= t0 and t1 <= self.end

    def sample(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized interpolation; ``t`` must lie within the span."""
        t = np.asarray(t, float)
        if np.any(t < self.start) or np.any(t > self.end):
            raise QueryError(f"time outside trajectory span [{self.start}, {self.end}]")
        if self.times.size == 1:
            return np.full(t.shape, self.azimuth_deg[0]), np.full(t.shape, self.elevation_deg[0])
        # unwrap azimuth so each segment takes the short way round
        step = np.diff(self.azimuth_deg)
        step = np.mod(step + 180.0, 360.0) - 180.0
        az_unwrapped = np.concatenate([[self.azimuth_deg[0]], self.azimuth_deg[0] + np.cumsum(step)])
        az = np.interp(t, self.times, az_unwrapped)
        az = np.mod(az + 180.0, 360.0) - 180.0
        az = np.where(az == -180.0, 180.0, az)
        # exact knot values
        knot = np.searchsorted(self.times, t)
        hit = (knot < self.times.size) & (self.times[np.minimum(knot, self.times.size - 1)] == t)
        az = np.where(hit, self.azimuth_deg[np.minimum(knot, self.times.size - 1)], az)
        el = np.interp(t, self.times, self.elevation_deg)
        return az, el


def ground_truth_at(trajectory: Trajectory, time_s: float) -> Direction:
    az, el = trajectory.sample(time_s)
    return Direction(float(az), float(el))


@dataclass(frozen=True)
class SceneSpec:
    geometry: ArrayGeometry
    trajectory: Trajectory
    duration_s: float
    source: SourceKind = SourceKind.WHITE_NOISE
    snr_db: float = math.inf
    sample_rate_hz: float = 48000.0
    seed: int = 0
    level: float = 0.05
    activity: tuple[tuple[float, float], ...] | None = None
    source_path: str | None = field(default=None)

    def __post_init__(self) -> None:
        object.__setattr__(self, "source", SourceKind(self.source))
        if not self.duration_s > 0:
            raise ConfigurationError("duration must be positive")
        if not self.trajectory.covers(0.0, self.duration_s):
            raise ConfigurationError("trajectory does not cover the scene duration")
        if self.source is SourceKind.FILE and not self.source_path:
            raise ConfigurationError("file source needs source_path")


def _speech_like(n: int, fs: float, rng: np.random.Generator) -> np.ndarray:
    """AR(2) resonance at 500 Hz (pole radius 0.97), gated on/off at 10 Hz."""
    r, w0 = 0.97, 2 * np.pi * 500.0 / fs
    x = lfilter([1.0], [1.0, -2 * r * np.cos(w0), r * r], rng.standard_normal(n))
    x /= np.std(x)
    t = np.arange(n) / fs
    gate = (np.floor(t * 20.0) % 2 == 0).astype(float)
    return x * gate


def _source_signal(spec: SceneSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    if spec.source is SourceKind.WHITE_NOISE:
        return rng.standard_normal(n)
    if spec.source is SourceKind.SPEECH_LIKE:
        return _speech_like(n, spec.sample_rate_hz, rng)
    buf = read_wav(spec.source_path)
    if buf.sample_rate_hz != spec.sample_rate_hz:
        raise ConfigurationError("source file sample rate differs from the scene rate")
    x = buf.samples[0]
    reps = int(np.ceil(n / x.size))
    x = np.tile(x, reps)[:n]
    rms = np.sqrt(np.mean(x**2))
    return x / rms if rms > 0 else x


def sinc_kernel(frac: np.ndarray) -> np.ndarray:
    """Taps ``h(k - frac)`` for ``k = -31..31``; rows per fractional offset."""
    k = np.arange(-_HALF, _HALF + 1)
    x = k[None, :] - np.asarray(frac, float).reshape(-1, 1)
    win = 0.42 + 0.5 * np.cos(np.pi * x / (_HALF + 1)) + 0.08 * np.cos(2 * np.pi * x / (_HALF + 1))
    return np.sinc(x) * win


@numba.njit(cache=True)
def _varying_delay(signal, whole, frac, offset, out):  # pragma: no cover - jitted
    half = _HALF
    w0 = np.pi / (half + 1)
    taps = np.arange(-half, half + 1)
    ck = np.cos(w0 * taps)
    sk = np.sin(w0 * taps)
    c2k = np.cos(2 * w0 * taps)
    s2k = np.sin(2 * w0 * taps)
    sign = np.where(taps % 2 == 0, 1.0, -1.0)
    for n in range(out.size):
        base = n + offset - whole[n]
        mu = frac[n]
        if mu == 0.0:
            out[n] = signal[base]
            continue
        # sin(pi (k - mu)) = -(-1)^k sin(pi mu); window cosines by angle addition
        spm = np.sin(np.pi * mu)
        cm, sm = np.cos(w0 * mu), np.sin(w0 * mu)
        c2m, s2m = np.cos(2 * w0 * mu), np.sin(2 * w0 * mu)
        acc = 0.0
        for i in range(taps.size):
            x = taps[i] - mu
            win = 0.42 + 0.5 * (ck[i] * cm + sk[i] * sm) + 0.08 * (c2k[i] * c2m + s2k[i] * s2m)
            acc += signal[base - taps[i]] * (-sign[i] * spm / (np.pi * x)) * win
        out[n] = acc


def fractional_delay(signal: np.ndarray, delay: np.ndarray, offset: int) -> np.ndarray:
    """Evaluate ``signal(n + offset - delay[n])`` by windowed-sinc interpolation.

    ``signal`` must be padded so that every tap stays in range; ``offset`` is
    the index in ``signal`` corresponding to output sample 0.
    """
    delay = np.asarray(delay, float)
    n_out = delay.size
    near = np.round(delay)
    delay = np.where(np.abs(delay - near) < 1e-9, near, delay)
    whole = np.floor(delay).astype(np.int64)
    frac = delay - whole
    if np.all(whole == whole[0]) and np.all(frac == frac[0]):
        # constant delay: plain convolution
        h = sinc_kernel(frac[:1])[0]
        start = offset - int(whole[0]) - _HALF
        seg = signal[start : start + n_out + 2 * _HALF]
        return np.convolve(seg, h, mode="valid")
    out = np.empty(n_out)
    _varying_delay(np.ascontiguousarray(signal, dtype=float), whole, frac, int(offset), out)
    return out


def activity_mask(spec: SceneSpec, n: int) -> np.ndarray:
    if spec.activity is None:
        return np.ones(n, dtype=bool)
    t = np.arange(n) / spec.sample_rate_hz
    mask = np.zeros(n, dtype=bool)
    for start, stop in spec.activity:
        mask |= (t >= start) & (t < stop)
    return mask


def synthesize(spec: SceneSpec) -> tuple[MultichannelBuffer, Trajectory]:
    """Render the scene. Deterministic for a given ``SceneSpec`` (including its seed)."""
    fs = spec.sample_rate_hz
    geom = spec.geometry
    n = int(round(spec.duration_s * fs))
    m = geom.n_mics
    streams = np.random.SeedSequence(spec.seed).spawn(m + 1)
    src_rng = np.random.default_rng(streams[0])

    max_delay = np.linalg.norm(geom.positions, axis=1).max() / geom.speed_of_sound * fs
    pad = int(np.ceil(max_delay)) + _HALF + 2
    src = _source_signal(spec, n + 2 * pad, src_rng)
    active = activity_mask(spec, n)
    padded_active = np.zeros(n + 2 * pad, dtype=bool)
    padded_active[pad : pad + n] = active
    # silence outside the activity windows (delays are far smaller than a window)
    if spec.activity is not None:
        src = src * padded_active

    static = np.all(spec.trajectory.azimuth_deg == spec.trajectory.azimuth_deg[0]) and np.all(
        spec.trajectory.elevation_deg == spec.trajectory.elevation_deg[0]
    )
    if static:
        u = unit_vector(spec.trajectory.azimuth_deg[0], spec.trajectory.elevation_deg[0])
        tau = -(geom.positions @ u) / geom.speed_of_sound
        delays = np.repeat(tau[:, None] * fs, n, axis=1)
    else:
        az, el = spec.trajectory.sample(np.arange(n) / fs)
        u = unit_vector(az, el)  # (n, 3)
        delays = -(geom.positions @ u.T) / geom.speed_of_sound * fs  # (M, n)

    out = np.empty((m, n))
    for ch in range(m):
        clean = spec.level * fractional_delay(src, delays[ch], pad)
        if np.isfinite(spec.snr_db):
            ref = clean[active] if active.any() else clean
            p_sig = float(np.mean(ref**2))
            sigma = np.sqrt(p_sig / 10.0 ** (spec.snr_db / 10.0))
            clean = clean + sigma * np.random.default_rng(streams[ch + 1]).standard_normal(n)
        out[ch] = clean
    return MultichannelBuffer(out, fs), spec.trajectory


def write_truth_csv(path: str | Path, trajectory: Trajectory) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_s", "azimuth_deg", "elevation_deg"])
        for t, az, el in zip(trajectory.times, trajectory.azimuth_deg, trajectory.elevation_deg):
            w.writerow([f"{t:.6f}", f"{az:.6f}", f"{el:.6f}"])


def read_truth_csv(path: str | Path, *, elevation_convention: str = "elevation") -> Trajectory:
    """Load ``time_s,azimuth_deg,elevation_deg`` rows.

    ``elevation_convention="inclination"`` converts polar angle measured from
    +z (0 = up) into elevation above the xy-plane. Rows with repeated
    timestamps keep the first occurrence.
    """
    if elevation_convention not in ("elevation", "inclination"):
        raise ConfigurationError(f"unknown elevation convention {elevation_convention!r}")
    rows = []
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            for rec in csv.DictReader(fh):
                rows.append(
                    (float(rec["time_s"]), float(rec["azimuth_deg"]), float(rec.get("elevation_deg") or 0.0))
                )
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigurationError(f"cannot read truth CSV {path}: {exc}") from exc
    if not rows:
        raise ConfigurationError(f"truth CSV {path} has no rows")
    arr = np.array(rows)
    _, first = np.unique(arr[:, 0], return_index=True)
    arr = arr[np.sort(first)]
    arr = arr[np.argsort(arr[:, 0], kind="stable")]
    if elevation_convention == "inclination":
        arr[:, 2] = 90.0 - arr[:, 2]
    az = np.mod(arr[:, 1] + 180.0, 360.0) - 180.0
    az = np.where(az == -180.0, 180.0, az)
    return Trajectory(arr[:, 0], az, arr[:, 2])


def _resolve_geometry(value, base: Path) -> ArrayGeometry:
    if isinstance(value, dict):
        return geometry_from_dict(value)
    path = Path(value)
    if not path.is_absolute() and (base / path).exists():
        path = base / path
    if not path.exists():
        path = builtin_geometry_path(str(value))
    return load_geometry(path)


def load_scene_spec(path: str | Path) -> SceneSpec:
    """Scene JSON: geometry (path, bundled name or inline), trajectory rows, source, snr_db..."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read scene spec {path}: {exc}") from exc
    snr = data.get("snr_db", None)
    snr = math.inf if snr is None or str(snr).lower() in ("inf", "+inf") else float(snr)
    activity = data.get("activity")
    src_path = data.get("source_path")
    if src_path and not Path(src_path).is_absolute():
        src_path = str(path.parent / src_path)
    try:
        return SceneSpec(
            geometry=_resolve_geometry(data["geometry"], path.parent),
            trajectory=Trajectory.from_points(data["trajectory"]),
            duration_s=float(data["duration_s"]),
            source=SourceKind(data.get("source", "white-noise")),
            snr_db=snr,
            sample_rate_hz=float(data.get("sample_rate_hz", 48000.0)),
            seed=int(data.get("seed", 0)),
            level=float(data.get("level", 0.05)),
            activity=tuple(tuple(map(float, a)) for a in activity) if activity else None,
            source_path=src_path,
        )
    except KeyError as exc:
        raise ConfigurationError(f"scene spec missing field {exc}") from exc
