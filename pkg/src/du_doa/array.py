"""Array geometries, direction grids and far-field steering vectors.

Conventions
-----------
Azimuth is measured counterclockwise from the +x axis and elevation from the
xy-plane, both in degrees. The unit vector pointing from the array towards
the source is ``u = [cos(el) cos(az), cos(el) sin(az), sin(el)]`` and the
plane-wave delay of microphone ``m`` relative to the array origin is
``tau_m = -(p_m . u) / c``. A steering vector entry is ``exp(-2j pi f tau_m)``.

Linear arrays are rotated onto the x-axis when loaded, so that their azimuth
is the angle from the array axis (broadside = 90 deg) and only the half-plane
[0, 180] is searched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigurationError

DEFAULT_SPEED_OF_SOUND = 343.0


class ArrayKind(str, Enum):
    LINEAR = "linear"
    FULL_SPHERE = "full-sphere"

    @classmethod
    def parse(cls, value: str | ArrayKind) -> ArrayKind:
        if isinstance(value, ArrayKind):
            return value
        aliases = {
            "linear": cls.LINEAR,
            "linear-azimuth-only": cls.LINEAR,
            "full-sphere": cls.FULL_SPHERE,
            "sphere": cls.FULL_SPHERE,
            "spherical": cls.FULL_SPHERE,
        }
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ConfigurationError(f"unknown array kind: {value!r}") from None


@dataclass(frozen=True)
class ArrayGeometry:
    """Microphone positions (meters) plus the propagation speed."""

    positions: np.ndarray
    speed_of_sound: float = DEFAULT_SPEED_OF_SOUND
    kind: ArrayKind = ArrayKind.FULL_SPHERE

    def __post_init__(self) -> None:
        pos = np.array(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ConfigurationError("positions must be a list of [x, y, z] triples")
        if pos.shape[0] < 2:
            raise ConfigurationError("an array needs at least two microphones")
        if not np.all(np.isfinite(pos)):
            raise ConfigurationError("microphone positions must be finite")
        if np.ptp(pos, axis=0).max() == 0.0:
            raise ConfigurationError("at least two microphone positions must differ")
        if not (np.isfinite(self.speed_of_sound) and self.speed_of_sound > 0):
            raise ConfigurationError("speed_of_sound must be positive")
        kind = ArrayKind.parse(self.kind)
        if kind is ArrayKind.LINEAR:
            pos = _canonical_line(pos)
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "speed_of_sound", float(self.speed_of_sound))
        object.__setattr__(self, "kind", kind)

    @property
    def n_mics(self) -> int:
        return self.positions.shape[0]

    def translated(self, offset) -> ArrayGeometry:
        return ArrayGeometry(self.positions + np.asarray(offset, float), self.speed_of_sound, self.kind)

    def to_json(self) -> dict:
        return {
            "positions": self.positions.tolist(),
            "speed_of_sound": self.speed_of_sound,
            "kind": self.kind.value,
        }


def _canonical_line(pos: np.ndarray) -> np.ndarray:
    """Project collinear positions onto the x-axis.

    The axis is oriented from the first microphone towards the farthest one,
    so the original channel order keeps increasing x when the array is
    ordered along its length.
    """
    far = np.argmax(np.linalg.norm(pos - pos[0], axis=1))
    axis = pos[far] - pos[0]
    axis /= np.linalg.norm(axis)
    rel = pos - pos[0]
    along = rel @ axis
    off_axis = rel - np.outer(along, axis)
    scale = max(np.abs(rel).max(), 1e-12)
    if np.abs(off_axis).max() > 1e-6 * scale:
        raise ConfigurationError("positions of a linear array must be collinear")
    # keep the projection of the origin so the phase reference is unchanged
    x = pos @ axis
    out = np.zeros_like(pos)
    out[:, 0] = x
    return out


def load_geometry(path: str | Path) -> ArrayGeometry:
    """Read a geometry JSON file (``positions``, ``speed_of_sound``, ``kind``)."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read geometry {path}: {exc}") from exc
    return geometry_from_dict(data)


def geometry_from_dict(data: dict) -> ArrayGeometry:
    if "positions" not in data:
        raise ConfigurationError("geometry needs a 'positions' field")
    return ArrayGeometry(
        positions=np.asarray(data["positions"], dtype=float),
        speed_of_sound=float(data.get("speed_of_sound", DEFAULT_SPEED_OF_SOUND)),
        kind=ArrayKind.parse(data.get("kind", "full-sphere")),
    )


def builtin_geometry_path(name: str) -> Path:
    """Path of one of the bundled example geometries (``linear7``, ``robot_head12``, ``sphere32``)."""
    ref = resources.files("du_doa") / "geometries" / f"{name}.json"
    if not ref.is_file():
        raise ConfigurationError(f"no bundled geometry named {name!r}")
    return Path(str(ref))


@dataclass(frozen=True, order=True)
class Direction:
    azimuth_deg: float
    elevation_deg: float = 0.0

    def __post_init__(self) -> None:
        if not (-180.0 <= self.azimuth_deg <= 180.0):
            raise ConfigurationError(f"azimuth out of range: {self.azimuth_deg}")
        if not (-90.0 <= self.elevation_deg <= 90.0):
            raise ConfigurationError(f"elevation out of range: {self.elevation_deg}")


@dataclass(frozen=True)
class DirectionGrid:
    """Candidate directions, elevation-major with azimuth ascending."""

    kind: ArrayKind
    resolution_deg: float
    azimuth_deg: np.ndarray = field(repr=False)
    elevation_deg: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return self.azimuth_deg.shape[0]

    def __getitem__(self, index: int) -> Direction:
        return Direction(float(self.azimuth_deg[index]), float(self.elevation_deg[index]))

    @property
    def directions(self) -> list[Direction]:
        return [self[i] for i in range(len(self))]

    def unit_vectors(self) -> np.ndarray:
        return unit_vector(self.azimuth_deg, self.elevation_deg)


def _steps(span: float, resolution: float) -> int:
    if not (np.isfinite(resolution) and resolution > 0):
        raise ConfigurationError("grid resolution must be positive")
    n = span / resolution
    if abs(n - round(n)) > 1e-9 * max(1.0, n):
        raise ConfigurationError(f"resolution {resolution} does not divide {span} degrees")
    return int(round(n))


def build_grid(kind: ArrayKind | str, resolution_deg: float) -> DirectionGrid:
    """Enumerate the search directions for an array kind.

    Linear: azimuth 0..180 inclusive at elevation 0. Full sphere: elevation
    -90..90 inclusive (outer) times azimuth -180..180 inclusive (inner); the
    two azimuth seam columns describe the same physical direction but both
    are kept, which is what gives 37 x 73 = 2701 directions at 5 degrees.
    """
    kind = ArrayKind.parse(kind)
    r = float(resolution_deg)
    if kind is ArrayKind.LINEAR:
        n = _steps(180.0, r)
        az = np.arange(n + 1) * r
        el = np.zeros_like(az)
    else:
        n_az = _steps(360.0, r)
        n_el = _steps(180.0, r)
        az_axis = -180.0 + np.arange(n_az + 1) * r
        el_axis = -90.0 + np.arange(n_el + 1) * r
        el, az = np.meshgrid(el_axis, az_axis, indexing="ij")
        az, el = az.ravel(), el.ravel()
    az = np.ascontiguousarray(az, dtype=float)
    el = np.ascontiguousarray(el, dtype=float)
    az.setflags(write=False)
    el.setflags(write=False)
    return DirectionGrid(kind, r, az, el)


def unit_vector(azimuth_deg, elevation_deg) -> np.ndarray:
    """Unit vector(s) pointing towards the source; shape ``(..., 3)``."""
    # fold -180 onto 180 so both seam columns get bit-identical vectors
    az = np.asarray(azimuth_deg, dtype=float)
    az = np.deg2rad(np.where(az == -180.0, 180.0, az))
    el = np.deg2rad(np.asarray(elevation_deg, dtype=float))
    return np.stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], axis=-1)


def propagation_delays(geometry: ArrayGeometry, direction: Direction) -> np.ndarray:
    """Plane-wave arrival delays (seconds) of each microphone relative to the origin."""
    u = unit_vector(direction.azimuth_deg, direction.elevation_deg)
    return -(geometry.positions @ u) / geometry.speed_of_sound


def grid_delays(geometry: ArrayGeometry, grid: DirectionGrid) -> np.ndarray:
    """Delays for every grid direction, shape ``(D, M)``."""
    return -(grid.unit_vectors() @ geometry.positions.T) / geometry.speed_of_sound


def steering_vector(geometry: ArrayGeometry, freq_hz: float, direction: Direction) -> np.ndarray:
    tau = propagation_delays(geometry, direction)
    return np.exp(-2j * np.pi * freq_hz * tau)


@dataclass(frozen=True)
class SteeringTable:
    """Precomputed steering vectors for every (bin, direction) pair.

    Stored in real form: ``cs[b, d] = [Re a, Im a]`` (length 2M), which is the
    layout the localizer multiplies against. ``dtype`` is float64 or float32.
    """

    freqs_hz: np.ndarray
    cs: np.ndarray = field(repr=False)

    @property
    def shape(self) -> tuple[int, int, int]:
        b, d, two_m = self.cs.shape
        return b, d, two_m // 2

    def vectors(self, bin_pos: int) -> np.ndarray:
        """Complex steering vectors for one bin, shape ``(D, M)``."""
        m = self.cs.shape[2] // 2
        row = self.cs[bin_pos].astype(np.float64)
        return row[:, :m] + 1j * row[:, m:]


def steering_table(
    geometry: ArrayGeometry,
    grid: DirectionGrid,
    freqs_hz,
    dtype=np.float64,
) -> SteeringTable:
    freqs = np.asarray(freqs_hz, dtype=float)
    tau = grid_delays(geometry, grid)
    d, m = tau.shape
    cs = np.empty((freqs.shape[0], d, 2 * m), dtype=dtype)
    for b, f in enumerate(freqs):
        phase = (-2.0 * np.pi * f) * tau
        cs[b, :, :m] = np.cos(phase)
        cs[b, :, m:] = np.sin(phase)
    cs.setflags(write=False)
    return SteeringTable(freqs, cs)
