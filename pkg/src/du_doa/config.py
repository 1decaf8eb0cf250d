"""Pipeline configuration, JSON (de)serialization and the array presets."""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .array import ArrayGeometry, ArrayKind, builtin_geometry_path, load_geometry
from .errors import ConfigurationError
from .spectral import StftConfig
from .tracker import TrackerConfig, TrackerMode

log = logging.getLogger(__name__)


@dataclass
class StftSection:
    fft_size: int = 2048
    hop: int = 512
    band: list[float] = field(default_factory=lambda: [80.0, 8000.0])


@dataclass
class GridSection:
    kind: str = "linear"
    resolution_deg: float = 1.0


@dataclass
class TrackerSection:
    dt: float = 0.2667
    sigma_q2: float = 1e-3
    sigma_r2: float = 1e-4
    mode: str = "azimuth-only"


@dataclass
class IoSection:
    input: str | None = None
    truth: str | None = None
    output: str | None = None
    dump_srp: str | None = None
    errors_out: str | None = None
    plots_dir: str | None = None
    score_all: bool = False
    truth_elevation_convention: str = "elevation"


@dataclass
class PipelineConfig:
    """Everything a run needs; defaults are the linear-array preset."""

    preset: str = "linear"
    geometry: str = "linear7"
    sample_rate_hz: float = 48000.0
    channels: list[int] | None = None
    stft: StftSection = field(default_factory=StftSection)
    cpsd_n: int = 25
    vad_threshold: float = 200.0
    grid: GridSection = field(default_factory=GridSection)
    tracker: TrackerSection = field(default_factory=TrackerSection)
    compute_dtype: str = "float64"
    io: IoSection = field(default_factory=IoSection)

    # -- derived objects -------------------------------------------------

    def stft_config(self) -> StftConfig:
        lo, hi = self.stft.band
        return StftConfig(int(self.stft.fft_size), int(self.stft.hop), float(lo), float(hi))

    def tracker_config(self) -> TrackerConfig:
        return TrackerConfig(
            dt=float(self.tracker.dt),
            sigma_q2=float(self.tracker.sigma_q2),
            sigma_r2=float(self.tracker.sigma_r2),
            mode=TrackerMode(self.tracker.mode),
            circular_azimuth=ArrayKind.parse(self.grid.kind) is ArrayKind.FULL_SPHERE,
        )

    def dtype(self):
        try:
            return {"float64": np.float64, "float32": np.float32}[self.compute_dtype]
        except KeyError:
            raise ConfigurationError(f"compute_dtype must be float64 or float32, got {self.compute_dtype!r}") from None

    def block_period_s(self) -> float:
        return self.stft.hop * self.cpsd_n / self.sample_rate_hz

    def load_geometry(self, base: Path | None = None) -> ArrayGeometry:
        path = Path(self.geometry)
        if base is not None and not path.is_absolute() and (base / path).exists():
            path = base / path
        if not path.exists():
            path = builtin_geometry_path(self.geometry)
        return load_geometry(path)

    def validate(self) -> None:
        self.stft_config().validate_rate(self.sample_rate_hz)
        self.tracker_config()
        self.dtype()
        ArrayKind.parse(self.grid.kind)
        if self.cpsd_n < 1:
            raise ConfigurationError("cpsd_n must be >= 1")
        if not self.vad_threshold > 0:
            raise ConfigurationError("vad_threshold must be positive")
        period = self.block_period_s()
        if abs(self.tracker.dt - period) > 1e-3 * period:
            log.warning(
                "tracker dt %.6g s differs from hop*N/fs = %.6g s; proceeding", self.tracker.dt, period
            )

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> PipelineConfig:
        data = dict(data)
        return merge(preset_config(data.pop("preset", "linear")), data)


_SECTIONS = {"stft": StftSection, "grid": GridSection, "tracker": TrackerSection, "io": IoSection}


def merge(config: PipelineConfig, overrides: dict) -> PipelineConfig:
    """Copy of ``config`` with (possibly nested) ``overrides`` applied."""
    out = copy.deepcopy(config)
    names = {f.name for f in fields(PipelineConfig)}
    for key, value in overrides.items():
        if key not in names:
            raise ConfigurationError(f"unknown config field {key!r}")
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigurationError(f"config section {key!r} must be an object")
            section = getattr(out, key)
            allowed = {f.name for f in fields(_SECTIONS[key])}
            for sub, sub_value in value.items():
                if sub not in allowed:
                    raise ConfigurationError(f"unknown config field {key}.{sub}")
                setattr(section, sub, sub_value)
        else:
            setattr(out, key, value)
    return out


PRESETS: dict[str, dict] = {
    "linear": {
        "geometry": "linear7",
        "vad_threshold": 200.0,
        "grid": {"kind": "linear", "resolution_deg": 1.0},
        "tracker": {"mode": "azimuth-only"},
        "compute_dtype": "float64",
    },
    "robot-head": {
        "geometry": "robot_head12",
        "vad_threshold": 50.0,
        "grid": {"kind": "full-sphere", "resolution_deg": 5.0},
        "tracker": {"mode": "azimuth-elevation"},
        "compute_dtype": "float64",
    },
    "spherical": {
        "geometry": "sphere32",
        "vad_threshold": 10.0,
        "grid": {"kind": "full-sphere", "resolution_deg": 5.0},
        "tracker": {"mode": "azimuth-elevation"},
        # 32 mics x 2701 directions x 338 bins: single precision keeps it real-time
        "compute_dtype": "float32",
    },
}


def preset_config(name: str) -> PipelineConfig:
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    cfg = merge(PipelineConfig(), PRESETS[name])
    cfg.preset = name
    return cfg


def load_config(path: str | Path, default_preset: str | None = None) -> PipelineConfig:
    """Read a config JSON; fields it omits come from its ``preset`` (or ``default_preset``)."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError("config root must be a JSON object")
    if default_preset and "preset" not in data:
        data["preset"] = default_preset
    cfg = PipelineConfig.from_dict(data)
    # relative file paths are relative to the config file
    base = Path(path).resolve().parent
    if (base / cfg.geometry).is_file():
        cfg.geometry = str(base / cfg.geometry)
    return cfg
