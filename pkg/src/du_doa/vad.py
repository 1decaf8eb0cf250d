"""Source-activity detection from the summed CPSD traces."""

from __future__ import annotations

from dataclasses import dataclass

from .spectral import CpsdStack

# Per-preset thresholds in raw squared-sample units (samples scaled to [-1, 1)).
# They depend on signal scale, array size and band, so recalibrate for new data.
PRESET_THRESHOLDS = {"linear": 200.0, "robot-head": 50.0, "spherical": 10.0}


@dataclass(frozen=True)
class VadDecision:
    frame_index: int
    active: bool
    band_power: float


def band_power(cpsd: CpsdStack) -> float:
    """Total in-band array power: the sum over bins of ``tr(Phi)``."""
    return float(cpsd.traces().sum())


def detect(cpsd: CpsdStack, threshold: float) -> VadDecision:
    """Active iff the band power strictly exceeds ``threshold``."""
    power = band_power(cpsd)
    return VadDecision(cpsd.frame_index, power > threshold, power)
