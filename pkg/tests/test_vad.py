from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from du_doa.spectral import CpsdStack, MultichannelBuffer, StftConfig, estimate_cpsd, stft
from du_doa.vad import PRESET_THRESHOLDS, band_power, detect


def _stack(mats) -> CpsdStack:
    mats = np.asarray(mats, complex)
    return CpsdStack(0, mats, np.arange(mats.shape[0]))


def test_preset_thresholds():
    assert PRESET_THRESHOLDS == {"linear": 200.0, "robot-head": 50.0, "spherical": 10.0}


def test_zero_matrices_are_inactive():
    d = detect(_stack(np.zeros((4, 3, 3))), 1e-9)
    assert not d.active and d.band_power == 0.0


def test_above_threshold_is_active():
    mats = np.zeros((2, 2, 2))
    mats[0] = np.diag([100.0, 25.0])
    mats[1] = np.diag([100.0, 25.0])
    d = detect(_stack(mats), 200.0)
    assert d.band_power == 250.0 and d.active


def test_threshold_is_strict():
    mats = np.zeros((1, 2, 2))
    mats[0] = np.diag([150.0, 50.0])
    assert not detect(_stack(mats), 200.0).active


def _block(x: np.ndarray):
    cfg = StftConfig(64, 16, 0.0, 32.0)
    frames = stft(MultichannelBuffer(x, 64.0), cfg)
    return estimate_cpsd(frames, len(frames)), frames


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), g=st.floats(1.0, 10.0), eta=st.floats(0.1, 1e4))
def test_band_power_identity_and_monotonicity(seed, g, eta):
    x = np.random.default_rng(seed).standard_normal((3, 64 + 16 * 9))
    stack, frames = _block(x)
    direct = sum(np.sum(np.abs(f.spectra) ** 2) for f in frames) / len(frames)
    assert band_power(stack) == pytest.approx(direct, rel=1e-12)
    scaled, _ = _block(g * x)
    assert band_power(scaled) == pytest.approx(g * g * band_power(stack), rel=1e-9)
    if detect(stack, eta).active:
        assert detect(scaled, eta).active


def test_detect_is_pure():
    stack, _ = _block(np.random.default_rng(5).standard_normal((2, 200)))
    assert detect(stack, 3.0) == detect(stack, 3.0)
