"""STFT analysis and cross power spectral density estimation."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.io import wavfile

from .errors import ChannelMismatchError, ConfigurationError, InsufficientHistoryError


@dataclass(frozen=True)
class MultichannelBuffer:
    """Channel-major real samples, shape ``(M, S)``."""

    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self) -> None:
        x = np.asarray(self.samples, dtype=float)
        if x.ndim != 2:
            raise ConfigurationError("samples must be a 2-D (channels, samples) array")
        if not np.all(np.isfinite(x)):
            raise ConfigurationError("samples must be finite")
        if not self.sample_rate_hz > 0:
            raise ConfigurationError("sample rate must be positive")
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz


@dataclass(frozen=True)
class StftConfig:
    fft_size: int = 2048
    hop: int = 512
    f_min_hz: float = 80.0
    f_max_hz: float = 8000.0

    def __post_init__(self) -> None:
        if self.fft_size < 2 or self.fft_size % 2:
            raise ConfigurationError("fft_size must be an even integer >= 2")
        if not 0 < self.hop <= self.fft_size:
            raise ConfigurationError("hop must be in (0, fft_size]")
        if not 0 <= self.f_min_hz < self.f_max_hz:
            raise ConfigurationError("band must satisfy 0 <= f_min < f_max")

    def validate_rate(self, sample_rate_hz: float) -> None:
        if self.f_max_hz > sample_rate_hz / 2:
            raise ConfigurationError(
                f"f_max {self.f_max_hz} Hz exceeds Nyquist for {sample_rate_hz} Hz"
            )

    def bin_indices(self, sample_rate_hz: float) -> np.ndarray:
        """In-band FFT bins: ``ceil(f_min L / fs)`` through ``floor(f_max L / fs)``."""
        self.validate_rate(sample_rate_hz)
        lo = math.ceil(self.f_min_hz * self.fft_size / sample_rate_hz - 1e-9)
        hi = math.floor(self.f_max_hz * self.fft_size / sample_rate_hz + 1e-9)
        return np.arange(lo, hi + 1)

    def bin_freqs(self, sample_rate_hz: float) -> np.ndarray:
        return self.bin_indices(sample_rate_hz) * (sample_rate_hz / self.fft_size)


@dataclass(frozen=True)
class SpectralFrame:
    frame_index: int
    spectra: np.ndarray = field(repr=False)  # (M, B) complex
    bin_indices: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class CpsdStack:
    frame_index: int
    matrices: np.ndarray = field(repr=False)  # (B, M, M) complex
    bin_indices: np.ndarray = field(repr=False)

    def traces(self) -> np.ndarray:
        return np.einsum("bmm->b", self.matrices).real


def hann_window(length: int) -> np.ndarray:
    """Periodic Hann window ``0.5 (1 - cos(2 pi l / L))``."""
    if length < 2 or length % 2:
        raise ConfigurationError("window length must be even and >= 2")
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(length) / length))


def n_frames(n_samples: int, config: StftConfig) -> int:
    if n_samples < config.fft_size:
        return 0
    return (n_samples - config.fft_size) // config.hop + 1


def stft_array(samples: np.ndarray, config: StftConfig, bins: np.ndarray) -> np.ndarray:
    """Windowed rFFT of every full frame, in-band bins only; shape ``(K, M, B)``."""
    samples = np.asarray(samples, dtype=float)
    k = n_frames(samples.shape[-1], config)
    if k == 0:
        return np.zeros((0, samples.shape[0], bins.shape[0]), dtype=complex)
    frames = sliding_window_view(samples, config.fft_size, axis=-1)[:, :: config.hop][:, :k]
    spec = np.fft.rfft(frames * hann_window(config.fft_size), axis=-1)
    return np.ascontiguousarray(spec[..., bins].transpose(1, 0, 2))


def stft(buffer: MultichannelBuffer, config: StftConfig, *, frame_offset: int = 0) -> list[SpectralFrame]:
    """Split the buffer into frames ``[kR, kR + L)`` and transform each one.

    Frames are start-aligned (sample 0 of the frame has phase 0). Buffers
    shorter than one frame give an empty list. ``frame_offset`` is added to
    the emitted frame indices, for callers that feed consecutive slices.
    """
    bins = config.bin_indices(buffer.sample_rate_hz)
    spec = stft_array(buffer.samples, config, bins)
    return [SpectralFrame(frame_offset + i, spec[i], bins) for i in range(spec.shape[0])]


def estimate_cpsd(frames: list[SpectralFrame], n_average: int | None = None) -> CpsdStack:
    """Average the per-bin outer products ``x x^H`` of the supplied frames."""
    n = len(frames) if n_average is None else n_average
    if n < 1 or len(frames) < n:
        raise InsufficientHistoryError(f"need {n} frames, got {len(frames)}")
    frames = list(frames)[-n:]
    idx = [f.frame_index for f in frames]
    if any(b - a != 1 for a, b in zip(idx, idx[1:])):
        raise ConfigurationError("CPSD frames must have consecutive indices")
    x = np.stack([f.spectra for f in frames])  # (N, M, B)
    return CpsdStack(idx[-1], cpsd_from_spectra(x), frames[-1].bin_indices)


def cpsd_from_spectra(x: np.ndarray) -> np.ndarray:
    """``(1/N) sum_n x_n x_n^H`` per bin for spectra shaped ``(N, M, B)``."""
    x = np.asarray(x, dtype=np.complex128)
    xb = x.transpose(2, 1, 0)  # (B, M, N)
    phi = xb @ xb.conj().transpose(0, 2, 1)
    phi /= x.shape[0]
    return phi


class CpsdBlocker:
    """Streaming wrapper: collects frames and emits one CPSD per N frames.

    Blocks are non-overlapping (tumbling); nothing is emitted until N
    frames have arrived.
    """

    def __init__(self, n_average: int):
        if n_average < 1:
            raise ConfigurationError("CPSD averaging length must be >= 1")
        self.n_average = n_average
        self._history: deque[SpectralFrame] = deque(maxlen=n_average)

    def push(self, frame: SpectralFrame) -> CpsdStack | None:
        self._history.append(frame)
        if len(self._history) < self.n_average:
            return None
        stack = estimate_cpsd(list(self._history), self.n_average)
        self._history.clear()
        return stack


_PCM_SCALE = {np.dtype(np.int16): 2.0**15, np.dtype(np.int32): 2.0**31, np.dtype(np.uint8): 2.0**7}


def read_wav(path: str | Path, *, channels: list[int] | None = None) -> MultichannelBuffer:
    """Read a RIFF/WAVE file into a buffer scaled to [-1, 1).

    PCM 16/24/32-bit and IEEE float are accepted (24-bit comes back from
    scipy left-justified in int32). ``channels`` selects a 0-based subset.
    """
    try:
        rate, data = wavfile.read(str(path))
    except (OSError, ValueError) as exc:
        raise ConfigurationError(f"cannot read WAV {path}: {exc}") from exc
    if data.ndim == 1:
        data = data[:, None]
    if data.dtype == np.uint8:
        x = (data.astype(float) - 128.0) / _PCM_SCALE[data.dtype]
    elif data.dtype in _PCM_SCALE:
        x = data.astype(float) / _PCM_SCALE[data.dtype]
    else:
        x = data.astype(float)
    x = x.T
    if channels is not None:
        if max(channels, default=-1) >= x.shape[0] or min(channels, default=0) < 0:
            raise ChannelMismatchError(
                f"channel selection {channels} invalid for {x.shape[0]}-channel input"
            )
        x = x[channels]
    return MultichannelBuffer(np.ascontiguousarray(x), float(rate))


def write_wav(path: str | Path, buffer: MultichannelBuffer) -> None:
    """Write IEEE-float (32-bit) WAV, channel-interleaved."""
    data = np.ascontiguousarray(buffer.samples.T.astype(np.float32))
    wavfile.write(str(path), int(round(buffer.sample_rate_hz)), data)
