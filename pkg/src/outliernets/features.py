"""Log-Mel feature extraction and fixed-width spectrogram crops.

Pipeline: frame the waveform with a periodic Hann window (1024-point FFT,
hop 512, reflect-padded so frame count is ``floor(n / hop) + 1``), take the
power spectrum, apply a 128-band triangular mel filterbank (HTK mel scale,
``mel = 2595 * log10(1 + f / 700)``), and compress with ``log10`` after
flooring at ``log_floor``. Model input is produced by slicing the resulting
(frames, n_mels) matrix into non-overlapping windows of 32 frames; a trailing
remainder of fewer than 32 frames is discarded.

A 10-second clip at 16 kHz therefore yields a 313x128 log-mel matrix and
9 crops of shape 32x128.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_io import AudioClip
from .errors import FeatureError

CROP_FRAMES = 32

_WINDOWS = ("hann", "rectangular")

# Tensor-file header: magic, u32 rows, u32 cols, u32 dtype code.
TENSOR_MAGIC = b"MELS"
TENSOR_DTYPE_F32 = 1
TENSOR_HEADER_BYTES = 16


@dataclass(frozen=True)
class FeatureConfig:
    """STFT / mel filterbank / crop parameters.

    Attributes:
        n_fft: FFT size (power of two).
        hop: hop length in samples; must not exceed n_fft.
        n_mels: number of mel bands; at most n_fft // 2 + 1.
        window: "hann" (periodic) or "rectangular".
        f_min: lowest filterbank edge in Hz.
        f_max: highest filterbank edge in Hz; None means Nyquist.
        log_floor: power values are clamped to at least this before log10.
        center_pad: reflect-pad by n_fft // 2 on both sides so that frame
            count is floor(n / hop) + 1 and frames are centered on
            multiples of hop.
    """

    n_fft: int = 1024
    hop: int = 512
    n_mels: int = 128
    window: str = "hann"
    f_min: float = 0.0
    f_max: float | None = None
    log_floor: float = 1e-10
    center_pad: bool = True

    def __post_init__(self):
        if self.n_fft <= 0 or (self.n_fft & (self.n_fft - 1)) != 0:
            raise FeatureError(f"n_fft must be a positive power of two, got {self.n_fft}")
        if not 0 < self.hop <= self.n_fft:
            raise FeatureError(f"hop must be in [1, n_fft], got {self.hop}")
        if not 0 < self.n_mels <= self.n_fft // 2 + 1:
            raise FeatureError(
                f"n_mels must be in [1, n_fft//2+1 = {self.n_fft // 2 + 1}], got {self.n_mels}"
            )
        if self.window not in _WINDOWS:
            raise FeatureError(f"window must be one of {_WINDOWS}, got {self.window!r}")
        if self.f_min < 0:
            raise FeatureError(f"f_min must be >= 0, got {self.f_min}")
        if self.f_max is not None and self.f_max <= self.f_min:
            raise FeatureError(f"f_max ({self.f_max}) must exceed f_min ({self.f_min})")
        if self.log_floor <= 0:
            raise FeatureError(f"log_floor must be positive, got {self.log_floor}")


@dataclass(frozen=True)
class MelSpectrogram:
    """A (frames, n_mels) float64 log-mel matrix plus provenance."""

    values: np.ndarray
    frames: int
    n_mels: int
    source_id: str


@dataclass(frozen=True)
class CropWindow:
    """One non-overlapping (CROP_FRAMES, n_mels) slice of a log-mel matrix."""

    values: np.ndarray
    clip_ref: str
    crop_index: int


def _window_values(cfg: FeatureConfig) -> np.ndarray:
    if cfg.window == "hann":
        # Periodic Hann: denominator n_fft, not n_fft - 1.
        n = np.arange(cfg.n_fft, dtype=np.float64)
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / cfg.n_fft)
    return np.ones(cfg.n_fft, dtype=np.float64)


def frame_count(n_samples: int, cfg: FeatureConfig) -> int:
    """Number of STFT frames for a waveform of ``n_samples`` samples."""
    if cfg.center_pad:
        return n_samples // cfg.hop + 1
    if n_samples < cfg.n_fft:
        return 0
    return (n_samples - cfg.n_fft) // cfg.hop + 1


def stft_power(clip: AudioClip, cfg: FeatureConfig) -> np.ndarray:
    """Power spectrogram of shape (frames, n_fft // 2 + 1), float64.

    With ``center_pad`` the waveform is reflect-padded by ``n_fft // 2`` on
    each side, which requires more than ``n_fft // 2`` samples; without it
    the waveform must be at least ``n_fft`` samples long.

    Raises:
        FeatureError: clip too short for the requested framing.
    """
    x = clip.samples
    if cfg.center_pad:
        pad = cfg.n_fft // 2
        if x.size <= pad:
            raise FeatureError(
                f"clip '{clip.source_id}' too short for reflect padding: "
                f"{x.size} samples, need more than {pad}"
            )
        x = np.pad(x, pad, mode="reflect")
    elif x.size < cfg.n_fft:
        raise FeatureError(
            f"clip '{clip.source_id}' too short: {x.size} samples, need at least {cfg.n_fft}"
        )
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.n_fft)[:: cfg.hop]
    spectrum = np.fft.rfft(frames * _window_values(cfg), axis=1)
    return np.abs(spectrum) ** 2


def hz_to_mel(freq_hz) -> np.ndarray | float:
    """HTK mel scale: mel = 2595 * log10(1 + f / 700)."""
    return 2595.0 * np.log10(1.0 + np.asarray(freq_hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel) -> np.ndarray | float:
    """Inverse of :func:`hz_to_mel`."""
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: FeatureConfig, sample_rate: int) -> np.ndarray:
    """Triangular mel filterbank, shape (n_mels, n_fft // 2 + 1).

    Band centers are spaced uniformly on the mel scale between ``f_min`` and
    ``f_max`` (default Nyquist); filter m rises linearly from edge m to edge
    m+1 and falls to edge m+2, evaluated at the FFT bin center frequencies.

    Raises:
        FeatureError: a band would contain no FFT bin (n_mels too large for
            the FFT resolution), so its row would be all zeros.
    """
    if sample_rate <= 0:
        raise FeatureError(f"sample_rate must be positive, got {sample_rate}")
    f_max = cfg.f_max if cfg.f_max is not None else sample_rate / 2.0
    if f_max > sample_rate / 2.0:
        raise FeatureError(f"f_max ({f_max}) exceeds Nyquist ({sample_rate / 2.0})")
    mel_edges = np.linspace(hz_to_mel(cfg.f_min), hz_to_mel(f_max), cfg.n_mels + 2)
    hz_edges = mel_to_hz(mel_edges)
    bin_freqs = np.arange(cfg.n_fft // 2 + 1, dtype=np.float64) * sample_rate / cfg.n_fft

    lo = hz_edges[:-2, None]
    mid = hz_edges[1:-1, None]
    hi = hz_edges[2:, None]
    up_den = mid - lo
    down_den = hi - mid
    if np.any(up_den <= 0) or np.any(down_den <= 0):
        raise FeatureError(
            f"degenerate mel band edges: n_mels={cfg.n_mels} too dense for "
            f"range [{cfg.f_min}, {f_max}] Hz"
        )
    up = (bin_freqs[None, :] - lo) / up_den
    down = (hi - bin_freqs[None, :]) / down_den
    weights = np.maximum(0.0, np.minimum(up, down))

    empty = np.flatnonzero(weights.sum(axis=1) == 0.0)
    if empty.size:
        raise FeatureError(
            f"mel band {int(empty[0])} contains no FFT bin; reduce n_mels "
            f"(= {cfg.n_mels}) or increase n_fft (= {cfg.n_fft})"
        )
    return weights


def log_mel(clip: AudioClip, cfg: FeatureConfig) -> MelSpectrogram:
    """Log-mel matrix for one clip: log10(max(power @ filterbank, log_floor))."""
    power = stft_power(clip, cfg)
    fb = mel_filterbank(cfg, clip.sample_rate)
    mel_power = power @ fb.T
    values = np.log10(np.maximum(mel_power, cfg.log_floor))
    return MelSpectrogram(
        values=values, frames=values.shape[0], n_mels=values.shape[1],
        source_id=clip.source_id,
    )


def crop_windows(spec: MelSpectrogram) -> list[CropWindow]:
    """Slice a log-mel matrix into ``floor(frames / 32)`` crops of 32 frames.

    The trailing remainder of fewer than CROP_FRAMES frames is discarded.

    Raises:
        FeatureError: fewer than CROP_FRAMES frames in total.
    """
    if spec.frames < CROP_FRAMES:
        raise FeatureError(
            f"clip '{spec.source_id}' too short to crop: {spec.frames} frames, "
            f"need at least {CROP_FRAMES}"
        )
    n_crops = spec.frames // CROP_FRAMES
    crops = []
    for i in range(n_crops):
        block = spec.values[i * CROP_FRAMES : (i + 1) * CROP_FRAMES]
        crops.append(CropWindow(values=block.copy(), clip_ref=spec.source_id, crop_index=i))
    return crops


def crop_duration_seconds(cfg: FeatureConfig, sample_rate: int) -> float:
    """Audio span covered by one crop: CROP_FRAMES * hop / sample_rate."""
    return CROP_FRAMES * cfg.hop / sample_rate


# ---------------------------------------------------------------------------
# Tensor file I/O
# ---------------------------------------------------------------------------


def write_tensor(path, values: np.ndarray) -> None:
    """Write a 2-D array as a little-endian float32 tensor file.

    Layout: magic ``MELS``, u32 rows, u32 cols, u32 dtype code (1 = float32),
    then rows*cols float32 values in row-major order.
    """
    values = np.asarray(values)
    if values.ndim != 2:
        raise FeatureError(f"tensor files hold 2-D arrays, got shape {values.shape}")
    path = Path(path)
    header = TENSOR_MAGIC + struct.pack(
        "<III", values.shape[0], values.shape[1], TENSOR_DTYPE_F32
    )
    payload = np.ascontiguousarray(values, dtype="<f4").tobytes()
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header + payload)
    tmp.replace(path)


def read_tensor(path) -> np.ndarray:
    """Read a tensor file written by :func:`write_tensor` (float32 output).

    Raises:
        FeatureError: bad magic, unknown dtype code, or size mismatch.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        header = fh.read(TENSOR_HEADER_BYTES)
        if len(header) < TENSOR_HEADER_BYTES:
            raise FeatureError(f"{path.name}: truncated tensor header")
        if header[:4] != TENSOR_MAGIC:
            raise FeatureError(
                f"{path.name}: bad magic {header[:4]!r}, expected {TENSOR_MAGIC!r}"
            )
        rows, cols, dtype_code = struct.unpack("<III", header[4:16])
        if dtype_code != TENSOR_DTYPE_F32:
            raise FeatureError(f"{path.name}: unknown dtype code {dtype_code}")
        payload = fh.read()
    expected = rows * cols * 4
    if len(payload) != expected:
        raise FeatureError(
            f"{path.name}: payload is {len(payload)} bytes, expected {expected} "
            f"for {rows}x{cols} float32"
        )
    return np.frombuffer(payload, dtype="<f4").reshape(rows, cols).copy()
