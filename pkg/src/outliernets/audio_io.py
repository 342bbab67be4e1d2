"""Audio input/output: WAV parsing, dataset indexing, synthetic corpora.

WAV reading is a from-scratch RIFF chunk walk supporting 16-bit PCM and
32-bit IEEE-float encodings (mono or multi-channel; multi-channel input is
downmixed to mono by averaging). Dataset indexing maps a machine-sound corpus
laid out as ``<root>/<machine_type>/<machine_id>/{normal,abnormal}/*.wav``
into a deterministic train/test split. The synthetic corpus generator
produces harmonic "machine hum" clips plus controlled anomalies so the whole
pipeline can be exercised without any external recordings.
"""

from __future__ import annotations

import math
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AudioFormatError, DatasetError, UnsupportedEncodingError

# RIFF fmt-chunk encoding tags.
WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE

LABEL_NORMAL = "normal"
LABEL_ANOMALOUS = "anomalous"

# Anomaly-injection constants for the synthetic corpus. The frequency-shift
# factor is deliberately far from 1.0 so shifted harmonics land on different
# mel bands than the normal ones.
FREQ_SHIFT_FACTOR = 1.5
IMPULSE_PERIOD_S = 0.25
IMPULSE_AMPLITUDE = 0.8
IMPULSE_DECAY = 0.6
BURST_DURATION_S = 0.1
BURST_AMPLITUDE = 0.5
BURST_BAND = (0.15, 0.40)  # fraction of Nyquist covered by burst noise

ANOMALY_KINDS = ("freq_shift", "impulse_train", "broadband_burst")


@dataclass(frozen=True)
class AudioClip:
    """A mono audio clip.

    Attributes:
        samples: 1-D float64 array of samples in [-1.0, 1.0].
        sample_rate: sampling rate in Hz.
        source_id: provenance string (file stem or synthetic clip id).
    """

    samples: np.ndarray
    sample_rate: int
    source_id: str

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise AudioFormatError(
                f"clip '{self.source_id}': expected 1-D samples, got shape {samples.shape}"
            )
        if samples.size == 0:
            raise AudioFormatError(f"clip '{self.source_id}': empty sample array")
        if not np.all(np.isfinite(samples)):
            raise AudioFormatError(f"clip '{self.source_id}': non-finite samples")
        if self.sample_rate <= 0:
            raise AudioFormatError(
                f"clip '{self.source_id}': sample_rate must be positive, got {self.sample_rate}"
            )
        if np.abs(samples).max() > 1.0:
            raise AudioFormatError(
                f"clip '{self.source_id}': samples exceed [-1, 1] "
                f"(max abs {np.abs(samples).max():.6g})"
            )
        object.__setattr__(self, "samples", samples)

    @property
    def duration_seconds(self) -> float:
        return self.samples.size / self.sample_rate


def _read_exact(stream, n: int, what: str) -> bytes:
    data = stream.read(n)
    if len(data) != n:
        raise AudioFormatError(f"truncated file while reading {what}")
    return data


def read_wav(path) -> AudioClip:
    """Parse a WAV file into an :class:`AudioClip`.

    Supports 16-bit PCM and 32-bit IEEE float encodings, including the
    WAVE_FORMAT_EXTENSIBLE wrapper around either. Multi-channel audio is
    downmixed to mono by averaging channels. Integer samples are scaled by
    1/32768; float samples outside [-1, 1] are clamped.

    Args:
        path: filesystem path to a .wav file.

    Returns:
        AudioClip with float64 samples in [-1, 1].

    Raises:
        AudioFormatError: malformed RIFF structure or missing chunks.
        UnsupportedEncodingError: encoding other than PCM16 / float32.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        riff = _read_exact(fh, 12, "RIFF header")
        if riff[0:4] != b"RIFF":
            raise AudioFormatError(f"{path.name}: not a RIFF file (magic {riff[0:4]!r})")
        if riff[8:12] != b"WAVE":
            raise AudioFormatError(f"{path.name}: RIFF form type is {riff[8:12]!r}, not 'WAVE'")

        fmt = None
        data = None
        while True:
            header = fh.read(8)
            if len(header) == 0:
                break
            if len(header) < 8:
                raise AudioFormatError(f"{path.name}: truncated chunk header")
            chunk_id = header[0:4]
            (chunk_size,) = struct.unpack("<I", header[4:8])
            if chunk_id == b"fmt ":
                fmt = _read_exact(fh, chunk_size, "'fmt ' chunk")
            elif chunk_id == b"data":
                data = _read_exact(fh, chunk_size, "'data' chunk")
            else:
                fh.seek(chunk_size, 1)
            if chunk_size % 2 == 1:  # chunks are word-aligned
                fh.seek(1, 1)

    if fmt is None:
        raise AudioFormatError(f"{path.name}: missing 'fmt ' chunk")
    if data is None:
        raise AudioFormatError(f"{path.name}: missing 'data' chunk")
    if len(fmt) < 16:
        raise AudioFormatError(f"{path.name}: 'fmt ' chunk too short ({len(fmt)} bytes)")

    format_tag, channels, sample_rate, _byte_rate, _block_align, bits = struct.unpack(
        "<HHIIHH", fmt[:16]
    )
    if format_tag == WAVE_FORMAT_EXTENSIBLE:
        # Extensible layout: u16 cbSize, u16 valid bits, u32 channel mask,
        # then a 16-byte GUID whose first two bytes are the real format tag.
        if len(fmt) < 26:
            raise AudioFormatError(f"{path.name}: extensible 'fmt ' chunk too short")
        (format_tag,) = struct.unpack("<H", fmt[24:26])

    if channels < 1:
        raise AudioFormatError(f"{path.name}: channel count {channels} in 'fmt ' chunk")

    if format_tag == WAVE_FORMAT_PCM and bits == 16:
        raw = np.frombuffer(data, dtype="<i2")
        if raw.size == 0:
            raise AudioFormatError(f"{path.name}: empty 'data' chunk")
        if raw.size % channels != 0:
            raise AudioFormatError(
                f"{path.name}: 'data' chunk size not divisible by channel count"
            )
        samples = raw.astype(np.float64).reshape(-1, channels).mean(axis=1) / 32768.0
    elif format_tag == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        raw = np.frombuffer(data, dtype="<f4")
        if raw.size == 0:
            raise AudioFormatError(f"{path.name}: empty 'data' chunk")
        if raw.size % channels != 0:
            raise AudioFormatError(
                f"{path.name}: 'data' chunk size not divisible by channel count"
            )
        if not np.all(np.isfinite(raw)):
            raise AudioFormatError(f"{path.name}: non-finite float samples in 'data' chunk")
        samples = np.clip(raw.astype(np.float64).reshape(-1, channels).mean(axis=1), -1.0, 1.0)
    else:
        raise UnsupportedEncodingError(
            f"{path.name}: unsupported encoding (format tag 0x{format_tag:04X}, "
            f"{bits}-bit); only 16-bit PCM and 32-bit IEEE float are handled"
        )

    return AudioClip(samples=samples, sample_rate=int(sample_rate), source_id=path.stem)


def write_wav(path, clip: AudioClip) -> None:
    """Write a clip as mono 16-bit PCM WAV.

    Samples are quantized with round(s * 32768) clamped to int16 range, so a
    read-back differs from the original by at most one quantization step
    (1/32768).
    """
    path = Path(path)
    quantized = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    payload = quantized.tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    fmt = b"fmt " + struct.pack(
        "<IHHIIHH",
        16,
        WAVE_FORMAT_PCM,
        1,
        clip.sample_rate,
        clip.sample_rate * 2,
        2,
        16,
    )
    data_hdr = b"data" + struct.pack("<I", len(payload))
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header + fmt + data_hdr + payload)
    tmp.replace(path)


# ---------------------------------------------------------------------------
# Dataset indexing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IndexEntry:
    """One WAV file in a dataset index."""

    path: Path
    label: str  # LABEL_NORMAL or LABEL_ANOMALOUS
    split: str  # "train" or "test"


@dataclass(frozen=True)
class DatasetIndex:
    """Deterministic train/test view of one machine's recordings.

    Training entries are normal-only; the test split mixes held-out normals
    with all anomalous recordings. ``train_only`` is set when no abnormal
    directory exists, in which case the index supports training but not
    evaluation.
    """

    entries: tuple[IndexEntry, ...]
    machine_type: str
    machine_id: str
    snr_tag: str
    train_only: bool = False

    def train_paths(self) -> list[Path]:
        return [e.path for e in self.entries if e.split == "train"]

    def test_entries(self) -> list[IndexEntry]:
        return [e for e in self.entries if e.split == "test"]


_SNR_RE = re.compile(r"^(-?\d+)_?dB$", re.IGNORECASE)


def _find_machine_dir(root: Path, machine_type: str | None, machine_id: str | None) -> Path:
    if machine_type is not None and machine_id is not None:
        candidate = root / machine_type / machine_id
        if not (candidate / "normal").is_dir():
            raise DatasetError(f"no 'normal' directory under {candidate}")
        return candidate
    if (root / "normal").is_dir():
        return root
    matches = sorted(p.parent for p in root.glob("*/*/normal") if p.is_dir())
    if not matches:
        raise DatasetError(
            f"no '<machine_type>/<machine_id>/normal' directory found under {root}"
        )
    if len(matches) > 1:
        names = ", ".join(str(m.relative_to(root)) for m in matches[:5])
        raise DatasetError(
            f"{len(matches)} machine directories found under {root} ({names}...); "
            "pass machine_type and machine_id to disambiguate"
        )
    return matches[0]


def index_dataset(
    root,
    machine_type: str | None = None,
    machine_id: str | None = None,
    test_fraction: float = 0.5,
    seed: int = 0,
) -> DatasetIndex:
    """Index one machine's recordings into a train/test split.

    Expected layout: ``<machine_dir>/normal/*.wav`` plus optionally
    ``<machine_dir>/abnormal/*.wav``, where ``<machine_dir>`` is either
    ``root`` itself, ``root/<machine_type>/<machine_id>``, or the single such
    directory found by scanning. Normal files are shuffled with a seeded RNG
    and ``round(n * test_fraction)`` of them are held out as test normals;
    all abnormal files go to the test split. The assignment depends only on
    the sorted file names and the seed.

    Raises:
        DatasetError: missing/ambiguous machine directory or no normal WAVs.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} is not a directory")
    if not 0.0 < test_fraction < 1.0:
        raise DatasetError(f"test_fraction must be in (0, 1), got {test_fraction}")
    machine_dir = _find_machine_dir(root, machine_type, machine_id)

    normals = sorted((machine_dir / "normal").glob("*.wav"))
    if not normals:
        raise DatasetError(f"no wav files found in {machine_dir / 'normal'}")
    abnormal_dir = machine_dir / "abnormal"
    abnormals = sorted(abnormal_dir.glob("*.wav")) if abnormal_dir.is_dir() else []

    order = np.random.default_rng(seed).permutation(len(normals))
    n_test = int(round(len(normals) * test_fraction))
    n_test = min(max(n_test, 1), len(normals) - 1) if len(normals) > 1 else 0
    test_idx = set(order[:n_test].tolist())

    entries: list[IndexEntry] = []
    for i, p in enumerate(normals):
        split = "test" if i in test_idx else "train"
        entries.append(IndexEntry(path=p, label=LABEL_NORMAL, split=split))
    for p in abnormals:
        entries.append(IndexEntry(path=p, label=LABEL_ANOMALOUS, split="test"))

    mtype = machine_dir.parent.name if machine_dir != root else machine_dir.name
    mid = machine_dir.name
    if machine_type is not None:
        mtype = machine_type
    if machine_id is not None:
        mid = machine_id
    snr_tag = ""
    for part in machine_dir.resolve().parts:
        m = _SNR_RE.match(part)
        if m:
            snr_tag = f"{m.group(1)}dB"
    return DatasetIndex(
        entries=tuple(entries),
        machine_type=mtype,
        machine_id=mid,
        snr_tag=snr_tag,
        train_only=not abnormals,
    )


# ---------------------------------------------------------------------------
# Synthetic corpus
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a bit-deterministic synthetic machine-sound corpus.

    A "normal" clip is a fixed stack of zero-phase harmonics plus white noise
    whose standard deviation is ``noise_level`` times the RMS of the clean
    harmonic stack. Anomalous clips perturb that recipe according to
    ``anomaly_kind``:

    - ``freq_shift``: all harmonic frequencies multiplied by
      ``FREQ_SHIFT_FACTOR`` (1.5).
    - ``impulse_train``: decaying clicks of amplitude ``IMPULSE_AMPLITUDE``
      every ``IMPULSE_PERIOD_S`` seconds, random phase per clip.
    - ``broadband_burst``: band-limited noise bursts (about one per second,
      ``BURST_DURATION_S`` each) confined to ``BURST_BAND`` of Nyquist.

    The same spec always produces the same corpus, bit for bit.
    """

    duration_seconds: float = 10.0
    sample_rate: int = 16000
    # Default spectral profile: a non-harmonic resonance stack spread across
    # the band, as from a motor plus housing resonances.  Deliberately not an
    # exact harmonic series so that a frequency shift moves every component
    # onto positions not occupied by any normal component.
    harmonics: tuple[tuple[float, float], ...] = (
        (320.0, 0.30), (510.0, 0.22), (800.0, 0.20), (1150.0, 0.17),
        (1600.0, 0.15), (2200.0, 0.13), (3000.0, 0.12), (4100.0, 0.10),
    )
    noise_level: float = 0.05
    anomaly_kind: str = "freq_shift"
    n_normal_train: int = 40
    n_normal_test: int = 20
    n_anomalous_test: int = 20
    rng_seed: int = 0

    def __post_init__(self):
        if self.duration_seconds <= 0:
            raise ValueError(f"duration_seconds must be positive, got {self.duration_seconds}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not self.harmonics:
            raise ValueError("harmonics must be non-empty")
        nyquist = self.sample_rate / 2.0
        for freq, amp in self.harmonics:
            if not 0.0 < freq < nyquist:
                raise ValueError(f"harmonic frequency {freq} outside (0, {nyquist})")
            if amp <= 0:
                raise ValueError(f"harmonic amplitude {amp} must be positive")
        if self.anomaly_kind not in ANOMALY_KINDS:
            raise ValueError(
                f"anomaly_kind must be one of {ANOMALY_KINDS}, got {self.anomaly_kind!r}"
            )
        if self.anomaly_kind == "freq_shift":
            worst = max(f for f, _ in self.harmonics) * FREQ_SHIFT_FACTOR
            if worst >= nyquist:
                raise ValueError(
                    f"freq_shift would move a harmonic to {worst} Hz, at or above "
                    f"Nyquist ({nyquist} Hz)"
                )
        if self.noise_level < 0:
            raise ValueError(f"noise_level must be >= 0, got {self.noise_level}")
        if min(self.n_normal_train, self.n_normal_test, self.n_anomalous_test) < 0:
            raise ValueError("clip counts must be non-negative")
        canonical = tuple((float(f), float(a)) for f, a in self.harmonics)
        object.__setattr__(self, "harmonics", canonical)

    def to_config_text(self) -> str:
        """Serialize to a round-trippable ``key = value`` text block."""
        harmonics = ",".join(f"{f:.17g}:{a:.17g}" for f, a in self.harmonics)
        lines = [
            f"duration_seconds = {self.duration_seconds:.17g}",
            f"sample_rate = {self.sample_rate}",
            f"harmonics = {harmonics}",
            f"noise_level = {self.noise_level:.17g}",
            f"anomaly_kind = {self.anomaly_kind}",
            f"n_normal_train = {self.n_normal_train}",
            f"n_normal_test = {self.n_normal_test}",
            f"n_anomalous_test = {self.n_anomalous_test}",
            f"rng_seed = {self.rng_seed}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_config_text(cls, text: str) -> "SynthSpec":
        """Parse the format produced by :meth:`to_config_text`."""
        kwargs = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key == "harmonics":
                pairs = []
                for item in value.split(","):
                    freq_s, _, amp_s = item.partition(":")
                    pairs.append((float(freq_s), float(amp_s)))
                kwargs[key] = tuple(pairs)
            elif key in ("duration_seconds", "noise_level"):
                kwargs[key] = float(value)
            elif key in ("sample_rate", "n_normal_train", "n_normal_test",
                         "n_anomalous_test", "rng_seed"):
                kwargs[key] = int(value)
            elif key == "anomaly_kind":
                kwargs[key] = value
            else:
                raise ValueError(f"line {lineno}: unknown key {key!r}")
        return cls(**kwargs)


def _harmonic_stack(spec: SynthSpec, factor: float = 1.0) -> np.ndarray:
    n = int(round(spec.duration_seconds * spec.sample_rate))
    t = np.arange(n, dtype=np.float64) / spec.sample_rate
    signal = np.zeros(n, dtype=np.float64)
    for freq, amp in spec.harmonics:
        signal += amp * np.sin(2.0 * math.pi * freq * factor * t)
    return signal


def _inject_anomaly(signal: np.ndarray, spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    n = signal.size
    if spec.anomaly_kind == "freq_shift":
        return _harmonic_stack(spec, factor=FREQ_SHIFT_FACTOR)
    out = signal.copy()
    if spec.anomaly_kind == "impulse_train":
        period = max(1, int(round(IMPULSE_PERIOD_S * spec.sample_rate)))
        click = IMPULSE_AMPLITUDE * (IMPULSE_DECAY ** np.arange(5, dtype=np.float64))
        click *= np.where(np.arange(5) % 2 == 0, 1.0, -1.0)
        offset = int(rng.integers(0, period))
        for start in range(offset, n, period):
            span = min(5, n - start)
            out[start : start + span] += click[:span]
        return out
    # broadband_burst: noise shaped in the frequency domain so its energy is
    # confined to a band the harmonics never occupy.
    burst_len = max(1, int(round(BURST_DURATION_S * spec.sample_rate)))
    n_bursts = max(1, int(round(spec.duration_seconds)))
    freqs = np.fft.rfftfreq(burst_len, d=1.0 / spec.sample_rate)
    nyquist = spec.sample_rate / 2.0
    band = (freqs >= BURST_BAND[0] * nyquist) & (freqs <= BURST_BAND[1] * nyquist)
    for _ in range(n_bursts):
        start = int(rng.integers(0, max(1, n - burst_len)))
        white = rng.standard_normal(burst_len)
        shaped = np.fft.irfft(np.fft.rfft(white) * band, n=burst_len)
        peak = np.abs(shaped).max()
        if peak > 0:
            shaped *= BURST_AMPLITUDE / peak
        out[start : start + burst_len] += shaped
    return out


def synthesize_corpus(
    spec: SynthSpec,
) -> tuple[list[AudioClip], list[tuple[AudioClip, str]]]:
    """Generate a train set and labeled test set from a :class:`SynthSpec`.

    Clip randomness is fanned out from ``spec.rng_seed`` with one child RNG
    per clip in a fixed order (train normals, test normals, test anomalies),
    so the corpus is reproducible bit for bit and insensitive to how many
    clips of other groups are requested before it.

    Returns:
        (train_clips, test_set) where test_set entries are (clip, label) with
        label in {"normal", "anomalous"}.
    """
    base = _harmonic_stack(spec)
    rms = math.sqrt(float(np.mean(base**2)))
    noise_std = spec.noise_level * rms

    root = np.random.SeedSequence(spec.rng_seed)
    n_total = spec.n_normal_train + spec.n_normal_test + spec.n_anomalous_test
    children = root.spawn(n_total)
    idx = 0

    def _finish(clean: np.ndarray, rng: np.random.Generator, clip_id: str) -> AudioClip:
        noisy = clean + rng.standard_normal(clean.size) * noise_std
        np.clip(noisy, -1.0, 1.0, out=noisy)
        return AudioClip(samples=noisy, sample_rate=spec.sample_rate, source_id=clip_id)

    train: list[AudioClip] = []
    for i in range(spec.n_normal_train):
        rng = np.random.default_rng(children[idx])
        idx += 1
        train.append(_finish(base, rng, f"synth_train_normal_{i:04d}"))

    test: list[tuple[AudioClip, str]] = []
    for i in range(spec.n_normal_test):
        rng = np.random.default_rng(children[idx])
        idx += 1
        test.append((_finish(base, rng, f"synth_test_normal_{i:04d}"), LABEL_NORMAL))
    for i in range(spec.n_anomalous_test):
        rng = np.random.default_rng(children[idx])
        idx += 1
        anomalous = _inject_anomaly(base, spec, rng)
        test.append(
            (_finish(anomalous, rng, f"synth_test_anomalous_{i:04d}"), LABEL_ANOMALOUS)
        )
    return train, test
