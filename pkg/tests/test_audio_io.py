"""WAV I/O, dataset indexing, and synthetic corpus generation."""
from __future__ import annotations

import math
import struct

import numpy as np
import pytest

from outliernets import (
    AudioClip,
    AudioFormatError,
    DatasetError,
    SynthSpec,
    UnsupportedEncodingError,
    index_dataset,
    read_wav,
    synthesize_corpus,
    write_wav,
)
from outliernets.audio_io import FREQ_SHIFT_FACTOR, LABEL_ANOMALOUS, LABEL_NORMAL


# ---------------------------------------------------------------- AudioClip

def test_clip_validates_samples():
    with pytest.raises(AudioFormatError):
        AudioClip(samples=np.array([]), sample_rate=16000, source_id="x")
    with pytest.raises(AudioFormatError):
        AudioClip(samples=np.array([0.0, 2.0]), sample_rate=16000, source_id="x")
    with pytest.raises(AudioFormatError):
        AudioClip(samples=np.array([0.0, np.nan]), sample_rate=16000, source_id="x")
    with pytest.raises(AudioFormatError):
        AudioClip(samples=np.array([0.0]), sample_rate=0, source_id="x")


def test_clip_duration():
    clip = AudioClip(samples=np.zeros(8000), sample_rate=16000, source_id="x")
    assert clip.duration_seconds == 0.5


# ------------------------------------------------------------------ raw WAV

def _wav_bytes(fmt_tag, channels, rate, bits, frames: bytes, fmt_extra=b"") -> bytes:
    """Hand-assemble a RIFF/WAVE file from parts."""
    fmt = struct.pack(
        "<HHIIHH",
        fmt_tag,
        channels,
        rate,
        rate * channels * bits // 8,
        channels * bits // 8,
        bits,
    ) + fmt_extra
    chunks = b"WAVE"
    chunks += b"fmt " + struct.pack("<I", len(fmt)) + fmt + (b"\x00" if len(fmt) % 2 else b"")
    chunks += b"data" + struct.pack("<I", len(frames)) + frames
    return b"RIFF" + struct.pack("<I", len(chunks)) + chunks


def test_pcm16_scale_endpoints(tmp_path):
    frames = struct.pack("<4h", -32768, 32767, 0, 16384)
    path = tmp_path / "endpoints.wav"
    path.write_bytes(_wav_bytes(1, 1, 16000, 16, frames))
    clip = read_wav(path)
    assert clip.sample_rate == 16000
    np.testing.assert_allclose(
        clip.samples, [-1.0, 32767 / 32768, 0.0, 0.5], rtol=0, atol=0
    )


def test_zero_second_file(tmp_path):
    frames = struct.pack(f"<{16000}h", *([0] * 16000))
    path = tmp_path / "zeros.wav"
    path.write_bytes(_wav_bytes(1, 1, 16000, 16, frames))
    clip = read_wav(path)
    assert clip.samples.shape == (16000,)
    assert np.all(clip.samples == 0.0)


def test_stereo_mean_downmix(tmp_path):
    # channels (+0.5, -0.5) everywhere -> all samples 0.0
    half = 16384
    frames = struct.pack("<6h", half, -half, half, -half, half, -half)
    path = tmp_path / "stereo.wav"
    path.write_bytes(_wav_bytes(1, 2, 16000, 16, frames))
    clip = read_wav(path)
    assert clip.samples.shape == (3,)
    np.testing.assert_array_equal(clip.samples, np.zeros(3))


def test_float32_wav(tmp_path):
    values = [0.25, -0.75, 1.0, -1.0]
    frames = struct.pack("<4f", *values)
    path = tmp_path / "f32.wav"
    path.write_bytes(_wav_bytes(3, 1, 16000, 32, frames))
    clip = read_wav(path)
    np.testing.assert_allclose(clip.samples, values, rtol=0, atol=0)


def test_extensible_wav_unwraps_subformat(tmp_path):
    # WAVE_FORMAT_EXTENSIBLE (0xFFFE) carrying PCM as its sub-format.
    sub_pcm = struct.pack("<H", 1) + b"\x00" * 14
    extra = struct.pack("<HHI", 22, 16, 0x4) + sub_pcm
    frames = struct.pack("<2h", 16384, -16384)
    path = tmp_path / "ext.wav"
    path.write_bytes(_wav_bytes(0xFFFE, 1, 16000, 16, frames, fmt_extra=extra))
    clip = read_wav(path)
    np.testing.assert_allclose(clip.samples, [0.5, -0.5])


def test_odd_chunk_padding_is_skipped(tmp_path):
    # A 3-byte junk chunk (odd size, padded to 4) before fmt/data.
    fmt = struct.pack("<HHIIHH", 1, 1, 16000, 32000, 2, 16)
    frames = struct.pack("<2h", 0, 16384)
    body = b"WAVE"
    body += b"junk" + struct.pack("<I", 3) + b"abc\x00"
    body += b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(frames)) + frames
    path = tmp_path / "padded.wav"
    path.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
    clip = read_wav(path)
    np.testing.assert_allclose(clip.samples, [0.0, 0.5])


def test_bad_magic_names_riff(tmp_path):
    path = tmp_path / "bad.wav"
    path.write_bytes(b"JUNKxxxxWAVE")
    with pytest.raises(AudioFormatError, match="RIFF"):
        read_wav(path)


def test_missing_data_chunk(tmp_path):
    fmt = struct.pack("<HHIIHH", 1, 1, 16000, 32000, 2, 16)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    path = tmp_path / "nodata.wav"
    path.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
    with pytest.raises(AudioFormatError, match="data"):
        read_wav(path)


def test_unsupported_codec(tmp_path):
    # A-law (tag 6) is not supported.
    frames = b"\x00\x00"
    path = tmp_path / "alaw.wav"
    path.write_bytes(_wav_bytes(6, 1, 8000, 8, frames))
    with pytest.raises(UnsupportedEncodingError):
        read_wav(path)


def test_write_read_round_trip_within_quantization(tmp_path):
    rng = np.random.default_rng(5)
    samples = np.clip(rng.normal(0, 0.3, 16000), -1.0, 1.0)
    clip = AudioClip(samples=samples, sample_rate=16000, source_id="rt")
    path = tmp_path / "rt.wav"
    write_wav(path, clip)
    back = read_wav(path)
    assert back.sample_rate == 16000
    assert np.max(np.abs(back.samples - samples)) <= 1.0 / 32768


# ------------------------------------------------------------ dataset index

def _make_tree(root, n_normal=8, n_abnormal=4, machine="fan", mid="id_00"):
    base = root / machine / mid
    clip = AudioClip(samples=np.zeros(1600), sample_rate=16000, source_id="t")
    for sub, count in (("normal", n_normal), ("abnormal", n_abnormal)):
        d = base / sub
        d.mkdir(parents=True, exist_ok=True)
        for i in range(count):
            write_wav(d / f"{i:08d}.wav", clip)
    return base


def test_index_split_counts(tmp_path):
    _make_tree(tmp_path)
    idx = index_dataset(tmp_path, machine_type="fan", machine_id="id_00",
                        test_fraction=0.5, seed=0)
    train = idx.train_paths()
    test = idx.test_entries()
    assert len(train) == 4
    assert len(test) == 8  # 4 normal + 4 anomalous
    labels = [e.label for e in test]
    assert labels.count(LABEL_NORMAL) == 4
    assert labels.count(LABEL_ANOMALOUS) == 4


def test_index_train_never_contains_abnormal(tmp_path):
    _make_tree(tmp_path)
    for seed in range(6):
        idx = index_dataset(tmp_path, machine_type="fan", machine_id="id_00",
                            test_fraction=0.5, seed=seed)
        for path in idx.train_paths():
            assert "abnormal" not in str(path)


def test_index_deterministic(tmp_path):
    _make_tree(tmp_path)
    a = index_dataset(tmp_path, machine_type="fan", machine_id="id_00", seed=3)
    b = index_dataset(tmp_path, machine_type="fan", machine_id="id_00", seed=3)
    assert a.entries == b.entries


def test_index_no_normals_errors(tmp_path):
    (tmp_path / "fan" / "id_00" / "normal").mkdir(parents=True)
    with pytest.raises(DatasetError):
        index_dataset(tmp_path, machine_type="fan", machine_id="id_00")


def test_index_direct_machine_dir(tmp_path):
    base = _make_tree(tmp_path)
    idx = index_dataset(base)
    assert len(idx.train_paths()) == 4


# ------------------------------------------------------------ synth corpus

def test_noiseless_single_harmonic_is_exact_sine():
    spec = SynthSpec(
        duration_seconds=0.5,
        harmonics=((400.0, 0.5),),
        noise_level=0.0,
        n_normal_train=1,
        n_normal_test=0,
        n_anomalous_test=0,
    )
    train_clips, _ = synthesize_corpus(spec)
    t = np.arange(8000) / 16000.0
    expected = 0.5 * np.sin(2 * math.pi * 400.0 * t)
    np.testing.assert_allclose(train_clips[0].samples, expected, atol=1e-12)


def test_freq_shift_moves_dominant_bin():
    spec = SynthSpec(
        duration_seconds=1.0,
        harmonics=((400.0, 0.5),),
        noise_level=0.0,
        n_normal_train=0,
        n_normal_test=0,
        n_anomalous_test=1,
        anomaly_kind="freq_shift",
    )
    _, test_set = synthesize_corpus(spec)
    clip, label = test_set[0]
    assert label == LABEL_ANOMALOUS
    # FFT oracle: dominant bin at 400 * 1.5 = 600 Hz.
    spectrum = np.abs(np.fft.rfft(clip.samples))
    freqs = np.fft.rfftfreq(clip.samples.size, d=1 / 16000)
    assert abs(freqs[np.argmax(spectrum)] - 400.0 * FREQ_SHIFT_FACTOR) < 2.0


def test_corpus_counts_and_labels(tiny_spec, tiny_corpus):
    train_clips, test_set = tiny_corpus
    assert len(train_clips) == tiny_spec.n_normal_train
    labels = [label for _, label in test_set]
    assert labels.count(LABEL_NORMAL) == tiny_spec.n_normal_test
    assert labels.count(LABEL_ANOMALOUS) == tiny_spec.n_anomalous_test


def test_corpus_is_pure_function_of_spec(tiny_spec, tiny_corpus):
    train_a, test_a = tiny_corpus
    train_b, test_b = synthesize_corpus(tiny_spec)
    for a, b in zip(train_a, train_b):
        np.testing.assert_array_equal(a.samples, b.samples)
    for (ca, la), (cb, lb) in zip(test_a, test_b):
        assert la == lb
        np.testing.assert_array_equal(ca.samples, cb.samples)


def test_corpus_seed_changes_noise():
    base = SynthSpec(duration_seconds=0.5, n_normal_train=1, n_normal_test=0,
                     n_anomalous_test=0)
    a, _ = synthesize_corpus(base)
    b, _ = synthesize_corpus(SynthSpec(duration_seconds=0.5, n_normal_train=1,
                                       n_normal_test=0, n_anomalous_test=0,
                                       rng_seed=1))
    assert not np.array_equal(a[0].samples, b[0].samples)


def test_samples_stay_in_range(tiny_corpus):
    train_clips, test_set = tiny_corpus
    for clip in train_clips + [c for c, _ in test_set]:
        assert np.max(np.abs(clip.samples)) <= 1.0


def test_spec_validation():
    with pytest.raises(ValueError):
        SynthSpec(harmonics=())
    with pytest.raises(ValueError):
        SynthSpec(harmonics=((9000.0, 0.5),))  # above Nyquist
    with pytest.raises(ValueError):
        # legal un-shifted, but the 1.5x shift would cross Nyquist
        SynthSpec(harmonics=((6000.0, 0.5),), anomaly_kind="freq_shift")
    with pytest.raises(ValueError):
        SynthSpec(noise_level=-0.1)
    with pytest.raises(ValueError):
        SynthSpec(anomaly_kind="volume_drop")


def test_spec_config_text_round_trip(tiny_spec):
    text = tiny_spec.to_config_text()
    back = SynthSpec.from_config_text(text)
    assert back == tiny_spec


def test_all_anomaly_kinds_generate():
    for kind in ("freq_shift", "impulse_train", "broadband_burst"):
        spec = SynthSpec(duration_seconds=0.5, n_normal_train=0, n_normal_test=0,
                         n_anomalous_test=1, anomaly_kind=kind)
        _, test_set = synthesize_corpus(spec)
        clip, label = test_set[0]
        assert label == LABEL_ANOMALOUS
        assert np.max(np.abs(clip.samples)) <= 1.0
