"""Training loop laws, scoring, and the exact AUC computation.

The AUC oracle is the brute-force all-pairs count, written independently
of the sort-based implementation.
"""
from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from outliernets import (
    AudioClip,
    FeatureConfig,
    SingleClassError,
    TrainConfig,
    compute_auc,
    evaluate,
    make_template,
    score_clip,
    train,
)
from outliernets.anomaly import (
    AGGREGATES,
    denormalize,
    normalize,
    write_scores_csv,
    write_scores_jsonl,
    write_summary_csv,
)


# ------------------------------------------------------------- AUC oracle

def brute_force_auc(scored) -> float:
    """All-pairs Mann-Whitney count: P(anomalous > normal) + 0.5 ties."""
    positives = [s for s, label in scored if label in ("anomalous", 1, True)]
    negatives = [s for s, label in scored if label in ("normal", 0, False)]
    wins = 0.0
    for a in positives:
        for n in negatives:
            if a > n:
                wins += 1.0
            elif a == n:
                wins += 0.5
    return wins / (len(positives) * len(negatives))


def test_auc_matches_brute_force_on_100_random_sets(rng):
    for _ in range(100):
        n_pos = int(rng.integers(1, 12))
        n_neg = int(rng.integers(1, 12))
        # Quantized scores so exact ties occur frequently.
        scores = np.round(rng.normal(size=n_pos + n_neg), 1)
        labels = ["anomalous"] * n_pos + ["normal"] * n_neg
        scored = list(zip(scores.tolist(), labels))
        assert compute_auc(scored) == pytest.approx(
            brute_force_auc(scored), abs=1e-12
        )


def test_auc_known_values():
    assert compute_auc([(1.0, "anomalous"), (0.0, "normal")]) == 1.0
    assert compute_auc([(0.0, "anomalous"), (1.0, "normal")]) == 0.0
    assert compute_auc([(0.5, "anomalous"), (0.5, "normal")]) == 0.5


def test_auc_accepts_integer_and_bool_labels():
    scored_str = [(0.9, "anomalous"), (0.1, "normal"), (0.5, "anomalous")]
    scored_int = [(0.9, 1), (0.1, 0), (0.5, 1)]
    scored_bool = [(0.9, True), (0.1, False), (0.5, True)]
    want = compute_auc(scored_str)
    assert compute_auc(scored_int) == want
    assert compute_auc(scored_bool) == want


def test_auc_single_class_errors():
    with pytest.raises(SingleClassError):
        compute_auc([(0.5, "normal"), (0.7, "normal")])
    with pytest.raises(SingleClassError):
        compute_auc([(0.5, "anomalous")])


def test_auc_rejects_nonfinite():
    with pytest.raises(ValueError):
        compute_auc([(float("nan"), "anomalous"), (0.1, "normal")])


# ---------------------------------------------------------- normalization

def test_normalize_maps_endpoints_to_unit_interval():
    stats = (-4.0, 4.0)
    x = np.array([-4.0, 0.0, 4.0])
    np.testing.assert_allclose(normalize(x, stats), [-1.0, 0.0, 1.0])


def test_normalize_clips_out_of_range():
    stats = (0.0, 1.0)
    x = np.array([-5.0, 2.0])
    np.testing.assert_array_equal(normalize(x, stats), [-1.0, 1.0])


def test_normalize_round_trip_in_range(rng):
    stats = (-3.0, 5.0)
    x = rng.uniform(-3.0, 5.0, 100)
    np.testing.assert_allclose(denormalize(normalize(x, stats), stats), x,
                               rtol=1e-12)


def test_normalize_rejects_degenerate_stats(rng):
    with pytest.raises(ValueError):
        normalize(np.zeros(3), (1.0, 1.0))


# ---------------------------------------------------------------- training

def test_train_is_deterministic(tiny_crops):
    arch = make_template("fan_conv", 0.25, 2)
    cfg = TrainConfig(epochs_max=3, batch_size=16, patience=None, seed=5)
    a = train(arch, tiny_crops, cfg)
    b = train(arch, tiny_crops, cfg)
    np.testing.assert_array_equal(a.bundle.weights, b.bundle.weights)
    assert a.val_losses == b.val_losses
    assert a.bundle.norm_stats == b.bundle.norm_stats


def test_train_seed_changes_result(tiny_crops):
    arch = make_template("fan_conv", 0.25, 2)
    a = train(arch, tiny_crops, TrainConfig(epochs_max=2, batch_size=16,
                                            patience=None, seed=0))
    b = train(arch, tiny_crops, TrainConfig(epochs_max=2, batch_size=16,
                                            patience=None, seed=1))
    assert not np.array_equal(a.bundle.weights, b.bundle.weights)


def test_train_requires_enough_crops(tiny_crops):
    arch = make_template("fan_conv", 0.25, 2)
    with pytest.raises(ValueError, match="batch_size"):
        train(arch, tiny_crops[:8], TrainConfig(batch_size=16))


def test_train_loss_decreases(tiny_train_result):
    losses = tiny_train_result.val_losses
    assert losses[-1] < losses[0]


def test_train_runs_epochs_max_without_patience(tiny_train_result):
    assert len(tiny_train_result.val_losses) == 8
    assert tiny_train_result.stopped_early is False


def test_early_stopping_law(tiny_crops):
    arch = make_template("fan_conv", 0.25, 2)
    cfg = TrainConfig(epochs_max=60, batch_size=16, patience=2, seed=3)
    result = train(arch, tiny_crops, cfg)
    if result.stopped_early:
        # best epoch, then exactly `patience` non-improving epochs.
        assert len(result.val_losses) == result.best_epoch + cfg.patience + 1
        best = min(result.val_losses)
        assert result.val_losses[result.best_epoch] == best
    else:
        assert len(result.val_losses) == cfg.epochs_max


def test_best_weights_snapshot_returned(tiny_crops):
    arch = make_template("fan_conv", 0.25, 2)
    cfg = TrainConfig(epochs_max=6, batch_size=16, patience=None, seed=9)
    result = train(arch, tiny_crops, cfg)
    assert result.best_epoch == int(np.argmin(result.val_losses))


def test_norm_stats_come_from_fit_partition_only(tiny_crops):
    result = train(
        make_template("fan_conv", 0.25, 2),
        tiny_crops,
        TrainConfig(epochs_max=1, batch_size=16, patience=None, seed=5),
    )
    lo, hi = result.bundle.norm_stats
    assert lo < hi
    # Stats must come from a subset of all crops, so they cannot be wider
    # than the global min/max.
    all_vals = np.concatenate([np.asarray(c.values).ravel() for c in tiny_crops])
    assert lo >= all_vals.min() - 1e-12
    assert hi <= all_vals.max() + 1e-12


# ----------------------------------------------------------------- scoring

def test_per_crop_count_follows_frame_law(tiny_bundle, tiny_corpus, feature_cfg):
    _, test_set = tiny_corpus
    clip, _ = test_set[0]
    score = score_clip(tiny_bundle, clip, feature_cfg)
    # 4 s at 16 kHz -> 126 frames -> floor(126/32) = 3 crops.
    assert len(score.per_crop_mse) == 3
    assert score.clip_id == clip.source_id


def test_aggregate_max_and_mean(tiny_bundle, tiny_corpus, feature_cfg):
    _, test_set = tiny_corpus
    clip, _ = test_set[0]
    smax = score_clip(tiny_bundle, clip, feature_cfg, aggregate="max")
    smean = score_clip(tiny_bundle, clip, feature_cfg, aggregate="mean")
    assert smax.per_crop_mse == smean.per_crop_mse
    assert smax.clip_score == pytest.approx(max(smax.per_crop_mse))
    assert smean.clip_score == pytest.approx(
        sum(smean.per_crop_mse) / len(smean.per_crop_mse)
    )
    assert smax.clip_score >= smean.clip_score
    with pytest.raises(ValueError):
        score_clip(tiny_bundle, clip, feature_cfg, aggregate="median")
    assert AGGREGATES == ("max", "mean")


def test_silence_scores_above_training_clips(tiny_bundle, tiny_corpus, feature_cfg):
    train_clips, _ = tiny_corpus
    train_scores = [
        score_clip(tiny_bundle, clip, feature_cfg).clip_score
        for clip in train_clips
    ]
    silence = AudioClip(samples=np.zeros(4 * 16000), sample_rate=16000,
                        source_id="silence")
    s = score_clip(tiny_bundle, silence, feature_cfg).clip_score
    assert s > max(train_scores)


# ---------------------------------------------------------------- evaluate

def test_evaluate_report(tiny_bundle, tiny_corpus, feature_cfg):
    _, test_set = tiny_corpus
    report = evaluate(tiny_bundle, test_set, feature_cfg,
                      machine_type="synth", machine_id="tiny", snr_tag="")
    assert report.n_normal == 4
    assert report.n_anomalous == 4
    assert 0.0 <= report.auc <= 1.0
    recomputed = compute_auc([(s.clip_score, s.label) for s in report.scores])
    assert report.auc == recomputed
    assert report.efficiency.params == 119


def test_evaluate_parallel_matches_serial(tiny_bundle, tiny_corpus, feature_cfg):
    _, test_set = tiny_corpus
    a = evaluate(tiny_bundle, test_set, feature_cfg, workers=1)
    b = evaluate(tiny_bundle, test_set, feature_cfg, workers=3)
    assert a.auc == b.auc
    for sa, sb in zip(a.scores, b.scores):
        assert sa == sb


def test_evaluate_single_class_errors(tiny_bundle, tiny_corpus, feature_cfg):
    _, test_set = tiny_corpus
    normals_only = [(c, l) for c, l in test_set if l == "normal"]
    with pytest.raises(SingleClassError):
        evaluate(tiny_bundle, normals_only, feature_cfg)


# ----------------------------------------------------------------- writers

@pytest.fixture()
def report(tiny_bundle, tiny_corpus, feature_cfg):
    _, test_set = tiny_corpus
    return evaluate(tiny_bundle, test_set, feature_cfg,
                    machine_type="synth", machine_id="tiny", snr_tag="6_dB")


def test_scores_csv_schema(report, tmp_path):
    path = tmp_path / "scores.csv"
    write_scores_csv(report, path)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 8
    assert set(rows[0]) == {"clip_id", "clip_score", "label"}
    for row in rows:
        float(row["clip_score"])  # parseable


def test_summary_csv_schema(report, tmp_path):
    path = tmp_path / "summary.csv"
    write_summary_csv(report, path)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1
    row = rows[0]
    for column in ("machine_type", "machine_id", "snr_tag", "arch", "auc",
                   "n_normal", "n_anomalous", "params", "model_bytes",
                   "macs", "flops"):
        assert column in row
    assert row["machine_type"] == "synth"
    assert int(row["params"]) == 119
    assert float(row["auc"]) == report.auc


def test_scores_jsonl(report, tmp_path):
    path = tmp_path / "scores.jsonl"
    write_scores_jsonl(report, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 8
    for line in lines:
        obj = json.loads(line)
        assert {"clip_id", "clip_score", "label", "per_crop_mse"} <= set(obj)


def test_writers_are_deterministic(report, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_scores_csv(report, a)
    write_scores_csv(report, b)
    assert a.read_bytes() == b.read_bytes()
