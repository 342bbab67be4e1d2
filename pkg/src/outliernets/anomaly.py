"""Training on normal-only crops, reconstruction scoring, and AUC.

The detector is an autoencoder trained to reconstruct normalized log-mel
crops of *normal* machine sound with MSE loss. At test time a clip's score
is an aggregate (default: maximum) of the per-crop reconstruction errors;
anomalous sounds reconstruct poorly and score high. Detection quality is
summarized as ROC-AUC, computed exactly via pair counting (the rank-sum
form), with ties between scores contributing half.

All randomness in :func:`train` derives from ``TrainConfig.seed`` through
three named child streams (validation split, weight init, batch shuffling),
so a rerun with identical inputs reproduces the returned bundle bit for bit
on the same kernel backend.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .arch import ArchSpec, EfficiencyReport, ModelBundle, efficiency_report
from .audio_io import LABEL_ANOMALOUS, LABEL_NORMAL, AudioClip
from .errors import FeatureError, SingleClassError, TrainingDivergedError
from .features import CropWindow, FeatureConfig, crop_windows, log_mel
from .nn.loss import mse
from .nn.model import Sequential
from .nn.optim import Adam

AGGREGATES = ("max", "mean")

# Seed-stream indices fanned out from TrainConfig.seed (order is part of the
# reproducibility contract).
_STREAM_SPLIT = 0
_STREAM_INIT = 1
_STREAM_BATCH = 2


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters.

    ``patience`` counts epochs without validation improvement before early
    stop; None disables early stopping. The weights returned are always the
    ones with the best validation MSE seen.
    """

    epochs_max: int = 200
    batch_size: int = 64
    lr: float = 1e-3
    patience: int | None = 10
    val_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.epochs_max < 1:
            raise ValueError(f"epochs_max must be >= 1, got {self.epochs_max}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.patience is not None and self.patience < 1:
            raise ValueError(f"patience must be >= 1 or None, got {self.patience}")
        if not 0.0 < self.val_fraction < 0.5:
            raise ValueError(f"val_fraction must be in (0, 0.5), got {self.val_fraction}")


@dataclass(frozen=True)
class TrainResult:
    """A trained bundle plus the loss history that produced it."""

    bundle: ModelBundle
    train_losses: tuple[float, ...]
    val_losses: tuple[float, ...]
    best_epoch: int
    stopped_early: bool


def normalize(values: np.ndarray, stats: tuple[float, float]) -> np.ndarray:
    """Min-max map onto [-1, 1]: 2 * (v - min) / (max - min) - 1, clipped.

    The symmetric range matters for trainability: log-Mel features are
    mostly noise floor, and mapping the floor near zero means a zero-bias
    network starts out already predicting it, so the whole optimization
    budget goes into the spectral structure instead of a constant offset.
    """
    lo, hi = stats
    if not hi > lo:
        raise ValueError(f"bad normalization stats {stats}: need min < max")
    return np.clip(2.0 * (values - lo) / (hi - lo) - 1.0, -1.0, 1.0)


def denormalize(values: np.ndarray, stats: tuple[float, float]) -> np.ndarray:
    """Inverse of :func:`normalize` on the unclipped range."""
    lo, hi = stats
    if not hi > lo:
        raise ValueError(f"bad normalization stats {stats}: need min < max")
    return (values + 1.0) * 0.5 * (hi - lo) + lo


def _crops_to_array(crops) -> np.ndarray:
    """List of CropWindow or (f, m) arrays -> (N, 1, f, m) float64 stack."""
    mats = []
    for crop in crops:
        values = crop.values if isinstance(crop, CropWindow) else np.asarray(crop)
        mats.append(values)
    if not mats:
        raise ValueError("no crops given")
    return np.stack(mats).astype(np.float64)[:, None, :, :]


def train(arch: ArchSpec, crops, cfg: TrainConfig = TrainConfig()) -> TrainResult:
    """Train an autoencoder on normal-only crops.

    Crops are split into fit/validation parts (seeded shuffle, at least one
    validation crop), min-max normalized onto [-1, 1] with stats computed
    from the fit part only, and optimized in float32 with Adam on MSE.
    Training runs
    until ``epochs_max`` or until validation MSE fails to improve for
    ``patience`` consecutive epochs; the best-validation weights are
    returned either way.

    Args:
        arch: architecture; its input shape must match the crop shape.
        crops: sequence of CropWindow or 2-D arrays; needs at least
            ``batch_size`` of them.
        cfg: hyperparameters and seed.

    Raises:
        ValueError: fewer crops than ``batch_size``, or degenerate stats.
        TrainingDivergedError: training loss became non-finite.
    """
    data = _crops_to_array(crops)
    n = data.shape[0]
    if n < cfg.batch_size:
        raise ValueError(
            f"need at least batch_size={cfg.batch_size} crops to train, got {n}"
        )
    if tuple(data.shape[1:]) != arch.input_shape:
        raise ValueError(
            f"crop shape {tuple(data.shape[1:])} does not match architecture "
            f"input {arch.input_shape}"
        )

    streams = np.random.SeedSequence(cfg.seed).spawn(3)
    split_rng = np.random.default_rng(streams[_STREAM_SPLIT])

    order = split_rng.permutation(n)
    n_val = max(1, int(round(n * cfg.val_fraction)))
    val_idx, fit_idx = order[:n_val], order[n_val:]
    if fit_idx.size == 0:
        raise ValueError(f"validation split consumed all {n} crops")

    lo = float(data[fit_idx].min())
    hi = float(data[fit_idx].max())
    if not hi > lo:
        raise ValueError(f"training crops are constant (min == max == {lo})")
    fit = normalize(data[fit_idx], (lo, hi)).astype(np.float32)
    val = normalize(data[val_idx], (lo, hi)).astype(np.float32)

    model = Sequential(arch.layers, arch.input_shape, dtype=np.float32)
    model.init(streams[_STREAM_INIT])
    optimizer = Adam(model.params(), lr=cfg.lr)
    batch_rng = np.random.default_rng(streams[_STREAM_BATCH])

    def _val_loss() -> float:
        total = 0.0
        for start in range(0, val.shape[0], cfg.batch_size):
            chunk = val[start : start + cfg.batch_size]
            out = model.forward(chunk, training=False)
            total += float(np.sum(np.square(out - chunk, dtype=np.float64)))
        return total / val.size

    train_losses: list[float] = []
    val_losses: list[float] = []
    best_val = np.inf
    best_weights = model.param_vector()
    best_epoch = 0
    bad_epochs = 0
    stopped_early = False

    for epoch in range(cfg.epochs_max):
        perm = batch_rng.permutation(fit.shape[0])
        epoch_loss = 0.0
        for start in range(0, perm.size, cfg.batch_size):
            batch = fit[perm[start : start + cfg.batch_size]]
            out = model.forward(batch, training=True)
            loss, grad = mse(out, batch)
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch)
            model.backward(grad)
            optimizer.step()
            epoch_loss += loss * batch.shape[0]
        train_losses.append(epoch_loss / perm.size)

        v = _val_loss()
        val_losses.append(v)
        if v < best_val:
            best_val = v
            best_weights = model.param_vector()
            best_epoch = epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if cfg.patience is not None and bad_epochs >= cfg.patience:
                stopped_early = True
                break

    bundle = ModelBundle(arch=arch, weights=best_weights, norm_stats=(lo, hi))
    return TrainResult(
        bundle=bundle,
        train_losses=tuple(train_losses),
        val_losses=tuple(val_losses),
        best_epoch=best_epoch,
        stopped_early=stopped_early,
    )


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnomalyScore:
    """Per-clip anomaly score with its per-crop reconstruction errors."""

    clip_id: str
    per_crop_mse: tuple[float, ...]
    clip_score: float
    label: str | None = None


def model_from_bundle(bundle: ModelBundle) -> Sequential:
    """Instantiate the runtime model for a bundle's architecture + weights."""
    model = Sequential(bundle.arch.layers, bundle.arch.input_shape, dtype=np.float32)
    model.load_param_vector(bundle.weights)
    return model


def _score_crops(model: Sequential, bundle: ModelBundle, crop_array: np.ndarray,
                 aggregate: str) -> tuple[tuple[float, ...], float]:
    normalized = normalize(crop_array, bundle.norm_stats).astype(np.float32)
    out = model.forward(normalized, training=False)
    errors = np.square(
        out.astype(np.float64) - normalized.astype(np.float64)
    ).mean(axis=(1, 2, 3))
    per_crop = tuple(float(e) for e in errors)
    if aggregate == "max":
        return per_crop, float(max(per_crop))
    return per_crop, float(np.mean(per_crop))


def score_clip(
    bundle: ModelBundle,
    clip: AudioClip,
    feature_cfg: FeatureConfig = FeatureConfig(),
    aggregate: str = "max",
    model: Sequential | None = None,
) -> AnomalyScore:
    """Score one clip: log-mel, crop, normalize, reconstruct, aggregate MSE.

    Args:
        aggregate: "max" (default) or "mean" over per-crop errors.
        model: optional pre-built runtime model for this bundle, to avoid
            rebuilding it per clip in evaluation loops.

    Raises:
        FeatureError: the clip yields no crop (too short).
        ValueError: unknown aggregate.
    """
    if aggregate not in AGGREGATES:
        raise ValueError(f"aggregate must be one of {AGGREGATES}, got {aggregate!r}")
    crops = crop_windows(log_mel(clip, feature_cfg))
    stack = _crops_to_array(crops)
    if tuple(stack.shape[1:]) != bundle.arch.input_shape:
        raise FeatureError(
            f"clip '{clip.source_id}' produces crops of shape {tuple(stack.shape[1:])}, "
            f"model expects {bundle.arch.input_shape}"
        )
    if model is None:
        model = model_from_bundle(bundle)
    per_crop, clip_score = _score_crops(model, bundle, stack, aggregate)
    return AnomalyScore(clip_id=clip.source_id, per_crop_mse=per_crop, clip_score=clip_score)


def compute_auc(scored: list[tuple[float, str | int]]) -> float:
    """Exact ROC-AUC of scores against binary labels.

    Equals the probability that a uniformly random anomalous clip outscores
    a uniformly random normal clip, ties counting half:

        auc = (2 * #(anom > norm) + #(anom == norm)) / (2 * n_anom * n_norm)

    computed with integer pair counts via binary search over the sorted
    normal scores. Labels may be the strings "normal"/"anomalous" or 0/1.

    Raises:
        SingleClassError: all labels belong to one class.
        ValueError: a non-finite score or unknown label.
    """
    normals: list[float] = []
    anomalies: list[float] = []
    for score, label in scored:
        score = float(score)
        if not np.isfinite(score):
            raise ValueError(f"non-finite score {score}")
        if label in (LABEL_ANOMALOUS, 1, True):
            anomalies.append(score)
        elif label in (LABEL_NORMAL, 0, False):
            normals.append(score)
        else:
            raise ValueError(f"unknown label {label!r}")
    if not normals or not anomalies:
        raise SingleClassError(
            f"AUC needs both classes, got {len(normals)} normal / "
            f"{len(anomalies)} anomalous"
        )
    sorted_normals = np.sort(np.asarray(normals, dtype=np.float64))
    scores = np.asarray(anomalies, dtype=np.float64)
    below = np.searchsorted(sorted_normals, scores, side="left")
    upto = np.searchsorted(sorted_normals, scores, side="right")
    greater = int(below.sum())  # normals strictly below each anomaly score
    ties = int((upto - below).sum())
    return (2 * greater + ties) / (2 * len(anomalies) * len(normals))


@dataclass(frozen=True)
class EvalReport:
    """Evaluation of one bundle on a labeled test set."""

    auc: float
    scores: tuple[AnomalyScore, ...]
    n_normal: int
    n_anomalous: int
    efficiency: EfficiencyReport
    machine_type: str = ""
    machine_id: str = ""
    snr_tag: str = ""


def evaluate(
    bundle: ModelBundle,
    test_set: list[tuple[AudioClip, str]],
    feature_cfg: FeatureConfig = FeatureConfig(),
    aggregate: str = "max",
    workers: int = 1,
    machine_type: str = "",
    machine_id: str = "",
    snr_tag: str = "",
) -> EvalReport:
    """Score every labeled clip and compute AUC plus static efficiency.

    ``workers`` > 1 scores clips in a thread pool; scores are deterministic
    either way since clips are independent.
    """
    model = model_from_bundle(bundle)

    def _one(item: tuple[AudioClip, str]) -> AnomalyScore:
        clip, label = item
        s = score_clip(bundle, clip, feature_cfg, aggregate=aggregate, model=model)
        return AnomalyScore(
            clip_id=s.clip_id, per_crop_mse=s.per_crop_mse,
            clip_score=s.clip_score, label=label,
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(_one, test_set))
    else:
        scores = [_one(item) for item in test_set]

    auc = compute_auc([(s.clip_score, s.label) for s in scores])
    n_anom = sum(1 for s in scores if s.label == LABEL_ANOMALOUS)
    return EvalReport(
        auc=auc,
        scores=tuple(scores),
        n_normal=len(scores) - n_anom,
        n_anomalous=n_anom,
        efficiency=efficiency_report(bundle.arch, bundle.threshold),
        machine_type=machine_type,
        machine_id=machine_id,
        snr_tag=snr_tag,
    )


# ---------------------------------------------------------------------------
# Report writers
# ---------------------------------------------------------------------------


def write_scores_csv(report: EvalReport, path) -> None:
    """One row per clip: clip_id, clip_score, label."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["clip_id", "clip_score", "label"])
        for s in report.scores:
            writer.writerow([s.clip_id, f"{s.clip_score:.12g}", s.label])
    tmp.replace(path)


def write_summary_csv(report: EvalReport, path) -> None:
    """Single-row summary: machine tag, AUC, and efficiency numbers."""
    path = Path(path)
    eff = report.efficiency
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["machine_type", "machine_id", "snr_tag", "arch", "auc",
             "n_normal", "n_anomalous", "params", "model_bytes", "macs", "flops"]
        )
        writer.writerow(
            [report.machine_type, report.machine_id, report.snr_tag, eff.arch_name,
             f"{report.auc:.6f}", report.n_normal, report.n_anomalous,
             eff.params, eff.model_bytes, eff.macs, eff.flops]
        )
    tmp.replace(path)


def write_scores_jsonl(report: EvalReport, path) -> None:
    """One JSON object per clip including per-crop errors."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        for s in report.scores:
            fh.write(
                json.dumps(
                    {
                        "clip_id": s.clip_id,
                        "label": s.label,
                        "clip_score": s.clip_score,
                        "per_crop_mse": list(s.per_crop_mse),
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    tmp.replace(path)
