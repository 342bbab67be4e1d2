"""Command-line interface.

Subcommands cover the full workflow: ``synth`` (generate a synthetic WAV
corpus), ``features`` (WAV -> log-mel tensors and crops), ``train`` (fit an
autoencoder on normal sound), ``score`` (one clip), ``eval`` (labeled test
set -> AUC + CSV reports), ``search`` (constrained architecture search),
``bench`` (latency microbenchmark), and ``export`` (static efficiency table
for existing bundles).

Every run that writes artifacts also writes ``<primary>.manifest.json``
capturing the resolved configuration; ``--from-manifest`` replays it.
Exit status is 0 iff every requested artifact was written.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .anomaly import (
    AGGREGATES,
    TrainConfig,
    evaluate,
    score_clip,
    train,
    write_scores_csv,
    write_scores_jsonl,
    write_summary_csv,
)
from .arch import (
    FAMILIES,
    count_params,
    efficiency_report,
    load_bundle,
    make_template,
    save_bundle,
)
from .audio_io import (
    LABEL_NORMAL,
    SynthSpec,
    index_dataset,
    read_wav,
    synthesize_corpus,
    write_wav,
)
from .bench import BenchConfig, run_bench, write_bench_csv
from .errors import OutlierNetsError
from .explore import (
    PROXY_TRAIN,
    STRATEGIES,
    Constraints,
    SearchData,
    SearchSpace,
    search,
    write_search_log,
)
from .features import FeatureConfig, crop_windows, log_mel, write_tensor
from .manifest import (
    RunManifest,
    derive_seed,
    load_manifest,
    seed_table,
    utc_now,
    write_manifest,
)
from .nn import kernels


def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get("OUTLIERNET_WORKERS", "1")))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="outliernets",
        description="Compact autoencoder toolkit for acoustic anomaly detection.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, manifest=True):
        p.add_argument("--seed", type=int, default=0, help="root seed for this run")
        p.add_argument("--backend", choices=kernels.available_backends(), default=None,
                       help="kernel backend override")
        if manifest:
            p.add_argument("--from-manifest", default=None, metavar="FILE",
                           help="replay the configuration recorded in a manifest")

    def add_data_source(p):
        p.add_argument("--data", default=None, metavar="DIR",
                       help="dataset root with <type>/<id>/{normal,abnormal}/*.wav")
        p.add_argument("--machine-type", default=None)
        p.add_argument("--machine-id", default=None)
        p.add_argument("--synth-config", default=None, metavar="FILE",
                       help="synthetic corpus recipe file (alternative to --data)")
        p.add_argument("--test-fraction", type=float, default=0.5,
                       help="held-out fraction of normal files (--data mode)")

    def add_feature_flags(p):
        p.add_argument("--n-fft", type=int, default=1024)
        p.add_argument("--hop", type=int, default=512)
        p.add_argument("--n-mels", type=int, default=128)

    p = sub.add_parser("synth", help="generate a synthetic WAV corpus")
    p.add_argument("--config", default=None, metavar="FILE",
                   help="corpus recipe; defaults are used when omitted")
    p.add_argument("--out", required=True, metavar="DIR")
    add_common(p)

    p = sub.add_parser("features", help="extract log-mel tensors and crops from WAVs")
    p.add_argument("--in", dest="input", required=True, metavar="PATH",
                   help="a .wav file or a directory of .wav files")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--no-crops", action="store_true", help="write full matrices only")
    add_feature_flags(p)
    add_common(p)

    p = sub.add_parser("train", help="train an autoencoder on normal sound")
    add_data_source(p)
    p.add_argument("--family", choices=FAMILIES, default="fan_conv")
    p.add_argument("--width-mult", type=float, default=1.0)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--bottleneck", type=int, default=None)
    p.add_argument("--epochs", type=int, default=TrainConfig.epochs_max)
    p.add_argument("--batch-size", type=int, default=TrainConfig.batch_size)
    p.add_argument("--lr", type=float, default=TrainConfig.lr)
    p.add_argument("--patience", type=int, default=TrainConfig.patience,
                   help="early-stop patience; 0 disables early stopping")
    p.add_argument("--val-fraction", type=float, default=TrainConfig.val_fraction)
    p.add_argument("--out", required=True, metavar="FILE.olnt")
    add_common(p)

    p = sub.add_parser("score", help="score one WAV clip with a trained bundle")
    p.add_argument("--model", required=True, metavar="FILE.olnt")
    p.add_argument("--wav", required=True, metavar="FILE.wav")
    p.add_argument("--aggregate", choices=AGGREGATES, default="max")
    p.add_argument("--out", default=None, metavar="FILE.csv")
    add_common(p, manifest=False)

    p = sub.add_parser("eval", help="evaluate a bundle on a labeled test set")
    p.add_argument("--model", required=True, metavar="FILE.olnt")
    add_data_source(p)
    p.add_argument("--aggregate", choices=AGGREGATES, default="max")
    p.add_argument("--jsonl", action="store_true", help="also write per-crop JSONL")
    p.add_argument("--workers", type=int, default=_default_workers())
    p.add_argument("--out", required=True, metavar="PREFIX")
    add_common(p)

    p = sub.add_parser("search", help="constrained architecture search")
    add_data_source(p)
    p.add_argument("--family", choices=FAMILIES, default="fan_conv")
    p.add_argument("--mults", default="0.5,1.0,2.0",
                   help="comma-separated width multipliers")
    p.add_argument("--depths", default="2,3", help="comma-separated depths")
    p.add_argument("--bottlenecks", default=None,
                   help="comma-separated bottleneck dims (slider family)")
    p.add_argument("--strategy", choices=STRATEGIES, default="evolutionary")
    p.add_argument("--n", type=int, default=None, help="random-strategy draw count")
    p.add_argument("--population", type=int, default=8)
    p.add_argument("--generations", type=int, default=10)
    p.add_argument("--max-params", type=int, default=100_000)
    p.add_argument("--baseline-auc", type=float, default=None)
    p.add_argument("--margin", type=float, default=0.10)
    p.add_argument("--auc-floor", type=float, default=None)
    p.add_argument("--proxy-epochs", type=int, default=PROXY_TRAIN.epochs_max)
    p.add_argument("--workers", type=int, default=_default_workers())
    p.add_argument("--out", required=True, metavar="PREFIX")
    add_common(p)

    p = sub.add_parser("bench", help="single-thread latency microbenchmark")
    p.add_argument("--model", required=True, metavar="FILE.olnt")
    p.add_argument("--bench-backend", default="active",
                   help="'active', 'both', or a backend name")
    p.add_argument("--warmup", type=int, default=BenchConfig.warmup_iters)
    p.add_argument("--iters", type=int, default=BenchConfig.measure_iters)
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--out", default=None, metavar="FILE.csv")
    add_common(p, manifest=False)

    p = sub.add_parser("export", help="static efficiency table for bundles")
    p.add_argument("--model", required=True, nargs="+", metavar="FILE.olnt")
    p.add_argument("--out", required=True, metavar="FILE.csv")
    add_common(p, manifest=False)

    return parser


# ---------------------------------------------------------------------------
# Data loading shared by train / eval / search
# ---------------------------------------------------------------------------


def _load_synth_spec(config: dict) -> SynthSpec:
    return SynthSpec.from_config_text(config["synth_spec_text"])


def _train_crops_from_clips(clips, feature_cfg: FeatureConfig):
    crops = []
    for clip in clips:
        crops.extend(crop_windows(log_mel(clip, feature_cfg)))
    return crops


def _load_train_data(config: dict, feature_cfg: FeatureConfig):
    """Returns (train_crops, machine_tag) for train mode."""
    if config.get("synth_spec_text"):
        spec = _load_synth_spec(config)
        train_clips, _ = synthesize_corpus(spec)
        return _train_crops_from_clips(train_clips, feature_cfg), ("synth", "00", "")
    index = index_dataset(
        config["data"], config.get("machine_type"), config.get("machine_id"),
        test_fraction=config.get("test_fraction", 0.5),
        seed=derive_seed(config["seed"], "split"),
    )
    clips = [read_wav(p) for p in index.train_paths()]
    return (
        _train_crops_from_clips(clips, feature_cfg),
        (index.machine_type, index.machine_id, index.snr_tag),
    )


def _load_test_set(config: dict):
    """Returns (labeled clips, machine_tag) for eval mode."""
    if config.get("synth_spec_text"):
        spec = _load_synth_spec(config)
        _, test_set = synthesize_corpus(spec)
        return test_set, ("synth", "00", "")
    index = index_dataset(
        config["data"], config.get("machine_type"), config.get("machine_id"),
        test_fraction=config.get("test_fraction", 0.5),
        seed=derive_seed(config["seed"], "split"),
    )
    test_set = [(read_wav(e.path), e.label) for e in index.test_entries()]
    return test_set, (index.machine_type, index.machine_id, index.snr_tag)


def _load_search_data(config: dict, feature_cfg: FeatureConfig):
    """Returns (SearchData, final_test_set, machine_tag).

    The search validation set is always disjoint from the final test set:
    synthetic mode derives a fresh validation corpus from the recipe seed;
    directory mode splits the held-out files in half deterministically.
    """
    if config.get("synth_spec_text"):
        spec = _load_synth_spec(config)
        train_clips, final_test = synthesize_corpus(spec)
        val_spec = replace(
            spec,
            rng_seed=derive_seed(spec.rng_seed, "split"),
            n_normal_train=0,
        )
        _, val_set = synthesize_corpus(val_spec)
        crops = _train_crops_from_clips(train_clips, feature_cfg)
        data = SearchData(train_crops=tuple(crops), val_set=tuple(val_set),
                          feature_cfg=feature_cfg)
        return data, final_test, ("synth", "00", "")
    index = index_dataset(
        config["data"], config.get("machine_type"), config.get("machine_id"),
        test_fraction=config.get("test_fraction", 0.5),
        seed=derive_seed(config["seed"], "split"),
    )
    clips = [read_wav(p) for p in index.train_paths()]
    crops = _train_crops_from_clips(clips, feature_cfg)
    entries = index.test_entries()
    order = np.random.default_rng(derive_seed(config["seed"], "split")).permutation(
        len(entries)
    )
    half = len(entries) // 2
    val_entries = [entries[i] for i in sorted(order[:half])]
    test_entries = [entries[i] for i in sorted(order[half:])]
    val_set = [(read_wav(e.path), e.label) for e in val_entries]
    final_test = [(read_wav(e.path), e.label) for e in test_entries]
    data = SearchData(train_crops=tuple(crops), val_set=tuple(val_set),
                      feature_cfg=feature_cfg)
    return data, final_test, (index.machine_type, index.machine_id, index.snr_tag)


def _feature_cfg_from_config(config: dict) -> FeatureConfig:
    return FeatureConfig(
        n_fft=config.get("n_fft", 1024),
        hop=config.get("hop", 512),
        n_mels=config.get("n_mels", 128),
    )


def _read_text(path: str) -> str:
    return Path(path).read_text()


# ---------------------------------------------------------------------------
# Subcommand implementations: resolve(args) -> config, run(config) -> outputs
# ---------------------------------------------------------------------------


def _resolve_synth(args) -> dict:
    spec_text = _read_text(args.config) if args.config else SynthSpec().to_config_text()
    return {"synth_spec_text": spec_text, "out": args.out, "seed": args.seed}


def _run_synth(config: dict) -> list[str]:
    spec = SynthSpec.from_config_text(config["synth_spec_text"])
    out = Path(config["out"])
    (out / "normal").mkdir(parents=True, exist_ok=True)
    (out / "abnormal").mkdir(parents=True, exist_ok=True)
    train_clips, test_set = synthesize_corpus(spec)
    outputs: list[str] = []
    for clip in train_clips:
        path = out / "normal" / f"{clip.source_id}.wav"
        write_wav(path, clip)
        outputs.append(str(path))
    for clip, label in test_set:
        sub = "normal" if label == LABEL_NORMAL else "abnormal"
        path = out / sub / f"{clip.source_id}.wav"
        write_wav(path, clip)
        outputs.append(str(path))
    recipe = out / "synth.cfg"
    recipe.write_text(spec.to_config_text())
    outputs.append(str(recipe))
    print(f"wrote {len(outputs) - 1} wav files under {out}")
    return outputs


def _primary_synth(config: dict) -> Path:
    return Path(config["out"]) / "synth.cfg"


def _resolve_features(args) -> dict:
    return {
        "input": args.input, "out": args.out, "no_crops": bool(args.no_crops),
        "n_fft": args.n_fft, "hop": args.hop, "n_mels": args.n_mels,
        "seed": args.seed,
    }


def _run_features(config: dict) -> list[str]:
    source = Path(config["input"])
    if source.is_dir():
        wavs = sorted(source.rglob("*.wav"))
        if not wavs:
            raise OutlierNetsError(f"no wav files found in {source}")
    elif source.is_file():
        wavs = [source]
    else:
        raise OutlierNetsError(f"input path {source} does not exist")
    cfg = _feature_cfg_from_config(config)
    out = Path(config["out"])
    out.mkdir(parents=True, exist_ok=True)
    outputs: list[str] = []
    for wav in wavs:
        clip = read_wav(wav)
        spec = log_mel(clip, cfg)
        mel_path = out / f"{wav.stem}.mel.bin"
        write_tensor(mel_path, spec.values)
        outputs.append(str(mel_path))
        if not config["no_crops"]:
            for crop in crop_windows(spec):
                crop_path = out / f"{wav.stem}.crop{crop.crop_index:02d}.bin"
                write_tensor(crop_path, crop.values)
                outputs.append(str(crop_path))
    print(f"wrote {len(outputs)} tensor files to {out}")
    return outputs


def _primary_features(config: dict) -> Path:
    return Path(config["out"]) / "features"


def _resolve_train(args) -> dict:
    config = {
        "family": args.family, "width_mult": args.width_mult, "depth": args.depth,
        "bottleneck": args.bottleneck,
        "epochs": args.epochs, "batch_size": args.batch_size, "lr": args.lr,
        "patience": args.patience, "val_fraction": args.val_fraction,
        "out": args.out, "seed": args.seed,
        "data": args.data, "machine_type": args.machine_type,
        "machine_id": args.machine_id, "test_fraction": args.test_fraction,
        "synth_spec_text": _read_text(args.synth_config) if args.synth_config else None,
        "n_fft": 1024, "hop": 512, "n_mels": 128,
    }
    if not config["data"] and not config["synth_spec_text"]:
        raise OutlierNetsError("train needs --data or --synth-config")
    return config


def _train_cfg_from_config(config: dict) -> TrainConfig:
    patience = config["patience"]
    return TrainConfig(
        epochs_max=config["epochs"],
        batch_size=config["batch_size"],
        lr=config["lr"],
        patience=None if patience in (0, None) else patience,
        val_fraction=config["val_fraction"],
        seed=derive_seed(config["seed"], "train"),
    )


def _run_train(config: dict) -> list[str]:
    feature_cfg = _feature_cfg_from_config(config)
    crops, _tag = _load_train_data(config, feature_cfg)
    arch = make_template(
        config["family"], config["width_mult"], config["depth"],
        bottleneck_dim=config["bottleneck"],
    )
    result = train(arch, crops, _train_cfg_from_config(config))
    save_bundle(result.bundle, config["out"])
    print(
        f"trained '{arch.name}' ({count_params(arch)} params) on {len(crops)} crops: "
        f"best val MSE {min(result.val_losses):.6g} at epoch {result.best_epoch}, "
        f"{len(result.train_losses)} epochs run"
    )
    return [config["out"]]


def _primary_train(config: dict) -> Path:
    return Path(config["out"])


def _resolve_eval(args) -> dict:
    config = {
        "model": args.model, "aggregate": args.aggregate, "jsonl": bool(args.jsonl),
        "workers": args.workers, "out": args.out, "seed": args.seed,
        "data": args.data, "machine_type": args.machine_type,
        "machine_id": args.machine_id, "test_fraction": args.test_fraction,
        "synth_spec_text": _read_text(args.synth_config) if args.synth_config else None,
        "n_fft": 1024, "hop": 512, "n_mels": 128,
    }
    if not config["data"] and not config["synth_spec_text"]:
        raise OutlierNetsError("eval needs --data or --synth-config")
    return config


def _run_eval(config: dict) -> list[str]:
    bundle = load_bundle(config["model"])
    feature_cfg = _feature_cfg_from_config(config)
    test_set, tag = _load_test_set(config)
    report = evaluate(
        bundle, test_set, feature_cfg, aggregate=config["aggregate"],
        workers=config["workers"],
        machine_type=tag[0], machine_id=tag[1], snr_tag=tag[2],
    )
    prefix = config["out"]
    scores_path = f"{prefix}.scores.csv"
    summary_path = f"{prefix}.summary.csv"
    write_scores_csv(report, scores_path)
    write_summary_csv(report, summary_path)
    outputs = [scores_path, summary_path]
    if config["jsonl"]:
        jsonl_path = f"{prefix}.scores.jsonl"
        write_scores_jsonl(report, jsonl_path)
        outputs.append(jsonl_path)
    print(
        f"AUC {report.auc:.4f} on {report.n_normal} normal + "
        f"{report.n_anomalous} anomalous clips ({bundle.arch.name})"
    )
    return outputs


def _primary_eval(config: dict) -> Path:
    return Path(f"{config['out']}.summary.csv")


def _resolve_search(args) -> dict:
    config = {
        "family": args.family,
        "mults": [float(x) for x in args.mults.split(",") if x],
        "depths": [int(x) for x in args.depths.split(",") if x],
        "bottlenecks": [int(x) for x in args.bottlenecks.split(",")]
        if args.bottlenecks else None,
        "strategy": args.strategy, "n": args.n,
        "population": args.population, "generations": args.generations,
        "max_params": args.max_params, "baseline_auc": args.baseline_auc,
        "margin": args.margin, "auc_floor": args.auc_floor,
        "proxy_epochs": args.proxy_epochs,
        "workers": args.workers, "out": args.out, "seed": args.seed,
        "data": args.data, "machine_type": args.machine_type,
        "machine_id": args.machine_id, "test_fraction": args.test_fraction,
        "synth_spec_text": _read_text(args.synth_config) if args.synth_config else None,
        "n_fft": 1024, "hop": 512, "n_mels": 128,
        "epochs": TrainConfig.epochs_max, "batch_size": TrainConfig.batch_size,
        "lr": TrainConfig.lr, "patience": TrainConfig.patience,
        "val_fraction": TrainConfig.val_fraction,
    }
    if not config["data"] and not config["synth_spec_text"]:
        raise OutlierNetsError("search needs --data or --synth-config")
    if config["auc_floor"] is None and config["baseline_auc"] is None:
        raise OutlierNetsError("search needs --auc-floor or --baseline-auc")
    return config


def _run_search(config: dict) -> list[str]:
    feature_cfg = _feature_cfg_from_config(config)
    data, final_test, tag = _load_search_data(config, feature_cfg)
    space = SearchSpace(
        family=config["family"],
        width_multipliers=tuple(config["mults"]),
        depth_choices=tuple(config["depths"]),
        bottleneck_dims=tuple(config["bottlenecks"]) if config["bottlenecks"] else None,
    )
    constraints = Constraints(
        max_params=config["max_params"], baseline_auc=config["baseline_auc"],
        margin=config["margin"], auc_floor=config["auc_floor"],
    )
    budget = replace(PROXY_TRAIN, epochs_max=config["proxy_epochs"])
    best, log = search(
        space, constraints, data, budget=budget,
        strategy=config["strategy"], n=config["n"],
        population=config["population"], generations=config["generations"],
        seed=derive_seed(config["seed"], "search"), workers=config["workers"],
    )
    prefix = config["out"]
    log_path = f"{prefix}.search.jsonl"
    write_search_log(log, log_path)

    # Retrain the winning point with the full training configuration.
    arch = best.point.build()
    full_cfg = _train_cfg_from_config(config)
    result = train(arch, data.train_crops, full_cfg)
    bundle_path = f"{prefix}.best.olnt"
    save_bundle(result.bundle, bundle_path)

    report = evaluate(
        result.bundle, list(final_test), feature_cfg, workers=config["workers"],
        machine_type=tag[0], machine_id=tag[1], snr_tag=tag[2],
    )
    summary_path = f"{prefix}.summary.csv"
    write_summary_csv(report, summary_path)
    print(
        f"best: {best.arch_name} ({best.params} params, {best.macs} MACs), "
        f"search AUC {best.auc:.4f}, utility {best.u_score:.2f} dB; "
        f"retrained test AUC {report.auc:.4f}"
    )
    return [log_path, bundle_path, summary_path]


def _primary_search(config: dict) -> Path:
    return Path(f"{config['out']}.search.jsonl")


def _run_score(args) -> list[str]:
    bundle = load_bundle(args.model)
    clip = read_wav(args.wav)
    result = score_clip(bundle, clip, FeatureConfig(), aggregate=args.aggregate)
    print(f"{result.clip_id}: clip_score {result.clip_score:.9g}")
    if bundle.threshold is not None:
        verdict = "anomalous" if result.clip_score >= bundle.threshold else "normal"
        print(f"threshold {bundle.threshold:.9g} -> {verdict}")
    outputs = []
    if args.out:
        path = Path(args.out)
        with open(path, "w", newline="") as fh:
            fh.write("clip_id,crop_index,crop_mse,clip_score\n")
            for i, e in enumerate(result.per_crop_mse):
                fh.write(f"{result.clip_id},{i},{e:.12g},{result.clip_score:.12g}\n")
        outputs.append(str(path))
    return outputs


def _run_bench_cmd(args) -> list[str]:
    bundle = load_bundle(args.model)
    cfg = BenchConfig(
        warmup_iters=args.warmup, measure_iters=args.iters, batch=args.batch,
        input_seed=derive_seed(args.seed, "bench"),
    )
    if args.bench_backend == "both":
        backends = list(kernels.available_backends())
    elif args.bench_backend == "active":
        backends = [kernels.active_backend()]
    else:
        backends = [args.bench_backend]
    results = [run_bench(bundle, cfg, backend=b) for b in backends]
    for r in results:
        flag = " (low confidence)" if r.low_confidence else ""
        print(
            f"{r.arch_name} [{r.backend}] batch {r.batch}: median {r.median_us:.1f} us, "
            f"p95 {r.p95_us:.1f} us over {r.iters} iters{flag}"
        )
    if args.out:
        write_bench_csv(results, args.out)
        return [args.out]
    return []


def _run_export(args) -> list[str]:
    import csv as _csv

    rows = []
    for model_path in args.model:
        bundle = load_bundle(model_path)
        eff = efficiency_report(bundle.arch, bundle.threshold)
        rows.append([eff.arch_name, eff.params, eff.model_bytes, eff.macs, eff.flops])
    out = Path(args.out)
    with open(out, "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["arch", "params", "model_bytes", "macs", "flops"])
        writer.writerows(rows)
    print(f"wrote efficiency table for {len(rows)} bundle(s) to {out}")
    return [str(out)]


_MANIFEST_COMMANDS = {
    "synth": (_resolve_synth, _run_synth, _primary_synth),
    "features": (_resolve_features, _run_features, _primary_features),
    "train": (_resolve_train, _run_train, _primary_train),
    "eval": (_resolve_eval, _run_eval, _primary_eval),
    "search": (_resolve_search, _run_search, _primary_search),
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.backend is not None:
            kernels.set_backend(args.backend)

        if args.command in _MANIFEST_COMMANDS:
            resolve, run, primary = _MANIFEST_COMMANDS[args.command]
            if getattr(args, "from_manifest", None):
                stored = load_manifest(args.from_manifest)
                if stored.subcommand != args.command:
                    raise OutlierNetsError(
                        f"manifest records a '{stored.subcommand}' run, "
                        f"not '{args.command}'"
                    )
                config = dict(stored.config)
                config["out"] = args.out  # --out is required, so always explicit
                if args.backend is None:
                    if stored.backend not in kernels.available_backends():
                        raise OutlierNetsError(
                            f"manifest used backend {stored.backend!r} which is not "
                            "available here; pass --backend to override"
                        )
                    kernels.set_backend(stored.backend)
            else:
                config = resolve(args)
            started = utc_now()
            t0 = time.perf_counter()
            outputs = run(config)
            manifest = RunManifest(
                subcommand=args.command,
                config=config,
                seeds=seed_table(config.get("seed", 0)),
                backend=kernels.active_backend(),
                outputs=outputs,
                package_version=__version__,
                started_at=started,
                duration_s=round(time.perf_counter() - t0, 3),
            )
            manifest_path = primary(config).with_name(primary(config).name + ".manifest.json")
            manifest_path.parent.mkdir(parents=True, exist_ok=True)
            write_manifest(manifest, manifest_path)
            return 0

        if args.command == "score":
            _run_score(args)
            return 0
        if args.command == "bench":
            _run_bench_cmd(args)
            return 0
        if args.command == "export":
            _run_export(args)
            return 0
        raise OutlierNetsError(f"unknown command {args.command!r}")
    except OutlierNetsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
