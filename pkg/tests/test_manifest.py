"""Seed derivation and run-manifest round-trips."""
from __future__ import annotations

import json

import pytest

from outliernets.manifest import (
    SEED_PURPOSES,
    RunManifest,
    derive_seed,
    load_manifest,
    seed_table,
    utc_now,
    write_manifest,
)


def test_derive_seed_deterministic():
    assert derive_seed(0, "synth") == derive_seed(0, "synth")
    assert derive_seed(123, "train") == derive_seed(123, "train")


def test_derive_seed_distinct_across_purposes_and_roots():
    seeds = {derive_seed(0, p) for p in SEED_PURPOSES}
    assert len(seeds) == len(SEED_PURPOSES)
    assert derive_seed(0, "synth") != derive_seed(1, "synth")
    # Purpose seeds are not the root seed itself.
    assert derive_seed(0, "synth") != 0


def test_derive_seed_unknown_purpose():
    with pytest.raises(KeyError):
        derive_seed(0, "coffee")


def test_seed_table_covers_every_purpose():
    table = seed_table(7)
    assert set(table) == set(SEED_PURPOSES)
    assert all(isinstance(v, int) and 0 <= v < 2**32 for v in table.values())
    assert table == seed_table(7)


def _manifest():
    return RunManifest(
        subcommand="synth",
        config={"out": "data", "seed": 5, "n_normal_train": 12},
        seeds=seed_table(5),
        backend="python",
        outputs=["data/normal_000.wav"],
        package_version="1.0.0",
        started_at=utc_now(),
        duration_s=1.25,
    )


def test_manifest_round_trip(tmp_path):
    m = _manifest()
    path = tmp_path / "run.manifest.json"
    write_manifest(m, path)
    back = load_manifest(path)
    assert back == m


def test_manifest_json_is_sorted_and_human_readable(tmp_path):
    path = tmp_path / "m.json"
    write_manifest(_manifest(), path)
    text = path.read_text()
    obj = json.loads(text)
    assert list(obj) == sorted(obj)
    assert text.endswith("\n")
    assert "\n  " in text  # indented


def test_load_rejects_missing_field(tmp_path):
    path = tmp_path / "m.json"
    write_manifest(_manifest(), path)
    obj = json.loads(path.read_text())
    del obj["seeds"]
    path.write_text(json.dumps(obj))
    with pytest.raises(ValueError, match="seeds"):
        load_manifest(path)


def test_load_rejects_malformed_json(tmp_path):
    path = tmp_path / "m.json"
    path.write_text("{not json")
    with pytest.raises(ValueError, match="JSON"):
        load_manifest(path)


def test_utc_now_shape():
    stamp = utc_now()
    assert len(stamp) == 20
    assert stamp.endswith("Z")
    assert stamp[4] == stamp[7] == "-"
