"""Run manifests: everything needed to reproduce a CLI run byte for byte.

Every CLI invocation that writes artifacts also writes
``<primary_output>.manifest.json`` recording the package version, the
subcommand, the fully resolved configuration (defaults materialized), the
seed table, the active kernel backend, and the output paths. Feeding a
manifest back via ``--from-manifest`` reruns the same work; on the same
machine and backend the artifacts come out byte-identical.

All derived randomness flows from one root seed through named purpose
streams (see :data:`SEED_PURPOSES`), so no component consumes another's
stream and adding a consumer never shifts existing ones.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Purpose codes for fanning the root seed out to independent streams.
SEED_PURPOSES = {
    "synth": 1,     # synthetic corpus generation
    "split": 2,     # dataset train/test split assignment
    "train": 3,     # weight init, val split, batch order
    "search": 4,    # strategy-level draws (init population, mutation)
    "bench": 5,     # benchmark input tensor
}


def derive_seed(root_seed: int, purpose: str) -> int:
    """Deterministic child seed for a named purpose.

    Raises:
        KeyError: unknown purpose name.
    """
    code = SEED_PURPOSES[purpose]
    return int(np.random.SeedSequence((root_seed, code)).generate_state(1, np.uint32)[0])


def seed_table(root_seed: int) -> dict[str, int]:
    """All purpose seeds derived from one root seed."""
    return {name: derive_seed(root_seed, name) for name in SEED_PURPOSES}


@dataclass(frozen=True)
class RunManifest:
    """Record of one CLI run. Timestamps live only here, never in artifacts."""

    subcommand: str
    config: dict
    seeds: dict
    backend: str
    outputs: list[str]
    package_version: str
    started_at: str
    duration_s: float


def write_manifest(manifest: RunManifest, path) -> None:
    """Serialize a manifest as pretty JSON, atomically."""
    path = Path(path)
    obj = {
        "subcommand": manifest.subcommand,
        "config": manifest.config,
        "seeds": manifest.seeds,
        "backend": manifest.backend,
        "outputs": manifest.outputs,
        "package_version": manifest.package_version,
        "started_at": manifest.started_at,
        "duration_s": manifest.duration_s,
    }
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    tmp.replace(path)


def load_manifest(path) -> RunManifest:
    """Parse a manifest written by :func:`write_manifest`.

    Raises:
        ValueError: missing fields or malformed JSON.
    """
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path.name}: not valid JSON: {exc}") from exc
    required = ("subcommand", "config", "seeds", "backend", "outputs",
                "package_version", "started_at", "duration_s")
    for key in required:
        if key not in obj:
            raise ValueError(f"{path.name}: manifest missing field {key!r}")
    return RunManifest(**{k: obj[k] for k in required})


def utc_now() -> str:
    """ISO-8601 UTC timestamp (manifest metadata only)."""
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
