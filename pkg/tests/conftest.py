"""Shared fixtures: a small synthetic corpus and a small trained bundle.

Session-scoped so the expensive pieces (corpus synthesis, training) run
once; individual tests must treat them as read-only.
"""
from __future__ import annotations

import numpy as np
import pytest

from outliernets import (
    FeatureConfig,
    SynthSpec,
    TrainConfig,
    crop_windows,
    log_mel,
    make_template,
    synthesize_corpus,
    train,
)


@pytest.fixture(scope="session")
def tiny_spec() -> SynthSpec:
    # 4 s clips -> 126 frames -> 3 crops each; 24 train clips -> 72 crops,
    # enough for the default batch size of 64.
    return SynthSpec(
        duration_seconds=4.0,
        n_normal_train=24,
        n_normal_test=4,
        n_anomalous_test=4,
        rng_seed=123,
    )


@pytest.fixture(scope="session")
def tiny_corpus(tiny_spec):
    return synthesize_corpus(tiny_spec)


@pytest.fixture(scope="session")
def feature_cfg() -> FeatureConfig:
    return FeatureConfig()


@pytest.fixture(scope="session")
def tiny_crops(tiny_corpus, feature_cfg):
    train_clips, _ = tiny_corpus
    crops = []
    for clip in train_clips:
        crops.extend(crop_windows(log_mel(clip, feature_cfg)))
    return crops


@pytest.fixture(scope="session")
def tiny_train_result(tiny_crops):
    arch = make_template("fan_conv", 0.25, 2)
    cfg = TrainConfig(epochs_max=8, batch_size=16, patience=None, seed=11)
    return train(arch, tiny_crops, cfg)


@pytest.fixture(scope="session")
def tiny_bundle(tiny_train_result):
    return tiny_train_result.bundle


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(2024)


# One line per acceptance criterion, filled in by test_acceptance.py and
# echoed after the run summary (terminal-summary output is never captured).
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance scorecard")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
