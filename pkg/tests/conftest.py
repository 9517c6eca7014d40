"""Shared fixtures: random rasters, a hand-built cascade with a moderate
accept rate, and the session-scoped trained cascade used by the end-to-end
and acceptance tests."""

from __future__ import annotations

import numpy as np
import pytest

from trapnode.cascade import Cascade, HaarFeature, Stage, WeakClassifier
from trapnode.imaging import GrayImage
from trapnode.integral import Rect
from trapnode.synthetic import synth_negative_images, synth_positive_windows
from trapnode.trainer import TrainConfig, train_cascade


def random_image(rng: np.random.Generator, w: int, h: int) -> GrayImage:
    return GrayImage(rng.integers(0, 256, size=(h, w), dtype=np.uint8))


def make_probe_cascade(seed: int = 5, stages: int = 2,
                       weak_per_stage: int = 2,
                       variance_normalization: bool = True) -> Cascade:
    """Small deterministic cascade that accepts a moderate share of random
    windows; used wherever any non-degenerate cascade will do."""
    rng = np.random.default_rng(seed)
    stage_list = []
    for _ in range(stages):
        weaks = []
        for _ in range(weak_per_stage):
            x = int(rng.integers(0, 10))
            y = int(rng.integers(0, 10))
            w = int(rng.integers(2, 6))
            h = int(rng.integers(2, 6))
            feature = HaarFeature((
                (Rect(x, y, w, h), 1),
                (Rect(x, y + h, w, h), -1),
            ))
            weaks.append(WeakClassifier(
                feature=feature,
                threshold=float(rng.integers(-40, 40)),
                polarity=int(rng.choice([-1, 1])),
                vote_pass=1.0,
                vote_fail=-1.0,
            ))
        stage_list.append(Stage(tuple(weaks), threshold=0.0))
    return Cascade(20, 20, tuple(stage_list), variance_normalization)


# Shipped synthetic corpus (seed and sizes match the `synth` CLI defaults).
CORPUS_SEED = 0
CORPUS_POSITIVES = 400
CORPUS_NEGATIVES = 900
CORPUS_NEG_SIZE = 96

ACCEPTANCE_TRAIN_CONFIG = TrainConfig(
    num_stages=15,
    min_detection_rate=0.999,
    max_fp_rate=0.5,
    max_weak_per_stage=30,
    feature_subsample=0.06,
    negatives_per_stage=300,
    seed=7,
)


def build_corpus():
    rng = np.random.default_rng(CORPUS_SEED)
    pos = synth_positive_windows(CORPUS_POSITIVES, rng)
    neg = synth_negative_images(CORPUS_NEGATIVES, CORPUS_NEG_SIZE,
                                CORPUS_NEG_SIZE, rng)
    return pos, neg


def build_holdout():
    rng = np.random.default_rng(CORPUS_SEED + 1)
    pos = synth_positive_windows(200, rng)
    neg = synth_negative_images(100, CORPUS_NEG_SIZE, CORPUS_NEG_SIZE, rng)
    return pos, neg


@pytest.fixture(scope="session")
def trained():
    """15-stage cascade trained on the shipped corpus (takes a few minutes)."""
    pos, neg = build_corpus()
    result = train_cascade(pos, neg, ACCEPTANCE_TRAIN_CONFIG)
    return result
