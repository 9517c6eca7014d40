"""Attentional-cascade training: boosted stumps over Haar features with
per-stage threshold calibration and hard-negative mining.

Each stage is grown by discrete AdaBoost (weight update w <- w * beta^(1-e),
beta = eps/(1-eps), votes +/-alpha with alpha = ln(1/beta)). After every weak
classifier is added, the stage threshold is lowered to the largest value that
keeps the training detection rate at or above the configured minimum; the
stage is done once its false-positive rate drops to the per-stage target.
Stage k trains against negatives that pass stages 1..k-1, mined by scanning
the negative pool images at several scales.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cascade import Cascade, HaarFeature, Stage, WeakClassifier
from .imaging import GrayImage, downscale
from .integral import Rect

TEMPLATES = ("edge_h", "edge_v", "line_h", "line_v", "quad")

# Scales applied to pool images while mining hard negatives.
MINING_SCALES = (1.0, 1.3, 1.69)
MINING_BATCH = 16384


@dataclass(frozen=True)
class TrainSample:
    """One labelled base-resolution window."""

    window: GrayImage
    positive: bool
    weight: float = 1.0


@dataclass(frozen=True)
class TrainConfig:
    num_stages: int = 15
    min_detection_rate: float = 0.995
    max_fp_rate: float = 0.5
    max_weak_per_stage: int = 40
    feature_subsample: float = 1.0
    feature_min_size: int = 1
    feature_stride: int = 1
    negatives_per_stage: int | None = None
    variance_normalization: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.min_detection_rate <= 1.0:
            raise ValueError("min_detection_rate must be in (0, 1]")
        if not 0.0 < self.max_fp_rate < 1.0:
            raise ValueError("max_fp_rate must be in (0, 1)")
        if not 0.0 < self.feature_subsample <= 1.0:
            raise ValueError("feature_subsample must be in (0, 1]")
        if self.max_weak_per_stage < 1:
            raise ValueError("max_weak_per_stage must be >= 1")


def enumerate_features(win_w: int, win_h: int, min_size: int = 1,
                       stride: int = 1,
                       templates: tuple[str, ...] = TEMPLATES) -> list[HaarFeature]:
    """Deterministic enumeration of the five classical upright templates.

    `min_size` is the smallest unit-rectangle side, `stride` the step used
    for both positions and unit sizes. Order: template, then unit size
    (a, b), then position (y, x).
    """
    if win_w < 2 or win_h < 2:
        raise ValueError("window must be at least 2x2")
    feats: list[HaarFeature] = []

    def emit(total_w, total_h, make_rects):
        for a in range(min_size, win_w + 1, stride):
            if total_w(a) > win_w:
                break
            for b in range(min_size, win_h + 1, stride):
                tw, th = total_w(a), total_h(b)
                if th > win_h:
                    break
                for y in range(0, win_h - th + 1, stride):
                    for x in range(0, win_w - tw + 1, stride):
                        feats.append(HaarFeature(tuple(make_rects(x, y, a, b))))

    for template in templates:
        if template == "edge_h":
            emit(lambda a: 2 * a, lambda b: b, lambda x, y, a, b: [
                (Rect(x, y, a, b), 1), (Rect(x + a, y, a, b), -1)])
        elif template == "edge_v":
            emit(lambda a: a, lambda b: 2 * b, lambda x, y, a, b: [
                (Rect(x, y, a, b), 1), (Rect(x, y + b, a, b), -1)])
        elif template == "line_h":
            emit(lambda a: 3 * a, lambda b: b, lambda x, y, a, b: [
                (Rect(x, y, a, b), 1), (Rect(x + a, y, a, b), -2),
                (Rect(x + 2 * a, y, a, b), 1)])
        elif template == "line_v":
            emit(lambda a: a, lambda b: 3 * b, lambda x, y, a, b: [
                (Rect(x, y, a, b), 1), (Rect(x, y + b, a, b), -2),
                (Rect(x, y + 2 * b, a, b), 1)])
        elif template == "quad":
            emit(lambda a: 2 * a, lambda b: 2 * b, lambda x, y, a, b: [
                (Rect(x, y, a, b), 1), (Rect(x + a, y, a, b), -1),
                (Rect(x, y + b, a, b), -1), (Rect(x + a, y + b, a, b), 1)])
        else:
            raise ValueError(f"unknown template {template!r}")
    return feats


class WindowStack:
    """Padded integral planes for a batch of same-size windows.

    Supports vectorized feature values and cascade-stage scores over the
    batch; the arithmetic matches the scalar evaluation path bit for bit.
    """

    def __init__(self, windows: np.ndarray, variance_normalization: bool = True):
        if windows.ndim != 3:
            raise ValueError("windows must be (n, h, w)")
        n, h, w = windows.shape
        px = windows.astype(np.int64)
        self.height, self.width = h, w
        self.plane = np.zeros((n, h + 1, w + 1), dtype=np.int64)
        self.plane[:, 1:, 1:] = px.cumsum(axis=1).cumsum(axis=2)
        if variance_normalization:
            sq = (px * px).cumsum(axis=1).cumsum(axis=2)
            area = h * w
            s1 = self.plane[:, h, w].astype(np.float64)
            s2 = sq[:, h - 1, w - 1].astype(np.float64)
            var = s2 / area - (s1 / area) ** 2
            self.norms = np.where(var > 0, np.sqrt(np.maximum(var, 0.0)), 1.0)
        else:
            self.norms = np.ones(n, dtype=np.float64)

    def __len__(self) -> int:
        return self.plane.shape[0]

    def _rect_sums(self, r: Rect) -> np.ndarray:
        p = self.plane
        return (p[:, r.y + r.h, r.x + r.w] - p[:, r.y, r.x + r.w]
                - p[:, r.y + r.h, r.x] + p[:, r.y, r.x])

    def feature_values(self, f: HaarFeature) -> np.ndarray:
        total = np.zeros(len(self), dtype=np.int64)
        for rect, weight in f.rects:
            total += weight * self._rect_sums(rect)
        return total

    def feature_matrix(self, features: list[HaarFeature],
                       normalized: bool) -> np.ndarray:
        out = np.empty((len(features), len(self)), dtype=np.float64)
        for i, f in enumerate(features):
            vals = self.feature_values(f).astype(np.float64)
            out[i] = vals / self.norms if normalized else vals
        return out

    def stage_scores(self, stage: Stage) -> np.ndarray:
        scores = np.zeros(len(self), dtype=np.float64)
        for weak in stage.weak:
            values = self.feature_values(weak.feature).astype(np.float64)
            passed = weak.polarity * (values - weak.threshold * self.norms) > 0
            scores += np.where(passed, weak.vote_pass, weak.vote_fail)
        return scores

    def cascade_pass(self, stages) -> np.ndarray:
        alive = np.ones(len(self), dtype=bool)
        for stage in stages:
            if not alive.any():
                break
            idx = np.flatnonzero(alive)
            sub_scores = self.stage_scores(stage)[idx]
            alive[idx[sub_scores < stage.threshold]] = False
        return alive


@dataclass(frozen=True)
class StumpSearchResult:
    feature_index: int
    threshold: float
    polarity: int
    error: float


class StumpSearcher:
    """Reusable sorted-prefix-sum stump search over a fixed value matrix.

    The sort is done once; each `best(weights)` call only gathers and scans
    cumulative sums, which is what makes boosting rounds cheap. Candidate
    thresholds sit on sample values (plus sentinels past the extremes),
    matching the strict comparisons used at evaluation time. Ties resolve to
    the lowest feature index, polarity +1 before -1, smaller cut first.
    """

    def __init__(self, values: np.ndarray, positive: np.ndarray):
        self.values = values
        self.positive = positive
        self.order = np.argsort(values, axis=1, kind="stable")
        self.sorted_values = np.take_along_axis(values, self.order, axis=1)
        nf, ns = values.shape
        # Cut c splits sorted positions [0, c) | [c, ns); a cut inside a run
        # of equal values has no realizable threshold.
        self.valid = np.ones((nf, ns + 1), dtype=bool)
        self.valid[:, 1:ns] = self.sorted_values[:, :-1] != self.sorted_values[:, 1:]

    def best(self, weights: np.ndarray) -> StumpSearchResult:
        nf, ns = self.values.shape
        w_pos = np.where(self.positive, weights, 0.0)
        w_neg = np.where(self.positive, 0.0, weights)
        total_pos = w_pos.sum()
        total = total_pos + w_neg.sum()

        cpos = w_pos[self.order].cumsum(axis=1)
        cneg = w_neg[self.order].cumsum(axis=1)
        # Polarity +1 predicts positive on [c, ns); error at cut c.
        err_plus = np.empty((nf, ns + 1), dtype=np.float64)
        err_plus[:, 0] = total - total_pos
        err_plus[:, 1:] = cpos + (total - total_pos) - cneg
        err_minus = total - err_plus  # complementary split, polarity -1

        err_plus = np.where(self.valid, err_plus, np.inf)
        err_minus = np.where(self.valid, err_minus, np.inf)
        both = np.concatenate([err_plus, err_minus], axis=1)
        best_cut = np.argmin(both, axis=1)
        per_feature = both[np.arange(nf), best_cut]
        fi = int(np.argmin(per_feature))
        cut = int(best_cut[fi])
        sv = self.sorted_values[fi]
        if cut <= ns:
            polarity = 1
            threshold = float(sv[cut - 1]) if cut >= 1 else float(sv[0] - 1.0)
        else:
            polarity = -1
            c = cut - (ns + 1)
            threshold = float(sv[c]) if c < ns else float(sv[ns - 1] + 1.0)
        return StumpSearchResult(fi, threshold, polarity, float(per_feature[fi]))


def best_stump(values: np.ndarray, positive: np.ndarray,
               weights: np.ndarray) -> StumpSearchResult:
    """One-shot minimum-weighted-error stump over a value matrix."""
    return StumpSearcher(values, positive).best(weights)


def _alpha(error: float) -> float:
    # Error floor keeps the vote scale finite on separable rounds (a
    # zero-error stump would otherwise freeze the weight distribution).
    eps = min(max(error, 1e-4), 0.5)
    beta = eps / (1.0 - eps)
    return math.log(1.0 / beta)


@dataclass(frozen=True)
class TrainedWeak:
    classifier: WeakClassifier
    error: float
    degenerate: bool  # nothing beat chance; the votes are zero-margin


def train_weak(features: list[HaarFeature], samples: list[TrainSample],
               variance_normalization: bool = True) -> TrainedWeak:
    """Best single stump for weighted samples, with AdaBoost votes attached."""
    if not any(s.positive for s in samples) or all(s.positive for s in samples):
        raise ValueError("both classes must be present")
    windows = np.stack([s.window.pixels for s in samples])
    weights = np.array([s.weight for s in samples], dtype=np.float64)
    weights = weights / weights.sum()
    positive = np.array([s.positive for s in samples])
    stack = WindowStack(windows, variance_normalization)
    matrix = stack.feature_matrix(features, normalized=variance_normalization)
    found = best_stump(matrix, positive, weights)
    alpha = _alpha(found.error)
    weak = WeakClassifier(
        feature=features[found.feature_index],
        threshold=found.threshold,
        polarity=found.polarity,
        vote_pass=alpha,
        vote_fail=-alpha,
    )
    return TrainedWeak(weak, found.error, degenerate=found.error >= 0.5)


def _calibrate_threshold(scores: np.ndarray, positive: np.ndarray,
                         min_detection_rate: float) -> float:
    pos_scores = np.sort(scores[positive])
    keep = math.ceil(min_detection_rate * pos_scores.size)
    return float(pos_scores[pos_scores.size - keep])


@dataclass(frozen=True)
class StageResult:
    stage: Stage
    detection_rate: float
    fp_rate: float
    target_met: bool


class _PoolProbe:
    """Fixed pool sample used to hold every stage to its FP target.

    Keeps stage scores for the still-alive windows incrementally, so checking
    a candidate threshold costs one comparison pass. The raw windows stay
    around because stages train on a sample of the still-alive ones.
    """

    def __init__(self, windows: np.ndarray, variance_normalization: bool):
        self.windows = windows
        self.stack = WindowStack(windows, variance_normalization)
        self.total = len(windows)
        self.alive = np.ones(self.total, dtype=bool)
        self.scores = np.zeros(self.total, dtype=np.float64)

    def begin_stage(self) -> None:
        self.scores = np.zeros(self.total, dtype=np.float64)

    def add_weak(self, weak: WeakClassifier) -> None:
        idx = np.flatnonzero(self.alive)
        if not idx.size:
            return
        values = self.stack.feature_values(weak.feature).astype(np.float64)[idx]
        passed = weak.polarity * (values - weak.threshold * self.stack.norms[idx]) > 0
        self.scores[idx] += np.where(passed, weak.vote_pass, weak.vote_fail)

    def fp_rate(self, threshold: float) -> float:
        idx = np.flatnonzero(self.alive)
        if not idx.size:
            return 0.0
        return float((self.scores[idx] >= threshold).mean())

    def alive_scores(self) -> np.ndarray:
        return self.scores[self.alive]

    def commit_stage(self, threshold: float) -> float:
        idx = np.flatnonzero(self.alive)
        self.alive[idx[self.scores[idx] < threshold]] = False
        return float(self.alive.sum()) / self.total


def _boost_stage(matrix: np.ndarray, positive: np.ndarray,
                 features: list[HaarFeature], cfg: TrainConfig,
                 probe: _PoolProbe | None = None) -> StageResult:
    ns = matrix.shape[1]
    npos = int(positive.sum())
    weights = np.where(positive, 0.5 / npos, 0.5 / (ns - npos))
    searcher = StumpSearcher(matrix, positive)
    if probe is not None:
        probe.begin_stage()

    weak_list: list[WeakClassifier] = []
    scores = np.zeros(ns, dtype=np.float64)
    threshold = 0.0
    fp_rate = 1.0
    while len(weak_list) < cfg.max_weak_per_stage:
        weights = weights / weights.sum()
        found = searcher.best(weights)
        alpha = _alpha(found.error)
        weak = WeakClassifier(features[found.feature_index], found.threshold,
                              found.polarity, alpha, -alpha)
        weak_list.append(weak)

        row = matrix[found.feature_index]
        predicted_pos = found.polarity * (row - found.threshold) > 0
        correct = predicted_pos == positive
        eps = min(max(found.error, 1e-12), 0.5)
        weights = np.where(correct, weights * (eps / (1.0 - eps)), weights)

        scores += np.where(predicted_pos, alpha, -alpha)
        threshold = _calibrate_threshold(scores, positive, cfg.min_detection_rate)
        neg_scores = scores[~positive]
        fp_rate = float((neg_scores >= threshold).mean()) if neg_scores.size else 0.0
        if probe is not None:
            probe.add_weak(weak)
            fp_rate = max(fp_rate, probe.fp_rate(threshold))
        if fp_rate <= cfg.max_fp_rate:
            break
        if found.error >= 0.5:
            break  # nothing separates the remaining negatives

    if fp_rate <= cfg.max_fp_rate:
        # Soften: take the lowest threshold that still meets the stage FP
        # target, instead of the detection-rate bound alone. The stage then
        # rejects only what it must, detection only improves, and ambiguous
        # windows are left for the later, more specific stages.
        neg_scores = np.sort(scores[~positive])
        probe_scores = (np.sort(probe.alive_scores()) if probe is not None
                        else np.empty(0))
        candidates = np.unique(np.concatenate(
            [neg_scores, probe_scores, [threshold]]))
        candidates = candidates[candidates <= threshold]
        fp_train = ((neg_scores.size - np.searchsorted(neg_scores, candidates))
                    / neg_scores.size) if neg_scores.size else np.zeros(len(candidates))
        fp_probe = ((probe_scores.size - np.searchsorted(probe_scores, candidates))
                    / probe_scores.size) if probe_scores.size else np.zeros(len(candidates))
        feasible = np.flatnonzero(
            np.maximum(fp_train, fp_probe) <= cfg.max_fp_rate)
        if feasible.size:
            i = feasible[0]  # ascending candidates: first is the softest
            threshold = float(candidates[i])
            fp_rate = float(max(fp_train[i], fp_probe[i]))

    detection = float((scores[positive] >= threshold).mean())
    return StageResult(
        stage=Stage(tuple(weak_list), threshold),
        detection_rate=detection,
        fp_rate=fp_rate,
        target_met=fp_rate <= cfg.max_fp_rate,
    )


def train_stage(samples: list[TrainSample], cfg: TrainConfig) -> StageResult:
    """Grow one boosted stage over an explicitly provided sample set."""
    windows = np.stack([s.window.pixels for s in samples])
    positive = np.array([s.positive for s in samples])
    stack = WindowStack(windows, cfg.variance_normalization)
    win_h, win_w = windows.shape[1:]
    features = enumerate_features(win_w, win_h, cfg.feature_min_size,
                                  cfg.feature_stride)
    features = _subsample_features(features, cfg.feature_subsample,
                                   np.random.default_rng(cfg.seed))
    matrix = stack.feature_matrix(features, cfg.variance_normalization)
    return _boost_stage(matrix, positive, features, cfg)


def _subsample_features(features: list[HaarFeature], fraction: float,
                        rng: np.random.Generator) -> list[HaarFeature]:
    if fraction >= 1.0:
        return features
    count = max(1, int(len(features) * fraction))
    idx = rng.choice(len(features), size=count, replace=False)
    idx.sort()
    return [features[i] for i in idx]


def _mining_batches(neg_images: list[GrayImage], win_w: int, win_h: int,
                    stride: int):
    """Yield window batches from the pool images at the mining scales."""
    pending: list[np.ndarray] = []
    count = 0
    for img in neg_images:
        for scale in MINING_SCALES:
            w = int(img.width / scale)
            h = int(img.height / scale)
            if w < win_w or h < win_h:
                continue
            scaled = downscale(img, w, h) if scale != 1.0 else img
            view = np.lib.stride_tricks.sliding_window_view(
                scaled.pixels, (win_h, win_w)
            )[::stride, ::stride]
            wins = view.reshape(-1, win_h, win_w)
            pending.append(wins)
            count += len(wins)
            while count >= MINING_BATCH:
                block = np.concatenate(pending) if len(pending) > 1 else pending[0]
                yield np.ascontiguousarray(block[:MINING_BATCH])
                rest = block[MINING_BATCH:]
                pending = [rest] if len(rest) else []
                count = len(rest)
    if count:
        block = np.concatenate(pending) if len(pending) > 1 else pending[0]
        yield np.ascontiguousarray(block)


def _mine_negatives(stages: list[Stage], neg_images: list[GrayImage],
                    needed: int, win_w: int, win_h: int, stride: int,
                    variance_normalization: bool,
                    skip_batches: int = 0) -> np.ndarray:
    """First `needed` pool windows that pass all trained stages so far."""
    collected: list[np.ndarray] = []
    total = 0
    for bi, batch in enumerate(_mining_batches(neg_images, win_w, win_h, stride)):
        if bi < skip_batches:
            continue
        stack = WindowStack(batch, variance_normalization)
        alive = stack.cascade_pass(stages)
        for i in np.flatnonzero(alive):
            collected.append(batch[i])
            total += 1
            if total == needed:
                return np.stack(collected)
    if not collected:
        return np.empty((0, win_h, win_w), dtype=np.uint8)
    return np.stack(collected)


@dataclass(frozen=True)
class StageLogRow:
    stage: int
    weak_count: int
    detection_rate: float
    fp_rate: float
    pool_fp_rate: float
    target_met: bool


@dataclass(frozen=True)
class TrainResult:
    cascade: Cascade
    log: tuple[StageLogRow, ...]
    pool_exhausted: bool

    def log_text(self) -> str:
        lines = ["stage,weak_count,detection_rate,fp_rate,pool_fp_rate,target_met"]
        for row in self.log:
            lines.append(
                f"{row.stage},{row.weak_count},{row.detection_rate:.6f},"
                f"{row.fp_rate:.6f},{row.pool_fp_rate:.6f},{int(row.target_met)}"
            )
        return "\n".join(lines) + "\n"


def train_cascade(pos: list[GrayImage], neg_pool: list[GrayImage],
                  cfg: TrainConfig, mining_stride: int = 2) -> TrainResult:
    """Classical attentional loop with hard-negative mining from the pool.

    Stage k trains on the positives plus pool windows that pass stages
    1..k-1; the per-stage log tracks the surviving fraction of a fixed pool
    sample, which decays like max_fp_rate^k. Training stops early when the
    pool yields no more passing negatives.
    """
    if len(pos) < 10:
        raise ValueError("need at least 10 positive samples")
    win_h, win_w = pos[0].pixels.shape
    rng = np.random.default_rng(cfg.seed)
    pos_windows = np.stack([p.pixels for p in pos])

    all_features = enumerate_features(win_w, win_h, cfg.feature_min_size,
                                      cfg.feature_stride)
    n_per_stage = cfg.negatives_per_stage or len(pos)

    # Fixed sample of pool windows; every stage is held to its FP target on
    # this probe as well, which is what makes the pool FP decay like f^k.
    probe = _PoolProbe(next(_mining_batches(neg_pool, win_w, win_h, mining_stride)),
                       cfg.variance_normalization)

    stages: list[Stage] = []
    log: list[StageLogRow] = []
    pool_exhausted = False
    for k in range(cfg.num_stages):
        # Negatives passing all prior stages: a spread-out sample of the
        # probe's survivors first (they cover many positions and scales),
        # topped up by scanning the pool images.
        alive_idx = np.flatnonzero(probe.alive)
        take = min(alive_idx.size, n_per_stage)
        chosen = rng.choice(alive_idx, size=take, replace=False)
        chosen.sort()
        parts = [probe.windows[chosen]]
        if take < n_per_stage:
            mined = _mine_negatives(stages, neg_pool, n_per_stage - take,
                                    win_w, win_h, mining_stride,
                                    cfg.variance_normalization,
                                    skip_batches=1)
            if len(mined):
                parts.append(mined)
        neg_windows = np.concatenate(parts) if len(parts) > 1 else parts[0]
        if len(neg_windows) < max(10, n_per_stage // 10):
            pool_exhausted = True
            break

        features = _subsample_features(all_features, cfg.feature_subsample, rng)
        windows = np.concatenate([pos_windows, neg_windows])
        positive = np.zeros(len(windows), dtype=bool)
        positive[: len(pos_windows)] = True
        stack = WindowStack(windows, cfg.variance_normalization)
        matrix = stack.feature_matrix(features, cfg.variance_normalization)
        result = _boost_stage(matrix, positive, features, cfg, probe=probe)
        stages.append(result.stage)

        pool_fp = probe.commit_stage(result.stage.threshold)
        log.append(StageLogRow(k + 1, len(result.stage.weak),
                               result.detection_rate, result.fp_rate,
                               pool_fp, result.target_met))

    if not stages:
        raise ValueError("no stage could be trained (empty negative pool?)")
    cascade = Cascade(win_w, win_h, tuple(stages), cfg.variance_normalization)
    return TrainResult(cascade, tuple(log), pool_exhausted)
