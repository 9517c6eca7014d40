"""Haar-feature cascade classifier: model types, window evaluation, file format.

A cascade is an ordered list of stages; each stage sums the votes of its weak
classifiers and rejects the window as soon as one stage score falls below the
stage threshold. Feature values are exact integers; stage scores are floats.

Cascade files are versioned JSON with the following normative field names::

    {
      "version": 1,
      "window": {"w": 20, "h": 20},
      "variance_normalization": true,
      "stages": [
        {"threshold": -1.25,
         "weak": [
           {"rects": [{"x":0,"y":0,"w":4,"h":8,"weight":1}, ...],
            "threshold": 152.0, "polarity": 1,
            "vote_pass": 0.9, "vote_fail": -0.9}
         ]}
      ]
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .integral import IntegralImage, Rect, RectOutOfBounds, padded_plane, rect_sums_grid

FORMAT_VERSION = 1


class CascadeFormatError(ValueError):
    """Base class for cascade file violations."""


class MissingField(CascadeFormatError):
    pass


class EmptyStage(CascadeFormatError):
    pass


class RectOutOfWindow(CascadeFormatError):
    pass


class BadFieldValue(CascadeFormatError):
    pass


@dataclass(frozen=True)
class HaarFeature:
    """2-4 signed-weighted rectangles in base-window coordinates.

    The weighted areas must cancel (zero-mean template) so the response to a
    constant image is zero.
    """

    rects: tuple[tuple[Rect, int], ...]

    def __post_init__(self):
        if not 2 <= len(self.rects) <= 4:
            raise ValueError(f"feature needs 2-4 rects, got {len(self.rects)}")
        balance = sum(w * r.area for r, w in self.rects)
        if balance != 0:
            raise ValueError(f"weighted areas must cancel, got {balance}")


@dataclass(frozen=True)
class WeakClassifier:
    """Single-feature stump: vote_pass if polarity*(value - threshold*norm) > 0."""

    feature: HaarFeature
    threshold: float
    polarity: int
    vote_pass: float
    vote_fail: float

    def __post_init__(self):
        if self.polarity not in (-1, 1):
            raise ValueError(f"polarity must be +/-1, got {self.polarity}")


@dataclass(frozen=True)
class Stage:
    weak: tuple[WeakClassifier, ...]
    threshold: float

    def __post_init__(self):
        if not self.weak:
            raise ValueError("stage must contain at least one weak classifier")


@dataclass(frozen=True)
class Cascade:
    window_w: int
    window_h: int
    stages: tuple[Stage, ...]
    variance_normalization: bool = True

    def __post_init__(self):
        if not self.stages:
            raise ValueError("cascade must contain at least one stage")
        for stage in self.stages:
            for weak in stage.weak:
                for rect, _ in weak.feature.rects:
                    if rect.x + rect.w > self.window_w or rect.y + rect.h > self.window_h:
                        raise ValueError(
                            f"feature rect {rect} outside "
                            f"{self.window_w}x{self.window_h} window"
                        )

    def num_weak(self) -> int:
        return sum(len(s.weak) for s in self.stages)

    def size_bytes(self) -> int:
        """Serialized parameter footprint under the packed accounting below.

        Per rect: 5 bytes (x, y, w, h, weight as int8). Per weak classifier:
        rects + 4 (threshold) + 1 (polarity) + 8 (two float32 votes). Per
        stage: weaks + 4 (threshold) + 2 (weak count). Plus an 8-byte header.
        """
        total = 8
        for stage in self.stages:
            total += 6
            for weak in stage.weak:
                total += 13 + 5 * len(weak.feature.rects)
        return total


@dataclass(frozen=True)
class WindowEval:
    """Outcome of evaluating one window: accept, or reject at `stage`."""

    accepted: bool
    stage: int
    score: float


def feature_value(f: HaarFeature, ii: IntegralImage, origin: tuple[int, int],
                  scale: float = 1.0) -> int:
    """Signed-weighted sum of rectangle sums, optionally scaling the template.

    Rect coordinates are multiplied by `scale` and rounded to the nearest
    integer. The default pipeline scales the image instead and always passes
    scale = 1.
    """
    from .integral import rect_sum

    ox, oy = origin
    total = 0
    for rect, weight in f.rects:
        if scale == 1.0:
            rx, ry, rw, rh = rect.x, rect.y, rect.w, rect.h
        else:
            rx = int(np.floor(rect.x * scale + 0.5))
            ry = int(np.floor(rect.y * scale + 0.5))
            rw = max(1, int(np.floor(rect.w * scale + 0.5)))
            rh = max(1, int(np.floor(rect.h * scale + 0.5)))
        r = Rect(ox + rx, oy + ry, rw, rh)
        if r.x + r.w > ii.width or r.y + r.h > ii.height:
            raise RectOutOfBounds(f"scaled rect {r} escapes the raster")
        total += weight * rect_sum(ii, r)
    return total


def window_norm(ii: IntegralImage, x: int, y: int, w: int, h: int) -> float:
    """Intensity standard deviation of a window (1.0 for flat windows)."""
    from .integral import rect_sum

    if ii.squared_sums is None:
        raise ValueError("variance normalization needs squared sums")
    n = w * h
    s1 = rect_sum(ii, Rect(x, y, w, h))
    sq = IntegralImage(ii.squared_sums)
    s2 = rect_sum(sq, Rect(x, y, w, h))
    var = s2 / n - (s1 / n) ** 2
    return float(np.sqrt(var)) if var > 0 else 1.0


def eval_window(c: Cascade, ii: IntegralImage, origin: tuple[int, int]) -> WindowEval:
    """Run the cascade on one window; stops at the first rejecting stage.

    The returned score is the margin of the last evaluated stage
    (stage score minus stage threshold).
    """
    x, y = origin
    if x < 0 or y < 0 or x + c.window_w > ii.width or y + c.window_h > ii.height:
        raise RectOutOfBounds(
            f"window origin ({x},{y}) outside {ii.width}x{ii.height} raster"
        )
    norm = window_norm(ii, x, y, c.window_w, c.window_h) if c.variance_normalization else 1.0
    margin = 0.0
    for k, stage in enumerate(c.stages):
        score = 0.0
        for weak in stage.weak:
            value = feature_value(weak.feature, ii, origin)
            if weak.polarity * (value - weak.threshold * norm) > 0:
                score += weak.vote_pass
            else:
                score += weak.vote_fail
        margin = score - stage.threshold
        if score < stage.threshold:
            return WindowEval(False, k, margin)
    return WindowEval(True, len(c.stages) - 1, margin)


def eval_grid(c: Cascade, psums: np.ndarray, psquares: np.ndarray | None,
              xs: np.ndarray, ys: np.ndarray):
    """Vectorized cascade evaluation at many window origins.

    `psums`/`psquares` are padded planes from integral.padded_plane. Returns
    (accepted bool array, rejecting/last stage index array, margin array),
    bit-identical in decision and score to per-window eval_window.
    """
    n = xs.shape[0]
    accepted = np.ones(n, dtype=bool)
    stage_idx = np.zeros(n, dtype=np.int32)
    margins = np.zeros(n, dtype=np.float64)

    if c.variance_normalization:
        if psquares is None:
            raise ValueError("variance normalization needs squared sums")
        area = c.window_w * c.window_h
        s1 = rect_sums_grid(psums, xs, ys, c.window_w, c.window_h)
        s2 = rect_sums_grid(psquares, xs, ys, c.window_w, c.window_h)
        var = s2 / area - (s1 / area) ** 2
        norms = np.where(var > 0, np.sqrt(np.maximum(var, 0.0)), 1.0)
    else:
        norms = np.ones(n, dtype=np.float64)

    alive = np.arange(n)
    for k, stage in enumerate(c.stages):
        if alive.size == 0:
            break
        ax, ay = xs[alive], ys[alive]
        scores = np.zeros(alive.size, dtype=np.float64)
        for weak in stage.weak:
            values = np.zeros(alive.size, dtype=np.int64)
            for rect, weight in weak.feature.rects:
                values += weight * rect_sums_grid(
                    psums, ax + rect.x, ay + rect.y, rect.w, rect.h
                )
            passed = weak.polarity * (values - weak.threshold * norms[alive]) > 0
            scores += np.where(passed, weak.vote_pass, weak.vote_fail)
        stage_margin = scores - stage.threshold
        margins[alive] = stage_margin
        stage_idx[alive] = k
        rejected = scores < stage.threshold
        accepted[alive[rejected]] = False
        alive = alive[~rejected]
    return accepted, stage_idx, margins


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise MissingField(f"{context} is missing field {key!r}")
    return mapping[key]


def cascade_to_json(c: Cascade) -> str:
    doc = {
        "version": FORMAT_VERSION,
        "window": {"w": c.window_w, "h": c.window_h},
        "variance_normalization": c.variance_normalization,
        "stages": [
            {
                "threshold": stage.threshold,
                "weak": [
                    {
                        "rects": [
                            {"x": r.x, "y": r.y, "w": r.w, "h": r.h, "weight": w}
                            for r, w in weak.feature.rects
                        ],
                        "threshold": weak.threshold,
                        "polarity": weak.polarity,
                        "vote_pass": weak.vote_pass,
                        "vote_fail": weak.vote_fail,
                    }
                    for weak in stage.weak
                ],
            }
            for stage in c.stages
        ],
    }
    return json.dumps(doc, indent=1)


def cascade_from_json(text: str) -> Cascade:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CascadeFormatError(f"not valid JSON: {exc}") from None
    version = _require(doc, "version", "cascade")
    if version != FORMAT_VERSION:
        raise BadFieldValue(f"unsupported cascade version {version}")
    window = _require(doc, "window", "cascade")
    win_w = _require(window, "w", "window")
    win_h = _require(window, "h", "window")
    varnorm = _require(doc, "variance_normalization", "cascade")
    stages_doc = _require(doc, "stages", "cascade")
    if not stages_doc:
        raise EmptyStage("cascade has no stages")

    stages = []
    for si, sdoc in enumerate(stages_doc):
        weak_doc = _require(sdoc, "weak", f"stage {si}")
        if not weak_doc:
            raise EmptyStage(f"stage {si} has no weak classifiers")
        weaks = []
        for wi, wdoc in enumerate(weak_doc):
            ctx = f"stage {si} weak {wi}"
            rects_doc = _require(wdoc, "rects", ctx)
            rects = []
            for rdoc in rects_doc:
                rect = Rect(
                    _require(rdoc, "x", ctx), _require(rdoc, "y", ctx),
                    _require(rdoc, "w", ctx), _require(rdoc, "h", ctx),
                )
                weight = _require(rdoc, "weight", ctx)
                if rect.x + rect.w > win_w or rect.y + rect.h > win_h:
                    raise RectOutOfWindow(f"{ctx}: rect {rect} outside window")
                rects.append((rect, weight))
            try:
                feature = HaarFeature(tuple(rects))
                weaks.append(
                    WeakClassifier(
                        feature=feature,
                        threshold=float(_require(wdoc, "threshold", ctx)),
                        polarity=int(_require(wdoc, "polarity", ctx)),
                        vote_pass=float(_require(wdoc, "vote_pass", ctx)),
                        vote_fail=float(_require(wdoc, "vote_fail", ctx)),
                    )
                )
            except ValueError as exc:
                raise BadFieldValue(f"{ctx}: {exc}") from None
        stages.append(Stage(tuple(weaks), float(_require(sdoc, "threshold", f"stage {si}"))))
    return Cascade(int(win_w), int(win_h), tuple(stages), bool(varnorm))


def save_cascade(c: Cascade, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(cascade_to_json(c))


def load_cascade(path) -> Cascade:
    with open(path, "r", encoding="ascii") as fh:
        return cascade_from_json(fh.read())
