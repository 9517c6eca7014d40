import math

import numpy as np
import pytest

from conftest import make_probe_cascade, random_image
from trapnode.cascade import Cascade, HaarFeature, Stage, WeakClassifier, eval_window
from trapnode.detector import (BudgetTooSmall, PyramidConfig, ScratchBudget,
                               build_pyramid, detect, plan_tiles, scan_tile)
from trapnode.imaging import GrayImage
from trapnode.integral import Rect, build_integral


def accept_all_cascade() -> Cascade:
    feature = HaarFeature(((Rect(0, 0, 4, 4), 1), (Rect(4, 0, 4, 4), -1)))
    weak = WeakClassifier(feature, 0.0, 1, 1.0, -1.0)
    return Cascade(20, 20, (Stage((weak,), threshold=-math.inf),),
                   variance_normalization=False)


def reject_all_cascade() -> Cascade:
    feature = HaarFeature(((Rect(0, 0, 4, 4), 1), (Rect(4, 0, 4, 4), -1)))
    weak = WeakClassifier(feature, 0.0, 1, 1.0, -1.0)
    return Cascade(20, 20, (Stage((weak,), threshold=math.inf),),
                   variance_normalization=False)


# ---------------------------------------------------------------- pyramid --

def test_pyramid_dims_320x240_five_levels():
    img = GrayImage(np.zeros((240, 320), dtype=np.uint8))
    levels = build_pyramid(img, PyramidConfig())
    dims = [(l.width, l.height) for l in levels]
    expected = [(int(320 / 1.1 ** s), int(240 / 1.1 ** s)) for s in range(5)]
    assert dims == expected == [(320, 240), (290, 218), (264, 198),
                                (240, 180), (218, 163)]


def test_pyramid_single_level_is_original():
    rng = np.random.default_rng(30)
    img = random_image(rng, 40, 30)
    levels = build_pyramid(img, PyramidConfig(num_levels=1))
    assert len(levels) == 1
    assert np.array_equal(levels[0].pixels, img.pixels)


def test_default_size_filter_never_fires():
    # top-level effective side 20 * 1.1^4 = 29.282 < 30
    side = 20 * 1.1 ** 4
    assert side < 30
    assert round(side, 2) == 29.28


# ------------------------------------------------------------------ tiles --

def test_plan_tiles_reproduces_paper_geometry():
    budget = ScratchBudget(bytes=99_600, mode="ii_only")
    tiles = plan_tiles(320, 240, budget, overlap=20)
    assert [t.x for t in tiles] == [0, 80, 160, 240]
    assert all(t.y == 0 and t.h == 240 for t in tiles)
    assert [t.w for t in tiles] == [100, 100, 100, 80]
    # 100x240 integral tile occupies 96000 bytes, inside the 99.6 kB budget
    assert 100 * 240 * 4 == 96_000 <= 99_600


def test_plan_tiles_single_tile_when_image_fits():
    budget = ScratchBudget(bytes=99_600, mode="ii_only")
    tiles = plan_tiles(90, 60, budget, overlap=20)
    assert len(tiles) == 1
    assert (tiles[0].x, tiles[0].y, tiles[0].w, tiles[0].h) == (0, 0, 90, 60)


def test_plan_tiles_budget_too_small():
    with pytest.raises(BudgetTooSmall):
        plan_tiles(100, 100, ScratchBudget(bytes=1_000, mode="ii_only"))


def test_plan_tiles_coverage_and_core_partition():
    rng = np.random.default_rng(31)
    for _ in range(60):
        w = int(rng.integers(24, 400))
        h = int(rng.integers(24, 400))
        budget = ScratchBudget(bytes=int(rng.integers(4 * 24 * 24, 200_000)),
                               mode="ii_only")
        overlap = int(rng.integers(19, 23))
        tiles = plan_tiles(w, h, budget, overlap=overlap)

        covered = np.zeros((h, w), dtype=np.int32)
        owned = np.zeros((h, w), dtype=np.int32)
        for t in tiles:
            covered[t.y : t.y + t.h, t.x : t.x + t.w] += 1
            owned[t.core.y : t.core.y + t.core.h,
                  t.core.x : t.core.x + t.core.w] += 1
        assert (covered >= 1).all()     # tiles cover the raster
        assert (owned == 1).all()       # cores partition it

        # every window lies wholly inside at least one tile (overlap >= 19)
        for oy in range(0, h - 20 + 1, 7):
            for ox in range(0, w - 20 + 1, 7):
                assert any(
                    t.x <= ox and t.y <= oy
                    and ox + 20 <= t.x + t.w and oy + 20 <= t.y + t.h
                    for t in tiles
                )


# ------------------------------------------------------------------- scan --

def test_scan_tile_accept_all_combinatorics():
    rng = np.random.default_rng(32)
    tile = random_image(rng, 24, 24)
    hits = scan_tile(accept_all_cascade(), tile, step=1)
    assert len(hits) == 25
    assert {(h.x, h.y) for h in hits} == {(x, y) for x in range(5) for y in range(5)}


def test_scan_tile_reject_all_is_empty():
    rng = np.random.default_rng(33)
    assert scan_tile(reject_all_cascade(), random_image(rng, 30, 30)) == []


def test_scan_tile_equals_whole_image_eval():
    rng = np.random.default_rng(34)
    cascade = make_probe_cascade(seed=8, stages=2, weak_per_stage=2)
    img = random_image(rng, 64, 48)
    ii = build_integral(img, with_squares=True)
    tile = GrayImage(img.pixels[8:44, 12:60])  # 48x36 view
    hits = {(12 + h.x, 8 + h.y) for h in scan_tile(cascade, tile)}
    expected = set()
    for oy in range(8, 44 - 20 + 1):
        for ox in range(12, 60 - 20 + 1):
            if eval_window(cascade, ii, (ox, oy)).accepted:
                expected.add((ox, oy))
    assert hits == expected


# ----------------------------------------------------------------- detect --

def test_detect_worker_count_invariance():
    rng = np.random.default_rng(35)
    cascade = make_probe_cascade(seed=2)
    img = random_image(rng, 96, 80)
    cfg = PyramidConfig(num_levels=3)
    a = detect(img, cascade, cfg=cfg, workers=1)
    b = detect(img, cascade, cfg=cfg, workers=8)
    c = detect(img, cascade, cfg=cfg, workers=3)
    assert a == b == c


def test_detect_coordinate_mapping():
    cascade = make_probe_cascade(seed=2)
    rng = np.random.default_rng(36)
    img = random_image(rng, 96, 80)
    cfg = PyramidConfig(num_levels=4)
    for d in detect(img, cascade, cfg=cfg, workers=2):
        f = 1.1 ** d.level
        assert d.bbox.w == d.bbox.h == int(math.floor(20 * f + 0.5))
        assert d.bbox.x + d.bbox.w <= img.width
        assert d.bbox.y + d.bbox.h <= img.height


def test_detect_size_filter():
    rng = np.random.default_rng(37)
    cascade = make_probe_cascade(seed=2)
    img = random_image(rng, 128, 100)
    cfg = PyramidConfig(num_levels=5, max_detection_px=23)
    for d in detect(img, cascade, cfg=cfg, workers=2):
        assert max(d.bbox.w, d.bbox.h) <= 23
        assert d.level <= 1  # levels 2+ give side 24+


def test_detect_dedup_soundness():
    rng = np.random.default_rng(38)
    cascade = make_probe_cascade(seed=5)
    img = random_image(rng, 150, 120)
    dets = detect(img, cascade, cfg=PyramidConfig(num_levels=3),
                  budget=ScratchBudget(bytes=30_000), workers=4)
    keys = [(d.level, d.bbox.x, d.bbox.y) for d in dets]
    assert len(keys) == len(set(keys))


def test_detect_tiled_equals_untiled():
    rng = np.random.default_rng(39)
    cascade = make_probe_cascade(seed=5)
    cfg = PyramidConfig(num_levels=3)
    for _ in range(5):
        img = random_image(rng, int(rng.integers(64, 160)),
                           int(rng.integers(64, 160)))
        tiny = int(rng.integers(4 * 21 * 21, 40_000))
        tiled = detect(img, cascade, cfg=cfg,
                       budget=ScratchBudget(bytes=tiny), workers=2)
        untiled = detect(img, cascade, cfg=cfg,
                         budget=ScratchBudget(bytes=10**9), workers=1)
        assert tiled == untiled


def test_detect_output_sorted():
    rng = np.random.default_rng(40)
    cascade = make_probe_cascade(seed=5)
    img = random_image(rng, 100, 100)
    dets = detect(img, cascade, cfg=PyramidConfig(num_levels=2), workers=2)
    keys = [(d.level, d.bbox.y, d.bbox.x) for d in dets]
    assert keys == sorted(keys)


def test_detect_group_iou_filter():
    rng = np.random.default_rng(41)
    img = random_image(rng, 64, 64)
    dets = detect(img, accept_all_cascade(), cfg=PyramidConfig(num_levels=1),
                  workers=1, group_iou=0.3)
    from trapnode.evaluator import iou
    for i, a in enumerate(dets):
        for b in dets[i + 1:]:
            assert iou(a.bbox, b.bbox) < 0.3
