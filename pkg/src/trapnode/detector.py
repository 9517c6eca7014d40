"""Multi-scale detection pipeline: pyramid, scratchpad-budgeted tiling,
parallel window scan, coordinate remapping, dedup, and size filtering.

Tiles are independent read-only work items; a dispatcher hands them to a
worker pool and the merged output is order-normalized, so the result is a
pure function of (image, cascade, config) at any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cascade import Cascade, eval_grid
from .imaging import GrayImage, downscale
from .integral import Rect, build_integral, padded_plane

# Tile widths/strides snap down to this alignment when the budget binds, so
# every tile row starts word-aligned in the source raster (1-byte pixels).
TILE_ALIGN = 4

_BYTES_PER_PIXEL = {
    "ii_only": 4,
    "ii_plus_input": 5,
    "ii_plus_input_plus_squares": 13,
}


class BudgetTooSmall(ValueError):
    """Scratch budget cannot hold even one window-sized tile."""


@dataclass(frozen=True)
class PyramidConfig:
    scale_factor: float = 1.1
    num_levels: int = 5
    max_detection_px: int = 30

    def __post_init__(self):
        if self.scale_factor <= 1.0:
            raise ValueError("scale_factor must be > 1")
        if self.num_levels < 1:
            raise ValueError("num_levels must be >= 1")


@dataclass(frozen=True)
class ScratchBudget:
    """L1-equivalent working-set limit and its accounting mode.

    ii_only charges 4 B/px (the tile integral image); ii_plus_input adds the
    1 B/px input tile; ii_plus_input_plus_squares also charges the 8 B/px
    squared-sum plane.
    """

    bytes: int = 99_600
    mode: str = "ii_only"

    def __post_init__(self):
        if self.mode not in _BYTES_PER_PIXEL:
            raise ValueError(f"unknown accounting mode {self.mode!r}")
        if self.bytes <= 0:
            raise ValueError("budget must be positive")

    @property
    def bytes_per_pixel(self) -> int:
        return _BYTES_PER_PIXEL[self.mode]


@dataclass(frozen=True)
class TileSpec:
    """One tile of a level raster plus its ownership (core) region.

    `core` is the set of window origins this tile is responsible for; core
    regions of a level's tiles partition the raster, which removes
    cross-tile duplicate windows without changing single-tile semantics.
    """

    x: int
    y: int
    w: int
    h: int
    core: Rect


@dataclass(frozen=True)
class Detection:
    bbox: Rect
    level: int
    score: float


def build_pyramid(img: GrayImage, cfg: PyramidConfig) -> list[GrayImage]:
    """Level s has dims (floor(W/f^s), floor(H/f^s)); level 0 is the input."""
    levels = [img]
    for s in range(1, cfg.num_levels):
        f = cfg.scale_factor ** s
        w = int(img.width / f)
        h = int(img.height / f)
        if w < 1 or h < 1:
            raise ValueError(f"image too small for {cfg.num_levels} pyramid levels")
        levels.append(downscale(img, w, h))
    return levels


def _axis_origins(extent: int, tile: int, overlap: int) -> list[int]:
    if tile >= extent:
        return [0]
    stride = tile - overlap
    origins = [0]
    while origins[-1] + tile < extent:
        origins.append(origins[-1] + stride)
    return origins


def _align_down(v: int, quantum: int) -> int:
    return (v // quantum) * quantum


def plan_tiles(level_w: int, level_h: int, budget: ScratchBudget,
               overlap: int = 20, window: tuple[int, int] = (20, 20)) -> list[TileSpec]:
    """Cover a level raster with budget-sized tiles.

    Tiles take the full column height when the budget permits, otherwise rows
    of tiles with vertical overlap. Widths are the largest affordable value,
    snapped down to TILE_ALIGN when the budget binds; horizontal stride is
    width - overlap. Tiles are ordered left-to-right, top-to-bottom.

    Each tile's core region covers the window origins from its own origin up
    to the next tile's origin (the last tile reaches the raster edge), so the
    overlap strip shared by two tiles is owned by the later one.
    """
    win_w, win_h = window
    bpp = budget.bytes_per_pixel
    if win_w * win_h * bpp > budget.bytes:
        raise BudgetTooSmall(
            f"budget {budget.bytes} B cannot hold a {win_w}x{win_h} tile "
            f"at {bpp} B/px"
        )
    min_w = max(win_w, overlap + 1)
    min_h = max(win_h, overlap + 1)

    # Column height first: full height if any usable width is affordable.
    tile_h = min(level_h, budget.bytes // (bpp * min(min_w, level_w)))
    if tile_h < level_h:
        tile_h = max(_align_down(tile_h, TILE_ALIGN), min(min_h, level_h))
    if tile_h * min(min_w, level_w) * bpp > budget.bytes:
        raise BudgetTooSmall(
            f"budget {budget.bytes} B too small for a usable tile of "
            f"{level_w}x{level_h} at {bpp} B/px"
        )
    tile_w = min(level_w, budget.bytes // (bpp * tile_h))
    if tile_w < level_w:
        tile_w = max(_align_down(tile_w, TILE_ALIGN), min(min_w, level_w))

    xs = _axis_origins(level_w, tile_w, overlap)
    ys = _axis_origins(level_h, tile_h, overlap)
    tiles = []
    for yi, ty in enumerate(ys):
        next_ty = ys[yi + 1] if yi + 1 < len(ys) else level_h
        th = min(tile_h, level_h - ty)
        for xi, tx in enumerate(xs):
            next_tx = xs[xi + 1] if xi + 1 < len(xs) else level_w
            tw = min(tile_w, level_w - tx)
            core = Rect(tx, ty, next_tx - tx, next_ty - ty)
            tiles.append(TileSpec(tx, ty, tw, th, core))
    return tiles


@dataclass(frozen=True)
class TileHit:
    """Tile-local accepted window."""

    x: int
    y: int
    score: float


def scan_tile(c: Cascade, tile_pixels: GrayImage, step: int = 1) -> list[TileHit]:
    """Evaluate every window of a tile at the given stride.

    Builds the tile-local integral image(s) and returns the accepted windows
    with their final-stage margin. A tile smaller than the window yields no
    hits.
    """
    if step < 1:
        raise ValueError("step must be >= 1")
    if tile_pixels.width < c.window_w or tile_pixels.height < c.window_h:
        return []
    ii = build_integral(tile_pixels, with_squares=c.variance_normalization)
    psums = padded_plane(ii)
    psquares = padded_plane(ii, squares=True) if c.variance_normalization else None

    ox = np.arange(0, tile_pixels.width - c.window_w + 1, step, dtype=np.int64)
    oy = np.arange(0, tile_pixels.height - c.window_h + 1, step, dtype=np.int64)
    xs = np.tile(ox, oy.size)
    ys = np.repeat(oy, ox.size)
    accepted, _, margins = eval_grid(c, psums, psquares, xs, ys)
    idx = np.flatnonzero(accepted)
    return [TileHit(int(xs[i]), int(ys[i]), float(margins[i])) for i in idx]


def _scan_level_tile(args):
    cascade, level_img, tile, step = args
    sub = GrayImage(level_img.pixels[tile.y : tile.y + tile.h, tile.x : tile.x + tile.w])
    hits = scan_tile(cascade, sub, step)
    kept = []
    for hit in hits:
        gx, gy = tile.x + hit.x, tile.y + hit.y
        core = tile.core
        if core.x <= gx < core.x + core.w and core.y <= gy < core.y + core.h:
            kept.append((gx, gy, hit.score))
    return kept


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def _group_by_iou(dets: list[Detection], thr: float) -> list[Detection]:
    # Greedy grouping: keep the highest-scoring box, drop everything that
    # overlaps it by >= thr, repeat.
    from .evaluator import iou

    remaining = sorted(dets, key=lambda d: (-d.score, d.level, d.bbox.y, d.bbox.x))
    kept: list[Detection] = []
    while remaining:
        best = remaining.pop(0)
        kept.append(best)
        remaining = [d for d in remaining if iou(best.bbox, d.bbox) < thr]
    return kept


def detect(img: GrayImage, c: Cascade,
           cfg: PyramidConfig | None = None,
           budget: ScratchBudget | None = None,
           overlap: int = 20,
           step: int = 1,
           workers: int = 8,
           group_iou: float | None = None) -> list[Detection]:
    """Full pipeline: pyramid -> tiles -> parallel scan -> remap -> filter.

    Hits are kept only when their origin falls in the emitting tile's core
    region, mapped back to original coordinates by the level scale factor
    (nearest-integer rounding), filtered by max_detection_px, and sorted by
    (level, y, x). Output is identical for any `workers` value.

    `group_iou` optionally merges mutually-overlapping detections across the
    whole output, keeping the highest score per group (off by default).
    """
    cfg = cfg or PyramidConfig()
    budget = budget or ScratchBudget()
    if workers < 1:
        raise ValueError("workers must be >= 1")

    levels = build_pyramid(img, cfg)
    window = (c.window_w, c.window_h)
    jobs = []
    for lvl, level_img in enumerate(levels):
        if level_img.width < c.window_w or level_img.height < c.window_h:
            raise ValueError(
                f"pyramid level {lvl} ({level_img.width}x{level_img.height}) "
                "smaller than the scan window"
            )
        for tile in plan_tiles(level_img.width, level_img.height, budget,
                               overlap=overlap, window=window):
            jobs.append((lvl, (c, level_img, tile, step)))

    if workers == 1:
        results = [(lvl, _scan_level_tile(args)) for lvl, args in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            hit_lists = pool.map(_scan_level_tile, (args for _, args in jobs))
            results = [(lvl, hits) for (lvl, _), hits in zip(jobs, hit_lists)]

    detections = []
    for lvl, hits in results:
        f = cfg.scale_factor ** lvl
        side = _round_half_up(c.window_w * f)
        for gx, gy, score in hits:
            bx = _round_half_up(gx * f)
            by = _round_half_up(gy * f)
            if side > cfg.max_detection_px:
                continue
            bx = min(bx, img.width - side)
            by = min(by, img.height - side)
            detections.append(Detection(Rect(bx, by, side, side), lvl, score))

    detections.sort(key=lambda d: (d.level, d.bbox.y, d.bbox.x))
    if group_iou is not None:
        detections = _group_by_iou(detections, group_iou)
        detections.sort(key=lambda d: (d.level, d.bbox.y, d.bbox.x))
    return detections
