"""Integral images and O(1) rectangle sums.

An integral image stores at (x, y) the sum of all source pixels in the
inclusive rectangle (0,0)-(x,y), so any rectangle sum costs four corner reads.
No zero row/column is stored; border corners are handled by branching, which
keeps the per-tile memory footprint exactly 4 bytes per pixel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imaging import GrayImage

# 8-bit pixels over more than 2^24 of them can overflow a 32-bit accumulator.
MAX_PIXELS = 1 << 24


class ImageTooLarge(ValueError):
    """width*height exceeds the 32-bit accumulator guard."""


class RectOutOfBounds(ValueError):
    """Rectangle does not fit inside the raster it indexes."""


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle: top-left (x, y), extent (w, h), w,h >= 1."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError(f"rect extent must be >= 1, got {self.w}x{self.h}")
        if self.x < 0 or self.y < 0:
            raise ValueError(f"rect origin must be >= 0, got ({self.x},{self.y})")

    @property
    def area(self) -> int:
        return self.w * self.h


@dataclass(frozen=True)
class IntegralImage:
    """Prefix-sum raster; `sums` is uint32, optional `squared_sums` is uint64."""

    sums: np.ndarray
    squared_sums: np.ndarray | None = None

    def __post_init__(self):
        self.sums.setflags(write=False)
        if self.squared_sums is not None:
            self.squared_sums.setflags(write=False)

    @property
    def width(self) -> int:
        return self.sums.shape[1]

    @property
    def height(self) -> int:
        return self.sums.shape[0]


def build_integral(img: GrayImage, with_squares: bool = False) -> IntegralImage:
    """Compute the prefix-sum raster (and optionally the squared-pixel one)."""
    if img.width * img.height > MAX_PIXELS:
        raise ImageTooLarge(
            f"{img.width}x{img.height} exceeds {MAX_PIXELS} pixels; "
            "32-bit sums could overflow"
        )
    px = img.pixels.astype(np.uint32)
    sums = px.cumsum(axis=0, dtype=np.uint32).cumsum(axis=1, dtype=np.uint32)
    squared = None
    if with_squares:
        sq = img.pixels.astype(np.uint64) ** 2
        squared = sq.cumsum(axis=0, dtype=np.uint64).cumsum(axis=1, dtype=np.uint64)
    return IntegralImage(sums, squared)


def rect_sum(ii: IntegralImage, r: Rect) -> int:
    """Sum of source pixels inside `r` using four corner reads."""
    if r.x + r.w > ii.width or r.y + r.h > ii.height:
        raise RectOutOfBounds(
            f"rect {r} outside {ii.width}x{ii.height} raster"
        )
    s = ii.sums
    x2 = r.x + r.w - 1
    y2 = r.y + r.h - 1
    total = int(s[y2, x2])
    if r.x > 0:
        total -= int(s[y2, r.x - 1])
    if r.y > 0:
        total -= int(s[r.y - 1, x2])
    if r.x > 0 and r.y > 0:
        total += int(s[r.y - 1, r.x - 1])
    return total


def padded_plane(ii: IntegralImage, squares: bool = False) -> np.ndarray:
    """Zero-padded int64 copy of a sum plane, for vectorized window scans.

    This is a scan-time working buffer, not part of the stored representation;
    entry (y+1, x+1) equals sums[y, x] and row/column 0 are zero.
    """
    src = ii.squared_sums if squares else ii.sums
    if src is None:
        raise ValueError("integral image was built without squared sums")
    out = np.zeros((src.shape[0] + 1, src.shape[1] + 1), dtype=np.int64)
    out[1:, 1:] = src
    return out


def rect_sums_grid(plane: np.ndarray, xs: np.ndarray, ys: np.ndarray,
                   w: int, h: int) -> np.ndarray:
    """Vectorized rectangle sums at many origins over a padded plane.

    `plane` comes from padded_plane(); xs/ys are arrays of top-left origins.
    Bounds are the caller's responsibility.
    """
    return (
        plane[ys + h, xs + w]
        - plane[ys, xs + w]
        - plane[ys + h, xs]
        + plane[ys, xs]
    )
