"""Synthetic moth-trap imagery: dark elliptical blobs on noisy gradient
backgrounds, plus non-target clutter for hard negatives.

The real trap datasets are private, so training, evaluation, and the
end-to-end pipeline tests run on this generator. Everything is a pure
function of the supplied RNG.
"""

from __future__ import annotations

import math

import numpy as np

from .imaging import GrayImage
from .integral import Rect


def _bilinear_gradient(w: int, h: int, corners: np.ndarray) -> np.ndarray:
    # corners: [[top-left, top-right], [bottom-left, bottom-right]]
    ty = np.linspace(0.0, 1.0, h)[:, None]
    tx = np.linspace(0.0, 1.0, w)[None, :]
    top = corners[0, 0] * (1 - tx) + corners[0, 1] * tx
    bot = corners[1, 0] * (1 - tx) + corners[1, 1] * tx
    return top * (1 - ty) + bot * ty


def _blotch_field(w: int, h: int, rng: np.random.Generator,
                  octaves=((8, 14.0), (4, 9.0), (16, 6.0))) -> np.ndarray:
    """Multi-scale mottling: coarse random grids upsampled bilinearly.

    Gives the sticky pad an uneven, stained look; most windows then carry
    weak dark/light structure instead of being flat, which is what makes the
    negative distribution hard rather than trivially separable.
    """
    field = np.zeros((h, w))
    for cells, amplitude in octaves:
        grid = rng.normal(0.0, amplitude, size=(cells + 1, cells + 1))
        ys = np.linspace(0, cells, h)
        xs = np.linspace(0, cells, w)
        y0 = np.clip(ys.astype(int), 0, cells - 1)
        x0 = np.clip(xs.astype(int), 0, cells - 1)
        ty = (ys - y0)[:, None]
        tx = (xs - x0)[None, :]
        g00 = grid[np.ix_(y0, x0)]
        g01 = grid[np.ix_(y0, x0 + 1)]
        g10 = grid[np.ix_(y0 + 1, x0)]
        g11 = grid[np.ix_(y0 + 1, x0 + 1)]
        field += (g00 * (1 - tx) + g01 * tx) * (1 - ty) \
            + (g10 * (1 - tx) + g11 * tx) * ty
    return field


def _soft_ellipse_mask(w: int, h: int, cx: float, cy: float, a: float,
                       b: float, theta: float, softness: float = 0.7) -> np.ndarray:
    """1.0 inside the rotated ellipse, fading to 0.0 just outside."""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dx = xx - cx
    dy = yy - cy
    ct, st = math.cos(theta), math.sin(theta)
    u = (dx * ct + dy * st) / a
    v = (-dx * st + dy * ct) / b
    r = np.sqrt(u * u + v * v)
    return np.clip((1.0 + softness - r) / softness, 0.0, 1.0)


def _paint_moth(canvas: np.ndarray, cx: float, cy: float, side: float,
                rng: np.random.Generator) -> None:
    """Dark moth body: rotated ellipse with a denser core, in place."""
    h, w = canvas.shape
    a = side * rng.uniform(0.32, 0.42)
    b = side * rng.uniform(0.18, 0.26)
    theta = rng.uniform(0.0, math.pi)
    body = rng.uniform(30.0, 75.0)
    mask = _soft_ellipse_mask(w, h, cx, cy, a, b, theta)
    canvas -= (canvas - body) * mask
    # denser core along the body axis
    core = _soft_ellipse_mask(w, h, cx, cy, a * 0.55, b * 0.55, theta)
    canvas -= (canvas - max(body - 18.0, 10.0)) * core * 0.8


def _paint_clutter(canvas: np.ndarray, rng: np.random.Generator) -> None:
    """Non-target structure, including moth-like decoys.

    Decoys (rings, dot pairs, crescents, oversized smudges, specks) share
    the moths' darkness but not their solid compact-ellipse structure, which
    is what keeps later cascade stages busy.
    """
    h, w = canvas.shape
    for _ in range(rng.integers(4, 10)):
        kind = rng.integers(0, 7)
        cx = rng.uniform(0, w)
        cy = rng.uniform(0, h)
        theta = rng.uniform(0, math.pi)
        dark = rng.uniform(40.0, 110.0)
        if kind == 0:  # bright speck (glue glare)
            mask = _soft_ellipse_mask(w, h, cx, cy, rng.uniform(2, 6),
                                      rng.uniform(2, 6), theta, softness=1.5)
            canvas += (250.0 - canvas) * mask * rng.uniform(0.3, 0.7)
        elif kind == 1:  # thin streak (scratch / antenna debris)
            mask = _soft_ellipse_mask(w, h, cx, cy, rng.uniform(8, 20),
                                      rng.uniform(0.6, 1.2), theta, softness=1.0)
            canvas -= canvas * mask * rng.uniform(0.2, 0.5)
        elif kind == 2:  # hollow ring: dark annulus, bright interior
            a = rng.uniform(4.0, 7.5)
            b = rng.uniform(3.0, 6.0)
            outer = _soft_ellipse_mask(w, h, cx, cy, a, b, theta)
            inner = _soft_ellipse_mask(w, h, cx, cy, a * 0.45, b * 0.45, theta)
            canvas -= (canvas - dark) * np.clip(outer - inner, 0.0, 1.0)
        elif kind == 3:  # pair of small dark dots
            gap = rng.uniform(5.0, 11.0)
            for s in (-0.5, 0.5):
                dot = _soft_ellipse_mask(
                    w, h, cx + s * gap * math.cos(theta),
                    cy + s * gap * math.sin(theta),
                    rng.uniform(1.2, 2.8), rng.uniform(1.2, 2.8), 0.0)
                canvas -= (canvas - dark) * dot
        elif kind == 4:  # crescent: ellipse with a shifted bite removed
            a = rng.uniform(4.0, 7.5)
            b = rng.uniform(3.0, 6.0)
            body = _soft_ellipse_mask(w, h, cx, cy, a, b, theta)
            bite = _soft_ellipse_mask(
                w, h, cx + 0.7 * a * math.cos(theta),
                cy + 0.7 * a * math.sin(theta), a * 0.9, b * 0.9, theta)
            canvas -= (canvas - dark) * np.clip(body - bite, 0.0, 1.0)
        elif kind == 5:  # oversized soft smudge, too big for the window
            mask = _soft_ellipse_mask(w, h, cx, cy, rng.uniform(14, 24),
                                      rng.uniform(12, 20), theta, softness=3.0)
            canvas -= (canvas - rng.uniform(90.0, 140.0)) * mask * rng.uniform(0.5, 0.9)
        else:  # lone dark speck, much smaller than a moth
            mask = _soft_ellipse_mask(w, h, cx, cy, rng.uniform(1.0, 2.4),
                                      rng.uniform(1.0, 2.4), theta)
            canvas -= (canvas - dark) * mask


def _finish(canvas: np.ndarray, rng: np.random.Generator,
            noise_sigma: float) -> GrayImage:
    canvas = canvas + rng.normal(0.0, noise_sigma, canvas.shape)
    return GrayImage(np.clip(np.rint(canvas), 0, 255).astype(np.uint8))


def synth_background(w: int, h: int, rng: np.random.Generator,
                     clutter: bool = True, noise_sigma: float = 5.0) -> GrayImage:
    """Sticky-pad background: gradient, mottling, noise, optional clutter."""
    corners = rng.uniform(150.0, 225.0, size=(2, 2))
    canvas = _bilinear_gradient(w, h, corners) + _blotch_field(w, h, rng)
    if clutter:
        _paint_clutter(canvas, rng)
    return _finish(canvas, rng, noise_sigma)


def synth_moth_window(rng: np.random.Generator, size: int = 20) -> GrayImage:
    """One positive training window: centered moth on a mottled background."""
    corners = rng.uniform(150.0, 225.0, size=(2, 2))
    canvas = _bilinear_gradient(size, size, corners) \
        + _blotch_field(size, size, rng, octaves=((2, 12.0), (5, 7.0)))
    cx = size / 2.0 + rng.uniform(-1.2, 1.2)
    cy = size / 2.0 + rng.uniform(-1.2, 1.2)
    _paint_moth(canvas, cx, cy, side=rng.uniform(0.8, 0.95) * size, rng=rng)
    return _finish(canvas, rng, noise_sigma=4.0)


def synth_positive_windows(n: int, rng: np.random.Generator,
                           size: int = 20) -> list[GrayImage]:
    return [synth_moth_window(rng, size) for _ in range(n)]


def synth_negative_images(n: int, w: int, h: int,
                          rng: np.random.Generator) -> list[GrayImage]:
    return [synth_background(w, h, rng) for _ in range(n)]


def synth_scene(w: int, h: int, moth_sides: list[int],
                rng: np.random.Generator,
                clutter: bool = True) -> tuple[GrayImage, list[Rect]]:
    """Trap scene with moths planted at non-overlapping random positions.

    Returns the image and the ground-truth boxes (side x side each).
    """
    corners = rng.uniform(150.0, 225.0, size=(2, 2))
    canvas = _bilinear_gradient(w, h, corners) + _blotch_field(w, h, rng)
    if clutter:
        _paint_clutter(canvas, rng)
    boxes: list[Rect] = []
    for side in moth_sides:
        if side > min(w, h):
            raise ValueError(f"moth side {side} larger than scene")
        for _ in range(200):
            x = int(rng.integers(0, w - side + 1))
            y = int(rng.integers(0, h - side + 1))
            candidate = Rect(x, y, side, side)
            margin = side  # keep moths apart so boxes stay unambiguous
            if all(
                abs(candidate.x - b.x) > margin or abs(candidate.y - b.y) > margin
                for b in boxes
            ) and all(
                (candidate.x + side + margin <= b.x or b.x + b.w + margin <= candidate.x
                 or candidate.y + side + margin <= b.y or b.y + b.h + margin <= candidate.y)
                for b in boxes
            ):
                boxes.append(candidate)
                break
        else:
            raise ValueError("could not place moths without overlap")
        box = boxes[-1]
        _paint_moth(canvas, box.x + side / 2.0, box.y + side / 2.0,
                    side=0.9 * side, rng=rng)
    return _finish(canvas, rng, noise_sigma=4.0), boxes
