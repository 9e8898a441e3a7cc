"""Irregular stroke mask generation and boundary-band extraction."""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np
import torch
import torch.nn.functional as F

from .data import validate_mask_batch

# brush widths in MaskSpec are given at this reference resolution and scaled
# proportionally for other sizes
REFERENCE_RESOLUTION = 128

# bands narrower than this are widened to +/- RATIO_TOLERANCE around their
# midpoint: stroke area arrives in discrete chunks, exact ratios are unattainable
MIN_BAND_WIDTH = 0.04
RATIO_TOLERANCE = 0.02

MAX_ATTEMPTS = 100


class MaskGenerationError(RuntimeError):
    """Raised when no mask satisfying the spec was produced within the retry budget."""


@dataclass(frozen=True)
class MaskSpec:
    """Parameters of the free-form stroke mask generator.

    ``num_strokes`` and ``brush_width`` are inclusive ranges; widths are in
    pixels at 128 x 128 and scale with resolution.
    """

    ratio_min: float = 0.20
    ratio_max: float = 0.40
    num_strokes: tuple[int, int] = (1, 4)
    brush_width: tuple[int, int] = (5, 25)
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not (0.0 < self.ratio_min <= self.ratio_max < 1.0):
            raise ValueError(
                f"require 0 < ratio_min <= ratio_max < 1, got [{self.ratio_min}, {self.ratio_max}]"
            )
        if self.num_strokes[0] < 1 or self.num_strokes[0] > self.num_strokes[1]:
            raise ValueError(f"bad num_strokes range {self.num_strokes}")
        if self.brush_width[0] < 1 or self.brush_width[0] > self.brush_width[1]:
            raise ValueError(f"bad brush_width range {self.brush_width}")


def _acceptance_band(spec: MaskSpec) -> tuple[float, float]:
    if spec.ratio_max - spec.ratio_min >= MIN_BAND_WIDTH:
        return spec.ratio_min, spec.ratio_max
    mid = 0.5 * (spec.ratio_min + spec.ratio_max)
    return max(1e-4, mid - RATIO_TOLERANCE), min(1.0 - 1e-4, mid + RATIO_TOLERANCE)


def _draw_strokes(
    canvas: np.ndarray,
    rng: np.random.Generator,
    spec: MaskSpec,
    target: float,
) -> None:
    """Accumulate polyline strokes with round caps onto ``canvas`` (in place),
    stopping as soon as the occlusion ratio reaches ``target``."""
    h, w = canvas.shape
    scale = min(h, w) / REFERENCE_RESOLUTION
    w_lo = max(1.0, spec.brush_width[0] * scale)
    w_hi = max(w_lo, spec.brush_width[1] * scale)
    seg_mean = min(h, w) / 8.0
    area = float(h * w)

    n_strokes = int(rng.integers(spec.num_strokes[0], spec.num_strokes[1] + 1))
    for _ in range(n_strokes):
        x = float(rng.uniform(0, w - 1))
        y = float(rng.uniform(0, h - 1))
        angle = float(rng.uniform(0, 2 * np.pi))
        width = max(1, int(round(rng.uniform(w_lo, w_hi))))
        n_vertices = int(rng.integers(10, 31))
        cv2.circle(canvas, (int(round(x)), int(round(y))), width // 2, 1, -1)
        for _ in range(n_vertices):
            angle += float(rng.uniform(-np.pi / 2, np.pi / 2))
            length = float(rng.uniform(0.5 * seg_mean, 1.5 * seg_mean))
            nx = float(np.clip(x + length * np.cos(angle), 0, w - 1))
            ny = float(np.clip(y + length * np.sin(angle), 0, h - 1))
            p0 = (int(round(x)), int(round(y)))
            p1 = (int(round(nx)), int(round(ny)))
            cv2.line(canvas, p0, p1, 1, width)
            cv2.circle(canvas, p1, width // 2, 1, -1)
            x, y = nx, ny
            if canvas.sum() / area >= target:
                return
        if canvas.sum() / area >= target:
            return


def generate_mask(spec: MaskSpec, height: int, width: int) -> torch.Tensor:
    """Draw a random free-form occlusion mask of shape ``1 x 1 x H x W``.

    The occlusion ratio lands inside ``[ratio_min, ratio_max]`` (widened by
    +/-0.02 around the midpoint for bands narrower than 0.04); the drawing is
    fully determined by ``spec.rng_seed``. Raises :class:`MaskGenerationError`
    when the spec is infeasible after a bounded number of redraws.
    """
    if height < 32 or width < 32:
        raise ValueError(f"mask size must be at least 32 x 32, got {height} x {width}")
    rng = np.random.default_rng(spec.rng_seed)
    lo, hi = _acceptance_band(spec)
    for _ in range(MAX_ATTEMPTS):
        canvas = np.zeros((height, width), dtype=np.uint8)
        target = float(rng.uniform(max(lo, spec.ratio_min), min(hi, spec.ratio_max)))
        _draw_strokes(canvas, rng, spec, target)
        ratio = float(canvas.mean())
        if lo <= ratio <= hi:
            return torch.from_numpy(canvas.astype(np.float32)).unsqueeze(0).unsqueeze(0)
    raise MaskGenerationError(
        f"could not hit occlusion band [{lo:.3f}, {hi:.3f}] at {height}x{width} "
        f"within {MAX_ATTEMPTS} redraws (brush too coarse for the band?)"
    )


def generate_mask_batch(spec: MaskSpec, n: int, height: int, width: int) -> torch.Tensor:
    """Stack ``n`` masks drawn with seeds ``rng_seed .. rng_seed + n - 1``."""
    from dataclasses import replace

    masks = [
        generate_mask(replace(spec, rng_seed=spec.rng_seed + i), height, width)
        for i in range(n)
    ]
    return torch.cat(masks, dim=0)


def default_boundary_radius(resolution: int) -> int:
    """3 px at 128 x 128, scaled proportionally, never below 1."""
    return max(1, int(round(3 * resolution / REFERENCE_RESOLUTION)))


def boundary_mask(mask: torch.Tensor, dilation_radius: int = 3) -> torch.Tensor:
    """Band of pixels within ``dilation_radius`` (Chebyshev) of the hole
    boundary, on either side: ``dilate(M, r) AND dilate(1 - M, r)``."""
    validate_mask_batch(mask)
    if dilation_radius < 1:
        raise ValueError(f"dilation_radius must be >= 1, got {dilation_radius}")
    k = 2 * dilation_radius + 1
    near_hole = F.max_pool2d(mask, k, stride=1, padding=dilation_radius)
    near_known = F.max_pool2d(1.0 - mask, k, stride=1, padding=dilation_radius)
    return near_hole * near_known
