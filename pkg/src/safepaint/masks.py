"""Binary inpainting masks: synthesis, ratio bucketing, and compositing.

Masks are H x W float arrays with values in {0, 1}: 1 marks the region to
inpaint (foreground), 0 the known region (background). Images are H x W x C
float arrays in [0, 1].
"""

from dataclasses import dataclass

import numpy as np


class MaskGenerationError(RuntimeError):
    """Raised when no mask hitting the requested ratio bucket could be drawn."""


def _check_shapes(image, mask):
    image = np.asarray(image, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2D, got shape {mask.shape}")
    if image.ndim not in (2, 3):
        raise ValueError(f"image must be HxW or HxWxC, got shape {image.shape}")
    if image.shape[:2] != mask.shape:
        raise ValueError(
            f"image/mask shape mismatch: {image.shape[:2]} vs {mask.shape}"
        )
    return image, mask


def _broadcast(mask, image):
    return mask[:, :, None] if image.ndim == 3 else mask


def complement(mask):
    return 1.0 - np.asarray(mask, dtype=np.float64)


def mask_ratio(mask):
    return float(np.mean(mask))


def make_input(image, mask):
    """Corrupt an image for inpainting: known pixels kept, hole filled with 1.0."""
    image, mask = _check_shapes(image, mask)
    m = _broadcast(mask, image)
    return image * (1.0 - m) + m


def composite(background, mask, fill):
    """Paste `fill` into the masked region of `background`.

    Background pixels pass through untouched (bit-identical), so any output
    produced this way preserves the known region exactly.
    """
    background, mask = _check_shapes(background, mask)
    fill = np.asarray(fill, dtype=np.float64)
    if fill.shape != background.shape:
        raise ValueError(
            f"fill/background shape mismatch: {fill.shape} vs {background.shape}"
        )
    m = _broadcast(mask, background)
    return background * (1.0 - m) + fill * m


@dataclass(frozen=True)
class MaskBucket:
    """Half-open hole-ratio range [lower, upper) in percent, width 10."""

    lower: int
    upper: int

    def __post_init__(self):
        if self.upper != self.lower + 10 or self.lower % 10 or not 0 <= self.lower < 100:
            raise ValueError(f"invalid bucket [{self.lower}, {self.upper})")

    def contains(self, ratio):
        return self.lower / 100.0 <= ratio < self.upper / 100.0

    @classmethod
    def parse(cls, text):
        """Parse strings like '30-40' (percent bounds)."""
        try:
            lo, hi = (int(part) for part in text.split("-"))
        except ValueError:
            raise ValueError(f"bucket must look like '30-40', got {text!r}") from None
        return cls(lo, hi)

    def __str__(self):
        return f"{self.lower}-{self.upper}"


def ratio_bucket(mask):
    """Bucket containing the mask's hole ratio; ratio 1.0 clamps to [90, 100)."""
    ratio = mask_ratio(mask)
    lower = min(int(ratio * 100) // 10 * 10, 90)
    return MaskBucket(lower, lower + 10)


def _paint_disc(canvas, row, col, radius):
    h, w = canvas.shape
    r0, r1 = max(row - radius, 0), min(row + radius + 1, h)
    c0, c1 = max(col - radius, 0), min(col + radius + 1, w)
    yy, xx = np.ogrid[r0:r1, c0:c1]
    canvas[r0:r1, c0:c1] |= (yy - row) ** 2 + (xx - col) ** 2 <= radius**2


def generate_irregular(seed, target, height, width, max_attempts=64):
    """Draw a brush-stroke hole mask whose ratio lands in `target`.

    Strokes are random walks painted with discs of radius 2-8 px. Discs are
    added until the ratio clears the lower edge of the bucket; a disc that
    would overshoot the bucket is shrunk first and skipped if still too big.
    Deterministic in (seed, target, height, width).
    """
    if height < 16 or width < 16:
        raise ValueError("mask size must be at least 16x16")
    area = height * width
    lo, hi = target.lower / 100.0, target.upper / 100.0
    stop = lo + 0.4 * (hi - lo)
    for attempt in range(max_attempts):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=int(seed), spawn_key=(attempt,))
        )
        canvas = np.zeros((height, width), dtype=bool)
        for _stroke in range(256):
            painted = int(canvas.sum())
            if painted / area >= stop:
                break
            row = int(rng.integers(0, height))
            col = int(rng.integers(0, width))
            angle = rng.uniform(0, 2 * np.pi)
            steps = int(rng.integers(4, max(height, width)))
            for _ in range(steps):
                painted = int(canvas.sum())
                if painted / area >= stop:
                    break
                radius = int(rng.integers(2, 9))
                # shrink the disc when close to the bucket's upper edge
                budget = (hi * area - painted) * 0.5
                while radius > 1 and np.pi * radius**2 > budget:
                    radius -= 1
                if np.pi * radius**2 > budget:
                    break
                _paint_disc(canvas, row, col, radius)
                angle += rng.uniform(-0.6, 0.6)
                step = max(radius, 2)
                row = int(np.clip(row + step * np.sin(angle), 0, height - 1))
                col = int(np.clip(col + step * np.cos(angle), 0, width - 1))
        mask = canvas.astype(np.float64)
        if target.contains(mask_ratio(mask)):
            return mask
    raise MaskGenerationError(
        f"no mask in bucket {target} after {max_attempts} attempts "
        f"(seed={seed}, size={height}x{width})"
    )


def save_mask(path, mask):
    """Write a mask PNG: 255 = hole, 0 = known region."""
    from PIL import Image

    data = (np.asarray(mask) > 0.5).astype(np.uint8) * 255
    Image.fromarray(data, mode="L").save(path, format="PNG")


def load_mask(path):
    """Read a mask PNG, thresholding gray levels at 128."""
    from PIL import Image

    data = np.asarray(Image.open(path).convert("L"))
    return (data >= 128).astype(np.float64)
