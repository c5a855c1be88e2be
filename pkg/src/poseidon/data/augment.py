"""Image-plane augmentation: translation, depth jitter, zoom about the head centre.

Only 2D transforms are applied, so pose labels are left alone. A zoom by s
mimics moving the head to distance D/s, so depth values and D are divided by
s to keep the crop geometry consistent.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .sample import Sample


@dataclass(frozen=True)
class AugmentConfig:
    max_translation: int = 8  # px, per axis
    jitter_mm: float = 5.0  # std of additive depth noise on valid pixels
    zoom_range: tuple = (0.85, 1.2)

    def __post_init__(self):
        if self.max_translation < 0 or self.jitter_mm < 0:
            raise ValueError("augmentation magnitudes must be non-negative")
        lo, hi = self.zoom_range
        if not (0 < lo <= hi):
            raise ValueError(f"bad zoom range {self.zoom_range}")


@dataclass(frozen=True)
class Transform2D:
    """p_out = scale * (p_in - pivot) + pivot + shift."""
    scale: float
    shift: tuple
    pivot: tuple

    def apply(self, point):
        return (self.scale * (point[0] - self.pivot[0]) + self.pivot[0] + self.shift[0],
                self.scale * (point[1] - self.pivot[1]) + self.pivot[1] + self.shift[1])

    def inverse_grid(self, rows, cols):
        v, u = np.mgrid[0:rows, 0:cols].astype(float)
        xs = (u - self.pivot[0] - self.shift[0]) / self.scale + self.pivot[0]
        ys = (v - self.pivot[1] - self.shift[1]) / self.scale + self.pivot[1]
        return xs, ys


def sample_seed(seed: int, sample_id: str) -> int:
    """Order-independent per-sample seed."""
    h = hashlib.sha256(f"{int(seed)}:{sample_id}".encode()).digest()
    return int.from_bytes(h[:8], "little")


def warp_nearest(image, t: Transform2D) -> np.ndarray:
    image = np.asarray(image)
    rows, cols = image.shape
    xs, ys = t.inverse_grid(rows, cols)
    xi = np.floor(xs + 0.5).astype(np.int64)
    yi = np.floor(ys + 0.5).astype(np.int64)
    inside = (xi >= 0) & (xi < cols) & (yi >= 0) & (yi < rows)
    out = image[np.clip(yi, 0, rows - 1), np.clip(xi, 0, cols - 1)]
    return np.where(inside, out, 0).astype(image.dtype)


def draw_transform(sample: Sample, config: AugmentConfig, rng) -> Transform2D:
    rows, cols = sample.depth.shape
    m = int(config.max_translation)
    tx, ty = (int(v) for v in rng.integers(-m, m + 1, size=2))
    cx, cy = sample.center
    # keep the annotated centre inside the frame
    tx = int(np.clip(tx, np.ceil(-cx), np.floor(cols - 1e-9 - cx)))
    ty = int(np.clip(ty, np.ceil(-cy), np.floor(rows - 1e-9 - cy)))
    lo, hi = config.zoom_range
    scale = float(rng.uniform(lo, hi)) if hi > lo else float(lo)
    return Transform2D(scale, (tx, ty), (float(cx), float(cy)))


def apply_transform(sample: Sample, t: Transform2D, jitter_mm: float = 0.0, rng=None) -> Sample:
    depth = warp_nearest(sample.depth, t).astype(float)
    valid = depth > 0
    if t.scale != 1.0:
        depth = depth / t.scale
    if jitter_mm > 0:
        depth = depth + rng.normal(0.0, jitter_mm, depth.shape)
    depth = np.where(valid, np.clip(np.round(depth), 1, 65535), 0).astype(np.uint16)
    gray = None if sample.gray is None else warp_nearest(sample.gray, t)
    extra = dict(sample.extra)
    extra["augment"] = {"scale": t.scale, "shift": list(t.shift), "pivot": list(t.pivot)}
    return sample.with_(depth=depth, gray=gray, center=t.apply(sample.center), d_mm=sample.d_mm / t.scale,
                        extra=extra)


def augment(sample: Sample, config: AugmentConfig, seed: int) -> Sample:
    rng = np.random.default_rng(sample_seed(seed, sample.id))
    t = draw_transform(sample, config, rng)
    return apply_transform(sample, t, config.jitter_mm, rng)
