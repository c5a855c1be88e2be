"""Cropping and intensity normalization of depth/gray crops."""
from __future__ import annotations

import numpy as np

from ..geometry import BoundingBox


def _bilinear(image, xs, ys, valid):
    """Sample `image` at float coordinates, ignoring invalid source pixels.

    Returns (values, ok) where ok marks outputs that received at least half
    of their interpolation weight from valid, in-frame pixels.
    """
    rows, cols = image.shape
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0
    acc = np.zeros(np.broadcast(xs, ys).shape)
    wsum = np.zeros_like(acc)
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            yy, xx = y0 + dy, x0 + dx
            inside = (yy >= 0) & (yy < rows) & (xx >= 0) & (xx < cols)
            yc, xc = np.clip(yy, 0, rows - 1), np.clip(xx, 0, cols - 1)
            w = wy * wx * inside * valid[yc, xc]
            acc += w * image[yc, xc]
            wsum += w
    ok = wsum >= 0.5 - 1e-12
    out = np.where(ok, acc / np.where(ok, wsum, 1.0), 0.0)
    return out, ok


def crop_resize(image, box: BoundingBox, out_size, mask_invalid: bool = True) -> np.ndarray:
    """Resample the box region to `out_size` (rows, cols), zero outside the frame.

    Pixel centres are mapped so that a full-frame box at frame resolution is
    the identity. With `mask_invalid`, zero pixels are treated as missing and
    do not bleed into neighbouring values.
    """
    out_r, out_c = int(out_size[0]), int(out_size[1])
    if out_r <= 0 or out_c <= 0:
        raise ValueError("output size must be positive")
    img = np.asarray(image, dtype=float)
    valid = img != 0 if mask_invalid else np.ones(img.shape, dtype=bool)
    xs = box.left + (np.arange(out_c) + 0.5) * box.width / out_c - 0.5
    ys = box.top + (np.arange(out_r) + 0.5) * box.height / out_r - 0.5
    vals, _ = _bilinear(img, xs[None, :], ys[:, None], valid)
    return vals


def preprocess(crop, lo_pct: float = 2.0, hi_pct: float = 98.0, valid=None) -> np.ndarray:
    """Percentile stretch then standardize over the valid pixels (default: nonzero ones).

    Invalid pixels are 0 in the output; a constant crop maps to all zeros.
    """
    if not (0 <= lo_pct < hi_pct <= 100):
        raise ValueError(f"need 0 <= lo < hi <= 100, got {lo_pct}, {hi_pct}")
    crop = np.asarray(crop, dtype=float)
    valid = crop != 0 if valid is None else np.asarray(valid, dtype=bool)
    out = np.zeros(crop.shape)
    if valid.sum() < 2:
        return out
    v = crop[valid]
    if v.max() == v.min():
        return out
    lo, hi = np.percentile(v, [lo_pct, hi_pct])
    if hi > lo:
        v = np.clip((v - lo) / (hi - lo), 0.0, 1.0)
    std = v.std()
    if not std > 1e-12:
        return out
    out[valid] = (v - v.mean()) / std
    return out


def gray_to_unit(gray) -> np.ndarray:
    """8-bit gray levels to the [-1, 1] range used by the reconstruction net."""
    return np.asarray(gray, dtype=float) / 127.5 - 1.0
