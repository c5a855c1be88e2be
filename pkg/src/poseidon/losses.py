"""Training losses. Each returns (scalar loss, gradient wrt the prediction)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor.layers import ShapeError

POSE_LOSS_WEIGHTS = (0.2, 0.35, 0.45)  # pitch, roll, yaw
MASK_ALPHA = 3.5
MASK_BETA = 2.5


@dataclass(frozen=True)
class GaussianMask:
    rows: int
    cols: int
    alpha: float
    beta: float
    weights: np.ndarray


def gaussian_mask(rows: int, cols: int, alpha: float = MASK_ALPHA, beta: float = MASK_BETA) -> GaussianMask:
    """Unnormalized (peak 1) axis-aligned Gaussian centred at (rows/2, cols/2)."""
    if rows < 2 or cols < 2:
        raise ValueError("mask needs at least 2 rows and 2 cols")
    if alpha <= 0 or beta <= 0:
        raise ValueError("alpha and beta must be positive")
    i = (np.arange(rows) - rows / 2) / (rows / alpha)
    j = (np.arange(cols) - cols / 2) / (cols / beta)
    w = np.exp(-0.5 * (i[:, None] ** 2 + j[None, :] ** 2))
    return GaussianMask(rows, cols, alpha, beta, w)


def ffd_loss(pred, target, mask: GaussianMask):
    """Mask-weighted squared error averaged over pixels (and over the batch).

    Accepts (R, C), (N, R*C), (N, R, C) or (N, 1, R, C); the gradient has the
    shape of `pred`.
    """
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    r, c = mask.rows, mask.cols
    if pred.shape != target.shape:
        raise ShapeError("prediction and target differ", "shape", target.shape, pred.shape)
    if pred.size % (r * c):
        raise ShapeError("prediction does not tile the mask", "pixels", r * c, pred.size)
    n = pred.size // (r * c)
    diff = (pred - target).reshape(n, r, c)
    w = mask.weights
    loss = float(np.sum(diff * diff * w) / (r * c * n))
    grad = (2.0 * diff * w / (r * c * n)).reshape(pred.shape)
    return loss, grad


def weighted_l2(pred, target, weights=POSE_LOSS_WEIGHTS):
    """Sum over angles of |w_i (y_i - f_i)|, averaged over the batch.

    The subgradient at a zero residual is taken as 0.
    """
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape or pred.shape[-1] != 3:
        raise ShapeError("pose prediction/target must both end in 3 angles", "angles", target.shape, pred.shape)
    w = np.asarray(weights, dtype=float)
    resid = pred - target
    batched = pred.ndim == 2
    n = pred.shape[0] if batched else 1
    loss = float(np.sum(np.abs(w * resid)) / n)
    grad = np.abs(w) * np.sign(resid) / n
    return loss, grad


def l2_loss(pred, target):
    """Plain mean squared error per sample (sum over outputs, mean over batch)."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    n = pred.shape[0] if pred.ndim > 1 else 1
    diff = pred - target
    return float(np.sum(diff * diff) / n), 2.0 * diff / n
