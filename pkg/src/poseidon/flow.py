"""Dense optical flow by polynomial expansion (Farneback), with invalid-pixel masking.

Coordinates: x is the column index, y the row index. A flow vector (du, dv)
at pixel p says the content at p in `prev` is found at p + (du, dv) in `next`.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class FlowParams:
    levels: int = 3
    window: int = 7
    sigma: float = 1.5
    iterations: int = 3
    avg_window: int = 11

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError("expansion window must be odd and >= 3")
        if self.levels < 1 or self.iterations < 1:
            raise ValueError("levels and iterations must be >= 1")


@dataclass
class Expansion:
    """Per-pixel quadratic model f(p + x) ~ x^T A x + b^T x + c."""
    A: np.ndarray  # (H, W, 2, 2)
    b: np.ndarray  # (H, W, 2)
    c: np.ndarray  # (H, W)
    certainty: np.ndarray  # (H, W), 1 where the local fit is supported


def _basis(window, sigma):
    r = window // 2
    y, x = np.mgrid[-r:r + 1, -r:r + 1].astype(float)
    app = np.exp(-(x * x + y * y) / (2 * sigma * sigma))
    return [np.ones_like(x), x, y, x * x, y * y, x * y], app


def polynomial_expansion(frame, window: int = 7, sigma: float = 1.5, certainty=None) -> Expansion:
    """Weighted least-squares quadratic fit in a Gaussian-weighted window around every pixel.

    Pixels with zero certainty (and everything outside the frame) carry no weight.
    """
    f = np.asarray(frame, dtype=float)
    if f.ndim != 2:
        raise ValueError("frame must be 2-D")
    if min(f.shape) < window:
        raise ValueError(f"frame {f.shape} is smaller than the {window}x{window} window")
    cert = np.ones_like(f) if certainty is None else np.asarray(certainty, dtype=float)
    basis, app = _basis(window, sigma)
    corr = lambda img, k: ndimage.correlate(img, k, mode="constant", cval=0.0)
    n = len(basis)
    G = np.empty(f.shape + (n, n))
    for i in range(n):
        for j in range(i, n):
            G[..., i, j] = G[..., j, i] = corr(cert, app * basis[i] * basis[j])
    cf = cert * f
    h = np.stack([corr(cf, app * bk) for bk in basis], axis=-1)
    # pixels whose support cannot pin down six coefficients get zero certainty
    scale = np.maximum(G[..., 0, 0], 1e-300)
    ok = (G[..., 0, 0] > 1e-3 * app.sum()) & (cert > 0)
    Gn = G / scale[..., None, None] + 1e-10 * np.eye(n)
    r = np.linalg.solve(Gn, (h / scale[..., None])[..., None])[..., 0]
    r[~ok] = 0.0
    A = np.empty(f.shape + (2, 2))
    A[..., 0, 0] = r[..., 3]
    A[..., 1, 1] = r[..., 4]
    A[..., 0, 1] = A[..., 1, 0] = r[..., 5] / 2
    return Expansion(A, r[..., 1:3].copy(), r[..., 0].copy(), ok.astype(float))


def _sample(field, px, py):
    """Bilinear sampling of field (H, W, ...) at float coordinates, edge-clamped."""
    h, w = field.shape[:2]
    px = np.clip(px, 0, w - 1)
    py = np.clip(py, 0, h - 1)
    x0 = np.clip(np.floor(px).astype(int), 0, max(w - 2, 0))
    y0 = np.clip(np.floor(py).astype(int), 0, max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    tail = (1,) * (field.ndim - 2)
    fx = (px - x0).reshape(px.shape + tail)
    fy = (py - y0).reshape(py.shape + tail)
    return ((1 - fy) * ((1 - fx) * field[y0, x0] + fx * field[y0, x1])
            + fy * ((1 - fx) * field[y1, x0] + fx * field[y1, x1]))


def _update_flow(e1: Expansion, e2: Expansion, flow, avg_window, iterations):
    h, w = e1.c.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    sig = avg_window / 6.0
    blur = lambda img: ndimage.gaussian_filter(img, sig, mode="constant", truncate=3.0)
    for _ in range(iterations):
        px, py = xx + flow[..., 0], yy + flow[..., 1]
        inside = (px >= 0) & (px <= w - 1) & (py >= 0) & (py <= h - 1)
        A2 = _sample(e2.A, px, py)
        b2 = _sample(e2.b, px, py)
        c2 = _sample(e2.certainty, px, py)
        A = (e1.A + A2) / 2
        db = -0.5 * (b2 - e1.b) + np.einsum("...ij,...j->...i", A, flow)
        wgt = e1.certainty * np.where(inside, c2, 0.0)
        AtA = np.einsum("...ki,...kj->...ij", A, A) * wgt[..., None, None]
        Atb = np.einsum("...ki,...k->...i", A, db) * wgt[..., None]
        G = np.stack([blur(AtA[..., i, j]) for i in range(2) for j in range(2)], axis=-1).reshape(h, w, 2, 2)
        hv = np.stack([blur(Atb[..., i]) for i in range(2)], axis=-1)
        tr = G[..., 0, 0] + G[..., 1, 1]
        solvable = tr > 1e-12
        G = G + (1e-6 * np.maximum(tr, 1e-12))[..., None, None] * np.eye(2)
        new = np.linalg.solve(G, hv[..., None])[..., 0]
        flow = np.where(solvable[..., None], new, flow)
    return flow


def _downsample(img, cert):
    s = ndimage.gaussian_filter(img * cert, 1.0, mode="constant")
    c = ndimage.gaussian_filter(cert, 1.0, mode="constant")
    out = np.where(c > 1e-6, s / np.maximum(c, 1e-6), 0.0)
    return out[::2, ::2], (c[::2, ::2] > 0.5).astype(float)


def farneback_flow(prev, next, levels: int = 3, window: int = 7, iterations: int = 3, sigma: float = 1.5,
                   avg_window: int = 11) -> np.ndarray:
    """Coarse-to-fine dense flow from prev to next. Returns (H, W, 2) as (du, dv).

    Inputs are expected in [0, 1]; exact zeros are treated as invalid pixels.
    """
    prev = np.asarray(prev, dtype=float)
    next = np.asarray(next, dtype=float)
    if prev.shape != next.shape or prev.ndim != 2:
        raise ValueError(f"frames must be 2-D with equal shapes, got {prev.shape} and {next.shape}")
    pyr = [(prev, (prev != 0).astype(float), next, (next != 0).astype(float))]
    for _ in range(levels - 1):
        p, pc, n, nc = pyr[-1]
        if min(p.shape) // 2 < window:
            break
        pyr.append(_downsample(p, pc) + _downsample(n, nc))
    flow = None
    for p, pc, n, nc in reversed(pyr):
        h, w = p.shape
        if flow is None:
            flow = np.zeros((h, w, 2))
        else:
            yy, xx = np.mgrid[0:h, 0:w].astype(float)
            flow = 2.0 * _sample(flow, xx / 2.0, yy / 2.0)
        e1 = polynomial_expansion(p, window, sigma, pc)
        e2 = polynomial_expansion(n, window, sigma, nc)
        flow = _update_flow(e1, e2, flow, avg_window, iterations)
    return np.nan_to_num(flow, nan=0.0, posinf=0.0, neginf=0.0)


def normalize_pair(prev_depth, next_depth):
    """Map two depth crops jointly into (0, 1]; invalid (0) stays 0."""
    a = np.asarray(prev_depth, dtype=float)
    b = np.asarray(next_depth, dtype=float)
    valid = np.concatenate([a[a > 0], b[b > 0]])
    if valid.size == 0:
        return np.zeros_like(a), np.zeros_like(b)
    lo, hi = valid.min(), valid.max()
    span = max(hi - lo, 1e-9)
    norm = lambda d: np.where(d > 0, 0.05 + 0.95 * (d - lo) / span, 0.0)
    return norm(a), norm(b)


def flow_to_branch_input(flow, clip: float = 8.0) -> np.ndarray:
    """(H, W, 2) flow -> (2, H, W) tensor clamped to +-clip and scaled into [-1, 1]."""
    if clip <= 0:
        raise ValueError("clip must be positive")
    f = np.clip(np.asarray(flow, dtype=float), -clip, clip) / clip
    return np.ascontiguousarray(f.transpose(2, 0, 1))


def write_flow(path, flow) -> None:
    flow = np.asarray(flow, dtype="<f4")
    rows, cols = flow.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"FLOW {rows} {cols}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(flow[..., 0]).tobytes())
        fh.write(np.ascontiguousarray(flow[..., 1]).tobytes())


def read_flow(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    tag, rows, cols = raw[:nl].decode("ascii").split()
    if tag != "FLOW":
        raise ValueError(f"{path}: not a flow dump")
    rows, cols = int(rows), int(cols)
    data = np.frombuffer(raw[nl + 1:], dtype="<f4")
    if data.size != 2 * rows * cols:
        raise ValueError(f"{path}: truncated flow dump")
    return np.stack([data[:rows * cols].reshape(rows, cols), data[rows * cols:].reshape(rows, cols)], axis=-1)
