"""Feature-map fusion operators and their derivatives."""
from __future__ import annotations

import numpy as np

from ..tensor.layers import ShapeError, conv2d_backward, conv2d_forward

KINDS = ("mul", "concat", "conv", "conv+concat", "mul+concat")


def _check_spatial(a, b):
    if a.ndim != 4 or b.ndim != 4:
        raise ShapeError("fusion operands must be (N, C, H, W)", "rank", 4, (a.ndim, b.ndim))
    for axis, name in ((0, "batch"), (2, "rows"), (3, "cols")):
        if a.shape[axis] != b.shape[axis]:
            raise ShapeError("fusion operands differ", name, a.shape[axis], b.shape[axis])


def fused_channels(kind: str, ca: int, cb: int) -> int:
    if kind == "mul":
        if ca != cb:
            raise ShapeError("multiplication needs equal channel counts", "channels", ca, cb)
        return ca
    if kind == "concat":
        return ca + cb
    if kind == "conv":
        if (ca + cb) % 2:
            raise ShapeError("convolution fusion needs an even channel total", "channels", "even", ca + cb)
        return (ca + cb) // 2
    raise ValueError(f"unknown pairwise fusion {kind!r}")


def fuse(a, b, kind: str, weight=None, bias=None):
    """Pairwise fusion. `weight`/`bias` are the 1x1 kernel ((ca+cb)/2, ca+cb, 1, 1) for "conv"."""
    _check_spatial(a, b)
    fused_channels(kind, a.shape[1], b.shape[1])
    if kind == "mul":
        return a * b
    cat = np.concatenate([a, b], axis=1)
    if kind == "concat":
        return cat
    return conv2d_forward(cat, weight, bias)


def fuse_backward(grad, a, b, kind: str, weight=None):
    """Return (grad_a, grad_b, grad_weight, grad_bias); the last two are None unless kind == "conv"."""
    ca = a.shape[1]
    if kind == "mul":
        return grad * b, grad * a, None, None
    if kind == "concat":
        return grad[:, :ca], grad[:, ca:], None, None
    cat = np.concatenate([a, b], axis=1)
    gcat, gw, gb = conv2d_backward(grad, cat, weight)
    return gcat[:, :ca], gcat[:, ca:], gw, gb


# ---------------------------------------------------------------------------
# Three-stream fusion graphs
# ---------------------------------------------------------------------------


def fusion_param_shapes(kind: str, channels) -> dict:
    """Parameter shapes of the fusion stage over (depth, ffd, motion) channel counts."""
    cd, cf, cm = channels
    shapes = {}
    if kind == "conv":
        c1 = fused_channels("conv", cd, cf)
        c2 = fused_channels("conv", c1, cm)
        shapes = {"conv1.weight": (c1, cd + cf, 1, 1), "conv1.bias": (c1,),
                  "conv2.weight": (c2, c1 + cm, 1, 1), "conv2.bias": (c2,)}
    elif kind == "conv+concat":
        c1 = fused_channels("conv", cd, cf)
        c2 = fused_channels("conv", cd, cm)
        shapes = {"conv1.weight": (c1, cd + cf, 1, 1), "conv1.bias": (c1,),
                  "conv2.weight": (c2, cd + cm, 1, 1), "conv2.bias": (c2,)}
    elif kind not in KINDS:
        raise ValueError(f"unknown fusion kind {kind!r}")
    return shapes


def fusion_output_channels(kind: str, channels) -> int:
    cd, cf, cm = channels
    if kind == "mul":
        return fused_channels("mul", fused_channels("mul", cd, cf), cm)
    if kind == "concat":
        return cd + cf + cm
    if kind == "conv":
        return fused_channels("conv", fused_channels("conv", cd, cf), cm)
    if kind == "conv+concat":
        return fused_channels("conv", cd, cf) + fused_channels("conv", cd, cm)
    if kind == "mul+concat":
        return fused_channels("mul", cd, cf) + fused_channels("mul", cd, cm)
    raise ValueError(f"unknown fusion kind {kind!r}")


def fusion_forward(kind: str, feats, params: dict):
    """Fuse (depth, ffd, motion) maps. Returns (output, cache)."""
    d, f, m = feats
    p = params
    if kind == "mul":
        df = fuse(d, f, "mul")
        return fuse(df, m, "mul"), (df,)
    if kind == "concat":
        fuse(d, f, "concat"), fuse(d, m, "concat")  # shape checks
        return np.concatenate([d, f, m], axis=1), ()
    if kind == "conv":
        df = fuse(d, f, "conv", p["conv1.weight"], p["conv1.bias"])
        return fuse(df, m, "conv", p["conv2.weight"], p["conv2.bias"]), (df,)
    if kind == "conv+concat":
        df = fuse(d, f, "conv", p["conv1.weight"], p["conv1.bias"])
        dm = fuse(d, m, "conv", p["conv2.weight"], p["conv2.bias"])
        return fuse(df, dm, "concat"), (df, dm)
    if kind == "mul+concat":
        df, dm = fuse(d, f, "mul"), fuse(d, m, "mul")
        return fuse(df, dm, "concat"), (df, dm)
    raise ValueError(f"unknown fusion kind {kind!r}")


def fusion_backward(kind: str, feats, cache, grad, params: dict):
    """Return ([grad_depth, grad_ffd, grad_motion], param_grads)."""
    d, f, m = feats
    p = params
    pg = {}
    if kind == "mul":
        (df,) = cache
        gdf, gm, _, _ = fuse_backward(grad, df, m, "mul")
        gd, gf, _, _ = fuse_backward(gdf, d, f, "mul")
    elif kind == "concat":
        cd, cf = d.shape[1], f.shape[1]
        gd, gf, gm = grad[:, :cd], grad[:, cd:cd + cf], grad[:, cd + cf:]
    elif kind == "conv":
        (df,) = cache
        gdf, gm, pg["conv2.weight"], pg["conv2.bias"] = fuse_backward(grad, df, m, "conv", p["conv2.weight"])
        gd, gf, pg["conv1.weight"], pg["conv1.bias"] = fuse_backward(gdf, d, f, "conv", p["conv1.weight"])
    elif kind in ("conv+concat", "mul+concat"):
        df, dm = cache
        gdf, gdm, _, _ = fuse_backward(grad, df, dm, "concat")
        inner = "conv" if kind == "conv+concat" else "mul"
        gd1, gf, w1, b1 = fuse_backward(gdf, d, f, inner, p.get("conv1.weight"))
        gd2, gm, w2, b2 = fuse_backward(gdm, d, m, inner, p.get("conv2.weight"))
        gd = gd1 + gd2
        if inner == "conv":
            pg.update({"conv1.weight": w1, "conv1.bias": b1, "conv2.weight": w2, "conv2.bias": b2})
    else:
        raise ValueError(f"unknown fusion kind {kind!r}")
    return [gd, gf, gm], pg
