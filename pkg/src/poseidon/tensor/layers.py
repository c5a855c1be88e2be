"""Layer kinds and their numpy kernels.

Every kernel works on batched arrays laid out as (N, C, H, W) for images and
(N, D) for flat vectors. Forward kernels return whatever the matching backward
kernel needs to reproduce the exact reverse-mode derivative.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    """Dimension mismatch; names the offending axis."""

    def __init__(self, message: str, axis: str | None = None, expected=None, got=None, layer=None):
        self.axis = axis
        self.expected = expected
        self.got = got
        self.layer = layer
        detail = []
        if layer is not None:
            detail.append(f"layer {layer}")
        if axis is not None:
            detail.append(f"axis {axis!r}: expected {expected}, got {got}")
        super().__init__(message + (f" ({'; '.join(detail)})" if detail else ""))


# ---------------------------------------------------------------------------
# Layer kinds. Shapes passed around exclude the batch axis.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Conv2D:
    out_channels: int
    kernel_h: int
    kernel_w: int
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        for name in ("out_channels", "kernel_h", "kernel_w", "stride"):
            if getattr(self, name) < 1:
                raise ValueError(f"Conv2D.{name} must be positive")
        if self.padding < 0:
            raise ValueError("Conv2D.padding must be non-negative")

    def output_shape(self, shape):
        c, h, w = _image_shape(shape, self)
        ho = (h + 2 * self.padding - self.kernel_h) // self.stride + 1
        wo = (w + 2 * self.padding - self.kernel_w) // self.stride + 1
        if ho < 1:
            raise ShapeError("kernel larger than padded input", "rows", f">={self.kernel_h}", h + 2 * self.padding)
        if wo < 1:
            raise ShapeError("kernel larger than padded input", "cols", f">={self.kernel_w}", w + 2 * self.padding)
        return (self.out_channels, ho, wo)

    def param_shapes(self, shape):
        c = shape[0]
        return {"weight": (self.out_channels, c, self.kernel_h, self.kernel_w), "bias": (self.out_channels,)}


@dataclass(frozen=True)
class MaxPool2x2:
    def output_shape(self, shape):
        c, h, w = _image_shape(shape, self)
        if h < 2 or w < 2:
            raise ShapeError("pooling needs at least 2x2 input", "rows" if h < 2 else "cols", ">=2", min(h, w))
        return (c, h // 2, w // 2)

    def param_shapes(self, shape):
        return {}


@dataclass(frozen=True)
class UpSample2x2:
    def output_shape(self, shape):
        c, h, w = _image_shape(shape, self)
        return (c, 2 * h, 2 * w)

    def param_shapes(self, shape):
        return {}


@dataclass(frozen=True)
class ZeroPad:
    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("ZeroPad rows/cols must be positive")

    def output_shape(self, shape):
        c, h, w = _image_shape(shape, self)
        return (c, h + 2 * self.rows, w + 2 * self.cols)

    def param_shapes(self, shape):
        return {}


@dataclass(frozen=True)
class Dense:
    out_units: int

    def __post_init__(self):
        if self.out_units < 1:
            raise ValueError("Dense.out_units must be positive")

    def output_shape(self, shape):
        if len(shape) != 1:
            raise ShapeError("Dense expects a flat input; add Flatten", "rank", 1, len(shape))
        return (self.out_units,)

    def param_shapes(self, shape):
        return {"weight": (self.out_units, shape[0]), "bias": (self.out_units,)}


@dataclass(frozen=True)
class Tanh:
    def output_shape(self, shape):
        return tuple(shape)

    def param_shapes(self, shape):
        return {}


@dataclass(frozen=True)
class Dropout:
    rate: float

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ValueError("Dropout.rate must lie in [0, 1)")

    def output_shape(self, shape):
        return tuple(shape)

    def param_shapes(self, shape):
        return {}


@dataclass(frozen=True)
class Flatten:
    def output_shape(self, shape):
        return (int(np.prod(shape)),)

    def param_shapes(self, shape):
        return {}


LAYER_KINDS = {cls.__name__: cls for cls in (Conv2D, MaxPool2x2, UpSample2x2, ZeroPad, Dense, Tanh, Dropout, Flatten)}


def _image_shape(shape, layer):
    if len(shape) != 3:
        raise ShapeError(f"{type(layer).__name__} expects a (channels, rows, cols) input", "rank", 3, len(shape))
    return shape


def layer_to_dict(layer) -> dict:
    d = {"kind": type(layer).__name__}
    d.update(layer.__dict__)
    return d


def layer_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("kind")
    if kind not in LAYER_KINDS:
        raise ValueError(f"unknown layer kind {kind!r}")
    return LAYER_KINDS[kind](**d)


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


def _check_rank(x, rank, what):
    if x.ndim != rank:
        raise ShapeError(f"{what} expects rank-{rank} input", "rank", rank, x.ndim)


def _im2col(xp, kh, kw, stride):
    """(N, C, Hp, Wp) -> (N, C*kh*kw, Ho*Wo) patch matrix (a copy)."""
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))  # N, C, Ho', Wo', kh, kw
    win = win[:, :, ::stride, ::stride]
    n, c, ho, wo = win.shape[:4]
    return np.ascontiguousarray(win.transpose(0, 1, 4, 5, 2, 3)).reshape(n, c * kh * kw, ho * wo)


def _pad(x, ph, pw):
    return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x


def conv2d_forward(x, weight, bias, stride=1, padding=0, return_cols=False):
    """Cross-correlation (no kernel flip) of x (N,C,H,W) with weight (F,C,kh,kw).

    With return_cols=True also returns the patch matrix for reuse in backward.
    """
    _check_rank(x, 4, "conv2d")
    if weight.ndim != 4:
        raise ShapeError("conv2d weight must be (out, in, kh, kw)", "rank", 4, weight.ndim)
    if x.shape[1] != weight.shape[1]:
        raise ShapeError("input channels do not match weights", "channels", weight.shape[1], x.shape[1])
    if bias.shape != (weight.shape[0],):
        raise ShapeError("bias length must equal output channels", "out_channels", weight.shape[0], bias.shape)
    f, c, kh, kw = weight.shape
    n, _, h, w = x.shape
    if h + 2 * padding < kh:
        raise ShapeError("kernel larger than padded input", "rows", f">={kh}", h + 2 * padding)
    if w + 2 * padding < kw:
        raise ShapeError("kernel larger than padded input", "cols", f">={kw}", w + 2 * padding)
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    cols = _im2col(_pad(x, padding, padding), kh, kw, stride)
    out = weight.reshape(f, -1) @ cols  # N, F, Ho*Wo
    out += bias[:, None]
    out = out.reshape(n, f, ho, wo)
    return (out, cols) if return_cols else out


def conv2d_backward(grad_out, saved_input, weight, stride=1, padding=0, cols=None):
    """Return (grad_input, grad_weight, grad_bias) for conv2d_forward.

    `cols` is the optional patch matrix returned by the forward pass.
    """
    _check_rank(grad_out, 4, "conv2d_backward")
    x = saved_input
    f, c, kh, kw = weight.shape
    n, _, h, w = x.shape
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    if grad_out.shape != (n, f, ho, wo):
        names = ["batch", "channels", "rows", "cols"]
        axis = next((names[i] for i, (a, b) in enumerate(zip(grad_out.shape, (n, f, ho, wo))) if a != b), "rank")
        raise ShapeError("upstream gradient does not match forward output", axis, (n, f, ho, wo), grad_out.shape)
    if cols is None:
        cols = _im2col(_pad(x, padding, padding), kh, kw, stride)
    g = grad_out.reshape(n, f, ho * wo)
    grad_weight = np.matmul(g, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
    grad_bias = g.sum(axis=(0, 2))
    if stride == 1 and padding <= min(kh, kw) - 1:
        # full correlation of the upstream gradient with the flipped kernel
        wflip = np.ascontiguousarray(weight[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
        gcols = _im2col(_pad(grad_out, kh - 1 - padding, kw - 1 - padding), kh, kw, 1)
        grad_input = (wflip.reshape(c, -1) @ gcols).reshape(n, c, h, w)
        return grad_input, grad_weight, grad_bias
    gcols = (weight.reshape(f, -1).T @ g).reshape(n, c, kh, kw, ho, wo)
    gxp = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=np.result_type(grad_out, weight))
    hspan = stride * (ho - 1) + 1
    wspan = stride * (wo - 1) + 1
    for i in range(kh):
        for j in range(kw):
            gxp[:, :, i:i + hspan:stride, j:j + wspan:stride] += gcols[:, :, i, j]
    grad_input = gxp[:, :, padding:padding + h, padding:padding + w] if padding else gxp
    return np.ascontiguousarray(grad_input), grad_weight, grad_bias


def maxpool2x2_forward(x):
    """2x2/stride-2 max pooling; odd trailing rows/cols are dropped.

    Returns the pooled array and the flat within-window argmax (0..3) per output.
    """
    _check_rank(x, 4, "maxpool2x2")
    n, c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    win = x[:, :, :2 * h2, :2 * w2].reshape(n, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, idx


def maxpool2x2_backward(grad_out, indices, input_shape):
    n, c, h, w = input_shape
    h2, w2 = h // 2, w // 2
    if grad_out.shape != (n, c, h2, w2):
        raise ShapeError("upstream gradient does not match pooled output", "shape", (n, c, h2, w2), grad_out.shape)
    win = np.zeros((n, c, h2, w2, 4), dtype=grad_out.dtype)
    np.put_along_axis(win, indices[..., None], grad_out[..., None], axis=-1)
    grad = np.zeros(input_shape, dtype=grad_out.dtype)
    grad[:, :, :2 * h2, :2 * w2] = win.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * h2, 2 * w2)
    return grad


def upsample2x2(x):
    """Nearest-neighbour 2x replication along both spatial axes."""
    _check_rank(x, 4, "upsample2x2")
    return x.repeat(2, axis=2).repeat(2, axis=3)


def upsample2x2_backward(grad_out):
    n, c, h, w = grad_out.shape
    return grad_out.reshape(n, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


def zeropad(x, rows, cols):
    _check_rank(x, 4, "zeropad")
    return np.pad(x, ((0, 0), (0, 0), (rows, rows), (cols, cols)))


def zeropad_backward(grad_out, rows, cols):
    return grad_out[:, :, rows:grad_out.shape[2] - rows, cols:grad_out.shape[3] - cols]


def dense_forward(x, weight, bias):
    """y = x W^T + b for x of shape (N, D_in) and W of shape (D_out, D_in)."""
    _check_rank(x, 2, "dense")
    if x.shape[1] != weight.shape[1]:
        raise ShapeError("input length does not match weights", "features", weight.shape[1], x.shape[1])
    return x @ weight.T + bias


def dense_backward(grad_out, saved_input, weight):
    if grad_out.shape != (saved_input.shape[0], weight.shape[0]):
        raise ShapeError("upstream gradient does not match dense output", "features", weight.shape[0], grad_out.shape)
    return grad_out @ weight, grad_out.T @ saved_input, grad_out.sum(axis=0)


def tanh_forward(x):
    return np.tanh(x)


def tanh_backward(grad_out, saved_output):
    return grad_out * (1.0 - saved_output * saved_output)


def dropout_forward(x, rate, rng=None, training=True):
    """Inverted dropout. Returns (output, mask); mask is None when inactive."""
    if not training or rate == 0.0:
        return x, None
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    keep = rng.random(x.shape) >= rate
    mask = keep.astype(x.dtype) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(grad_out, mask):
    return grad_out if mask is None else grad_out * mask
