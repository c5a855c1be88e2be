"""Declarative layer sequences, their learned state, and tape-based autodiff."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import layers as L
from .layers import ShapeError


@dataclass
class NetworkSpec:
    name: str
    input_shape: tuple
    layers: list = field(default_factory=list)

    def __post_init__(self):
        self.input_shape = tuple(int(s) for s in self.input_shape)
        if any(s < 1 for s in self.input_shape):
            raise ShapeError("input shape entries must be positive", "input", ">0", self.input_shape)
        self.shapes()  # fail at build time if layers do not compose

    def shapes(self) -> list:
        """Per-layer output shapes (batch axis excluded); element 0 is the input."""
        out = [self.input_shape]
        for i, layer in enumerate(self.layers):
            try:
                out.append(tuple(layer.output_shape(out[-1])))
            except ShapeError as e:
                raise ShapeError(f"{self.name}: {type(layer).__name__} does not fit its input {out[-1]}",
                                 e.axis, e.expected, e.got, layer=i) from None
        return out

    @property
    def output_shape(self) -> tuple:
        return self.shapes()[-1]

    @property
    def output_dim(self) -> int:
        return int(np.prod(self.output_shape))

    def param_shapes(self) -> dict:
        shapes = self.shapes()
        out = {}
        for i, layer in enumerate(self.layers):
            for pname, pshape in layer.param_shapes(shapes[i]).items():
                out[f"{i}.{pname}"] = tuple(pshape)
        return out

    def truncated(self, n_layers: int, name: str | None = None) -> "NetworkSpec":
        return NetworkSpec(name or f"{self.name}[:{n_layers}]", self.input_shape, list(self.layers[:n_layers]))

    def to_dict(self) -> dict:
        return {"name": self.name, "input_shape": list(self.input_shape),
                "layers": [L.layer_to_dict(layer) for layer in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(d["name"], tuple(d["input_shape"]), [L.layer_from_dict(x) for x in d["layers"]])


@dataclass
class ModelState:
    params: dict
    slots: dict = field(default_factory=dict)
    training: bool = False

    def copy(self) -> "ModelState":
        return ModelState({k: v.copy() for k, v in self.params.items()},
                          {k: {n: s.copy() for n, s in v.items()} for k, v in self.slots.items()},
                          self.training)

    def digest(self) -> str:
        """SHA-256 over parameter names, shapes and raw bytes."""
        h = hashlib.sha256()
        for k in sorted(self.params):
            v = np.ascontiguousarray(self.params[k])
            h.update(k.encode())
            h.update(str(v.shape).encode())
            h.update(v.tobytes())
        return h.hexdigest()


def init_state(spec: NetworkSpec, seed: int = 0, dtype=np.float64) -> ModelState:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for key, shape in spec.param_shapes().items():
        if key.endswith(".bias"):
            params[key] = np.zeros(shape, dtype=dtype)
            continue
        if len(shape) == 4:
            receptive = shape[2] * shape[3]
            fan_in, fan_out = shape[1] * receptive, shape[0] * receptive
        else:
            fan_in, fan_out = shape[1], shape[0]
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params[key] = rng.uniform(-limit, limit, size=shape).astype(dtype)
    return ModelState(params)


def forward(spec: NetworkSpec, state: ModelState, x, training: bool = False, rng=None):
    """Run the layer sequence on a batch. Returns (output, tape)."""
    x = np.asarray(x)
    if x.shape[1:] != spec.input_shape:
        got = x.shape[1:]
        axis = "rank" if len(got) != len(spec.input_shape) else next(
            i for i, (a, b) in enumerate(zip(got, spec.input_shape)) if a != b)
        raise ShapeError(f"{spec.name}: input does not match declared shape", str(axis), spec.input_shape, got)
    if training and rng is None:
        rng = np.random.default_rng(0)
    elif isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    tape = []
    p = state.params
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, L.Conv2D):
            xin = x
            x, cols = L.conv2d_forward(x, p[f"{i}.weight"], p[f"{i}.bias"], layer.stride, layer.padding,
                                       return_cols=True)
            tape.append((xin, cols) if training else (xin, None))
        elif isinstance(layer, L.Dense):
            tape.append(x)
            x = L.dense_forward(x, p[f"{i}.weight"], p[f"{i}.bias"])
        elif isinstance(layer, L.MaxPool2x2):
            shape = x.shape
            x, idx = L.maxpool2x2_forward(x)
            tape.append((idx, shape))
        elif isinstance(layer, L.UpSample2x2):
            tape.append(None)
            x = L.upsample2x2(x)
        elif isinstance(layer, L.ZeroPad):
            tape.append(None)
            x = L.zeropad(x, layer.rows, layer.cols)
        elif isinstance(layer, L.Tanh):
            x = L.tanh_forward(x)
            tape.append(x)
        elif isinstance(layer, L.Dropout):
            x, mask = L.dropout_forward(x, layer.rate, rng, training)
            tape.append(mask)
        elif isinstance(layer, L.Flatten):
            tape.append(x.shape)
            x = x.reshape(x.shape[0], -1)
        else:  # pragma: no cover
            raise TypeError(f"unsupported layer {layer!r}")
    return x, tape


def backward(spec: NetworkSpec, state: ModelState, tape, grad_out):
    """Reverse pass over a tape. Returns (grads keyed like params, grad wrt input)."""
    grads = {}
    g = grad_out
    p = state.params
    for i in range(len(spec.layers) - 1, -1, -1):
        layer, saved = spec.layers[i], tape[i]
        if isinstance(layer, L.Conv2D):
            xin, cols = saved
            g, grads[f"{i}.weight"], grads[f"{i}.bias"] = L.conv2d_backward(
                g, xin, p[f"{i}.weight"], layer.stride, layer.padding, cols)
        elif isinstance(layer, L.Dense):
            g, grads[f"{i}.weight"], grads[f"{i}.bias"] = L.dense_backward(g, saved, p[f"{i}.weight"])
        elif isinstance(layer, L.MaxPool2x2):
            idx, shape = saved
            g = L.maxpool2x2_backward(g, idx, shape)
        elif isinstance(layer, L.UpSample2x2):
            g = L.upsample2x2_backward(g)
        elif isinstance(layer, L.ZeroPad):
            g = L.zeropad_backward(g, layer.rows, layer.cols)
        elif isinstance(layer, L.Tanh):
            g = L.tanh_backward(g, saved)
        elif isinstance(layer, L.Dropout):
            g = L.dropout_backward(g, saved)
        elif isinstance(layer, L.Flatten):
            g = g.reshape(saved)
    return grads, g


def predict(spec: NetworkSpec, state: ModelState, x, batch_size: int = 64):
    """Inference-mode forward in fixed-size chunks."""
    x = np.asarray(x)
    outs = [forward(spec, state, x[i:i + batch_size])[0] for i in range(0, len(x), batch_size)]
    if not outs:
        return np.zeros((0,) + spec.output_shape)
    return np.concatenate(outs, axis=0)
