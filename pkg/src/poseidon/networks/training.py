"""Minibatch training loops for every network in the framework."""
from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field

import numpy as np

from ..losses import POSE_LOSS_WEIGHTS, ffd_loss, gaussian_mask, l2_loss, weighted_l2
from ..tensor import ModelState, NetworkSpec, OptimizerConfig, backward, forward, learning_rate_at, predict
from ..tensor.optim import optimizer_step
from .trident import TridentModel, branch_features, head_backward, head_forward

log = logging.getLogger(__name__)


class NumericError(ArithmeticError):
    """Raised when a loss or gradient becomes NaN/Inf."""


@dataclass
class TrainTrace:
    epochs: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    lrs: list = field(default_factory=list)

    def add(self, epoch, loss, lr):
        self.epochs.append(epoch)
        self.losses.append(loss)
        self.lrs.append(lr)

    def to_csv(self) -> str:
        lines = ["epoch,loss,lr"]
        lines += [f"{e},{loss:.10g},{lr:.10g}" for e, loss, lr in zip(self.epochs, self.losses, self.lrs)]
        return "\n".join(lines) + "\n"


def _check_finite(loss, epoch):
    if not np.isfinite(loss):
        raise NumericError(f"non-finite loss at epoch {epoch}")


def _minibatches(n, batch, rng):
    order = rng.permutation(n)
    return [order[i:i + batch] for i in range(0, n, batch)]


def train_network(spec: NetworkSpec, state: ModelState, x, y, loss_fn, config: OptimizerConfig, epochs: int,
                  seed: int = 0):
    """Generic loop. Returns (new state, TrainTrace); `state` is not modified."""
    x = np.asarray(x)
    y = np.asarray(y)
    if len(x) == 0:
        raise ValueError("empty training set")
    state = state.copy()
    state.training = True
    rng = np.random.default_rng(seed)
    drop_rng = np.random.default_rng([seed, 1])
    trace = TrainTrace()
    for epoch in range(epochs):
        total = 0.0
        for idx in _minibatches(len(x), config.minibatch_size, rng):
            out, tape = forward(spec, state, x[idx], training=True, rng=drop_rng)
            loss, g = loss_fn(out, y[idx])
            _check_finite(loss, epoch)
            grads, _ = backward(spec, state, tape, g)
            optimizer_step(state, grads, config, epoch)
            total += loss * len(idx)
        lr = learning_rate_at(config, epoch) if config.kind == "sgd" else config.learning_rate
        trace.add(epoch, total / len(x), lr)
        log.debug("%s epoch %d loss %.6g lr %.4g", spec.name, epoch, total / len(x), lr)
    state.training = False
    return state, trace


def _pose_loss(weights):
    return lambda out, y: weighted_l2(out, y, weights)


def train_branch(spec, state, inputs, targets, config: OptimizerConfig | None = None, epochs: int = 60,
                 seed: int = 0, weights=POSE_LOSS_WEIGHTS):
    """Pose regression on normalized angle targets with the weighted loss and SGD."""
    config = config or OptimizerConfig("sgd", 0.1, 15, minibatch_size=32)
    return train_network(spec, state, inputs, targets, _pose_loss(weights), config, epochs, seed)


train_shoulder_net = train_branch


def train_locnet(spec, state, frames, centers, config: OptimizerConfig | None = None, epochs: int = 60,
                 seed: int = 0):
    """Plain L2 on normalized (x, y) head centres."""
    config = config or OptimizerConfig("sgd", 0.1, 15, minibatch_size=32)
    return train_network(spec, state, frames, centers, l2_loss, config, epochs, seed)


def train_ffd(spec, state, depth_crops, gray_targets, config: OptimizerConfig | None = None, epochs: int = 60,
              seed: int = 0, alpha=3.5, beta=2.5):
    """Adadelta on the Gaussian-weighted reconstruction loss; targets in [-1, 1], shape (N, R*C)."""
    config = config or OptimizerConfig("adadelta", 1.0, minibatch_size=32)
    r, c = spec.input_shape[1:]
    mask = gaussian_mask(r, c, alpha, beta)
    targets = np.asarray(gray_targets).reshape(len(gray_targets), -1)
    return train_network(spec, state, depth_crops, targets, lambda o, t: ffd_loss(o, t, mask), config, epochs, seed)


def train_poseidon(model: TridentModel, inputs, targets, config: OptimizerConfig | None = None, epochs: int = 60,
                   seed: int = 0, weights=POSE_LOSS_WEIGHTS):
    """Second training step: branch trunks frozen, only fusion and head are updated.

    Returns (new TridentModel, TrainTrace). Branch states are shared with the
    input model and never written.
    """
    config = config or OptimizerConfig("sgd", 0.1, 15, minibatch_size=128)
    targets = np.asarray(targets)
    if len(targets) == 0:
        raise ValueError("empty training set")
    feats = branch_features(model, inputs)
    new = TridentModel(model.branches, model.kind, model.fusion.copy(), model.head_spec, model.head.copy(),
                       model.scales.copy())
    view = ModelState({f"head/{k}": v for k, v in new.head.params.items()})
    view.params.update({f"fusion/{k}": v for k, v in new.fusion.params.items()})
    rng = np.random.default_rng(seed)
    drop_rng = np.random.default_rng([seed, 1])
    trace = TrainTrace()
    for epoch in range(epochs):
        total = 0.0
        for idx in _minibatches(len(targets), config.minibatch_size, rng):
            out, tape = head_forward(new, [f[idx] for f in feats], training=True, rng=drop_rng)
            loss, g = weighted_l2(out, targets[idx], weights)
            _check_finite(loss, epoch)
            grads, _ = head_backward(new, tape, g)
            optimizer_step(view, grads, config, epoch)
            total += loss * len(idx)
        lr = learning_rate_at(config, epoch) if config.kind == "sgd" else config.learning_rate
        trace.add(epoch, total / len(targets), lr)
    return new, trace


def normalize_centers(centers, rows, cols):
    """Pixel (x, y) -> [-1, 1]^2 using pixel-centre coordinates."""
    c = np.asarray(centers, dtype=float)
    return np.stack([2 * (c[..., 0] + 0.5) / cols - 1, 2 * (c[..., 1] + 0.5) / rows - 1], axis=-1)


def denormalize_centers(values, rows, cols):
    v = np.asarray(values, dtype=float)
    return np.stack([(v[..., 0] + 1) * cols / 2 - 0.5, (v[..., 1] + 1) * rows / 2 - 0.5], axis=-1)


def predict_head_center(spec, state, frames, frame_rows, frame_cols):
    """Head centres in pixels of the original frame from locnet inputs (N, 1, r, c)."""
    return denormalize_centers(predict(spec, state, frames), frame_rows, frame_cols)


def reconstruct_face(spec, state, depth_crops):
    """Gray appearance in [-1, 1] with the crop's spatial shape."""
    depth_crops = np.asarray(depth_crops)
    out = predict(spec, state, depth_crops)
    return out.reshape((len(depth_crops),) + spec.input_shape)


def to_gray_levels(img):
    return np.clip(np.round((np.asarray(img) + 1.0) * 127.5), 0, 255).astype(np.uint8)


def copy_model(model: TridentModel) -> TridentModel:
    return copy.deepcopy(model)
