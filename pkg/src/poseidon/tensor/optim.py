"""SGD with a step-halving schedule, and Adadelta."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import ModelState


@dataclass
class OptimizerConfig:
    kind: str = "sgd"  # "sgd" | "adadelta"
    learning_rate: float = 0.1
    halve_every_epochs: int = 15
    adadelta_rho: float = 0.95
    adadelta_eps: float = 1e-6
    minibatch_size: int = 32

    def __post_init__(self):
        if self.kind not in ("sgd", "adadelta"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        # 0 is allowed: a frozen run is a useful no-op check
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if not 0.0 < self.adadelta_rho < 1.0:
            raise ValueError("adadelta_rho must lie in (0, 1)")
        if self.minibatch_size < 1:
            raise ValueError("minibatch_size must be >= 1")
        if self.halve_every_epochs < 1:
            raise ValueError("halve_every_epochs must be >= 1")


def learning_rate_at(config: OptimizerConfig, epoch: int) -> float:
    return config.learning_rate * 2.0 ** -(epoch // config.halve_every_epochs)


def _check_keys(params, grads, keys):
    missing = [k for k in keys if k not in grads]
    if missing:
        raise KeyError(f"missing gradient for {missing}")
    for k in keys:
        if grads[k].shape != params[k].shape:
            raise ValueError(f"gradient shape {grads[k].shape} != parameter shape {params[k].shape} for {k}")


def sgd_step(state: ModelState, grads: dict, config: OptimizerConfig, epoch: int, keys=None) -> ModelState:
    """In-place p <- p - lr(epoch) * g over `keys` (default: all parameters)."""
    keys = list(state.params) if keys is None else list(keys)
    _check_keys(state.params, grads, keys)
    lr = learning_rate_at(config, epoch)
    for k in keys:
        state.params[k] -= lr * grads[k]
    return state


def adadelta_step(state: ModelState, grads: dict, config: OptimizerConfig, keys=None) -> ModelState:
    """Adadelta; the step is scaled by `learning_rate` (use 1.0 for the textbook rule)."""
    keys = list(state.params) if keys is None else list(keys)
    _check_keys(state.params, grads, keys)
    rho, eps = config.adadelta_rho, config.adadelta_eps
    for k in keys:
        g = grads[k]
        slot = state.slots.get(k)
        if slot is None:
            slot = state.slots[k] = {"sq_grad": np.zeros_like(g), "sq_update": np.zeros_like(g)}
        slot["sq_grad"] *= rho
        slot["sq_grad"] += (1 - rho) * g * g
        update = -np.sqrt(slot["sq_update"] + eps) / np.sqrt(slot["sq_grad"] + eps) * g
        slot["sq_update"] *= rho
        slot["sq_update"] += (1 - rho) * update * update
        state.params[k] += config.learning_rate * update
    return state


def optimizer_step(state, grads, config: OptimizerConfig, epoch: int, keys=None) -> ModelState:
    if config.kind == "sgd":
        return sgd_step(state, grads, config, epoch, keys)
    return adadelta_step(state, grads, config, keys)
