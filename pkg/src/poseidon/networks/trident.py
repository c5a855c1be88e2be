"""Three-stream pose regressor: depth, face-from-depth and motion trunks joined by fusion."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..tensor import Dense, Dropout, Flatten, ModelState, NetworkSpec, Tanh, backward, forward, init_state
from ..tensor.layers import ShapeError
from .builders import POSE_OUTPUTS, trunk_length
from .fusion import fusion_backward, fusion_forward, fusion_output_channels, fusion_param_shapes

STREAMS = ("depth", "ffd", "motion")


@dataclass
class TridentModel:
    branches: dict  # stream -> (trunk NetworkSpec, ModelState)
    kind: str
    fusion: ModelState
    head_spec: NetworkSpec
    head: ModelState
    scales: np.ndarray = field(default_factory=lambda: np.array([100.0, 70.0, 125.0]))

    def trainable_keys(self):
        return [f"fusion/{k}" for k in self.fusion.params] + [f"head/{k}" for k in self.head.params]


def build_head(in_shape, fc=(128, 84), dropout=0.5) -> NetworkSpec:
    layers = [Flatten()]
    for units in fc:
        layers += [Dense(units), Tanh(), Dropout(dropout)]
    layers += [Dense(POSE_OUTPUTS), Tanh()]
    return NetworkSpec("poseidon-head", in_shape, layers)


def assemble_poseidon(branches: dict, kind: str = "conv+concat", seed: int = 0, scales=None,
                      head_fc=(128, 84), dropout=0.5) -> TridentModel:
    """Cut each trained branch before its FC part and join the trunks with a fusion stage and a fresh head.

    `branches` maps "depth", "ffd", "motion" to (full branch NetworkSpec, ModelState).
    The branch states are copied, never aliased.
    """
    missing = [s for s in STREAMS if s not in branches]
    if missing:
        raise ValueError(f"missing branches: {missing}")
    trunks = {}
    for s in STREAMS:
        spec, state = branches[s]
        n = trunk_length(spec)
        trunk = spec.truncated(n, f"{s}-trunk")
        keep = set(trunk.param_shapes())
        trunks[s] = (trunk, ModelState({k: v.copy() for k, v in state.params.items() if k in keep}))
    out_shapes = [trunks[s][0].output_shape for s in STREAMS]
    hw = {sh[1:] for sh in out_shapes}
    if len(hw) != 1:
        raise ShapeError("branch feature maps must share spatial dims", "spatial", out_shapes[0][1:], out_shapes)
    channels = [sh[0] for sh in out_shapes]
    c_out = fusion_output_channels(kind, channels)
    rng = np.random.default_rng(seed)
    fparams = {}
    for k, shape in fusion_param_shapes(kind, channels).items():
        if k.endswith("bias"):
            fparams[k] = np.zeros(shape)
        else:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            fparams[k] = rng.uniform(-limit, limit, size=shape)
    head_spec = build_head((c_out,) + out_shapes[0][1:], head_fc, dropout)
    head = init_state(head_spec, seed + 1)
    sc = np.asarray(scales if scales is not None else [100.0, 70.0, 125.0], dtype=float)
    return TridentModel(trunks, kind, ModelState(fparams), head_spec, head, sc)


def branch_features(model: TridentModel, inputs):
    """Trunk outputs for (depth, ffd, motion) inputs (inference mode)."""
    return [forward(model.branches[s][0], model.branches[s][1], x)[0] for s, x in zip(STREAMS, inputs)]


def head_forward(model: TridentModel, feats, training=False, rng=None):
    fused, fcache = fusion_forward(model.kind, feats, model.fusion.params)
    out, htape = forward(model.head_spec, model.head, fused, training, rng)
    return out, (feats, fcache, htape)


def head_backward(model: TridentModel, tape, grad):
    """Gradients of fusion + head params (keys prefixed) and of the three trunk outputs."""
    feats, fcache, htape = tape
    hgrads, gfused = backward(model.head_spec, model.head, htape, grad)
    gfeats, fgrads = fusion_backward(model.kind, feats, fcache, gfused, model.fusion.params)
    grads = {f"head/{k}": v for k, v in hgrads.items()}
    grads.update({f"fusion/{k}": v for k, v in fgrads.items()})
    return grads, gfeats


def trident_forward(model: TridentModel, inputs, training=False, rng=None):
    tapes, feats = [], []
    for s, x in zip(STREAMS, inputs):
        y, t = forward(model.branches[s][0], model.branches[s][1], x, training, rng)
        feats.append(y)
        tapes.append(t)
    out, htape = head_forward(model, feats, training, rng)
    return out, (tapes, htape)


def trident_backward(model: TridentModel, tape, grad):
    """Full reverse pass, including branch parameters (keys "branch/<stream>/<param>")."""
    tapes, htape = tape
    grads, gfeats = head_backward(model, htape, grad)
    for s, t, g in zip(STREAMS, tapes, gfeats):
        bgrads, _ = backward(model.branches[s][0], model.branches[s][1], t, g)
        grads.update({f"branch/{s}/{k}": v for k, v in bgrads.items()})
    return grads


def trident_params(model: TridentModel) -> dict:
    """Flat view {prefixed key: array} over every parameter (arrays are shared, not copied)."""
    out = {f"head/{k}": v for k, v in model.head.params.items()}
    out.update({f"fusion/{k}": v for k, v in model.fusion.params.items()})
    for s in STREAMS:
        out.update({f"branch/{s}/{k}": v for k, v in model.branches[s][1].params.items()})
    return out


def branch_digests(model: TridentModel) -> dict:
    return {s: model.branches[s][1].digest() for s in STREAMS}


def predict_pose(model: TridentModel, inputs, batch_size=64) -> np.ndarray:
    """Pose in degrees, (N, 3) ordered pitch, roll, yaw."""
    n = len(inputs[0])
    outs = []
    for i in range(0, n, batch_size):
        out, _ = trident_forward(model, [x[i:i + batch_size] for x in inputs])
        outs.append(out)
    if not outs:
        return np.zeros((0, 3))
    return np.concatenate(outs) * model.scales
