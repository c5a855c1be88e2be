"""Whole-framework model bundle and its checkpoint helpers."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import EULER_CONVENTION
from .networks.trident import STREAMS, TridentModel, predict_pose
from .pipeline import PipelineConfig, head_inputs, locate_heads
from .tensor import CheckpointError, ModelState, load_checkpoint, save_checkpoint


def save_network(path, spec, state: ModelState, metadata: dict | None = None, epoch: int = 0) -> None:
    meta = {"euler_convention": EULER_CONVENTION}
    meta.update(metadata or {})
    save_checkpoint(path, {"net": (spec, state)}, epoch, meta)


def load_network(path, expect_input=None):
    """Return (spec, state, metadata) of a single-network checkpoint."""
    models, _, meta = load_checkpoint(path)
    if set(models) != {"net"} or models["net"][0] is None:
        raise CheckpointError(f"{path}: not a single-network checkpoint")
    spec, state = models["net"]
    if expect_input is not None and tuple(spec.input_shape) != tuple(expect_input):
        raise CheckpointError(f"{path}: network expects input {spec.input_shape}, pipeline gives {expect_input}")
    return spec, state, meta


def save_trident(path, model: TridentModel, metadata: dict | None = None, epoch: int = 0) -> None:
    models = {f"{s}-trunk": model.branches[s] for s in STREAMS}
    models["fusion"] = (None, model.fusion)
    models["head"] = (model.head_spec, model.head)
    meta = {"euler_convention": EULER_CONVENTION, "fusion": model.kind, "scales": [float(v) for v in model.scales]}
    meta.update(metadata or {})
    save_checkpoint(path, models, epoch, meta)


def load_trident(path):
    models, _, meta = load_checkpoint(path)
    need = {f"{s}-trunk" for s in STREAMS} | {"fusion", "head"}
    if set(models) != need:
        raise CheckpointError(f"{path}: expected a trident checkpoint with {sorted(need)}, found {sorted(models)}")
    if "fusion" not in meta:
        raise CheckpointError(f"{path}: fusion kind missing from metadata")
    branches = {s: models[f"{s}-trunk"] for s in STREAMS}
    model = TridentModel(branches, meta["fusion"], models["fusion"][1], models["head"][0], models["head"][1],
                         np.asarray(meta["scales"], dtype=float))
    return model, meta


def check_convention(meta: dict, dataset_meta: dict, what: str) -> None:
    a = meta.get("euler_convention")
    b = dataset_meta.get("euler_convention", EULER_CONVENTION)
    if a != b:
        raise CheckpointError(f"{what} was trained under Euler convention {a!r}, dataset declares {b!r}")


@dataclass
class PoseSystem:
    """Localization (optional) -> crops -> appearance + motion -> trident."""
    trident: TridentModel
    ffd: tuple  # (spec, state)
    locnet: tuple | None = None
    cfg: PipelineConfig = field(default_factory=PipelineConfig)

    @property
    def crop_size(self) -> int:
        return self.cfg.crop_size

    def predict(self, samples, use_gt_center=True, occlusions=None, context=None):
        """Poses (N, 3) in degrees and the head centres (N, 2) used for cropping."""
        samples = list(samples)
        if use_gt_center:
            centers = np.array([s.center for s in samples], dtype=float).reshape(-1, 2)
            used = None
        else:
            if self.locnet is None:
                raise CheckpointError("localization requested but no localization net is loaded")
            centers = locate_heads(self.locnet, samples, self.cfg)
            rows, cols = samples[0].depth.shape
            centers = np.clip(centers, 0, [cols - 1, rows - 1])
            used = [tuple(c) for c in centers]
        inputs = head_inputs(samples, used, occlusions, self.cfg, ffd=self.ffd, context=context)
        return predict_pose(self.trident, inputs.streams()), centers
