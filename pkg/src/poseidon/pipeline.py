"""From annotated frames to network inputs: crops, appearance reconstruction and motion images."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data.preprocess import crop_resize, gray_to_unit, preprocess
from .data.sample import Sample
from .flow import FlowParams, farneback_flow, flow_to_branch_input, normalize_pair
from .geometry import (
    HEAD_RX_MM, HEAD_RY_MM, SHOULDER_RX_MM, SHOULDER_RY_MM, AngleScaler, BoundingBox, InvalidDepthError, head_bbox,
    head_distance, shoulder_bbox,
)
from .networks.builders import LOCNET_INPUT
from .networks.training import predict_head_center, reconstruct_face

HEAD_SCALES = (100.0, 70.0, 125.0)  # pitch, roll, yaw normalization


@dataclass(frozen=True)
class PipelineConfig:
    crop_size: int = 64
    head_rx: float = HEAD_RX_MM
    head_ry: float = HEAD_RY_MM
    shoulder_rx: float = SHOULDER_RX_MM
    shoulder_ry: float = SHOULDER_RY_MM
    lo_pct: float = 2.0
    hi_pct: float = 98.0
    flow: FlowParams = field(default_factory=FlowParams)
    flow_clip: float = 8.0
    locnet_size: tuple = LOCNET_INPUT
    scales: tuple = HEAD_SCALES
    jobs: int = 1


def _map(fn, items, jobs):
    if jobs <= 1 or len(items) < 2:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(jobs) as ex:
        return list(ex.map(fn, items))  # results stay in input order


def frame_distance(sample: Sample, center) -> float:
    """Head distance read from the depth map, falling back to the median valid depth."""
    try:
        return head_distance(sample.depth, center)
    except (ValueError, InvalidDepthError):
        valid = sample.depth[sample.depth > 0]
        if valid.size == 0:
            raise InvalidDepthError(f"{sample.id}: frame has no valid depth") from None
        return float(np.median(valid))


def head_box(sample: Sample, center=None, cfg: PipelineConfig = PipelineConfig()) -> BoundingBox:
    if center is None:
        return head_bbox(sample.center, sample.intrinsics, cfg.head_rx, cfg.head_ry, sample.d_mm)
    return head_bbox(center, sample.intrinsics, cfg.head_rx, cfg.head_ry, frame_distance(sample, center))


def raw_crop(depth, box: BoundingBox, cfg: PipelineConfig, occlusion=None) -> np.ndarray:
    """Depth crop in mm at crop_size, optionally multiplied by a 0/1 occlusion mask."""
    c = crop_resize(depth, box, (cfg.crop_size, cfg.crop_size))
    if occlusion is not None:
        c = c * occlusion
    return c


def motion_image(prev_crop, crop, cfg: PipelineConfig) -> np.ndarray:
    """(2, S, S) flow input from two raw depth crops; zeros when there is no previous frame."""
    if prev_crop is None:
        return np.zeros((2, cfg.crop_size, cfg.crop_size))
    a, b = normalize_pair(prev_crop, crop)
    fp = cfg.flow
    flow = farneback_flow(a, b, fp.levels, fp.window, fp.iterations, fp.sigma, fp.avg_window)
    return flow_to_branch_input(flow, cfg.flow_clip)


def previous_frames(samples) -> list:
    """Index of the preceding frame of the same sequence in `samples`, or None."""
    last = {}
    out = []
    for i, s in enumerate(samples):
        out.append(last.get(s.seq) if s.seq is not None else None)
        if s.seq is not None:
            last[s.seq] = i
    return out


@dataclass
class HeadInputs:
    depth: np.ndarray  # (N, 1, S, S) preprocessed
    raw: np.ndarray  # (N, S, S) depth crops in mm
    motion: np.ndarray  # (N, 2, S, S)
    boxes: list
    ffd: np.ndarray | None = None  # (N, 1, S, S) reconstructed appearance

    def streams(self):
        return [self.depth, self.ffd, self.motion]


def head_inputs(samples, centers=None, occlusions=None, cfg: PipelineConfig = PipelineConfig(),
                ffd=None, with_motion: bool = True, context=None) -> HeadInputs:
    """Build the three stream inputs for `samples`.

    `centers` overrides the annotated head centres (e.g. predictions of the
    localization net). `occlusions` is an optional list of per-frame 0/1
    masks (or None entries) applied to the raw crops. `ffd` is a
    (spec, state) pair for appearance reconstruction. `context` lists extra
    frames searched for the motion predecessor (defaults to `samples`).
    """
    samples = list(samples)
    n = len(samples)
    centers = [None] * n if centers is None else list(centers)
    occlusions = [None] * n if occlusions is None else list(occlusions)
    boxes = [head_box(s, c, cfg) for s, c in zip(samples, centers)]
    raw = np.array([raw_crop(s.depth, b, cfg, o) for s, b, o in zip(samples, boxes, occlusions)]).reshape(
        n, cfg.crop_size, cfg.crop_size)
    depth = np.array([preprocess(c, cfg.lo_pct, cfg.hi_pct) for c in raw]).reshape(n, 1, cfg.crop_size,
                                                                                   cfg.crop_size)
    if with_motion:
        pool = list(context) if context is not None else samples
        pos = {id(s): i for i, s in enumerate(pool)}
        prev_idx = previous_frames(pool)
        prev = []
        for s in samples:
            j = prev_idx[pos[id(s)]] if id(s) in pos else None
            prev.append(None if j is None else pool[j])

        def one(k):
            if prev[k] is None:
                return motion_image(None, None, cfg)
            pc = raw_crop(prev[k].depth, boxes[k], cfg, occlusions[k])
            return motion_image(pc, raw[k], cfg)

        motion = np.array(_map(one, list(range(n)), cfg.jobs)).reshape(n, 2, cfg.crop_size, cfg.crop_size)
    else:
        motion = np.zeros((n, 2, cfg.crop_size, cfg.crop_size))
    out = HeadInputs(depth, raw, motion, boxes)
    if ffd is not None:
        out.ffd = appearance_inputs(reconstruct_face(ffd[0], ffd[1], depth), cfg) if n else np.zeros_like(depth)
    return out


def appearance_inputs(recon, cfg: PipelineConfig = PipelineConfig()) -> np.ndarray:
    """Reconstructed gray crops normalized like the depth stream (every pixel counts as valid)."""
    recon = np.asarray(recon, dtype=float)
    ones = np.ones(recon.shape[-2:], dtype=bool)
    return np.array([preprocess(r[0], cfg.lo_pct, cfg.hi_pct, ones) for r in recon]).reshape(recon.shape)


def ffd_pairs(samples, cfg: PipelineConfig = PipelineConfig()):
    """(preprocessed depth crops (N,1,S,S), gray targets in [-1,1] (N,S,S)) for samples with appearance."""
    samples = [s for s in samples if s.gray is not None]
    boxes = [head_box(s, None, cfg) for s in samples]
    size = (cfg.crop_size, cfg.crop_size)
    x = np.array([preprocess(raw_crop(s.depth, b, cfg), cfg.lo_pct, cfg.hi_pct) for s, b in zip(samples, boxes)])
    y = np.array([gray_to_unit(crop_resize(s.gray, b, size, mask_invalid=False)) for s, b in zip(samples, boxes)])
    return x.reshape((len(samples), 1) + size), y.reshape((len(samples),) + size)


def locnet_inputs(samples, cfg: PipelineConfig = PipelineConfig()) -> np.ndarray:
    """Whole frames resized to the localization net resolution and normalized, (N, 1, r, c)."""
    r, c = cfg.locnet_size
    out = []
    for s in samples:
        rows, cols = s.depth.shape
        full = BoundingBox(cols / 2, rows / 2, cols, rows)
        out.append(preprocess(crop_resize(s.depth, full, (r, c)), cfg.lo_pct, cfg.hi_pct))
    return np.array(out).reshape(len(out), 1, r, c)


def locate_heads(locnet, samples, cfg: PipelineConfig = PipelineConfig()) -> np.ndarray:
    """Predicted head centres (N, 2) in frame pixels; frames of one dataset share a size."""
    if not samples:
        return np.zeros((0, 2))
    rows, cols = samples[0].depth.shape
    return predict_head_center(locnet[0], locnet[1], locnet_inputs(samples, cfg), rows, cols)


def shoulder_inputs(samples, cfg: PipelineConfig = PipelineConfig(), occlusions=None) -> np.ndarray:
    """Neck-centred depth crops, rectangular box resized to S x S, (N, 1, S, S)."""
    out = []
    occlusions = [None] * len(samples) if occlusions is None else occlusions
    for s, o in zip(samples, occlusions):
        hb = head_box(s, None, cfg)
        box = shoulder_bbox(hb, s.intrinsics, cfg.shoulder_rx, cfg.shoulder_ry, s.d_mm)
        out.append(preprocess(raw_crop(s.depth, box, cfg, o), cfg.lo_pct, cfg.hi_pct))
    return np.array(out).reshape(len(out), 1, cfg.crop_size, cfg.crop_size)


def pose_targets(poses, scales=HEAD_SCALES) -> np.ndarray:
    """(N, 3) normalized pitch, roll, yaw targets in [-1, 1]."""
    arr = np.array([p.as_array() if hasattr(p, "as_array") else p for p in poses], dtype=float).reshape(-1, 3)
    return AngleScaler(scales).normalize(arr)
