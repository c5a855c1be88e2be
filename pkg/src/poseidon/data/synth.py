"""Parametric head renderer used as a ground-truth oracle.

The head is an ellipsoid with an ellipsoidal nose, the torso a wider
ellipsoid below it. Depth comes from ray casting through a pinhole camera
(depth = z of the first hit), appearance from Lambertian shading of the same
surfaces with two darker eye patches.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..geometry import CameraIntrinsics, PoseAngles, head_distance, pose_to_camera_rotation, shoulder_pose
from .sample import DataError, Sample

HEAD_RANGES = (100.0, 70.0, 125.0)  # |pitch|, |roll|, |yaw| limits
SHOULDER_RANGES = (60.0, 70.0, 60.0)


@dataclass(frozen=True)
class SynthHeadParams:
    head_axes: tuple = (75.0, 95.0, 90.0)  # mm, head-local x (right), y (down), z (back)
    nose_axes: tuple = (12.0, 18.0, 22.0)
    nose_offset: tuple = (0.0, 12.0, -80.0)  # nose centre in head-local coordinates
    eye_offsets: tuple = ((-28.0, -18.0, -78.0), (28.0, -18.0, -78.0))
    head_center: tuple = (0.0, -40.0, 800.0)  # camera coordinates, mm
    pose: PoseAngles = PoseAngles(0.0, 0.0, 0.0)
    fx: float = 180.0
    fy: float = 180.0
    rows: int = 132
    cols: int = 160
    torso_axes: tuple = (190.0, 230.0, 100.0)
    torso_offset: tuple = (0.0, 330.0, 30.0)  # torso centre relative to the head centre, camera coords
    shoulder_pose: PoseAngles = PoseAngles(0.0, 0.0, 0.0)
    # joints in torso-local coordinates; subject's right shoulder at -x
    joint_offsets: tuple = ((170.0, -150.0, 0.0), (-170.0, -150.0, 0.0), (0.0, 200.0, 0.0))
    light: tuple = (0.3, -0.4, -1.0)
    render_torso: bool = True

    def __post_init__(self):
        for name in ("head_axes", "nose_axes", "torso_axes"):
            if min(getattr(self, name)) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.fx <= 0 or self.fy <= 0 or self.rows < 2 or self.cols < 2:
            raise ValueError("camera parameters must be positive")

    @property
    def principal_point(self):
        return ((self.cols - 1) / 2.0, (self.rows - 1) / 2.0)


def _rays(p: SynthHeadParams):
    cx, cy = p.principal_point
    v, u = np.mgrid[0:p.rows, 0:p.cols].astype(float)
    return np.stack([(u - cx) / p.fx, (v - cy) / p.fy, np.ones_like(u)], axis=-1)


def _hit_ellipsoid(rays, center, rot, axes):
    """Nearest ray parameter t (inf where missed) and unit normals in camera coords."""
    axes = np.asarray(axes, dtype=float)
    o = (rot.T @ (-np.asarray(center, dtype=float))) / axes
    d = (rays @ rot) / axes  # rows of rays rotated into the local frame
    a = np.einsum("...i,...i->...", d, d)
    b = 2.0 * d @ o
    c = o @ o - 1.0
    disc = b * b - 4 * a * c
    hit = disc >= 0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    t = (-b - sq) / (2 * a)
    hit &= t > 0
    t = np.where(hit, t, np.inf)
    q = o + np.where(hit, t, 0.0)[..., None] * d
    n_local = q / axes
    n = n_local @ rot.T
    n /= np.maximum(np.linalg.norm(n, axis=-1, keepdims=True), 1e-12)
    return t, n


def render(p: SynthHeadParams):
    """Return (depth_mm float array, gray float array in [0, 1], hit mask of the head)."""
    head_c = np.asarray(p.head_center, dtype=float)
    if head_c[2] - max(p.head_axes) <= 0:
        raise DataError("head must lie in front of the camera")
    rays = _rays(p)
    rh = pose_to_camera_rotation(p.pose)
    surfaces = [(head_c, rh, p.head_axes, "head"),
                (head_c + rh @ np.asarray(p.nose_offset), rh, p.nose_axes, "nose")]
    if p.render_torso:
        rt = pose_to_camera_rotation(p.shoulder_pose)
        surfaces.append((head_c + np.asarray(p.torso_offset), rt, p.torso_axes, "torso"))
    best = np.full(rays.shape[:2], np.inf)
    normal = np.zeros(rays.shape)
    owner = np.full(rays.shape[:2], -1)
    for k, (c, r, axes, _) in enumerate(surfaces):
        t, n = _hit_ellipsoid(rays, c, r, axes)
        closer = t < best
        best = np.where(closer, t, best)
        normal = np.where(closer[..., None], n, normal)
        owner = np.where(closer, k, owner)
    valid = np.isfinite(best)
    depth = np.where(valid, best, 0.0)  # ray z-component is 1, so t is depth
    light = -np.asarray(p.light, dtype=float)
    light /= np.linalg.norm(light)
    # light points from the surface toward the source; normals face the camera (-z)
    lambert = np.clip(normal @ (-light), 0.0, 1.0)
    points = rays * depth[..., None]
    local = (points - head_c) @ rh  # head-local coordinates
    albedo = np.ones(depth.shape)
    for e in p.eye_offsets:
        d2 = np.sum((local - np.asarray(e)) ** 2, axis=-1)
        albedo -= 0.6 * np.exp(-d2 / (2 * 9.0 ** 2)) * (owner <= 1)
    albedo = np.where(owner == 2, 0.6, albedo)
    gray = np.where(valid, 0.15 + 0.85 * albedo * lambert, 0.0)
    return depth, gray, valid & (owner <= 1)


def project(p: SynthHeadParams, point):
    cx, cy = p.principal_point
    x, y, z = point
    return (p.fx * x / z + cx, p.fy * y / z + cy)


def shoulder_joints(p: SynthHeadParams) -> np.ndarray:
    rt = pose_to_camera_rotation(p.shoulder_pose)
    torso_c = np.asarray(p.head_center) + np.asarray(p.torso_offset)
    return np.array([torso_c + rt @ np.asarray(j) for j in p.joint_offsets])


def synth_generate(p: SynthHeadParams, seed: int = 0, sample_id: str = "synth", seq=None, subject=None) -> Sample:
    """Render one annotated frame. `seed` only drives the dither of the 8-bit gray quantization."""
    depth, gray, _ = render(p)
    rng = np.random.default_rng(seed)
    depth_mm = np.round(depth).astype(np.uint16)
    gray8 = np.clip(np.round(gray * 255 + rng.uniform(-0.5, 0.5, gray.shape) * (gray > 0)), 0, 255).astype(np.uint8)
    center = project(p, p.head_center)
    if not (0 <= center[0] < p.cols and 0 <= center[1] < p.rows):
        raise DataError("projected head centre falls outside the frame")
    try:
        d = head_distance(depth_mm, center)
    except ValueError:
        d = float(p.head_center[2])
    joints = shoulder_joints(p)
    return Sample(
        id=sample_id, depth=depth_mm, intrinsics=CameraIntrinsics(p.fx, p.fy), center=center, d_mm=d,
        pose=p.pose, gray=gray8, shoulder_joints=joints, shoulder_pose=shoulder_pose(*joints), seq=seq,
        subject=subject,
    )


@dataclass(frozen=True)
class SynthConfig:
    frames_per_seq: int = 4
    head_ranges: tuple = HEAD_RANGES
    shoulder_ranges: tuple = SHOULDER_RANGES
    pose_fraction: float = 0.5  # fraction of the full ranges actually sampled
    step_deg: float = 3.0  # max per-frame pose change inside a sequence
    step_mm: float = 4.0  # max per-frame translation
    n_subjects: int = 22
    base: SynthHeadParams = field(default_factory=SynthHeadParams)


def _uniform(rng, limits, frac):
    return np.array([rng.uniform(-frac * lim, frac * lim) for lim in limits])


def synth_dataset(count: int, seed: int = 0, config: SynthConfig | None = None) -> list:
    """`count` frames organized as short sequences of smoothly drifting poses."""
    config = config or SynthConfig()
    rng = np.random.default_rng(seed)
    out = []
    seq = 0
    while len(out) < count:
        subject = seq % config.n_subjects
        srng = np.random.default_rng([seed, 7, subject])
        scale = srng.uniform(0.92, 1.08)
        base = replace(config.base, head_axes=tuple(a * scale for a in config.base.head_axes))
        head = _uniform(rng, config.head_ranges, config.pose_fraction)
        sh = _uniform(rng, config.shoulder_ranges, config.pose_fraction * 0.5)
        center = np.array(base.head_center) + np.array([rng.uniform(-60, 60), rng.uniform(-30, 30),
                                                        rng.uniform(-80, 120)])
        for f in range(config.frames_per_seq):
            if len(out) >= count:
                break
            if f:
                head = head + rng.uniform(-config.step_deg, config.step_deg, 3)
                sh = sh + rng.uniform(-config.step_deg / 2, config.step_deg / 2, 3)
                center = center + rng.uniform(-config.step_mm, config.step_mm, 3)
            lim_h = np.asarray(config.head_ranges)
            lim_s = np.asarray(config.shoulder_ranges)
            head = np.clip(head, -lim_h, lim_h)
            sh = np.clip(sh, -lim_s, lim_s)
            p = replace(base, pose=PoseAngles(*map(float, head)), head_center=tuple(map(float, center)),
                        shoulder_pose=PoseAngles(*map(float, sh)))
            sid = f"s{seq:04d}_f{f:03d}"
            out.append(synth_generate(p, seed=int(rng.integers(2**31)), sample_id=sid, seq=seq, subject=subject))
        seq += 1
    return out
