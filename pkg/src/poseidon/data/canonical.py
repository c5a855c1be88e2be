"""On-disk dataset: ``index.jsonl`` + 16-bit depth / 8-bit gray graymaps.

One JSON object per line::

    {"id", "depth", "gray", "fx", "fy", "cx", "cy", "d_mm", "pitch", "roll", "yaw",
     "shoulder": {"lsx".."sbz", "s_pitch", "s_roll", "s_yaw"}, "seq", "subject"}

``cx, cy`` is the annotated head centre in pixels. ``shoulder``, ``gray``,
``seq`` and ``subject`` are optional. ``meta.json`` (optional) carries
dataset-level metadata such as the Euler convention.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..geometry import EULER_CONVENTION, CameraIntrinsics, PoseAngles
from .pgm import read_pgm, write_pgm
from .sample import DataError, Sample
from .split import DatasetSplit, make_split

JOINT_KEYS = ("lsx", "lsy", "lsz", "rsx", "rsy", "rsz", "sbx", "sby", "sbz")


def sample_to_record(s: Sample, depth_path: str, gray_path: str | None) -> dict:
    rec = {"id": s.id, "depth": depth_path, "gray": gray_path,
           "fx": float(s.intrinsics.fx), "fy": float(s.intrinsics.fy),
           "cx": float(s.center[0]), "cy": float(s.center[1]), "d_mm": float(s.d_mm),
           "pitch": float(s.pose.pitch), "roll": float(s.pose.roll), "yaw": float(s.pose.yaw)}
    if s.shoulder_joints is not None:
        sh = {k: float(v) for k, v in zip(JOINT_KEYS, np.asarray(s.shoulder_joints, dtype=float).ravel())}
        if s.shoulder_pose is not None:
            sh.update(s_pitch=float(s.shoulder_pose.pitch), s_roll=float(s.shoulder_pose.roll),
                      s_yaw=float(s.shoulder_pose.yaw))
        rec["shoulder"] = sh
    if s.seq is not None:
        rec["seq"] = int(s.seq)
    if s.subject is not None:
        rec["subject"] = int(s.subject)
    return rec


def record_to_sample(rec: dict, root: Path) -> Sample:
    depth = read_pgm(root / rec["depth"])
    gray = read_pgm(root / rec["gray"]) if rec.get("gray") else None
    joints = shoulder_pose = None
    if rec.get("shoulder"):
        sh = rec["shoulder"]
        joints = np.array([sh[k] for k in JOINT_KEYS], dtype=float).reshape(3, 3)
        if "s_pitch" in sh:
            shoulder_pose = PoseAngles(sh["s_pitch"], sh["s_roll"], sh["s_yaw"])
    return Sample(
        id=str(rec["id"]), depth=depth, intrinsics=CameraIntrinsics(rec["fx"], rec["fy"]),
        center=(rec["cx"], rec["cy"]), d_mm=rec["d_mm"], pose=PoseAngles(rec["pitch"], rec["roll"], rec["yaw"]),
        gray=gray, shoulder_joints=joints, shoulder_pose=shoulder_pose, seq=rec.get("seq"),
        subject=rec.get("subject"),
    )


def load_canonical_dataset(root, rule=None):
    """Parse ``root/index.jsonl``. Returns (samples, DatasetSplit)."""
    root = Path(root)
    index = root / "index.jsonl"
    if not index.exists():
        raise DataError(f"{index} not found")
    samples = []
    with open(index, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                sample = record_to_sample(rec, root)
            except (ValueError, KeyError, TypeError, OSError) as e:
                if isinstance(e, DataError):
                    raise
                raise DataError(f"{index}:{lineno}: malformed record ({type(e).__name__}: {e})") from e
            try:
                sample.validate()
            except DataError as e:
                raise DataError(f"{index}:{lineno}: {e}") from None
            samples.append(sample)
    return samples, make_split(samples, rule)


def read_dataset_meta(root) -> dict:
    path = Path(root) / "meta.json"
    if not path.exists():
        return {"euler_convention": EULER_CONVENTION}
    return json.loads(path.read_text(encoding="utf-8"))


def write_canonical(root, samples, meta: dict | None = None) -> None:
    root = Path(root)
    (root / "depth").mkdir(parents=True, exist_ok=True)
    lines = []
    for s in samples:
        dpath = f"depth/{s.id}.pgm"
        write_pgm(root / dpath, np.asarray(s.depth).astype(np.uint16))
        gpath = None
        if s.gray is not None:
            (root / "gray").mkdir(exist_ok=True)
            gpath = f"gray/{s.id}.pgm"
            write_pgm(root / gpath, np.asarray(s.gray).astype(np.uint8))
        lines.append(json.dumps(sample_to_record(s, dpath, gpath), sort_keys=False))
    (root / "index.jsonl").write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    m = {"euler_convention": EULER_CONVENTION}
    m.update(meta or {})
    (root / "meta.json").write_text(json.dumps(m, sort_keys=True, indent=1) + "\n", encoding="utf-8")
