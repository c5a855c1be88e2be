"""Best-effort converter for the Biwi Kinect head pose layout.

Expected tree::

    <root>/<NN>/depth.cal
    <root>/<NN>/frame_XXXXX_depth.bin
    <root>/<NN>/frame_XXXXX_pose.txt

Depth files are read as: int32 width, int32 height, then runs of
(int32 n_empty, int32 n_full, n_full int16 values) until width*height pixels
are filled. Everything here is checked loudly because the layout is not
formally documented; any mismatch raises DataError rather than guessing.
"""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from ..geometry import CameraIntrinsics, camera_rotation_to_pose, head_distance
from .canonical import write_canonical
from .sample import DataError, Sample

BIWI_SIZE = (640, 480)


def read_biwi_depth(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise DataError(f"{path}: too short for a depth header")
    width, height = (int(v) for v in np.frombuffer(raw[:8], dtype="<i4"))
    if (width, height) != BIWI_SIZE:
        raise DataError(f"{path}: decoded size {width}x{height}, expected {BIWI_SIZE[0]}x{BIWI_SIZE[1]}")
    total = width * height
    out = np.zeros(total, dtype=np.uint16)
    p, off = 0, 8
    while p < total:
        if off + 8 > len(raw):
            raise DataError(f"{path}: truncated run header at pixel {p}")
        empty, full = (int(v) for v in np.frombuffer(raw[off:off + 8], dtype="<i4"))
        off += 8
        if empty < 0 or full < 0 or p + empty + full > total or off + 2 * full > len(raw):
            raise DataError(f"{path}: corrupt run ({empty}, {full}) at pixel {p}")
        p += empty
        vals = np.frombuffer(raw[off:off + 2 * full], dtype="<i2")
        if np.any(vals < 0):
            raise DataError(f"{path}: negative depth values")
        out[p:p + full] = vals
        p += full
        off += 2 * full
    if off != len(raw):
        raise DataError(f"{path}: {len(raw) - off} trailing bytes after the last run")
    return out.reshape(height, width)


def write_biwi_depth(path, depth) -> None:
    """Inverse of read_biwi_depth; used for fixtures."""
    depth = np.asarray(depth, dtype=np.int16)
    h, w = depth.shape
    flat = depth.ravel()
    chunks = [np.array([w, h], dtype="<i4").tobytes()]
    p = 0
    while p < flat.size:
        q = p
        while q < flat.size and flat[q] == 0:
            q += 1
        r = q
        while r < flat.size and flat[r] != 0:
            r += 1
        chunks.append(np.array([q - p, r - q], dtype="<i4").tobytes())
        chunks.append(flat[q:r].astype("<i2").tobytes())
        p = r
    Path(path).write_bytes(b"".join(chunks))


def read_calibration(path) -> np.ndarray:
    """First three rows of the calibration file: the 3x3 intrinsic matrix."""
    try:
        rows = [[float(v) for v in line.split()] for line in Path(path).read_text().splitlines() if line.strip()]
        k = np.array(rows[:3], dtype=float)
    except (ValueError, OSError) as e:
        raise DataError(f"{path}: unreadable calibration ({e})") from None
    if k.shape != (3, 3) or k[0, 0] <= 0 or k[1, 1] <= 0:
        raise DataError(f"{path}: calibration does not start with a valid 3x3 intrinsic matrix")
    if abs(k[0, 2] - BIWI_SIZE[0] / 2) > BIWI_SIZE[0] / 4 or abs(k[1, 2] - BIWI_SIZE[1] / 2) > BIWI_SIZE[1] / 4:
        raise DataError(f"{path}: principal point {k[0, 2]}, {k[1, 2]} inconsistent with a 640x480 frame")
    return k


def read_pose(path):
    """(3x3 rotation, head centre in mm) from a pose text file."""
    try:
        vals = [float(v) for v in Path(path).read_text().split()]
    except (ValueError, OSError) as e:
        raise DataError(f"{path}: unreadable pose ({e})") from None
    if len(vals) != 12:
        raise DataError(f"{path}: expected 12 numbers, got {len(vals)}")
    return np.array(vals[:9]).reshape(3, 3), np.array(vals[9:])


def _iter_biwi(seq_dirs, counter):
    for d in seq_dirs:
        k = read_calibration(d / "depth.cal")
        intr = CameraIntrinsics(k[0, 0], k[1, 1])
        for dpath in sorted(d.glob("frame_*_depth.bin")):
            frame = dpath.name[:-len("_depth.bin")]
            rot, t = read_pose(d / f"{frame}_pose.txt")
            if t[2] <= 0:
                raise DataError(f"{dpath}: head centre behind the camera")
            depth = read_biwi_depth(dpath)
            cx = k[0, 0] * t[0] / t[2] + k[0, 2]
            cy = k[1, 1] * t[1] / t[2] + k[1, 2]
            # annotations use the rotation as stored; its axis convention is not
            # independently verified, see the README recipe
            pose = camera_rotation_to_pose(rot)
            try:
                dist = head_distance(depth, (cx, cy))
            except ValueError:
                dist = float(t[2])
            counter[0] += 1
            yield Sample(id=f"{d.name}_{frame}", depth=depth, intrinsics=intr, center=(cx, cy),
                         d_mm=dist, pose=pose, seq=int(d.name)).validate()


def convert_biwi(root, out) -> int:
    """Convert every sequence under `root` into a canonical dataset; returns the sample count.

    Frames are streamed to disk one at a time, so memory does not grow with the dataset.
    """
    root = Path(root)
    seq_dirs = sorted(d for d in root.iterdir() if d.is_dir() and re.fullmatch(r"\d+", d.name))
    if not seq_dirs:
        raise DataError(f"{root}: no numbered sequence directories")
    counter = [0]
    write_canonical(out, _iter_biwi(seq_dirs, counter),
                    {"source": "biwi", "principal_point_note": "cx, cy are head centres"})
    return counter[0]
