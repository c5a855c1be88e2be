"""Crop geometry, Euler conversions and the shoulder reference frame.

Angle convention: a pose (pitch, roll, yaw) in degrees maps to the body
rotation ``Rz(yaw) @ Ry(pitch) @ Rx(roll)`` (intrinsic Z-Y'-X''), where the
body axes are X = roll (longitudinal, out of the face), Y = pitch (lateral),
Z = yaw (vertical, up). ``BODY_TO_CAMERA`` relabels those axes into the camera
frame (x right, y down, z forward).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EULER_CONVENTION = "intrinsic Z-Y'-X'' (yaw-pitch-roll); body X=roll->cam -z, Y=pitch->cam +x, Z=yaw->cam -y"

HEAD_RX_MM = 320.0
HEAD_RY_MM = 320.0
SHOULDER_RX_MM = 850.0
SHOULDER_RY_MM = 500.0

# columns: camera coordinates of body X (roll), Y (pitch), Z (yaw)
BODY_TO_CAMERA = np.array([[0.0, 1.0, 0.0],
                           [0.0, 0.0, -1.0],
                           [-1.0, 0.0, 0.0]])

# [N1, -N2, N3] for an upright subject facing the camera: right shoulder at
# camera -x, spine base below (+y)
SHOULDER_NEUTRAL = np.diag([-1.0, -1.0, 1.0])


class GeometryError(ValueError):
    pass


class InvalidDepthError(GeometryError):
    pass


@dataclass(frozen=True)
class PoseAngles:
    pitch: float
    roll: float
    yaw: float

    def as_array(self) -> np.ndarray:
        return np.array([self.pitch, self.roll, self.yaw], dtype=float)

    @classmethod
    def from_array(cls, a) -> "PoseAngles":
        a = np.asarray(a, dtype=float)
        return cls(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise GeometryError("focal lengths must be positive")


@dataclass(frozen=True)
class BoundingBox:
    center_x: float
    center_y: float
    width: float
    height: float

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise GeometryError(f"bounding box needs positive size, got {self.width}x{self.height}")

    @property
    def left(self):
        return self.center_x - self.width / 2

    @property
    def top(self):
        return self.center_y - self.height / 2


def head_bbox(center, intrinsics: CameraIntrinsics, rx=HEAD_RX_MM, ry=HEAD_RY_MM, distance=None) -> BoundingBox:
    """Distance-scaled box: w = fx*rx/D, h = fy*ry/D, centred on `center`."""
    d = distance
    if d is None or not np.isfinite(d) or d <= 0:
        raise InvalidDepthError(f"head distance must be a positive finite value, got {d}")
    return BoundingBox(float(center[0]), float(center[1]), intrinsics.fx * rx / d, intrinsics.fy * ry / d)


def shoulder_bbox(head_box: BoundingBox, intrinsics: CameraIntrinsics, rx=SHOULDER_RX_MM, ry=SHOULDER_RY_MM,
                  distance=None) -> BoundingBox:
    """Neck-centred crop: same x as the head, raised by a quarter head height."""
    return head_bbox((head_box.center_x, head_box.center_y - head_box.height / 4), intrinsics, rx, ry, distance)


def clamp_box(box: BoundingBox, rows: int, cols: int) -> BoundingBox | None:
    """Intersection of the box with the image; None when they do not overlap."""
    x0, y0 = max(box.left, 0.0), max(box.top, 0.0)
    x1, y1 = min(box.left + box.width, float(cols)), min(box.top + box.height, float(rows))
    if x1 <= x0 or y1 <= y0:
        return None
    return BoundingBox((x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0)


def head_distance(depth, center, window: int = 5) -> float:
    """Mean of the nonzero depth values in a window x window patch around center."""
    depth = np.asarray(depth)
    x, y = int(round(center[0])), int(round(center[1]))
    r = window // 2
    patch = depth[max(y - r, 0):y + r + 1, max(x - r, 0):x + r + 1]
    valid = patch[patch > 0]
    if valid.size == 0:
        raise InvalidDepthError(f"no valid depth around ({x}, {y})")
    return float(valid.mean())


# ---------------------------------------------------------------------------
# Rotations
# ---------------------------------------------------------------------------


def _rx(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def _ry(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def _rz(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def euler_to_rotmat(pitch, roll=None, yaw=None) -> np.ndarray:
    if isinstance(pitch, PoseAngles):
        pitch, roll, yaw = pitch.pitch, pitch.roll, pitch.yaw
    p, r, y = np.radians([pitch, roll, yaw])
    return _rz(y) @ _ry(p) @ _rx(r)


def _check_orthonormal(m):
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        raise GeometryError("rotation matrix must be a finite 3x3 array")
    if np.abs(m @ m.T - np.eye(3)).max() > 1e-6:
        raise GeometryError("matrix is not orthonormal within 1e-6")
    return m


def is_gimbal_locked(m, tol_deg: float = 1e-6) -> bool:
    m = _check_orthonormal(m)
    pitch = np.degrees(np.arctan2(-m[2, 0], np.hypot(m[0, 0], m[1, 0])))
    return abs(abs(pitch) - 90.0) < tol_deg


def rotmat_to_euler(m) -> PoseAngles:
    """Inverse of euler_to_rotmat. At gimbal lock roll is set to 0."""
    m = _check_orthonormal(m)
    pitch = np.arctan2(-m[2, 0], np.hypot(m[0, 0], m[1, 0]))
    if is_gimbal_locked(m):
        roll = 0.0
        yaw = np.arctan2(-m[0, 1], m[1, 1])
    else:
        roll = np.arctan2(m[2, 1], m[2, 2])
        yaw = np.arctan2(m[1, 0], m[0, 0])
    return PoseAngles(*(float(v) for v in np.degrees([pitch, roll, yaw])))


def pose_to_camera_rotation(pose: PoseAngles) -> np.ndarray:
    """Rotation of a head/torso with this pose, expressed in camera coordinates."""
    return BODY_TO_CAMERA @ euler_to_rotmat(pose) @ BODY_TO_CAMERA.T


def camera_rotation_to_pose(rc) -> PoseAngles:
    return rotmat_to_euler(BODY_TO_CAMERA.T @ np.asarray(rc) @ BODY_TO_CAMERA)


# ---------------------------------------------------------------------------
# Shoulder frame
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShoulderFrame:
    n1: np.ndarray
    n2: np.ndarray
    n3: np.ndarray

    def matrix(self) -> np.ndarray:
        return np.column_stack([self.n1, self.n2, self.n3])

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.matrix()))


def _unit(v, what):
    n = np.linalg.norm(v)
    if not np.isfinite(n) or n < 1e-9:
        raise GeometryError(f"degenerate shoulder geometry: {what} has zero length")
    return v / n


def shoulder_frame(p_ls, p_rs, p_sb) -> ShoulderFrame:
    """User-centred frame from left shoulder, right shoulder and spine base (mm)."""
    p_ls, p_rs, p_sb = (np.asarray(p, dtype=float) for p in (p_ls, p_rs, p_sb))
    n1 = _unit(p_rs - p_ls, "right - left shoulder")
    u = _unit(p_rs - p_sb, "right shoulder - spine base")
    n3 = _unit(np.cross(n1, u), "N1 x U (joints collinear)")
    n2 = np.cross(n1, n3)
    return ShoulderFrame(n1, n2, n3)


def shoulder_rotation(frame: ShoulderFrame) -> np.ndarray:
    # N2 = N1 x N3 makes the raw frame left-handed; flip N2 to get a rotation
    return np.column_stack([frame.n1, -frame.n2, frame.n3]) @ SHOULDER_NEUTRAL.T


def shoulder_pose(p_ls, p_rs, p_sb) -> PoseAngles:
    return camera_rotation_to_pose(shoulder_rotation(shoulder_frame(p_ls, p_rs, p_sb)))


# ---------------------------------------------------------------------------
# Angle normalization
# ---------------------------------------------------------------------------


class AngleScaler:
    """Per-angle division into [-1, 1]; out-of-range inputs are clamped and counted."""

    def __init__(self, scales):
        self.scales = np.asarray(scales, dtype=float)
        if self.scales.shape != (3,) or np.any(self.scales <= 0):
            raise ValueError("scales must be three positive values")
        self.clamped = 0

    def normalize(self, angles) -> np.ndarray:
        a = np.asarray(angles, dtype=float) / self.scales
        out = np.clip(a, -1.0, 1.0)
        self.clamped += int(np.count_nonzero(out != a))
        return out

    def denormalize(self, values) -> np.ndarray:
        return np.asarray(values, dtype=float) * self.scales


def angle_normalize(angles, scales) -> np.ndarray:
    return AngleScaler(scales).normalize(angles)


def angle_denormalize(values, scales) -> np.ndarray:
    return AngleScaler(scales).denormalize(values)
