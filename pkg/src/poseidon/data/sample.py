from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..geometry import CameraIntrinsics, PoseAngles


class DataError(ValueError):
    """Malformed or inconsistent dataset content."""


@dataclass
class Sample:
    id: str
    depth: np.ndarray  # (rows, cols) uint16 millimetres, 0 = invalid
    intrinsics: CameraIntrinsics
    center: tuple  # head centre (x, y) in pixels
    d_mm: float  # head distance
    pose: PoseAngles
    gray: np.ndarray | None = None  # (rows, cols) uint8
    shoulder_joints: np.ndarray | None = None  # (3, 3): left shoulder, right shoulder, spine base (mm)
    shoulder_pose: PoseAngles | None = None
    seq: int | None = None
    subject: int | None = None
    extra: dict = field(default_factory=dict)

    def validate(self) -> "Sample":
        if self.depth.ndim != 2:
            raise DataError(f"{self.id}: depth must be 2-D")
        if np.any(self.depth < 0):
            raise DataError(f"{self.id}: negative depth values")
        rows, cols = self.depth.shape
        x, y = self.center
        if not (0 <= x < cols and 0 <= y < rows):
            raise DataError(f"{self.id}: head centre ({x}, {y}) outside the {cols}x{rows} frame")
        if self.gray is not None and self.gray.shape != self.depth.shape:
            raise DataError(f"{self.id}: gray and depth shapes differ")
        if not (np.isfinite(self.d_mm) and self.d_mm > 0):
            raise DataError(f"{self.id}: head distance must be positive")
        return self

    def with_(self, **kw) -> "Sample":
        return replace(self, **kw)
