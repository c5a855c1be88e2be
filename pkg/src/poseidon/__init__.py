"""Depth-based head and shoulder pose estimation: localization, face-from-depth
reconstruction and three-stream pose regression on a small numpy engine."""

__version__ = "0.1.0"
