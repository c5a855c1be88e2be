"""Run configuration: a flat key = value file plus command-line overrides."""
from __future__ import annotations

import typing
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .eval import config_hash

TARGETS = ("locnet", "branch-depth", "branch-ffd", "branch-motion", "ffd", "poseidon", "shoulder")
# keys that change where or how fast things run, never what is computed
_VOLATILE = ("out", "jobs", "timestamp")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    data: str = ""
    out: str = "runs"
    split: str = "none"
    seed: int = 0
    target: str = ""
    # training
    epochs: int = 30
    lr: typing.Optional[float] = None  # None: per-target default
    batch: typing.Optional[int] = None
    halve_every: int = 15
    fusion: str = "conv+concat"
    dropout: float = 0.5
    # augmentation (single-frame targets only)
    augment_copies: int = 0
    max_translation: int = 8
    jitter_mm: float = 5.0
    zoom_min: float = 0.85
    zoom_max: float = 1.2
    # preprocessing
    crop_size: int = 64
    lo_pct: float = 2.0
    hi_pct: float = 98.0
    # evaluation
    occlusion: str = "none"
    occlusion_extent: float = 0.4
    use_gt_center: bool = True
    # checkpoints; empty means <out>/<target>.ckpt
    ffd_ckpt: str = ""
    locnet_ckpt: str = ""
    poseidon_ckpt: str = ""
    branch_depth_ckpt: str = ""
    branch_ffd_ckpt: str = ""
    branch_motion_ckpt: str = ""
    shoulder_ckpt: str = ""
    # synthetic data
    count: int = 64
    frames_per_seq: int = 4
    pose_fraction: float = 0.5
    # misc
    jobs: int = 1
    timestamp: str = ""

    def validate(self) -> "RunConfig":
        if self.target and self.target not in TARGETS:
            raise ConfigError(f"unknown target {self.target!r}; choose from {', '.join(TARGETS)}")
        if self.epochs < 0 or self.count < 0 or self.augment_copies < 0:
            raise ConfigError("epochs, count and augment_copies must be non-negative")
        if self.lr is not None and self.lr < 0:
            raise ConfigError("lr must be non-negative")
        if self.batch is not None and self.batch < 1:
            raise ConfigError("batch must be >= 1")
        if not 0 <= self.lo_pct < self.hi_pct <= 100:
            raise ConfigError("need 0 <= lo_pct < hi_pct <= 100")
        if not 0 < self.zoom_min <= self.zoom_max:
            raise ConfigError("need 0 < zoom_min <= zoom_max")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.occlusion not in ("none", "left", "top", "right", "bottom", "middle", "random"):
            raise ConfigError(f"unknown occlusion kind {self.occlusion!r}")
        if not 0 < self.occlusion_extent < 1:
            raise ConfigError("occlusion_extent must lie in (0, 1)")
        if self.jobs < 1 or self.crop_size < 8:
            raise ConfigError("jobs must be >= 1 and crop_size >= 8")
        if not 0 < self.pose_fraction <= 1 or self.frames_per_seq < 1:
            raise ConfigError("pose_fraction must lie in (0, 1] and frames_per_seq be >= 1")
        return self

    def checkpoint(self, target: str) -> Path:
        explicit = getattr(self, target.replace("-", "_") + "_ckpt")
        return Path(explicit) if explicit else Path(self.out) / f"{target}.ckpt"

    def as_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        return config_hash({k: v for k, v in asdict(self).items() if k not in _VOLATILE})

    def dump(self) -> str:
        lines = [f"# config hash {self.hash()}"]
        for k, v in sorted(asdict(self).items()):
            lines.append(f"{k} = {'' if v is None else v}")
        return "\n".join(lines) + "\n"


_HINTS = typing.get_type_hints(RunConfig)


def _convert(key, text):
    hint = _HINTS[key]
    optional = typing.get_origin(hint) is typing.Union
    base = [a for a in typing.get_args(hint) if a is not type(None)][0] if optional else hint
    text = text.strip()
    if optional and text in ("", "none", "auto"):
        return None
    try:
        if base is bool:
            low = text.lower()
            if low not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError(text)
            return low in ("1", "true", "yes")
        return base(text)
    except ValueError:
        raise ConfigError(f"bad value {text!r} for {key} (expected {base.__name__})") from None


def parse_pairs(lines, source="config") -> dict:
    out = {}
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep:
            raise ConfigError(f"{source}:{n}: expected key = value")
        if key not in _HINTS:
            raise ConfigError(f"{source}:{n}: unknown key {key!r}")
        out[key] = _convert(key, val)
    return out


def load_config(path=None, overrides=None) -> RunConfig:
    """File values over defaults, then `overrides` (already typed or strings) over both."""
    values = {}
    if path:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {p} not found")
        values.update(parse_pairs(p.read_text(encoding="utf-8").splitlines(), str(p)))
    for k, v in (overrides or {}).items():
        k = k.replace("-", "_")
        if k not in _HINTS:
            raise ConfigError(f"unknown key {k!r}")
        values[k] = _convert(k, v) if isinstance(v, str) else v
    cfg = RunConfig(**values)
    known = {f.name for f in fields(RunConfig)}
    assert set(values) <= known
    return cfg.validate()
