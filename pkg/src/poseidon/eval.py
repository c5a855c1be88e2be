"""Evaluation protocol: angular error statistics, localization error, occlusion masks, reports."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data.augment import sample_seed
from .geometry import EULER_CONVENTION

ACCURACY_THRESHOLD_DEG = 15.0
OCCLUSION_KINDS = ("left", "top", "right", "bottom", "middle")
ANGLES = ("pitch", "roll", "yaw")


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class ErrorStats:
    mean: tuple  # per-angle mean absolute error (deg), pitch/roll/yaw
    std: tuple  # population std
    accuracy: float  # frames with all three errors below the threshold
    angle_accuracy: tuple  # per-angle fraction below the threshold
    n_frames: int

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "ErrorStats":
        return cls(tuple(d["mean"]), tuple(d["std"]), d["accuracy"], tuple(d["angle_accuracy"]), d["n_frames"])


def _as_matrix(poses) -> np.ndarray:
    rows = [p.as_array() if hasattr(p, "as_array") else np.asarray(p, dtype=float) for p in poses]
    return np.array(rows, dtype=float).reshape(len(rows), 3)


def per_frame_errors(preds, truths) -> np.ndarray:
    p, t = _as_matrix(preds), _as_matrix(truths)
    if len(p) != len(t):
        raise EvalError(f"{len(p)} predictions for {len(t)} ground-truth poses")
    if len(p) == 0:
        raise EvalError("no frames to evaluate")
    return np.abs(p - t)


def stats_from_errors(err, threshold=ACCURACY_THRESHOLD_DEG) -> ErrorStats:
    err = np.asarray(err, dtype=float)
    ok = err < threshold
    return ErrorStats(
        mean=tuple(float(v) for v in err.mean(axis=0)),
        std=tuple(float(v) for v in err.std(axis=0)),
        accuracy=float(ok.all(axis=1).mean()),
        angle_accuracy=tuple(float(v) for v in ok.mean(axis=0)),
        n_frames=int(len(err)),
    )


def angular_errors(preds, truths, threshold=ACCURACY_THRESHOLD_DEG) -> ErrorStats:
    return stats_from_errors(per_frame_errors(preds, truths), threshold)


def localization_error(preds, truths):
    """(mean, population std) of Euclidean pixel distances."""
    p = np.asarray(preds, dtype=float).reshape(-1, 2)
    t = np.asarray(truths, dtype=float).reshape(-1, 2)
    if len(p) != len(t):
        raise EvalError(f"{len(p)} predicted centres for {len(t)} annotations")
    if len(p) == 0:
        raise EvalError("no centres to evaluate")
    d = np.hypot(*(p - t).T)
    return float(d.mean()), float(d.std())


# ---------------------------------------------------------------------------
# Occlusion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OcclusionMask:
    kind: str
    mask: np.ndarray  # (R, C) float 0/1, 0 = occluded


def occlusion_mask(kind: str, rows: int, cols: int, extent: float = 0.4) -> OcclusionMask:
    if kind not in OCCLUSION_KINDS:
        raise ValueError(f"unknown occlusion kind {kind!r}")
    if not 0 < extent < 1:
        raise ValueError("extent must lie in (0, 1)")
    m = np.ones((rows, cols))
    er, ec = int(round(extent * rows)), int(round(extent * cols))
    if kind == "left":
        m[:, :ec] = 0
    elif kind == "right":
        m[:, cols - ec:] = 0
    elif kind == "top":
        m[:er, :] = 0
    elif kind == "bottom":
        m[rows - er:, :] = 0
    else:
        r0, c0 = (rows - er) // 2, (cols - ec) // 2
        m[r0:r0 + er, c0:c0 + ec] = 0
    return OcclusionMask(kind, m)


def frame_occlusions(kind, sample_ids, rows, cols, seed=0, extent=0.4) -> list:
    """Per-frame masks; "random" draws one of the fixed kinds per frame from (seed, id)."""
    if kind in (None, "", "none"):
        return [None] * len(sample_ids)
    out = []
    for sid in sample_ids:
        k = kind
        if kind == "random":
            k = OCCLUSION_KINDS[np.random.default_rng(sample_seed(seed, sid)).integers(len(OCCLUSION_KINDS))]
        out.append(occlusion_mask(k, rows, cols, extent))
    return out


def apply_occlusion(crop, mask: OcclusionMask) -> np.ndarray:
    crop = np.asarray(crop)
    if crop.shape[-2:] != mask.mask.shape:
        raise ValueError(f"mask shape {mask.mask.shape} does not match crop {crop.shape}")
    return np.where(mask.mask > 0, crop, 0).astype(crop.dtype)


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentOptions:
    use_gt_center: bool = True
    occlusion: str = "none"
    occlusion_extent: float = 0.4
    seed: int = 0


@dataclass
class ExperimentResult:
    stats: ErrorStats
    records: list  # per-frame dicts in input order
    localization: tuple | None = None  # (mean, std) px when the localization net was used
    options: ExperimentOptions = field(default_factory=ExperimentOptions)


def run_experiment(model, samples, options: ExperimentOptions = ExperimentOptions()) -> ExperimentResult:
    """Evaluate `model` on `samples`.

    `model` needs ``predict(samples, use_gt_center, occlusions) -> (poses (N, 3) deg, centers (N, 2))``
    and a ``crop_size`` attribute for the occlusion masks.
    """
    samples = list(samples)
    if not samples:
        raise EvalError("empty evaluation split")
    size = int(model.crop_size)
    masks = frame_occlusions(options.occlusion, [s.id for s in samples], size, size, options.seed,
                             options.occlusion_extent)
    poses, centers = model.predict(samples, options.use_gt_center, [m.mask if m else None for m in masks])
    poses = np.asarray(poses, dtype=float)
    if not np.all(np.isfinite(poses)):
        raise FloatingPointError("non-finite pose predictions")
    truths = _as_matrix([s.pose for s in samples])
    err = per_frame_errors(poses, truths)
    records = []
    for s, p, t, e, c, m in zip(samples, poses, truths, err, centers, masks):
        records.append({
            "id": s.id, "pred": [float(v) for v in p], "truth": [float(v) for v in t],
            "err": [float(v) for v in e], "ok": bool(np.all(e < ACCURACY_THRESHOLD_DEG)),
            "center": [float(v) for v in c], "occlusion": m.kind if m else "none",
        })
    loc = None
    if not options.use_gt_center:
        loc = localization_error(centers, [s.center for s in samples])
    return ExperimentResult(stats_from_errors(err), records, loc, options)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def report_entry(name: str, result: ExperimentResult, split_rule: str, cfg_hash: str) -> dict:
    entry = {"name": name, "config_hash": cfg_hash, "split": split_rule, "stats": result.stats.to_dict(),
             "options": asdict(result.options), "euler_convention": EULER_CONVENTION, "std": "population"}
    if result.localization is not None:
        entry["localization_px"] = list(result.localization)
    return entry


def format_table(entries) -> str:
    lines = [f"# euler convention: {EULER_CONVENTION}",
             f"# errors in degrees, mean +- population std; accuracy threshold {ACCURACY_THRESHOLD_DEG:g} deg",
             ""]
    head = ["experiment", "pitch", "roll", "yaw", "acc(frame)", "acc(p/r/y)", "loc(px)", "n"]
    rows = []
    for e in entries:
        st = ErrorStats.from_dict(e["stats"])
        loc = e.get("localization_px")
        rows.append([e["name"]] + [f"{m:.2f} +- {s:.2f}" for m, s in zip(st.mean, st.std)] + [
            f"{st.accuracy:.3f}", "/".join(f"{a:.3f}" for a in st.angle_accuracy),
            f"{loc[0]:.2f} +- {loc[1]:.2f}" if loc else "gt", str(st.n_frames)])
    widths = [max(len(r[i]) for r in [head] + rows) for i in range(len(head))]
    fmt = lambda r: "  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()
    lines += [fmt(head), fmt(["-" * w for w in widths])] + [fmt(r) for r in rows]
    return "\n".join(lines) + "\n"


def emit_report(out_dir, entries, cfg_hash: str, timestamp: str, records=None) -> dict:
    """Write ``report_<hash>_<timestamp>.jsonl`` and ``.txt`` (plus per-frame records if given).

    File contents depend only on `entries` and `records`; the timestamp only
    appears in the file names.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        stem = out / f"report_{cfg_hash}_{timestamp}"
        paths = {"jsonl": stem.with_suffix(".jsonl"), "table": stem.with_suffix(".txt")}
        paths["jsonl"].write_text("".join(json.dumps(e, sort_keys=True) + "\n" for e in entries), encoding="utf-8")
        paths["table"].write_text(format_table(entries), encoding="utf-8")
        if records is not None:
            paths["records"] = out / f"records_{cfg_hash}_{timestamp}.jsonl"
            paths["records"].write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in records),
                                        encoding="utf-8")
    except OSError as e:
        raise EvalError(f"cannot write report to {out}: {e}") from e
    return paths


def read_report(path) -> list:
    return [json.loads(line) for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]
