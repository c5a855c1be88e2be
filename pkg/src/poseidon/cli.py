"""Command-line entry point: synth, convert-biwi, train, eval, reconstruct, flow, report."""
from __future__ import annotations

import argparse
import datetime as _dt
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import TARGETS, ConfigError, RunConfig, load_config
from .data import (
    AugmentConfig, DataError, SynthConfig, augment, convert_biwi, crop_resize, load_canonical_dataset, preprocess,
    read_dataset_meta, read_pgm, synth_dataset, write_canonical, write_pgm,
)
from .eval import (
    EvalError, ExperimentOptions, ExperimentResult, angular_errors, config_hash, emit_report, format_table,
    read_report, report_entry, run_experiment,
)
from .flow import FlowParams, farneback_flow, normalize_pair, write_flow
from .geometry import BoundingBox, GeometryError
from .networks import (
    NumericError, assemble_poseidon, build_branch_net, build_ffd_net, build_locnet, train_branch, train_ffd,
    train_locnet, train_poseidon, train_shoulder_net,
)
from .networks.training import normalize_centers, reconstruct_face, to_gray_levels
from .pipeline import (
    HEAD_SCALES, PipelineConfig, ffd_pairs, head_inputs, locnet_inputs, pose_targets, shoulder_inputs,
)
from .system import PoseSystem, check_convention, load_network, load_trident, save_network, save_trident
from .tensor import CheckpointError, OptimizerConfig, init_state, predict

log = logging.getLogger("poseidon")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_CHECKPOINT, EXIT_NUMERIC = 0, 2, 3, 4, 5
BRANCH_TARGETS = ("branch-depth", "branch-ffd", "branch-motion")

# (optimizer, learning rate, minibatch) per target when the config leaves them unset
TARGET_DEFAULTS = {
    "locnet": ("sgd", 0.01, 32),
    "branch-depth": ("sgd", 0.1, 32),
    "branch-ffd": ("sgd", 0.1, 32),
    "branch-motion": ("sgd", 0.1, 32),
    "shoulder": ("sgd", 0.1, 32),
    "poseidon": ("sgd", 0.01, 128),
    "ffd": ("adadelta", 1.0, 32),
}


def pipeline_config(cfg: RunConfig) -> PipelineConfig:
    return PipelineConfig(crop_size=cfg.crop_size, lo_pct=cfg.lo_pct, hi_pct=cfg.hi_pct, jobs=cfg.jobs)


def optimizer_for(cfg: RunConfig, target: str) -> OptimizerConfig:
    kind, lr, batch = TARGET_DEFAULTS[target]
    return OptimizerConfig(kind, lr if cfg.lr is None else cfg.lr, cfg.halve_every,
                           minibatch_size=batch if cfg.batch is None else cfg.batch)


def _timestamp(cfg: RunConfig) -> str:
    if cfg.timestamp:
        return cfg.timestamp
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = (_dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc) if epoch
            else _dt.datetime.now(_dt.timezone.utc))
    return when.strftime("%Y%m%dT%H%M%SZ")


def _dump_config(cfg: RunConfig, command: str) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{command}_config.txt"
    path.write_text(cfg.dump(), encoding="utf-8")
    return path


def _load_split(cfg: RunConfig):
    if not cfg.data:
        raise ConfigError("no dataset given (set data = <dir> or --data)")
    samples, split = load_canonical_dataset(cfg.data, cfg.split)
    by_id = {s.id: s for s in samples}
    return samples, [by_id[i] for i in split.train], [by_id[i] for i in split.test], split


def _augmented(samples, cfg: RunConfig):
    if cfg.augment_copies == 0:
        return list(samples)
    acfg = AugmentConfig(cfg.max_translation, cfg.jitter_mm, (cfg.zoom_min, cfg.zoom_max))
    out = list(samples)
    for k in range(cfg.augment_copies):
        out += [augment(s, acfg, cfg.seed * 1000 + k).with_(id=f"{s.id}~aug{k}", seq=None) for s in samples]
    return out


def _require(paths: dict):
    missing = [f"{name} ({p})" for name, p in paths.items() if not Path(p).exists()]
    if missing:
        raise CheckpointError("missing prerequisite checkpoint(s): " + ", ".join(missing))


def _write_log(cfg: RunConfig, target: str, trace) -> Path:
    path = Path(cfg.out) / f"{target}_train_log.csv"
    path.write_text(f"# config {cfg.hash()} seed {cfg.seed}\n" + trace.to_csv(), encoding="utf-8")
    return path


def cmd_synth(cfg: RunConfig) -> int:
    scfg = SynthConfig(frames_per_seq=cfg.frames_per_seq, pose_fraction=cfg.pose_fraction)
    samples = synth_dataset(cfg.count, cfg.seed, scfg)
    out = Path(cfg.data or cfg.out)
    # `data` is only the destination here, so it stays out of the hash
    h = replace(cfg, data="").hash()
    write_canonical(out, samples, {"source": "synthetic", "seed": cfg.seed, "config_hash": h})
    log.info("wrote %d synthetic samples to %s", len(samples), out)
    return EXIT_OK


def cmd_convert_biwi(cfg: RunConfig, source: str) -> int:
    if not source:
        raise ConfigError("convert-biwi needs --input <biwi root>")
    n = convert_biwi(source, cfg.data or cfg.out)
    log.info("converted %d frames", n)
    return EXIT_OK


def cmd_train(cfg: RunConfig) -> int:
    target = cfg.target
    if target not in TARGETS:
        raise ConfigError(f"train needs --target, one of {', '.join(TARGETS)}")
    if target == "poseidon":
        _require({t: cfg.checkpoint(t) for t in BRANCH_TARGETS} | {"ffd": cfg.checkpoint("ffd")})
    elif target == "branch-ffd":
        _require({"ffd": cfg.checkpoint("ffd")})
    _, train, _, _ = _load_split(cfg)
    if not train:
        raise DataError("training split is empty")
    pcfg = pipeline_config(cfg)
    opt = optimizer_for(cfg, target)
    meta = {"target": target, "config_hash": cfg.hash(), "seed": cfg.seed, "split": cfg.split,
            "scales": list(HEAD_SCALES), "n_train": len(train)}
    _dump_config(cfg, "train")
    size = cfg.crop_size
    if target == "locnet":
        data = _augmented(train, cfg)
        rows, cols = data[0].depth.shape
        x = locnet_inputs(data, pcfg)
        y = normalize_centers(np.array([s.center for s in data]), rows, cols)
        spec = build_locnet(*pcfg.locnet_size, dropout=cfg.dropout)
        state, trace = train_locnet(spec, init_state(spec, cfg.seed), x, y, opt, cfg.epochs, cfg.seed)
    elif target == "ffd":
        x, g = ffd_pairs(_augmented(train, cfg), pcfg)
        if len(x) == 0:
            raise DataError("no samples with appearance images for ffd training")
        spec = build_ffd_net(size)
        state, trace = train_ffd(spec, init_state(spec, cfg.seed), x, g, opt, cfg.epochs, cfg.seed)
    elif target in BRANCH_TARGETS:
        stream = target.split("-")[1]
        data = train if stream == "motion" else _augmented(train, cfg)
        ffd = None
        if stream == "ffd":
            fspec, fstate, _ = load_network(cfg.checkpoint("ffd"), (1, size, size))
            ffd = (fspec, fstate)
        inputs = head_inputs(data, cfg=pcfg, ffd=ffd, with_motion=stream == "motion")
        x = {"depth": inputs.depth, "ffd": inputs.ffd, "motion": inputs.motion}[stream]
        spec = build_branch_net(x.shape[1], size, name=target)
        state, trace = train_branch(spec, init_state(spec, cfg.seed), x, pose_targets([s.pose for s in data]), opt,
                                    cfg.epochs, cfg.seed)
    elif target == "shoulder":
        data = [s for s in _augmented(train, cfg) if s.shoulder_pose is not None]
        if not data:
            raise DataError("no samples with shoulder annotations")
        x = shoulder_inputs(data, pcfg)
        spec = build_branch_net(1, size, name="shoulder")
        state, trace = train_shoulder_net(spec, init_state(spec, cfg.seed), x,
                                          pose_targets([s.shoulder_pose for s in data]), opt, cfg.epochs, cfg.seed)
    else:  # poseidon
        branches = {}
        for t in BRANCH_TARGETS:
            spec, state, _ = load_network(cfg.checkpoint(t))
            branches[t.split("-")[1]] = (spec, state)
        fspec, fstate, _ = load_network(cfg.checkpoint("ffd"), (1, size, size))
        inputs = head_inputs(train, cfg=pcfg, ffd=(fspec, fstate))
        model = assemble_poseidon(branches, cfg.fusion, cfg.seed, HEAD_SCALES, dropout=cfg.dropout)
        model, trace = train_poseidon(model, inputs.streams(), pose_targets([s.pose for s in train]), opt,
                                      cfg.epochs, cfg.seed)
        save_trident(cfg.checkpoint("poseidon"), model, meta, cfg.epochs)
        _write_log(cfg, target, trace)
        return EXIT_OK
    save_network(cfg.checkpoint(target), spec, state, meta, cfg.epochs)
    _write_log(cfg, target, trace)
    return EXIT_OK


def build_system(cfg: RunConfig, dataset_meta: dict) -> PoseSystem:
    size = cfg.crop_size
    need = {"poseidon": cfg.checkpoint("poseidon"), "ffd": cfg.checkpoint("ffd")}
    if not cfg.use_gt_center:
        need["locnet"] = cfg.checkpoint("locnet")
    _require(need)
    trident, tmeta = load_trident(need["poseidon"])
    fspec, fstate, fmeta = load_network(need["ffd"], (1, size, size))
    check_convention(tmeta, dataset_meta, "poseidon checkpoint")
    locnet = None
    if not cfg.use_gt_center:
        lspec, lstate, lmeta = load_network(need["locnet"])
        check_convention(lmeta, dataset_meta, "locnet checkpoint")
        locnet = (lspec, lstate)
    return PoseSystem(trident, (fspec, fstate), locnet, pipeline_config(cfg))


def cmd_eval(cfg: RunConfig) -> int:
    samples, _, test, split = _load_split(cfg)
    if split.rule == "none":
        test = samples
    if not test:
        raise EvalError("evaluation split is empty")
    dmeta = read_dataset_meta(cfg.data)
    system = build_system(cfg, dmeta)
    opts = ExperimentOptions(cfg.use_gt_center, cfg.occlusion, cfg.occlusion_extent, cfg.seed)
    result = run_experiment(system, test, opts)
    name = f"head/{cfg.occlusion}/{'gt-center' if cfg.use_gt_center else 'locnet'}"
    entries = [report_entry(name, result, split.rule, cfg.hash())]
    records = result.records
    if Path(cfg.checkpoint("shoulder")).exists():
        sspec, sstate, smeta = load_network(cfg.checkpoint("shoulder"))
        check_convention(smeta, dmeta, "shoulder checkpoint")
        labelled = [s for s in test if s.shoulder_pose is not None]
        if labelled:
            pred = predict(sspec, sstate, shoulder_inputs(labelled, system.cfg)) * np.array(HEAD_SCALES)
            stats = angular_errors(pred, [s.shoulder_pose for s in labelled])
            entries.append(report_entry("shoulder", ExperimentResult(stats, [], None, opts), split.rule, cfg.hash()))
    _dump_config(cfg, "eval")
    paths = emit_report(cfg.out, entries, cfg.hash(), _timestamp(cfg), records)
    sys.stdout.write(format_table(entries))
    log.info("report written to %s", paths["jsonl"])
    return EXIT_OK


def cmd_reconstruct(cfg: RunConfig, source: str, dest: str) -> int:
    if not source or not dest:
        raise ConfigError("reconstruct needs --input <depth.pgm> and --output <gray.pgm>")
    spec, state, _ = load_network(cfg.checkpoint("ffd"))
    depth = read_pgm(source).astype(float)
    size = spec.input_shape[1:]
    rows, cols = depth.shape
    if (rows, cols) != tuple(size):
        depth = crop_resize(depth, BoundingBox(cols / 2, rows / 2, cols, rows), size)
    x = preprocess(depth, cfg.lo_pct, cfg.hi_pct)[None, None]
    gray = to_gray_levels(reconstruct_face(spec, state, x)[0, 0])
    Path(dest).parent.mkdir(parents=True, exist_ok=True)
    write_pgm(dest, gray)
    return EXIT_OK


def cmd_flow(cfg: RunConfig, frames, dest: str) -> int:
    if len(frames) != 2 or not dest:
        raise ConfigError("flow needs two depth images and --output <file>")
    try:
        a, b = (read_pgm(f) for f in frames)
    except (OSError, ValueError) as e:
        raise DataError(f"cannot read depth image: {e}") from e
    if a.shape != b.shape:
        raise DataError(f"frame shapes differ: {a.shape} vs {b.shape}")
    p = FlowParams()
    flow = farneback_flow(*normalize_pair(a, b), p.levels, p.window, p.iterations, p.sigma, p.avg_window)
    Path(dest).parent.mkdir(parents=True, exist_ok=True)
    write_flow(dest, flow)
    return EXIT_OK


def cmd_report(cfg: RunConfig, sources) -> int:
    if not sources:
        raise ConfigError("report needs one or more report .jsonl files")
    entries = []
    for src in sources:
        try:
            entries += read_report(src)
        except (OSError, ValueError) as e:
            raise DataError(f"cannot read report {src}: {e}") from e
    h = config_hash(entries)
    emit_report(cfg.out, entries, h, _timestamp(cfg))
    sys.stdout.write(format_table(entries))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="poseidon", description=__doc__)
    p.add_argument("command", choices=("synth", "convert-biwi", "train", "eval", "reconstruct", "flow", "report"))
    p.add_argument("paths", nargs="*", help="flow: two depth images; report: report files")
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--data", help="canonical dataset directory")
    p.add_argument("--split", help="split rule: none, biwi, pandora, seq:<ids>, subject:<ids>")
    p.add_argument("--occlusion", help="none, left, top, right, bottom, middle or random")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--use-gt-center", dest="use_gt_center", action="store_true", default=None)
    g.add_argument("--use-locnet", dest="use_gt_center", action="store_false")
    p.add_argument("--jobs", type=int)
    p.add_argument("--target", help=f"train target: {', '.join(TARGETS)}")
    p.add_argument("--count", type=int, help="synth: number of frames")
    p.add_argument("--input", default="", help="convert-biwi: dataset root; reconstruct: depth image")
    p.add_argument("--output", default="", help="reconstruct/flow: output file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _overrides(args) -> dict:
    out = {}
    for item in args.set:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        out[key.strip()] = val
    for key in ("seed", "out", "data", "split", "occlusion", "use_gt_center", "jobs", "target", "count"):
        val = getattr(args, key)
        if val is not None:
            out[key] = val
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, _overrides(args))
        if args.command == "synth":
            return cmd_synth(cfg)
        if args.command == "convert-biwi":
            return cmd_convert_biwi(cfg, args.input)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "eval":
            return cmd_eval(cfg)
        if args.command == "reconstruct":
            return cmd_reconstruct(cfg, args.input, args.output)
        if args.command == "flow":
            return cmd_flow(cfg, args.paths, args.output)
        return cmd_report(cfg, args.paths)
    except ConfigError as e:
        log.error("config error: %s", e)
        return EXIT_CONFIG
    except (DataError, EvalError, GeometryError) as e:
        log.error("data error: %s", e)
        return EXIT_DATA
    except CheckpointError as e:
        log.error("checkpoint error: %s", e)
        return EXIT_CHECKPOINT
    except (NumericError, FloatingPointError) as e:
        log.error("numeric failure: %s", e)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
