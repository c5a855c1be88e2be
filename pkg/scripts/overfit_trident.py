"""Overfit the full two-step pipeline on a small synthetic set and print the training error.

    python scripts/overfit_trident.py --count 32 --out runs/overfit
"""
import argparse
import time
from pathlib import Path

import numpy as np

from poseidon.data import synth_dataset
from poseidon.networks import (
    STREAMS, assemble_poseidon, branch_digests, build_branch_net, build_ffd_net, predict_pose, train_branch,
    train_ffd, train_poseidon,
)
from poseidon.pipeline import ffd_pairs, head_inputs, pose_targets
from poseidon.system import save_network, save_trident
from poseidon.tensor import OptimizerConfig, init_state


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--count", type=int, default=32)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--ffd-epochs", type=int, default=20)
    ap.add_argument("--branch-epochs", type=int, nargs=3, default=(200, 60, 60), metavar=("DEPTH", "FFD", "MOTION"))
    ap.add_argument("--head-epochs", type=int, default=300)
    ap.add_argument("--fusion", default="conv+concat")
    ap.add_argument("--out", type=Path, default=None, help="optional directory for checkpoints")
    args = ap.parse_args(argv)

    t0 = time.perf_counter()
    lap = lambda msg: print(f"{time.perf_counter() - t0:7.1f}s  {msg}", flush=True)
    samples = synth_dataset(args.count, seed=args.seed)
    y = pose_targets([s.pose for s in samples])
    truth = np.array([s.pose.as_array() for s in samples])

    x, g = ffd_pairs(samples)
    fspec = build_ffd_net()
    fstate, trace = train_ffd(fspec, init_state(fspec, args.seed), x, g, OptimizerConfig("adadelta", 1.0, minibatch_size=8),
                              args.ffd_epochs, seed=args.seed)
    lap(f"ffd loss {trace.losses[0]:.4f} -> {trace.losses[-1]:.4f}")

    inputs = head_inputs(samples, ffd=(fspec, fstate)).streams()
    opts = {"depth": OptimizerConfig("sgd", 0.03, 40, minibatch_size=4)}
    branches = {}
    for s, inp, epochs in zip(STREAMS, inputs, args.branch_epochs):
        spec = build_branch_net(inp.shape[1], name=s)
        opt = opts.get(s, OptimizerConfig("sgd", 0.02, 30, minibatch_size=4))
        state, trace = train_branch(spec, init_state(spec, args.seed), inp, y, opt, epochs, seed=args.seed)
        losses = np.array(trace.losses)
        lap(f"branch {s:6s} loss {losses[0]:.4f} -> {losses[-1]:.5f} (x{losses[0] / losses.min():.0f})")
        branches[s] = (spec, state)

    model = assemble_poseidon(branches, args.fusion, seed=args.seed, dropout=0.0)
    digests = branch_digests(model)
    model, trace = train_poseidon(model, inputs, y, OptimizerConfig("sgd", 0.01, 50, minibatch_size=4),
                                  args.head_epochs, seed=args.seed)
    err = np.abs(predict_pose(model, inputs) - truth).mean(axis=0)
    lap(f"head loss {trace.losses[0]:.4f} -> {trace.losses[-1]:.5f}; branches untouched: "
        f"{digests == branch_digests(model)}")
    print("mean training error (pitch, roll, yaw) deg:", np.round(err, 3).tolist())

    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        save_network(args.out / "ffd.ckpt", fspec, fstate)
        save_trident(args.out / "poseidon.ckpt", model)
        lap(f"checkpoints written to {args.out}")


if __name__ == "__main__":
    main()
