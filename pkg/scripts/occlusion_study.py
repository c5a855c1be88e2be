"""Per-angle error of a trained model under each occlusion pattern on held-out synthetic frames.

    python scripts/occlusion_study.py --model runs/overfit --count 64
"""
import argparse
from pathlib import Path

from poseidon.data import synth_dataset
from poseidon.eval import OCCLUSION_KINDS, ExperimentOptions, format_table, report_entry, run_experiment
from poseidon.system import PoseSystem, load_network, load_trident


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--model", type=Path, required=True, help="directory with ffd.ckpt and poseidon.ckpt")
    ap.add_argument("--count", type=int, default=64)
    ap.add_argument("--seed", type=int, default=1, help="synthetic test-set seed (0 is the overfit training set)")
    ap.add_argument("--extent", type=float, default=0.4)
    args = ap.parse_args(argv)

    fspec, fstate, _ = load_network(args.model / "ffd.ckpt")
    trident, _ = load_trident(args.model / "poseidon.ckpt")
    system = PoseSystem(trident, (fspec, fstate))
    test = synth_dataset(args.count, seed=args.seed)
    entries = []
    for kind in ("none",) + OCCLUSION_KINDS + ("random",):
        result = run_experiment(system, test, ExperimentOptions(occlusion=kind, occlusion_extent=args.extent))
        entries.append(report_entry(f"occlusion={kind}", result, f"synth seed {args.seed}", "-"))
    print(format_table(entries), end="")


if __name__ == "__main__":
    main()
