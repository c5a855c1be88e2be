"""Recovered versus true translation for the dense flow on smooth random textures.

    python scripts/flow_shift_sweep.py --max-shift 4
"""
import argparse

import numpy as np
from scipy import ndimage

from poseidon.flow import farneback_flow


def texture(seed, size, pad, smooth=3.0):
    big = ndimage.gaussian_filter(np.random.default_rng(seed).normal(size=(size + 2 * pad,) * 2), smooth, mode="wrap")
    return 0.1 + 0.9 * (big - big.min()) / (big.max() - big.min())


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--max-shift", type=float, default=4.0)
    ap.add_argument("--steps", type=int, default=9)
    ap.add_argument("--textures", type=int, default=3)
    ap.add_argument("--border", type=int, default=10, help="pixels ignored at each edge")
    args = ap.parse_args(argv)

    pad = int(np.ceil(args.max_shift)) + 2
    b = args.border
    print(f"{'dx':>6} {'dy':>6} {'mean fx':>8} {'mean fy':>8} {'rmse':>7}")
    for d in np.linspace(0.0, args.max_shift, args.steps):
        for dx, dy in ((d, 0.0), (0.0, d)) if d > 0 else ((0.0, 0.0),):
            est, rmse = [], []
            for seed in range(args.textures):
                big = texture(seed, args.size, pad)
                prev = big[pad:pad + args.size, pad:pad + args.size]
                # content moves by (+dx, +dy): sample the big image at (y - dy, x - dx)
                yy, xx = np.mgrid[pad:pad + args.size, pad:pad + args.size].astype(float)
                nxt = ndimage.map_coordinates(big, [yy - dy, xx - dx], order=3, mode="nearest")
                f = farneback_flow(prev, nxt)[b:-b, b:-b]
                est.append(f.mean(axis=(0, 1)))
                rmse.append(np.sqrt(((f - [dx, dy]) ** 2).sum(axis=-1).mean()))
            fx, fy = np.mean(est, axis=0)
            print(f"{dx:6.2f} {dy:6.2f} {fx:8.3f} {fy:8.3f} {np.mean(rmse):7.3f}")


if __name__ == "__main__":
    main()
