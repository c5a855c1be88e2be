"""Architecture builders for the localization, branch and face-from-depth nets."""
from __future__ import annotations

from ..tensor import Conv2D, Dense, Dropout, Flatten, MaxPool2x2, NetworkSpec, Tanh, UpSample2x2, ZeroPad

LOCNET_INPUT = (132, 160)  # rows, cols
BRANCH_SIZE = 64
BRANCH_FILTERS = (32, 32, 32, 32, 128)
BRANCH_KERNELS = (5, 4, 3, 3, 3)
BRANCH_FC = (128, 84)
POSE_OUTPUTS = 3


def build_locnet(rows=LOCNET_INPUT[0], cols=LOCNET_INPUT[1], filters=(16, 32, 32, 64), kernels=(5, 3, 3, 3),
                 fc=(128, 64), dropout=0.5) -> NetworkSpec:
    """Conv+pool x4, then a dropout-regularized FC head emitting a normalized (x, y)."""
    layers = []
    for f, k in zip(filters, kernels):
        layers += [Conv2D(f, k, k, 1, k // 2), Tanh(), MaxPool2x2()]
    layers.append(Flatten())
    for units in fc:
        layers += [Dense(units), Tanh(), Dropout(dropout)]
    layers += [Dense(2), Tanh()]
    return NetworkSpec("locnet", (1, rows, cols), layers)


def branch_trunk_layers(filters=BRANCH_FILTERS, kernels=BRANCH_KERNELS, n_pool=3):
    layers = []
    for i, (f, k) in enumerate(zip(filters, kernels)):
        layers += [Conv2D(f, k, k, 1, k // 2), Tanh()]
        if i < n_pool:
            layers.append(MaxPool2x2())
    return layers


def build_branch_net(in_channels=1, size=BRANCH_SIZE, filters=BRANCH_FILTERS, kernels=BRANCH_KERNELS,
                     fc=BRANCH_FC, name=None) -> NetworkSpec:
    """Five-conv pose regressor (pooling after the first three) with an FC 128-84-3 head."""
    if in_channels not in (1, 2):
        raise ValueError("branch nets take 1 (depth/appearance) or 2 (flow) channels")
    layers = branch_trunk_layers(filters, kernels)
    layers.append(Flatten())
    for units in fc:
        layers += [Dense(units), Tanh()]
    layers += [Dense(POSE_OUTPUTS), Tanh()]
    return NetworkSpec(name or f"branch{in_channels}", (in_channels, size, size), layers)


def trunk_length(spec: NetworkSpec) -> int:
    """Number of leading layers before the flatten/FC part."""
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Flatten):
            return i
    return len(spec.layers)


def build_ffd_net(size=64, filters=32, kernel=3, n_coding=7) -> NetworkSpec:
    """Encoder-decoder: 7 coding + 7 decoding convs and a final FC emitting size*size values.

    Coding convs 1 and 2 are unpadded and each followed by a 1-pixel zero pad,
    so the only resolution change is the single pool after conv 2, undone by
    the up-sampling after conv 13. The last conv collapses to one channel to
    keep the final FC at size^2 x size^2.
    """
    pad = kernel // 2
    layers = []
    for i in range(2 * n_coding):
        last = i == 2 * n_coding - 1
        out = 1 if last else filters
        if i < 2:
            layers += [Conv2D(out, kernel, kernel, 1, 0), Tanh(), ZeroPad(pad, pad)]
            if i == 1:
                layers.append(MaxPool2x2())
        else:
            layers += [Conv2D(out, kernel, kernel, 1, pad), Tanh()]
        if i == 2 * n_coding - 2:
            layers.append(UpSample2x2())
    layers += [Flatten(), Dense(size * size), Tanh()]
    return NetworkSpec("ffd", (1, size, size), layers)


def conv_filters(spec: NetworkSpec) -> tuple:
    return tuple(layer.out_channels for layer in spec.layers if isinstance(layer, Conv2D))
