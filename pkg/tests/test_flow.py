import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import ndimage

from poseidon.flow import (
    FlowParams, farneback_flow, flow_to_branch_input, normalize_pair, polynomial_expansion, read_flow, write_flow,
)

MARGIN = 10


def texture(seed, size=64, smooth=3.0, pad=8):
    """Band-limited noise in [0.1, 1]; returned with `pad` extra pixels per side for exact shifts."""
    rng = np.random.default_rng(seed)
    big = ndimage.gaussian_filter(rng.normal(size=(size + 2 * pad, size + 2 * pad)), smooth, mode="wrap")
    big = (big - big.min()) / (big.max() - big.min())
    return 0.1 + 0.9 * big


def shifted_pair(seed, dx, dy, size=64, pad=8):
    big = texture(seed, size, pad=pad)
    prev = big[pad:pad + size, pad:pad + size]
    # content at p in prev appears at p + (dx, dy) in next
    nxt = big[pad - dy:pad - dy + size, pad - dx:pad - dx + size]
    return prev, nxt


def interior(flow):
    return flow[MARGIN:-MARGIN, MARGIN:-MARGIN]


def test_expansion_constant_and_ramp():
    e = polynomial_expansion(np.full((20, 20), 0.7))
    inner = (slice(5, -5), slice(5, -5))
    assert np.abs(e.A[inner]).max() < 1e-8 and np.abs(e.b[inner]).max() < 1e-8
    assert np.allclose(e.c[inner], 0.7)
    x = np.arange(20.0)[None, :].repeat(20, 0)
    e = polynomial_expansion(2 * x)
    assert np.abs(e.b[inner] - [2, 0]).max() < 1e-6 and np.abs(e.A[inner]).max() < 1e-6


def test_expansion_translation_equivariant():
    img = texture(0, 32, pad=0)
    e1 = polynomial_expansion(img)
    e2 = polynomial_expansion(np.roll(img, (3, 2), axis=(0, 1)))
    assert np.allclose(e1.b[5:20, 5:20], e2.b[8:23, 7:22], atol=1e-9)
    assert np.allclose(e1.A[5:20, 5:20], e2.A[8:23, 7:22], atol=1e-9)


def test_expansion_errors():
    with pytest.raises(ValueError):
        polynomial_expansion(np.zeros((4, 4)), window=7)
    with pytest.raises(ValueError):
        FlowParams(window=4)
    with pytest.raises(ValueError):
        farneback_flow(np.zeros((16, 16)), np.zeros((16, 17)))


def test_identical_frames_zero_flow():
    img = texture(1)
    assert np.abs(farneback_flow(img, img)).max() < 1e-3


def test_shift_recovered():
    prev, nxt = shifted_pair(2, 2, 0)
    f = interior(farneback_flow(prev, nxt))
    assert np.abs(f[..., 0].mean() - 2) < 0.25 and np.abs(f[..., 1].mean()) < 0.25


def test_forward_backward_consistency():
    prev, nxt = shifted_pair(3, 1, -1)
    fw = interior(farneback_flow(prev, nxt)).mean(axis=(0, 1))
    bw = interior(farneback_flow(nxt, prev)).mean(axis=(0, 1))
    assert np.abs(fw + bw).max() < 0.3


@settings(max_examples=6)
@given(st.integers(0, 10_000), st.sampled_from([(2, 0), (0, 2), (-1, 1), (0, 0)]))
def test_warp_recovery_property(seed, shift):
    prev, nxt = shifted_pair(seed, *shift)
    f = interior(farneback_flow(prev, nxt))
    assert np.abs(f.mean(axis=(0, 1)) - shift).max() < 0.25


def test_holes_stay_finite_and_deterministic():
    prev, nxt = shifted_pair(4, 1, 0)
    prev = prev.copy()
    prev[20:30, 20:30] = 0
    nxt = nxt.copy()
    nxt[:, :5] = 0
    a = farneback_flow(prev, nxt)
    b = farneback_flow(prev, nxt)
    assert np.all(np.isfinite(a)) and np.array_equal(a, b)
    assert np.all(np.isfinite(farneback_flow(np.zeros((32, 32)), np.zeros((32, 32)))))


def test_normalize_pair():
    a = np.array([[0, 1000.0], [1200, 1100]])
    b = np.array([[1000, 0], [0, 1200.0]])
    na, nb = normalize_pair(a, b)
    assert na[0, 0] == 0 and nb[0, 1] == 0
    assert na[0, 1] == pytest.approx(0.05) and na[1, 0] == 1.0
    z = normalize_pair(np.zeros((2, 2)), np.zeros((2, 2)))
    assert not z[0].any() and not z[1].any()


def test_branch_input():
    assert not flow_to_branch_input(np.zeros((4, 5, 2))).any()
    f = np.zeros((4, 5, 2))
    f[..., 0] = 8.0
    out = flow_to_branch_input(f, 8.0)
    assert out.shape == (2, 4, 5) and np.all(out[0] == 1) and not out[1].any()
    mags = np.linspace(-12, 12, 50)
    g = flow_to_branch_input(np.stack([mags, mags], -1)[None], 8.0)[0, 0]
    assert np.all(np.diff(g) >= 0)
    with pytest.raises(ValueError):
        flow_to_branch_input(f, 0)


def test_flow_dump_round_trip(tmp_path):
    f = np.random.default_rng(0).normal(size=(6, 7, 2)).astype(np.float32)
    write_flow(tmp_path / "f.flo", f)
    assert np.array_equal(read_flow(tmp_path / "f.flo"), f)
    (tmp_path / "bad.flo").write_bytes(b"FLOW 6 7\n" + b"\0" * 8)
    with pytest.raises(ValueError):
        read_flow(tmp_path / "bad.flo")
