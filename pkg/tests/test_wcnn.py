import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import correlate2d, down, network_forward

from lapfield.wcnn import (
    REFERENCE_G,
    REFERENCE_H,
    REFERENCE_K,
    CheckpointError,
    KernelSet,
    build_pyramid,
    correlate,
    default_kernels,
    default_levels,
    downsample,
    forward,
    init_kernels,
    kernels_from_json,
    kernels_to_json,
    level_shapes,
    load_kernels,
    param_count,
    reference_kernels,
    save_kernels,
    upsample,
)


def random_kernels(rng, c=3, k=5):
    return KernelSet(rng.standard_normal((c, k, k)), rng.standard_normal((c, 3, 3)), rng.standard_normal((c, k, k)))


def test_param_count():
    assert param_count(3, 5) == 177
    assert param_count(1, 3) == 27
    assert param_count(3, 9) == 513
    with pytest.raises(ValueError):
        param_count(3, 4)


def test_kernelset_counts_and_validation(rng):
    ks = init_kernels(3, 5)
    assert ks.n_params == 177 == ks.flat().size
    assert np.array_equal(KernelSet.from_flat(ks.flat(), 3, 5).flat(), ks.flat())
    with pytest.raises(ValueError):
        KernelSet(np.zeros((1, 4, 4)), np.zeros((1, 3, 3)), np.zeros((1, 4, 4)))
    with pytest.raises(ValueError):
        KernelSet(np.zeros((1, 5, 5)), np.zeros((1, 5, 5)), np.zeros((1, 5, 5)))
    with pytest.raises(ValueError):
        KernelSet(np.full((1, 3, 3), np.inf), np.zeros((1, 3, 3)), np.zeros((1, 3, 3)))


def test_init_kernels():
    ks = init_kernels(3, 7)
    assert ks.H.sum(axis=(1, 2)) == pytest.approx([1, 1, 1])
    assert ks.K.sum(axis=(1, 2)) == pytest.approx([4, 4, 4])
    assert ks.G.sum(axis=(1, 2)) == pytest.approx([0.1, 0.1, 0.1])


def test_default_levels():
    assert default_levels((256, 256)) == 6
    assert default_levels((8, 8)) == 1
    assert default_levels((481, 321)) == 6


def test_downsample():
    x = np.arange(16.0).reshape(4, 4)
    assert np.array_equal(downsample(x), [[0, 2], [8, 10]])
    assert downsample(np.ones((5, 5))).shape == (3, 3)
    assert np.all(downsample(np.full((6, 7), 3.0)) == 3.0)


def test_upsample():
    u = upsample(np.ones((2, 2)), (4, 4))
    assert np.array_equal(u, [[1, 0, 1, 0], [0, 0, 0, 0], [1, 0, 1, 0], [0, 0, 0, 0]])
    with pytest.raises(ValueError):
        upsample(np.ones((2, 2)), (6, 4))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 20), st.integers(1, 20), st.integers(0, 1), st.integers(0, 1))
def test_down_up_roundtrip(h, w, dh, dw):
    f = np.random.default_rng(h * 31 + w).standard_normal((h, w))
    H, W = 2 * h - dh, 2 * w - dw
    assert np.array_equal(downsample(upsample(f, (H, W))), f)
    if dh == dw == 0:
        assert upsample(f, (H, W)).mean() == pytest.approx(f.mean() / 4)


def test_correlate_matches_oracle_bitwise(rng):
    x = rng.standard_normal((2, 3, 11, 9))
    w = rng.standard_normal((3, 5, 5))
    out = correlate(x, w)
    for b in range(2):
        for c in range(3):
            assert np.array_equal(out[b, c], correlate2d(x[b, c], w[c]))


def test_pyramid_matches_oracle(rng):
    ks = random_kernels(rng, 1, 5)
    L = rng.standard_normal((32, 32))
    levels = build_pyramid(L, ks, 3)
    ref = [L]
    for _ in range(2):
        ref.append(down(correlate2d(ref[-1], ks.H[0])))
    assert [lv.shape for lv in levels] == [(32, 32), (16, 16), (8, 8)]
    for a, b in zip(levels, ref):
        assert np.array_equal(a, b)
    assert len(build_pyramid(L, ks, 1)) == 1
    assert all(np.all(lv == 0) for lv in build_pyramid(np.zeros((16, 16)), ks, 3))


def test_level_shapes_limits():
    assert level_shapes((5, 9), 2) == [(5, 9), (3, 5)]
    with pytest.raises(ValueError):
        level_shapes((16, 16), 4)


def test_forward_matches_oracle_with_reference_kernels(rng):
    L = rng.standard_normal((40, 36))
    out = forward(reference_kernels(1), L, 3)
    assert np.array_equal(out, network_forward(REFERENCE_H, REFERENCE_G, REFERENCE_K, L, 3))


def test_forward_linear_and_zero(rng):
    ks = random_kernels(rng)
    L1, L2 = rng.standard_normal((2, 3, 24, 20))
    assert np.all(forward(ks, np.zeros((3, 16, 16))) == 0)
    a, b = 3.0, -0.5
    lhs = forward(ks, a * L1 + b * L2)
    rhs = a * forward(ks, L1) + b * forward(ks, L2)
    assert np.linalg.norm(lhs - rhs) <= 1e-5 * np.linalg.norm(rhs)
    assert np.allclose(forward(ks, 7.0 * L1), 7.0 * forward(ks, L1), rtol=1e-6, atol=1e-9)


def test_forward_batches_and_channels(rng):
    ks = random_kernels(rng)
    L = rng.standard_normal((4, 3, 17, 23))
    out = forward(ks, L)
    assert out.shape == L.shape
    assert np.array_equal(out[2], forward(ks, L[2]))
    with pytest.raises(ValueError):
        forward(ks, rng.standard_normal((1, 16, 16)))


def test_resolution_independence(rng):
    ks = random_kernels(rng)
    for shape in [(3, 9, 9), (3, 64, 48), (3, 101, 37)]:
        assert forward(ks, rng.standard_normal(shape)).shape == shape


def test_checkpoint_roundtrip_exact(tmp_path, rng):
    ks = random_kernels(rng, 3, 7)
    path = tmp_path / "k.json"
    save_kernels(path, ks)
    back = load_kernels(path)
    assert np.array_equal(back.flat(), ks.flat())
    assert back.flat().view(np.uint64).tolist() == ks.flat().view(np.uint64).tolist()


def test_checkpoint_accepts_reference_values_verbatim(data_dir):
    ks = load_kernels(data_dir / "reference_kernels.json")
    assert ks.channels == 1 and ks.size == 5
    assert ks.H[0].tolist() == REFERENCE_H
    assert ks.G[0].tolist() == REFERENCE_G
    assert ks.K[0].tolist() == REFERENCE_K
    doc = json.loads((data_dir / "reference_kernels.json").read_text())
    doc["channels"] = 3
    assert kernels_from_json(json.dumps(doc)).n_params == 177


@pytest.mark.parametrize("text", [
    "not json",
    '{"format": "other"}',
    '{"format": "lapfield-wcnn", "version": 99}',
    '{"format": "lapfield-wcnn", "version": 1, "channels": 1, "H": [[1]]}',
])
def test_checkpoint_errors(text):
    with pytest.raises(CheckpointError):
        kernels_from_json(text)


def test_checkpoint_header_mismatch():
    doc = json.loads(kernels_to_json(init_kernels(3, 5)))
    doc["channels"] = 2
    with pytest.raises(CheckpointError):
        kernels_from_json(json.dumps(doc))


def test_missing_checkpoint(tmp_path):
    with pytest.raises(CheckpointError):
        load_kernels(tmp_path / "none.json")


def test_bundled_default_checkpoint():
    ks = default_kernels()
    assert ks.channels == 3 and ks.size == 5 and ks.n_params == 177
