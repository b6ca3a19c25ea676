"""Coded-aperture video compression: matrix oracle, adjointness, masks."""

import numpy as np
import pytest

from oracles import video_matrix_oracle
from varsig.core import SignalVec, SystemId
from varsig.errors import ConfigError, ShapeMismatchError
from varsig.video_cs import MaskSet, VideoCsConfig, VideoCsModel, generate_masks


def small_model(seed=0, n=8) -> VideoCsModel:
    return VideoCsModel(VideoCsConfig(n=n, mask_seed=seed))


# --- mask generation ----------------------------------------------------------


def test_masks_deterministic():
    a = generate_masks(42)
    b = generate_masks(42)
    np.testing.assert_array_equal(a.m, b.m)


def test_masks_differ_across_seeds_by_half():
    a = generate_masks(0)
    b = generate_masks(1)
    frac = np.mean(a.m != b.m)
    assert 0.45 <= frac <= 0.55


def test_mask_mean_transmittance():
    masks = generate_masks(7)
    for i in range(4):
        assert 0.47 <= masks.m[i].mean() <= 0.53


def test_masks_are_binary():
    masks = generate_masks(3)
    assert set(np.unique(masks.m)) <= {0.0, 1.0}
    with pytest.raises(ConfigError):
        MaskSet(np.full((4, 8, 8), 0.5), seed=0)


def test_maskset_save_load_roundtrip(tmp_path):
    masks = generate_masks(11, n=16)
    masks.save(tmp_path)
    back = MaskSet.load(tmp_path)
    np.testing.assert_array_equal(back.m, masks.m)
    assert back.seed == 11
    assert back.probability == 0.5


# --- compress -----------------------------------------------------------------


def test_compress_all_ones_masks_sums_frames():
    cfg = VideoCsConfig(n=8)
    model = VideoCsModel(cfg, MaskSet(np.ones((4, 8, 8)), seed=0, probability=1.0))
    rng = np.random.default_rng(0)
    frames = rng.random((8, 8, 3, 4))
    g = model.apply(SignalVec(SystemId.VIDEO_CS, frames))
    np.testing.assert_allclose(g.data, frames.sum(axis=3), atol=1e-14)


def test_compress_all_zero_masks():
    model = VideoCsModel(
        VideoCsConfig(n=8), MaskSet(np.zeros((4, 8, 8)), seed=0, probability=0.0)
    )
    frames = np.ones((8, 8, 3, 4))
    g = model.apply(SignalVec(SystemId.VIDEO_CS, frames))
    np.testing.assert_array_equal(g.data, np.zeros((8, 8, 3)))


def test_compress_matches_dense_matrix_oracle():
    model = small_model(seed=5)
    rng = np.random.default_rng(1)
    frames = rng.random((8, 8, 3, 4))
    g = model.apply_flat(frames.reshape(-1))
    reference = video_matrix_oracle(model.masks.m, channels=3) @ frames.reshape(-1)
    # identical 0/1-masked sums up to summation order
    assert np.abs(g - reference).max() < 1e-12


def test_compress_matches_sparse_matrix_default_size():
    model = VideoCsModel(VideoCsConfig(mask_seed=9))
    rng = np.random.default_rng(2)
    frames = rng.random((64, 64, 3, 4))
    ours = model.apply_flat(frames.reshape(-1))
    reference = model.as_matrix() @ frames.reshape(-1)
    assert np.abs(ours - reference).max() < 1e-12


def test_superposition():
    model = small_model(seed=8)
    rng = np.random.default_rng(3)
    f1 = rng.random(8 * 8 * 3 * 4)
    f2 = rng.random(8 * 8 * 3 * 4)
    lhs = model.apply_flat(2.5 * f1 - 1.5 * f2)
    rhs = 2.5 * model.apply_flat(f1) - 1.5 * model.apply_flat(f2)
    assert np.abs(lhs - rhs).max() < 1e-12


# --- adjoint ------------------------------------------------------------------


def test_adjoint_zero():
    model = small_model()
    out = model.adjoint(np.zeros((8, 8, 3)))
    np.testing.assert_array_equal(out, np.zeros((8, 8, 3, 4)))


def test_adjoint_all_ones_masks_broadcasts():
    model = VideoCsModel(
        VideoCsConfig(n=8), MaskSet(np.ones((4, 8, 8)), seed=0, probability=1.0)
    )
    g = np.random.default_rng(4).random((8, 8, 3))
    out = model.adjoint(g)
    for t in range(4):
        np.testing.assert_array_equal(out[..., t], g)


def test_adjoint_inner_product_identity():
    model = small_model(seed=13)
    rng = np.random.default_rng(5)
    for _ in range(100):
        f = rng.normal(size=(8, 8, 3, 4))
        g = rng.normal(size=(8, 8, 3))
        lhs = np.vdot(model.apply(SignalVec(SystemId.VIDEO_CS, f)).data, g)
        rhs = np.vdot(f, model.adjoint(g))
        assert abs(lhs - rhs) < 1e-10


def test_adjoint_is_matrix_transpose():
    model = small_model(seed=21)
    dense = model.as_matrix().toarray()
    rng = np.random.default_rng(6)
    g = rng.normal(size=(8, 8, 3))
    np.testing.assert_allclose(
        model.adjoint(g).reshape(-1), dense.T @ g.reshape(-1), atol=1e-13
    )


# --- as_matrix ----------------------------------------------------------------


def test_matrix_row_sums_and_nnz():
    model = small_model(seed=17)
    mat = model.as_matrix()
    row_sums = np.asarray(mat.sum(axis=1)).ravel()
    assert row_sums.min() >= 0 and row_sums.max() <= 4
    assert mat.nnz == 3 * int(model.masks.m.sum())


def test_matrix_all_ones_has_four_per_row():
    model = VideoCsModel(
        VideoCsConfig(n=8), MaskSet(np.ones((4, 8, 8)), seed=0, probability=1.0)
    )
    row_sums = np.asarray(model.as_matrix().sum(axis=1)).ravel()
    np.testing.assert_array_equal(row_sums, np.full(8 * 8 * 3, 4.0))


# --- model plumbing -------------------------------------------------------------


def test_shapes_and_validation():
    model = small_model()
    assert model.signal_shape() == (8, 8, 3, 4)
    assert model.measurement_shape() == (8, 8, 3)
    with pytest.raises(ShapeMismatchError):
        model.apply(SignalVec(SystemId.VIDEO_CS, np.zeros((8, 8, 3, 3))))
    with pytest.raises(ShapeMismatchError):
        model.adjoint(np.zeros((8, 8, 4)))


def test_norm_bound_matches_masks():
    model = small_model(seed=31)
    assert model.norm_bound() == np.max(model.masks.m.sum(axis=0))


def test_config_json_roundtrip():
    cfg = VideoCsConfig(n=16, mask_seed=3, mask_p=0.25)
    assert VideoCsConfig.from_json(cfg.to_json()) == cfg
