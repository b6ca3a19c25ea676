"""Dataset synthesis, IDX files, and the on-disk corpus layout."""

import numpy as np
import pytest

from varsig.core import SignalVec, SystemId
from varsig.datasets import (
    ToyQuadraticConfig,
    ToyQuadraticModel,
    dataset_manifest,
    load_dataset,
    read_idx_images,
    read_idx_labels,
    save_dataset,
    synth_digit_idx,
    synth_hologram_dataset,
    synth_pulse_dataset,
    synth_toy_dataset,
    synth_video_dataset,
    write_idx_images,
)
from varsig.errors import ConfigError, TensorFormatError
from varsig.fresnel import FresnelConfig, HologramModel
from varsig.streaking import StreakingConfig
from varsig.tensorfile import tensor_write
from varsig.video_cs import VideoCsConfig

SMALL_STREAK = StreakingConfig(
    n_energy=8, n_delay=5, n_xuv=20, n_ir=6, time_span_fs=6.0, n_time=256
)


# --- toy quadratic system -------------------------------------------------------


def test_toy_matrix_symmetric_positive_definite():
    w = ToyQuadraticConfig(seed=3).matrix()
    np.testing.assert_allclose(w, w.T, atol=1e-15)
    assert np.linalg.eigvalsh(w).min() > 0


def test_toy_matrix_deterministic_per_seed():
    assert np.array_equal(ToyQuadraticConfig(seed=1).matrix(),
                          ToyQuadraticConfig(seed=1).matrix())
    assert not np.array_equal(ToyQuadraticConfig(seed=1).matrix(),
                              ToyQuadraticConfig(seed=2).matrix())


def test_toy_sign_flip_weaves_identical_measurement():
    model = ToyQuadraticModel(ToyQuadraticConfig())
    f = np.random.default_rng(0).normal(size=16)
    g_pos = model.apply(SignalVec(SystemId.TOY_TWO_CLUSTER, f)).data
    g_neg = model.apply(SignalVec(SystemId.TOY_TWO_CLUSTER, -f)).data
    np.testing.assert_array_equal(g_pos, g_neg)


def test_toy_dataset_forms_two_clusters():
    cfg = ToyQuadraticConfig()
    records = synth_toy_dataset(cfg, 40, seed=0)
    assert len(records) == 40
    units = np.stack([r.f.data / np.linalg.norm(r.f.data) for r in records])
    signs = np.sign(units @ units[0])
    # both signs appear, and within a cluster the members are nearly parallel
    assert (signs > 0).any() and (signs < 0).any()
    gram = np.abs(units @ units.T)
    assert gram.min() > 0.9


def test_toy_dataset_measurements_ignore_cluster():
    records = synth_toy_dataset(ToyQuadraticConfig(), 40, seed=1, jitter=0.0)
    g = np.stack([r.g.data for r in records])
    np.testing.assert_allclose(g, np.broadcast_to(g[0], g.shape), rtol=1e-12)


# --- IDX image files --------------------------------------------------------------


def test_idx_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(2)
    images = rng.integers(0, 256, size=(7, 28, 28)).astype(np.uint8)
    path = tmp_path / "images.idx"
    write_idx_images(path, images)
    np.testing.assert_array_equal(read_idx_images(path), images)


def test_idx_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.idx"
    path.write_bytes(b"\x00\x00\x0c\x03" + b"\x00" * 12)
    with pytest.raises(TensorFormatError) as err:
        read_idx_images(path)
    assert err.value.offset == 0


def test_idx_rejects_truncated_payload(tmp_path):
    import struct

    path = tmp_path / "short.idx"
    path.write_bytes(struct.pack(">IIII", 0x00000803, 2, 4, 4) + b"\x01" * 10)
    with pytest.raises(TensorFormatError):
        read_idx_images(path)


def test_idx_labels_roundtrip(tmp_path):
    import struct

    labels = np.arange(10, dtype=np.uint8) % 10
    path = tmp_path / "labels.idx"
    path.write_bytes(struct.pack(">II", 0x00000801, labels.size) + labels.tobytes())
    np.testing.assert_array_equal(read_idx_labels(path), labels)


def test_synth_digit_idx_deterministic(tmp_path):
    a, b, c = tmp_path / "a.idx", tmp_path / "b.idx", tmp_path / "c.idx"
    synth_digit_idx(a, count=12, size=32, seed=5)
    synth_digit_idx(b, count=12, size=32, seed=5)
    synth_digit_idx(c, count=12, size=32, seed=6)
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()
    images = read_idx_images(a)
    assert images.shape == (12, 32, 32)
    assert images.dtype == np.uint8
    assert images.max() > 100  # digits are actually drawn


# --- pulse corpus -------------------------------------------------------------------


def test_pulse_dataset_plants_cep_ambiguities():
    records = synth_pulse_dataset(SMALL_STREAK, 60, seed=0, cep_duplicate_frac=0.3)
    assert len(records) == 60
    dups = [r for r in records if "cep_duplicate_of" in r.meta]
    assert len(dups) >= 5
    by_seed = {r.seed: r for r in records}
    for dup in dups:
        src = by_seed[dup.meta["cep_duplicate_of"]]
        assert not np.allclose(dup.f.data, src.f.data, atol=1e-6)
        scale = np.abs(src.g.data).max()
        assert np.abs(dup.g.data - src.g.data).max() < 1e-9 * scale


def test_pulse_dataset_deterministic():
    a = synth_pulse_dataset(SMALL_STREAK, 8, seed=4)
    b = synth_pulse_dataset(SMALL_STREAK, 8, seed=4)
    for ra, rb in zip(a, b):
        np.testing.assert_array_equal(ra.f.data, rb.f.data)
        np.testing.assert_array_equal(ra.g.data, rb.g.data)


# --- video corpus -------------------------------------------------------------------


def test_video_dataset_shapes_and_range():
    cfg = VideoCsConfig(n=16, mask_seed=0)
    records = synth_video_dataset(cfg, 6, seed=0)
    for rec in records:
        assert rec.f.data.shape == (16, 16, 3, 4)
        assert rec.g.data.shape == (16, 16, 3)
        assert 0.0 <= rec.f.data.min() and rec.f.data.max() <= 1.0
        assert rec.f.data.max() > 0  # something moves through the frame


def test_video_dataset_from_image_dir(tmp_path):
    rng = np.random.default_rng(6)
    img_dir = tmp_path / "imgs"
    img_dir.mkdir()
    for i in range(3):
        tensor_write(img_dir / f"{i}.tns", rng.random((40, 40, 3)))
    cfg = VideoCsConfig(n=16, mask_seed=0)
    records = synth_video_dataset(cfg, 4, seed=1, image_dir=img_dir)
    assert all(r.f.data.shape == (16, 16, 3, 4) for r in records)
    with pytest.raises(ConfigError):
        synth_video_dataset(cfg, 4, seed=1, image_dir=tmp_path / "empty")


# --- hologram corpus ----------------------------------------------------------------


def test_hologram_dataset_builtin_glyphs():
    cfg = FresnelConfig(n=32)
    records = synth_hologram_dataset(cfg, 5, seed=0)
    model = HologramModel(cfg)
    for rec in records:
        assert rec.f.data.shape == (32, 32)
        assert rec.g.data.min() >= 0
        np.testing.assert_allclose(rec.g.data, model.apply(rec.f).data, rtol=1e-12)


def test_hologram_dataset_from_idx(tmp_path):
    path = tmp_path / "digits.idx"
    synth_digit_idx(path, count=9, size=28, seed=1)
    cfg = FresnelConfig(n=32)
    records = synth_hologram_dataset(cfg, 5, seed=2, idx_path=path)
    for rec in records:
        assert rec.f.data.shape == (32, 32)
        assert 0.0 <= rec.f.data.min() and rec.f.data.max() <= 1.0


# --- on-disk layout -----------------------------------------------------------------


def test_save_load_roundtrip_bit_exact(tmp_path):
    cfg = ToyQuadraticConfig()
    records = synth_toy_dataset(cfg, 6, seed=0)
    fm = ToyQuadraticModel(cfg)
    directory = save_dataset(records, tmp_path, "train", fm, seed=0)
    assert directory == tmp_path / "toy_two_cluster" / "train"
    loaded = load_dataset(tmp_path, SystemId.TOY_TWO_CLUSTER, "train")
    assert len(loaded) == len(records)
    for orig, back in zip(records, loaded):
        np.testing.assert_array_equal(orig.f.data, back.f.data)
        np.testing.assert_array_equal(orig.g.data, back.g.data)
        assert back.f.system_id is SystemId.TOY_TWO_CLUSTER

    manifest = dataset_manifest(tmp_path, "toy_two_cluster", "train")
    assert manifest["count"] == 6
    assert manifest["signal_shape"] == [16]
    assert manifest["seed"] == 0
    assert manifest["fm_config"]["n"] == 16


def test_save_dataset_rejects_empty_and_mixed(tmp_path):
    cfg = ToyQuadraticConfig()
    fm = ToyQuadraticModel(cfg)
    with pytest.raises(ConfigError):
        save_dataset([], tmp_path, "train", fm)


def test_load_dataset_missing_manifest(tmp_path):
    with pytest.raises(ConfigError):
        load_dataset(tmp_path, SystemId.HOLOGRAM, "train")
    with pytest.raises(ConfigError):
        dataset_manifest(tmp_path, SystemId.HOLOGRAM, "train")


def test_load_dataset_system_mismatch(tmp_path):
    cfg = ToyQuadraticConfig()
    records = synth_toy_dataset(cfg, 2, seed=0)
    directory = save_dataset(records, tmp_path, "train", ToyQuadraticModel(cfg))
    manifest_path = directory / "manifest.json"
    text = manifest_path.read_text().replace("toy_two_cluster", "hologram", 1)
    manifest_path.write_text(text)
    with pytest.raises(ConfigError):
        load_dataset(tmp_path, SystemId.TOY_TWO_CLUSTER, "train")
