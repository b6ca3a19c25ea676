"""Trainer: seeding, loss bookkeeping, divergence, exact-resume checkpoints."""

import numpy as np
import pytest
import torch

from varsig.baselines import DeterministicBaseline, PhysicsInformedBaseline
from varsig.core import SystemId
from varsig.datasets import (
    ToyQuadraticConfig,
    ToyQuadraticModel,
    synth_hologram_dataset,
    synth_toy_dataset,
)
from varsig.errors import ConfigError, TrainingDivergedError
from varsig.fresnel import FresnelConfig, HologramModel
from varsig.model import ModelConfig, VariationalModel
from varsig.train import (
    METHODS,
    EpochStats,
    Trainer,
    compute_norm_stats,
    load_model,
    make_model,
)

TINY = dict(latent_dim=4, recurrences=2, enc_channels=(4, 8), lstm_hidden=16,
            conv_hidden=8, precision="f64", batch_size=16, learning_rate=1e-3)


def toy_setup(seed=0, **overrides):
    cfg = ToyQuadraticConfig()
    records = synth_toy_dataset(cfg, 48, seed=seed)
    fm = ToyQuadraticModel(cfg)
    model = VariationalModel(fm, ModelConfig(**{**TINY, **overrides}))
    return fm, records, model


def test_compute_norm_stats_hand_values():
    cfg = ToyQuadraticConfig()
    records = synth_toy_dataset(cfg, 10, seed=0)
    stats = compute_norm_stats(records)
    g_all = np.concatenate([r.g.data.ravel() for r in records])
    f_all = np.concatenate([r.f.data.ravel() for r in records])
    assert stats.meas_mean == pytest.approx(g_all.mean(), rel=1e-12)
    assert stats.meas_std == pytest.approx(g_all.std(), rel=1e-12)
    assert stats.sig_std == pytest.approx(f_all.std(), rel=1e-12)
    with pytest.raises(ConfigError):
        compute_norm_stats([])


def test_make_model_dispatch():
    fm = ToyQuadraticModel(ToyQuadraticConfig())
    assert isinstance(make_model("variational", fm, ModelConfig(**TINY)),
                      VariationalModel)
    assert isinstance(make_model("deterministic", fm, ModelConfig(**TINY)),
                      DeterministicBaseline)
    holo = HologramModel(FresnelConfig(n=16))
    assert isinstance(make_model("physics_informed", holo, ModelConfig(**TINY)),
                      PhysicsInformedBaseline)
    with pytest.raises(ConfigError):
        make_model("oracle", fm)
    assert set(METHODS) == {"variational", "deterministic", "physics_informed"}


def test_trainer_rejects_bad_corpus():
    fm, records, model = toy_setup()
    with pytest.raises(ConfigError):
        Trainer(model, [])
    holo_records = synth_hologram_dataset(FresnelConfig(n=16), 2, seed=0)
    with pytest.raises(ConfigError):
        Trainer(model, holo_records)


def test_trainer_sets_stats_once():
    fm, records, model = toy_setup()
    trainer = Trainer(model, records)
    expected = compute_norm_stats(records)
    assert model.stats == expected
    # a resumed/pre-trained model keeps its artifact stats
    model.trained_epochs = 3
    from varsig.model import NormStats

    model.stats = NormStats(1.0, 2.0, 3.0)
    Trainer(model, records)
    assert model.stats == NormStats(1.0, 2.0, 3.0)


def test_variational_training_improves_loss():
    fm, records, model = toy_setup()
    trainer = Trainer(model, records)
    history = trainer.run(epochs=6)
    assert [st.epoch for st in history] == [1, 2, 3, 4, 5, 6]
    assert history[-1].loss < history[0].loss
    assert set(history[0].components) == {"elbo", "consistency", "hybrid"}
    assert model.trained_epochs == 6
    # run() with a target already met does nothing
    assert trainer.run(epochs=6) == history


def test_gamma_extremes_log_single_component():
    fm, records, model = toy_setup(gamma=1.0)
    st = Trainer(model, records).run_epoch()
    assert set(st.components) == {"elbo", "hybrid"}
    fm, records, model = toy_setup(gamma=0.0)
    st = Trainer(model, records).run_epoch()
    assert set(st.components) == {"consistency", "hybrid"}


def test_deterministic_training_improves_loss():
    cfg = ToyQuadraticConfig()
    records = synth_toy_dataset(cfg, 48, seed=1)
    model = DeterministicBaseline(ToyQuadraticModel(cfg), ModelConfig(**TINY))
    history = Trainer(model, records).run(epochs=8)
    assert set(history[0].components) == {"mse"}
    assert history[-1].loss < history[0].loss


def test_hologram_smoke_all_methods():
    cfg = FresnelConfig(n=16)
    records = synth_hologram_dataset(cfg, 50, seed=0)
    fm = HologramModel(cfg)
    for method in METHODS:
        model = make_model(method, fm, ModelConfig(**TINY))
        history = Trainer(model, records).run(epochs=8)
        assert history[-1].loss < history[0].loss, method


def test_divergence_raises_with_diagnostics():
    fm, records, model = toy_setup()
    trainer = Trainer(model, records)
    trainer.run(epochs=1)
    with torch.no_grad():
        next(iter(model.parameters())).fill_(float("nan"))
    with pytest.raises(TrainingDivergedError) as err:
        trainer.run_epoch()
    assert err.value.epoch == 2
    assert err.value.batch == 0
    assert isinstance(err.value.components, dict)


def test_checkpoint_resume_is_bit_compatible(tmp_path):
    # straight run
    fm, records, model_a = toy_setup()
    trainer_a = Trainer(model_a, records)
    history_a = trainer_a.run(epochs=4)

    # identical run, interrupted at epoch 2 and resumed from disk
    fm, records, model_b = toy_setup()
    trainer_b = Trainer(model_b, records)
    trainer_b.run(epochs=2)
    trainer_b.save_checkpoint(tmp_path / "ckpt")
    trainer_c = Trainer.resume(tmp_path / "ckpt", records)
    history_c = trainer_c.run(epochs=4)

    assert [st.loss for st in history_c] == [st.loss for st in history_a]
    assert [st.epoch for st in history_c] == [1, 2, 3, 4]
    for key, comps_a in ((i, history_a[i].components) for i in range(4)):
        assert comps_a == history_c[key].components
    params_a = list(model_a.parameters())
    params_c = list(trainer_c.model.parameters())
    assert len(params_a) == len(params_c)
    for pa, pc in zip(params_a, params_c):
        assert torch.equal(pa, pc)


def test_checkpoint_roundtrip_preserves_rng_and_epoch(tmp_path):
    fm, records, model = toy_setup()
    trainer = Trainer(model, records)
    trainer.run(epochs=3)
    trainer.save_checkpoint(tmp_path / "ckpt")
    resumed = Trainer.resume(tmp_path / "ckpt", records)
    assert resumed.epoch == 3
    assert resumed.model.trained_epochs == 3
    assert [st.to_json_obj() for st in resumed.history] == \
        [st.to_json_obj() for st in trainer.history]
    assert torch.equal(resumed.generator.get_state(), trainer.generator.get_state())


def test_checkpoint_works_for_baselines(tmp_path):
    cfg = FresnelConfig(n=16)
    records = synth_hologram_dataset(cfg, 8, seed=3)
    fm = HologramModel(cfg)
    for method in ("deterministic", "physics_informed"):
        model = make_model(method, fm, ModelConfig(**TINY))
        trainer = Trainer(model, records)
        trainer.run(epochs=2)
        trainer.save_checkpoint(tmp_path / method)
        resumed = Trainer.resume(tmp_path / method, records)
        assert resumed.method == method
        g = records[0].g.data
        np.testing.assert_array_equal(
            resumed.model.retrieve(g).data, model.retrieve(g).data
        )
        resumed.run(epochs=3)
        assert resumed.model.trained_epochs == 3


def test_load_model_dispatch(tmp_path):
    fm, records, model = toy_setup()
    model.save(tmp_path / "vm")
    assert isinstance(load_model(tmp_path / "vm"), VariationalModel)
    det = DeterministicBaseline(fm, ModelConfig(**TINY))
    det.save(tmp_path / "det")
    assert isinstance(load_model(tmp_path / "det"), DeterministicBaseline)


def test_epoch_stats_json_roundtrip():
    st = EpochStats(epoch=3, loss=1.25, components={"elbo": -2.5})
    assert EpochStats.from_json_obj(st.to_json_obj()) == st
