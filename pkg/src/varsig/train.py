"""Seeded minibatch training with exact-resume checkpoints."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .baselines import DeterministicBaseline, PhysicsInformedBaseline
from .core import DatasetRecord, ForwardModel
from .errors import ConfigError, TrainingDivergedError
from .model import ModelConfig, NormStats, VariationalModel
from .tensorfile import tensor_read, tensor_write

__all__ = [
    "METHODS",
    "EpochStats",
    "Trainer",
    "compute_norm_stats",
    "make_model",
    "load_model",
]

METHODS = ("variational", "deterministic", "physics_informed")

_KINDS = {
    "variational": VariationalModel,
    "deterministic": DeterministicBaseline,
    "physics_informed": PhysicsInformedBaseline,
}


def compute_norm_stats(records: list[DatasetRecord]) -> NormStats:
    """Normalization constants over a training corpus (guarding zero spread)."""
    if not records:
        raise ConfigError("cannot compute normalization stats from an empty corpus")
    g_all = np.concatenate([r.g.data.ravel() for r in records])
    f_all = np.concatenate([r.f.data.ravel() for r in records])
    meas_std = float(g_all.std())
    sig_std = float(f_all.std())
    return NormStats(
        meas_mean=float(g_all.mean()),
        meas_std=meas_std if meas_std > 0 else 1.0,
        sig_std=sig_std if sig_std > 0 else 1.0,
    )


def make_model(method: str, fm: ForwardModel, config: ModelConfig | None = None):
    """Instantiate a fresh model of the given training method."""
    if method not in _KINDS:
        raise ConfigError(f"unknown method {method!r}; expected one of {METHODS}")
    if method == "variational":
        return VariationalModel(fm, config)
    return _KINDS[method](fm, config)


def load_model(directory):
    """Load any saved model/baseline artifact, dispatching on its kind."""
    meta = json.loads((Path(directory) / "config.json").read_text())
    kind = meta.get("kind", "variational")
    if kind not in _KINDS:
        raise ConfigError(f"unknown artifact kind {kind!r}")
    return _KINDS[kind].load(directory)


def _method_of(model) -> str:
    if isinstance(model, VariationalModel):
        return "variational"
    kind = getattr(model, "kind", None)
    if kind in _KINDS:
        return kind
    raise ConfigError(f"cannot train object of type {type(model).__name__}")


@dataclass
class EpochStats:
    """Mean minimized loss across batches plus its named components."""

    epoch: int
    loss: float
    components: dict[str, float] = field(default_factory=dict)

    def to_json_obj(self) -> dict:
        return {"epoch": self.epoch, "loss": self.loss, "components": self.components}

    @classmethod
    def from_json_obj(cls, obj: dict) -> "EpochStats":
        return cls(epoch=int(obj["epoch"]), loss=float(obj["loss"]),
                   components={k: float(v) for k, v in obj["components"].items()})


class Trainer:
    """Adam minibatch trainer; fully reproducible from (model seed, data).

    All randomness (shuffling and latent noise) flows through one
    ``torch.Generator`` whose state rides along in checkpoints, so resuming
    mid-run continues the exact same trajectory in f64 mode.
    """

    def __init__(self, model, records: list[DatasetRecord]):
        if not records:
            raise ConfigError("training corpus is empty")
        self.model = model
        self.method = _method_of(model)
        self.records = records
        cfg: ModelConfig = model.config
        system = records[0].f.system_id
        if system != model.fm.system_id:
            raise ConfigError(
                f"corpus system {system.value!r} != model system "
                f"{model.fm.system_id.value!r}"
            )
        if model.trained_epochs == 0 and hasattr(model, "stats"):
            model.stats = compute_norm_stats(records)
        dtype = cfg.torch_dtype
        self.f_stack = torch.as_tensor(
            np.stack([r.f.data for r in records]), dtype=dtype
        )
        self.g_stack = torch.as_tensor(
            np.stack([r.g.data for r in records]), dtype=dtype
        )
        self._features = None
        if self.method == "physics_informed":
            # the feature map has no parameters; cache it once per corpus
            self._features = model._back_propagate_batch(
                np.stack([r.g.data for r in records]).astype(np.float64)
            )
        self.optimizer = torch.optim.Adam(
            list(model.parameters()), lr=cfg.learning_rate
        )
        self.generator = torch.Generator().manual_seed(cfg.seed)
        self.epoch = int(model.trained_epochs)
        self.history: list[EpochStats] = []

    # --- single batch -----------------------------------------------------------

    def _batch_loss(self, idx: torch.Tensor):
        model, cfg = self.model, self.model.config
        g = self.g_stack[idx]
        components: dict[str, float] = {}
        if self.method == "variational":
            f = self.f_stack[idx]
            gamma = cfg.gamma
            total = torch.zeros((), dtype=cfg.torch_dtype)
            if gamma > 0.0:
                elbo = model.elbo_inference(f, g, generator=self.generator)
                total = total + gamma * elbo
                components["elbo"] = float(elbo.detach())
            if gamma < 1.0:
                cons = model.consistency_bound(g, generator=self.generator)
                total = total + (1.0 - gamma) * cons
                components["consistency"] = float(cons.detach())
            loss = -total
            components["hybrid"] = float(total.detach())
        else:
            f = self.f_stack[idx]
            if self._features is not None:
                channels, amplitude = self._features
                f_hat = self.model.forward_from_features(channels[idx], amplitude[idx])
            else:
                f_hat = self.model.forward_torch(g)
            loss = ((f_hat - f) ** 2).flatten(1).sum(dim=1).mean()
            components["mse"] = float(loss.detach())
        return loss, components

    # --- epochs -----------------------------------------------------------------

    def run_epoch(self) -> EpochStats:
        cfg = self.model.config
        n = len(self.records)
        perm = torch.randperm(n, generator=self.generator)
        batch_losses: list[float] = []
        comp_sums: dict[str, float] = {}
        for bi, start in enumerate(range(0, n, cfg.batch_size)):
            idx = perm[start:start + cfg.batch_size]
            self.optimizer.zero_grad()
            loss, components = self._batch_loss(idx)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss in epoch {self.epoch + 1}, batch {bi}",
                    epoch=self.epoch + 1, batch=bi, components=components,
                )
            loss.backward()
            self.optimizer.step()
            batch_losses.append(float(loss.detach()))
            for key, value in components.items():
                comp_sums[key] = comp_sums.get(key, 0.0) + value
        self.epoch += 1
        self.model.trained_epochs = self.epoch
        stats = EpochStats(
            epoch=self.epoch,
            loss=float(np.mean(batch_losses)),
            components={k: v / len(batch_losses) for k, v in comp_sums.items()},
        )
        self.history.append(stats)
        return stats

    def run(self, epochs: int | None = None, log=None) -> list[EpochStats]:
        """Train until ``model.trained_epochs`` reaches the target count."""
        target = self.model.config.epochs if epochs is None else epochs
        while self.epoch < target:
            stats = self.run_epoch()
            if log is not None:
                log(stats)
        return self.history

    # --- checkpoints --------------------------------------------------------------

    def save_checkpoint(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.model.save(directory / "model")

        opt_dir = directory / "optimizer"
        opt_dir.mkdir(exist_ok=True)
        sd = self.optimizer.state_dict()
        entries = []
        for index, state in sd["state"].items():
            tensor_write(opt_dir / f"{index:04d}.exp_avg.tns",
                         state["exp_avg"].numpy())
            tensor_write(opt_dir / f"{index:04d}.exp_avg_sq.tns",
                         state["exp_avg_sq"].numpy())
            entries.append({"index": int(index), "step": float(state["step"])})
        (opt_dir / "state.json").write_text(json.dumps(
            {"entries": entries, "param_groups": sd["param_groups"]},
            indent=2, sort_keys=True,
        ))

        meta = {
            "epoch": self.epoch,
            "method": self.method,
            "rng_state_hex": self.generator.get_state().numpy().tobytes().hex(),
            "history": [st.to_json_obj() for st in self.history],
        }
        (directory / "trainer.json").write_text(
            json.dumps(meta, indent=2, sort_keys=True)
        )
        return directory

    @classmethod
    def resume(cls, directory, records: list[DatasetRecord]) -> "Trainer":
        directory = Path(directory)
        meta = json.loads((directory / "trainer.json").read_text())
        model = load_model(directory / "model")
        trainer = cls(model, records)
        if trainer.method != meta["method"]:
            raise ConfigError(
                f"checkpoint method {meta['method']!r} != model kind "
                f"{trainer.method!r}"
            )

        opt_meta = json.loads((directory / "optimizer" / "state.json").read_text())
        dtype = model.config.torch_dtype
        state = {}
        for entry in opt_meta["entries"]:
            index = int(entry["index"])
            state[index] = {
                "step": torch.tensor(float(entry["step"])),
                "exp_avg": torch.as_tensor(
                    tensor_read(directory / "optimizer" / f"{index:04d}.exp_avg.tns"),
                    dtype=dtype),
                "exp_avg_sq": torch.as_tensor(
                    tensor_read(directory / "optimizer" / f"{index:04d}.exp_avg_sq.tns"),
                    dtype=dtype),
            }
        trainer.optimizer.load_state_dict(
            {"state": state, "param_groups": opt_meta["param_groups"]}
        )

        rng_bytes = bytes.fromhex(meta["rng_state_hex"])
        trainer.generator.set_state(
            torch.from_numpy(np.frombuffer(rng_bytes, dtype=np.uint8).copy())
        )
        trainer.epoch = int(meta["epoch"])
        trainer.history = [EpochStats.from_json_obj(o) for o in meta["history"]]
        if trainer.epoch != model.trained_epochs:
            raise ConfigError(
                f"checkpoint epoch {trainer.epoch} != model trained_epochs "
                f"{model.trained_epochs}"
            )
        return trainer
