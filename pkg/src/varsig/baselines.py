"""Comparison methods: deterministic net, physics-informed net, TV-MAP solver.

The deterministic baseline reuses the retrieval-branch topology (measurement
encoder, recurrent shared-decoder unroll) with sampling and the forward model
removed: the latent is the prior mean and the feedback is the normalized
measurement at every step. The physics-informed baseline (holograms only)
back-propagates the square root of the measurement and feeds the resulting
complex field, as two channels, to the same recurrent decoder topology; its
output head starts at zero so the untrained network returns the
back-propagated amplitude itself.

tv_map_solve is a proximal-gradient (ISTA-style) solver for

    minimize ||g - A f||^2 + lambda * TV(f)

with anisotropic total variation applied per 2-D slice, the prox evaluated by
a fixed number of Chambolle-style dual iterations, step size 1/(2||A||^2)
from power iteration, and halving backtracking to keep the objective
monotone.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import accel
from .core import ForwardModel, MeasurementVec, SignalVec, SystemId
from .errors import ConfigError, ShapeMismatchError, UnsupportedModelError
from .fresnel import back_propagate
from .model import (
    ModelConfig,
    NormStats,
    VariationalModel,
    build_forward_model,
    load_module_params,
    save_module_params,
)
from .nets import ConvRecurrentDecoder


# --- deterministic inversion network ------------------------------------------------


class DeterministicBaseline:
    """Point-estimate network: retrieval topology minus sampling and physics."""

    kind = "deterministic"

    def __init__(self, fm: ForwardModel, config: ModelConfig | None = None,
                 stats: NormStats | None = None):
        self._vm = VariationalModel(fm, config, stats)

    @property
    def fm(self) -> ForwardModel:
        return self._vm.fm

    @property
    def config(self) -> ModelConfig:
        return self._vm.config

    @property
    def stats(self) -> NormStats:
        return self._vm.stats

    @stats.setter
    def stats(self, value: NormStats) -> None:
        self._vm.stats = value

    @property
    def trained_epochs(self) -> int:
        return self._vm.trained_epochs

    @trained_epochs.setter
    def trained_epochs(self, value: int) -> None:
        self._vm.trained_epochs = value

    def parameters(self):
        # only the retrieval branch exists in this baseline
        yield from self._vm.theta_parameters()

    def forward_torch(self, g: torch.Tensor) -> torch.Tensor:
        """Differentiable point estimate for a measurement batch."""
        vm = self._vm
        g = vm._as_batch(g, vm._meas_shape, "measurement")
        g_fb = vm._norm_meas(g)
        z = vm.prior_encode(g_fb).mean
        f_hat = torch.zeros(
            g.shape[0], *vm._sig_shape, dtype=vm.config.torch_dtype, device=g.device
        )
        state = vm.nets["decoder"].init_state(g.shape[0], g)
        for _ in range(vm.config.recurrences):
            delta, state = vm.decode_step(z, g_fb, state)
            f_hat = f_hat + delta
        return f_hat

    def retrieve(self, g) -> SignalVec:
        """deterministic_forward: a pure function of (g, parameters)."""
        vm = self._vm
        with torch.no_grad():
            f_hat = self.forward_torch(vm._as_batch(g, vm._meas_shape, "measurement"))
        return SignalVec(self.fm.system_id, f_hat[0].to(torch.float64).numpy())

    def save(self, directory) -> None:
        self._vm.save(directory)
        path = Path(directory) / "config.json"
        meta = json.loads(path.read_text())
        meta["kind"] = self.kind
        path.write_text(json.dumps(meta, indent=2, sort_keys=True))

    @classmethod
    def load(cls, directory) -> "DeterministicBaseline":
        meta = json.loads((Path(directory) / "config.json").read_text())
        if meta.get("kind") != cls.kind:
            raise ConfigError(f"artifact kind {meta.get('kind')!r} != {cls.kind!r}")
        out = cls.__new__(cls)
        out._vm = VariationalModel.load(directory)
        return out


# --- physics-informed network (holograms) --------------------------------------------


class PhysicsInformedBaseline:
    """Back-propagation feature map followed by the deterministic topology."""

    kind = "physics_informed"

    def __init__(self, fm: ForwardModel, config: ModelConfig | None = None):
        if fm.system_id != SystemId.HOLOGRAM:
            raise UnsupportedModelError(
                f"physics-informed baseline requires the hologram system, "
                f"got {fm.system_id.value}"
            )
        self.fm = fm
        self.config = config or ModelConfig()
        self.trained_epochs = 0
        n = fm.signal_shape()[0]
        cfg = self.config
        with torch.random.fork_rng():
            torch.manual_seed(cfg.seed)
            self.net = ConvRecurrentDecoder(
                meas_ch=2, n=n, latent_dim=cfg.latent_dim, out_ch=1,
                embed_channels=cfg.enc_channels, hidden_ch=cfg.conv_hidden,
            ).to(cfg.torch_dtype)
            with torch.no_grad():
                # zero residual head: the untrained output is exactly the
                # back-propagated amplitude
                self.net.head[-1].weight.zero_()
                self.net.head[-1].bias.zero_()

    def parameters(self):
        return self.net.parameters()

    def _back_propagate_batch(self, g: np.ndarray) -> tuple[torch.Tensor, torch.Tensor]:
        shape = self.fm.measurement_shape()
        if g.shape == shape:
            g = g[None]
        if g.ndim != 3 or g.shape[1:] != shape:
            raise ShapeMismatchError(
                f"measurement batch shape {g.shape} does not match {shape}"
            )
        fields = np.stack([
            back_propagate(np.sqrt(np.clip(rec, 0.0, None)).astype(np.complex128),
                           self.fm.config)
            for rec in g
        ])
        dtype = self.config.torch_dtype
        channels = torch.stack(
            [torch.as_tensor(fields.real, dtype=dtype),
             torch.as_tensor(fields.imag, dtype=dtype)], dim=1
        )
        amplitude = torch.as_tensor(np.abs(fields), dtype=dtype)
        return channels, amplitude

    def forward_torch(self, g: np.ndarray) -> torch.Tensor:
        """Differentiable estimate from a numpy measurement batch.

        The back-propagation feature map carries no trainable parameters, so
        it runs outside the graph; gradients flow through the network only.
        """
        channels, amplitude = self._back_propagate_batch(np.asarray(g, dtype=np.float64))
        return self.forward_from_features(channels, amplitude)

    def forward_from_features(self, channels: torch.Tensor,
                              amplitude: torch.Tensor) -> torch.Tensor:
        """Network part only; lets a trainer cache the feature map per record."""
        batch = channels.shape[0]
        z = torch.zeros(batch, self.config.latent_dim, dtype=self.config.torch_dtype)
        state = self.net.init_state(batch, channels)
        residual = torch.zeros_like(amplitude)
        for _ in range(self.config.recurrences):
            delta, state = self.net(z, channels, state)
            residual = residual + delta.squeeze(1)
        return amplitude + residual

    def retrieve(self, g) -> SignalVec:
        if isinstance(g, MeasurementVec):
            g = g.data
        with torch.no_grad():
            f_hat = self.forward_torch(np.asarray(g, dtype=np.float64))
        return SignalVec(self.fm.system_id, f_hat[0].to(torch.float64).numpy())

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        meta = {
            "kind": self.kind,
            "model": json.loads(self.config.to_json()),
            "system": self.fm.system_id.value,
            "fm_config": json.loads(self.fm.config.to_json()),
            "trained_epochs": self.trained_epochs,
        }
        (directory / "config.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
        save_module_params(directory, self.net)

    @classmethod
    def load(cls, directory) -> "PhysicsInformedBaseline":
        directory = Path(directory)
        meta = json.loads((directory / "config.json").read_text())
        if meta.get("kind") != cls.kind:
            raise ConfigError(f"artifact kind {meta.get('kind')!r} != {cls.kind!r}")
        fm = build_forward_model(meta["system"], meta["fm_config"])
        out = cls(fm, ModelConfig(**meta["model"]))
        out.trained_epochs = int(meta.get("trained_epochs", 0))
        load_module_params(directory, out.net)
        return out


# --- TV-regularized MAP ------------------------------------------------------------------


@dataclass(frozen=True)
class TvConfig:
    """Proximal-gradient solver settings; lambda_tv defaults to 10^2.0."""

    lambda_tv: float = 10.0**2.0
    max_iters: int = 200
    step_size: float | None = None  # None -> 1/(2*||A||^2) via power iteration
    stop_tol: float = 1e-10
    inner_iters: int = 10
    power_iters: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.lambda_tv < 0:
            raise ConfigError("lambda_tv must be nonnegative")
        if self.max_iters < 1 or self.inner_iters < 1 or self.power_iters < 1:
            raise ConfigError("iteration counts must be >= 1")
        if self.step_size is not None and self.step_size <= 0:
            raise ConfigError("step_size must be positive")
        if self.stop_tol < 0:
            raise ConfigError("stop_tol must be nonnegative")


@dataclass
class TvResult:
    f: SignalVec
    history: list[tuple[int, float, float, float]]  # (iter, objective, residual, tv)
    step_size: float


def tv_value(f: np.ndarray) -> float:
    """Anisotropic total variation summed over every trailing 2-D slice."""
    if f.ndim < 2:
        raise ShapeMismatchError("TV needs at least 2 spatial dimensions")
    total = np.abs(np.diff(f, axis=0)).sum() + np.abs(np.diff(f, axis=1)).sum()
    return float(total)


def _tv_prox(f: np.ndarray, alpha: float, inner_iters: int) -> np.ndarray:
    """Apply the 2-D TV prox to every (..., y, x, slice...) plane."""
    if alpha == 0.0:
        return f.copy()
    f = np.ascontiguousarray(f)
    out = np.empty_like(f)
    flat = f.reshape(f.shape[0], f.shape[1], -1)
    dst = out.reshape(out.shape[0], out.shape[1], -1)
    for s in range(flat.shape[2]):
        dst[:, :, s] = accel.tv_prox_2d(
            np.ascontiguousarray(flat[:, :, s]), alpha, n_iters=inner_iters
        )
    return out


def estimate_norm_sq(fm: ForwardModel, iters: int, seed: int) -> float:
    """lambda_max(A^T A) by power iteration on the adjoint-normal operator."""
    rng = np.random.default_rng(np.random.SeedSequence((0xA0, seed)))
    v = rng.normal(size=fm.signal_shape())
    v /= np.linalg.norm(v)
    est = 1.0
    for _ in range(iters):
        w = fm.adjoint(fm.apply(SignalVec(fm.system_id, v)).data)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 1.0
        est = norm  # Rayleigh-quotient limit of ||A^T A v|| for unit v
        v = w / norm
    return float(est)


def tv_map_solve(g, fm: ForwardModel, cfg: TvConfig | None = None) -> TvResult:
    """Proximal-gradient MAP solve of ||g - A f||^2 + lambda * TV(f)."""
    cfg = cfg or TvConfig()
    if not fm.is_linear:
        raise UnsupportedModelError(
            f"tv_map_solve requires a linear forward model, got {type(fm).__name__}"
        )
    if isinstance(g, MeasurementVec):
        g = g.data
    g = np.asarray(g, dtype=np.float64)
    if g.shape != fm.measurement_shape():
        raise ShapeMismatchError(
            f"measurement shape {g.shape} != model {fm.measurement_shape()}"
        )

    if cfg.step_size is None:
        step = 1.0 / (2.0 * max(estimate_norm_sq(fm, cfg.power_iters, cfg.seed), 1e-12))
    else:
        step = cfg.step_size

    f = np.zeros(fm.signal_shape())

    def objective(x: np.ndarray) -> tuple[float, float, float]:
        resid = float(np.sum((g - fm.apply(SignalVec(fm.system_id, x)).data) ** 2))
        tv = tv_value(x)
        return resid + cfg.lambda_tv * tv, resid, tv

    obj, resid, tv = objective(f)
    history = [(0, obj, resid, tv)]
    for it in range(1, cfg.max_iters + 1):
        grad = 2.0 * fm.adjoint(fm.apply(SignalVec(fm.system_id, f)).data - g)
        accepted = False
        trial_step = step
        for _ in range(30):
            trial = _tv_prox(f - trial_step * grad, trial_step * cfg.lambda_tv,
                             cfg.inner_iters)
            new_obj, new_resid, new_tv = objective(trial)
            if new_obj <= obj + 1e-12:
                accepted = True
                break
            trial_step *= 0.5
        if not accepted:
            break  # no further monotone progress at any step size
        step = trial_step
        f, prev_obj = trial, obj
        obj, resid, tv = new_obj, new_resid, new_tv
        history.append((it, obj, resid, tv))
        if abs(prev_obj - obj) <= cfg.stop_tol * max(1.0, abs(obj)):
            break
    return TvResult(f=SignalVec(fm.system_id, f), history=history, step_size=step)


def write_history_csv(history, path) -> None:
    """Export a TV iterate history as CSV (iteration, objective, residual, tv)."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "objective", "residual", "tv"])
        for row in history:
            writer.writerow([row[0], f"{row[1]:.17g}", f"{row[2]:.17g}", f"{row[3]:.17g}"])
