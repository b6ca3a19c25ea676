"""Recurrent conditional variational model for signal retrieval.

Two branches share one decoder (Fig.-style layout): the *inference* branch
encodes (f, g) through the recognition distribution q and reconstructs f; the
*retrieval* branch sees only g through the conditional prior p. Both unroll T
recurrences; each step t receives discrepancy feedback

    inference:  (f - f_q^(t-1),  g - A(f_q^(t-1)))
    retrieval:  g - A(f_p^(t-1))

with the first step's measurement feedback set to g itself and f^(0) = 0. A
latent z is drawn per recurrence (per-step KL terms are summed); set
``draw_once=True`` to draw a single z at the first step and reuse it.

Losses (maximized; the trainer minimizes their negation):

    L   = -KL(q||p) - (1/(beta*L)) sum_l ||f - f_q^(T)||^2
    L_r = -(1/(alpha*L)) sum_l ||A(f_p^(T)) - g||^2   (A inside autodiff)
    L_h = gamma * L + (1 - gamma) * L_r

The KL is evaluated in the standard orientation that guarantees KL >= 0,
sum_j [ log(s_p/s_q) + (s_q^2 + (m_q - m_p)^2) / (2 s_p^2) - 1/2 ].

Model artifact: a directory holding config.json, stats.json, and one tensor
file per parameter keyed by params.manifest.json.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from . import nets
from .core import ForwardModel, MeasurementVec, SignalVec, SystemId
from .errors import ConfigError, ModelStateError, ShapeMismatchError
from .tensorfile import tensor_read, tensor_write


@dataclass
class GaussianLatent:
    """Diagonal Gaussian over R^M, possibly batched in the leading axes."""

    mean: torch.Tensor
    stddev: torch.Tensor

    def __post_init__(self):
        if self.mean.shape != self.stddev.shape:
            raise ShapeMismatchError(
                f"mean shape {tuple(self.mean.shape)} != stddev shape "
                f"{tuple(self.stddev.shape)}"
            )
        if self.stddev.numel() and float(self.stddev.detach().min()) < 0:
            raise ConfigError("stddev must be nonnegative")


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters of the variational model."""

    latent_dim: int = 32
    recurrences: int = 3
    samples: int = 1
    gamma: float = 0.5
    alpha: float = 1.0
    beta: float = 1.0
    enc_channels: tuple[int, int] = (16, 32)
    lstm_hidden: int = 128
    conv_hidden: int = 32
    learning_rate: float = 1e-3
    batch_size: int = 16
    epochs: int = 20
    seed: int = 0
    draw_once: bool = False
    precision: str = "f32"

    def __post_init__(self):
        if self.latent_dim < 1 or self.recurrences < 1 or self.samples < 1:
            raise ConfigError("latent_dim, recurrences and samples must be >= 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.alpha <= 0 or self.beta <= 0:
            raise ConfigError("alpha and beta must be positive")
        if self.precision not in ("f32", "f64"):
            raise ConfigError(f"precision must be 'f32' or 'f64', got {self.precision}")
        object.__setattr__(self, "enc_channels", tuple(self.enc_channels))

    @property
    def torch_dtype(self) -> torch.dtype:
        return torch.float64 if self.precision == "f64" else torch.float32

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        return cls(**json.loads(text))


@dataclass
class NormStats:
    """Training-set normalization statistics stored in the artifact."""

    meas_mean: float = 0.0
    meas_std: float = 1.0
    sig_std: float = 1.0

    def __post_init__(self):
        if self.meas_std <= 0 or self.sig_std <= 0:
            raise ConfigError("normalization scales must be positive")


def kl_divergence(q: GaussianLatent, p: GaussianLatent) -> torch.Tensor:
    """KL(q || p) between diagonal Gaussians, summed over the latent axis."""
    if q.mean.shape != p.mean.shape:
        raise ShapeMismatchError(
            f"latent dims differ: {tuple(q.mean.shape)} vs {tuple(p.mean.shape)}"
        )
    sq = torch.clamp(q.stddev, min=1e-12)
    sp = torch.clamp(p.stddev, min=1e-12)
    term = torch.log(sp / sq) + (sq**2 + (q.mean - p.mean) ** 2) / (2.0 * sp**2) - 0.5
    return term.sum(dim=-1)


def sample_latent(lat: GaussianLatent, noise: torch.Tensor) -> torch.Tensor:
    """Reparameterized draw z = mean + stddev * noise (stddev floored at 1e-6)."""
    if noise.shape != lat.mean.shape:
        raise ShapeMismatchError(
            f"noise shape {tuple(noise.shape)} != latent shape {tuple(lat.mean.shape)}"
        )
    return lat.mean + torch.clamp(lat.stddev, min=1e-6) * noise


# --- shape adapters between native layouts and channel-first nets ---------------


def _to_net_layout(x: torch.Tensor, native_shape: tuple[int, ...]) -> torch.Tensor:
    """Batched native shape -> what the encoders expect (see nets module)."""
    rank = len(native_shape)
    if rank == 1:
        return x  # (B, L)
    if rank == 2:
        return x.unsqueeze(1)  # (B, 1, H, W)
    if rank == 3:
        return x.permute(0, 3, 1, 2)  # (B, C, H, W)
    if rank == 4:
        b = x.shape[0]
        n0, n1, c, k = native_shape
        return x.permute(0, 3, 4, 1, 2).reshape(b, c * k, n0, n1)
    raise ShapeMismatchError(f"unsupported native rank {rank}")


def _from_net_layout(x: torch.Tensor, native_shape: tuple[int, ...]) -> torch.Tensor:
    rank = len(native_shape)
    if rank == 1:
        return x
    if rank == 2:
        return x.squeeze(1)
    if rank == 3:
        return x.permute(0, 2, 3, 1)
    if rank == 4:
        b = x.shape[0]
        n0, n1, c, k = native_shape
        return x.reshape(b, c, k, n0, n1).permute(0, 3, 4, 1, 2)
    raise ShapeMismatchError(f"unsupported native rank {rank}")


def _net_channels(native_shape: tuple[int, ...]) -> int:
    rank = len(native_shape)
    if rank == 2:
        return 1
    if rank == 3:
        return native_shape[2]
    if rank == 4:
        return native_shape[2] * native_shape[3]
    raise ShapeMismatchError(f"no channel form for rank {rank}")


def _feature_encoder(shape: tuple[int, ...], channels, pooled_1d=8, pooled_2d=4):
    if len(shape) == 1:
        return nets.FeatureEncoder1d(channels=channels, pooled=pooled_1d)
    return nets.FeatureEncoder2d(_net_channels(shape), channels=channels, pooled=pooled_2d)


class VariationalModel:
    """Recognition/prior encoders plus the shared recurrent decoder."""

    def __init__(self, fm: ForwardModel, config: ModelConfig | None = None,
                 stats: NormStats | None = None):
        self.fm = fm
        self.config = config or ModelConfig()
        self.stats = stats or NormStats()
        self.trained_epochs = 0
        self._sig_shape = tuple(fm.signal_shape())
        self._meas_shape = tuple(fm.measurement_shape())
        cfg = self.config
        with torch.random.fork_rng():
            torch.manual_seed(cfg.seed)
            self.nets = self._build().to(cfg.torch_dtype)

    def _build(self) -> nn.ModuleDict:
        cfg = self.config
        sig_enc = _feature_encoder(self._sig_shape, cfg.enc_channels)
        rec_meas_enc = _feature_encoder(self._meas_shape, cfg.enc_channels)
        prior_meas_enc = _feature_encoder(self._meas_shape, cfg.enc_channels)
        rec_head = nets.GaussianHead(
            sig_enc.out_dim + rec_meas_enc.out_dim, cfg.latent_dim
        )
        prior_head = nets.GaussianHead(prior_meas_enc.out_dim, cfg.latent_dim)

        if len(self._sig_shape) == 1:
            decoder = nets.FcRecurrentDecoder(
                _feature_encoder(self._meas_shape, cfg.enc_channels),
                cfg.latent_dim, cfg.lstm_hidden, self._sig_shape[0],
            )
        else:
            n = self._sig_shape[0]
            if self._sig_shape[1] != n or self._meas_shape[:2] != (n, n):
                raise ConfigError(
                    "convolutional decoder requires square signal and "
                    "measurement grids of equal size"
                )
            decoder = nets.ConvRecurrentDecoder(
                _net_channels(self._meas_shape), n, cfg.latent_dim,
                _net_channels(self._sig_shape),
                embed_channels=cfg.enc_channels, hidden_ch=cfg.conv_hidden,
            )
        return nn.ModuleDict({
            "recognition_signal": sig_enc,
            "recognition_meas": rec_meas_enc,
            "recognition_head": rec_head,
            "prior_meas": prior_meas_enc,
            "prior_head": prior_head,
            "decoder": decoder,
        })

    # --- parameter groups -----------------------------------------------------

    def parameters(self):
        return self.nets.parameters()

    def phi_parameters(self):
        """Recognition-branch parameters (phi)."""
        for name in ("recognition_signal", "recognition_meas", "recognition_head"):
            yield from self.nets[name].parameters()

    def theta_parameters(self):
        """Prior-encoder and shared-decoder parameters (theta)."""
        for name in ("prior_meas", "prior_head", "decoder"):
            yield from self.nets[name].parameters()

    # --- input conversion -------------------------------------------------------

    def _as_batch(self, x, shape: tuple[int, ...], what: str) -> torch.Tensor:
        if isinstance(x, (SignalVec, MeasurementVec)):
            x = x.data
        if isinstance(x, np.ndarray):
            x = torch.as_tensor(x)
        x = x.to(self.config.torch_dtype)
        if tuple(x.shape) == shape:
            x = x.unsqueeze(0)
        if tuple(x.shape[1:]) != shape or x.ndim != len(shape) + 1:
            raise ShapeMismatchError(
                f"{what} shape {tuple(x.shape)} does not match native {shape} "
                "with one optional batch axis"
            )
        return x

    def _norm_meas(self, g: torch.Tensor) -> torch.Tensor:
        return (g - self.stats.meas_mean) / self.stats.meas_std

    def _norm_meas_resid(self, r: torch.Tensor) -> torch.Tensor:
        return r / self.stats.meas_std

    def _norm_sig_resid(self, r: torch.Tensor) -> torch.Tensor:
        return r / self.stats.sig_std

    # --- loss and retrieval operations ------------------------------------------

    def recognition_encode(self, f_residual, g_feedback) -> GaussianLatent:
        f = self._as_batch(f_residual, self._sig_shape, "signal residual")
        g = self._as_batch(g_feedback, self._meas_shape, "measurement feedback")
        feat = torch.cat(
            [
                self.nets["recognition_signal"](_to_net_layout(f, self._sig_shape)),
                self.nets["recognition_meas"](_to_net_layout(g, self._meas_shape)),
            ],
            dim=-1,
        )
        mean, std = self.nets["recognition_head"](feat)
        return GaussianLatent(mean, std)

    def prior_encode(self, g_feedback) -> GaussianLatent:
        g = self._as_batch(g_feedback, self._meas_shape, "measurement feedback")
        feat = self.nets["prior_meas"](_to_net_layout(g, self._meas_shape))
        mean, std = self.nets["prior_head"](feat)
        return GaussianLatent(mean, std)

    def decode_step(self, z: torch.Tensor, g_feedback, state):
        """One recurrence: (z, feedback, LSTM state) -> (delta f, new state)."""
        g = self._as_batch(g_feedback, self._meas_shape, "measurement feedback")
        delta, state = self.nets["decoder"](z, _to_net_layout(g, self._meas_shape), state)
        if len(self._sig_shape) == 1:
            return delta, state
        return _from_net_layout(delta, self._sig_shape), state

    # --- unrolls --------------------------------------------------------------------

    def _noise(self, batch: int, generator=None) -> torch.Tensor:
        cfg = self.config
        return torch.randn(
            cfg.samples, cfg.recurrences, batch, cfg.latent_dim,
            dtype=cfg.torch_dtype, generator=generator,
        )

    def _unroll(self, g: torch.Tensor, noise_t: torch.Tensor, f: torch.Tensor | None):
        """Run T recurrences of one branch for one latent draw.

        With f given this is the inference branch (z ~ q, returns summed KL);
        otherwise the retrieval branch (z ~ p). Returns (f_hat, kl_sum).
        """
        cfg = self.config
        batch = g.shape[0]
        f_hat = torch.zeros(
            batch, *self._sig_shape, dtype=cfg.torch_dtype, device=g.device
        )
        state = self.nets["decoder"].init_state(batch, g)
        kl_sum = torch.zeros(batch, dtype=cfg.torch_dtype, device=g.device)
        z = None
        for t in range(cfg.recurrences):
            if t == 0:
                g_fb = self._norm_meas(g)
            else:
                g_fb = self._norm_meas_resid(g - self.fm.apply_torch(f_hat))
            if z is None or not cfg.draw_once:
                if f is not None:
                    lat = self.recognition_encode(self._norm_sig_resid(f - f_hat), g_fb)
                    kl_sum = kl_sum + kl_divergence(lat, self.prior_encode(g_fb))
                else:
                    lat = self.prior_encode(g_fb)
                z = sample_latent(lat, noise_t[t])
            delta, state = self.decode_step(z, g_fb, state)
            f_hat = f_hat + delta
        return f_hat, kl_sum

    def _check_fm(self, fm: ForwardModel | None) -> None:
        if fm is not None and fm.system_id != self.fm.system_id:
            raise ConfigError(
                f"forward model system {fm.system_id} does not match "
                f"model system {self.fm.system_id}"
            )

    def elbo_inference(self, f, g, noise: torch.Tensor | None = None,
                       generator=None, fm: ForwardModel | None = None) -> torch.Tensor:
        """Mean inference lower bound: -KL - (1/(beta L)) sum_l ||f - f_q^(T)||^2."""
        self._check_fm(fm)
        cfg = self.config
        f = self._as_batch(f, self._sig_shape, "signal")
        g = self._as_batch(g, self._meas_shape, "measurement")
        if noise is None:
            noise = self._noise(g.shape[0], generator)
        kl = 0.0
        recon = 0.0
        for draw in range(cfg.samples):
            f_hat, kl_sum = self._unroll(g, noise[draw], f)
            kl = kl + kl_sum
            recon = recon + ((f - f_hat) ** 2).flatten(1).sum(dim=1)
        per_record = -kl / cfg.samples - recon / (cfg.beta * cfg.samples)
        return per_record.mean()

    def consistency_bound(self, g, noise: torch.Tensor | None = None,
                          generator=None, fm: ForwardModel | None = None) -> torch.Tensor:
        """Mean retrieval bound: -(1/(alpha L)) sum_l ||A(f_p^(T)) - g||^2."""
        self._check_fm(fm)
        cfg = self.config
        g = self._as_batch(g, self._meas_shape, "measurement")
        if noise is None:
            noise = self._noise(g.shape[0], generator)
        resid = 0.0
        for draw in range(cfg.samples):
            f_hat, _ = self._unroll(g, noise[draw], None)
            resid = resid + ((self.fm.apply_torch(f_hat) - g) ** 2).flatten(1).sum(dim=1)
        return (-resid / (cfg.alpha * cfg.samples)).mean()

    def hybrid_loss(self, f, g, noise_inf: torch.Tensor | None = None,
                    noise_ret: torch.Tensor | None = None, generator=None,
                    fm: ForwardModel | None = None) -> torch.Tensor:
        """L_h = gamma * L + (1 - gamma) * L_r; the trainer minimizes -L_h."""
        gamma = self.config.gamma
        total = 0.0
        if gamma > 0.0:
            total = total + gamma * self.elbo_inference(
                f, g, noise=noise_inf, generator=generator, fm=fm
            )
        if gamma < 1.0:
            total = total + (1.0 - gamma) * self.consistency_bound(
                g, noise=noise_ret, generator=generator, fm=fm
            )
        return total

    def retrieve_instances(self, g, n: int = 1, seed: int = 0) -> list[SignalVec]:
        """Draw n independent reconstructions from the retrieval branch."""
        if n < 1:
            raise ConfigError("n must be >= 1")
        for param in self.nets.parameters():
            if not torch.isfinite(param).all():
                raise ModelStateError("model parameters contain non-finite values")
        g = self._as_batch(g, self._meas_shape, "measurement")
        if g.shape[0] != 1:
            raise ShapeMismatchError("retrieve_instances expects a single measurement")
        generator = torch.Generator().manual_seed(seed)
        cfg = self.config
        noise = torch.randn(
            cfg.recurrences, n, cfg.latent_dim,
            dtype=cfg.torch_dtype, generator=generator,
        )
        with torch.no_grad():
            f_hat, _ = self._unroll(g.expand(n, *self._meas_shape).clone(), noise, None)
        data = f_hat.to(torch.float64).numpy()
        return [SignalVec(self.fm.system_id, data[i]) for i in range(n)]

    # --- artifact I/O ------------------------------------------------------------------

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        meta = {
            "model": json.loads(self.config.to_json()),
            "system": self.fm.system_id.value,
            "fm_config": json.loads(_fm_config_json(self.fm)),
            "trained_epochs": self.trained_epochs,
        }
        (directory / "config.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
        (directory / "stats.json").write_text(
            json.dumps(dataclasses.asdict(self.stats), indent=2, sort_keys=True)
        )
        save_module_params(directory, self.nets)

    @classmethod
    def load(cls, directory) -> "VariationalModel":
        directory = Path(directory)
        meta = json.loads((directory / "config.json").read_text())
        config = ModelConfig(**meta["model"])
        stats = NormStats(**json.loads((directory / "stats.json").read_text()))
        fm = build_forward_model(meta["system"], meta["fm_config"])
        model = cls(fm, config, stats)
        model.trained_epochs = int(meta.get("trained_epochs", 0))
        load_module_params(directory, model.nets)
        return model


def save_module_params(directory, module: nn.Module) -> None:
    """Write every state-dict tensor as a tensor file plus a name manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = []
    for idx, (name, tensor) in enumerate(sorted(module.state_dict().items())):
        fname = f"{idx:04d}.tns"
        tensor_write(directory / fname, tensor.detach().cpu().numpy())
        manifest.append({"name": name, "file": fname})
    (directory / "params.manifest.json").write_text(
        json.dumps({"params": manifest}, indent=2, sort_keys=True)
    )


def load_module_params(directory, module: nn.Module) -> None:
    """Restore a module's state dict written by save_module_params."""
    directory = Path(directory)
    manifest = json.loads((directory / "params.manifest.json").read_text())
    state = module.state_dict()
    for entry in manifest["params"]:
        if entry["name"] not in state:
            raise ModelStateError(f"unknown parameter {entry['name']!r} in manifest")
        arr = tensor_read(directory / entry["file"])
        target = state[entry["name"]]
        if tuple(arr.shape) != tuple(target.shape):
            raise ModelStateError(
                f"parameter {entry['name']!r} has shape {arr.shape}, "
                f"expected {tuple(target.shape)}"
            )
        with torch.no_grad():
            target.copy_(torch.as_tensor(arr, dtype=target.dtype))


def _fm_config_json(fm: ForwardModel) -> str:
    config = getattr(fm, "config", None)
    if config is None or not hasattr(config, "to_json"):
        raise ConfigError(f"forward model {type(fm).__name__} has no serializable config")
    return config.to_json()


def build_forward_model(system: str, fm_config: dict) -> ForwardModel:
    """Reconstruct a forward model from its artifact entry."""
    text = json.dumps(fm_config)
    system_id = SystemId(system)
    if system_id == SystemId.STREAKING:
        from .streaking import StreakingConfig, StreakTraceModel

        return StreakTraceModel(StreakingConfig.from_json(text))
    if system_id == SystemId.VIDEO_CS:
        from .video_cs import VideoCsConfig, VideoCsModel

        return VideoCsModel(VideoCsConfig.from_json(text))
    if system_id == SystemId.HOLOGRAM:
        from .fresnel import FresnelConfig, HologramModel

        return HologramModel(FresnelConfig.from_json(text))
    if system_id == SystemId.TOY_TWO_CLUSTER:
        from .datasets import ToyQuadraticConfig, ToyQuadraticModel

        return ToyQuadraticModel(ToyQuadraticConfig.from_json(text))
    raise ConfigError(f"unknown system {system!r}")
