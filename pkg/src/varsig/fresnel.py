"""Fresnel in-line holography forward model.

The object field (real-valued on a 64x64 grid) propagates a distance z under
the paraxial Fresnel kernel and interferes with an on-axis plane reference:

    E_d = E_o * F,   F[i, j] = exp[i*pi*((x_i^2 + y_j^2)/(z*lambda))],
    I   = |a_ref + E_d|^2,

where * is a two-dimensional discrete convolution, the kernel is sampled at
the 64x64 pixel centers x_i = (i - 32)*dx, and no 1/(i*lambda*z) prefactor is
applied — the operator is the literal sampled-kernel convolution, with a_ref
setting the interference scale. The convolution is evaluated exactly (linear,
not circular) by a 128x128 zero-padded FFT; the output window is aligned so a
unit impulse at the grid center reproduces the sampled kernel.

Back-propagation convolves with the conjugate kernel and a scalar gain. The
64x64 kernel truncation makes the forward/backward pair non-unitary: the
truncated chirp's transfer function carries O(10%) Gibbs ripple across the
passband, so back_propagate(fresnel_propagate(E)) reproduces smooth central
fields only to ~0.15 relative error at the optimal gain (~a^2 where
a = dx^2/(z*lambda)). That residual — including the twin image when
back-propagating an intensity's square root — is physical to this operator
pair, not a bug; the physics-informed baseline uses back-propagation as a
feature map, which this accuracy fully supports.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from .core import ForwardModel, SignalVec, SystemId
from .errors import ConfigError, ShapeMismatchError


@dataclass(frozen=True)
class FresnelConfig:
    """Optical geometry of the in-line hologram recording."""

    wavelength_m: float = 635e-9
    distance_m: float = 0.400
    pixel_m: float = 50e-6
    n: int = 64
    a_ref: float = 1.0

    def __post_init__(self):
        for name in ("wavelength_m", "distance_m", "pixel_m"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.n < 2:
            raise ConfigError("grid must have at least 2 pixels")
        # adjacent-pixel phase increment of the chirp at the grid edge must
        # stay below pi, or the sampled kernel aliases
        if np.pi * self.chirp_coeff * (self.n - 1) >= np.pi:
            raise ConfigError(
                "kernel undersampled: pixel/distance/wavelength combination "
                "violates the edge phase-increment bound"
            )

    @property
    def chirp_coeff(self) -> float:
        """a = dx^2 / (z * lambda); kernel phase is pi*a*(i^2 + j^2)."""
        return self.pixel_m**2 / (self.distance_m * self.wavelength_m)

    def kernel(self) -> np.ndarray:
        q = np.arange(self.n) - self.n // 2
        r2 = q[:, None] ** 2 + q[None, :] ** 2
        return np.exp(1j * np.pi * self.chirp_coeff * r2)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FresnelConfig":
        return cls(**json.loads(text))


def _conv_aligned(field: np.ndarray, kernel: np.ndarray, n: int) -> np.ndarray:
    """Linear 2D convolution of two n x n arrays, windowed so the kernel's
    center index (n//2) is the zero offset."""
    pad = 2 * n
    full = np.fft.ifft2(np.fft.fft2(field, (pad, pad)) * np.fft.fft2(kernel, (pad, pad)))
    half = n // 2
    return full[half : half + n, half : half + n]


def fresnel_propagate(e_o: np.ndarray, cfg: FresnelConfig) -> np.ndarray:
    """Propagate the object field to the detector plane: E_d = E_o * F."""
    e_o = np.asarray(e_o)
    if e_o.shape != (cfg.n, cfg.n):
        raise ShapeMismatchError(f"field shape {e_o.shape} != ({cfg.n}, {cfg.n})")
    return _conv_aligned(e_o.astype(np.complex128), cfg.kernel(), cfg.n)


def hologram_intensity(e_d: np.ndarray, a_ref: float) -> np.ndarray:
    """I = |a_ref + E_d|^2 elementwise; nonnegative by construction."""
    total = a_ref + np.asarray(e_d, dtype=np.complex128)
    return (total.real**2 + total.imag**2).astype(np.float64)


def back_propagate(field: np.ndarray, cfg: FresnelConfig, gain: float | None = None) -> np.ndarray:
    """Convolve with the conjugate kernel (propagation by -z).

    `gain` rescales the result; the default a^2 = (dx^2/(z*lambda))^2 is the
    stationary-phase normalization that makes the round trip approximately
    unit-gain. See the module docstring for the accuracy limit.
    """
    field = np.asarray(field, dtype=np.complex128)
    if field.shape != (cfg.n, cfg.n):
        raise ShapeMismatchError(f"field shape {field.shape} != ({cfg.n}, {cfg.n})")
    if gain is None:
        gain = cfg.chirp_coeff**2
    return gain * _conv_aligned(field, np.conj(cfg.kernel()), cfg.n)


class HologramModel(ForwardModel):
    """Forward model A: real object field -> in-line hologram intensity."""

    system_id = SystemId.HOLOGRAM
    is_linear = False

    def __init__(self, config: FresnelConfig | None = None):
        self._config = config or FresnelConfig()

    @property
    def config(self) -> FresnelConfig:
        return self._config

    def signal_shape(self) -> tuple[int, ...]:
        return (self._config.n, self._config.n)

    def measurement_shape(self) -> tuple[int, ...]:
        return (self._config.n, self._config.n)

    def _apply(self, data: np.ndarray) -> np.ndarray:
        e_d = fresnel_propagate(data, self._config)
        return hologram_intensity(e_d, self._config.a_ref)

    def apply_torch(self, f_tensor):
        from .torch_forward import hologram_torch

        return hologram_torch(f_tensor, self._config)
