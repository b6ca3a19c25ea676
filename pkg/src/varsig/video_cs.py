"""Coded-aperture video compressive sensing forward model.

K high-speed frames are each multiplied by a binary spatial mask and summed
into a single detector image:

    g = sum_{i=1..K} M_i (.) f_i,       M_i = m_i (x) 1^{1x1x3},

an exactly linear operator. Signals are stored natively as (y, x, channel,
frame) arrays; the canonical flat ordering is row-major over those axes, so
in matrix form A has one 1-entry per (pixel, frame) pair where the mask is
open. Masks are drawn i.i.d. Bernoulli(p) from numpy's Philox counter-based
generator seeded with SeedSequence((seed, frame_index)) — a documented,
platform-stable splittable stream derivation.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse

from . import accel
from .core import ForwardModel, SignalVec, SystemId
from .errors import ConfigError, ShapeMismatchError
from .tensorfile import tensor_read, tensor_write


@dataclass(frozen=True)
class VideoCsConfig:
    """Geometry and mask stream of the compression operator."""

    n: int = 64
    k: int = 4
    channels: int = 3
    mask_p: float = 0.5
    mask_seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.k < 1 or self.channels < 1:
            raise ConfigError("n, k, channels must be positive")
        if not 0.0 <= self.mask_p <= 1.0:
            raise ConfigError("mask_p must lie in [0, 1]")

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "VideoCsConfig":
        return cls(**json.loads(text))


@dataclass(frozen=True)
class MaskSet:
    """K binary masks of shape (n, n) plus the seed that produced them."""

    m: np.ndarray  # (k, n, n) float64 of {0.0, 1.0}
    seed: int
    probability: float = 0.5

    def __post_init__(self):
        m = np.ascontiguousarray(self.m, dtype=np.float64)
        if m.ndim != 3:
            raise ShapeMismatchError(f"masks must be (k, n, n), got {m.shape}")
        vals = np.unique(m)
        if not np.all(np.isin(vals, (0.0, 1.0))):
            raise ConfigError("masks must be binary")
        object.__setattr__(self, "m", m)

    @property
    def yxt(self) -> np.ndarray:
        """Masks transposed to (y, x, frame) for the element-wise kernels."""
        return np.ascontiguousarray(np.moveaxis(self.m, 0, -1))

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        tensor_write(directory / "masks.tns", self.m.astype(np.float32))
        manifest = {"seed": int(self.seed), "probability": self.probability}
        (directory / "masks.json").write_text(json.dumps(manifest, indent=2))

    @classmethod
    def load(cls, directory) -> "MaskSet":
        directory = Path(directory)
        m = tensor_read(directory / "masks.tns").astype(np.float64)
        manifest = json.loads((directory / "masks.json").read_text())
        return cls(m, manifest["seed"], manifest["probability"])


def generate_masks(seed: int, n: int = 64, k: int = 4, p: float = 0.5) -> MaskSet:
    """Draw K i.i.d. Bernoulli(p) masks; frame i uses Philox(SeedSequence((seed, i)))."""
    m = np.empty((k, n, n))
    for i in range(k):
        gen = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, i))))
        m[i] = (gen.random((n, n)) < p).astype(np.float64)
    return MaskSet(m, seed, p)


class VideoCsModel(ForwardModel):
    """Forward model A: (n, n, 3, k) frames -> (n, n, 3) coded measurement."""

    system_id = SystemId.VIDEO_CS
    is_linear = True

    def __init__(self, config: VideoCsConfig | None = None, masks: MaskSet | None = None):
        self._config = config or VideoCsConfig()
        c = self._config
        self._masks = masks if masks is not None else generate_masks(
            c.mask_seed, c.n, c.k, c.mask_p
        )
        if self._masks.m.shape != (c.k, c.n, c.n):
            raise ShapeMismatchError(
                f"mask shape {self._masks.m.shape} does not match config ({c.k}, {c.n}, {c.n})"
            )

    @property
    def config(self) -> VideoCsConfig:
        return self._config

    @property
    def masks(self) -> MaskSet:
        return self._masks

    def signal_shape(self) -> tuple[int, ...]:
        c = self._config
        return (c.n, c.n, c.channels, c.k)

    def measurement_shape(self) -> tuple[int, ...]:
        c = self._config
        return (c.n, c.n, c.channels)

    def _apply(self, data: np.ndarray) -> np.ndarray:
        return accel.video_compress(data, self._masks.yxt)

    def adjoint(self, g: np.ndarray) -> np.ndarray:
        """A^T g: spread the measurement through each mask into frame slots."""
        g = np.asarray(g, dtype=np.float64)
        if g.shape != self.measurement_shape():
            raise ShapeMismatchError(
                f"measurement shape {g.shape} != {self.measurement_shape()}"
            )
        return accel.video_adjoint(g, self._masks.yxt)

    def as_matrix(self) -> sparse.csr_matrix:
        """Explicit sparse A with A @ flatten(f) == flatten(compress(f))."""
        c = self._config
        n_meas = c.n * c.n * c.channels
        yxt = self._masks.yxt  # (n, n, k)
        rows, cols, vals = [], [], []
        for p in range(n_meas):
            pix = p // c.channels  # raveled (y, x)
            y, x = divmod(pix, c.n)
            for t in range(c.k):
                if yxt[y, x, t] != 0.0:
                    rows.append(p)
                    cols.append(p * c.k + t)
                    vals.append(1.0)
        mat = sparse.coo_matrix(
            (vals, (rows, cols)), shape=(n_meas, n_meas * c.k)
        )
        return mat.tocsr()

    def norm_bound(self) -> float:
        """Exact operator norm squared: max over pixels of the open-mask count."""
        return float(np.max(np.sum(self._masks.m, axis=0)))

    def apply_torch(self, f_tensor):
        from .torch_forward import video_compress_torch

        return video_compress_torch(f_tensor, self._masks.yxt)
