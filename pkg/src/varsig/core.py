"""Shared data model: signals, measurements, dataset records, forward-model interface.

Every measurement system maps a signal f (native shape) to a measurement g
through a deterministic operator A. Signals also have a canonical flat-vector
view: row-major (C order) over the native axes, which for video frames are
ordered (y, x, channel, frame). The flat view is what matrix-form oracles and
the file format operate on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DomainError, ShapeMismatchError


class SystemId(str, Enum):
    STREAKING = "streaking"
    VIDEO_CS = "video_cs"
    HOLOGRAM = "hologram"
    # Synthetic sign-ambiguous system used by the averaging-pathology study;
    # not one of the three physical systems but shares all interfaces.
    TOY_TWO_CLUSTER = "toy_two_cluster"


# Default native signal/measurement shapes at production scale. Tests and toy
# problems may build models with smaller grids; shapes are then taken from the
# model config rather than this table.
DEFAULT_SIGNAL_SHAPES = {
    SystemId.STREAKING: (440,),
    SystemId.VIDEO_CS: (64, 64, 3, 4),
    SystemId.HOLOGRAM: (64, 64),
    SystemId.TOY_TWO_CLUSTER: (16,),
}

DEFAULT_MEASUREMENT_SHAPES = {
    SystemId.STREAKING: (256, 35),
    SystemId.VIDEO_CS: (64, 64, 3),
    SystemId.HOLOGRAM: (64, 64),
    SystemId.TOY_TWO_CLUSTER: (16,),
}

# Systems whose measurements are physical intensities and therefore nonnegative.
NONNEG_MEASUREMENT = {
    SystemId.STREAKING: True,
    SystemId.VIDEO_CS: False,
    SystemId.HOLOGRAM: True,
    SystemId.TOY_TWO_CLUSTER: True,
}


def _as_finite_array(data, name: str) -> np.ndarray:
    arr = np.asarray(data)
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float64)
    if arr.size and not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class SignalVec:
    """A retrieval target in its system's native shape."""

    system_id: SystemId
    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _as_finite_array(self.data, "SignalVec.data"))

    @property
    def flat_len(self) -> int:
        return int(self.data.size)

    def flat(self) -> np.ndarray:
        """Canonical flat view: row-major over the native axes."""
        return np.ascontiguousarray(self.data).reshape(-1)


@dataclass(frozen=True)
class MeasurementVec:
    """An observation produced by a forward model."""

    system_id: SystemId
    data: np.ndarray
    nonneg: bool | None = None

    def __post_init__(self):
        object.__setattr__(self, "data", _as_finite_array(self.data, "MeasurementVec.data"))
        if self.nonneg is None:
            object.__setattr__(self, "nonneg", NONNEG_MEASUREMENT[self.system_id])
        if self.nonneg and self.data.size and self.data.min() < 0:
            raise DomainError("nonneg measurement contains negative entries")

    def flat(self) -> np.ndarray:
        return np.ascontiguousarray(self.data).reshape(-1)


@dataclass(frozen=True)
class DatasetRecord:
    """One (signal, measurement) pair plus the seed that generated it."""

    f: SignalVec
    g: MeasurementVec
    seed: int
    meta: dict = field(default_factory=dict)


def flatten(f: SignalVec) -> np.ndarray:
    """Flatten a signal to its canonical row-major vector."""
    return f.flat()


def unflatten(vec, system_id: SystemId, shape=None) -> SignalVec:
    """Inverse of :func:`flatten`. `shape` defaults to the production-scale shape."""
    vec = np.asarray(vec)
    if vec.ndim != 1:
        raise ShapeMismatchError(f"expected a flat vector, got shape {vec.shape}")
    if shape is None:
        shape = DEFAULT_SIGNAL_SHAPES[system_id]
    n = int(np.prod(shape)) if len(shape) else 1
    if vec.size != n:
        raise ShapeMismatchError(f"flat length {vec.size} does not match shape {shape}")
    return SignalVec(system_id, vec.reshape(shape))


class ForwardModel:
    """A named deterministic operator A mapping signals to measurements.

    Subclasses implement `_apply` on the raw native array and may provide an
    adjoint (linear models) and a differentiable torch twin via `apply_torch`.
    `apply` is pure: same input, same output, safe for concurrent use.
    """

    system_id: SystemId
    is_linear: bool = False

    @property
    def config(self):
        raise NotImplementedError

    def signal_shape(self) -> tuple:
        raise NotImplementedError

    def measurement_shape(self) -> tuple:
        raise NotImplementedError

    def _apply(self, data: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def apply(self, f: SignalVec) -> MeasurementVec:
        if f.system_id != self.system_id:
            raise ShapeMismatchError(
                f"signal system {f.system_id} does not match model {self.system_id}"
            )
        if tuple(f.data.shape) != tuple(self.signal_shape()):
            raise ShapeMismatchError(
                f"signal shape {f.data.shape} does not match model {self.signal_shape()}"
            )
        out = self._apply(np.asarray(f.data, dtype=np.float64))
        return MeasurementVec(self.system_id, out, nonneg=NONNEG_MEASUREMENT[self.system_id])

    def apply_flat(self, vec: np.ndarray) -> np.ndarray:
        """Apply on the canonical flat vector, returning the flat measurement."""
        f = unflatten(vec, self.system_id, self.signal_shape())
        return self.apply(f).flat()

    def apply_torch(self, f_batch):
        """Differentiable twin acting on a torch batch in native shape."""
        raise NotImplementedError
