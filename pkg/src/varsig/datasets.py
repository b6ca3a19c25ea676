"""Dataset synthesis, IDX image parsing, and the on-disk dataset layout.

Synthetic corpora for the three measurement systems plus a toy two-cluster
set whose measurement operator g = (W f)^2 maps f and -f to the same g — the
canonical ambiguity that separates point estimators from distributional ones.

On disk a dataset is `<root>/<system>/<split>/` holding `<i>.f.tns` and
`<i>.g.tns` tensor-file pairs plus a `manifest.json` with the record count,
shapes, generator seed, and the forward-model configuration used.

Hologram objects come either from an MNIST-format IDX image file (the
standard big-endian layout, magic 0x00000803) or, when no corpus is supplied,
from a built-in bitmap-font digit renderer that writes the same IDX format.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    DatasetRecord,
    ForwardModel,
    MeasurementVec,
    SignalVec,
    SystemId,
)
from .errors import ConfigError, DomainError, ShapeMismatchError, TensorFormatError
from .fresnel import FresnelConfig, HologramModel
from .streaking import StreakingConfig, StreakTraceModel, random_pulse, shift_cep
from .tensorfile import tensor_read, tensor_write
from .video_cs import VideoCsConfig, VideoCsModel


# --- toy two-cluster system ---------------------------------------------------


@dataclass(frozen=True)
class ToyQuadraticConfig:
    """g = (W f)^2 with a fixed symmetric positive-definite W drawn from seed."""

    n: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("n must be >= 1")

    def matrix(self) -> np.ndarray:
        rng = np.random.default_rng(np.random.SeedSequence((0x70F, self.seed)))
        m = rng.normal(size=(self.n, self.n)) / np.sqrt(self.n)
        return m @ m.T + 0.5 * np.eye(self.n)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ToyQuadraticConfig":
        return cls(**json.loads(text))


class ToyQuadraticModel(ForwardModel):
    """Sign-blind quadratic measurement: A(f) = (W f)^2 elementwise."""

    system_id = SystemId.TOY_TWO_CLUSTER
    is_linear = False

    def __init__(self, config: ToyQuadraticConfig | None = None):
        self._config = config or ToyQuadraticConfig()
        self._w = self._config.matrix()

    @property
    def config(self) -> ToyQuadraticConfig:
        return self._config

    def signal_shape(self) -> tuple[int, ...]:
        return (self._config.n,)

    def measurement_shape(self) -> tuple[int, ...]:
        return (self._config.n,)

    def _apply(self, data: np.ndarray) -> np.ndarray:
        return (self._w @ data) ** 2

    def apply_torch(self, f_tensor):
        import torch

        w = torch.as_tensor(self._w, dtype=f_tensor.dtype, device=f_tensor.device)
        return (f_tensor @ w.transpose(0, 1)) ** 2


# --- IDX image format ------------------------------------------------------------

_IDX_IMAGES_MAGIC = 0x00000803
_IDX_LABELS_MAGIC = 0x00000801


def read_idx_images(path) -> np.ndarray:
    """Parse an IDX3 unsigned-byte image file into (count, rows, cols) uint8."""
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise TensorFormatError("IDX image header truncated", offset=len(raw))
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != _IDX_IMAGES_MAGIC:
        raise TensorFormatError(f"bad IDX image magic 0x{magic:08x}", offset=0)
    expected = 16 + count * rows * cols
    if len(raw) != expected:
        raise TensorFormatError(
            f"IDX payload is {len(raw) - 16} bytes, expected {expected - 16}",
            offset=16,
        )
    data = np.frombuffer(raw, dtype=np.uint8, offset=16)
    return data.reshape(count, rows, cols).copy()


def read_idx_labels(path) -> np.ndarray:
    """Parse an IDX1 unsigned-byte label file into (count,) uint8."""
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise TensorFormatError("IDX label header truncated", offset=len(raw))
    magic, count = struct.unpack(">II", raw[:8])
    if magic != _IDX_LABELS_MAGIC:
        raise TensorFormatError(f"bad IDX label magic 0x{magic:08x}", offset=0)
    if len(raw) != 8 + count:
        raise TensorFormatError(
            f"IDX payload is {len(raw) - 8} bytes, expected {count}", offset=8
        )
    return np.frombuffer(raw, dtype=np.uint8, offset=8).copy()


def write_idx_images(path, images: np.ndarray) -> None:
    """Write (count, rows, cols) uint8 images in IDX3 format."""
    images = np.asarray(images)
    if images.ndim != 3 or images.dtype != np.uint8:
        raise DomainError("images must be a uint8 array of shape (count, rows, cols)")
    header = struct.pack(">IIII", _IDX_IMAGES_MAGIC, *images.shape)
    Path(path).write_bytes(header + images.tobytes(order="C"))


# --- bitmap digit glyphs -----------------------------------------------------------

# 5x7 bitmap font for digits 0-9, one string row per scanline.
_DIGIT_ROWS = {
    0: ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    1: ("00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    2: ("01110", "10001", "00001", "00110", "01000", "10000", "11111"),
    3: ("11110", "00001", "00001", "01110", "00001", "00001", "11110"),
    4: ("00010", "00110", "01010", "10010", "11111", "00010", "00010"),
    5: ("11111", "10000", "11110", "00001", "00001", "10001", "01110"),
    6: ("00110", "01000", "10000", "11110", "10001", "10001", "01110"),
    7: ("11111", "00001", "00010", "00100", "01000", "01000", "01000"),
    8: ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
    9: ("01110", "10001", "10001", "01111", "00001", "00010", "01100"),
}


def _digit_bitmap(d: int) -> np.ndarray:
    rows = _DIGIT_ROWS[d]
    return np.array([[int(ch) for ch in row] for row in rows], dtype=np.float64)


def _render_digit(rng: np.random.Generator, size: int) -> np.ndarray:
    """Rasterize one random digit glyph onto a size x size float image."""
    digit = int(rng.integers(0, 10))
    scale = int(rng.integers(max(2, size // 16), max(3, size // 7)))
    glyph = np.kron(_digit_bitmap(digit), np.ones((scale, scale)))
    gh, gw = glyph.shape
    if gh > size or gw > size:
        glyph = glyph[:size, :size]
        gh, gw = glyph.shape
    y0 = int(rng.integers(0, size - gh + 1))
    x0 = int(rng.integers(0, size - gw + 1))
    img = np.zeros((size, size))
    img[y0 : y0 + gh, x0 : x0 + gw] = glyph
    return img * float(rng.uniform(0.6, 1.0))


def synth_digit_idx(path, count: int, size: int = 64, seed: int = 0) -> None:
    """Write a synthetic digit-glyph corpus in MNIST-compatible IDX format."""
    rng = np.random.default_rng(np.random.SeedSequence((0xD16, seed)))
    images = np.stack(
        [(255.0 * _render_digit(rng, size)).astype(np.uint8) for _ in range(count)]
    )
    write_idx_images(path, images)


# --- per-system synthesis ------------------------------------------------------------


def synth_pulse_dataset(
    cfg: StreakingConfig,
    count: int,
    seed: int = 0,
    cep_duplicate_frac: float = 0.05,
) -> list[DatasetRecord]:
    """Random pulse pairs; a fraction are CEP-rotated copies of earlier records.

    The duplicates share a measurement with their source record (the trace is
    CEP-invariant), planting exact retrieval ambiguities in the corpus.
    """
    model = StreakTraceModel(cfg)
    rng = np.random.default_rng(np.random.SeedSequence((0x57, seed)))
    records: list[DatasetRecord] = []
    for i in range(count):
        if records and rng.random() < cep_duplicate_frac:
            src = records[int(rng.integers(0, len(records)))]
            f = shift_cep(src.f, cfg, float(rng.uniform(-np.pi, np.pi)))
            meta = {"cep_duplicate_of": src.seed}
        else:
            f = random_pulse(cfg, rng)
            meta = {}
        records.append(DatasetRecord(f=f, g=model.apply(f), seed=i, meta=meta))
    return records


def _disc(n: int, cy: float, cx: float, r: float) -> np.ndarray:
    yy, xx = np.mgrid[0:n, 0:n]
    return ((yy - cy) ** 2 + (xx - cx) ** 2 <= r * r).astype(np.float64)


def _rect(n: int, cy: float, cx: float, hy: float, hx: float) -> np.ndarray:
    yy, xx = np.mgrid[0:n, 0:n]
    return ((np.abs(yy - cy) <= hy) & (np.abs(xx - cx) <= hx)).astype(np.float64)


def _moving_clip(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    """k RGB frames of 1-3 rigidly translating shapes on a dark background."""
    clip = np.zeros((n, n, 3, k))
    for _ in range(int(rng.integers(1, 4))):
        disc = rng.random() < 0.5
        cy, cx = rng.uniform(0.2 * n, 0.8 * n, size=2)
        vy, vx = rng.uniform(-0.06 * n, 0.06 * n, size=2)
        size = rng.uniform(0.08 * n, 0.2 * n)
        color = rng.uniform(0.3, 1.0, size=3)
        for t in range(k):
            y, x = cy + vy * t, cx + vx * t
            shape = _disc(n, y, x, size) if disc else _rect(n, y, x, size, 0.7 * size)
            clip[..., t] = np.maximum(clip[..., t], shape[..., None] * color)
    return clip


def synth_video_dataset(
    cfg: VideoCsConfig, count: int, seed: int = 0, image_dir=None
) -> list[DatasetRecord]:
    """Translating-shape clips (or crops of a supplied image directory)."""
    model = VideoCsModel(cfg)
    rng = np.random.default_rng(np.random.SeedSequence((0xF1, seed)))
    sources = None
    if image_dir is not None:
        sources = sorted(Path(image_dir).glob("*.tns"))
        if not sources:
            raise ConfigError(f"no .tns images found in {image_dir}")
    records = []
    for i in range(count):
        if sources is None:
            clip = _moving_clip(rng, cfg.n, cfg.k)
        else:
            base = tensor_read(sources[int(rng.integers(0, len(sources)))])
            clip = _clip_from_image(base, rng, cfg.n, cfg.k)
        f = SignalVec(SystemId.VIDEO_CS, clip)
        records.append(DatasetRecord(f=f, g=model.apply(f), seed=i))
    return records


def _clip_from_image(img: np.ndarray, rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    """Slide an n x n crop window across a larger RGB image to make k frames."""
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeMismatchError(f"source image shape {img.shape} is not (H, W, 3)")
    h, w, _ = img.shape
    if h < n or w < n:
        raise ShapeMismatchError(f"source image {h}x{w} smaller than crop {n}")
    max_step = max(1, n // 16)
    y = int(rng.integers(0, h - n + 1))
    x = int(rng.integers(0, w - n + 1))
    vy = int(rng.integers(-max_step, max_step + 1))
    vx = int(rng.integers(-max_step, max_step + 1))
    clip = np.zeros((n, n, 3, k))
    for t in range(k):
        yy = int(np.clip(y + vy * t, 0, h - n))
        xx = int(np.clip(x + vx * t, 0, w - n))
        clip[..., t] = img[yy : yy + n, xx : xx + n]
    span = clip.max()
    return clip / span if span > 0 else clip


def synth_hologram_dataset(
    cfg: FresnelConfig, count: int, seed: int = 0, idx_path=None
) -> list[DatasetRecord]:
    """Digit objects (built-in glyphs or an MNIST-format IDX corpus)."""
    model = HologramModel(cfg)
    rng = np.random.default_rng(np.random.SeedSequence((0xB0, seed)))
    images = read_idx_images(idx_path) if idx_path is not None else None
    records = []
    for i in range(count):
        if images is None:
            obj = _render_digit(rng, cfg.n)
        else:
            pick = images[int(rng.integers(0, images.shape[0]))]
            obj = _resize_nearest(pick.astype(np.float64) / 255.0, cfg.n)
        f = SignalVec(SystemId.HOLOGRAM, obj)
        records.append(DatasetRecord(f=f, g=model.apply(f), seed=i))
    return records


def _resize_nearest(img: np.ndarray, n: int) -> np.ndarray:
    idx_y = (np.arange(n) * img.shape[0] // n).clip(0, img.shape[0] - 1)
    idx_x = (np.arange(n) * img.shape[1] // n).clip(0, img.shape[1] - 1)
    return img[np.ix_(idx_y, idx_x)]


def synth_toy_dataset(
    cfg: ToyQuadraticConfig, count: int, seed: int = 0, jitter: float = 0.05
) -> list[DatasetRecord]:
    """Two clusters at +/- f0: every g admits two well-separated explanations."""
    model = ToyQuadraticModel(cfg)
    rng = np.random.default_rng(np.random.SeedSequence((0x70, seed)))
    f0 = rng.normal(size=cfg.n)
    f0 /= np.linalg.norm(f0)
    records = []
    for i in range(count):
        sign = 1.0 if rng.random() < 0.5 else -1.0
        f = SignalVec(
            SystemId.TOY_TWO_CLUSTER,
            sign * f0 + jitter * rng.normal(size=cfg.n),
        )
        records.append(DatasetRecord(f=f, g=model.apply(f), seed=i))
    return records


# --- on-disk layout --------------------------------------------------------------------


def save_dataset(records: list[DatasetRecord], root, split: str,
                 fm: ForwardModel, seed: int | None = None) -> Path:
    """Write records under <root>/<system>/<split>/ with a manifest."""
    if not records:
        raise ConfigError("refusing to write an empty dataset")
    system = records[0].f.system_id
    directory = Path(root) / system.value / split
    directory.mkdir(parents=True, exist_ok=True)
    for i, rec in enumerate(records):
        if rec.f.system_id != system or rec.g.system_id != system:
            raise ConfigError("records mix systems")
        tensor_write(directory / f"{i:06d}.f.tns", rec.f.data)
        tensor_write(directory / f"{i:06d}.g.tns", rec.g.data)
    manifest = {
        "system": system.value,
        "count": len(records),
        "signal_shape": list(records[0].f.data.shape),
        "measurement_shape": list(records[0].g.data.shape),
        "seed": seed,
        "fm_config": json.loads(fm.config.to_json()),
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return directory


def load_dataset(root, system: SystemId | str, split: str) -> list[DatasetRecord]:
    """Read records written by save_dataset."""
    system = SystemId(system)
    directory = Path(root) / system.value / split
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise ConfigError(f"no dataset manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    if manifest["system"] != system.value:
        raise ConfigError(
            f"manifest system {manifest['system']!r} != requested {system.value!r}"
        )
    records = []
    for i in range(int(manifest["count"])):
        f = SignalVec(system, tensor_read(directory / f"{i:06d}.f.tns"))
        g = MeasurementVec(system, tensor_read(directory / f"{i:06d}.g.tns"))
        records.append(DatasetRecord(f=f, g=g, seed=i))
    return records


def dataset_manifest(root, system: SystemId | str, split: str) -> dict:
    system = SystemId(system)
    path = Path(root) / system.value / split / "manifest.json"
    if not path.exists():
        raise ConfigError(f"no dataset manifest at {path}")
    return json.loads(path.read_text())
