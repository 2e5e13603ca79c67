"""Rendered frame datasets and their on-disk format.

A dataset is a flat list of (image, label) records rendered from a set of
generated tracks at arc positions drawn uniformly over each track, then
shuffled.  Because arc positions are uniform over length and track geometry
is mostly straight or gently curved, the label density is heavy near zero;
high-curvature records are rare by construction.

File layout (integers little-endian u32 unless noted):

    magic           8 bytes  b"MCSDATA\\0"
    format version  u32
    header length   u32
    header          UTF-8 "key=value" lines, sorted by key
    record count    u32
    records         count * (label f64 LE, then C*H*W image f64 LE, row-major)

Every record has the same byte stride, so the reader can validate total file
size up front and report the byte offset of any truncation.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataFormatError, ShapeError
from .rendering import ImageConfig, frame_noise_seed, render_frame
from .seeding import derive_seed, rng_from
from .tracks import TrackConfig, generate_track

MAGIC = b"MCSDATA\x00"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class DatasetConfig:
    """Everything that determines a dataset's content, besides the seed."""

    n_tracks: int = 8
    samples_per_track: int = 256
    track: TrackConfig = TrackConfig()
    image: ImageConfig = ImageConfig()

    def __post_init__(self):
        if self.n_tracks < 1:
            raise ConfigError(f"n_tracks must be >= 1, got {self.n_tracks}")
        if self.samples_per_track < 1:
            raise ConfigError(f"samples_per_track must be >= 1, got {self.samples_per_track}")


@dataclass
class Dataset:
    """In-memory record arrays plus the statistics recorded at build time.

    ``images`` is [N, C, H, W]; ``labels`` is [N] in physical units (inverse
    turning radius).  The stat fields are recomputable from the records; the
    loader checks they match, which catches silent payload corruption.
    """

    images: np.ndarray
    labels: np.ndarray
    seed: int
    image_config: ImageConfig

    def __post_init__(self):
        if self.images.ndim != 4:
            raise ShapeError(f"images must be [N, C, H, W], got shape {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise ShapeError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.labels)

    def stats(self) -> dict[str, float]:
        return {
            "label_min": float(np.min(self.labels)),
            "label_max": float(np.max(self.labels)),
            "label_mean": float(np.mean(self.labels)),
            "label_std": float(np.std(self.labels)),
            "pixel_mean": float(np.mean(self.images)),
        }


def build_dataset(seed: int, config: DatasetConfig = DatasetConfig()) -> Dataset:
    """Render ``n_tracks * samples_per_track`` records and shuffle them."""
    frames = []
    labels = []
    rng = rng_from(seed, "dataset")
    for ti in range(config.n_tracks):
        track = generate_track(derive_seed(seed, "dataset-track", ti), config.track)
        positions = rng.uniform(0.0, track.total_length, size=config.samples_per_track)
        for i, s in enumerate(positions):
            noise_seed = frame_noise_seed(seed, track.track_id, i) \
                if config.image.noise_std > 0.0 else None
            image, label = render_frame(track, float(s), config.image, noise_seed)
            frames.append(image.data)
            labels.append(label)
    order = rng.permutation(len(frames))
    images = np.stack(frames)[order]
    return Dataset(images=images, labels=np.asarray(labels)[order], seed=seed,
                   image_config=config.image)


def split_dataset(dataset: Dataset, val_fraction: float, seed: int
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint (train_idx, val_idx) covering all records, seeded shuffle."""
    if not (0.0 < val_fraction < 1.0):
        raise ConfigError(f"val_fraction must be in (0, 1), got {val_fraction!r}")
    n = len(dataset)
    n_val = max(1, int(round(n * val_fraction)))
    if n_val >= n:
        raise ConfigError(f"val_fraction {val_fraction} leaves no training records out of {n}")
    perm = rng_from(seed, "split").permutation(n)
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def save_dataset(path: str, dataset: Dataset) -> None:
    n, c, h, w = dataset.images.shape
    header = {
        "count": str(n),
        "channels": str(c),
        "height": str(h),
        "width": str(w),
        "seed": str(dataset.seed),
        **{k: repr(v) for k, v in dataset.stats().items()},
        **dataset.image_config.to_header(),
    }
    htext = "\n".join(f"{k}={header[k]}" for k in sorted(header)).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<I", len(htext)))
        f.write(htext)
        f.write(struct.pack("<I", n))
        for i in range(n):
            f.write(struct.pack("<d", float(dataset.labels[i])))
            f.write(np.ascontiguousarray(dataset.images[i]).astype("<f8").tobytes())


def load_dataset(path: str) -> Dataset:
    with open(path, "rb") as f:
        raw = f.read()
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(raw):
            raise DataFormatError(f"{path}: dataset truncated", offset=pos)
        out = raw[pos:pos + n]
        pos += n
        return out

    if take(8) != MAGIC:
        raise DataFormatError(f"{path}: not a dataset file (bad magic)", offset=0)
    version = struct.unpack("<I", take(4))[0]
    if version != FORMAT_VERSION:
        raise DataFormatError(f"{path}: unsupported dataset version {version}", offset=8)
    hlen = struct.unpack("<I", take(4))[0]
    header: dict[str, str] = {}
    for line in take(hlen).decode("utf-8").split("\n"):
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise DataFormatError(f"{path}: malformed header line {line!r}")
        header[key] = value
    count = struct.unpack("<I", take(4))[0]
    try:
        c, h, w = int(header["channels"]), int(header["height"]), int(header["width"])
        declared = int(header["count"])
        seed = int(header["seed"])
    except KeyError as e:
        raise DataFormatError(f"{path}: header is missing {e.args[0]!r}") from None
    if declared != count:
        raise DataFormatError(f"{path}: header count {declared} != record count {count}")
    stride = 8 * (1 + c * h * w)
    payload = take(count * stride)
    if pos != len(raw):
        raise DataFormatError(f"{path}: {len(raw) - pos} trailing bytes", offset=pos)
    records = np.frombuffer(payload, dtype="<f8").reshape(count, 1 + c * h * w)
    labels = records[:, 0].astype(np.float64)
    images = records[:, 1:].astype(np.float64).reshape(count, c, h, w)
    ds = Dataset(images=images, labels=labels, seed=seed,
                 image_config=ImageConfig.from_header(header))
    for key, value in ds.stats().items():
        if abs(float(header[key]) - value) > 1e-9:
            raise DataFormatError(
                f"{path}: stored {key}={header[key]} but records give {value!r}")
    return ds
