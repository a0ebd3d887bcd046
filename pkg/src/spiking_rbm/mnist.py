"""IDX-format digit ingestion, binarization, label encoding, clamp currents."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .calibration import SigmoidFit, inverse_transfer
from .rng import stream

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
HIGH = 0.98
LOW = 1e-5


@dataclass(frozen=True)
class Digit:
    pixels: np.ndarray               # (28, 28) floats in [0, 1]
    label: int


@dataclass
class DigitDataset:
    images: np.ndarray               # (n, 28, 28) floats in [0, 1]
    labels: np.ndarray               # (n,) int64

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError("image/label counts differ")

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i: int) -> Digit:
        return Digit(self.images[i], int(self.labels[i]))

    def flat(self) -> np.ndarray:
        return self.images.reshape(len(self), -1)


def _open_maybe_gzip(path: Path):
    raw = open(path, "rb")
    head = raw.read(2)
    raw.seek(0)
    if head == b"\x1f\x8b":
        return gzip.open(raw)
    return raw


def _read_exact(f, n: int, path: Path, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise ValueError(
            f"{path}: truncated while reading {what} "
            f"(wanted {n} bytes, got {len(data)} at offset {f.tell() - len(data)})")
    return data


def load_idx(images_path: str | Path, labels_path: str | Path) -> DigitDataset:
    """Read an IDX image/label file pair (gzip accepted transparently).

    Pixels are scaled to [0, 1] by /255.  Bad magic numbers, truncation and
    image/label count mismatches raise ValueError with the offending detail.
    """
    images_path = Path(images_path)
    labels_path = Path(labels_path)
    with _open_maybe_gzip(images_path) as f:
        magic, n, rows, cols = struct.unpack(">IIII", _read_exact(f, 16, images_path,
                                                                  "image header"))
        if magic != IMAGE_MAGIC:
            raise ValueError(f"{images_path}: bad image magic 0x{magic:08x}")
        buf = _read_exact(f, n * rows * cols, images_path, f"{n} images")
        images = np.frombuffer(buf, dtype=np.uint8).reshape(n, rows, cols)
    with _open_maybe_gzip(labels_path) as f:
        magic, n_lab = struct.unpack(">II", _read_exact(f, 8, labels_path,
                                                        "label header"))
        if magic != LABEL_MAGIC:
            raise ValueError(f"{labels_path}: bad label magic 0x{magic:08x}")
        labels = np.frombuffer(_read_exact(f, n_lab, labels_path,
                                           f"{n_lab} labels"), dtype=np.uint8)
    if n != n_lab:
        raise ValueError(f"count mismatch: {n} images vs {n_lab} labels")
    return DigitDataset(images.astype(np.float64) / 255.0,
                        labels.astype(np.int64))


def write_idx(images: np.ndarray, labels: np.ndarray,
              images_path: str | Path, labels_path: str | Path) -> None:
    """Write images in [0,1] and integer labels as a canonical IDX pair."""
    images = np.asarray(images)
    n, rows, cols = images.shape
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IMAGE_MAGIC, n, rows, cols))
        f.write((np.clip(images, 0, 1) * 255).round().astype(np.uint8).tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", LABEL_MAGIC, len(labels)))
        f.write(np.asarray(labels, dtype=np.uint8).tobytes())


def binarize(pixels: np.ndarray, high: float = HIGH, low: float = LOW) -> np.ndarray:
    """Two-level pixel probabilities: values <= 0.5 map low, > 0.5 map high."""
    p = np.asarray(pixels, dtype=float)
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("pixels must lie in [0, 1]")
    return np.where(p > 0.5, high, low)


def encode_label(label: int, n_class_units: int, high: float = HIGH,
                 low: float = LOW) -> np.ndarray:
    """Per-class-neuron probabilities: the label's group high, others low."""
    if n_class_units % 10 != 0:
        raise ValueError("n_class_units must be divisible by 10")
    if not 0 <= label <= 9:
        raise ValueError(f"invalid label {label}")
    per = n_class_units // 10
    out = np.full(n_class_units, low)
    out[label * per:(label + 1) * per] = high
    return out


def encode_label_groups(label: int, n_groups: int, group_size: int,
                        high: float = HIGH, low: float = LOW) -> np.ndarray:
    """Group encoding for class subsets (n_groups consecutive groups)."""
    if not 0 <= label < n_groups:
        raise ValueError(f"invalid label {label} for {n_groups} groups")
    out = np.full(n_groups * group_size, low)
    out[label * group_size:(label + 1) * group_size] = high
    return out


def clamp_currents(probabilities: np.ndarray, fit: SigmoidFit) -> np.ndarray:
    """Invert the transfer function: currents f with nu(f) tau_r = p."""
    p = np.asarray(probabilities, dtype=float)
    if np.any(p <= 0) or np.any(p >= 1):
        raise ValueError("probabilities must lie strictly inside (0, 1)")
    return inverse_transfer(p / fit.tau_r, fit)


def class_balanced_subset(labels: np.ndarray, n_total: int, seed: int,
                          classes: np.ndarray | None = None) -> np.ndarray:
    """Indices of a class-balanced seeded draw (with replacement if needed)."""
    labels = np.asarray(labels)
    if classes is None:
        classes = np.unique(labels)
    gen = stream(seed, "misc", 4)
    per = n_total // len(classes)
    parts = []
    for ci, c in enumerate(classes):
        idx = np.nonzero(labels == c)[0]
        take = per + (1 if ci < n_total - per * len(classes) else 0)
        parts.append(gen.choice(idx, size=take, replace=len(idx) < take))
    out = np.concatenate(parts)
    gen.shuffle(out)
    return out


def surrogate_digits(seed: int = 0) -> DigitDataset:
    """Bundled stand-in digit set for environments without the MNIST files.

    Upscales scikit-learn's 8x8 handwritten digits to centered 28x28 images
    so the whole pipeline (binarization, clamping, training, readout) runs
    unchanged.  Real MNIST IDX files, when available, should be preferred
    via the --train-images/--train-labels flags.
    """
    from sklearn.datasets import load_digits
    d = load_digits()
    imgs = d.images / 16.0
    up = np.kron(imgs, np.ones((1, 4, 4)))          # (n, 32, 32)
    up = up[:, 2:30, 2:30]
    gen = stream(seed, "misc", 5)
    order = gen.permutation(len(up))
    return DigitDataset(up[order], d.target[order].astype(np.int64))
