"""
Datasets Module for LCDA.
Procedurally generated image classification task for desk-scale runs, plus
a loader for the standard CIFAR-10 binary batch layout (see
docs/DATASET_FORMAT.md).
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from config import (
    SYNTHETIC_IMAGE_SIZE,
    SYNTHETIC_NUM_CLASSES,
    SYNTHETIC_PIXEL_NOISE,
    SYNTHETIC_TEST_PER_CLASS,
    SYNTHETIC_TRAIN_PER_CLASS,
)
from errors import DatasetError
from logger import get_logger

logger = get_logger(__name__)

MAX_SYNTHETIC_CLASSES = 10


@dataclass(frozen=True)
class Dataset:
    """Images in NCHW float64 layout with integer labels."""
    images: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        if self.images.ndim != 4:
            raise DatasetError(f"images must be NCHW, got shape {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise DatasetError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def input_shape(self) -> Tuple[int, int, int]:
        """(height, width, channels), the backbone convention."""
        _, channels, height, width = self.images.shape
        return height, width, channels

    def subset(self, count: int) -> "Dataset":
        return Dataset(self.images[:count], self.labels[:count], self.num_classes)


def _pattern(kind: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """One grayscale pattern from family `kind` with random phase / scale jitter."""
    y, x = np.mgrid[0:size, 0:size].astype(np.float64) / size
    phase = rng.uniform(0, 2 * np.pi)
    freq = rng.uniform(2.0, 3.0)
    cy, cx = rng.uniform(0.35, 0.65, size=2)
    r = np.sqrt((y - cy) ** 2 + (x - cx) ** 2)

    if kind == 0:       # horizontal stripes
        img = np.sin(2 * np.pi * freq * y + phase)
    elif kind == 1:     # vertical stripes
        img = np.sin(2 * np.pi * freq * x + phase)
    elif kind == 2:     # diagonal stripes
        img = np.sin(2 * np.pi * freq * (x + y) / 1.4 + phase)
    elif kind == 3:     # anti-diagonal stripes
        img = np.sin(2 * np.pi * freq * (x - y) / 1.4 + phase)
    elif kind == 4:     # checkerboard
        img = np.sign(np.sin(2 * np.pi * freq * x + phase) * np.sin(2 * np.pi * freq * y + phase))
    elif kind == 5:     # blob
        img = 2 * np.exp(-(r ** 2) / 0.02) - 1
    elif kind == 6:     # ring
        img = 2 * np.exp(-((r - 0.3) ** 2) / 0.005) - 1
    elif kind == 7:     # gradient ramp
        img = 2 * (x * np.cos(phase) + y * np.sin(phase))
        img = img - img.mean()
    elif kind == 8:     # cross
        img = np.where((np.abs(y - cy) < 0.08) | (np.abs(x - cx) < 0.08), 1.0, -1.0)
    else:               # square outline
        d = np.maximum(np.abs(y - cy), np.abs(x - cx))
        img = np.where(np.abs(d - 0.25) < 0.06, 1.0, -1.0)
    return img


def make_synthetic_dataset(num_classes: int = SYNTHETIC_NUM_CLASSES,
                           image_size: int = SYNTHETIC_IMAGE_SIZE,
                           channels: int = 3,
                           per_class: int = SYNTHETIC_TRAIN_PER_CLASS,
                           seed: int = 0,
                           pixel_noise: float = SYNTHETIC_PIXEL_NOISE) -> Dataset:
    """
    Generate a balanced pattern-recognition task.

    Every class is one pattern family; samples vary in phase, frequency,
    centre, per-channel gain and additive pixel noise. Fully determined by seed.
    """
    if not 2 <= num_classes <= MAX_SYNTHETIC_CLASSES:
        raise DatasetError(f"num_classes must be in [2, {MAX_SYNTHETIC_CLASSES}], got {num_classes}")
    if per_class < 1:
        raise DatasetError("per_class must be at least 1")

    rng = np.random.default_rng(seed)
    images = np.empty((num_classes * per_class, channels, image_size, image_size))
    labels = np.empty(num_classes * per_class, dtype=np.int64)
    i = 0
    for _ in range(per_class):
        for label in range(num_classes):
            base = _pattern(label, image_size, rng)
            gains = rng.uniform(0.5, 1.0, size=channels)
            images[i] = gains[:, None, None] * base[None] + rng.normal(0, pixel_noise, size=images[i].shape)
            labels[i] = label
            i += 1
    logger.debug(f"Generated synthetic dataset: {len(labels)} samples, {num_classes} classes, seed {seed}")
    return Dataset(images, labels, num_classes)


def make_synthetic_split(num_classes: int = SYNTHETIC_NUM_CLASSES,
                         image_size: int = SYNTHETIC_IMAGE_SIZE,
                         channels: int = 3,
                         train_per_class: int = SYNTHETIC_TRAIN_PER_CLASS,
                         test_per_class: int = SYNTHETIC_TEST_PER_CLASS,
                         seed: int = 0,
                         pixel_noise: float = SYNTHETIC_PIXEL_NOISE) -> Tuple[Dataset, Dataset]:
    """Independent train and test draws derived from one seed."""
    train_seed, test_seed = np.random.SeedSequence(seed).generate_state(2)
    train = make_synthetic_dataset(num_classes, image_size, channels, train_per_class, int(train_seed), pixel_noise)
    test = make_synthetic_dataset(num_classes, image_size, channels, test_per_class, int(test_seed), pixel_noise)
    return train, test


def load_image_batch(path: Path, image_shape: Tuple[int, int, int] = (32, 32, 3),
                     num_classes: int = 10, limit: Optional[int] = None) -> Dataset:
    """
    Load a CIFAR-10 style binary batch.

    Each record is 1 label byte followed by height*width*channels pixel bytes,
    channel-major (all red, then all green, then all blue), rows top to bottom.

    Raises:
        DatasetError: if the file is missing, empty or not a whole number of records
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"Dataset file not found: {path}")

    height, width, channels = image_shape
    record = 1 + height * width * channels
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0:
        raise DatasetError(f"Dataset file is empty: {path}")
    if raw.size % record:
        raise DatasetError(f"{path} holds {raw.size} bytes, not a multiple of the {record}-byte record")

    records = raw.reshape(-1, record)
    if limit is not None:
        records = records[:limit]
    labels = records[:, 0].astype(np.int64)
    if labels.max() >= num_classes:
        raise DatasetError(f"Label {labels.max()} out of range for {num_classes} classes")
    images = records[:, 1:].reshape(-1, channels, height, width).astype(np.float64) / 255.0
    images -= images.mean(axis=(0, 2, 3), keepdims=True)
    logger.info(f"Loaded {len(labels)} images from {path}")
    return Dataset(images, labels, num_classes)
