"""One-vs-rest polynomial regression on local pixel-pair features, plus noise attacks."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data_io import check_pairing, load_idx_images, load_idx_labels
from .distributions import make_rng
from .tensorize import ConvIndexMap, conv_index_map, conv_pair_features_batch
from .tols import RCOND, lstsq_min_norm


@dataclass(frozen=True)
class ImageDataset:
    images: np.ndarray
    labels: np.ndarray
    classes: int = 10

    def __post_init__(self):
        check_pairing(self.images, self.labels)
        if len(self.images) < 1:
            raise ValueError("dataset is empty")
        if self.images.ndim != 3:
            raise ValueError("images must have shape (N, H, W)")
        if self.images.min() < 0.0 or self.images.max() > 1.0:
            raise ValueError("pixels must lie in [0, 1]")
        if self.labels.min() < 0 or self.labels.max() >= self.classes:
            raise ValueError("labels out of range")

    def __len__(self):
        return len(self.labels)

    @property
    def shape(self):
        return self.images.shape[1:]

    def subset(self, idx) -> "ImageDataset":
        return ImageDataset(self.images[idx], self.labels[idx], self.classes)

    @classmethod
    def from_idx(cls, images_path, labels_path, classes: int = 10) -> "ImageDataset":
        return cls(load_idx_images(images_path), load_idx_labels(labels_path, classes), classes)


@dataclass(frozen=True)
class StackedClassifier:
    """Per-class coefficient columns over a shared conv feature layout.

    ``coeffs[:, c]`` scores class ``c``. When trained in batches,
    ``batch_coeffs[i]`` is the fit on batch ``i`` alone.
    """

    index_map: ConvIndexMap
    coeffs: np.ndarray
    batch_coeffs: Optional[np.ndarray] = None
    diagnostics: list = field(default_factory=list, compare=False)

    @property
    def classes(self) -> int:
        return self.coeffs.shape[1]

    @property
    def n_batches(self) -> int:
        return 0 if self.batch_coeffs is None else len(self.batch_coeffs)

    def batch_classifier(self, i: int) -> "StackedClassifier":
        return StackedClassifier(self.index_map, self.batch_coeffs[i])

    def cumulative_classifier(self, n: int) -> "StackedClassifier":
        """Average of the first ``n`` batch fits."""
        return StackedClassifier(self.index_map, self.batch_coeffs[:n].mean(axis=0))

    def scores(self, images) -> np.ndarray:
        images = np.asarray(images, dtype=float)
        if images.shape[-2:] != (self.index_map.H, self.index_map.W):
            raise ValueError(f"expected {self.index_map.H}x{self.index_map.W} images")
        return conv_pair_features_batch(images.reshape(-1, *images.shape[-2:]), self.index_map) @ self.coeffs

    def predict(self, images, chunk: int = 2000) -> np.ndarray:
        images = np.asarray(images, dtype=float)
        out = [np.argmax(self.scores(images[i:i + chunk]), axis=1)
               for i in range(0, len(images), chunk)]
        return np.concatenate(out) if out else np.zeros(0, dtype=int)

    def accuracy(self, ds: ImageDataset) -> float:
        return float(np.mean(self.predict(ds.images) == ds.labels))

    def save(self, path) -> None:
        np.savez_compressed(path, H=self.index_map.H, W=self.index_map.W, r=self.index_map.r,
                            coeffs=self.coeffs,
                            batch_coeffs=self.batch_coeffs if self.batch_coeffs is not None else np.zeros(0))

    @classmethod
    def load(cls, path) -> "StackedClassifier":
        z = np.load(path)
        bc = z["batch_coeffs"]
        return cls(conv_index_map(int(z["H"]), int(z["W"]), int(z["r"])), z["coeffs"],
                   bc if bc.size else None)


def one_hot(labels, classes: int) -> np.ndarray:
    out = np.zeros((len(labels), classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def fit_stacked(ds: ImageDataset, r: int = 2, rcond: float = RCOND, index_map=None):
    imap = index_map or conv_index_map(*ds.shape, r)
    F = conv_pair_features_batch(ds.images, imap)
    coeffs, diag = lstsq_min_norm(F, one_hot(ds.labels, ds.classes), rcond)
    return StackedClassifier(imap, coeffs, None, [diag])


def train_batched(ds: ImageDataset, n_batches: int, batch_size: int, seed: int, r: int = 2,
                  rcond: float = RCOND, workers: int = 1) -> StackedClassifier:
    """Average the one-vs-rest fits of ``n_batches`` batches drawn with replacement."""
    if len(ds) == 0:
        raise ValueError("dataset is empty")
    if batch_size > len(ds):
        raise ValueError("batch size exceeds dataset size")
    if n_batches < 1:
        raise ValueError("need at least one batch")
    imap = conv_index_map(*ds.shape, r)
    idx = make_rng(seed).integers(0, len(ds), size=(n_batches, batch_size))

    def one(i):
        return fit_stacked(ds.subset(idx[i]), rcond=rcond, index_map=imap)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        fits = list(pool.map(one, range(n_batches)))
    batch = np.stack([f.coeffs for f in fits])
    return StackedClassifier(imap, batch.mean(axis=0), batch, [f.diagnostics[0] for f in fits])


def classify(c: StackedClassifier, image):
    """Class with the largest score (lowest index on ties) and the score vector."""
    image = np.asarray(image, dtype=float)
    if image.shape != (c.index_map.H, c.index_map.W):
        raise ValueError(f"expected a {c.index_map.H}x{c.index_map.W} image")
    s = c.scores(image[None])[0]
    return int(np.argmax(s)), s


def gaussian_noise(image, sigma: float, seed: int, stream: int = 0) -> np.ndarray:
    """Add i.i.d. ``N(0, sigma^2)`` per pixel and clamp to [0, 1]."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    image = np.asarray(image, dtype=float)
    if sigma == 0:
        return image.copy()
    noisy = image + make_rng(seed, stream).normal(0.0, sigma, size=image.shape)
    return np.clip(noisy, 0.0, 1.0)


def patch_bounds(center, area: float, aspect: float, shape):
    """Row and column slices of a ``floor(aspect*sqrt(A))`` wide, ``floor(sqrt(A)/aspect)``
    tall rectangle around ``center``, clipped to the image."""
    w = math.floor(aspect * math.sqrt(area))
    h = math.floor(math.sqrt(area) / aspect)
    i, j = center
    r0, c0 = i - h // 2, j - w // 2
    rows = slice(max(r0, 0), min(r0 + h, shape[0]))
    cols = slice(max(c0, 0), min(c0 + w, shape[1]))
    return rows, cols


def patch_noise(image, area: float, seed: int, aspect: Optional[float] = None,
                center_range=(6, 22), stream: int = 0) -> np.ndarray:
    """Black out a random rectangle of area about ``area`` pixels.

    The centre is uniform on ``center_range`` (inclusive) in both axes and the
    aspect ratio uniform on (1/2, 2) unless ``aspect`` pins it.
    """
    if area < 1:
        raise ValueError("area must be at least 1")
    image = np.array(image, dtype=float)
    rng = make_rng(seed, stream)
    lo, hi = center_range
    center = rng.integers(lo, hi + 1, size=2)
    D = rng.uniform(0.5, 2.0) if aspect is None else float(aspect)
    rows, cols = patch_bounds(center, area, D, image.shape)
    image[rows, cols] = 0.0
    return image
