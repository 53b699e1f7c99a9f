"""IDX image/label files and synthetic teacher datasets."""

from __future__ import annotations

import gzip
import json
import struct
from pathlib import Path

import numpy as np

from .distributions import MeasureSpec, sample_matrix
from .networks import NetworkParams, forward
from .tols import read_matrix, write_matrix

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
_GZIP_MAGIC = b"\x1f\x8b"
MAX_PAYLOAD = 1 << 34


class IdxError(ValueError):
    """Base class for malformed IDX input."""


class BadMagicError(IdxError):
    pass


class TruncatedPayloadError(IdxError):
    pass


class DimensionOverflowError(IdxError):
    pass


class LabelRangeError(IdxError):
    pass


class PairingError(ValueError):
    pass


def _read_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == _GZIP_MAGIC:
        raw = gzip.decompress(raw)
    return raw


def parse_idx(raw: bytes, expected_magic: int) -> np.ndarray:
    """Parse an unsigned-byte IDX buffer into an array of its declared shape."""
    if len(raw) < 4:
        raise TruncatedPayloadError("file shorter than the magic number")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise BadMagicError(f"magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    head = 4 + 4 * ndim
    if len(raw) < head:
        raise TruncatedPayloadError("file shorter than its dimension header")
    dims = struct.unpack(f">{ndim}I", raw[4:head])
    size = 1
    for n in dims:
        size *= n
        if size > MAX_PAYLOAD:
            raise DimensionOverflowError(f"dimensions {dims} exceed the payload cap")
    if len(raw) - head < size:
        raise TruncatedPayloadError(f"payload has {len(raw) - head} bytes, header declares {size}")
    return np.frombuffer(raw, dtype=np.uint8, count=size, offset=head).reshape(dims)


def load_idx_images(path) -> np.ndarray:
    """``N x H x W`` float array scaled to [0, 1]."""
    arr = parse_idx(_read_bytes(path), IMAGES_MAGIC)
    return arr.astype(np.float64) / 255.0


def load_idx_labels(path, classes: int = 10) -> np.ndarray:
    arr = parse_idx(_read_bytes(path), LABELS_MAGIC).astype(np.int64)
    if arr.size and arr.max() >= classes:
        raise LabelRangeError(f"label {arr.max()} outside 0..{classes - 1}")
    return arr


def write_idx(path, arr, compress: bool = False) -> None:
    """Write an unsigned-byte IDX file (1-D arrays as labels, 3-D as images)."""
    arr = np.asarray(arr)
    if arr.dtype != np.uint8:
        raise ValueError("IDX writer expects uint8 data")
    magic = 0x00000800 | arr.ndim
    raw = struct.pack(">I", magic) + struct.pack(f">{arr.ndim}I", *arr.shape) + arr.tobytes()
    Path(path).write_bytes(gzip.compress(raw) if compress else raw)


def check_pairing(images: np.ndarray, labels: np.ndarray) -> None:
    if len(images) != len(labels):
        raise PairingError(f"{len(images)} images but {len(labels)} labels")


def synth_teacher_dataset(spec: MeasureSpec, teacher: NetworkParams, N: int, seed: int):
    """Inputs drawn from ``spec`` with labels given by the teacher network."""
    if N < 1:
        raise ValueError("N must be positive")
    xs = sample_matrix(spec, N, teacher.d, seed)
    return xs, forward(teacher, xs)


def save_dataset(stem, xs, ys, meta: dict) -> None:
    """Write ``<stem>.x.bin``, ``<stem>.y.bin`` and a ``<stem>.json`` sidecar."""
    stem = Path(stem)
    xf, yf = Path(f"{stem}.x.bin"), Path(f"{stem}.y.bin")
    write_matrix(xf, xs)
    write_matrix(yf, np.asarray(ys)[:, None])
    side = dict(meta, rows=int(len(xs)), d=int(np.shape(xs)[1]), x_file=xf.name, y_file=yf.name)
    Path(f"{stem}.json").write_text(json.dumps(side, indent=2))


def load_dataset(stem):
    stem = Path(stem)
    meta = json.loads(Path(f"{stem}.json").read_text())
    xs = read_matrix(stem.parent / meta["x_file"])
    ys = read_matrix(stem.parent / meta["y_file"])[:, 0]
    return xs, ys, meta
