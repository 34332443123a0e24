"""Reader/writer for the big-endian IDX files MNIST ships in."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import BadMagic, CountMismatch, TruncatedFile

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    images: np.ndarray  # (count, rows, cols), float in [0, 1]
    labels: np.ndarray  # (count,), uint8

    def __len__(self):
        return len(self.labels)

    @property
    def features(self) -> np.ndarray:
        return self.images.reshape(len(self.images), -1)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.images[idx], self.labels[idx])


def _read_bytes(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as f:
        return f.read()


def read_header(path) -> dict:
    """Magic, item count and (for image files) rows/cols of an IDX file."""
    raw = _read_bytes(path)
    if len(raw) < 8:
        raise TruncatedFile(f"{path}: header shorter than 8 bytes")
    magic, count = struct.unpack(">II", raw[:8])
    hdr = {"path": str(path), "magic": f"0x{magic:08x}", "count": count, "bytes": len(raw)}
    if magic == IMAGES_MAGIC:
        if len(raw) < 16:
            raise TruncatedFile(f"{path}: image header shorter than 16 bytes")
        hdr["rows"], hdr["cols"] = struct.unpack(">II", raw[8:16])
        hdr["kind"] = "images"
    elif magic == LABELS_MAGIC:
        hdr["kind"] = "labels"
    else:
        hdr["kind"] = "unknown"
    return hdr


def read_images(path) -> np.ndarray:
    raw = _read_bytes(path)
    if len(raw) < 16:
        raise TruncatedFile(f"{path}: image header shorter than 16 bytes")
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IMAGES_MAGIC:
        raise BadMagic(f"{path}: images magic 0x{magic:08x}, expected 0x{IMAGES_MAGIC:08x}")
    need = count * rows * cols
    if len(raw) - 16 < need:
        raise TruncatedFile(f"{path}: {len(raw) - 16} payload bytes, header promises {need}")
    return np.frombuffer(raw, dtype=np.uint8, count=need, offset=16).reshape(count, rows, cols)


def read_labels(path) -> np.ndarray:
    raw = _read_bytes(path)
    if len(raw) < 8:
        raise TruncatedFile(f"{path}: label header shorter than 8 bytes")
    magic, count = struct.unpack(">II", raw[:8])
    if magic != LABELS_MAGIC:
        raise BadMagic(f"{path}: labels magic 0x{magic:08x}, expected 0x{LABELS_MAGIC:08x}")
    if len(raw) - 8 < count:
        raise TruncatedFile(f"{path}: {len(raw) - 8} label bytes, header promises {count}")
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=8).copy()


def load_idx(images_path, labels_path, dtype=np.float64) -> Dataset:
    images = read_images(images_path)
    labels = read_labels(labels_path)
    if len(images) != len(labels):
        raise CountMismatch(f"{len(images)} images but {len(labels)} labels")
    return Dataset(images.astype(dtype) / 255.0, labels)


def write_idx_images(path, images: np.ndarray) -> None:
    images = np.asarray(images, dtype=np.uint8)
    count, rows, cols = images.shape
    data = struct.pack(">IIII", IMAGES_MAGIC, count, rows, cols) + images.tobytes()
    _write(path, data)


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    _write(path, struct.pack(">II", LABELS_MAGIC, len(labels)) + labels.tobytes())


def _write(path, data: bytes):
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    # empty name and mtime=0 keep gzip output byte-stable
    if path.suffix == ".gz":
        with open(path, "wb") as raw, gzip.GzipFile(filename="", fileobj=raw, mode="wb", mtime=0) as f:
            f.write(data)
    else:
        with opener(path, "wb") as f:
            f.write(data)
