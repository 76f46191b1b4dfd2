"""Datasets: synthetic blob images, CIFAR-10 binary records, raw tensor files."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidArgument

F32 = np.float32


@dataclass
class Dataset:
    images: np.ndarray  # (N, H, W, C) float32 in [0, 1]
    labels: np.ndarray  # (N,) int64
    num_classes: int
    split: str = "train"

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=F32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.images) != len(self.labels):
            raise InvalidArgument("images and labels differ in length")
        if len(self.labels) and ((self.labels < 0).any() or (self.labels >= self.num_classes).any()):
            raise InvalidArgument("label outside class range")
        if self.images.size and (self.images.min() < 0 or self.images.max() > 1):
            raise InvalidArgument("pixels must lie in [0, 1]")

    def __len__(self):
        return len(self.labels)

    def subset(self, idx, split=None):
        return Dataset(self.images[idx], self.labels[idx], self.num_classes, split or self.split)

    def head(self, n, split=None):
        return self.subset(slice(0, n), split)


# ----------------------------------------------------------------------------
# synthetic blobs
# ----------------------------------------------------------------------------

def _class_prototypes(classes, side, channels, rng, blobs=3):
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64)
    protos = np.empty((classes, side, side, channels))
    for c in range(classes):
        img = np.full((side, side, channels), 0.5)
        for _ in range(blobs):
            cy, cx = rng.uniform(0.15, 0.85, 2) * side
            r = rng.uniform(0.12, 0.3) * side
            amp = rng.uniform(-0.4, 0.4, channels)
            g = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * r * r))
            img += g[:, :, None] * amp
        protos[c] = img
    return protos


def make_blobs(n, classes=10, side=16, channels=3, seed=0, noise=0.2, shift=2, split="train", proto_seed=1234):
    """Balanced synthetic set: each class is a fixed arrangement of coloured gaussian blobs.

    Samples are randomly shifted by up to ``shift`` pixels, jittered in
    contrast and brightness, and corrupted by pixel noise.  Prototypes depend
    only on ``proto_seed`` so train and test splits share classes.
    """
    if n < 1 or classes < 2:
        raise InvalidArgument("need n >= 1 and at least two classes")
    protos = _class_prototypes(classes, side, channels, np.random.default_rng(proto_seed))
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % classes
    rng.shuffle(labels)
    images = np.empty((n, side, side, channels), dtype=F32)
    for i, c in enumerate(labels):
        img = protos[c]
        if shift:
            dy, dx = rng.integers(-shift, shift + 1, 2)
            img = np.roll(img, (dy, dx), axis=(0, 1))
        contrast = rng.uniform(0.8, 1.2)
        bright = rng.uniform(-0.08, 0.08)
        img = (img - 0.5) * contrast + 0.5 + bright + rng.normal(0, noise, img.shape)
        images[i] = np.clip(img, 0, 1)
    return Dataset(images, labels, classes, split)


def make_splits(n_train, n_test, classes=10, side=16, channels=3, seed=0, n_calib=None):
    """Train/test (and optional calibration) splits with disjoint sample seeds."""
    out = {
        "train": make_blobs(n_train, classes, side, channels, seed=seed * 3 + 1, split="train"),
        "test": make_blobs(n_test, classes, side, channels, seed=seed * 3 + 2, split="test"),
    }
    if n_calib:
        out["calibration"] = make_blobs(n_calib, classes, side, channels, seed=seed * 3 + 3, split="calibration")
    return out


# ----------------------------------------------------------------------------
# CIFAR-10 binary version: 1 label byte + 3072 pixel bytes (R, G, B planes)
# ----------------------------------------------------------------------------

CIFAR_RECORD = 1 + 3072


def load_cifar10_bin(path, limit=None, split="test"):
    raw = Path(path).read_bytes()
    if len(raw) % CIFAR_RECORD:
        raise FormatError(f"{path}: size {len(raw)} is not a multiple of {CIFAR_RECORD}",
                          offset=len(raw) - len(raw) % CIFAR_RECORD)
    rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    if limit is not None:
        rec = rec[:limit]
    labels = rec[:, 0].astype(np.int64)
    bad = np.flatnonzero(labels > 9)
    if bad.size:
        raise FormatError(f"{path}: label {labels[bad[0]]} out of range", offset=int(bad[0]) * CIFAR_RECORD)
    images = rec[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1).astype(F32) / F32(255)
    return Dataset(images, labels, 10, split)


def write_cifar10_bin(path, dataset):
    imgs = np.clip(np.rint(dataset.images * 255), 0, 255).astype(np.uint8)
    if imgs.shape[1:] != (32, 32, 3):
        raise InvalidArgument("CIFAR-10 records hold 32x32x3 images")
    rec = np.concatenate([dataset.labels.astype(np.uint8)[:, None], imgs.transpose(0, 3, 1, 2).reshape(len(imgs), -1)], 1)
    Path(path).write_bytes(rec.tobytes())


# ----------------------------------------------------------------------------
# raw tensor: u32 ndim, u32 dims[ndim], u64 count, count little-endian float32
# ----------------------------------------------------------------------------

def write_raw_tensor(path, array):
    a = np.ascontiguousarray(array, dtype="<f4")
    head = struct.pack("<I", a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape) + struct.pack("<Q", a.size)
    Path(path).write_bytes(head + a.tobytes())


def read_raw_tensor(path):
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise FormatError("truncated raw tensor header", offset=len(raw))
    (ndim,) = struct.unpack_from("<I", raw, 0)
    off = 4
    if ndim > 16 or len(raw) < off + 4 * ndim + 8:
        raise FormatError(f"bad raw tensor header (ndim={ndim})", offset=0)
    dims = struct.unpack_from(f"<{ndim}I", raw, off)
    off += 4 * ndim
    (count,) = struct.unpack_from("<Q", raw, off)
    off += 8
    if int(np.prod(dims, dtype=np.int64)) != count:
        raise FormatError(f"element count {count} does not match dims {dims}", offset=off - 8)
    if len(raw) - off != 4 * count:
        raise FormatError(f"body holds {len(raw) - off} bytes, expected {4 * count}", offset=off)
    return np.frombuffer(raw, dtype="<f4", offset=off, count=count).reshape(dims).astype(F32)


def load_raw_dataset(images_path, labels_path, num_classes, split="test"):
    images = read_raw_tensor(images_path)
    labels = read_raw_tensor(labels_path).astype(np.int64)
    return Dataset(images, labels, num_classes, split)
