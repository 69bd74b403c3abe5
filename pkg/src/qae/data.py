"""MNIST ingestion: IDX parsing, class filtering, resizing and evaluation splits."""
from __future__ import annotations

import gzip
import hashlib
import json
import logging
import struct
import urllib.request
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}
MNIST_MIRRORS = ("https://ossci-datasets.s3.amazonaws.com/mnist/",)


class DataError(Exception):
    """Base class for dataset problems."""


class WrongMagicError(DataError):
    pass


class TruncatedFileError(DataError):
    pass


class CountMismatchError(DataError):
    pass


class InsufficientSamplesError(DataError):
    pass


@dataclass(frozen=True, eq=False)
class Samples:
    """Images (N, 28, 28) uint8 with digit labels (N,)."""

    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.images.ndim != 3 or self.images.shape[0] != self.labels.shape[0]:
            raise DataError("images and labels do not line up")

    def __len__(self):
        return self.labels.shape[0]

    def take(self, idx) -> "Samples":
        return Samples(self.images[idx], self.labels[idx])


def _read_bytes(path) -> bytes:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as f:
        return f.read()


def parse_idx(raw: bytes, expected_magic: int) -> np.ndarray:
    if len(raw) < 8:
        raise TruncatedFileError("IDX header is truncated")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise WrongMagicError(f"bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    head = 4 + 4 * ndim
    if len(raw) < head:
        raise TruncatedFileError("IDX dimension header is truncated")
    dims = struct.unpack(f">{ndim}I", raw[4:head])
    size = int(np.prod(dims))
    if len(raw) - head < size:
        raise TruncatedFileError(f"IDX payload has {len(raw) - head} bytes, expected {size}")
    return np.frombuffer(raw, dtype=np.uint8, count=size, offset=head).reshape(dims)


def dumps_idx(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype=np.uint8)
    magic = 0x00000800 | arr.ndim
    return struct.pack(f">I{arr.ndim}I", magic, *arr.shape) + arr.tobytes()


def write_idx(path, arr: np.ndarray) -> None:
    path = Path(path)
    payload = dumps_idx(arr)
    if path.suffix == ".gz":
        # mtime=0 keeps the compressed bytes reproducible
        with open(path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as f:
            f.write(payload)
    else:
        path.write_bytes(payload)


def load_idx(images_path, labels_path) -> Samples:
    images = parse_idx(_read_bytes(images_path), IMAGE_MAGIC)
    labels = parse_idx(_read_bytes(labels_path), LABEL_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatchError(
            f"{images.shape[0]} images but {labels.shape[0]} labels")
    return Samples(images, labels)


def filter_classes(samples: Samples, classes) -> Samples:
    classes = list(classes)
    if not classes:
        raise DataError("classes must be non-empty")
    return samples.take(np.flatnonzero(np.isin(samples.labels, classes)))


def _bilinear_weights(src: int, dst: int) -> np.ndarray:
    """(dst, src) interpolation matrix with half-pixel centre alignment."""
    pos = np.clip((np.arange(dst) + 0.5) * src / dst - 0.5, 0, src - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, src - 1)
    frac = pos - lo
    w = np.zeros((dst, src))
    w[np.arange(dst), lo] += 1 - frac
    w[np.arange(dst), hi] += frac
    return w


_W16 = _bilinear_weights(28, 16)


def resize16_batch(images: np.ndarray) -> np.ndarray:
    images = np.asarray(images, dtype=float)
    if images.shape[-2:] != (28, 28):
        raise DataError(f"expected 28x28 images, got {images.shape[-2:]}")
    out = np.einsum("ij,njk,lk->nil", _W16, images.reshape(-1, 28, 28), _W16)
    return (out / 255.0).reshape(-1, 256)


def resize16(img: np.ndarray) -> np.ndarray:
    """Bilinear 28x28 -> 16x16, scaled to [0, 1], flattened row-major."""
    return resize16_batch(np.asarray(img)[None])[0]


def make_split(train: Samples, test: Samples, classes, test_count: int = 400,
               seed: int = 0) -> tuple[Samples, Samples]:
    """Full filtered training split plus a seeded draw of ``test_count`` test samples."""
    train_f = filter_classes(train, classes)
    test_f = filter_classes(test, classes)
    if test_count > len(test_f):
        raise InsufficientSamplesError(
            f"asked for {test_count} evaluation samples, only {len(test_f)} available")
    idx = np.random.default_rng(seed).choice(len(test_f), size=test_count, replace=False)
    return train_f, test_f.take(idx)


def drop_blank(samples: Samples, features: np.ndarray):
    """Remove all-zero feature rows (amplitude encoding is undefined for them)."""
    keep = np.linalg.norm(features, axis=1) > 0
    dropped = int((~keep).sum())
    if dropped:
        log.info("dropped %d blank samples before amplitude encoding", dropped)
    return samples.take(np.flatnonzero(keep)), features[keep], dropped


# --------------------------------------------------------------------------
# Locating / fetching the files
# --------------------------------------------------------------------------

def find_file(data_dir, stem: str) -> Path | None:
    for name in (stem, stem + ".gz"):
        p = Path(data_dir) / name
        if p.exists():
            return p
    return None


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def download_mnist(data_dir, mirrors=MNIST_MIRRORS, timeout: float = 30.0) -> None:
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    for stem in MNIST_FILES.values():
        if find_file(data_dir, stem):
            continue
        last = None
        for base in mirrors:
            try:
                with urllib.request.urlopen(base + stem + ".gz", timeout=timeout) as r:
                    (data_dir / (stem + ".gz")).write_bytes(r.read())
                break
            except OSError as exc:
                last = exc
        else:
            raise DataError(f"could not download {stem}: {last}")


def locate_mnist(data_dir, download: bool = False) -> dict:
    paths = {key: find_file(data_dir, stem) for key, stem in MNIST_FILES.items()}
    missing = [MNIST_FILES[k] for k, p in paths.items() if p is None]
    if missing and download:
        download_mnist(data_dir)
        return locate_mnist(data_dir, download=False)
    if missing:
        raise DataError(f"MNIST files missing from {data_dir}: {', '.join(missing)}")
    return paths


def load_mnist(data_dir, download: bool = False) -> tuple[Samples, Samples]:
    p = locate_mnist(data_dir, download)
    return (load_idx(p["train_images"], p["train_labels"]),
            load_idx(p["test_images"], p["test_labels"]))


def build_idx_from_digit_json(json_dir, out_dir, test_fraction: float = 0.2,
                              seed: int = 0) -> dict:
    """Write IDX train/test files from per-digit JSON pixel dumps.

    Expects ``0.json`` .. ``9.json``, each ``{"data": [...]}`` holding
    consecutive 784-value images with intensities in [0, 1].  The last
    ``test_fraction`` of every digit goes to the test split; both splits are
    shuffled with a fixed seed.
    """
    json_dir, out_dir = Path(json_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    parts = {"train": ([], []), "test": ([], [])}
    for digit in range(10):
        vals = np.asarray(json.loads((json_dir / f"{digit}.json").read_text())["data"], float)
        imgs = np.rint(vals.reshape(-1, 28, 28) * 255).clip(0, 255).astype(np.uint8)
        n_test = int(round(len(imgs) * test_fraction))
        for split, chunk in (("train", imgs[:len(imgs) - n_test]), ("test", imgs[len(imgs) - n_test:])):
            parts[split][0].append(chunk)
            parts[split][1].append(np.full(len(chunk), digit, dtype=np.uint8))
    rng = np.random.default_rng(seed)
    written = {}
    for split, prefix in (("train", "train"), ("test", "t10k")):
        imgs = np.concatenate(parts[split][0])
        labels = np.concatenate(parts[split][1])
        order = rng.permutation(len(labels))
        write_idx(out_dir / f"{prefix}-images-idx3-ubyte.gz", imgs[order])
        write_idx(out_dir / f"{prefix}-labels-idx1-ubyte.gz", labels[order])
        written[split] = len(labels)
    return written
