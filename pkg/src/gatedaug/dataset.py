"""Procedural datasets, deterministic splits, and a binary on-disk format.

Two generators cover both feature modes: ``gen_gauss`` makes labelled Gaussian
clusters around well-separated centers on the unit sphere (vector mode), and
``gen_shapes`` rasterizes filled shapes with jittered position and scale
(single-channel image mode, values in [0, 1]).  Generation is a pure function
of its parameters and seed, so every experiment is replayable without
downloads.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ParameterError
from .rng import DOMAIN_DATAGEN, DOMAIN_SPLIT, RngStream

MODE_VECTOR = "vector"
MODE_IMAGE = "image"

MAGIC = b"DAUG"
FORMAT_VERSION = 1

_SHAPE_NAMES = ("square", "circle", "triangle", "cross")


@dataclass
class Sample:
    """One labelled feature tensor: shape [d] (vector) or [h, w] (image)."""

    features: np.ndarray
    label: int


@dataclass(eq=False)
class Dataset:
    samples: list[Sample]
    class_count: int
    mode: str
    split_seed: int = 0

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def feature_shape(self) -> tuple[int, ...]:
        return tuple(self.samples[0].features.shape)

    def features_array(self) -> np.ndarray:
        """All features stacked into one [N, ...] float32 array."""
        return np.stack([s.features for s in self.samples])

    def labels_array(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def __eq__(self, other) -> bool:
        # Equality covers the persisted content; split_seed is bookkeeping
        # that the on-disk format intentionally does not carry.
        if not isinstance(other, Dataset):
            return NotImplemented
        if self.mode != other.mode or self.class_count != other.class_count:
            return False
        if len(self.samples) != len(other.samples):
            return False
        for a, b in zip(self.samples, other.samples):
            if a.label != b.label or not np.array_equal(a.features, b.features):
                return False
        return True


def _sphere_centers(clusters: int, dim: int, rng: RngStream) -> np.ndarray:
    """Well-separated unit-sphere points via greedy farthest-point selection.

    Deterministic given the stream; the greedy pass over a seeded candidate
    pool keeps centers apart even when clusters outnumber dimensions.
    """
    pool = rng.normal(1.0, size=(max(64 * clusters, 256), dim)).astype(np.float64)
    norms = np.linalg.norm(pool, axis=1)
    pool = pool[norms > 1e-12]
    pool /= np.linalg.norm(pool, axis=1, keepdims=True)

    chosen = [0]
    dists = np.linalg.norm(pool - pool[0], axis=1)
    while len(chosen) < clusters:
        nxt = int(np.argmax(dists))
        chosen.append(nxt)
        dists = np.minimum(dists, np.linalg.norm(pool - pool[nxt], axis=1))
    return pool[chosen]


def gen_gauss(clusters: int, dim: int, per_class: int, spread: float, seed: int) -> Dataset:
    """Vector-mode dataset: ``per_class`` points per cluster, Gaussian around
    centers placed deterministically from ``seed`` on the unit sphere."""
    if clusters < 2:
        raise ParameterError(f"clusters must be >= 2, got {clusters}")
    if dim < 2:
        raise ParameterError(f"dim must be >= 2, got {dim}")
    if per_class < 1:
        raise ParameterError(f"per_class must be >= 1, got {per_class}")
    if spread < 0:
        raise ParameterError(f"spread must be >= 0, got {spread}")

    rng = RngStream(seed, DOMAIN_DATAGEN)
    centers = _sphere_centers(clusters, dim, rng)
    samples = []
    for c in range(clusters):
        noise = rng.normal(1.0, size=(per_class, dim)) * spread
        feats = (centers[c] + noise).astype(np.float32)
        for i in range(per_class):
            samples.append(Sample(feats[i], c))
    return Dataset(samples, class_count=clusters, mode=MODE_VECTOR, split_seed=seed)


def _raster_shape(kind: str, size: int, cx: float, cy: float, r: float) -> np.ndarray:
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    dx = xs - cx
    dy = ys - cy
    if kind == "square":
        mask = (np.abs(dx) <= r) & (np.abs(dy) <= r)
    elif kind == "circle":
        mask = dx * dx + dy * dy <= r * r
    elif kind == "triangle":
        # filled isoceles wedge: apex at the top, half-width grows linearly
        half_w = (dy + r) / 2.0
        mask = (dy >= -r) & (dy <= r) & (np.abs(dx) <= half_w)
    elif kind == "cross":
        w = 0.35 * r
        mask = ((np.abs(dx) <= w) & (np.abs(dy) <= r)) | ((np.abs(dy) <= w) & (np.abs(dx) <= r))
    else:  # pragma: no cover - registry is fixed above
        raise ParameterError(f"unknown shape kind {kind!r}")
    return mask


def gen_shapes(classes: int, size: int, per_class: int, seed: int) -> Dataset:
    """Image-mode dataset: one filled shape per class (square, circle,
    triangle, cross), rasterized at jittered position and scale."""
    if not (2 <= classes <= 4):
        raise ParameterError(f"classes must be in [2, 4], got {classes}")
    if not (8 <= size <= 64):
        raise ParameterError(f"size must be in [8, 64], got {size}")
    if per_class < 1:
        raise ParameterError(f"per_class must be >= 1, got {per_class}")

    rng = RngStream(seed, DOMAIN_DATAGEN)
    samples = []
    for c in range(classes):
        kind = _SHAPE_NAMES[c]
        for _ in range(per_class):
            r = rng.uniform(0.22, 0.38) * size
            cx = rng.uniform(r, size - 1 - r)
            cy = rng.uniform(r, size - 1 - r)
            intensity = rng.uniform(0.75, 1.0)
            img = _raster_shape(kind, size, cx, cy, r).astype(np.float32) * np.float32(intensity)
            samples.append(Sample(img, c))
    return Dataset(samples, class_count=classes, mode=MODE_IMAGE, split_seed=seed)


def save(dataset: Dataset, path) -> None:
    """Write the fixed little-endian binary format (magic ``DAUG``)."""
    shape = dataset.feature_shape
    mode_byte = 0 if dataset.mode == MODE_VECTOR else 1
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<HBIQ", FORMAT_VERSION, mode_byte, dataset.class_count, len(dataset)))
        f.write(struct.pack("<I", len(shape)))
        for d in shape:
            f.write(struct.pack("<I", d))
        for s in dataset.samples:
            f.write(np.ascontiguousarray(s.features, dtype="<f4").tobytes())
            f.write(struct.pack("<I", s.label))


def _read_exact(f, n: int, offset: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated file while reading {what}", offset + len(buf))
    return buf


def load(path) -> Dataset:
    """Read a dataset written by :func:`save`; bad magic, version, or
    truncation raise :class:`FormatError` with the failing byte offset."""
    with open(path, "rb") as f:
        off = 0
        magic = f.read(4)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
        off += 4
        head = _read_exact(f, 15, off, "header")
        version, mode_byte, class_count, n = struct.unpack("<HBIQ", head)
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported format version {version}", off)
        if mode_byte not in (0, 1):
            raise FormatError(f"unknown mode byte {mode_byte}", off + 2)
        off += 15
        (rank,) = struct.unpack("<I", _read_exact(f, 4, off, "shape rank"))
        off += 4
        dims = []
        for _ in range(rank):
            (d,) = struct.unpack("<I", _read_exact(f, 4, off, "shape dim"))
            dims.append(d)
            off += 4
        shape = tuple(dims)
        mode = MODE_VECTOR if mode_byte == 0 else MODE_IMAGE
        if (mode == MODE_VECTOR and rank != 1) or (mode == MODE_IMAGE and rank != 2):
            raise FormatError(f"mode {mode} is incompatible with feature rank {rank}", off)

        feat_bytes = int(np.prod(shape)) * 4
        samples = []
        for _ in range(n):
            raw = _read_exact(f, feat_bytes, off, "sample features")
            feats = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
            off += feat_bytes
            (label,) = struct.unpack("<I", _read_exact(f, 4, off, "sample label"))
            off += 4
            if label >= class_count:
                raise FormatError(f"label {label} >= class count {class_count}", off - 4)
            samples.append(Sample(feats, int(label)))
    return Dataset(samples, class_count=class_count, mode=mode, split_seed=0)


def split_train_test(dataset: Dataset, test_fraction: float = 0.2, seed: int | None = None) -> tuple[Dataset, Dataset]:
    """Deterministic stratified split; the shuffle seed defaults to the
    dataset's ``split_seed`` and runs in its own rng domain."""
    if not (0.0 < test_fraction < 1.0):
        raise ParameterError(f"test_fraction must be in (0, 1), got {test_fraction}")
    split_seed = dataset.split_seed if seed is None else seed
    rng = RngStream(split_seed, DOMAIN_SPLIT)
    labels = dataset.labels_array()
    train_idx: list[int] = []
    test_idx: list[int] = []
    for c in range(dataset.class_count):
        idx = np.nonzero(labels == c)[0]
        perm = idx[rng.permutation(len(idx))]
        n_test = int(round(len(idx) * test_fraction))
        test_idx.extend(perm[:n_test].tolist())
        train_idx.extend(perm[n_test:].tolist())
    train = Dataset([dataset.samples[i] for i in sorted(train_idx)], dataset.class_count, dataset.mode, split_seed)
    test = Dataset([dataset.samples[i] for i in sorted(test_idx)], dataset.class_count, dataset.mode, split_seed)
    return train, test
