"""Datasets: synthetic generators, file loaders and accuracy scoring."""
from __future__ import annotations

import csv
import gzip
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, InputError, ParameterError
from .graph import PointCloud
from .osstat.types import Clustering

EMBED_MAGIC = b"VMBO-E1\x00"
IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801


@dataclass(frozen=True)
class LabeledDataset:
    cloud: PointCloud
    labels: np.ndarray
    name: str
    provenance: str = ""

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=np.int64)
        if lab.shape != (self.cloud.n,):
            raise InputError("one label per point is required")
        if lab.size and lab.min() < 0:
            raise InputError("labels must be nonnegative class ids")
        object.__setattr__(self, "labels", lab)

    @property
    def n(self) -> int:
        return self.cloud.n

    @property
    def P(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @property
    def class_sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.P)


def _streams(seed, k):
    """k independent PCG64 generators split off one seed."""
    return [np.random.Generator(np.random.PCG64(s))
            for s in np.random.SeedSequence(seed).spawn(k)]


MOONS = (  # center, radius, vertical orientation (+1 upper half, -1 lower half)
    ((0.0, 0.0), 1.0, 1.0),
    ((3.0, 0.0), 1.0, 1.0),
    ((1.5, 0.4), 1.5, -1.0),
)


def three_moons(n_per_moon: int = 500, noise_sd: float = 0.14,
                ambient_dim: int = 100, seed=0) -> LabeledDataset:
    """Three noisy half circles embedded in ``ambient_dim`` dimensions.

    Moon i is drawn from its own PCG64 stream spawned from ``seed``: first the
    angles (uniform on [0, pi]), then the Gaussian noise for all coordinates.
    """
    if n_per_moon < 1:
        raise ParameterError("n_per_moon must be positive")
    if ambient_dim < 2:
        raise ParameterError("ambient_dim must be at least 2")
    if noise_sd < 0:
        raise ParameterError("noise_sd must be nonnegative")
    parts = []
    for (center, radius, side), rng in zip(MOONS, _streams(seed, 3)):
        theta = rng.uniform(0.0, np.pi, n_per_moon)
        X = np.zeros((n_per_moon, ambient_dim))
        X[:, 0] = center[0] + radius * np.cos(theta)
        X[:, 1] = center[1] + side * radius * np.sin(theta)
        if noise_sd > 0:
            X += rng.normal(0.0, noise_sd, X.shape)
        parts.append(X)
    labels = np.repeat(np.arange(3), n_per_moon)
    return LabeledDataset(PointCloud(np.vstack(parts)), labels, "three_moons",
                          f"synthetic n_per_moon={n_per_moon} sd={noise_sd} "
                          f"dim={ambient_dim} seed={seed}")


def torus(n: int = 2000, P: int = 2, seed=0) -> LabeledDataset:
    """Uniform sample of the flat torus in R^4, split into P bands of the first angle."""
    if n < 1 or P < 1:
        raise ParameterError("n and P must be positive")
    rng = _streams(seed, 1)[0]
    a = rng.uniform(0.0, 2 * np.pi, n)
    b = rng.uniform(0.0, 2 * np.pi, n)
    X = np.stack([np.cos(a), np.sin(a), np.cos(b), np.sin(b)], axis=1)
    labels = np.minimum((a * P / (2 * np.pi)).astype(np.int64), P - 1)
    return LabeledDataset(PointCloud(X), labels, "torus", f"flat torus n={n} seed={seed}")


def _open(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _read_idx(path, magic):
    raw = _open(path)
    if len(raw) < 4:
        raise DataFormatError(f"{path}: file too short for an IDX header (offset 0)")
    found = int.from_bytes(raw[:4], "big")
    if found != magic:
        raise DataFormatError(f"{path}: magic 0x{found:08x} at offset 0, "
                              f"expected 0x{magic:08x}")
    ndim = magic & 0xFF
    head = 4 + 4 * ndim
    if len(raw) < head:
        raise DataFormatError(f"{path}: truncated dimension header at offset {len(raw)}")
    dims = [int.from_bytes(raw[4 + 4 * i:8 + 4 * i], "big") for i in range(ndim)]
    size = int(np.prod(dims))
    if len(raw) < head + size:
        raise DataFormatError(f"{path}: truncated data at offset {len(raw)}, "
                              f"expected {head + size} bytes")
    return np.frombuffer(raw, np.uint8, size, head).reshape(dims)


def load_idx(images, labels) -> LabeledDataset:
    """IDX image/label files; lists of paths are concatenated in order."""
    images = [images] if isinstance(images, (str, bytes)) or hasattr(images, "__fspath__") else list(images)
    labels = [labels] if isinstance(labels, (str, bytes)) or hasattr(labels, "__fspath__") else list(labels)
    if len(images) != len(labels):
        raise ParameterError("need one label file per image file")
    Xs, ys = [], []
    for ip, lp in zip(images, labels):
        img = _read_idx(ip, IDX_IMAGES)
        lab = _read_idx(lp, IDX_LABELS)
        if img.shape[0] != lab.shape[0]:
            raise DataFormatError(f"{ip}: {img.shape[0]} images but {lab.shape[0]} labels")
        Xs.append(img.reshape(img.shape[0], -1).astype(np.float64) / 255.0)
        ys.append(lab.astype(np.int64))
    X = np.vstack(Xs)
    return LabeledDataset(PointCloud(X), np.concatenate(ys), "idx",
                          " + ".join(str(p) for p in images))


def load_delimited(path, label_column: int = -1, delimiter: str = ",",
                   skip_header: bool = False) -> LabeledDataset:
    """Rectangular numeric table, one point per line, labels in one column."""
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh, delimiter=delimiter), start=1):
            if skip_header and lineno == 1:
                continue
            rec = [f.strip() for f in rec]
            if not rec or all(f == "" for f in rec):
                continue
            if width is None:
                width = len(rec)
            elif len(rec) != width:
                raise DataFormatError(
                    f"{path}: line {lineno} has {len(rec)} fields, expected {width}")
            try:
                rows.append([float(f) for f in rec])
            except ValueError as exc:
                raise DataFormatError(f"{path}: line {lineno}: {exc}") from None
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    T = np.array(rows)
    if width < 2:
        raise DataFormatError(f"{path}: need at least one feature and one label column")
    col = label_column % width
    y = T[:, col]
    if np.any(y != np.round(y)) or np.any(y < 0):
        raise DataFormatError(f"{path}: label column holds non-integer or negative values")
    X = np.delete(T, col, axis=1)
    return LabeledDataset(PointCloud(X), y.astype(np.int64), "delimited", str(path))


def write_embedding(path, X):
    X = np.asarray(X, dtype="<f4")
    if X.ndim != 2:
        raise InputError("embedding must be a matrix")
    with open(path, "wb") as fh:
        fh.write(EMBED_MAGIC)
        fh.write(np.array(X.shape, "<u4").tobytes())
        fh.write(np.ascontiguousarray(X).tobytes())


def read_embedding(path) -> np.ndarray:
    raw = _open(path)
    if raw[:8] != EMBED_MAGIC:
        raise DataFormatError(f"{path}: not an embedding file (bad magic at offset 0)")
    if len(raw) < 16:
        raise DataFormatError(f"{path}: truncated header at offset {len(raw)}")
    n, d = (int(v) for v in np.frombuffer(raw, "<u4", 2, 8))
    if len(raw) != 16 + 4 * n * d:
        raise DataFormatError(f"{path}: expected {16 + 4 * n * d} bytes, found {len(raw)}")
    return np.frombuffer(raw, "<f4", n * d, 16).reshape(n, d).astype(np.float64)


def read_label_csv(path):
    """(point_id, class_id) pairs; a non-numeric first line is taken as header."""
    ids, cls = [], []
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != 2:
                raise DataFormatError(f"{path}: line {lineno} needs point_id,class_id")
            try:
                ids.append(int(rec[0]))
                cls.append(int(rec[1]))
            except ValueError:
                if lineno == 1:
                    continue
                raise DataFormatError(f"{path}: line {lineno} is not integer") from None
    return np.array(ids, np.int64), np.array(cls, np.int64)


def write_label_csv(path, ids, classes):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["point_id", "class_id"])
        for i, c in zip(ids, classes):
            w.writerow([int(i), int(c)])


def load_embedding(path, labels_path) -> LabeledDataset:
    X = read_embedding(path)
    ids, cls = read_label_csv(labels_path)
    y = np.full(X.shape[0], -1, np.int64)
    y[ids] = cls
    if np.any(y < 0):
        raise DataFormatError(f"{labels_path}: some points have no label")
    return LabeledDataset(PointCloud(X), y, "embedding", str(path))


def accuracy(pred, truth, label_map: str = "fixed", mask=None) -> float:
    """Fraction of points whose cluster matches the true class.

    ``fixed`` compares cluster ids with class ids directly (fidelity points
    anchor the identities); ``best_match`` first relabels clusters by the
    class matching that maximizes agreement. ``mask`` restricts scoring.
    """
    p = pred.assign if isinstance(pred, Clustering) else np.asarray(pred)
    t = np.asarray(truth)
    if p.shape != t.shape:
        raise InputError("prediction and truth differ in length")
    if mask is not None:
        p, t = p[mask], t[mask]
    if p.size == 0:
        return float("nan")
    if label_map == "fixed":
        return float(np.mean(p == t))
    if label_map != "best_match":
        raise ParameterError(f"unknown label map {label_map!r}")
    from .oracle import mincostflow_optimum
    P = int(max(p.max(), t.max())) + 1
    conf = np.zeros((P, P))
    np.add.at(conf, (p, t), 1.0)
    return mincostflow_optimum(conf, np.ones(P, np.int64)) / p.size
