"""Desk-scale learning task: data, partitioning, linear softmax model, SGD, F1."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InsufficientData, MalformedFile


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features must be (samples, d_in) and match labels")

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], self.n_classes)


def make_blobs(n_samples: int, n_classes: int, dim: int, separation: float,
               rng: np.random.Generator) -> Dataset:
    """Gaussian class clusters with unit noise around means of scale ``separation``."""
    means = rng.normal(0.0, separation, size=(n_classes, dim))
    labels = rng.integers(0, n_classes, size=n_samples)
    feats = means[labels] + rng.normal(size=(n_samples, dim))
    return Dataset(feats, labels, n_classes)


def train_test_split(data: Dataset, test_fraction: float, rng: np.random.Generator) -> tuple[Dataset, Dataset]:
    perm = rng.permutation(len(data))
    n_test = int(round(test_fraction * len(data)))
    return data.subset(np.sort(perm[n_test:])), data.subset(np.sort(perm[:n_test]))


@dataclass
class DirichletPartition:
    beta: float
    shards: list[Dataset]
    indices: list[np.ndarray]


def dirichlet_partition(data: Dataset, n_nodes: int, beta: float, rng: np.random.Generator) -> DirichletPartition:
    """Label-skewed split: each class is spread over nodes by a Dirichlet(beta) draw.

    Empty shards get one sample moved from the currently largest shard.
    """
    if n_nodes < 1:
        raise ValueError("n_nodes must be >= 1")
    if beta <= 0:
        raise ValueError("beta must be > 0")
    if len(data) < n_nodes:
        raise InsufficientData(f"{len(data)} samples cannot fill {n_nodes} shards")
    buckets: list[list[int]] = [[] for _ in range(n_nodes)]
    for c in range(data.n_classes):
        idx = np.flatnonzero(data.labels == c)
        if idx.size == 0:
            continue
        idx = rng.permutation(idx)
        props = rng.dirichlet(np.full(n_nodes, beta))
        cuts = (np.cumsum(props)[:-1] * idx.size).astype(int)
        for node, part in enumerate(np.split(idx, cuts)):
            buckets[node].extend(part.tolist())
    for node in range(n_nodes):
        if not buckets[node]:
            donor = max(range(n_nodes), key=lambda k: (len(buckets[k]), -k))
            buckets[node].append(buckets[donor].pop())
    indices = [np.sort(np.asarray(b, dtype=np.int64)) for b in buckets]
    return DirichletPartition(beta, [data.subset(ix) for ix in indices], indices)


def model_dim(d_in: int, n_classes: int) -> int:
    return d_in * n_classes + n_classes


def unpack(theta: np.ndarray, d_in: int, n_classes: int) -> tuple[np.ndarray, np.ndarray]:
    w = theta[: d_in * n_classes].reshape(d_in, n_classes)
    return w, theta[d_in * n_classes:]


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def loss_and_grad(theta: np.ndarray, X: np.ndarray, y: np.ndarray, n_classes: int) -> tuple[float, np.ndarray]:
    """Mean cross-entropy of a linear softmax classifier and its gradient."""
    d_in = X.shape[1]
    w, bias = unpack(theta, d_in, n_classes)
    p = _softmax(X @ w + bias)
    m = X.shape[0]
    loss = -float(np.mean(np.log(np.maximum(p[np.arange(m), y], 1e-300))))
    p[np.arange(m), y] -= 1.0
    p /= m
    return loss, np.concatenate([(X.T @ p).ravel(), p.sum(axis=0)])


def predict(theta: np.ndarray, X: np.ndarray, n_classes: int) -> np.ndarray:
    w, bias = unpack(theta, X.shape[1], n_classes)
    return np.argmax(X @ w + bias, axis=1)


@dataclass(frozen=True)
class TrainerConfig:
    eta: float = 0.01
    momentum: float = 0.9
    batch_size: int = 32
    local_steps: int = 1

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("eta must be >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.batch_size < 1 or self.local_steps < 1:
            raise ValueError("batch_size and local_steps must be >= 1")


class BatchSampler:
    """Mini-batches without replacement, reshuffled at each epoch."""

    def __init__(self, size: int, batch_size: int, rng: np.random.Generator):
        self.size = size
        self.batch_size = min(batch_size, size)
        self.rng = rng
        self._perm = rng.permutation(size)
        self._pos = 0

    def next(self) -> np.ndarray:
        if self._pos + self.batch_size > self.size:
            self._perm = self.rng.permutation(self.size)
            self._pos = 0
        batch = self._perm[self._pos:self._pos + self.batch_size]
        self._pos += self.batch_size
        return batch


def local_step(theta: np.ndarray, shard: Dataset, cfg: TrainerConfig, momentum: np.ndarray | None,
               sampler: BatchSampler) -> tuple[np.ndarray, np.ndarray]:
    """``cfg.local_steps`` SGD-with-momentum steps on cross-entropy; returns (theta, momentum)."""
    if len(shard) == 0:
        raise InsufficientData("cannot train on an empty shard")
    buf = np.zeros_like(theta) if momentum is None else momentum
    for _ in range(cfg.local_steps):
        idx = sampler.next()
        _, g = loss_and_grad(theta, shard.features[idx], shard.labels[idx], shard.n_classes)
        buf = cfg.momentum * buf + g
        theta = theta - cfg.eta * buf
    return theta, buf


def train_centralized(data: Dataset, cfg: TrainerConfig, steps: int, rng: np.random.Generator) -> np.ndarray:
    theta = np.zeros(model_dim(data.dim, data.n_classes))
    sampler = BatchSampler(len(data), cfg.batch_size, rng)
    buf = None
    one = TrainerConfig(cfg.eta, cfg.momentum, cfg.batch_size, 1)
    for _ in range(steps):
        theta, buf = local_step(theta, data, one, buf, sampler)
    return theta


def _macro_f1_from_counts(tp: np.ndarray, fp: np.ndarray, fn: np.ndarray, present: np.ndarray) -> np.ndarray:
    denom = 2 * tp + fp + fn
    with np.errstate(invalid="ignore", divide="ignore"):
        f1 = np.where(denom > 0, 2 * tp / np.maximum(denom, 1), 0.0)
    return (f1 * present).sum(axis=-1) / present.sum()


def f1_from_predictions(pred: np.ndarray, truth: np.ndarray, n_classes: int) -> float:
    """Macro F1 averaged over the classes that occur in ``truth``."""
    if truth.size == 0:
        raise InsufficientData("empty evaluation set")
    cm = np.bincount(truth * n_classes + pred, minlength=n_classes * n_classes).reshape(n_classes, n_classes)
    tp = np.diag(cm).astype(float)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    present = cm.sum(axis=1) > 0
    return float(_macro_f1_from_counts(tp, fp, fn, present))


def f1_macro(theta: np.ndarray, test: Dataset) -> float:
    return f1_from_predictions(predict(theta, test.features, test.n_classes), test.labels, test.n_classes)


def f1_many(thetas: np.ndarray, test: Dataset) -> np.ndarray:
    """Macro F1 of each row of ``thetas`` on ``test`` in one batched pass."""
    thetas = np.atleast_2d(thetas)
    m, C, d = thetas.shape[0], test.n_classes, test.dim
    w = thetas[:, : d * C].reshape(m, d, C)
    bias = thetas[:, d * C:]
    logits = (test.features @ w.transpose(1, 0, 2).reshape(d, m * C)).reshape(-1, m, C) + bias[None, :, :]
    pred = np.argmax(logits, axis=2).T
    codes = (np.arange(m)[:, None] * C * C + test.labels[None, :] * C + pred).ravel()
    cm = np.bincount(codes, minlength=m * C * C).reshape(m, C, C).astype(float)
    tp = np.einsum("mcc->mc", cm)
    fp = cm.sum(axis=1) - tp
    fn = cm.sum(axis=2) - tp
    present = np.bincount(test.labels, minlength=C) > 0
    return _macro_f1_from_counts(tp, fp, fn, present)


_IDX_TYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}


def read_idx(path) -> np.ndarray:
    """Parse an IDX container (``00 00 <type> <ndim>`` magic, big-endian dims, payload)."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 4:
        raise MalformedFile(path, len(raw), "truncated magic number")
    if raw[0] != 0 or raw[1] != 0:
        raise MalformedFile(path, 0, "magic number must start with two zero bytes")
    dtype = _IDX_TYPES.get(raw[2])
    if dtype is None:
        raise MalformedFile(path, 2, f"unknown element type 0x{raw[2]:02x}")
    ndim = raw[3]
    if ndim == 0:
        raise MalformedFile(path, 3, "zero dimensions")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise MalformedFile(path, len(raw), "truncated dimension header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    expected = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    payload = len(raw) - header
    if payload < expected:
        raise MalformedFile(path, len(raw), f"payload has {payload} bytes, header promises {expected}")
    if payload > expected:
        raise MalformedFile(path, header + expected, "trailing bytes after payload")
    return np.frombuffer(raw, dtype=dtype, count=int(np.prod(dims)), offset=header).reshape(dims)


def load_idx(images_path, labels_path, n_classes: int | None = None) -> Dataset:
    """Images/labels IDX pair as a Dataset, features flattened and scaled to [0, 1]."""
    images = read_idx(images_path)
    labels = read_idx(labels_path)
    if images.shape[0] == 0:
        raise InsufficientData(f"{images_path} holds no items")
    if labels.ndim != 1 or labels.shape[0] != images.shape[0]:
        raise MalformedFile(labels_path, 4, f"expected {images.shape[0]} labels, got shape {labels.shape}")
    feats = images.reshape(images.shape[0], -1).astype(np.float64)
    if images.dtype == np.dtype(">u1"):
        feats /= 255.0
    else:
        lo, hi = feats.min(), feats.max()
        feats = (feats - lo) / (hi - lo) if hi > lo else np.zeros_like(feats)
    labels = labels.astype(np.int64)
    k = int(labels.max()) + 1 if n_classes is None else n_classes
    return Dataset(feats, labels, k)
