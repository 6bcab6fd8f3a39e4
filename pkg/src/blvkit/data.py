"""Datasets of precomputed token embeddings with ordinal labels.

File format (JSON lines, UTF-8)::

    {"version": 1, "classes": C, "dim": D, "class_names": [...]}
    {"label": 3, "embedding": [[...D floats...], ...]}
    ...

Each record's embedding is a list of one or more token vectors. Pre-pooled
vectors are stored as a single token. Floats are written with Python's
shortest round-trip repr, so save -> load -> save is byte-identical.
"""

import json
import math
import os
import tempfile
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .numerics import Rng

FORMAT_VERSION = 1
ICNALE_LEVELS = ("A2_0", "B1_1", "B1_2", "B2_0", "XX_0")


class SplitWarning(UserWarning):
    pass


def default_class_names(n_classes):
    if n_classes == len(ICNALE_LEVELS):
        return list(ICNALE_LEVELS)
    return [f"class_{k}" for k in range(n_classes)]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Padded token embeddings (N, T, D), per-sample lengths, labels in [0, C)."""

    embeddings: np.ndarray
    labels: np.ndarray
    n_classes: int
    lengths: np.ndarray
    class_names: tuple = ()

    def __post_init__(self):
        emb = np.asarray(self.embeddings, dtype=np.float64)
        if emb.ndim == 2:
            emb = emb[:, None, :]
        if emb.ndim != 3:
            raise DataError("embeddings must have shape (N, D) or (N, T, D)")
        labels = np.asarray(self.labels, dtype=np.int64)
        lengths = np.asarray(self.lengths, dtype=np.int64)
        n = emb.shape[0]
        if labels.shape != (n,) or lengths.shape != (n,):
            raise DataError("labels and lengths must have one entry per sample")
        if self.n_classes < 1:
            raise DataError("class count must be >= 1")
        if n and (labels.min() < 0 or labels.max() >= self.n_classes):
            bad = int(np.flatnonzero((labels < 0) | (labels >= self.n_classes))[0])
            raise DataError(f"label out of range: sample {bad} has label {labels[bad]} (C={self.n_classes})")
        if n and (lengths.min() < 1 or lengths.max() > emb.shape[1]):
            raise DataError("sequence lengths must lie in [1, T]")
        if not np.all(np.isfinite(emb)):
            raise DataError("embeddings contain non-finite values")
        names = tuple(self.class_names) or tuple(default_class_names(self.n_classes))
        if len(names) != self.n_classes:
            raise DataError("class_names must have one entry per class")
        for attr, value in (("embeddings", emb), ("labels", labels), ("lengths", lengths)):
            value.setflags(write=False)
            object.__setattr__(self, attr, value)
        object.__setattr__(self, "class_names", names)

    @classmethod
    def from_vectors(cls, vectors, labels, n_classes, class_names=()):
        vectors = np.asarray(vectors, dtype=np.float64)
        return cls(vectors[:, None, :], labels, n_classes, np.ones(len(vectors), dtype=np.int64), class_names)

    def __len__(self):
        return self.embeddings.shape[0]

    @property
    def dim(self):
        return self.embeddings.shape[2]

    def subset(self, indices):
        idx = np.asarray(indices, dtype=np.int64)
        lengths = self.lengths[idx]
        width = int(lengths.max()) if len(idx) else 1
        return Dataset(self.embeddings[idx, :width], self.labels[idx], self.n_classes, lengths, self.class_names)

    def pooled(self):
        """Mean of the valid token vectors per sample, shape (N, D)."""
        mask = np.arange(self.embeddings.shape[1])[None, :] < self.lengths[:, None]
        return (self.embeddings * mask[:, :, None]).sum(axis=1) / self.lengths[:, None]


def _atomic_write_text(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dataset_to_text(ds):
    header = {"version": FORMAT_VERSION, "classes": ds.n_classes, "dim": ds.dim, "class_names": list(ds.class_names)}
    lines = [json.dumps(header)]
    for i in range(len(ds)):
        tokens = ds.embeddings[i, : ds.lengths[i]].tolist()
        lines.append(json.dumps({"label": int(ds.labels[i]), "embedding": tokens}))
    return "\n".join(lines) + "\n"


def save_dataset(ds, path):
    _atomic_write_text(path, dataset_to_text(ds))


def load_dataset(path):
    with open(path, encoding="utf-8") as fh:
        raw_lines = fh.read().splitlines()
    if not raw_lines:
        raise DataError(f"{path}: empty file")
    try:
        header = json.loads(raw_lines[0])
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:1: malformed header: {exc}") from None
    if not isinstance(header, dict) or header.get("version") != FORMAT_VERSION:
        raise DataError(f"{path}:1: header must be an object with version {FORMAT_VERSION}")
    try:
        n_classes = int(header["classes"])
        dim = int(header["dim"])
    except (KeyError, TypeError, ValueError):
        raise DataError(f"{path}:1: header needs integer 'classes' and 'dim'") from None
    names = header.get("class_names") or default_class_names(n_classes)

    labels, seqs = [], []
    for lineno, line in enumerate(raw_lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            label = rec["label"]
            tokens = np.asarray(rec["embedding"], dtype=np.float64)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}:{lineno}: malformed record ({exc})") from None
        if not isinstance(label, int) or isinstance(label, bool):
            raise DataError(f"{path}:{lineno}: label must be an integer")
        if tokens.ndim != 2 or tokens.shape[0] < 1 or tokens.shape[1] != dim:
            raise DataError(f"{path}:{lineno}: embedding must be a non-empty list of {dim}-dim token vectors")
        if not 0 <= label < n_classes:
            raise DataError(f"{path}:{lineno}: label out of range: sample {len(labels)} has label {label} (C={n_classes})")
        labels.append(label)
        seqs.append(tokens)
    if not labels:
        raise DataError(f"{path}: no records")
    width = max(len(s) for s in seqs)
    emb = np.zeros((len(seqs), width, dim))
    for i, s in enumerate(seqs):
        emb[i, : len(s)] = s
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    return Dataset(emb, labels, n_classes, lengths, tuple(names))


@dataclass(frozen=True)
class ClassStats:
    counts: tuple
    total: int
    alpha: np.ndarray = field(repr=False)

    @property
    def n_classes(self):
        return len(self.counts)


def compute_class_stats(labels, n_classes, clamp_empty=False):
    """Per-class counts and normalised log-frequency weights.

    alpha_k = log(N / q_k) / max_j log(N / q_j), so the rarest class gets 1
    and rarer classes never get smaller weights than commoner ones.
    """
    if n_classes < 2:
        raise DataError("at least 2 classes are required for frequency weights")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise DataError(f"labels must lie in [0, {n_classes})")
    counts = np.bincount(labels, minlength=n_classes)
    total = int(counts.sum())
    if clamp_empty:
        counts = np.maximum(counts, 1)
        total = int(counts.sum())
    else:
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            raise DataError(f"class {int(empty[0])} has zero samples")
    logs = np.log(total / counts)
    top = logs.max()
    if top <= 0:
        raise DataError("frequency weights undefined when one class holds every sample")
    alpha = logs / top
    alpha.setflags(write=False)
    return ClassStats(tuple(int(c) for c in counts), total, alpha)


def discretized_gaussian_priors(n_classes, mean, std):
    """Normal mass over unit bins centred on 0..C-1, tails folded into the ends."""
    edges = np.arange(n_classes + 1) - 0.5
    cdf = np.array([0.5 * (1.0 + math.erf((e - mean) / (std * math.sqrt(2.0)))) for e in edges])
    cdf[0], cdf[-1] = 0.0, 1.0
    return np.diff(cdf)


def allocate_counts(priors, total):
    """Largest-remainder allocation of ``total`` items; ties go to lower indices."""
    raw = np.asarray(priors, dtype=np.float64) * total
    counts = np.floor(raw).astype(np.int64)
    leftover = total - int(counts.sum())
    order = sorted(range(len(raw)), key=lambda k: (-(raw[k] - counts[k]), k))
    for k in order[:leftover]:
        counts[k] += 1
    return counts


@dataclass
class GeneratorSpec:
    n_classes: int = 5
    n_samples: int = 2000
    priors: object = "gaussian"
    prior_mean: float = 2.0
    prior_std: float = 0.875  # centre:tail count ratio ~10 for 5 classes
    dim: int = 16
    separation: float = 3.0
    noise_std: float = 1.0
    max_tokens: int = 1
    seed: int = 0

    def resolved_priors(self):
        if isinstance(self.priors, str):
            if self.priors == "gaussian":
                return discretized_gaussian_priors(self.n_classes, self.prior_mean, self.prior_std)
            if self.priors == "uniform":
                return np.full(self.n_classes, 1.0 / self.n_classes)
            raise DataError(f"unknown prior profile {self.priors!r}")
        pri = np.asarray(self.priors, dtype=np.float64)
        if pri.shape != (self.n_classes,):
            raise DataError(f"expected {self.n_classes} priors, got {pri.size}")
        return pri

    def validate(self):
        if self.n_classes < 2:
            raise DataError("generator needs at least 2 classes")
        pri = self.resolved_priors()
        if np.any(pri < 0) or abs(pri.sum() - 1.0) > 1e-9:
            raise DataError("priors must be non-negative and sum to 1")
        if not self.separation > 0:
            raise DataError("cluster separation must be positive")
        if self.noise_std < 0:
            raise DataError("cluster noise std must be >= 0")
        if self.dim < self.n_classes:
            raise DataError("feature dim must be >= number of classes")
        if self.max_tokens < 1:
            raise DataError("max_tokens must be >= 1")
        return pri


def cluster_centers(n_classes, dim, separation):
    """Vertices of a regular simplex with pairwise distance ``separation``."""
    centers = np.zeros((n_classes, dim))
    centers[np.arange(n_classes), np.arange(n_classes)] = separation / math.sqrt(2.0)
    return centers


def generate_longtail(spec):
    pri = spec.validate()
    counts = allocate_counts(pri, spec.n_samples)
    if np.any(counts == 0):
        k = int(np.flatnonzero(counts == 0)[0])
        raise DataError(f"class {k} would receive 0 samples; increase n_samples")
    rng = Rng(spec.seed).child("generate")
    labels = np.repeat(np.arange(spec.n_classes), counts)
    labels = labels[rng.permutation(labels.size)]
    centers = cluster_centers(spec.n_classes, spec.dim, spec.separation)
    n, t, d = labels.size, spec.max_tokens, spec.dim
    if t == 1:
        lengths = np.ones(n, dtype=np.int64)
    else:
        lengths = rng.integers(1, t + 1, size=n).astype(np.int64)
    noise = rng.normal(n * t * d).reshape(n, t, d) * spec.noise_std
    emb = centers[labels][:, None, :] + noise
    emb[np.arange(t)[None, :] >= lengths[:, None]] = 0.0
    return Dataset(emb, labels, spec.n_classes, lengths)


def split_dataset(ds, fractions=(0.8, 0.1, 0.1), seed=0):
    """Stratified disjoint split into (train, dev, test).

    Each class is shuffled and cut by largest-remainder rounding of its size.
    Classes smaller than the number of parts trigger a SplitWarning; they land
    in train first. Partitions may come back empty for tiny datasets.
    """
    fr = np.asarray(fractions, dtype=np.float64)
    if fr.shape != (3,) or np.any(fr <= 0) or abs(fr.sum() - 1.0) > 1e-9:
        raise DataError("split fractions must be three positive numbers summing to 1")
    rng = Rng(seed).child("split")
    parts = [[], [], []]
    for k in range(ds.n_classes):
        members = np.flatnonzero(ds.labels == k)
        if members.size == 0:
            continue
        if members.size < 3:
            warnings.warn(
                f"class {k} has {members.size} samples, fewer than 3 partitions; assigned to train first",
                SplitWarning,
                stacklevel=2,
            )
        members = members[rng.permutation(members.size)]
        sizes = allocate_counts(fr, members.size)
        start = 0
        for part, size in zip(parts, sizes):
            part.extend(members[start : start + size].tolist())
            start += size
    return tuple(ds.subset(sorted(p)) for p in parts)
