"""Mean-pooled linear classification head trained by manual backprop.

The upstream encoder is frozen: inputs are precomputed token embeddings.
The head computes ``dropout(mean_pool(x)) @ W + b``.
"""

import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .data import _atomic_write_text, compute_class_stats
from .errors import DataError
from .losses import LossConfig, compute_loss
from .metrics import full_report
from .numerics import Rng

CHECKPOINT_VERSION = 1
STREAMS = ("init", "data", "dropout", "noise")


def mean_pool(embeddings, lengths):
    mask = np.arange(embeddings.shape[1])[None, :] < lengths[:, None]
    summed = (embeddings * mask[:, :, None]).sum(axis=1)
    return summed / lengths[:, None]


class ClassifierHead:
    def __init__(self, weight, bias, dropout_rate=0.1):
        if not 0.0 <= dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        self.weight = np.array(weight, dtype=np.float64)
        self.bias = np.array(bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ValueError("weight must be (D, C) and bias (C,)")
        self.dropout_rate = float(dropout_rate)
        self._cache = None

    @classmethod
    def init(cls, dim, n_classes, rng, dropout_rate=0.1, std=0.02):
        weight = std * rng.normal(dim * n_classes).reshape(dim, n_classes)
        return cls(weight, np.zeros(n_classes), dropout_rate)

    @property
    def dim(self):
        return self.weight.shape[0]

    @property
    def n_classes(self):
        return self.weight.shape[1]

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, embeddings, lengths, training=False, rng=None):
        """Logits for a padded batch (B, T, D) with per-sample token counts."""
        embeddings = np.asarray(embeddings, dtype=np.float64)
        if embeddings.ndim == 2:
            embeddings = embeddings[:, None, :]
        lengths = np.asarray(lengths, dtype=np.int64)
        if embeddings.shape[2] != self.dim:
            raise DataError(f"embedding dim {embeddings.shape[2]} does not match head dim {self.dim}")
        pooled = mean_pool(embeddings, lengths)
        if training and self.dropout_rate > 0:
            if rng is None:
                raise ValueError("training-mode dropout needs an Rng")
            keep = rng.uniform(pooled.shape) >= self.dropout_rate
            pooled = pooled * keep / (1.0 - self.dropout_rate)
        self._cache = pooled if training else None
        return pooled @ self.weight + self.bias

    def backward(self, grad_logits):
        """Parameter gradients for the most recent training-mode forward."""
        if self._cache is None:
            raise RuntimeError("backward called without a paired training-mode forward")
        pooled, self._cache = self._cache, None
        grad_logits = np.asarray(grad_logits, dtype=np.float64)
        if grad_logits.shape != (pooled.shape[0], self.n_classes):
            raise ValueError("grad_logits shape does not match the forward batch")
        return {"weight": pooled.T @ grad_logits, "bias": grad_logits.sum(axis=0)}


class Adam:
    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m = {}
        self.v = {}

    def step(self, params, grads, lr):
        self.step_count += 1
        t = self.step_count
        for name, p in params.items():
            g = grads[name]
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1**t)
            v_hat = v / (1.0 - self.beta2**t)
            p -= lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_dict(self):
        return {
            "kind": "adam",
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "step": self.step_count,
            "m": {k: v.tolist() for k, v in sorted(self.m.items())},
            "v": {k: v.tolist() for k, v in sorted(self.v.items())},
        }

    @classmethod
    def from_state(cls, blob):
        opt = cls(blob["beta1"], blob["beta2"], blob["eps"])
        opt.step_count = blob["step"]
        opt.m = {k: np.array(v, dtype=np.float64) for k, v in blob["m"].items()}
        opt.v = {k: np.array(v, dtype=np.float64) for k, v in blob["v"].items()}
        return opt


class SGD:
    def __init__(self):
        self.step_count = 0

    def step(self, params, grads, lr):
        self.step_count += 1
        for name, p in params.items():
            p -= lr * grads[name]

    def state_dict(self):
        return {"kind": "sgd", "step": self.step_count}

    @classmethod
    def from_state(cls, blob):
        opt = cls()
        opt.step_count = blob["step"]
        return opt


def make_optimizer(name, beta1=0.9, beta2=0.999, eps=1e-8):
    if name == "adam":
        return Adam(beta1, beta2, eps)
    if name == "sgd":
        return SGD()
    raise ValueError(f"unknown optimizer {name!r}")


@dataclass
class TrainConfig:
    batch_size: int = 4
    grad_accumulation_steps: int = 2
    epochs: int = 20
    learning_rate: float = 1e-5
    dropout_rate: float = 0.1
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    init_std: float = 0.02
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)

    def validate(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.grad_accumulation_steps < 1:
            raise ValueError("grad_accumulation_steps must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainReport:
    epoch_losses: list
    train_accuracy: float
    eval_losses: list
    dev_reports: list
    wall_clock: float
    optimizer_steps: int

    def to_dict(self):
        return {
            "epochs": len(self.epoch_losses),
            "epoch_losses": self.epoch_losses,
            "eval_losses": self.eval_losses,
            "train_accuracy": self.train_accuracy,
            "optimizer_steps": self.optimizer_steps,
            "dev_reports": [r.to_dict() for r in self.dev_reports],
            "wall_clock_seconds": self.wall_clock,
        }


class Trainer:
    """Owns the head, optimizer and the named random streams of one run."""

    def __init__(self, config, dim, n_classes):
        config.validate()
        self.config = config
        root = Rng(config.seed)
        self.rngs = {name: root.child(name) for name in STREAMS}
        self.head = ClassifierHead.init(dim, n_classes, self.rngs["init"], config.dropout_rate, config.init_std)
        self.optimizer = make_optimizer(config.optimizer, config.beta1, config.beta2, config.eps)

    def microbatch_grads(self, embeddings, lengths, labels, stats):
        z = self.head.forward(embeddings, lengths, training=True, rng=self.rngs["dropout"])
        result = compute_loss(self.config.loss, z, labels, stats=stats, rng=self.rngs["noise"])
        return result.value, self.head.backward(result.grad)

    def apply(self, grad_sums, count):
        grads = {k: v / count for k, v in grad_sums.items()}
        self.optimizer.step(self.head.params(), grads, self.config.learning_rate)

    def run_epoch(self, train_set, stats):
        cfg = self.config
        order = self.rngs["data"].permutation(len(train_set))
        losses = []
        sums, seen = None, 0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            lengths = train_set.lengths[idx]
            emb = train_set.embeddings[idx, : lengths.max()]
            value, grads = self.microbatch_grads(emb, lengths, train_set.labels[idx], stats)
            losses.append(value)
            if sums is None:
                sums = grads
            else:
                for k in sums:
                    sums[k] = sums[k] + grads[k]
            seen += 1
            if seen == cfg.grad_accumulation_steps:
                self.apply(sums, seen)
                sums, seen = None, 0
        if seen:
            self.apply(sums, seen)
        return float(np.mean(losses))


def train(train_set, config, dev=None):
    """Train a fresh head. Returns (head, trainer, TrainReport)."""
    if len(train_set) == 0:
        raise DataError("training split is empty")
    if dev is not None and len(dev) == 0:
        raise DataError("dev split is empty but dev metrics were requested")
    if dev is not None and dev.dim != train_set.dim:
        raise DataError("dev embedding dim differs from training data")
    stats = None
    if config.loss.kind == "blv":
        stats = compute_class_stats(train_set.labels, train_set.n_classes, config.loss.clamp_empty_classes)
    started = time.perf_counter()
    trainer = Trainer(config, train_set.dim, train_set.n_classes)
    # eval_losses: full pass over the training split, no dropout and no noise
    eval_cfg = replace(config.loss, training_mode=False)
    epoch_losses, eval_losses, dev_reports = [], [], []
    for _ in range(config.epochs):
        epoch_losses.append(trainer.run_epoch(train_set, stats))
        _, logits = predict(trainer.head, train_set)
        eval_losses.append(compute_loss(eval_cfg, logits, train_set.labels, stats).value)
        if dev is not None:
            pred, _ = predict(trainer.head, dev)
            dev_reports.append(full_report(dev.labels, pred, dev.n_classes, dev.class_names))
    pred, _ = predict(trainer.head, train_set)
    report = TrainReport(
        epoch_losses=epoch_losses,
        train_accuracy=float(np.mean(pred == train_set.labels)),
        eval_losses=eval_losses,
        dev_reports=dev_reports,
        wall_clock=time.perf_counter() - started,
        optimizer_steps=trainer.optimizer.step_count,
    )
    return trainer.head, trainer, report


def predict(head, dataset):
    """Argmax over unperturbed logits; ties resolve to the lower class index."""
    if dataset.dim != head.dim:
        raise DataError(f"dataset dim {dataset.dim} does not match head dim {head.dim}")
    if dataset.n_classes != head.n_classes:
        raise DataError(f"dataset has {dataset.n_classes} classes, head has {head.n_classes}")
    logits = head.forward(dataset.embeddings, dataset.lengths, training=False)
    return np.argmax(logits, axis=1), logits


def checkpoint_to_dict(head, optimizer=None, rngs=None, class_names=()):
    return {
        "format": "blvkit-checkpoint",
        "version": CHECKPOINT_VERSION,
        "dim": head.dim,
        "classes": head.n_classes,
        "class_names": list(class_names),
        "dropout_rate": head.dropout_rate,
        "weight": head.weight.tolist(),
        "bias": head.bias.tolist(),
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "rng": {name: r.get_state() for name, r in sorted((rngs or {}).items())},
    }


def save_checkpoint(path, head, optimizer=None, rngs=None, class_names=()):
    blob = checkpoint_to_dict(head, optimizer, rngs, class_names)
    _atomic_write_text(path, json.dumps(blob) + "\n")


def load_checkpoint(path):
    """Return (head, optimizer or None, rngs dict, class_names)."""
    with open(path, encoding="utf-8") as fh:
        try:
            blob = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: not a checkpoint ({exc})") from None
    if blob.get("format") != "blvkit-checkpoint" or blob.get("version") != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint format")
    head = ClassifierHead(blob["weight"], blob["bias"], blob["dropout_rate"])
    if head.dim != blob["dim"] or head.n_classes != blob["classes"]:
        raise DataError(f"{path}: header shape disagrees with stored parameters")
    opt_blob = blob.get("optimizer")
    optimizer = None
    if opt_blob is not None:
        optimizer = (Adam if opt_blob["kind"] == "adam" else SGD).from_state(opt_blob)
    rngs = {name: Rng.from_state(state) for name, state in blob.get("rng", {}).items()}
    return head, optimizer, rngs, tuple(blob.get("class_names") or ())
