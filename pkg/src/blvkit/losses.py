"""Cross-entropy, focal and Balancing Logit Variation (BLV) losses.

All losses return the batch-mean value and its gradient with respect to the
raw logits. BLV adds class-scaled half-normal noise to the logits before the
cross-entropy:

    z_hat[i, k] = z[i, k] + alpha_k * |delta[i, k]|,   delta ~ N(0, sigma^2)

where alpha comes from :func:`blvkit.data.compute_class_stats`. The noise is
drawn independently per (sample, class) entry on every call and treated as a
constant when differentiating, so d z_hat / d z is the identity.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .numerics import sample_normal

LOSS_KINDS = ("cross_entropy", "focal", "blv")


@dataclass
class LossConfig:
    kind: str = "cross_entropy"
    sigma: float = 6.0
    gamma: float = 2.0
    training_mode: bool = True
    clamp_empty_classes: bool = False
    noise_override: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"loss kind must be one of {LOSS_KINDS}, got {self.kind!r}")
        if not self.sigma >= 0:
            raise ValueError("sigma must be >= 0")
        if not self.gamma >= 0:
            raise ValueError("gamma must be >= 0")
        if self.noise_override is not None:
            override = np.asarray(self.noise_override, dtype=np.float64)
            if np.any(override < 0):
                raise ValueError("noise_override holds |delta| magnitudes and must be >= 0")
            self.noise_override = override


@dataclass
class LossResult:
    value: float
    grad: np.ndarray


def _check_batch(z, labels):
    z = np.ascontiguousarray(z, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    if z.ndim != 2 or z.shape[0] == 0 or z.shape[1] == 0:
        raise ValueError("logits must be a non-empty (B, C) matrix")
    if labels.shape != (z.shape[0],):
        raise ValueError("need exactly one label per logit row")
    if labels.min() < 0 or labels.max() >= z.shape[1]:
        raise ValueError(f"labels must lie in [0, {z.shape[1]})")
    if not np.all(np.isfinite(z)):
        raise ValueError("logits contain non-finite entries")
    return z, labels


def cross_entropy(z, labels):
    z, labels = _check_batch(z, labels)
    nll, grad = kernels.ce_rows(z, labels)
    b = z.shape[0]
    return LossResult(float(nll.sum() / b), grad / b)


def focal_loss(z, labels, gamma):
    """Mean of -(1 - p_t)^gamma * log p_t.

    Gradient per row, with p = softmax(z_i) and t the true class::

        dL/dz_j = [gamma (1-p_t)^(gamma-1) p_t log p_t - (1-p_t)^gamma] (1[j=t] - p_j)
    """
    if not gamma >= 0:
        raise ValueError("gamma must be >= 0")
    z, labels = _check_batch(z, labels)
    loss, grad = kernels.focal_rows(z, labels, float(gamma))
    b = z.shape[0]
    return LossResult(float(loss.sum() / b), grad / b)


def perturb_logits(z, stats, sigma, rng=None, override=None):
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != stats.n_classes:
        raise ValueError(f"logits have {z.shape[-1]} columns but class stats describe {stats.n_classes} classes")
    if not sigma >= 0:
        raise ValueError("sigma must be >= 0")
    if override is not None:
        mag = np.asarray(override, dtype=np.float64)
        if mag.shape != z.shape:
            raise ValueError(f"noise override shape {mag.shape} does not match logits {z.shape}")
        if np.any(mag < 0):
            raise ValueError("noise override must be elementwise >= 0")
    elif sigma == 0:
        return z.copy()
    else:
        if rng is None:
            raise ValueError("an Rng is required to sample perturbations")
        mag = np.abs(sample_normal(rng, sigma, z.size)).reshape(z.shape)
    return z + stats.alpha[None, :] * mag


def blv_loss(z, labels, stats, sigma, rng=None, training_mode=True, override=None):
    if not training_mode:
        return cross_entropy(z, labels)
    z_hat = perturb_logits(z, stats, sigma, rng=rng, override=override)
    return cross_entropy(z_hat, labels)


def compute_loss(config, z, labels, stats=None, rng=None):
    """Dispatch on ``config.kind``."""
    if config.kind == "cross_entropy":
        return cross_entropy(z, labels)
    if config.kind == "focal":
        return focal_loss(z, labels, config.gamma)
    if stats is None:
        raise ValueError("blv loss needs class statistics")
    return blv_loss(
        z,
        labels,
        stats,
        config.sigma,
        rng=rng,
        training_mode=config.training_mode,
        override=config.noise_override,
    )
