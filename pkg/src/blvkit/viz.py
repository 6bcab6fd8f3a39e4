"""Exact t-SNE and PCA projections of logit vectors, with CSV export.

The optimiser follows the reference t-SNE recipe: per-point Gaussian
bandwidths found by bisection on the target perplexity, symmetrised joint
affinities, early exaggeration, momentum 0.5 -> 0.8 and per-coordinate gains.
Cost is O(N^2) per iteration; intended for N up to a few thousand.
"""

import io
import math
import os
from dataclasses import dataclass

import numpy as np

from . import kernels
from .data import _atomic_write_text
from .errors import VizError
from .numerics import Rng, pca_project

MIN_POINTS = 4


@dataclass
class TsneConfig:
    perplexity: float = 30.0
    iterations: int = 5000
    learning_rate: float = 200.0
    exaggeration: float = 12.0
    exaggeration_iters: int = 250
    momentum_initial: float = 0.5
    momentum_final: float = 0.8
    momentum_switch: int = 250
    min_gain: float = 0.01
    init_std: float = 1e-4
    output_dims: int = 2
    perplexity_tol: float = 1e-3
    kl_every: int = 50
    seed: int = 0

    def validate(self, n_points):
        if n_points < MIN_POINTS:
            raise VizError(f"t-SNE needs at least {MIN_POINTS} points, got {n_points}")
        if not 1.0 < self.perplexity < n_points - 1:
            raise VizError(
                f"perplexity {self.perplexity} infeasible for {n_points} points; choose a value in (1, {n_points - 1})"
            )
        if self.iterations < 250:
            raise VizError("iterations must be >= 250")
        if not 0 <= self.exaggeration_iters <= self.iterations:
            raise VizError("exaggeration_iters must lie in [0, iterations]")
        if self.output_dims < 1:
            raise VizError("output_dims must be >= 1")


@dataclass
class ProjectionResult:
    coordinates: np.ndarray
    labels: np.ndarray
    kl_trace: list
    perplexities: np.ndarray = None
    post_exaggeration_kl: float = None

    @property
    def final_kl(self):
        return self.kl_trace[-1][1]


def squared_distances(x):
    x = np.asarray(x, dtype=np.float64)
    sq = (x * x).sum(axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d, 0.0, out=d)
    np.fill_diagonal(d, 0.0)
    return d


def conditional_affinities(x, perplexity, tol=1e-10, max_iter=200):
    """Row-stochastic P(j|i) and the achieved per-point perplexity.

    ``tol`` bounds the entropy error in nats during bisection.
    """
    d = squared_distances(x)
    if d.shape[0] < 2:
        raise VizError("affinities need at least 2 points")
    p, _, entropy = kernels.cond_affinities(d, math.log(perplexity), tol, max_iter)
    return p, np.exp(entropy)


def joint_probabilities(p_cond):
    p = p_cond + p_cond.T
    return p / p.sum()


def tsne_project(logits, config=None, labels=None):
    config = config or TsneConfig()
    x = np.asarray(logits, dtype=np.float64)
    if x.ndim != 2:
        raise VizError("logits must be an (N, C) matrix")
    n = x.shape[0]
    config.validate(n)
    if not np.all(np.isfinite(x)):
        raise VizError("logits contain non-finite values")

    p_cond, perp = conditional_affinities(x, config.perplexity)
    bad = np.abs(perp - config.perplexity) > config.perplexity_tol
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise VizError(
            f"perplexity calibration failed for {int(bad.sum())} points (point {i} reached {perp[i]:.6f}); "
            "duplicate points or a perplexity near N can cause this"
        )
    p = np.maximum(joint_probabilities(p_cond), 1e-12)
    p /= p.sum()

    rng = Rng(config.seed).child("tsne-init")
    y = config.init_std * rng.normal(n * config.output_dims).reshape(n, config.output_dims)
    update = np.zeros_like(y)
    gains = np.ones_like(y)
    kl_trace = []
    post_kl = None
    p_run = p * config.exaggeration if config.exaggeration_iters else p
    for it in range(1, config.iterations + 1):
        checkpoint = it == config.exaggeration_iters or it % config.kl_every == 0 or it == config.iterations
        grad, kl = kernels.tsne_gradient(y, p_run, checkpoint and p_run is p)
        momentum = config.momentum_initial if it <= config.momentum_switch else config.momentum_final
        same_dir = (grad > 0) == (update > 0)
        gains = np.where(same_dir, gains * 0.8, gains + 0.2)
        np.maximum(gains, config.min_gain, out=gains)
        update = momentum * update - config.learning_rate * gains * grad
        y = y + update
        y -= y.mean(axis=0)
        if it == config.exaggeration_iters:
            p_run = p
            _, post_kl = kernels.tsne_gradient(y, p, True)
            kl_trace.append((it, float(post_kl)))
        elif checkpoint:
            if p_run is not p:
                _, kl = kernels.tsne_gradient(y, p, True)
            kl_trace.append((it, float(kl)))
    if not np.all(np.isfinite(y)):
        raise VizError("t-SNE diverged; lower the learning rate")
    lab = np.zeros(n, dtype=np.int64) if labels is None else np.asarray(labels, dtype=np.int64)
    return ProjectionResult(y, lab, kl_trace, perp, post_kl)


def pca_projection(logits, labels=None, dims=2):
    x = np.asarray(logits, dtype=np.float64)
    try:
        coords = pca_project(x, dims)
    except ValueError as exc:
        raise VizError(str(exc)) from None
    lab = np.zeros(len(x), dtype=np.int64) if labels is None else np.asarray(labels, dtype=np.int64)
    return ProjectionResult(coords, lab, [])


def projection_csv(result, split="train"):
    out = io.StringIO()
    dims = result.coordinates.shape[1]
    axes = ["x", "y"] + [f"d{k}" for k in range(2, dims)]
    out.write(",".join(axes[:dims] + ["label", "split"]) + "\n")
    for row, lab in zip(result.coordinates, result.labels):
        out.write(",".join(repr(float(v)) for v in row) + f",{int(lab)},{split}\n")
    return out.getvalue()


def export_projection(result, path, split="train"):
    directory = os.path.dirname(os.path.abspath(path))
    if os.path.exists(directory) and not os.access(directory, os.W_OK):
        raise OSError(f"cannot write to {directory}")
    _atomic_write_text(path, projection_csv(result, split))


def kl_trace_csv(result):
    return "iteration,kl\n" + "".join(f"{it},{kl!r}\n" for it, kl in result.kl_trace)
