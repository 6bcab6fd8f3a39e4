"""Balancing Logit Variation loss for long-tailed ordinal classification."""

from .data import (
    ClassStats,
    Dataset,
    GeneratorSpec,
    compute_class_stats,
    discretized_gaussian_priors,
    generate_longtail,
    load_dataset,
    save_dataset,
    split_dataset,
)
from .losses import LossConfig, LossResult, blv_loss, compute_loss, cross_entropy, focal_loss, perturb_logits
from .metrics import MetricsReport, full_report, render_table
from .model import ClassifierHead, TrainConfig, TrainReport, predict, train
from .numerics import Rng, log_sum_exp, pca_project, sample_normal, softmax
from .viz import TsneConfig, tsne_project

__version__ = "0.1.0"

__all__ = [
    "ClassStats",
    "ClassifierHead",
    "Dataset",
    "GeneratorSpec",
    "LossConfig",
    "LossResult",
    "MetricsReport",
    "Rng",
    "TrainConfig",
    "TrainReport",
    "TsneConfig",
    "blv_loss",
    "compute_class_stats",
    "compute_loss",
    "cross_entropy",
    "discretized_gaussian_priors",
    "focal_loss",
    "full_report",
    "generate_longtail",
    "load_dataset",
    "log_sum_exp",
    "pca_project",
    "perturb_logits",
    "predict",
    "render_table",
    "sample_normal",
    "save_dataset",
    "softmax",
    "split_dataset",
    "tsne_project",
]
