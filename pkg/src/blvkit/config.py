"""Flat dotted-key run configuration.

One ``key = value`` pair per line; values are JSON literals (bare words are
read as strings); ``#`` starts a comment line. Command-line overrides use
the same ``key=value`` syntax. The effective configuration is written back
in the same format, sorted by key, so it can be diffed and re-run.
"""

import hashlib
import json

from .data import GeneratorSpec
from .errors import ConfigError
from .losses import LossConfig
from .model import TrainConfig
from .viz import TsneConfig

DEFAULTS = {
    "seed": 0,
    "data.classes": 5,
    "data.samples": 2000,
    "data.dim": 16,
    "data.priors": "gaussian",
    "data.prior_mean": 2.0,
    "data.prior_std": 0.875,
    "data.separation": 3.0,
    "data.noise": 1.0,
    "data.max_tokens": 1,
    "split.train": 0.8,
    "split.dev": 0.1,
    "split.test": 0.1,
    "train.batch_size": 4,
    "train.accumulation": 2,
    "train.epochs": 20,
    "train.lr": 1e-5,
    "train.dropout": 0.1,
    "train.optimizer": "adam",
    "train.beta1": 0.9,
    "train.beta2": 0.999,
    "train.eps": 1e-8,
    "train.init_std": 0.02,
    "loss.kind": "cross_entropy",
    "loss.sigma": 6.0,
    "loss.gamma": 2.0,
    "loss.clamp_empty": False,
    "tsne.method": "tsne",
    "tsne.perplexity": 30.0,
    "tsne.iterations": 5000,
    "tsne.learning_rate": 200.0,
    "tsne.exaggeration": 12.0,
    "tsne.exaggeration_iters": 250,
    "experiment.seeds": list(range(10)),
    "experiment.variants": ["cross_entropy", "focal:2", "blv:2", "blv:6"],
    "experiment.eval_split": "test",
    "input.data": "",
    "input.checkpoint": "",
    "input.dataset": "",
    "out": "runs",
    "run_id": "",
    "workers": 1,
}

# keys that do not change results and are left out of the run hash
_NON_SEMANTIC = {"out", "run_id", "workers"}


def parse_value(text):
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _coerce(key, value):
    default = DEFAULTS[key]
    if key == "data.priors":
        if isinstance(value, str) or (isinstance(value, list) and all(_is_number(v) for v in value)):
            return [float(v) for v in value] if isinstance(value, list) else value
        raise ConfigError(f"{key}: expected 'gaussian', 'uniform' or a list of numbers")
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
    elif isinstance(default, int):
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        if isinstance(value, float) and value.is_integer():
            return int(value)
    elif isinstance(default, float):
        if _is_number(value):
            return float(value)
    elif isinstance(default, str):
        if isinstance(value, str):
            return value
        if _is_number(value):
            return str(value)
    elif isinstance(default, list):
        if isinstance(value, list):
            return value
    raise ConfigError(f"{key}: value {value!r} does not match the expected type {type(default).__name__}")


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def parse_text(text, source="<config>"):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        key = key.strip()
        if key not in DEFAULTS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = _coerce(key, parse_value(value))
    return values


def parse_override(item):
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like key=value")
    key, value = item.split("=", 1)
    key = key.strip()
    if key not in DEFAULTS:
        raise ConfigError(f"unknown key {key!r}")
    return key, _coerce(key, parse_value(value))


def load(path=None, overrides=()):
    cfg = dict(DEFAULTS)
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        cfg.update(parse_text(text, path))
    for item in overrides:
        key, value = parse_override(item) if isinstance(item, str) else item
        cfg[key] = _coerce(key, value)
    validate(cfg)
    return cfg


def dump(cfg):
    return "".join(f"{k} = {json.dumps(cfg[k])}\n" for k in sorted(cfg))


def run_hash(cfg, command):
    semantic = {k: v for k, v in cfg.items() if k not in _NON_SEMANTIC}
    blob = command + "\n" + dump(semantic)
    return hashlib.sha256(blob.encode()).hexdigest()[:10]


def generator_spec(cfg, seed=None):
    return GeneratorSpec(
        n_classes=cfg["data.classes"],
        n_samples=cfg["data.samples"],
        priors=cfg["data.priors"],
        prior_mean=cfg["data.prior_mean"],
        prior_std=cfg["data.prior_std"],
        dim=cfg["data.dim"],
        separation=cfg["data.separation"],
        noise_std=cfg["data.noise"],
        max_tokens=cfg["data.max_tokens"],
        seed=cfg["seed"] if seed is None else seed,
    )


def split_fractions(cfg):
    return (cfg["split.train"], cfg["split.dev"], cfg["split.test"])


def loss_config(cfg, kind=None, sigma=None, gamma=None):
    return LossConfig(
        kind=kind or cfg["loss.kind"],
        sigma=cfg["loss.sigma"] if sigma is None else sigma,
        gamma=cfg["loss.gamma"] if gamma is None else gamma,
        clamp_empty_classes=cfg["loss.clamp_empty"],
    )


def train_config(cfg, seed=None, loss=None):
    return TrainConfig(
        batch_size=cfg["train.batch_size"],
        grad_accumulation_steps=cfg["train.accumulation"],
        epochs=cfg["train.epochs"],
        learning_rate=cfg["train.lr"],
        dropout_rate=cfg["train.dropout"],
        optimizer=cfg["train.optimizer"],
        beta1=cfg["train.beta1"],
        beta2=cfg["train.beta2"],
        eps=cfg["train.eps"],
        init_std=cfg["train.init_std"],
        seed=cfg["seed"] if seed is None else seed,
        loss=loss or loss_config(cfg),
    )


def tsne_config(cfg):
    return TsneConfig(
        perplexity=cfg["tsne.perplexity"],
        iterations=cfg["tsne.iterations"],
        learning_rate=cfg["tsne.learning_rate"],
        exaggeration=cfg["tsne.exaggeration"],
        exaggeration_iters=cfg["tsne.exaggeration_iters"],
        seed=cfg["seed"],
    )


def parse_variant(name):
    """'cross_entropy' | 'ce' | 'focal:<gamma>' | 'blv:<sigma>' -> (kind, sigma, gamma)."""
    head, _, arg = str(name).partition(":")
    try:
        if head in ("cross_entropy", "ce") and not arg:
            return "cross_entropy", None, None
        if head == "focal":
            return "focal", None, float(arg) if arg else None
        if head == "blv":
            return "blv", float(arg) if arg else None, None
    except ValueError:
        pass
    raise ConfigError(f"bad experiment variant {name!r}; use cross_entropy, focal:<gamma> or blv:<sigma>")


def validate(cfg):
    if not 0 <= cfg["seed"] < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if cfg["workers"] < 1:
        raise ConfigError("workers must be >= 1")
    if cfg["tsne.method"] not in ("tsne", "pca"):
        raise ConfigError("tsne.method must be 'tsne' or 'pca'")
    if cfg["experiment.eval_split"] not in ("dev", "test"):
        raise ConfigError("experiment.eval_split must be 'dev' or 'test'")
    seeds = cfg["experiment.seeds"]
    if not seeds or not all(isinstance(s, int) and s >= 0 for s in seeds):
        raise ConfigError("experiment.seeds must be a non-empty list of non-negative integers")
    for v in cfg["experiment.variants"]:
        parse_variant(v)
    try:
        generator_spec(cfg).validate()
        train_config(cfg).validate()
        tsne = tsne_config(cfg)
        if tsne.iterations < 250:
            raise ValueError("tsne.iterations must be >= 250")
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    fr = split_fractions(cfg)
    if any(f <= 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
        raise ConfigError("split fractions must be positive and sum to 1")
    return cfg
