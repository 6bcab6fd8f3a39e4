"""Multi-seed comparison of loss variants on identical synthetic splits."""

import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import config as configlib
from .data import generate_longtail, split_dataset
from .metrics import METRIC_NAMES, full_report, render_table
from .model import predict, train


def _seed_splits(cfg, seed):
    ds = generate_longtail(configlib.generator_spec(cfg, seed=seed))
    return split_dataset(ds, configlib.split_fractions(cfg), seed=seed)


def run_one(cfg, variant, seed, splits=None):
    """Train one (variant, seed) pair. Returns a JSON-ready record."""
    kind, sigma, gamma = configlib.parse_variant(variant)
    try:
        train_set, dev, test = splits or _seed_splits(cfg, seed)
        eval_set = test if cfg["experiment.eval_split"] == "test" else dev
        loss = configlib.loss_config(cfg, kind=kind, sigma=sigma, gamma=gamma)
        tcfg = configlib.train_config(cfg, seed=seed, loss=loss)
        head, _, treport = train(train_set, tcfg)
        pred, _ = predict(head, eval_set)
        report = full_report(eval_set.labels, pred, eval_set.n_classes, eval_set.class_names)
    except Exception as exc:  # recorded per run; the harness decides the exit status
        return {"variant": variant, "seed": seed, "status": "failed", "error": f"{type(exc).__name__}: {exc}"}
    return {
        "variant": variant,
        "seed": seed,
        "status": "ok",
        "train_accuracy": treport.train_accuracy,
        "final_train_loss": treport.epoch_losses[-1],
        "report": report.to_dict(),
        "metrics": report.scalars(),
    }


def _run_task(args):
    cfg, variant, seed = args
    return run_one(cfg, variant, seed)


def run_grid(cfg, workers=1):
    tasks = [(cfg, v, s) for s in cfg["experiment.seeds"] for v in cfg["experiment.variants"]]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_task, tasks))
    records = []
    for seed in cfg["experiment.seeds"]:
        try:
            splits = _seed_splits(cfg, seed)
        except Exception:
            splits = None  # run_one will regenerate and record the failure
        for v in cfg["experiment.variants"]:
            records.append(run_one(cfg, v, seed, splits))
    return records


def _mean_std(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None
    mean = math.fsum(vals) / len(vals)
    std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
    return mean, std


def summarize(cfg, records):
    variants = []
    for v in cfg["experiment.variants"]:
        kind, sigma, gamma = configlib.parse_variant(v)
        runs = [r for r in records if r["variant"] == v]
        ok = [r for r in runs if r["status"] == "ok"]
        mean, std = {}, {}
        for name in METRIC_NAMES:
            mean[name], std[name] = _mean_std([r["metrics"][name] for r in ok])
        variants.append(
            {
                "variant": v,
                "kind": kind,
                "sigma": sigma if kind != "blv" or sigma is not None else cfg["loss.sigma"],
                "gamma": gamma if kind != "focal" or gamma is not None else cfg["loss.gamma"],
                "runs_ok": len(ok),
                "runs_failed": len(runs) - len(ok),
                "mean": mean,
                "std": std,
                "seeds": [r["seed"] for r in runs],
            }
        )
    baseline = next((row for row in variants if row["kind"] == "cross_entropy" and row["runs_ok"]), None)
    deltas = {}
    if baseline is not None:
        for row in variants:
            if row is baseline or not row["runs_ok"]:
                continue
            deltas[f"{row['variant']} - {baseline['variant']}"] = {
                name: None
                if row["mean"][name] is None or baseline["mean"][name] is None
                else row["mean"][name] - baseline["mean"][name]
                for name in METRIC_NAMES
            }
    return {
        "seeds": list(cfg["experiment.seeds"]),
        "eval_split": cfg["experiment.eval_split"],
        "variants": variants,
        "baseline": baseline["variant"] if baseline else None,
        "deltas": deltas,
        "runs": records,
    }


def render_summary(summary):
    rows = []
    for row in summary["variants"]:
        sigma = row["sigma"] if row["kind"] == "blv" else None
        rows.append((row["variant"], sigma, row["mean"]))
    text = f"mean over {len(summary['seeds'])} seeds ({summary['eval_split']} split)\n"
    text += render_table(rows)
    failed = [r for r in summary["runs"] if r["status"] != "ok"]
    for r in failed:
        text += f"FAILED {r['variant']} seed={r['seed']}: {r['error']}\n"
    return text
