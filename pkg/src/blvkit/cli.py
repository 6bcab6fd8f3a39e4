"""Command-line entry point: generate, train, evaluate, project, experiment.

Exit codes: 0 ok, 1 I/O, 2 config, 3 data/shape, 4 viz, 5 experiment failure.
Every command writes into ``<out>/<run-id>/`` and echoes its effective config
there as ``config.echo``; ``blvkit <command> --config <that file>`` repeats
the run. Outputs are assembled in memory and written only after the command
has succeeded, each file via write-to-temp and rename.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import config as configlib
from . import experiment
from .data import _atomic_write_text, dataset_to_text, generate_longtail, load_dataset, split_dataset
from .errors import BlvError, ConfigError, DataError, ExperimentError
from .metrics import confusion_csv, full_report, render_table
from .model import checkpoint_to_dict, load_checkpoint, predict, train
from .viz import kl_trace_csv, pca_projection, projection_csv, tsne_project

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_DATA, EXIT_VIZ, EXIT_EXPERIMENT = 0, 1, 2, 3, 4, 5


def _json(obj):
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def run_dir(cfg, command):
    run_id = cfg["run_id"] or f"{command}-{configlib.run_hash(cfg, command)}"
    return os.path.join(cfg["out"], run_id)


def write_outputs(directory, files):
    """Write {name: text} into ``directory``; each file replaced atomically."""
    for name, text in files.items():
        _atomic_write_text(os.path.join(directory, name), text)


def _require(cfg, key, flag):
    path = cfg[key]
    if not path:
        raise ConfigError(f"{flag} is required (or set {key} in the config)")
    return path


def _report_files(report, method, sigma=None):
    return {
        "report.json": _json(report.to_dict()),
        "report.txt": render_table([(method, sigma, report.scalars())]),
        "confusion.csv": confusion_csv(report.confusion, report.class_names),
    }


def cmd_generate(cfg):
    spec = configlib.generator_spec(cfg)
    ds = generate_longtail(spec)
    parts = split_dataset(ds, configlib.split_fractions(cfg), seed=cfg["seed"])
    counts = np.bincount(ds.labels, minlength=ds.n_classes)
    manifest = {
        "seed": spec.seed,
        "classes": spec.n_classes,
        "samples": spec.n_samples,
        "dim": spec.dim,
        "priors": spec.resolved_priors().tolist(),
        "counts": counts.tolist(),
        "class_names": list(ds.class_names),
        "splits": {
            name: {"samples": len(p), "counts": np.bincount(p.labels, minlength=ds.n_classes).tolist()}
            for name, p in zip(("train", "dev", "test"), parts)
        },
    }
    files = {f"{name}.jsonl": dataset_to_text(p) for name, p in zip(("train", "dev", "test"), parts)}
    files["manifest.json"] = _json(manifest)
    out = run_dir(cfg, "generate")
    files["config.echo"] = configlib.dump(cfg)
    write_outputs(out, files)
    print(f"wrote {out}: counts {counts.tolist()} (N={int(counts.sum())})")
    return out


def cmd_train(cfg):
    data_dir = _require(cfg, "input.data", "--data")
    train_set = load_dataset(os.path.join(data_dir, "train.jsonl"))
    dev_path = os.path.join(data_dir, "dev.jsonl")
    dev = load_dataset(dev_path) if os.path.exists(dev_path) else None
    if dev is not None and (dev.n_classes != train_set.n_classes or dev.dim != train_set.dim):
        raise DataError("dev split does not match the training split's classes/dim")
    try:
        tcfg = configlib.train_config(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    head, trainer, treport = train(train_set, tcfg, dev=dev)
    ckpt = checkpoint_to_dict(head, trainer.optimizer, trainer.rngs, train_set.class_names)
    files = {"checkpoint.json": json.dumps(ckpt) + "\n", "train_report.json": _json(treport.to_dict())}
    sigma = tcfg.loss.sigma if tcfg.loss.kind == "blv" else None
    eval_set = dev if dev is not None else train_set
    pred, _ = predict(head, eval_set)
    report = full_report(eval_set.labels, pred, eval_set.n_classes, eval_set.class_names)
    files.update(_report_files(report, tcfg.loss.kind, sigma))
    out = run_dir(cfg, "train")
    files["config.echo"] = configlib.dump(cfg)
    write_outputs(out, files)
    print(f"wrote {out}; train accuracy {treport.train_accuracy:.4f}")
    print(f"{'dev' if dev is not None else 'train'} metrics:")
    print(files["report.txt"], end="")
    return out


def _load_pair(cfg):
    ckpt_path = _require(cfg, "input.checkpoint", "--checkpoint")
    ds_path = _require(cfg, "input.dataset", "--dataset")
    head, _, _, _ = load_checkpoint(ckpt_path)
    ds = load_dataset(ds_path)
    if ds.dim != head.dim or ds.n_classes != head.n_classes:
        raise DataError(
            f"checkpoint expects D={head.dim}, C={head.n_classes}; dataset has D={ds.dim}, C={ds.n_classes}"
        )
    return head, ds


def cmd_evaluate(cfg):
    head, ds = _load_pair(cfg)
    pred, _ = predict(head, ds)
    report = full_report(ds.labels, pred, ds.n_classes, ds.class_names)
    files = _report_files(report, os.path.basename(cfg["input.checkpoint"]))
    out = run_dir(cfg, "evaluate")
    files["config.echo"] = configlib.dump(cfg)
    write_outputs(out, files)
    print(files["report.txt"], end="")
    return out


def cmd_project(cfg):
    head, ds = _load_pair(cfg)
    _, logits = predict(head, ds)
    if cfg["tsne.method"] == "pca":
        result = pca_projection(logits, ds.labels)
    else:
        result = tsne_project(logits, configlib.tsne_config(cfg), labels=ds.labels)
    split = os.path.splitext(os.path.basename(cfg["input.dataset"]))[0]
    files = {"projection.csv": projection_csv(result, split), "kl_trace.csv": kl_trace_csv(result)}
    out = run_dir(cfg, "project")
    files["config.echo"] = configlib.dump(cfg)
    write_outputs(out, files)
    if result.kl_trace:
        print(f"wrote {out}; KL after exaggeration {result.post_exaggeration_kl:.4f}, final {result.final_kl:.4f}")
    else:
        print(f"wrote {out} (PCA)")
    return out


def cmd_experiment(cfg):
    if len(cfg["experiment.variants"]) < 2:
        raise ConfigError("an experiment needs at least 2 variants")
    records = experiment.run_grid(cfg, workers=cfg["workers"])
    summary = experiment.summarize(cfg, records)
    files = {"summary.json": _json(summary), "summary.txt": experiment.render_summary(summary)}
    for r in records:
        if r["status"] == "ok":
            files[os.path.join("runs", f"{r['variant'].replace(':', '-')}-seed{r['seed']}.json")] = _json(r)
    out = run_dir(cfg, "experiment")
    files["config.echo"] = configlib.dump(cfg)
    write_outputs(out, files)
    print(files["summary.txt"], end="")
    dead = [row["variant"] for row in summary["variants"] if row["runs_ok"] == 0]
    if dead:
        raise ExperimentError(f"every run failed for variant(s): {', '.join(dead)}")
    return out


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "project": cmd_project,
    "experiment": cmd_experiment,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--seed", type=int, help="overrides 'seed'")
    common.add_argument("--out", help="output root directory (default: runs)")
    common.add_argument("--run-id", help="output subdirectory name (default: <command>-<config hash>)")
    common.add_argument("--workers", type=int, help="parallel runs for 'experiment'")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")

    parser = argparse.ArgumentParser(prog="blvkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="write a synthetic long-tailed dataset")
    p = sub.add_parser("train", parents=[common], help="train a classifier head")
    p.add_argument("--data", help="directory holding train.jsonl (and optionally dev.jsonl)")
    for name in ("evaluate", "project"):
        p = sub.add_parser(name, parents=[common], help=f"{name} a checkpoint on a dataset")
        p.add_argument("--checkpoint")
        p.add_argument("--dataset")
    sub.add_parser("experiment", parents=[common], help="multi-seed loss comparison")
    return parser


def effective_config(args):
    overrides = list(args.set)
    flag_keys = {
        "seed": args.seed,
        "out": args.out,
        "run_id": args.run_id,
        "workers": args.workers,
        "input.data": getattr(args, "data", None),
        "input.checkpoint": getattr(args, "checkpoint", None),
        "input.dataset": getattr(args, "dataset", None),
    }
    overrides += [(k, v) for k, v in flag_keys.items() if v is not None]
    return configlib.load(args.config, overrides)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = effective_config(args)
        COMMANDS[args.command](cfg)
    except BlvError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
