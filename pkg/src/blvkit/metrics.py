"""Ordinal classification metrics: PCC, RMSE, accuracy, adjacent accuracy, F1.

Labels are integer levels 0..C-1. "Macro" means an unweighted mean over the
classes that occur in the ground truth; macro RMSE is the mean of per-class
RMSE values and F1 is macro F1 over all C classes (a class with no true
positives scores 0). Internal values are fractions; :func:`render_table`
prints accuracy-type columns as percentages.
"""

import io
import math
from dataclasses import dataclass

import numpy as np

from . import kernels


def _labels(values, name):
    arr = np.ascontiguousarray(values, dtype=np.int64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-D sequence of class indices")
    return arr


def _pair(true, pred):
    t, p = _labels(true, "true"), _labels(pred, "pred")
    if t.shape != p.shape:
        raise ValueError(f"length mismatch: {t.size} true labels vs {p.size} predictions")
    if t.size == 0:
        raise ValueError("metrics need at least one sample")
    return t, p


def confusion(true, pred, n_classes):
    """Counts grid with rows = true class, columns = predicted class."""
    t, p = _labels(true, "true"), _labels(pred, "pred")
    if t.shape != p.shape:
        raise ValueError(f"length mismatch: {t.size} true labels vs {p.size} predictions")
    if t.size and (min(t.min(), p.min()) < 0 or max(t.max(), p.max()) >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes})")
    return kernels.confusion_counts(t, p, n_classes)


def accuracy(cm, macro=False):
    cm = np.asarray(cm)
    total = cm.sum()
    if cm.size == 0 or total == 0:
        raise ValueError("empty confusion matrix")
    if not macro:
        return float(np.trace(cm) / total)
    rows = cm.sum(axis=1)
    if np.any(rows == 0):
        k = int(np.flatnonzero(rows == 0)[0])
        raise ValueError(f"macro accuracy undefined: class {k} has no true samples")
    return float(np.mean(np.diag(cm) / rows))


def adjacent_accuracy(true, pred, macro=False):
    t, p = _pair(true, pred)
    hit = np.abs(p - t) <= 1
    if not macro:
        return float(hit.mean())
    return float(np.mean([hit[t == k].mean() for k in np.unique(t)]))


def rmse(true, pred, macro=False):
    t, p = _pair(true, pred)
    sq = (p - t).astype(np.float64) ** 2
    if not macro:
        return float(math.sqrt(sq.mean()))
    return float(np.mean([math.sqrt(sq[t == k].mean()) for k in np.unique(t)]))


def pcc(true, pred):
    t, p = _pair(true, pred)
    t = t.astype(np.float64)
    p = p.astype(np.float64)
    dt = t - t.mean()
    dp = p - p.mean()
    vt, vp = (dt * dt).sum(), (dp * dp).sum()
    if vt == 0 or vp == 0 or np.all(t == t[0]) or np.all(p == p[0]):
        raise ValueError("PCC undefined for constant series")
    return float((dt * dp).sum() / math.sqrt(vt * vp))


def f1_scores(cm):
    cm = np.asarray(cm, dtype=np.float64)
    diag = np.diag(cm)
    cols, rows = cm.sum(axis=0), cm.sum(axis=1)
    precision = np.divide(diag, cols, out=np.zeros_like(diag), where=cols > 0)
    recall = np.divide(diag, rows, out=np.zeros_like(diag), where=rows > 0)
    denom = precision + recall
    return np.divide(2 * precision * recall, denom, out=np.zeros_like(diag), where=denom > 0)


def f1_macro(cm):
    cm = np.asarray(cm)
    if cm.size == 0:
        raise ValueError("empty confusion matrix")
    return float(f1_scores(cm).mean())


PER_CLASS_FIELDS = ("support", "predicted", "precision", "recall", "f1", "rmse", "adjacent_accuracy")


@dataclass
class MetricsReport:
    pcc: object
    rmse_standard: float
    rmse_macro: float
    accuracy_standard: float
    accuracy_macro: float
    adjacent_accuracy_standard: float
    adjacent_accuracy_macro: float
    f1_macro: float
    confusion: np.ndarray
    per_class: np.ndarray
    class_names: tuple = ()
    pcc_note: object = None

    @property
    def n_samples(self):
        return int(self.confusion.sum())

    def to_dict(self):
        def num(v):
            return None if v is None or (isinstance(v, float) and math.isnan(v)) else float(v)

        per_class = []
        for k, row in enumerate(self.per_class):
            entry = {"class": k, "name": self.class_names[k] if self.class_names else str(k)}
            for name, value in zip(PER_CLASS_FIELDS, row):
                entry[name] = int(value) if name in ("support", "predicted") else num(float(value))
            per_class.append(entry)
        return {
            "n_samples": self.n_samples,
            "pcc": num(self.pcc),
            "pcc_note": self.pcc_note,
            "rmse": {"standard": self.rmse_standard, "macro": self.rmse_macro},
            "accuracy": {"standard": self.accuracy_standard, "macro": self.accuracy_macro},
            "adjacent_accuracy": {
                "standard": self.adjacent_accuracy_standard,
                "macro": self.adjacent_accuracy_macro,
            },
            "f1_macro": self.f1_macro,
            "macro_over_classes": [k for k, row in enumerate(self.per_class) if row[0] > 0],
            "confusion": self.confusion.tolist(),
            "per_class": per_class,
        }

    def scalars(self):
        """Flat metric name -> value mapping, pcc may be None."""
        return {
            "pcc": self.pcc,
            "rmse_standard": self.rmse_standard,
            "rmse_macro": self.rmse_macro,
            "accuracy_standard": self.accuracy_standard,
            "accuracy_macro": self.accuracy_macro,
            "adjacent_accuracy_standard": self.adjacent_accuracy_standard,
            "adjacent_accuracy_macro": self.adjacent_accuracy_macro,
            "f1_macro": self.f1_macro,
        }


METRIC_NAMES = (
    "pcc",
    "rmse_standard",
    "rmse_macro",
    "accuracy_standard",
    "accuracy_macro",
    "adjacent_accuracy_standard",
    "adjacent_accuracy_macro",
    "f1_macro",
)


def full_report(true, pred, n_classes, class_names=()):
    cm = confusion(true, pred, n_classes)
    if cm.sum() == 0:
        raise ValueError("metrics need at least one sample")
    s, per = kernels.metric_core(cm)
    pcc_value = None if math.isnan(s[6]) else float(s[6])
    return MetricsReport(
        pcc=pcc_value,
        rmse_standard=float(s[4]),
        rmse_macro=float(s[5]),
        accuracy_standard=float(s[0]),
        accuracy_macro=float(s[1]),
        adjacent_accuracy_standard=float(s[2]),
        adjacent_accuracy_macro=float(s[3]),
        f1_macro=float(s[7]),
        confusion=cm,
        per_class=per,
        class_names=tuple(class_names),
        pcc_note="PCC undefined for constant series" if pcc_value is None else None,
    )


TABLE_COLUMNS = (
    ("Method", None),
    ("sigma", None),
    ("PCC", "pcc"),
    ("RMSE std", "rmse_standard"),
    ("RMSE macro", "rmse_macro"),
    ("Acc% std", "accuracy_standard"),
    ("Acc% macro", "accuracy_macro"),
    ("AdjAcc% std", "adjacent_accuracy_standard"),
    ("AdjAcc% macro", "adjacent_accuracy_macro"),
    ("F1", "f1_macro"),
)
_PERCENT = {"accuracy_standard", "accuracy_macro", "adjacent_accuracy_standard", "adjacent_accuracy_macro"}


def _fmt(key, value):
    if value is None:
        return "n/a"
    if key in _PERCENT:
        return f"{100.0 * value:.2f}"
    return f"{value:.4f}"


def render_table(rows):
    """Plain-text table in the order Method | sigma | PCC | RMSE | Acc | AdjAcc | F1.

    ``rows`` is a sequence of (method, sigma or None, mapping) where the mapping
    holds the scalar metric names (a MetricsReport's ``scalars()`` or means).
    """
    header = [name for name, _ in TABLE_COLUMNS]
    body = []
    for method, sigma, values in rows:
        line = [str(method), "--" if sigma is None else f"{sigma:g}"]
        line += [_fmt(key, values.get(key)) for _, key in TABLE_COLUMNS[2:]]
        body.append(line)
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    out = io.StringIO()
    for r in [header] + body:
        out.write("  ".join(cell.ljust(w) if i == 0 else cell.rjust(w) for i, (cell, w) in enumerate(zip(r, widths))).rstrip())
        out.write("\n")
        if r is header:
            out.write("  ".join("-" * w for w in widths) + "\n")
    return out.getvalue()


def confusion_csv(cm, class_names=()):
    """CSV text: header row then one row per true class (C + 1 lines)."""
    cm = np.asarray(cm)
    names = list(class_names) or [str(k) for k in range(cm.shape[0])]
    lines = ["true\\pred," + ",".join(names)]
    for name, row in zip(names, cm):
        lines.append(name + "," + ",".join(str(int(v)) for v in row))
    return "\n".join(lines) + "\n"
