"""Pure-numpy kernels. Reference path and fallback when numba is unavailable."""

import numpy as np

BACKEND = "numpy"


def log_softmax_rows(z):
    shift = z.max(axis=1, keepdims=True)
    shifted = z - shift
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return shifted - lse


def softmax_rows(z):
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def ce_rows(z, labels):
    """Per-row negative log-likelihood and unscaled gradient p - onehot."""
    logp = log_softmax_rows(z)
    rows = np.arange(z.shape[0])
    nll = -logp[rows, labels]
    grad = np.exp(logp)
    grad[rows, labels] -= 1.0
    return nll, grad


def focal_rows(z, labels, gamma):
    logp = log_softmax_rows(z)
    p = np.exp(logp)
    rows = np.arange(z.shape[0])
    logpt = logp[rows, labels]
    pt = p[rows, labels]
    # 1 - pt without cancellation near pt == 1
    rest = -np.expm1(logpt)
    weight = rest**gamma
    loss = -weight * logpt
    if gamma == 0.0:
        dterm = np.zeros_like(pt)
    else:
        safe = rest > 0.0
        dterm = np.zeros_like(pt)
        dterm[safe] = gamma * rest[safe] ** (gamma - 1.0) * pt[safe] * logpt[safe]
    coef = dterm - weight
    onehot = np.zeros_like(p)
    onehot[rows, labels] = 1.0
    grad = coef[:, None] * (onehot - p)
    return loss, grad


def _row_entropy(sqdist, beta):
    # rows shifted so the nearest neighbour sits at 0; diagonal is +inf
    w = np.exp(-sqdist * beta[:, None])
    s = w.sum(axis=1)
    p = w / s[:, None]
    finite = np.where(np.isinf(sqdist), 0.0, sqdist)
    h = np.log(s) + beta * (finite * p).sum(axis=1)
    return p, h


def cond_affinities(sqdist, log_perplexity, tol, max_iter):
    """Per-row Gaussian affinities calibrated by bisection on the precision.

    All rows are bisected together. Returns (P, beta, entropy) with entropy
    in nats; diagonal of P is zero.
    """
    n = sqdist.shape[0]
    d = sqdist.astype(np.float64).copy()
    np.fill_diagonal(d, np.inf)
    d = d - d.min(axis=1, keepdims=True)
    beta = np.ones(n)
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    p, h = _row_entropy(d, beta)
    for _ in range(max_iter):
        diff = h - log_perplexity
        active = np.abs(diff) > tol
        if not active.any():
            break
        up = active & (diff > 0)
        down = active & (diff <= 0)
        lo[up] = beta[up]
        beta[up] = np.where(np.isinf(hi[up]), beta[up] * 2.0, (beta[up] + hi[up]) / 2.0)
        hi[down] = beta[down]
        beta[down] = np.where(np.isinf(lo[down]), beta[down] / 2.0, (beta[down] + lo[down]) / 2.0)
        p, h = _row_entropy(d, beta)
    np.fill_diagonal(p, 0.0)
    return p, beta, h


def tsne_gradient(y, p, with_kl):
    """Exact t-SNE gradient, plus KL(P || Q) when ``with_kl`` (else 0.0)."""
    sum_y = (y * y).sum(axis=1)
    num = 1.0 / (1.0 + sum_y[:, None] + sum_y[None, :] - 2.0 * (y @ y.T))
    np.fill_diagonal(num, 0.0)
    q = np.maximum(num / num.sum(), 1e-12)
    pq = (p - q) * num
    grad = 4.0 * (pq.sum(axis=1)[:, None] * y - pq @ y)
    if not with_kl:
        return grad, 0.0
    mask = p > 0
    kl = float((p[mask] * np.log(p[mask] / q[mask])).sum())
    return grad, kl


def confusion_counts(true, pred, n_classes):
    flat = np.bincount(true * n_classes + pred, minlength=n_classes * n_classes)
    return flat.reshape(n_classes, n_classes).astype(np.int64)


def metric_core(cm):
    """Scalar metrics and per-class rows derived from a confusion matrix.

    Returns (scalars, per_class). scalars = [acc, acc_macro, adj, adj_macro,
    rmse, rmse_macro, pcc, f1_macro, present_classes]; per_class columns =
    [support, predicted, precision, recall, f1, rmse, adjacent]. Macro values
    average over classes present in the truth; pcc is nan when undefined.
    """
    c = cm.shape[0]
    cmf = cm.astype(np.float64)
    idx = np.arange(c, dtype=np.float64)
    gap = idx[None, :] - idx[:, None]
    rows = cmf.sum(axis=1)
    cols = cmf.sum(axis=0)
    total = rows.sum()
    diag = np.diag(cmf)
    present = rows > 0
    n_present = present.sum()
    adj_hits = (cmf * (np.abs(gap) <= 1)).sum(axis=1)
    sse = (cmf * gap * gap).sum(axis=1)

    per = np.full((c, 7), np.nan)
    per[:, 0] = rows
    per[:, 1] = cols
    precision = np.divide(diag, cols, out=np.zeros(c), where=cols > 0)
    recall = np.divide(diag, rows, out=np.zeros(c), where=present)
    denom = precision + recall
    f1 = np.divide(2.0 * precision * recall, denom, out=np.zeros(c), where=denom > 0)
    per[:, 2] = precision
    per[:, 3] = recall
    per[:, 4] = f1
    per[present, 5] = np.sqrt(sse[present] / rows[present])
    per[present, 6] = adj_hits[present] / rows[present]

    pcc = np.nan
    if present.sum() > 1 and (cols > 0).sum() > 1:
        mt = (rows * idx).sum() / total
        mp = (cols * idx).sum() / total
        dt = idx - mt
        dp = idx - mp
        cov = (cmf * dt[:, None] * dp[None, :]).sum()
        vt = (rows * dt * dt).sum()
        vp = (cols * dp * dp).sum()
        pcc = cov / np.sqrt(vt * vp)
    scalars = np.array(
        [
            diag.sum() / total,
            recall[present].sum() / n_present,
            adj_hits.sum() / total,
            per[present, 6].sum() / n_present,
            np.sqrt(sse.sum() / total),
            per[present, 5].sum() / n_present,
            pcc,
            f1.sum() / c,
            n_present,
        ]
    )
    return scalars, per
