"""Loop kernels compiled with numba. Same contracts as numpy_impl."""

import math

import numba
import numpy as np

BACKEND = "numba"

_jit = numba.njit(cache=True, nogil=True)


@_jit
def log_softmax_rows(z):
    b, c = z.shape
    out = np.empty((b, c))
    for i in range(b):
        m = z[i, 0]
        for k in range(1, c):
            if z[i, k] > m:
                m = z[i, k]
        s = 0.0
        for k in range(c):
            s += math.exp(z[i, k] - m)
        lse = math.log(s)
        for k in range(c):
            out[i, k] = (z[i, k] - m) - lse
    return out


@_jit
def softmax_rows(z):
    b, c = z.shape
    out = np.empty((b, c))
    for i in range(b):
        m = z[i, 0]
        for k in range(1, c):
            if z[i, k] > m:
                m = z[i, k]
        s = 0.0
        for k in range(c):
            e = math.exp(z[i, k] - m)
            out[i, k] = e
            s += e
        for k in range(c):
            out[i, k] /= s
    return out


@_jit
def ce_rows(z, labels):
    logp = log_softmax_rows(z)
    b, c = z.shape
    nll = np.empty(b)
    grad = np.empty((b, c))
    for i in range(b):
        y = labels[i]
        nll[i] = -logp[i, y]
        for k in range(c):
            grad[i, k] = math.exp(logp[i, k])
        grad[i, y] -= 1.0
    return nll, grad


@_jit
def focal_rows(z, labels, gamma):
    logp = log_softmax_rows(z)
    b, c = z.shape
    loss = np.empty(b)
    grad = np.empty((b, c))
    for i in range(b):
        y = labels[i]
        logpt = logp[i, y]
        pt = math.exp(logpt)
        rest = -math.expm1(logpt)
        weight = rest**gamma
        loss[i] = -weight * logpt
        dterm = 0.0
        if gamma != 0.0 and rest > 0.0:
            dterm = gamma * rest ** (gamma - 1.0) * pt * logpt
        coef = dterm - weight
        for k in range(c):
            pk = math.exp(logp[i, k])
            grad[i, k] = coef * ((1.0 if k == y else 0.0) - pk)
    return loss, grad


@_jit
def cond_affinities(sqdist, log_perplexity, tol, max_iter):
    n = sqdist.shape[0]
    p = np.zeros((n, n))
    betas = np.ones(n)
    ents = np.zeros(n)
    row = np.empty(n)
    for i in range(n):
        dmin = np.inf
        for j in range(n):
            if j != i and sqdist[i, j] < dmin:
                dmin = sqdist[i, j]
        beta = 1.0
        lo = -np.inf
        hi = np.inf
        h = 0.0
        for it in range(max_iter + 1):
            s = 0.0
            sd = 0.0
            for j in range(n):
                if j == i:
                    row[j] = 0.0
                    continue
                dj = sqdist[i, j] - dmin
                w = math.exp(-dj * beta)
                row[j] = w
                s += w
                sd += dj * w
            h = math.log(s) + beta * sd / s
            diff = h - log_perplexity
            if abs(diff) <= tol or it == max_iter:
                break
            if diff > 0:
                lo = beta
                beta = beta * 2.0 if hi == np.inf else (beta + hi) / 2.0
            else:
                hi = beta
                beta = beta / 2.0 if lo == -np.inf else (beta + lo) / 2.0
        for j in range(n):
            p[i, j] = row[j] / s
        betas[i] = beta
        ents[i] = h
    return p, betas, ents


@_jit
def tsne_gradient(y, p, with_kl):
    n, dims = y.shape
    num = np.zeros((n, n))
    total = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            d = 0.0
            for k in range(dims):
                t = y[i, k] - y[j, k]
                d += t * t
            v = 1.0 / (1.0 + d)
            num[i, j] = v
            total += 2.0 * v
    grad = np.zeros((n, dims))
    kl = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            v = num[i, j]
            q = v / total
            if q < 1e-12:
                q = 1e-12
            pij = p[i, j]
            pji = p[j, i]
            if with_kl:
                if pij > 0.0:
                    kl += pij * math.log(pij / q)
                if pji > 0.0:
                    kl += pji * math.log(pji / q)
            fi = 4.0 * (pij - q) * v
            fj = 4.0 * (pji - q) * v
            for k in range(dims):
                diff = y[i, k] - y[j, k]
                grad[i, k] += fi * diff
                grad[j, k] -= fj * diff
    return grad, kl


@_jit
def confusion_counts(true, pred, n_classes):
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    for i in range(true.shape[0]):
        cm[true[i], pred[i]] += 1
    return cm


@_jit
def metric_core(cm):
    c = cm.shape[0]
    per = np.full((c, 7), np.nan)
    total = 0.0
    n_present = 0
    hits = 0.0
    adj_total = 0.0
    sse_total = 0.0
    recall_sum = 0.0
    adj_sum = 0.0
    rmse_sum = 0.0
    f1_sum = 0.0
    cols = np.zeros(c)
    for i in range(c):
        for j in range(c):
            cols[j] += cm[i, j]
    n_pred_classes = 0
    for j in range(c):
        if cols[j] > 0:
            n_pred_classes += 1
    for i in range(c):
        row = 0.0
        adj = 0.0
        sse = 0.0
        for j in range(c):
            v = float(cm[i, j])
            row += v
            g = j - i
            if -1 <= g <= 1:
                adj += v
            sse += v * g * g
        d = float(cm[i, i])
        total += row
        hits += d
        adj_total += adj
        sse_total += sse
        precision = d / cols[i] if cols[i] > 0 else 0.0
        recall = d / row if row > 0 else 0.0
        f1 = 2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        per[i, 0] = row
        per[i, 1] = cols[i]
        per[i, 2] = precision
        per[i, 3] = recall
        per[i, 4] = f1
        f1_sum += f1
        if row > 0:
            n_present += 1
            r = math.sqrt(sse / row)
            a = adj / row
            per[i, 5] = r
            per[i, 6] = a
            recall_sum += recall
            rmse_sum += r
            adj_sum += a
    pcc = np.nan
    if n_present > 1 and n_pred_classes > 1:
        mt = 0.0
        mp = 0.0
        for i in range(c):
            mt += per[i, 0] * i
            mp += cols[i] * i
        mt /= total
        mp /= total
        cov = 0.0
        vt = 0.0
        vp = 0.0
        for i in range(c):
            vt += per[i, 0] * (i - mt) * (i - mt)
            vp += cols[i] * (i - mp) * (i - mp)
            for j in range(c):
                cov += cm[i, j] * (i - mt) * (j - mp)
        pcc = cov / math.sqrt(vt * vp)
    out = np.empty(9)
    out[0] = hits / total
    out[1] = recall_sum / n_present
    out[2] = adj_total / total
    out[3] = adj_sum / n_present
    out[4] = math.sqrt(sse_total / total)
    out[5] = rmse_sum / n_present
    out[6] = pcc
    out[7] = f1_sum / c
    out[8] = n_present
    return out, per
