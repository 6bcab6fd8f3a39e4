"""Time the numba and numpy kernel backends side by side.

    python3 benchmarks/bench_kernels.py [--n-points 1000] [--repeat 5]

Each kernel is run once untimed (numba compiles on first call), then the
best of ``--repeat`` runs is reported.
"""

import argparse
import time

import numpy as np

from blvkit import kernels


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(n_points, rng):
    z = rng.normal(0, 3, size=(4096, 10))
    y = rng.integers(0, 10, size=4096)
    x = rng.normal(size=(n_points, 5))
    sq = (x * x).sum(1)
    d = np.maximum(sq[:, None] + sq[None] - 2 * x @ x.T, 0.0)
    np.fill_diagonal(d, 0.0)
    emb = rng.normal(size=(n_points, 2))
    p = rng.uniform(size=(n_points, n_points))
    p = p + p.T
    np.fill_diagonal(p, 0.0)
    p /= p.sum()
    labels = [(rng.integers(0, 5, size=200), rng.integers(0, 5, size=200)) for _ in range(500)]

    def metrics(k):
        for t, q in labels:
            k.metric_core(k.confusion_counts(t, q, 5))

    return [
        ("ce_rows 4096x10", lambda k: k.ce_rows(z, y)),
        ("focal_rows 4096x10", lambda k: k.focal_rows(z, y, 2.0)),
        (f"cond_affinities N={n_points}", lambda k: k.cond_affinities(d, np.log(30.0), 1e-10, 200)),
        (f"tsne_gradient N={n_points}", lambda k: k.tsne_gradient(emb, p, False)),
        (f"tsne_gradient+KL N={n_points}", lambda k: k.tsne_gradient(emb, p, True)),
        ("confusion+metric_core x500", metrics),
    ]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-points", type=int, default=1000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = {name: kernels.load_backend(name) for name in kernels.available_backends()}
    rng = np.random.default_rng(args.seed)
    rows = []
    for label, fn in cases(args.n_points, rng):
        timings = {name: best_of(lambda k=k: fn(k), args.repeat) for name, k in backends.items()}
        rows.append((label, timings))

    names = list(backends)
    print(f"{'kernel':32s}" + "".join(f"{n + ' (ms)':>14s}" for n in names) + ("   speedup" if len(names) > 1 else ""))
    for label, timings in rows:
        line = f"{label:32s}" + "".join(f"{1e3 * timings[n]:14.3f}" for n in names)
        if "numba" in timings:
            line += f"   {timings['numpy'] / timings['numba']:7.2f}x"
        print(line)


if __name__ == "__main__":
    main()
