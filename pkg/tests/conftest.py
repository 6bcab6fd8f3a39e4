import numpy as np
import pytest

from blvkit import kernels

ACCEPTANCE_LINES = []


def central_diff(f, x, step=1e-5):
    """Central finite-difference gradient of scalar f at array x."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = f(x)
        flat[i] = orig - step
        down = f(x)
        flat[i] = orig
        g[i] = (up - down) / (2 * step)
    return grad


def two_means_agreement(y, labels, restarts=10, iters=100):
    """Best-inertia 2-means on ``y``; fraction of points matching ``labels`` up to swap."""
    g = np.random.default_rng(0)
    best = None
    for _ in range(restarts):
        centres = y[g.choice(len(y), 2, replace=False)].copy()
        for _ in range(iters):
            assign = np.argmin(((y[:, None] - centres[None]) ** 2).sum(-1), axis=1)
            if np.all(assign == assign[0]):
                break
            centres = np.array([y[assign == k].mean(0) for k in range(2)])
        inertia = ((y - centres[assign]) ** 2).sum()
        if best is None or inertia < best[0]:
            best = (inertia, assign)
    agree = float(np.mean(best[1] == labels))
    return max(agree, 1 - agree)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_report_header(config):
    return f"blvkit kernel backend: {kernels.BACKEND}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
