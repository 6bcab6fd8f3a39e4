"""Shared numeric primitives: stable softmax family, seeded sampling, PCA.

Everything is float64. Random streams come from :class:`Rng`, a thin wrapper
over numpy's counter-based Philox generator; normal deviates are produced by
the Box-Muller transform on its uniform stream so the draw sequence is fixed
by this module rather than by numpy's internal normal sampler.
"""

import hashlib
import math

import numpy as np

RNG_VERSION = 1
RNG_NAME = "philox4x64-boxmuller"


def _as_finite_vector(z, name="z"):
    arr = np.asarray(z, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty vector")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def log_sum_exp(z):
    z = _as_finite_vector(z)
    m = z.max()
    return float(m + math.log(np.exp(z - m).sum()))


def softmax(z):
    z = _as_finite_vector(z)
    e = np.exp(z - z.max())
    return e / e.sum()


def log_softmax(z):
    z = _as_finite_vector(z)
    return z - log_sum_exp(z)


def derive_seed(seed, purpose):
    """64-bit child seed for a named purpose (data, dropout, noise, init...)."""
    digest = hashlib.blake2b(f"{int(seed)}/{purpose}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class Rng:
    """Seeded random stream. Single owner; derive children for parallel use."""

    def __init__(self, seed):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.seed = seed
        self._gen = np.random.Generator(np.random.Philox(key=seed))

    def child(self, purpose):
        return Rng(derive_seed(self.seed, purpose))

    def uniform(self, size):
        """Doubles in [0, 1)."""
        return self._gen.random(size)

    def normal(self, count):
        """Standard normal draws via Box-Muller, consuming 2*ceil(count/2) uniforms."""
        pairs = (count + 1) // 2
        u = self._gen.random((pairs, 2))
        r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        theta = 2.0 * np.pi * u[:, 1]
        out = np.empty(2 * pairs)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:count]

    def permutation(self, n):
        return self._gen.permutation(n)

    def integers(self, low, high, size=None):
        return self._gen.integers(low, high, size=size)

    def get_state(self):
        state = self._gen.bit_generator.state
        return {
            "version": RNG_VERSION,
            "name": RNG_NAME,
            "seed": self.seed,
            "counter": [int(v) for v in state["state"]["counter"]],
            "key": [int(v) for v in state["state"]["key"]],
            "buffer": [int(v) for v in state["buffer"]],
            "buffer_pos": int(state["buffer_pos"]),
            "has_uint32": int(state["has_uint32"]),
            "uinteger": int(state["uinteger"]),
        }

    @classmethod
    def from_state(cls, blob):
        if blob.get("version") != RNG_VERSION:
            raise ValueError(f"unsupported rng state version {blob.get('version')!r}")
        rng = cls(blob["seed"])
        rng._gen.bit_generator.state = {
            "bit_generator": "Philox",
            "state": {
                "counter": np.array(blob["counter"], dtype=np.uint64),
                "key": np.array(blob["key"], dtype=np.uint64),
            },
            "buffer": np.array(blob["buffer"], dtype=np.uint64),
            "buffer_pos": blob["buffer_pos"],
            "has_uint32": blob["has_uint32"],
            "uinteger": blob["uinteger"],
        }
        return rng


def sample_normal(rng, sigma, count):
    """``count`` i.i.d. draws from N(0, sigma^2). sigma == 0 consumes nothing."""
    if not sigma >= 0:
        raise ValueError(f"sigma must be >= 0, got {sigma!r}")
    if count < 0:
        raise ValueError("count must be >= 0")
    if sigma == 0:
        return np.zeros(count)
    return sigma * rng.normal(count)


def pca_project(points, dims):
    """Project mean-centred rows onto the top ``dims`` principal axes.

    Each axis is oriented so its largest-magnitude coordinate is positive.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("pca_project needs a matrix with at least 2 rows")
    if not 1 <= dims <= min(x.shape):
        raise ValueError(f"dims must be in [1, {min(x.shape)}], got {dims}")
    centred = x - x.mean(axis=0)
    scatter = centred.T @ centred
    if not np.any(scatter):
        raise ValueError("zero variance: all rows are identical")
    evals, evecs = np.linalg.eigh(scatter)
    order = np.argsort(evals)[::-1][:dims]
    axes = evecs[:, order]
    pivot = np.argmax(np.abs(axes), axis=0)
    signs = np.sign(axes[pivot, np.arange(dims)])
    axes = axes * signs
    return centred @ axes
