"""Shared test utilities: complex random draws and instance generators."""

import numpy as np

from cesdet._rng import substream
from cesdet.linalg import Dataset


def cgauss(rng, shape):
    """Standard circular complex Gaussian array."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_hermitian_pd(rng, n, ridge=1.0):
    g = cgauss(rng, (n, n))
    return g @ g.conj().T + ridge * np.eye(n)


def random_hermitian(rng, n):
    g = cgauss(rng, (n, n))
    return (g + g.conj().T) / 2


def random_unitary(rng, n):
    q, r = np.linalg.qr(cgauss(rng, (n, n)))
    return q * (r.diagonal() / np.abs(r.diagonal()))


def random_dataset(rng, n, m1, m0, signal=0.0):
    """Random instance; ``signal`` adds alpha*v to the primary vectors so the
    statistics sit well away from zero when an identity check needs scale."""
    v = cgauss(rng, (n,))
    primary = cgauss(rng, (m1, n))
    if signal:
        alpha = signal * np.exp(2j * np.pi * rng.random())
        primary = primary + alpha * v
    secondary = cgauss(rng, (m0, n))
    return Dataset(primary=primary, secondary=secondary, steering=v)


def close_rel(a, b, tol):
    """|a - b| <= tol * max(1, |a|, |b|): relative with an absolute floor."""
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def rng_for(*key):
    return substream(20260809, *key)
