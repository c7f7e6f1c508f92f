"""Complex Hermitian matrix primitives and the real ``vecs`` parameterization.

Matrices are plain ``numpy`` complex128 arrays.  Hermitian inputs are
canonicalized on ingestion (exact symmetrization of the lower/upper
triangles) so that repeated operations cannot accumulate asymmetry.

The ``vecs`` layout for an N x N Hermitian matrix is fixed as

    [diagonal (N reals);
     Re of strictly-lower entries, column by column (N(N-1)/2);
     Im of strictly-lower entries, same order (N(N-1)/2)]

which is a bijection onto Hermitian matrices.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

HERMITIAN_TOL = 1e-10


class NotPositiveDefiniteError(ValueError):
    """An operation required a positive-definite matrix and did not get one."""


def hermitian_part(a: np.ndarray, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Canonical Hermitian form of ``a``.

    Rejects matrices whose asymmetry exceeds ``tol`` relative to the largest
    entry magnitude (with an absolute floor of ``tol``).
    """
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.abs(a).max(initial=0.0)))
    asym = float(np.abs(a - a.conj().T).max(initial=0.0))
    if asym > tol * scale:
        raise ValueError(
            f"matrix is not Hermitian within tolerance ({asym:.3e} > {tol * scale:.3e})"
        )
    return (a + a.conj().T) / 2


def lower_indices(n: int) -> tuple[np.ndarray, np.ndarray]:
    """(rows, cols) of the strictly-lower triangle, column by column."""
    rows, cols = [], []
    for c in range(n):
        for r in range(c + 1, n):
            rows.append(r)
            cols.append(c)
    return np.asarray(rows, dtype=np.intp), np.asarray(cols, dtype=np.intp)


def vecs(h: np.ndarray, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Real coordinates of a Hermitian matrix in the fixed layout above."""
    h = hermitian_part(h, tol)
    r, c = lower_indices(h.shape[0])
    low = h[r, c]
    return np.concatenate([h.diagonal().real, low.real, low.imag])


def unvecs(m: np.ndarray) -> np.ndarray:
    """Hermitian matrix with ``vecs(unvecs(m)) == m`` exactly."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 1:
        raise ValueError("expected a 1-d real vector")
    n = math.isqrt(m.size)
    if n * n != m.size:
        raise ValueError(f"vector length {m.size} is not a perfect square")
    k = n * (n - 1) // 2
    h = np.zeros((n, n), dtype=np.complex128)
    h[np.arange(n), np.arange(n)] = m[:n]
    r, c = lower_indices(n)
    low = m[n : n + k] + 1j * m[n + k :]
    h[r, c] = low
    h[c, r] = low.conj()
    return h


def cholesky(h: np.ndarray, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Lower-triangular L with h = L L^H; raises on non-PD input."""
    h = hermitian_part(h, tol)
    try:
        return np.linalg.cholesky(h)
    except np.linalg.LinAlgError as err:
        raise NotPositiveDefiniteError("matrix is not positive definite") from err


def logdet(h: np.ndarray) -> float:
    """log-determinant of a Hermitian PD matrix via its Cholesky factor."""
    ell = cholesky(h)
    return 2.0 * float(np.log(ell.diagonal().real).sum())


def solve(h: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve h x = b for Hermitian PD h."""
    ell = cholesky(h)
    return scipy.linalg.cho_solve((ell, True), np.asarray(b, dtype=np.complex128))


def quad_form(h: np.ndarray, a: np.ndarray, b: np.ndarray) -> complex:
    """a^H h^{-1} b for Hermitian PD h."""
    return complex(np.vdot(a, solve(h, b)))


@dataclass(frozen=True)
class Dataset:
    """Primary/secondary data blocks plus the known steering vector.

    ``primary`` is (M1, N), ``secondary`` is (M0, N), ``steering`` is (N,).
    M0 < N is permitted but flagged: the secondary scatter is then singular
    and any PD-requiring operation downstream will fail loudly.
    """

    primary: np.ndarray
    secondary: np.ndarray
    steering: np.ndarray

    def __post_init__(self):
        primary = np.atleast_2d(np.asarray(self.primary, dtype=np.complex128))
        secondary = np.atleast_2d(np.asarray(self.secondary, dtype=np.complex128))
        steering = np.asarray(self.steering, dtype=np.complex128).ravel()
        n = steering.size
        if n < 1:
            raise ValueError("steering vector must have dimension >= 1")
        if primary.shape[1] != n or secondary.shape[1] != n:
            raise ValueError("primary/secondary vectors must share the steering dimension")
        if primary.shape[0] < 1:
            raise ValueError("need at least one primary vector")
        if secondary.shape[0] < n:
            warnings.warn(
                f"secondary size M0={secondary.shape[0]} < N={n}: the secondary "
                "scatter is singular and PD-requiring operations will fail",
                stacklevel=2,
            )
        object.__setattr__(self, "primary", primary)
        object.__setattr__(self, "secondary", secondary)
        object.__setattr__(self, "steering", steering)

    @property
    def n(self) -> int:
        return self.steering.size

    @property
    def m1(self) -> int:
        return self.primary.shape[0]

    @property
    def m0(self) -> int:
        return self.secondary.shape[0]

    @property
    def m(self) -> int:
        return self.m1 + self.m0
