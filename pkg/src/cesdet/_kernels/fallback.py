"""Pure-numpy batched detector kernels (fallback backend).

Computes all requested statistics for a block of trials at once.  The
formulas mirror ``cesdet.detectors`` exactly; parity between the two routes
is enforced by the test suite.
"""

from __future__ import annotations

import numpy as np

from ..linalg import NotPositiveDefiniteError

KELLY_ARG_MIN = 1e-300


def _chol_logdet(a: np.ndarray) -> np.ndarray:
    """Batched log-determinant via Cholesky; raises if any matrix non-PD."""
    try:
        ell = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as err:
        raise NotPositiveDefiniteError("matrix is not positive definite") from err
    diag = np.einsum("...ii->...i", ell).real
    return 2.0 * np.log(diag).sum(axis=-1)


def _solve_pd(a: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError as err:
        raise NotPositiveDefiniteError("matrix is not positive definite") from err


def detector_stats(
    x1: np.ndarray,
    x0: np.ndarray,
    v: np.ndarray,
    want_mglrt: bool = False,
    want_kelly: bool = False,
    want_wald_t1: bool = False,
    want_wald_s0: bool = False,
    want_amf: bool = False,
) -> dict:
    """Per-trial detector statistics for stacked datasets.

    x1: (T, M1, N) primary, x0: (T, M0, N) secondary, v: (N,) steering.
    Returns a dict with one float64 array of length T per requested
    statistic plus 'kelly_clamped', the count of clamped Kelly logs.
    """
    x1 = np.ascontiguousarray(x1, dtype=np.complex128)
    x0 = np.ascontiguousarray(x0, dtype=np.complex128)
    v = np.ascontiguousarray(v, dtype=np.complex128).ravel()
    trials, m1, n = x1.shape
    m0 = x0.shape[1]
    m = m1 + m0
    if (want_kelly or want_amf) and m1 != 1:
        raise ValueError("kelly/amf require exactly one primary vector")

    s0 = np.einsum("tma,tmb->tab", x0, x0.conj())
    # One factorization-equivalent solve for v and all primary columns.
    rhs = np.concatenate(
        [np.broadcast_to(v[:, None], (trials, n, 1)), np.swapaxes(x1, 1, 2)], axis=2
    )
    sol = _solve_pd(s0, rhs)
    u = sol[:, :, 0]                      # S0^{-1} v
    w = sol[:, :, 1:]                     # columns S0^{-1} x_m
    qvv = np.einsum("a,ta->t", v.conj(), u).real
    p = np.einsum("ta,tma->tm", u.conj(), x1)   # v^H S0^{-1} x_m
    psum = p.sum(axis=1)
    alpha = psum / (m1 * qvv)

    out: dict = {"kelly_clamped": 0}
    xt = None
    f1 = None

    def _residuals():
        nonlocal xt
        if xt is None:
            xt = x1 - alpha[:, None, None] * v
        return xt

    def _f1():
        nonlocal f1
        if f1 is None:
            r = _residuals()
            f1 = s0 + np.einsum("tma,tmb->tab", r, r.conj())
        return f1

    if want_mglrt:
        if m1 < n:
            # g0[t, a, b] = x_a^H S0^{-1} x_b
            g0 = np.einsum("tai,tib->tab", x1.conj(), w)
            r = _residuals()
            wt = w - alpha[:, None, None] * u[:, :, None]
            g1 = np.einsum("tai,tib->tab", r.conj(), wt)
            eye = np.eye(m1)
            out["mglrt"] = np.maximum(
                2.0 * m * (_chol_logdet(eye + g0) - _chol_logdet(eye + g1)), 0.0
            )
        else:
            f0 = s0 + np.einsum("tma,tmb->tab", x1, x1.conj())
            out["mglrt"] = np.maximum(
                2.0 * m * (_chol_logdet(f0) - _chol_logdet(_f1())), 0.0
            )

    if want_kelly:
        x = x1[:, 0, :]
        xsx = np.einsum("ta,ta->t", x.conj(), w[:, :, 0]).real
        arg = 1.0 - np.abs(p[:, 0]) ** 2 / (qvv * (1.0 + xsx))
        clamped = arg < KELLY_ARG_MIN
        out["kelly_clamped"] = int(clamped.sum())
        out["kelly"] = np.maximum(
            -2.0 * (m0 + 1) * np.log(np.maximum(arg, KELLY_ARG_MIN)), 0.0
        )

    if want_wald_t1:
        y = _solve_pd(_f1(), np.broadcast_to(v[:, None], (trials, n, 1)))[:, :, 0]
        qt1 = m * np.einsum("a,ta->t", v.conj(), y).real   # v^H T1^{-1} v
        out["wald_t1"] = np.maximum(
            2.0 * qt1 * np.abs(psum) ** 2 / (m1 * qvv**2), 0.0
        )

    if want_wald_s0:
        out["wald_s0"] = np.maximum(2.0 * m0 * np.abs(psum) ** 2 / (m1 * qvv), 0.0)

    if want_amf:
        out["amf"] = np.maximum(2.0 * m0 * np.abs(p[:, 0]) ** 2 / qvv, 0.0)

    return out
