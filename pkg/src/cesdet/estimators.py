"""Mismatched-ML building blocks under the assumed Gaussian model.

The secondary scatter S0 is the plain sum of outer products (no 1/M0
factor); normalization factors appear explicitly wherever a statistic needs
them, matching the detector formulas downstream term for term.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .linalg import hermitian_part, solve


def secondary_scatter(secondary: np.ndarray) -> np.ndarray:
    """S0 = sum_m x_m x_m^H over the secondary set (unnormalized)."""
    x = np.atleast_2d(np.asarray(secondary, dtype=np.complex128))
    m0, n = x.shape
    if m0 < n:
        warnings.warn(
            f"M0={m0} < N={n}: S0 is singular; PD-requiring operations will fail",
            stacklevel=2,
        )
    return np.einsum("ma,mb->ab", x, x.conj())


def t0_matrix(primary: np.ndarray, s0: np.ndarray, m: int) -> np.ndarray:
    """T0 = (sum_m x_m x_m^H + S0) / M over the primary set."""
    x = np.asarray(primary, dtype=np.complex128).reshape(-1, s0.shape[0])
    return (np.einsum("ma,mb->ab", x, x.conj()) + s0) / m


def t1_matrix(
    primary: np.ndarray, s0: np.ndarray, m: int, eta: np.ndarray, v: np.ndarray
) -> np.ndarray:
    """T1(eta) = (sum_m (x_m - alpha v)(x_m - alpha v)^H + S0) / M."""
    alpha = complex(eta[0], eta[1])
    x = np.asarray(primary, dtype=np.complex128).reshape(-1, s0.shape[0])
    r = x - alpha * np.asarray(v, dtype=np.complex128)
    return (np.einsum("ma,mb->ab", r, r.conj()) + s0) / m


def mml_alpha(primary: np.ndarray, s0: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Closed-form amplitude estimate [Re, Im] of
    alpha_hat = (1/M1) sum_m v^H S0^{-1} x_m / (v^H S0^{-1} v).
    """
    v = np.asarray(v, dtype=np.complex128).ravel()
    if np.linalg.norm(v) == 0.0:
        raise ValueError("steering vector must be nonzero")
    x = np.asarray(primary, dtype=np.complex128).reshape(-1, v.size)
    u = solve(s0, v)
    qvv = np.vdot(v, u).real
    p = x @ u.conj()  # p_m = v^H S0^{-1} x_m
    alpha = p.mean() / qvv
    return np.array([alpha.real, alpha.imag])


def p_hat(v: np.ndarray, t1: np.ndarray) -> np.ndarray:
    """Consistent estimate P_hat = 2 (v^H T1^{-1} v) I2 of the Wald scaling."""
    qvv = np.vdot(v, solve(t1, v)).real
    return 2.0 * qvv * np.eye(2)


@dataclass(frozen=True)
class MmlFit:
    """Joint MML estimates for one dataset: amplitude and both scatters."""

    eta_hat: np.ndarray
    t0: np.ndarray
    t1: np.ndarray
    s0: np.ndarray


def mml_fit(data) -> MmlFit:
    """Fit the assumed Gaussian model to a Dataset by the closed forms."""
    s0 = secondary_scatter(data.secondary)
    eta_hat = mml_alpha(data.primary, s0, data.steering)
    t0 = hermitian_part(t0_matrix(data.primary, s0, data.m))
    t1 = hermitian_part(t1_matrix(data.primary, s0, data.m, eta_hat, data.steering))
    return MmlFit(eta_hat=eta_hat, t0=t0, t1=t1, s0=s0)
