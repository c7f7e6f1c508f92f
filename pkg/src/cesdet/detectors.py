"""The four decision statistics: multi-sample GLRT under the assumed
Gaussian model, Kelly's GLRT, the misspecified Wald test, and the AMF.

These are the scalar reference implementations; the batched Monte Carlo
kernels in ``cesdet._kernels`` must agree with them (enforced by tests).
All four statistics are nonnegative and asymptotically chi-square with two
degrees of freedom under the null.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimators import mml_alpha, p_hat, secondary_scatter, t1_matrix
from .linalg import Dataset, cholesky, hermitian_part, solve

# Scatter choices for the Wald statistic.
WALD_SCATTER_T1 = "t1"
WALD_SCATTER_S0 = "s0_over_m0"
WALD_SCATTERS = (WALD_SCATTER_T1, WALD_SCATTER_S0)

# Clamp for the logarithm argument in Kelly's statistic; hits are reported,
# not silently ignored.
KELLY_ARG_MIN = 1e-300


@dataclass(frozen=True)
class DetectorOutput:
    statistic: float
    detector_id: str
    dof: int = 2
    clamped: bool = False


def _logdet_pd(a: np.ndarray) -> float:
    ell = cholesky(hermitian_part(a, tol=1e-8))
    return 2.0 * float(np.log(ell.diagonal().real).sum())


def mglrt(data: Dataset) -> DetectorOutput:
    """Multi-sample GLRT 2M ln(|T0| / |T1(eta_hat)|).

    Uses the M1 x M1 determinant form when M1 < N and the N x N form
    otherwise; the two are equal, the switch is purely a cost choice.
    """
    s0 = secondary_scatter(data.secondary)
    v = data.steering
    eta = mml_alpha(data.primary, s0, v)
    alpha = complex(eta[0], eta[1])
    x = data.primary
    m = data.m
    if data.m1 < data.n:
        w = solve(s0, x.T)          # columns S0^{-1} x_m
        u = solve(s0, v)
        g0 = x.conj() @ w           # X1^H S0^{-1} X1
        xt = x - alpha * v
        wt = w - alpha * u[:, None]
        g1 = xt.conj() @ wt
        eye = np.eye(data.m1)
        stat = 2.0 * m * (_logdet_pd(eye + g0) - _logdet_pd(eye + g1))
    else:
        f0 = s0 + np.einsum("ma,mb->ab", x, x.conj())
        xt = x - alpha * v
        f1 = s0 + np.einsum("ma,mb->ab", xt, xt.conj())
        stat = 2.0 * m * (_logdet_pd(f0) - _logdet_pd(f1))
    return DetectorOutput(statistic=max(stat, 0.0), detector_id="mglrt")


def kelly(x: np.ndarray, s0: np.ndarray, v: np.ndarray, m0: int) -> DetectorOutput:
    """Kelly's GLRT for a single primary vector.

    The log argument is evaluated on the unit-normalized test vector so the
    statistic stays finite for arbitrarily large inputs; 1/||x||^2 under-
    flowing to zero reproduces the exact scale-free limit.
    """
    x = np.asarray(x, dtype=np.complex128).ravel()
    u = solve(s0, v)
    qvv = np.vdot(v, u).real
    scale = float(np.abs(x).max(initial=0.0))
    if scale == 0.0:
        return DetectorOutput(statistic=0.0, detector_id="kelly")
    xt = x / scale
    p = np.vdot(u, xt)              # v^H S0^{-1} x / scale
    qxx = np.vdot(xt, solve(s0, xt)).real
    # 1/scale^2 saturates at the exact scale-free limits for extreme inputs.
    inv_scale2 = 1.0 / (scale * scale) if scale > 1e-160 else float("inf")
    arg = 1.0 - abs(p) ** 2 / (qvv * (inv_scale2 + qxx))
    clamped = arg < KELLY_ARG_MIN
    stat = -2.0 * (m0 + 1) * np.log(max(arg, KELLY_ARG_MIN))
    return DetectorOutput(statistic=max(stat, 0.0), detector_id="kelly", clamped=bool(clamped))


def wald(data: Dataset, scatter: str = WALD_SCATTER_T1) -> DetectorOutput:
    """Misspecified Wald statistic W = M1 eta_hat^T P_hat eta_hat.

    ``scatter`` selects the consistent covariance estimate behind P_hat:
    the fitted T1(eta_hat) or the scaled secondary scatter S0/M0.
    """
    if scatter not in WALD_SCATTERS:
        raise ValueError(f"scatter must be one of {WALD_SCATTERS}")
    s0 = secondary_scatter(data.secondary)
    v = data.steering
    eta = mml_alpha(data.primary, s0, v)
    if scatter == WALD_SCATTER_T1:
        cov = t1_matrix(data.primary, s0, data.m, eta, v)
    else:
        cov = s0 / data.m0
    stat = data.m1 * float(eta @ p_hat(v, cov) @ eta)
    return DetectorOutput(statistic=max(stat, 0.0), detector_id="wald")


def wald_explicit(data: Dataset) -> DetectorOutput:
    """The explicit form of the T1-scatter Wald statistic,
    W = 2 (v^H T1^{-1} v) |sum_m v^H S0^{-1} x_m|^2 / (M1 (v^H S0^{-1} v)^2),
    kept as an independent route for the identity checks.
    """
    s0 = secondary_scatter(data.secondary)
    v = data.steering
    eta = mml_alpha(data.primary, s0, v)
    t1 = t1_matrix(data.primary, s0, data.m, eta, v)
    u = solve(s0, v)
    qvv = np.vdot(v, u).real
    psum = complex(np.sum(data.primary @ u.conj()))
    qt = np.vdot(v, solve(t1, v)).real
    stat = 2.0 * qt * abs(psum) ** 2 / (data.m1 * qvv**2)
    return DetectorOutput(statistic=max(stat, 0.0), detector_id="wald")


def amf(x: np.ndarray, s0: np.ndarray, v: np.ndarray, m0: int) -> DetectorOutput:
    """Adaptive matched filter 2 M0 |v^H S0^{-1} x|^2 / (v^H S0^{-1} v)."""
    x = np.asarray(x, dtype=np.complex128).ravel()
    u = solve(s0, v)
    qvv = np.vdot(v, u).real
    p = np.vdot(u, x)
    stat = 2.0 * m0 * abs(p) ** 2 / qvv
    return DetectorOutput(statistic=max(stat, 0.0), detector_id="amf")
