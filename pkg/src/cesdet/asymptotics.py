"""Large-sample machinery for the mismatched Gaussian fit on CES data.

Parameter order is theta = [eta; mu] with eta = [Re alpha, Im alpha] and
mu = vecs(Phi), giving d = 2 + N^2 real parameters.  For one observation x
with residual r = x - alpha*v and Q = Phi^{-1}, the per-sample score and
Hessian of the assumed Gaussian log-density are available in closed form:

    score_eta   = 2 [Re(v^H Q r); Im(v^H Q r)]
    score_mu[k] = tr(G E_k),  G = Q r r^H Q - Q
    hess_eta                = -2 (v^H Q v) I2
    hess_eta_mu[:, k]       = -2 [Re; Im](v^H Q E_k Q r)
    hess_mu[m, k]           = -tr(Q E_k Q S Q E_m) - tr(Q S Q E_k Q E_m)
                              + tr(Q E_k Q E_m),  S = r r^H

where {E_k} is the Hermitian basis matching the vecs layout.  The Hessian
is affine in (r, r r^H), so block averages over a sample reduce to the same
formulas evaluated at the sample means -- no per-sample Hessians are ever
materialized.

The expectation matrices use the sandwich convention A = -E{hessian},
B = E{score score^T}, under which the eta blocks equal
2 (v^H Sigma^{-1} v) I2 for every CES input with covariance Sigma and the
full pipeline P, C_eta, H = P C_eta has unit eigenvalues.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.integrate
import scipy.linalg
from scipy import special

from ._rng import as_generator
from .linalg import cholesky, hermitian_part, lower_indices, unvecs, vecs
from .models import CesModel, sample_ces_block

SIGN_CONVENTION = "A = -E[per-sample log-likelihood Hessian] (positive-definite form)"


@lru_cache(maxsize=32)
def hermitian_basis(n: int) -> np.ndarray:
    """Basis {E_k} of Hermitian matrices matching the vecs layout."""
    e = np.zeros((n * n, n, n), dtype=np.complex128)
    k = 0
    for j in range(n):
        e[k, j, j] = 1.0
        k += 1
    r, c = lower_indices(n)
    for rr, cc in zip(r, c):
        e[k, rr, cc] = 1.0
        e[k, cc, rr] = 1.0
        k += 1
    for rr, cc in zip(r, c):
        e[k, rr, cc] = 1.0j
        e[k, cc, rr] = -1.0j
        k += 1
    e.setflags(write=False)
    return e


def _inverse_pd(phi: np.ndarray) -> np.ndarray:
    ell = cholesky(phi)
    q = scipy.linalg.cho_solve((ell, True), np.eye(phi.shape[0], dtype=np.complex128))
    return (q + q.conj().T) / 2


def _basis_contract(z: np.ndarray) -> np.ndarray:
    """Coefficients tr(E_k^T ...) pattern: sum_ab E_k[a,b] z[a,b] per basis k."""
    n = z.shape[0]
    r, c = lower_indices(n)
    low = z[r, c]
    up = z[c, r]
    return np.concatenate([z.diagonal(), low + up, 1j * (low - up)])


def _score_batch(resid: np.ndarray, v: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Per-sample scores, shape (n_samples, 2 + N^2)."""
    n = v.size
    y = resid @ q.T
    zeta = y @ v.conj()
    s_eta = 2.0 * np.column_stack([zeta.real, zeta.imag])
    gd = np.abs(y) ** 2 - q.diagonal().real
    r, c = lower_indices(n)
    glow = y[:, r] * y[:, c].conj() - q[r, c]
    s_mu = np.concatenate([gd, 2.0 * glow.real, 2.0 * glow.imag], axis=1)
    return np.concatenate([s_eta, s_mu], axis=1)


def _hessian_from_means(
    ybar: np.ndarray, kbar: np.ndarray, v: np.ndarray, q: np.ndarray
) -> np.ndarray:
    """Mean per-sample Hessian given mean y and mean y y^H (y = Q r)."""
    n = v.size
    e = hermitian_basis(n)
    qvv = np.vdot(v, q @ v).real
    h_ee = -2.0 * qvv * np.eye(2)
    w = q @ v
    z = np.outer(w.conj(), ybar)
    cvec = _basis_contract(z)
    h_em = -2.0 * np.vstack([cvec.real, cvec.imag])
    term1 = np.einsum("nab,bc,mcd,da->mn", e, kbar, e, q, optimize=True)
    term2 = np.einsum("ab,nbc,cd,mda->mn", kbar, e, q, e, optimize=True)
    term3 = np.einsum("ab,nbc,cd,mda->mn", q, e, q, e, optimize=True)
    h_mm = (-term1 - term2 + term3).real
    h_mm = (h_mm + h_mm.T) / 2
    d = 2 + n * n
    h = np.empty((d, d))
    h[:2, :2] = h_ee
    h[:2, 2:] = h_em
    h[2:, :2] = h_em.T
    h[2:, 2:] = h_mm
    return h


def loglik_score(x: np.ndarray, v: np.ndarray, eta: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Gradient of the assumed-Gaussian log-density at (eta, mu).

    ``x`` may be one vector or a batch (rows); returns (d,) or (batch, d).
    """
    v = np.asarray(v, dtype=np.complex128).ravel()
    q = _inverse_pd(unvecs(np.asarray(mu, dtype=np.float64)))
    x = np.asarray(x, dtype=np.complex128)
    single = x.ndim == 1
    resid = np.atleast_2d(x) - complex(eta[0], eta[1]) * v
    s = _score_batch(resid, v, q)
    return s[0] if single else s


def loglik_hessian(x: np.ndarray, v: np.ndarray, eta: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Hessian of the assumed-Gaussian log-density at (eta, mu), shape (d, d)."""
    v = np.asarray(v, dtype=np.complex128).ravel()
    q = _inverse_pd(unvecs(np.asarray(mu, dtype=np.float64)))
    r = np.asarray(x, dtype=np.complex128).ravel() - complex(eta[0], eta[1]) * v
    y = q @ r
    return _hessian_from_means(y, np.outer(y, y.conj()), v, q)


def pseudo_true_closed_form(sigma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pseudo-true parameter under the null: eta = 0, mu = vecs(Sigma)."""
    sigma = hermitian_part(sigma)
    cholesky(sigma)  # reject non-PD input
    return np.zeros(2), vecs(sigma)


def pseudo_true_numeric(
    model: CesModel,
    sigma: np.ndarray,
    v: np.ndarray,
    sample_size: int,
    rng: int | np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Minimize the sample-average negative log-likelihood on one large
    null sample.

    For the assumed Gaussian family the minimizer is closed-form: the
    amplitude is the GLS fit of the sample mean onto v under the
    sample-covariance metric, and mu is the scatter about the fitted mean.
    """
    rng = as_generator(rng)
    sigma = hermitian_part(sigma)
    v = np.asarray(v, dtype=np.complex128).ravel()
    x = sample_ces_block(model, 0.0, v, cholesky(sigma), (int(sample_size),), rng, rng)
    xbar = x.mean(axis=0)
    xc = x - xbar
    c0 = np.einsum("ma,mb->ab", xc, xc.conj()) / x.shape[0]
    ell = cholesky(c0)
    u = scipy.linalg.cho_solve((ell, True), v)
    alpha = np.vdot(u, xbar) / np.vdot(v, u).real
    resid = xbar - alpha * v
    mu = vecs(c0 + np.outer(resid, resid.conj()))
    return np.array([alpha.real, alpha.imag]), mu


@dataclass(frozen=True)
class AbEstimate:
    """Monte Carlo estimates of the expectation matrices A and B.

    ``a_chunks``/``b_chunks`` hold the per-chunk sample means; the standard
    errors are batch means over those chunks.
    """

    a: np.ndarray
    b: np.ndarray
    a_se: np.ndarray
    b_se: np.ndarray
    a_chunks: np.ndarray
    b_chunks: np.ndarray
    sample_size: int


def ab_matrices(
    model: CesModel,
    sigma: np.ndarray,
    v: np.ndarray,
    theta_bar: tuple[np.ndarray, np.ndarray],
    sample_size: int,
    rng: int | np.random.Generator,
    chunk_size: int = 20_000,
) -> AbEstimate:
    """Estimate A = -E{hessian} and B = E{score score^T} under the true model.

    Draws ``sample_size`` null vectors in deterministic chunks; per-entry
    standard errors come from the spread of the chunk means.
    """
    if sample_size < 2 * chunk_size:
        chunk_size = max(1, sample_size // 2)
    eta_bar, mu_bar = theta_bar
    alpha_bar = complex(eta_bar[0], eta_bar[1])
    phi = unvecs(np.asarray(mu_bar, dtype=np.float64))
    q = _inverse_pd(phi)
    sigma = hermitian_part(sigma)
    v = np.asarray(v, dtype=np.complex128).ravel()
    ell_sigma = cholesky(sigma)
    rng = as_generator(rng)

    n_chunks = -(-int(sample_size) // int(chunk_size))
    base, rem = divmod(int(sample_size), n_chunks)
    sizes = [base + (1 if i < rem else 0) for i in range(n_chunks)]
    children = rng.spawn(n_chunks)

    a_chunks, b_chunks = [], []
    for size, child in zip(sizes, children):
        x = sample_ces_block(model, 0.0, v, ell_sigma, (size,), child, child)
        resid = x - alpha_bar * v
        s = _score_batch(resid, v, q)
        b_chunks.append(s.T @ s / size)
        y = resid @ q.T
        ybar = y.mean(axis=0)
        kbar = y.T @ y.conj() / size
        a_chunks.append(-_hessian_from_means(ybar, kbar, v, q))

    a_chunks = np.asarray(a_chunks)
    b_chunks = np.asarray(b_chunks)
    weights = np.asarray(sizes, dtype=np.float64) / float(sample_size)
    a = np.einsum("k,kij->ij", weights, a_chunks)
    b = np.einsum("k,kij->ij", weights, b_chunks)
    a = (a + a.T) / 2
    b = (b + b.T) / 2
    k = n_chunks
    a_se = a_chunks.std(axis=0, ddof=1) / math.sqrt(k)
    b_se = b_chunks.std(axis=0, ddof=1) / math.sqrt(k)
    return AbEstimate(
        a=a, b=b, a_se=a_se, b_se=b_se,
        a_chunks=a_chunks, b_chunks=b_chunks, sample_size=int(sample_size),
    )


def p_matrix(a: np.ndarray) -> np.ndarray:
    """Schur complement of the nuisance block: A_eta - A_eta_mu A_mu^{-1} A_mu_eta."""
    a = np.asarray(a, dtype=np.float64)
    a_eta = a[:2, :2]
    a_em = a[:2, 2:]
    a_mu = a[2:, 2:]
    if a_em.size == 0:
        return a_eta.copy()
    try:
        sol = np.linalg.solve(a_mu, a_em.T)
    except np.linalg.LinAlgError as err:
        raise ValueError("nuisance block A_mu is singular") from err
    p = a_eta - a_em @ sol
    return (p + p.T) / 2


def h_matrix_and_eigs(
    p: np.ndarray, c_eta: np.ndarray, imag_tol: float = 1e-8
) -> tuple[np.ndarray, np.ndarray]:
    """H = P C_eta and its eigenvalues, sorted descending.

    For PD inputs H is similar to a symmetric PD matrix, so its eigenvalues
    are real; an imaginary part beyond ``imag_tol`` signals inconsistent
    inputs and raises.
    """
    h = np.asarray(p, dtype=np.float64) @ np.asarray(c_eta, dtype=np.float64)
    eig = np.linalg.eigvals(h)
    scale = max(1.0, float(np.abs(eig).max(initial=0.0)))
    if float(np.abs(eig.imag).max(initial=0.0)) > imag_tol * scale:
        raise ValueError("eigenvalues of P C_eta are not real: inconsistent inputs")
    lams = np.sort(eig.real)[::-1]
    return h, lams


@dataclass(frozen=True)
class SandwichReport:
    """Full pipeline output: pseudo-true point, A/B/C blocks, P, H, eigenvalues."""

    eta_bar: np.ndarray
    mu_bar: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    p: np.ndarray
    c_eta: np.ndarray
    h: np.ndarray
    lambdas: np.ndarray
    lambdas_se: np.ndarray
    a_se: np.ndarray
    b_se: np.ndarray
    sample_size: int
    n_chunks: int
    model: str
    sign_convention: str = field(default=SIGN_CONVENTION)

    def to_json_dict(self) -> dict:
        return {
            "eta_bar": self.eta_bar.tolist(),
            "mu_bar": self.mu_bar.tolist(),
            "A": self.a.tolist(),
            "B": self.b.tolist(),
            "C": self.c.tolist(),
            "P": self.p.tolist(),
            "C_eta": self.c_eta.tolist(),
            "H": self.h.tolist(),
            "lambdas": self.lambdas.tolist(),
            "lambdas_se": self.lambdas_se.tolist(),
            "A_se": self.a_se.tolist(),
            "B_se": self.b_se.tolist(),
            "sample_size": self.sample_size,
            "n_chunks": self.n_chunks,
            "model": self.model,
            "sign_convention": self.sign_convention,
        }


def sandwich_report(
    model: CesModel,
    sigma: np.ndarray,
    v: np.ndarray,
    sample_size: int,
    rng: int | np.random.Generator,
    chunk_size: int = 20_000,
) -> SandwichReport:
    """Run the complete pipeline: pseudo-true point, A/B, C, P, H, eigenvalues.

    Eigenvalue standard errors are batch means over the same chunks used to
    estimate A and B (the pipeline is re-run on each chunk's estimates).
    """
    sigma = hermitian_part(sigma)
    eta_bar, mu_bar = pseudo_true_closed_form(sigma)
    est = ab_matrices(model, sigma, v, (eta_bar, mu_bar), sample_size, rng, chunk_size)
    c = np.linalg.solve(est.a, np.linalg.solve(est.a, est.b).T).T
    c = (c + c.T) / 2
    p = p_matrix(est.a)
    c_eta = c[:2, :2]
    h, lams = h_matrix_and_eigs(p, c_eta)

    lam_chunks = []
    for a_k, b_k in zip(est.a_chunks, est.b_chunks):
        c_k = np.linalg.solve(a_k, np.linalg.solve(a_k, b_k).T).T
        _, lam_k = h_matrix_and_eigs(p_matrix(a_k), (c_k + c_k.T)[:2, :2] / 2)
        lam_chunks.append(lam_k)
    lam_chunks = np.asarray(lam_chunks)
    lam_se = lam_chunks.std(axis=0, ddof=1) / math.sqrt(lam_chunks.shape[0])

    return SandwichReport(
        eta_bar=eta_bar, mu_bar=mu_bar,
        a=est.a, b=est.b, c=c, p=p, c_eta=c_eta, h=h,
        lambdas=lams, lambdas_se=lam_se,
        a_se=est.a_se, b_se=est.b_se,
        sample_size=int(sample_size), n_chunks=est.a_chunks.shape[0],
        model=model.label(),
    )


def chi2_cdf(t, dof: int = 2):
    """Chi-square CDF (regularized lower incomplete gamma)."""
    t = np.asarray(t, dtype=np.float64)
    out = np.where(t > 0, special.gammainc(dof / 2.0, np.maximum(t, 0.0) / 2.0), 0.0)
    return float(out) if out.ndim == 0 else out


def chi2_quantile(p_level: float, dof: int = 2) -> float:
    """Chi-square quantile; exact closed form for dof = 2."""
    if not 0.0 < p_level < 1.0:
        raise ValueError("probability level must lie strictly inside (0, 1)")
    if dof == 2:
        return -2.0 * math.log1p(-p_level)
    return 2.0 * float(special.gammaincinv(dof / 2.0, p_level))


def weighted_chisq_cdf(lambdas, t: float) -> float:
    """P(sum_i lambda_i v_i <= t) for independent v_i ~ chi^2_1.

    Equal weights reduce to the scaled chi-square closed form; otherwise the
    characteristic function is inverted by Imhof-type quadrature, split into
    an adaptive finite part and Fourier-weighted tail integrals.
    """
    lam = np.sort(np.asarray(lambdas, dtype=np.float64))
    if lam.size == 0:
        raise ValueError("need at least one weight")
    if np.any(lam <= 0):
        raise ValueError("all weights must be positive")
    if t <= 0:
        return 0.0
    if lam[-1] - lam[0] <= 1e-12 * lam[-1]:
        return chi2_cdf(t / lam.mean(), dof=lam.size)

    p = lam.size
    c0 = p * math.pi / 4.0

    def rho(u):
        return np.prod((1.0 + (lam * u) ** 2) ** 0.25)

    def theta(u):
        return 0.5 * np.sum(np.arctan(lam * u)) - 0.5 * t * u

    def head(u):
        return math.sin(theta(u)) / (u * rho(u))

    def delta(u):
        return -0.5 * np.sum(np.arctan(1.0 / (lam * u)))

    def tail_cos(u):
        return math.sin(c0 + delta(u)) / (u * rho(u))

    def tail_sin(u):
        return math.cos(c0 + delta(u)) / (u * rho(u))

    # Split point: past the arctan transitions when possible, but capped so
    # the adaptive head integral sees a bounded number of oscillation cycles
    # (the tail decomposition below is exact for any split point).
    u0 = min(16.0 / lam[0], 800.0 * math.pi / max(t, 1.0))
    i_head, _ = scipy.integrate.quad(head, 0.0, u0, limit=800, epsabs=1e-11, epsrel=1e-11)
    i_cos, _ = scipy.integrate.quad(
        tail_cos, u0, np.inf, weight="cos", wvar=t / 2.0, limlst=200, limit=200
    )
    i_sin, _ = scipy.integrate.quad(
        tail_sin, u0, np.inf, weight="sin", wvar=t / 2.0, limlst=200, limit=200
    )
    cdf = 0.5 - (i_head + i_cos - i_sin) / math.pi
    return float(min(1.0, max(0.0, cdf)))
