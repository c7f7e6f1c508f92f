"""Complex elliptically symmetric data models and their samplers.

All models are sampled through the compound-Gaussian representation
x = alpha*v + sqrt(tau) * L z with z a standard circular complex Gaussian
vector, L the Cholesky factor of the scatter matrix, and tau a positive
texture variable.  Every texture law is normalized to E{tau} = 1 so the
scatter matrix of the density equals the covariance matrix of the draws.

Only the *assumed* Gaussian log-density is ever evaluated
(``gaussian_loglik``); the true density generator stays unknown to every
detector by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy import special

from .linalg import cholesky, hermitian_part

GAUSSIAN = "gaussian"
COMPLEX_T = "complex_t"
K_DIST = "k_dist"
GEN_GAUSSIAN = "gen_gaussian"

_KINDS = (GAUSSIAN, COMPLEX_T, K_DIST, GEN_GAUSSIAN)


@dataclass(frozen=True)
class CesModel:
    """A CES family member identified by its texture law.

    kind        one of 'gaussian', 'complex_t', 'k_dist', 'gen_gaussian'
    nu          degrees of freedom (complex_t, > 2) or gamma shape (k_dist, > 0)
    shape       exponent s of the generalized-Gaussian generator exp(-t^s), > 0
    """

    kind: str
    nu: float | None = None
    shape: float | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {_KINDS}")
        if self.kind == COMPLEX_T:
            if self.nu is None or self.nu <= 2:
                raise ValueError("complex_t requires nu > 2 for a finite covariance")
        elif self.kind == K_DIST:
            if self.nu is None or self.nu <= 0:
                raise ValueError("k_dist requires shape nu > 0")
        elif self.kind == GEN_GAUSSIAN:
            if self.shape is None or self.shape <= 0:
                raise ValueError("gen_gaussian requires exponent s > 0")

    @classmethod
    def gaussian(cls) -> "CesModel":
        return cls(GAUSSIAN)

    @classmethod
    def complex_t(cls, nu: float) -> "CesModel":
        return cls(COMPLEX_T, nu=float(nu))

    @classmethod
    def k_dist(cls, nu: float) -> "CesModel":
        return cls(K_DIST, nu=float(nu))

    @classmethod
    def gen_gaussian(cls, shape: float) -> "CesModel":
        return cls(GEN_GAUSSIAN, shape=float(shape))

    def label(self) -> str:
        if self.kind == COMPLEX_T:
            return f"complex_t(nu={self.nu:g})"
        if self.kind == K_DIST:
            return f"k_dist(nu={self.nu:g})"
        if self.kind == GEN_GAUSSIAN:
            return f"gen_gaussian(s={self.shape:g})"
        return "gaussian"

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind in (COMPLEX_T, K_DIST):
            d["nu"] = self.nu
        elif self.kind == GEN_GAUSSIAN:
            d["shape"] = self.shape
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CesModel":
        if not isinstance(d, dict) or "kind" not in d:
            raise ValueError("model must be an object with a 'kind' field")
        extra = set(d) - {"kind", "nu", "shape"}
        if extra:
            raise ValueError(f"unknown model field(s) {sorted(extra)}")
        return cls(d["kind"], nu=d.get("nu"), shape=d.get("shape"))


def sample_texture(model: CesModel, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` i.i.d. unit-mean textures for ``model``.

    gaussian      degenerate: all ones
    complex_t     tau = (nu-2)/u with u ~ chi^2_nu  (inverse-gamma, mean 1)
    k_dist        tau ~ Gamma(nu, 1/nu)
    gen_gaussian  density proportional to exp(-(t/b)^s) on t > 0, with
                  b = Gamma(1/s)/Gamma(2/s) so the mean is 1; sampled by the
                  exact inverse CDF t = b * gammaincinv(1/s, U)^(1/s)
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    if model.kind == GAUSSIAN:
        return np.ones(count)
    if model.kind == COMPLEX_T:
        return (model.nu - 2.0) / rng.chisquare(model.nu, size=count)
    if model.kind == K_DIST:
        return rng.gamma(shape=model.nu, scale=1.0 / model.nu, size=count)
    s = model.shape
    b = special.gamma(1.0 / s) / special.gamma(2.0 / s)
    u = rng.random(count)
    return b * special.gammaincinv(1.0 / s, u) ** (1.0 / s)


@dataclass(frozen=True)
class SignalScenario:
    """Signal-plus-noise scenario: mean alpha*v, noise CES(0, sigma, model)."""

    alpha: complex
    v: np.ndarray
    sigma: np.ndarray
    model: CesModel

    def __post_init__(self):
        v = np.asarray(self.v, dtype=np.complex128).ravel()
        if np.linalg.norm(v) == 0.0:
            raise ValueError("steering vector must be nonzero")
        sigma = hermitian_part(self.sigma)
        ell = cholesky(sigma)  # also validates positive definiteness
        object.__setattr__(self, "alpha", complex(self.alpha))
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "_chol", ell)

    @property
    def chol(self) -> np.ndarray:
        return self._chol


def standard_complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Circular complex Gaussian with identity covariance (per vector entry)."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def sample_ces_block(
    model: CesModel,
    alpha: complex,
    v: np.ndarray,
    chol_sigma: np.ndarray,
    shape: tuple,
    rng_texture: np.random.Generator,
    rng_core: np.random.Generator,
) -> np.ndarray:
    """Vectorized sampler: CES draws with the given leading ``shape``.

    Textures are drawn first (from ``rng_texture``), then the Gaussian cores
    (from ``rng_core``); each output vector carries its own texture.
    Output shape is ``shape + (N,)``.
    """
    n = v.size
    count = int(np.prod(shape, dtype=np.int64))
    tau = sample_texture(model, count, rng_texture).reshape(shape)
    z = standard_complex_normal(rng_core, tuple(shape) + (n,))
    x = np.sqrt(tau)[..., None] * (z @ chol_sigma.T)
    if alpha != 0:
        x = x + alpha * v
    return x


def sample_ces(scn: SignalScenario, m: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``m`` independent vectors from the scenario's CES distribution.

    A single generator feeds both the texture and the Gaussian core, in that
    order, so a fixed seed reproduces the draws bit for bit.
    """
    if m < 0:
        raise ValueError("sample count must be >= 0")
    if m == 0:
        return np.empty((0, scn.v.size), dtype=np.complex128)
    return sample_ces_block(scn.model, scn.alpha, scn.v, scn.chol, (m,), rng, rng)


def gaussian_loglik(x: np.ndarray, alpha: complex, v: np.ndarray, phi: np.ndarray):
    """Assumed-Gaussian log-density -N ln pi - ln|Phi| - (x-av)^H Phi^{-1} (x-av).

    This is the (possibly misspecified) model every estimator and detector
    works with.  ``x`` may be a single vector or a batch with trailing
    dimension N; the return value is a scalar or the matching batch.
    """
    x = np.asarray(x, dtype=np.complex128)
    v = np.asarray(v, dtype=np.complex128).ravel()
    n = v.size
    ell = cholesky(phi)
    ld = 2.0 * float(np.log(ell.diagonal().real).sum())
    r = x - alpha * v
    flat = r.reshape(-1, n)
    w = scipy.linalg.solve_triangular(ell, flat.T, lower=True)
    quad = np.sum(np.abs(w) ** 2, axis=0).reshape(r.shape[:-1])
    out = -n * np.log(np.pi) - ld - quad
    return float(out) if r.ndim == 1 else out
