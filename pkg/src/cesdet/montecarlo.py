"""Monte Carlo experiment harness: null/alternative trials, Pfa/Pd
estimation with Wilson intervals, KS distances against the asymptotic
chi-square law, and threshold calibration.

Determinism contract: trials are generated in fixed-size chunks, each chunk
drawing from substreams addressed by (seed, stream, chunk index).  Worker
processes only decide *who* computes a chunk, never *what* is computed, so
results are bit-identical for every worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from time import perf_counter

import numpy as np

from . import _kernels
from ._rng import STREAM_GAUSS, STREAM_TEXTURE, substream
from .asymptotics import chi2_cdf, chi2_quantile
from .linalg import NotPositiveDefiniteError, cholesky, hermitian_part, solve
from .models import CesModel, sample_ces_block

CHUNK_TRIALS = 1024
DETECTOR_NAMES = ("mglrt", "kelly", "wald", "amf")
WALD_SCATTERS = ("t1", "s0_over_m0")

# Above this many trials, statistics are folded into a fixed-grid histogram
# sketch instead of being stored in full; threshold exceedance counts stay
# integer-exact, quantiles gain the bin resolution, KS is not computed.
FULL_STORAGE_LIMIT = 1_000_000
_SKETCH_HI = 80.0
_SKETCH_BINS = 160_000  # 5e-4 statistic resolution over [0, 80]

_WILSON_Z = 1.959963984540054  # 95% normal quantile


class ConfigError(ValueError):
    """An experiment configuration violated an invariant."""


class ExperimentNumericalError(RuntimeError):
    """A numerical failure occurred mid-run.

    ``partial_stats``/``clamps`` hold whatever chunks completed before the
    failure; drivers attach a partial ``result`` for the CLI to flush.
    """

    def __init__(
        self,
        message: str,
        partial_stats: dict | None = None,
        clamps: int = 0,
        result: "ExperimentResult | None" = None,
    ):
        super().__init__(message)
        self.partial_stats = partial_stats or {}
        self.clamps = clamps
        self.result = result


@dataclass(frozen=True)
class ExperimentConfig:
    """Scenario + run parameters for one experiment.

    ``sigma_kind`` is 'identity', 'exp_corr' (entries rho^|j-k|) or
    'explicit'; ``steering_kind`` is 'fourier' (v_k = exp(i 2 pi f k)/sqrt(N))
    or 'explicit'.
    """

    n: int
    m1: int
    m0: int
    model: CesModel
    trials: int
    seed: int
    detectors: tuple[str, ...] = ("mglrt",)
    alpha: complex = 0.0
    sigma_kind: str = "identity"
    rho: float | None = None
    sigma_matrix: np.ndarray | None = None
    steering_kind: str = "fourier"
    freq: float = 0.1
    steering_vector: np.ndarray | None = None
    wald_scatter: str = "t1"
    nominal_pfa: tuple[float, ...] = (0.05,)
    thresholds: tuple[float, ...] = ()
    snr_db: tuple[float, ...] | None = None
    sample_size: int = 1_000_000  # asymptotics pipeline only

    def validate(self) -> None:
        if self.n < 1:
            raise ConfigError("key 'n': dimension must be >= 1")
        if self.m1 < 1:
            raise ConfigError("key 'm1': need at least one primary vector")
        if self.m0 < self.n:
            raise ConfigError(
                f"key 'm0': M0={self.m0} < N={self.n} makes the secondary scatter singular"
            )
        if self.trials < 1:
            raise ConfigError("key 'trials': must be >= 1")
        if not self.detectors:
            raise ConfigError("key 'detectors': must name at least one detector")
        for d in self.detectors:
            if d not in DETECTOR_NAMES:
                raise ConfigError(f"key 'detectors': unknown detector {d!r}")
        if self.m1 != 1 and ("kelly" in self.detectors or "amf" in self.detectors):
            raise ConfigError("key 'detectors': kelly/amf require m1 == 1")
        if self.wald_scatter not in WALD_SCATTERS:
            raise ConfigError(f"key 'wald_scatter': must be one of {WALD_SCATTERS}")
        for p in self.nominal_pfa:
            if not 0.0 < p < 1.0:
                raise ConfigError("key 'nominal_pfa': levels must lie in (0, 1)")
        if self.sigma_kind == "exp_corr":
            if self.rho is None or not -1.0 < self.rho < 1.0:
                raise ConfigError("key 'sigma.rho': need |rho| < 1")
        elif self.sigma_kind == "explicit":
            m = self.sigma_matrix
            if m is None or m.shape != (self.n, self.n):
                raise ConfigError("key 'sigma.matrix': must be an N x N matrix")
            if np.abs(m - m.conj().T).max() > 1e-10 * max(1.0, np.abs(m).max()):
                raise ConfigError("key 'sigma.matrix': matrix is not Hermitian")
        elif self.sigma_kind != "identity":
            raise ConfigError(f"key 'sigma.kind': unknown kind {self.sigma_kind!r}")
        if self.steering_kind == "explicit":
            vec = self.steering_vector
            if vec is None or vec.shape != (self.n,):
                raise ConfigError("key 'steering.vector': must have length N")
            if np.linalg.norm(vec) == 0.0:
                raise ConfigError("key 'steering.vector': must be nonzero")
        elif self.steering_kind != "fourier":
            raise ConfigError(f"key 'steering.kind': unknown kind {self.steering_kind!r}")
        if self.sample_size < 4:
            raise ConfigError("key 'sample_size': too small to estimate expectations")

    def sigma(self) -> np.ndarray:
        if self.sigma_kind == "identity":
            return np.eye(self.n, dtype=np.complex128)
        if self.sigma_kind == "exp_corr":
            idx = np.arange(self.n)
            return (self.rho ** np.abs(idx[:, None] - idx[None, :])).astype(np.complex128)
        return np.asarray(self.sigma_matrix, dtype=np.complex128)

    def steering(self) -> np.ndarray:
        if self.steering_kind == "fourier":
            k = np.arange(self.n)
            return np.exp(2j * np.pi * self.freq * k) / np.sqrt(self.n)
        return np.asarray(self.steering_vector, dtype=np.complex128)

    def matched_filter_gain(self) -> float:
        """v^H Sigma^{-1} v, the scale linking |alpha|^2 to output SNR."""
        v = self.steering()
        return float(np.vdot(v, solve(hermitian_part(self.sigma()), v)).real)

    def alpha_for_snr_db(self, snr_db: float) -> complex:
        mag = math.sqrt(10.0 ** (snr_db / 10.0) / self.matched_filter_gain())
        phase = np.angle(self.alpha) if self.alpha != 0 else 0.0
        return mag * complex(math.cos(phase), math.sin(phase))

    def to_dict(self) -> dict:
        d = {
            "schema_version": 1,
            "n": self.n,
            "m1": self.m1,
            "m0": self.m0,
            "model": self.model.to_dict(),
            "trials": self.trials,
            "seed": self.seed,
            "detectors": list(self.detectors),
            "alpha": [self.alpha.real, self.alpha.imag],
            "wald_scatter": self.wald_scatter,
            "nominal_pfa": list(self.nominal_pfa),
        }
        if self.sigma_kind == "exp_corr":
            d["sigma"] = {"kind": "exp_corr", "rho": self.rho}
        elif self.sigma_kind == "explicit":
            d["sigma"] = {
                "kind": "explicit",
                "matrix": [[[z.real, z.imag] for z in row] for row in self.sigma_matrix],
            }
        else:
            d["sigma"] = {"kind": "identity"}
        if self.steering_kind == "explicit":
            d["steering"] = {
                "kind": "explicit",
                "vector": [[z.real, z.imag] for z in self.steering_vector],
            }
        else:
            d["steering"] = {"kind": "fourier", "freq": self.freq}
        if self.thresholds:
            d["thresholds"] = list(self.thresholds)
        if self.snr_db is not None:
            d["snr_db"] = list(self.snr_db)
        d["sample_size"] = self.sample_size
        return d


def _as_complex(value, where: str) -> complex:
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    raise ConfigError(f"key '{where}': expected a number or [re, im] pair")


_TOP_KEYS = {
    "schema_version", "n", "m1", "m0", "model", "sigma", "steering", "alpha",
    "detectors", "wald_scatter", "trials", "seed", "nominal_pfa", "thresholds",
    "snr_db", "sample_size",
}


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Build and validate an ExperimentConfig from a parsed JSON document.

    Unknown keys are errors: a typo in a statistical parameter must never be
    silently ignored.
    """
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)}")
    if doc.get("schema_version") != 1:
        raise ConfigError("key 'schema_version': must be 1")
    for key in ("n", "m1", "m0", "model", "trials", "seed"):
        if key not in doc:
            raise ConfigError(f"key '{key}': required but missing")
    try:
        model = CesModel.from_dict(doc["model"])
    except ValueError as err:
        raise ConfigError(f"key 'model': {err}") from err

    sigma = doc.get("sigma", {"kind": "identity"})
    if not isinstance(sigma, dict) or "kind" not in sigma:
        raise ConfigError("key 'sigma': must be an object with a 'kind' field")
    if set(sigma) - {"kind", "rho", "matrix"}:
        raise ConfigError("key 'sigma': unknown field(s)")
    sigma_matrix = None
    if sigma["kind"] == "explicit":
        try:
            raw = np.asarray(sigma["matrix"], dtype=np.float64)
            sigma_matrix = raw[..., 0] + 1j * raw[..., 1]
        except Exception as err:
            raise ConfigError("key 'sigma.matrix': expected [re, im] entries") from err

    steering = doc.get("steering", {"kind": "fourier", "freq": 0.1})
    if not isinstance(steering, dict) or "kind" not in steering:
        raise ConfigError("key 'steering': must be an object with a 'kind' field")
    if set(steering) - {"kind", "freq", "vector"}:
        raise ConfigError("key 'steering': unknown field(s)")
    steering_vector = None
    if steering["kind"] == "explicit":
        try:
            raw = np.asarray(steering["vector"], dtype=np.float64)
            steering_vector = raw[..., 0] + 1j * raw[..., 1]
        except Exception as err:
            raise ConfigError("key 'steering.vector': expected [re, im] entries") from err

    cfg = ExperimentConfig(
        n=int(doc["n"]),
        m1=int(doc["m1"]),
        m0=int(doc["m0"]),
        model=model,
        trials=int(doc["trials"]),
        seed=int(doc["seed"]),
        detectors=tuple(doc.get("detectors", ["mglrt"])),
        alpha=_as_complex(doc.get("alpha", 0.0), "alpha"),
        sigma_kind=sigma["kind"],
        rho=float(sigma["rho"]) if "rho" in sigma else None,
        sigma_matrix=sigma_matrix,
        steering_kind=steering["kind"],
        freq=float(steering.get("freq", 0.1)),
        steering_vector=steering_vector,
        wald_scatter=doc.get("wald_scatter", "t1"),
        nominal_pfa=tuple(float(p) for p in doc.get("nominal_pfa", [0.05])),
        thresholds=tuple(float(t) for t in doc.get("thresholds", [])),
        snr_db=tuple(float(s) for s in doc["snr_db"]) if "snr_db" in doc else None,
        sample_size=int(doc.get("sample_size", 1_000_000)),
    )
    cfg.validate()
    return cfg


# --------------------------------------------------------------------------
# trial generation


def _kernel_flags(detectors: tuple[str, ...], wald_scatter: str) -> dict:
    return {
        "want_mglrt": "mglrt" in detectors,
        "want_kelly": "kelly" in detectors,
        "want_wald_t1": "wald" in detectors and wald_scatter == "t1",
        "want_wald_s0": "wald" in detectors and wald_scatter == "s0_over_m0",
        "want_amf": "amf" in detectors,
    }


def _compute_chunk(args) -> dict:
    """Worker task: draw one chunk of trials and evaluate the statistics.

    Secondary data is drawn before primary, textures before Gaussian cores,
    so the draws depend only on (seed, chunk index), never on worker layout.
    """
    (seed, chunk_index, size, model, alpha, v, ell, m1, m0, flags) = args
    rng_tex = substream(seed, STREAM_TEXTURE, chunk_index)
    rng_core = substream(seed, STREAM_GAUSS, chunk_index)
    x0 = sample_ces_block(model, 0.0, v, ell, (size, m0), rng_tex, rng_core)
    x1 = sample_ces_block(model, alpha, v, ell, (size, m1), rng_tex, rng_core)
    return _kernels.detector_stats(x1, x0, v, **flags)


_KERNEL_KEY = {"mglrt": "mglrt", "kelly": "kelly", "amf": "amf"}


def _stat_key(detector: str, wald_scatter: str) -> str:
    if detector == "wald":
        return "wald_t1" if wald_scatter == "t1" else "wald_s0"
    return _KERNEL_KEY[detector]


class TrialStats:
    """Per-detector trial statistics, held in full or as a histogram sketch.

    In sketch mode (trials above FULL_STORAGE_LIMIT) threshold exceedance
    counts remain integer-exact for the thresholds registered up front,
    quantiles carry the histogram bin resolution, and the KS distance is
    unavailable.
    """

    def __init__(self, detectors, thresholds: dict[str, np.ndarray], sketch: bool):
        self.mode = "sketch" if sketch else "full"
        self.detectors = tuple(detectors)
        self.thresholds = {d: np.asarray(thresholds.get(d, ()), dtype=np.float64)
                           for d in detectors}
        self.count = 0
        self.clamps = 0
        self._parts: dict[str, list] = {d: [] for d in detectors}
        self._stats: dict[str, np.ndarray] = {}
        self._hist = {d: np.zeros(_SKETCH_BINS + 1, dtype=np.int64) for d in detectors}
        self._exceed = {d: np.zeros(self.thresholds[d].size, dtype=np.int64)
                        for d in detectors}
        self._sums = {d: 0.0 for d in detectors}
        self._maxs = {d: 0.0 for d in detectors}

    def add_chunk(self, arrays: dict[str, np.ndarray], clamps: int) -> None:
        first = next(iter(arrays.values()))
        self.count += first.size
        self.clamps += clamps
        for det, arr in arrays.items():
            if self.mode == "full":
                self._parts[det].append(arr)
            else:
                idx = np.clip((arr * (_SKETCH_BINS / _SKETCH_HI)).astype(np.int64),
                              0, _SKETCH_BINS)
                self._hist[det] += np.bincount(idx, minlength=_SKETCH_BINS + 1)
                self._exceed[det] += (arr[None, :] > self.thresholds[det][:, None]).sum(axis=1)
                self._sums[det] += float(arr.sum())
                self._maxs[det] = max(self._maxs[det], float(arr.max(initial=0.0)))

    def finalize(self) -> None:
        if self.mode == "full":
            for det in self.detectors:
                parts = self._parts[det]
                self._stats[det] = np.concatenate(parts) if parts else np.empty(0)

    def statistics(self, det: str) -> np.ndarray | None:
        return self._stats.get(det) if self.mode == "full" else None

    def n_exceed(self, det: str, thr: float) -> int:
        if self.mode == "full":
            return int(np.sum(self._stats[det] > thr))
        where = np.nonzero(np.isclose(self.thresholds[det], thr, rtol=0, atol=0))[0]
        if where.size == 0:
            raise ValueError(f"threshold {thr} was not registered for {det}")
        return int(self._exceed[det][where[0]])

    def mean(self, det: str) -> float | None:
        if self.count == 0:
            return None
        if self.mode == "full":
            return float(self._stats[det].mean())
        return self._sums[det] / self.count

    def quantile(self, det: str, level: float) -> float:
        """Smallest value with at most (1 - level) of the mass above it."""
        if self.mode == "full":
            return empirical_quantile(np.sort(self._stats[det]), level)
        k = min(self.count, max(1, math.ceil(level * self.count)))
        cum = np.cumsum(self._hist[det])
        i = int(np.searchsorted(cum, k))
        if i >= _SKETCH_BINS:
            return self._maxs[det]
        return (i + 1) * (_SKETCH_HI / _SKETCH_BINS)

    def quantile_grid(self, det: str, probs) -> dict[str, float]:
        if self.count == 0:
            return {}
        if self.mode == "full":
            qs = np.quantile(self._stats[det], probs)
            return {f"{p:g}": float(q) for p, q in zip(probs, qs)}
        return {f"{p:g}": self.quantile(det, p) for p in probs}

    def ks_chi2(self, det: str) -> float | None:
        if self.mode != "full" or self.count == 0:
            return None
        return ks_distance(np.sort(self._stats[det]), chi2_cdf)


def _run_trials(
    config: ExperimentConfig,
    alpha: complex,
    workers: int = 1,
    thresholds: dict[str, np.ndarray] | None = None,
) -> TrialStats:
    """All per-trial statistics for one operating point.

    Chunks are accumulated in chunk-index order regardless of worker count.
    Raises ExperimentNumericalError carrying whatever completed if the
    scenario or a chunk fails numerically.
    """
    try:
        sigma = hermitian_part(config.sigma())
        ell = cholesky(sigma)
    except (NotPositiveDefiniteError, ValueError) as err:
        raise ExperimentNumericalError(f"scenario covariance rejected: {err}") from err
    v = config.steering()
    flags = _kernel_flags(config.detectors, config.wald_scatter)

    n_chunks = -(-config.trials // CHUNK_TRIALS)
    payloads = []
    start = 0
    for c in range(n_chunks):
        size = min(CHUNK_TRIALS, config.trials - start)
        payloads.append(
            (config.seed, c, size, config.model, alpha, v, ell, config.m1, config.m0, flags)
        )
        start += size

    acc = TrialStats(config.detectors, thresholds or {}, sketch=config.trials > FULL_STORAGE_LIMIT)

    def _fold(chunk: dict) -> None:
        arrays = {det: chunk[_stat_key(det, config.wald_scatter)] for det in config.detectors}
        acc.add_chunk(arrays, chunk["kelly_clamped"])

    failure: Exception | None = None
    try:
        if workers <= 1:
            for payload in payloads:
                _fold(_compute_chunk(payload))
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for result in pool.map(_compute_chunk, payloads):
                    _fold(result)
    except (NotPositiveDefiniteError, FloatingPointError, np.linalg.LinAlgError) as err:
        failure = err

    acc.finalize()
    if failure is not None:
        raise ExperimentNumericalError(
            f"numerical failure after {acc.count} trial(s): {failure}",
            partial_stats={d: acc.statistics(d) for d in config.detectors}
            if acc.mode == "full"
            else {},
            clamps=acc.clamps,
        ) from failure
    return acc


# --------------------------------------------------------------------------
# statistics helpers


def wilson_interval(successes: int, total: int, z: float = _WILSON_Z) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion."""
    if total <= 0:
        raise ValueError("total must be positive")
    phat = successes / total
    denom = 1.0 + z * z / total
    center = (phat + z * z / (2 * total)) / denom
    half = z * math.sqrt(phat * (1.0 - phat) / total + z * z / (4 * total * total)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def ks_distance(sorted_sample: np.ndarray, cdf) -> float:
    """Two-sided Kolmogorov-Smirnov distance of a sorted sample to ``cdf``."""
    s = np.asarray(sorted_sample, dtype=np.float64)
    if s.size == 0:
        raise ValueError("empty sample")
    if np.any(np.diff(s) < 0):
        raise ValueError("sample must be sorted ascending")
    f = np.asarray(cdf(s), dtype=np.float64)
    n = s.size
    grid_hi = np.arange(1, n + 1) / n
    grid_lo = np.arange(0, n) / n
    return float(max(np.max(grid_hi - f), np.max(f - grid_lo)))


def empirical_quantile(sorted_stats: np.ndarray, level: float) -> float:
    """Smallest order statistic s with the fraction of values > s at most 1-level."""
    n = sorted_stats.size
    k = min(n, max(1, math.ceil(level * n)))
    return float(sorted_stats[k - 1])


# --------------------------------------------------------------------------
# results


_QUANTILE_PROBS = (0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99)


@dataclass
class DetectorSummary:
    detector: str
    n_trials: int
    mean: float | None
    quantiles: dict
    ks_chi2: float | None
    overflow_count: int
    statistics: np.ndarray | None = None  # full-storage mode only

    def to_json_dict(self) -> dict:
        return {
            "detector": self.detector,
            "n_trials": self.n_trials,
            "mean": self.mean,
            "quantiles": self.quantiles,
            "ks_chi2": self.ks_chi2,
            "overflow_count": self.overflow_count,
        }


@dataclass
class ExperimentResult:
    """One experiment's outputs; serializes deterministically (no timing)."""

    kind: str
    config: ExperimentConfig
    detectors: dict[str, DetectorSummary] = field(default_factory=dict)
    pfa_rows: list[dict] = field(default_factory=list)
    pd_rows: list[dict] = field(default_factory=list)
    calibration: list[dict] = field(default_factory=list)
    partial: bool = False
    wall_time_s: float = 0.0  # reported in the run manifest, never serialized here

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "config": self.config.to_dict(),
            "detectors": {name: d.to_json_dict() for name, d in self.detectors.items()},
            "pfa": self.pfa_rows,
            "pd": self.pd_rows,
            "calibration": self.calibration,
            "partial": self.partial,
        }

    def csv_rows(self) -> list[dict]:
        """Flat rows for the simulate CSV schema."""
        rows = []
        cfg = self.config
        for name in cfg.detectors:
            summary = self.detectors.get(name)
            ks = summary.ks_chi2 if summary else None
            for row in self.pfa_rows:
                if row["detector"] != name:
                    continue
                rows.append(
                    {
                        "detector": name,
                        "model": cfg.model.label(),
                        "N": cfg.n,
                        "M1": cfg.m1,
                        "M0": cfg.m0,
                        "trials": cfg.trials,
                        "threshold": row["threshold"],
                        "pfa_hat": row["pfa_hat"],
                        "ci_lo": row["ci_lo"],
                        "ci_hi": row["ci_hi"],
                        "ks": ks,
                        "seed": cfg.seed,
                    }
                )
        return rows


SIMULATE_CSV_COLUMNS = (
    "detector", "model", "N", "M1", "M0", "trials",
    "threshold", "pfa_hat", "ci_lo", "ci_hi", "ks", "seed",
)
ROC_CSV_COLUMNS = ("snr_db", "threshold", "pd", "ci_lo", "ci_hi")


def format_number(x) -> str:
    """17-significant-digit decimal form (round-trip exact for float64)."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def simulate_csv_text(result: ExperimentResult) -> str:
    lines = [",".join(SIMULATE_CSV_COLUMNS)]
    for row in result.csv_rows():
        lines.append(
            ",".join(
                row[c] if isinstance(row[c], str) else format_number(row[c])
                for c in SIMULATE_CSV_COLUMNS
            )
        )
    return "\n".join(lines) + "\n"


def roc_csv_text(result: ExperimentResult, detector: str) -> str:
    rows = [r for r in result.pd_rows if r["detector"] == detector]
    rows.sort(key=lambda r: (r["snr_db"] if r["snr_db"] is not None else -math.inf, r["threshold"]))
    lines = [",".join(ROC_CSV_COLUMNS)]
    for r in rows:
        lines.append(
            ",".join(
                format_number(r[c]) for c in ("snr_db", "threshold", "pd", "ci_lo", "ci_hi")
            )
        )
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# experiment drivers


def _summaries(acc: TrialStats) -> dict:
    out = {}
    for det in acc.detectors:
        out[det] = DetectorSummary(
            detector=det,
            n_trials=acc.count,
            mean=acc.mean(det),
            quantiles=acc.quantile_grid(det, _QUANTILE_PROBS),
            ks_chi2=acc.ks_chi2(det),
            overflow_count=acc.clamps if det == "kelly" else 0,
            statistics=acc.statistics(det),
        )
    return out


def _summaries_from_arrays(stats: dict[str, np.ndarray], clamps: int) -> dict:
    """Summaries for a partial run flushed after a numerical failure."""
    out = {}
    for det, arr in stats.items():
        s = np.sort(arr)
        out[det] = DetectorSummary(
            detector=det,
            n_trials=int(arr.size),
            mean=float(arr.mean()) if arr.size else None,
            quantiles={f"{p:g}": float(q) for p, q in zip(_QUANTILE_PROBS, np.quantile(arr, _QUANTILE_PROBS))}
            if arr.size
            else {},
            ks_chi2=ks_distance(s, chi2_cdf) if arr.size else None,
            overflow_count=clamps if det == "kelly" else 0,
            statistics=arr,
        )
    return out


def _threshold_list(config: ExperimentConfig) -> list[tuple[float | None, float]]:
    """(nominal_pfa or None, threshold) pairs used for Pfa/Pd rows."""
    pairs = [(p, chi2_quantile(1.0 - p, dof=2)) for p in config.nominal_pfa]
    pairs.extend((None, t) for t in config.thresholds)
    return pairs


def run_h0(config: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    """Null-hypothesis experiment: statistics, KS distance, Pfa per threshold.

    When nominal Pfa levels are present, calibration rows (empirical vs
    asymptotic threshold) are included for every level with enough trials.
    """
    config.validate()
    if config.alpha != 0:
        raise ConfigError("key 'alpha': must be 0 under the null hypothesis")
    t0 = perf_counter()
    pairs = _threshold_list(config)
    thr_map = {d: np.asarray([t for _, t in pairs]) for d in config.detectors}
    try:
        acc = _run_trials(config, 0.0, workers, thr_map)
    except ExperimentNumericalError as err:
        partial = ExperimentResult(kind="h0", config=config, partial=True)
        done = {d: s for d, s in err.partial_stats.items() if s is not None and s.size}
        if done:
            partial.detectors = _summaries_from_arrays(done, err.clamps)
        partial.wall_time_s = perf_counter() - t0
        err.result = partial
        raise
    result = ExperimentResult(kind="h0", config=config)
    result.detectors = _summaries(acc)

    n = config.trials
    for det in config.detectors:
        for nominal, thr in pairs:
            k = acc.n_exceed(det, thr)
            lo, hi = wilson_interval(k, n)
            result.pfa_rows.append(
                {
                    "detector": det,
                    "nominal_pfa": nominal,
                    "threshold": float(thr),
                    "pfa_hat": k / n,
                    "ci_lo": lo,
                    "ci_hi": hi,
                }
            )
        for p in config.nominal_pfa:
            if p * n < 100:
                continue
            emp = acc.quantile(det, 1.0 - p)
            asy = chi2_quantile(1.0 - p, dof=2)
            result.calibration.append(
                {
                    "detector": det,
                    "nominal_pfa": p,
                    "empirical_threshold": emp,
                    "asymptotic_threshold": asy,
                    "relative_gap": (emp - asy) / asy,
                }
            )
    result.wall_time_s = perf_counter() - t0
    return result


def run_h1(
    config: ExperimentConfig,
    thresholds: dict[str, list[float]] | list[float] | None = None,
    workers: int = 1,
) -> ExperimentResult:
    """Alternative-hypothesis experiment: Pd per threshold across an SNR grid.

    SNR is |alpha|^2 v^H Sigma^{-1} v.  With an ``snr_db`` grid in the
    config, alpha is re-scaled per grid point (keeping its phase); without
    one, the config's own alpha is the single operating point.  The same
    seed drives every point (common random numbers).
    """
    config.validate()
    if thresholds is None:
        per_detector = {d: [t for _, t in _threshold_list(config)] for d in config.detectors}
    elif isinstance(thresholds, dict):
        per_detector = {d: list(map(float, ts)) for d, ts in thresholds.items()}
    else:
        per_detector = {d: list(map(float, thresholds)) for d in config.detectors}
    for det in config.detectors:
        if not per_detector.get(det):
            raise ConfigError(f"no thresholds supplied for detector {det!r}")

    if config.snr_db is not None:
        points = [(db, config.alpha_for_snr_db(db)) for db in config.snr_db]
    else:
        alpha = config.alpha
        if alpha == 0:
            snr = None
        else:
            snr = 10.0 * math.log10(abs(alpha) ** 2 * config.matched_filter_gain())
        points = [(snr, alpha)]

    t0 = perf_counter()
    result = ExperimentResult(kind="h1", config=config)
    n = config.trials
    thr_map = {d: np.asarray(per_detector[d]) for d in config.detectors}
    last_acc = None
    for snr_db, alpha in points:
        try:
            acc = _run_trials(config, alpha, workers, thr_map)
        except ExperimentNumericalError as err:
            result.partial = True
            result.wall_time_s = perf_counter() - t0
            err.result = result
            raise
        last_acc = acc
        for det in config.detectors:
            for thr in per_detector[det]:
                k = acc.n_exceed(det, thr)
                lo, hi = wilson_interval(k, n)
                result.pd_rows.append(
                    {
                        "detector": det,
                        "snr_db": snr_db,
                        "threshold": float(thr),
                        "pd": k / n,
                        "ci_lo": lo,
                        "ci_hi": hi,
                    }
                )
    if last_acc is not None:
        result.detectors = _summaries(last_acc)
    result.wall_time_s = perf_counter() - t0
    return result


def calibrate_threshold(
    config: ExperimentConfig, nominal_pfa, workers: int = 1
) -> list[dict]:
    """Empirical (1 - Pfa) quantiles of the null statistic per detector,
    alongside the asymptotic chi-square thresholds and their relative gap.
    """
    levels = [float(p) for p in np.atleast_1d(nominal_pfa)]
    for p in levels:
        if not 0.0 < p < 1.0:
            raise ConfigError("nominal Pfa levels must lie in (0, 1)")
        if p * config.trials < 100:
            need = math.ceil(100 / p)
            raise ConfigError(
                f"nominal_pfa={p:g} needs at least {need} trials "
                f"(got {config.trials}); raise 'trials'"
            )
    h0_config = replace(config, alpha=0.0, nominal_pfa=tuple(levels))
    result = run_h0(h0_config, workers=workers)
    return result.calibration
