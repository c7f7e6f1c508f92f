"""Batch command-line front-end.

Subcommands: simulate (H0/H1 Monte Carlo), roc (Pd curves over SNR),
asymptotics (sandwich pipeline report), selftest (fast identity checks).
Exit codes: 0 success, 1 selftest failure, 2 config error, 3 runtime
numerical failure (partial results are still flushed).

Result files are reproducible byte-for-byte from (config, seed, version);
volatile run metadata (timestamps, wall time) lives only in manifest.json.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import sys
from pathlib import Path
from time import perf_counter

import numpy as np

from . import __version__
from ._rng import substream
from .asymptotics import sandwich_report
from .linalg import Dataset, NotPositiveDefiniteError
from .models import standard_complex_normal
from .montecarlo import (
    ConfigError,
    ExperimentNumericalError,
    ROC_CSV_COLUMNS,
    SIMULATE_CSV_COLUMNS,
    config_from_dict,
    roc_csv_text,
    run_h0,
    run_h1,
    simulate_csv_text,
)

EXIT_OK = 0
EXIT_SELFTEST = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _schema_hash() -> str:
    text = ";".join([",".join(SIMULATE_CSV_COLUMNS), ",".join(ROC_CSV_COLUMNS)])
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _load_config(path: Path):
    try:
        raw = path.read_text()
    except OSError as err:
        raise ConfigError(f"{path}: {err}") from err
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}:{err.lineno}:{err.colno}: {err.msg}") from err
    try:
        return config_from_dict(doc)
    except ConfigError as err:
        raise ConfigError(f"{path}: {err}") from err


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")


class _Manifest:
    def __init__(self, args, subcommand: str, seed: int):
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        config_path = getattr(args, "config", None)
        config_text = Path(config_path).read_text() if config_path else ""
        self.doc = {
            "subcommand": subcommand,
            "config_path": str(config_path) if config_path else None,
            "config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
            "output_dir": str(self.out),
            "version": __version__,
            "schema_hash": _schema_hash(),
            "seed": seed,
            "timestamp_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "status": "running",
        }
        self._t0 = perf_counter()
        _write_json(self.out / "manifest.json", self.doc)

    def finalize(self, status: str, **extra) -> None:
        self.doc.update(status=status, wall_time_s=perf_counter() - self._t0, **extra)
        _write_json(self.out / "manifest.json", self.doc)


def _apply_overrides(config, args):
    from dataclasses import replace

    if args.seed is not None:
        config = replace(config, seed=int(args.seed))
    return config


def _write_simulate_outputs(out: Path, result, fmt: str) -> None:
    if fmt in ("json", "both"):
        _write_json(out / "result.json", result.to_json_dict())
    if fmt in ("csv", "both"):
        (out / "result.csv").write_text(simulate_csv_text(result))


def cmd_simulate(args) -> int:
    config = _apply_overrides(_load_config(Path(args.config)), args)
    manifest = _Manifest(args, "simulate", config.seed)
    try:
        if config.alpha == 0:
            result = run_h0(config, workers=args.workers)
        else:
            result = run_h1(config, workers=args.workers)
    except ExperimentNumericalError as err:
        if err.result is not None:
            _write_simulate_outputs(manifest.out, err.result, args.format)
        manifest.finalize("failed_numerical", partial=True, error=str(err))
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    _write_simulate_outputs(manifest.out, result, args.format)
    manifest.finalize("complete", partial=False)
    return EXIT_OK


def cmd_roc(args) -> int:
    config = _apply_overrides(_load_config(Path(args.config)), args)
    manifest = _Manifest(args, "roc", config.seed)
    try:
        result = run_h1(config, workers=args.workers)
    except ExperimentNumericalError as err:
        if err.result is not None and args.format in ("json", "both"):
            _write_json(manifest.out / "result.json", err.result.to_json_dict())
        manifest.finalize("failed_numerical", partial=True, error=str(err))
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    if args.format in ("json", "both"):
        _write_json(manifest.out / "result.json", result.to_json_dict())
    if args.format in ("csv", "both"):
        for det in config.detectors:
            (manifest.out / f"roc_{det}.csv").write_text(roc_csv_text(result, det))
    manifest.finalize("complete", partial=False)
    return EXIT_OK


def cmd_asymptotics(args) -> int:
    config = _apply_overrides(_load_config(Path(args.config)), args)
    manifest = _Manifest(args, "asymptotics", config.seed)
    try:
        report = sandwich_report(
            config.model,
            config.sigma(),
            config.steering(),
            sample_size=config.sample_size,
            rng=config.seed,
        )
    except (NotPositiveDefiniteError, np.linalg.LinAlgError, ValueError) as err:
        manifest.finalize("failed_numerical", error=str(err))
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    doc = report.to_json_dict()
    a_em = report.a[:2, 2:]
    a_em_se = report.a_se[:2, 2:]
    doc["a_eta_mu_max_abs"] = float(np.abs(a_em).max())
    # Cross-block zero check at the block level: Frobenius deviation against
    # the aggregated Monte Carlo standard error (robust to the number of
    # entries, unlike a per-entry 3-sigma sweep).
    doc["a_eta_mu_within_3se"] = bool(
        np.linalg.norm(a_em) <= 3.0 * np.linalg.norm(a_em_se) + 1e-12
    )
    _write_json(manifest.out / "sandwich.json", doc)
    manifest.finalize("complete")
    return EXIT_OK


def _selftest_fixture(seed: int, n: int, m1: int, m0: int) -> Dataset:
    rng = substream(seed, 99)
    primary = standard_complex_normal(rng, (m1, n))
    secondary = standard_complex_normal(rng, (m0, n))
    v = standard_complex_normal(rng, (n,))
    return Dataset(primary=primary, secondary=secondary, steering=v)


def cmd_selftest(args) -> int:
    """Fast identity checks on built-in fixtures; exit 0 iff all hold."""
    from .detectors import amf, kelly, mglrt, wald, wald_explicit
    from .estimators import secondary_scatter

    perturb = float(getattr(args, "perturb", 0.0) or 0.0)
    failures = []

    def check(name: str, lhs: float, rhs: float, tol: float) -> None:
        lhs = lhs * (1.0 + perturb)
        rel = abs(lhs - rhs) / max(abs(rhs), 1e-30)
        status = "PASS" if rel <= tol else "FAIL"
        print(f"selftest {name}: {status} (relative error {rel:.3e}, tol {tol:g})")
        if rel > tol:
            failures.append(name)

    for seed in (11, 22, 33):
        data1 = _selftest_fixture(seed, n=3, m1=1, m0=9)
        s0 = secondary_scatter(data1.secondary)
        x = data1.primary[0]
        check(
            f"kelly-equals-mglrt[seed={seed}]",
            mglrt(data1).statistic,
            kelly(x, s0, data1.steering, data1.m0).statistic,
            1e-10,
        )
        check(
            f"amf-equals-wald-s0[seed={seed}]",
            wald(data1, scatter="s0_over_m0").statistic,
            amf(x, s0, data1.steering, data1.m0).statistic,
            1e-12,
        )
        datam = _selftest_fixture(seed + 1, n=3, m1=5, m0=12)
        check(
            f"wald-forms-agree[seed={seed}]",
            wald(datam, scatter="t1").statistic,
            wald_explicit(datam).statistic,
            1e-12,
        )

    if failures:
        print(f"selftest: {len(failures)} identity check(s) failed: {failures}")
        return EXIT_SELFTEST
    print("selftest: all identity checks passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cesdet",
        description="Monte Carlo experiments for adaptive detection on CES data",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="JSON config file")
            p.add_argument("--out", required=True, help="output directory")
            p.add_argument("--seed", type=int, default=None, help="override config seed")
            p.add_argument("--workers", type=int, default=1,
                           help="worker processes (must not change outputs)")
            p.add_argument("--format", choices=("csv", "json", "both"), default="both")

    p_sim = sub.add_parser("simulate", help="H0/H1 Monte Carlo run")
    add_common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_roc = sub.add_parser("roc", help="Pd-vs-SNR curves")
    add_common(p_roc)
    p_roc.set_defaults(func=cmd_roc)

    p_asy = sub.add_parser("asymptotics", help="sandwich-matrix pipeline report")
    add_common(p_asy)
    p_asy.set_defaults(func=cmd_asymptotics)

    p_self = sub.add_parser("selftest", help="fast built-in identity checks")
    p_self.add_argument("--perturb", type=float, default=0.0,
                        help="perturb one side of each identity (sanity check)")
    p_self.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
