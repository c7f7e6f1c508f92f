"""Benchmark the compiled detector kernels against the numpy fallback.

Runs both backends on one identical pre-drawn workload, checks that they
agree, and prints a timing table.  Usage:

    python -m cesdet.benchmark --n 4 --m1 16 --m0 128 --trials 20000
"""

from __future__ import annotations

import argparse
from time import perf_counter

import numpy as np

from ._kernels import available_backends, get_backend
from ._rng import substream
from .linalg import cholesky
from .models import CesModel, sample_ces_block


def _workload(n: int, m1: int, m0: int, trials: int, seed: int):
    rng = substream(seed, 77)
    ell = cholesky(np.eye(n, dtype=np.complex128))
    model = CesModel.gaussian()
    v = np.exp(2j * np.pi * 0.1 * np.arange(n)) / np.sqrt(n)
    x0 = sample_ces_block(model, 0.0, v, ell, (trials, m0), rng, rng)
    x1 = sample_ces_block(model, 0.0, v, ell, (trials, m1), rng, rng)
    return x1, x0, v


def run_benchmark(n=4, m1=16, m0=128, trials=20_000, repeat=3, seed=1234) -> list[dict]:
    x1, x0, v = _workload(n, m1, m0, trials, seed)
    flags = dict(want_mglrt=True, want_wald_t1=True, want_kelly=(m1 == 1), want_amf=(m1 == 1))
    rows = []
    reference = None
    for name in available_backends():
        kern = get_backend(name)
        best = np.inf
        out = None
        for _ in range(repeat):
            t0 = perf_counter()
            out = kern.detector_stats(x1, x0, v, **flags)
            best = min(best, perf_counter() - t0)
        max_rel = 0.0
        if reference is None:
            reference = out
        else:
            for key, arr in out.items():
                if key == "kelly_clamped":
                    continue
                ref = reference[key]
                denom = np.maximum(np.abs(ref), 1e-30)
                max_rel = max(max_rel, float(np.max(np.abs(arr - ref) / denom)))
        rows.append(
            {
                "backend": name,
                "seconds": best,
                "trials_per_s": trials / best,
                "max_rel_diff_vs_first": max_rel,
            }
        )
    return rows


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=4)
    parser.add_argument("--m1", type=int, default=16)
    parser.add_argument("--m0", type=int, default=128)
    parser.add_argument("--trials", type=int, default=20_000)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=1234)
    args = parser.parse_args(argv)

    rows = run_benchmark(args.n, args.m1, args.m0, args.trials, args.repeat, args.seed)
    print(f"workload: N={args.n} M1={args.m1} M0={args.m0} trials={args.trials}")
    print(f"{'backend':<10} {'seconds':>10} {'trials/s':>12} {'max rel diff':>14}")
    for row in rows:
        print(
            f"{row['backend']:<10} {row['seconds']:>10.4f} "
            f"{row['trials_per_s']:>12.0f} {row['max_rel_diff_vs_first']:>14.3e}"
        )
    if len(rows) == 2:
        print(f"speedup (native vs fallback): {rows[1]['seconds'] / rows[0]['seconds']:.2f}x")
    if len(rows) == 1:
        print("native backend unavailable; timed fallback only")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
