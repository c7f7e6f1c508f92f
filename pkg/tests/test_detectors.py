"""Tests for the four decision statistics and their invariances."""

import numpy as np
import pytest

from cesdet.detectors import amf, kelly, mglrt, wald, wald_explicit
from cesdet.estimators import secondary_scatter
from cesdet.linalg import Dataset
from cesdet.models import CesModel
from cesdet.montecarlo import ExperimentConfig, _run_trials

from helpers import cgauss, close_rel, random_dataset, random_unitary, rng_for


def _dataset(primary, secondary, v):
    return Dataset(primary=primary, secondary=secondary, steering=v)


class TestMglrt:
    def test_zero_primary_gives_zero(self):
        rng = rng_for(50)
        d = _dataset(np.zeros((2, 3), dtype=complex), cgauss(rng, (7, 3)), cgauss(rng, (3,)))
        assert mglrt(d).statistic == 0.0

    def test_single_sample_equals_kelly(self):
        rng = rng_for(51)
        for _ in range(200):
            n = int(rng.integers(2, 6))
            d = random_dataset(rng, n, 1, int(rng.integers(n, 4 * n + 1)), signal=1.0)
            s0 = secondary_scatter(d.secondary)
            a = mglrt(d).statistic
            b = kelly(d.primary[0], s0, d.steering, d.m0).statistic
            assert close_rel(a, b, 1e-10)

    def test_hand_case_direct_determinants(self):
        """N=2, M1=1, v=e1, x=[1+i, 0], S0=I2, M=3: both printed determinant
        forms evaluated directly."""
        x = np.array([1.0 + 1.0j, 0.0])
        v = np.array([1.0, 0.0], dtype=complex)
        d = _dataset(x[None, :], np.eye(2, dtype=complex), v)  # S0 = I, M0 = 2
        s0 = np.eye(2, dtype=complex)
        alpha = np.vdot(v, x) / np.vdot(v, v)  # v^H S0^{-1} x / v^H S0^{-1} v
        t0 = (np.outer(x, x.conj()) + s0) / 3
        r = x - alpha * v
        t1 = (np.outer(r, r.conj()) + s0) / 3
        direct_nn = 2 * 3 * np.log(np.linalg.det(t0).real / np.linalg.det(t1).real)
        sylvester = 2 * 3 * np.log(
            (1 + np.vdot(x, x).real) / (1 + np.vdot(r, r).real)
        )
        got = mglrt(d).statistic
        assert got == pytest.approx(direct_nn, rel=1e-12)
        assert got == pytest.approx(sylvester, rel=1e-12)

    def test_determinant_form_switch_consistent(self):
        """M1 < N and M1 >= N paths agree on the same padded data."""
        rng = rng_for(52)
        d_small = random_dataset(rng, n=5, m1=2, m0=11, signal=0.5)   # M1 < N path
        stat_small = mglrt(d_small).statistic
        # Independent route: N x N determinants computed in the test.
        s0 = secondary_scatter(d_small.secondary)
        from cesdet.estimators import mml_alpha, t0_matrix, t1_matrix

        eta = mml_alpha(d_small.primary, s0, d_small.steering)
        t0 = t0_matrix(d_small.primary, s0, d_small.m)
        t1 = t1_matrix(d_small.primary, s0, d_small.m, eta, d_small.steering)
        direct = 2 * d_small.m * np.log(np.linalg.det(t0).real / np.linalg.det(t1).real)
        assert stat_small == pytest.approx(direct, rel=1e-10)


class TestKelly:
    def test_orthogonal_projection_zero(self):
        v = np.array([1.0, 0.0], dtype=complex)
        x = np.array([0.0, 2.0], dtype=complex)
        assert kelly(x, np.eye(2, dtype=complex), v, 4).statistic == 0.0

    def test_hand_value(self):
        v = np.array([1.0, 0.0], dtype=complex)
        out = kelly(v, np.eye(2, dtype=complex), v, 1)
        assert out.statistic == pytest.approx(4.0 * np.log(2.0), rel=1e-14)

    def test_log_argument_in_unit_interval(self):
        """Cauchy-Schwarz keeps the log argument in (0, 1]; statistic >= 0."""
        rng = rng_for(53)
        n, m0, trials = 3, 6, 10_000
        x = cgauss(rng, (trials, n))
        sec = cgauss(rng, (trials, m0, n))
        v = cgauss(rng, (n,))
        s0 = np.einsum("tma,tmb->tab", sec, sec.conj())
        u = np.linalg.solve(s0, np.broadcast_to(v[:, None], (trials, n, 1)))[:, :, 0]
        w = np.linalg.solve(s0, x[:, :, None])[:, :, 0]
        qvv = np.einsum("a,ta->t", v.conj(), u).real
        p = np.einsum("ta,ta->t", u.conj(), x)
        xsx = np.einsum("ta,ta->t", x.conj(), w).real
        arg = 1.0 - np.abs(p) ** 2 / (qvv * (1.0 + xsx))
        assert np.all(arg > 0.0)
        assert np.all(arg <= 1.0 + 1e-12)
        sample = rng.integers(0, trials, size=50)
        for i in sample:
            assert kelly(x[i], s0[i], v, m0).statistic >= 0.0

    def test_clamp_records_overflow(self):
        v = np.array([1.0, 0.0], dtype=complex)
        out = kelly(1e155 * v, np.eye(2, dtype=complex), v, 3)
        assert out.clamped
        assert np.isfinite(out.statistic)


class TestWald:
    def test_zero_primary_gives_zero(self):
        rng = rng_for(54)
        d = _dataset(np.zeros((3, 2), dtype=complex), cgauss(rng, (5, 2)), cgauss(rng, (2,)))
        assert wald(d).statistic == 0.0

    def test_routes_agree(self):
        rng = rng_for(55)
        for _ in range(100):
            d = random_dataset(rng, n=3, m1=int(rng.integers(1, 6)), m0=9, signal=1.0)
            a = wald(d, scatter="t1").statistic
            b = wald_explicit(d).statistic
            assert close_rel(a, b, 1e-12)

    def test_single_sample_s0_scatter_equals_amf(self):
        rng = rng_for(56)
        for _ in range(100):
            d = random_dataset(rng, n=4, m1=1, m0=10, signal=1.0)
            s0 = secondary_scatter(d.secondary)
            a = wald(d, scatter="s0_over_m0").statistic
            b = amf(d.primary[0], s0, d.steering, d.m0).statistic
            assert close_rel(a, b, 1e-12)

    def test_unknown_scatter_rejected(self):
        rng = rng_for(57)
        d = random_dataset(rng, 2, 1, 4)
        with pytest.raises(ValueError, match="scatter"):
            wald(d, scatter="identity")


class TestAmf:
    def test_zero_input(self):
        v = np.array([1.0, 0.0], dtype=complex)
        assert amf(np.zeros(2, dtype=complex), np.eye(2, dtype=complex), v, 5).statistic == 0.0

    def test_hand_value(self):
        m0 = 7
        v = np.array([1.0, 0.0], dtype=complex)
        out = amf(v, m0 * np.eye(2, dtype=complex), v, m0)
        assert out.statistic == pytest.approx(2.0, rel=1e-14)

    def test_monotone_in_signal_scale(self):
        rng = rng_for(58)
        v = cgauss(rng, (3,))
        s0 = secondary_scatter(cgauss(rng, (8, 3)))
        scales = np.linspace(0.1, 4.0, 12)
        amf_vals = [amf(c * v, s0, v, 8).statistic for c in scales]
        kelly_vals = [kelly(c * v, s0, v, 8).statistic for c in scales]
        assert np.all(np.diff(amf_vals) > 0)
        assert np.all(np.diff(kelly_vals) > 0)


class TestInvariances:
    @pytest.mark.parametrize("c", [1e-3, 0.1, 7.0, 1e3])
    def test_scale_invariance(self, c):
        rng = rng_for(59)
        d = random_dataset(rng, n=3, m1=1, m0=8, signal=1.0)
        scaled = _dataset(c * d.primary, c * d.secondary, d.steering)
        s0 = secondary_scatter(d.secondary)
        s0_c = secondary_scatter(scaled.secondary)
        pairs = [
            (mglrt(d).statistic, mglrt(scaled).statistic),
            (kelly(d.primary[0], s0, d.steering, 8).statistic,
             kelly(scaled.primary[0], s0_c, d.steering, 8).statistic),
            (wald(d).statistic, wald(scaled).statistic),
            (amf(d.primary[0], s0, d.steering, 8).statistic,
             amf(scaled.primary[0], s0_c, d.steering, 8).statistic),
        ]
        for a, b in pairs:
            assert close_rel(a, b, 1e-10)

    def test_unitary_invariance(self):
        rng = rng_for(60)
        d = random_dataset(rng, n=4, m1=1, m0=9, signal=1.0)
        u = random_unitary(rng, 4)
        rot = _dataset(d.primary @ u.T, d.secondary @ u.T, u @ d.steering)
        s0 = secondary_scatter(d.secondary)
        s0_r = secondary_scatter(rot.secondary)
        pairs = [
            (mglrt(d).statistic, mglrt(rot).statistic),
            (kelly(d.primary[0], s0, d.steering, 9).statistic,
             kelly(rot.primary[0], s0_r, rot.steering, 9).statistic),
            (wald(d).statistic, wald(rot).statistic),
            (amf(d.primary[0], s0, d.steering, 9).statistic,
             amf(rot.primary[0], s0_r, rot.steering, 9).statistic),
        ]
        for a, b in pairs:
            assert close_rel(a, b, 1e-10)


class TestAsymptoticBehaviour:
    def test_mglrt_wald_gap_shrinks(self):
        """Median |MGLRT - W| decreases through M1 = M0/4 in {16, 64, 256}."""
        medians = []
        for m1 in (16, 64, 256):
            cfg = ExperimentConfig(
                n=4, m1=m1, m0=4 * m1, model=CesModel.complex_t(5.0),
                trials=2000, seed=61, detectors=("mglrt", "wald"),
            )
            acc = _run_trials(cfg, 0.0)
            gap = np.abs(acc.statistics("mglrt") - acc.statistics("wald"))
            medians.append(np.median(gap))
        assert medians[0] > medians[1] > medians[2]

    def test_null_law_smoke(self):
        """Loose sanity bound on the Gaussian null KS distance (the tight
        acceptance-geometry check lives in the acceptance suite)."""
        from cesdet.asymptotics import chi2_cdf
        from cesdet.montecarlo import ks_distance

        cfg = ExperimentConfig(n=4, m1=16, m0=128, model=CesModel.gaussian(),
                               trials=2000, seed=62, detectors=("mglrt",))
        acc = _run_trials(cfg, 0.0)
        assert ks_distance(np.sort(acc.statistics("mglrt")), chi2_cdf) < 0.1
