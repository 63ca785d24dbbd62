import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import naive_kcv, naive_tkcv
from spotcov import (
    CovMatrix,
    IncrementSeries,
    InvalidArgument,
    InvalidState,
    PricePath,
    ThresholdSpec,
    asymptotic_band,
    build_uniform_grid,
    calibrated_threshold,
    default_threshold,
    kcv,
    kernel_by_name,
    log_returns,
    omega,
    spot_covariance_path,
    standardized_errors,
    tkcv,
    uniform_kernel,
    validate_threshold_rate,
)


def _toy_increments():
    g = build_uniform_grid(1.0, 2)
    p = PricePath(grid=g, values=[[0.0], [0.1], [-0.1]])
    return log_returns(p)


class TestKcv:
    def test_hand_example_onesided(self):
        inc = _toy_increments()
        est = kcv(inc, kernel_by_name("onesided"), 1.0, 1.0)
        expected = math.exp(-1.0) * 0.01 + math.exp(-0.5) * 0.04
        assert est.entries[0, 0] == pytest.approx(expected, rel=1e-12)
        assert est.entries[0, 0] == pytest.approx(0.0279400, abs=1e-7)

    def test_zero_increments(self):
        g = build_uniform_grid(1.0, 5)
        inc = IncrementSeries(grid=g, values=np.zeros((5, 2)))
        for name in ("gaussian", "onesided", "beta"):
            est = kcv(inc, kernel_by_name(name), 0.3, 0.5)
            assert np.all(est.entries == 0.0)

    def test_flat_kernel_reduces_to_scaled_realized_cov(self):
        rng = np.random.default_rng(11)
        g = build_uniform_grid(2.0, 64)
        vals = rng.standard_normal((65, 2)).cumsum(axis=0) * 0.01
        inc = log_returns(PricePath(grid=g, values=vals))
        # uniform mass over [0, T] centred at T/2
        flat = uniform_kernel(width=2.0)
        est = kcv(inc, flat, 1.0, 1.0)
        realized = inc.values.T @ inc.values
        assert np.allclose(est.entries, realized / 2.0, rtol=1e-12)

    def test_matches_naive_oracle(self, increments_small):
        inc = increments_small
        taus = [0.3, 1.0, 1.7]
        for name in ("gaussian", "onesided", "beta"):
            for tau in taus:
                est = kcv(inc, kernel_by_name(name), 0.25, tau)
                ref = naive_kcv(
                    inc.left_times.tolist(), inc.values.tolist(), name, 0.25, tau
                )
                assert np.allclose(est.entries, ref, rtol=1e-12, atol=1e-300)

    def test_scale_equivariance(self, increments_small):
        inc = increments_small
        scaled = IncrementSeries(grid=inc.grid, values=3.0 * inc.values)
        a = kcv(inc, kernel_by_name("gaussian"), 0.2, 1.0)
        b = kcv(scaled, kernel_by_name("gaussian"), 0.2, 1.0)
        assert np.allclose(b.entries, 9.0 * a.entries, rtol=1e-12)

    def test_psd_for_nonnegative_kernels(self, increments_small):
        for name in ("gaussian", "onesided", "beta"):
            est = kcv(increments_small, kernel_by_name(name), 0.1, 0.9)
            assert est.is_psd()

    def test_localization_bitwise(self, increments_small):
        # corrupting data outside a compact kernel's support changes nothing
        inc = increments_small
        spec = kernel_by_name("beta")
        h, tau = 0.15, 1.0
        base = kcv(inc, spec, h, tau)
        corrupted = inc.values.copy()
        outside = np.abs(inc.left_times - tau) > h
        corrupted[outside] *= 1e6
        est = kcv(IncrementSeries(grid=inc.grid, values=corrupted), spec, h, tau)
        assert np.array_equal(base.entries, est.entries)

    def test_empty_rejected(self):
        g = build_uniform_grid(1.0, 2)
        inc = IncrementSeries(grid=g, values=np.zeros((2, 1)))
        with pytest.raises(InvalidArgument):
            kcv(inc, kernel_by_name("gaussian"), 0.1, 2.0)  # tau out of range


class TestTkcv:
    def test_huge_threshold_is_bitwise_kcv(self, increments_small):
        inc = increments_small
        thr = ThresholdSpec(c=1e9)
        for name in ("gaussian", "onesided", "beta"):
            spec = kernel_by_name(name)
            a = kcv(inc, spec, 0.2, 1.1)
            b = tkcv(inc, spec, 0.2, 1.1, thr)
            assert np.array_equal(a.entries, b.entries)

    def test_tiny_threshold_zeroes_everything(self, increments_small):
        thr = ThresholdSpec(c=1e-300)
        est = tkcv(increments_small, kernel_by_name("gaussian"), 0.2, 1.1, thr)
        assert np.all(est.entries == 0.0)

    def test_hand_example_norm_mode(self):
        inc = _toy_increments()
        # d * r(delta) must equal 0.15: c = 0.15 / delta**beta with d = 1
        thr = ThresholdSpec(c=0.15 / 0.5**0.49, beta=0.49, mode="norm")
        assert thr.r(0.5) == pytest.approx(0.15, rel=1e-12)
        est = tkcv(inc, kernel_by_name("onesided"), 1.0, 1.0, thr)
        assert est.entries[0, 0] == pytest.approx(math.exp(-1.0) * 0.01, rel=1e-12)
        assert est.entries[0, 0] == pytest.approx(0.0036788, abs=1e-7)

    def test_matches_naive_oracle(self, increments_small):
        inc = increments_small
        d = inc.d
        delta = inc.grid.delta
        for mode in ("squared-norm", "norm"):
            thr = calibrated_threshold(inc, multiple=4.0, mode=mode)
            cutoff = d * thr.r(delta)
            est = tkcv(inc, kernel_by_name("gaussian"), 0.2, 0.8, thr)
            ref = naive_tkcv(
                inc.left_times.tolist(),
                inc.values.tolist(),
                "gaussian",
                0.2,
                0.8,
                cutoff,
                mode,
            )
            assert np.allclose(est.entries, ref, rtol=1e-12, atol=1e-300)

    def test_excluded_set_shrinks_with_c(self, increments_small):
        inc = increments_small
        excluded = []
        for c in (0.5, 1.0, 2.0, 8.0):
            thr = ThresholdSpec(c=c * 1e-2)
            excluded.append(int((~thr.keep_mask(inc)).sum()))
        assert excluded == sorted(excluded, reverse=True)

    def test_scale_equivariance_with_rescaled_threshold(self, increments_small):
        inc = increments_small
        c0 = 2.0
        scaled = IncrementSeries(grid=inc.grid, values=5.0 * inc.values)
        spec = kernel_by_name("gaussian")
        a = tkcv(inc, spec, 0.2, 1.0, ThresholdSpec(c=c0, mode="norm"))
        b = tkcv(scaled, spec, 0.2, 1.0, ThresholdSpec(c=5.0 * c0, mode="norm"))
        assert np.allclose(b.entries, 25.0 * a.entries, rtol=1e-12)
        a2 = tkcv(inc, spec, 0.2, 1.0, ThresholdSpec(c=c0, mode="squared-norm"))
        b2 = tkcv(scaled, spec, 0.2, 1.0, ThresholdSpec(c=25.0 * c0, mode="squared-norm"))
        assert np.allclose(b2.entries, 25.0 * a2.entries, rtol=1e-12)


class TestThresholdSpec:
    def test_validation(self):
        with pytest.raises(InvalidArgument):
            ThresholdSpec(c=1.0, beta=1.0)
        with pytest.raises(InvalidArgument):
            ThresholdSpec(c=1.0, beta=0.0)
        with pytest.raises(InvalidArgument):
            ThresholdSpec(c=-1.0)
        with pytest.raises(InvalidArgument):
            ThresholdSpec(c=1.0, mode="max")

    def test_rate_report_passes_for_small_beta(self):
        thr = ThresholdSpec(c=1.0, beta=0.49)
        report = validate_threshold_rate(thr, 10.0 ** -np.arange(1, 7))
        assert report.passes
        assert report.r_values[-1] < report.r_values[0]
        assert report.ratio_values[-1] < report.ratio_values[0] / 10.0

    def test_rate_report_flags_slow_decay(self):
        thr = ThresholdSpec(c=1.0, beta=0.99)
        report = validate_threshold_rate(thr, 10.0 ** -np.arange(1, 7))
        assert not report.passes
        assert report.r_decreasing  # r itself still vanishes
        assert not report.ratio_decreasing_tail

    def test_rate_report_input_validation(self):
        thr = ThresholdSpec(c=1.0)
        with pytest.raises(InvalidArgument):
            validate_threshold_rate(thr, [0.1, 0.2])
        with pytest.raises(InvalidArgument):
            validate_threshold_rate(thr, [0.1, -0.01])

    def test_default_threshold_formula(self, increments_small):
        inc = increments_small
        thr = default_threshold(inc)
        sq = np.sum(inc.values**2, axis=1)
        expected_c = 9.0 * np.median(sq) / inc.d / inc.grid.delta
        assert thr.c == pytest.approx(expected_c, rel=1e-12)
        # conservative by construction: keeps every increment of this path
        assert thr.keep_mask(inc).all()

    def test_calibrated_threshold_targets_median_multiple(self, increments_small):
        inc = increments_small
        thr = calibrated_threshold(inc, multiple=16.0)
        cutoff = inc.d * thr.r(inc.grid.delta)
        sq = np.sum(inc.values**2, axis=1)
        assert cutoff == pytest.approx(16.0 * np.median(sq), rel=1e-12)


class TestSpotPath:
    def test_single_tau_wraps_kcv(self, increments_small):
        spec = kernel_by_name("gaussian")
        path = spot_covariance_path(increments_small, spec, 0.2, [0.7])
        point = kcv(increments_small, spec, 0.2, 0.7)
        assert np.array_equal(path.values[0], point.entries)

    def test_many_taus_match_pointwise(self, increments_small):
        spec = kernel_by_name("onesided")
        taus = np.linspace(0.2, 1.8, 9)
        path = spot_covariance_path(increments_small, spec, 0.15, taus)
        for j, tau in enumerate(taus):
            assert np.array_equal(
                path.values[j], kcv(increments_small, spec, 0.15, tau).entries
            )

    def test_out_of_range_tau_rejected(self, increments_small):
        with pytest.raises(InvalidArgument):
            spot_covariance_path(
                increments_small, kernel_by_name("gaussian"), 0.2, [0.5, 2.5]
            )


class TestOmega:
    def test_univariate(self):
        om = omega(CovMatrix(entries=[[2.0]]))
        assert om.entries.shape == (1, 1)
        assert om.at(0, 0, 0, 0) == 8.0

    def test_identity_2d(self):
        om = omega(CovMatrix(entries=np.eye(2)))
        assert om.at(0, 0, 0, 0) == 2.0
        assert om.at(0, 1, 0, 1) == 1.0
        assert om.at(0, 0, 0, 1) == 0.0
        assert om.at(0, 0, 1, 1) == 0.0

    def test_bivariate_distinct_block(self):
        skk, skl, sll = 0.05, 0.02, 0.08
        om = omega(CovMatrix(entries=[[skk, skl], [skl, sll]]))
        # distinct elements (kk, kl, ll) of the joint limit law
        assert om.at(0, 0, 0, 0) == pytest.approx(2 * skk**2)
        assert om.at(0, 0, 0, 1) == pytest.approx(2 * skk * skl)
        assert om.at(0, 0, 1, 1) == pytest.approx(2 * skl**2)
        assert om.at(0, 1, 0, 1) == pytest.approx(skk * sll + skl**2)
        assert om.at(0, 1, 1, 1) == pytest.approx(2 * sll * skl)
        assert om.at(1, 1, 1, 1) == pytest.approx(2 * sll**2)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=1, max_value=4), st.integers(min_value=0, max_value=2**31))
    def test_symmetries(self, d, seed):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((d, d))
        om = omega(CovMatrix(entries=a @ a.T))
        assert np.allclose(om.entries, om.entries.T, atol=1e-12)
        for k in range(d):
            for l in range(d):
                for k2 in range(d):
                    for l2 in range(d):
                        assert om.at(k, l, k2, l2) == pytest.approx(om.at(l, k, k2, l2))

    def test_asymmetric_rejected(self):
        with pytest.raises(InvalidArgument):
            omega(np.array([[1.0, 0.5], [0.0, 1.0]]))


class TestBandsAndErrors:
    def test_band_halfwidth_hand_example(self):
        est = CovMatrix(entries=[[1.0]])
        om = omega(CovMatrix(entries=[[1.0]]))  # O = 2
        lo, hi = asymptotic_band(
            est, om, delta=1.0, h=100.0, spec=kernel_by_name("gaussian"), level=0.95
        )
        half = 1.959964 * math.sqrt(2.0 * 0.2820948 * 0.01)
        assert (hi[0, 0] - est.entries[0, 0]) == pytest.approx(half, abs=2e-5)
        assert (hi[0, 0] - est.entries[0, 0]) == pytest.approx(0.1472, abs=2e-4)

    def test_band_width_shrinks_with_level(self):
        est = CovMatrix(entries=[[1.0, 0.2], [0.2, 2.0]])
        om = omega(est)
        spec = kernel_by_name("gaussian")
        lo1, hi1 = asymptotic_band(est, om, 0.001, 0.1, spec, 1e-9)
        assert np.allclose(hi1 - lo1, 0.0, atol=1e-8)
        lo2, hi2 = asymptotic_band(est, om, 0.001, 0.1, spec, 0.99)
        assert np.all(hi2 - lo2 > 0)

    def test_band_level_validation(self):
        est = CovMatrix(entries=[[1.0]])
        with pytest.raises(InvalidArgument):
            asymptotic_band(est, omega(est), 0.01, 0.1, kernel_by_name("gaussian"), 0.0)

    def test_band_invalid_state_on_zero_variance(self):
        est = CovMatrix(entries=[[0.0]])
        with pytest.raises(InvalidState):
            asymptotic_band(est, omega(est), 0.01, 0.1, kernel_by_name("gaussian"), 0.9)

    def test_standardized_errors_zero_and_linear(self):
        truth = CovMatrix(entries=[[0.04, 0.01], [0.01, 0.09]])
        om = omega(truth)
        spec = kernel_by_name("gaussian")
        z0 = standardized_errors([truth], truth, om, 1e-3, 0.05, spec)
        assert np.all(z0 == 0.0)
        bump = CovMatrix(entries=truth.entries + 0.01)
        bump2 = CovMatrix(entries=truth.entries + 0.02)
        z1 = standardized_errors([bump], truth, om, 1e-3, 0.05, spec)
        z2 = standardized_errors([bump2], truth, om, 1e-3, 0.05, spec)
        assert np.allclose(z2, 2.0 * z1, rtol=1e-12)

    def test_standardized_errors_formula(self):
        truth = CovMatrix(entries=[[0.04, 0.01], [0.01, 0.09]])
        om = omega(truth)
        spec = kernel_by_name("onesided")
        est = CovMatrix(entries=truth.entries + np.array([[0.0, 0.005], [0.005, 0.0]]))
        z = standardized_errors([est], truth, om, 2e-3, 0.1, spec)
        expected = (
            math.sqrt(0.1 / 2e-3)
            * 0.005
            / math.sqrt((0.04 * 0.09 + 0.01**2) * 0.5)
        )
        assert z[0, 0, 1] == pytest.approx(expected, rel=1e-12)


def test_oracle_equivalence_random_instances():
    # 100 random instances, d <= 4, n <= 1000, all three kernels
    rng = np.random.default_rng(123)
    names = ("gaussian", "onesided", "beta")
    for trial in range(100):
        d = int(rng.integers(1, 5))
        n = int(rng.integers(3, 1001))
        T = float(rng.uniform(0.5, 3.0))
        g = build_uniform_grid(T, n)
        dx = rng.standard_normal((n, d)) * rng.uniform(0.001, 0.1)
        inc = IncrementSeries(grid=g, values=dx)
        name = names[trial % 3]
        h = float(rng.uniform(0.05, 0.5) * T)
        tau = float(rng.uniform(0.0, T))
        est = kcv(inc, kernel_by_name(name), h, tau)
        ref = naive_kcv(inc.left_times.tolist(), dx.tolist(), name, h, tau)
        assert np.allclose(est.entries, ref, rtol=1e-12, atol=1e-300)
