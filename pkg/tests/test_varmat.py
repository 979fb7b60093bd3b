import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_trace, random_trace
from ivtest.varmat import (
    compute_dif,
    compute_variance_matrix,
    concentration_report,
    hoeffding_bound,
    matrix_to_csv,
    matrix_to_f64,
    observed_f_plus,
    proportion_sweep,
    proposition2_check,
    subsample_matrix,
    subsample_objects,
)
from oracles import variance_matrix_oracle


class TestDif:
    def test_self_comparison_is_zero(self, rng):
        tr = random_trace(rng)
        assert np.array_equal(compute_dif(tr, "CONF", "max", 2, 2), np.zeros(tr.m))

    def test_direct_subtraction(self):
        tr = make_trace({("CONF", "max"): [[0.9, 0.8], [0.7, 0.8], [0.1, 0.2]]})
        dif = compute_dif(tr, "CONF", "max", 0, 1)
        assert np.allclose(dif, [np.float32(0.9) - np.float32(0.7), 0.0])

    def test_antisymmetry(self, rng):
        tr = random_trace(rng)
        a = compute_dif(tr, "CONF", "max", 1, 3)
        b = compute_dif(tr, "CONF", "max", 3, 1)
        assert np.array_equal(a, -b)

    def test_missing_plane(self, rng):
        tr = random_trace(rng)
        with pytest.raises(Exception, match="missing signal plane"):
            compute_dif(tr, "CONV-9", "max", 0, 1)


class TestVarianceMatrix:
    def test_constant_signals_zero_matrix(self):
        tr = make_trace({("CONF", "max"): np.full((5, 4), 3.25)})
        m = compute_variance_matrix(tr, "CONF", "max")
        assert np.array_equal(m.delta, np.zeros((5, 5)))

    def test_hand_summation_example(self):
        # n+1=3, m=2, g=[[1,1],[1,3],[2,2]]
        tr = make_trace({("CONF", "max"): [[1.0, 1.0], [1.0, 3.0], [2.0, 2.0]]})
        d = compute_variance_matrix(tr, "CONF", "max").delta
        assert d[1, 0] == pytest.approx(math.sqrt(2.0), abs=1e-12)
        assert d[2, 0] == pytest.approx(1.0, abs=1e-12)
        assert d[2, 1] == pytest.approx(1.0, abs=1e-12)

    def test_matches_naive_oracle(self, rng):
        tr = random_trace(rng, n1=7, m=9)
        d = compute_variance_matrix(tr, "CONF", "max").delta
        expected = variance_matrix_oracle(tr.plane("CONF", "max").tolist())
        assert np.allclose(d, expected, rtol=1e-12, atol=1e-12)

    def test_symmetry_and_zero_diagonal_exact(self, rng):
        for _ in range(10):
            tr = random_trace(rng, n1=9, m=5)
            d = compute_variance_matrix(tr, "CONF", "max").delta
            assert np.array_equal(d, d.T)
            assert np.all(np.diag(d) == 0.0)
            assert np.all(d >= 0) and np.isfinite(d).all()

    def test_object_permutation_invariant(self, rng):
        g = rng.normal(size=(5, 12)).astype(np.float32)
        perm = rng.permutation(12)
        d1 = compute_variance_matrix(make_trace({("CONF", "max"): g}), "CONF", "max").delta
        d2 = compute_variance_matrix(
            make_trace({("CONF", "max"): g[:, perm]}), "CONF", "max"
        ).delta
        assert np.allclose(d1, d2, rtol=1e-12, atol=1e-15)

    @given(c=st.floats(min_value=0.01, max_value=100.0))
    @settings(max_examples=25, deadline=None)
    def test_scale_equivariance(self, c):
        rng = np.random.default_rng(7)
        g = rng.normal(size=(5, 6))
        d1 = compute_variance_matrix(make_trace({("CONF", "max"): g}), "CONF", "max").delta
        d2 = compute_variance_matrix(
            make_trace({("CONF", "max"): np.float32(c) * g.astype(np.float32)}), "CONF", "max"
        ).delta
        scale = np.float64(np.float32(c))
        assert np.allclose(d2, scale * d1, rtol=1e-6)  # f32 storage limits precision

    def test_adding_zero_dif_object_never_increases_delta(self, rng):
        g = np.abs(rng.normal(size=(5, 6)))
        extended = np.hstack([g, np.full((5, 1), 2.0)])  # new object, dif == 0 everywhere
        d1 = compute_variance_matrix(make_trace({("CONF", "max"): g}), "CONF", "max").delta
        d2 = compute_variance_matrix(make_trace({("CONF", "max"): extended}), "CONF", "max").delta
        assert np.all(d2 <= d1 + 1e-12)

    def test_empty_subset_rejected(self, rng):
        tr = random_trace(rng)
        with pytest.raises(ValueError, match="empty"):
            compute_variance_matrix(tr, "CONF", "max", object_subset=[])


class TestSubsample:
    def test_floor_count(self, rng):
        assert subsample_objects(10, 90, seed=0).size == 9
        assert subsample_objects(10, 15, seed=0).size == 1

    def test_same_seed_identical(self, rng):
        tr = random_trace(rng, m=10)
        m1 = subsample_matrix(tr, "CONF", "max", 90, seed=3)
        m2 = subsample_matrix(tr, "CONF", "max", 90, seed=3)
        assert np.array_equal(m1.delta, m2.delta)
        assert np.array_equal(m1.objects, m2.objects)

    def test_constant_signals_zero(self):
        tr = make_trace({("CONF", "max"): np.full((3, 8), 1.5)})
        assert np.array_equal(subsample_matrix(tr, "CONF", "max", 50, 0).delta, np.zeros((3, 3)))

    def test_r_bounds(self, rng):
        tr = random_trace(rng)
        with pytest.raises(ValueError):
            subsample_matrix(tr, "CONF", "max", 0, 0)
        with pytest.raises(ValueError):
            subsample_matrix(tr, "CONF", "max", 100, 0)

    def test_too_small_subset(self):
        tr = make_trace({("CONF", "max"): np.zeros((3, 2))})
        with pytest.raises(ValueError, match="empty"):
            subsample_matrix(tr, "CONF", "max", 10, 0)


class TestHoeffding:
    def test_reference_value(self):
        # 2 * exp(-2 * 100 * 0.2^2 / 1) = 2 * e^-8
        assert hoeffding_bound(1.0, 100, 0.2) == pytest.approx(2 * math.exp(-8), rel=1e-12)

    def test_monotone_in_epsilon(self):
        values = [hoeffding_bound(1.0, 50, e) for e in (0.01, 0.05, 0.1, 0.5, 1.0)]
        assert all(a >= b for a, b in zip(values, values[1:]))
        assert values[-1] < 1e-20

    def test_clamped_at_one(self):
        assert hoeffding_bound(1.0, 10, 1e-9) == 1.0

    def test_rejects_nonpositive(self):
        for bad in [(0, 10, 0.1), (1, 0, 0.1), (1, 10, 0)]:
            with pytest.raises(ValueError):
                hoeffding_bound(*bad)


class TestConcentration:
    def test_constant_signals_zero_deviations(self):
        tr = make_trace({("CONF", "max"): np.full((3, 20), 2.0)})
        report = concentration_report(tr, "CONF", "max", trials=5, r=50, seed=0)
        assert report["deviation_quantiles"]["max"] == 0.0

    def test_deviations_shrink_towards_full(self, rng):
        tr = random_trace(rng, n1=5, m=200)
        small = concentration_report(tr, "CONF", "max", trials=20, r=20, seed=0)
        big = concentration_report(tr, "CONF", "max", trials=20, r=95, seed=0)
        assert big["deviation_quantiles"]["p90"] < small["deviation_quantiles"]["p90"]

    def test_violation_rate_below_bound(self, rng):
        # sub-gaussian signals; the empirical rate must respect the bound
        g = 0.25 * rng.normal(size=(5, 400))
        tr = make_trace({("CONF", "max"): g})
        report = concentration_report(tr, "CONF", "max", trials=200, r=80, seed=1, epsilon=0.05)
        assert report["violation_rate"] <= report["bound_at_epsilon"]

    def test_f_plus_is_observed_max_dif(self, rng):
        tr = random_trace(rng)
        g = tr.plane("CONF", "max")
        brute = max(
            abs(g[i, k] - g[j, k])
            for i in range(g.shape[0])
            for j in range(g.shape[0])
            for k in range(g.shape[1])
        )
        assert observed_f_plus(tr, "CONF", "max") == pytest.approx(brute, rel=1e-12)


class TestProportionSweep:
    def test_single_full_proportion(self, rng):
        tr = random_trace(rng, m=20)
        sweep = proportion_sweep(tr, "CONF", "max", [100], seed=0)
        assert len(sweep) == 1
        full = compute_variance_matrix(tr, "CONF", "max")
        assert np.array_equal(sweep[0][1].delta, full.delta)

    def test_features_present_per_proportion(self, rng):
        tr = random_trace(rng, m=30)
        sweep = proportion_sweep(tr, "CONF", "max", [40, 70, 100], seed=0)
        assert [p for p, _, _ in sweep] == [40, 70, 100]
        for _, _, feats in sweep:
            assert len(feats) == 16
            assert all(np.isfinite(v) for v in feats.values())

    def test_bad_proportion(self, rng):
        tr = random_trace(rng)
        with pytest.raises(ValueError):
            proportion_sweep(tr, "CONF", "max", [0], seed=0)


class TestProposition2:
    def test_identity_on_random_traces(self, rng):
        for _ in range(20):
            tr = random_trace(rng, n1=5, m=int(rng.integers(2, 30)))
            lhs, rhs, err = proposition2_check(tr, "CONF", "max", 1, 3)
            assert err <= 1e-9 * max(1.0, abs(lhs))

    def test_equal_rows_give_zero(self):
        g = np.vstack([np.arange(4.0)] * 3)
        tr = make_trace({("CONF", "max"): g})
        lhs, rhs, err = proposition2_check(tr, "CONF", "max", 0, 2)
        assert lhs == rhs == 0.0

    def test_same_index(self, rng):
        tr = random_trace(rng)
        lhs, rhs, err = proposition2_check(tr, "CONF", "max", 2, 2)
        assert lhs == 0.0 and err <= 1e-12


class TestExports:
    def test_csv_shape_and_header(self, rng):
        tr = random_trace(rng, n1=3)
        m = compute_variance_matrix(tr, "CONF", "max")
        lines = matrix_to_csv(m).strip().split("\n")
        assert lines[0] == "i,j,delta"
        assert len(lines) == 1 + 9

    def test_f64_round_trips(self, rng):
        tr = random_trace(rng, n1=3)
        m = compute_variance_matrix(tr, "CONF", "max")
        back = np.frombuffer(matrix_to_f64(m), dtype="<f8").reshape(3, 3)
        assert np.array_equal(back, m.delta)
