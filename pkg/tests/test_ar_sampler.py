"""Autoregressive sampler: feasibility, densities, entropy, rejection oracle."""

import numpy as np
import pytest
from scipy import stats

from oracles import polygon_area
from polyalloc import ar_sampler, beta4, polytope
from polyalloc.errors import AcceptanceTooLow, OutOfSupport


class TestSample:
    def test_simplex_actions_sum_to_one(self, simplex3, rng):
        prov = ar_sampler.flat_provider()
        for _ in range(200):
            s = ar_sampler.sample(simplex3, prov, None, rng)
            assert s.action.sum() == pytest.approx(1.0, abs=1e-9)
            assert np.all(s.action >= 0.0)

    def test_capped3_feasible_and_complete(self, capped3):
        rng = np.random.default_rng(2)
        prov = ar_sampler.flat_provider()
        acts = np.array(
            [ar_sampler.sample(capped3, prov, None, rng).action for _ in range(10_000)]
        )
        assert np.abs(acts.sum(axis=1) - 1.0).max() <= 1e-9
        assert np.max(polytope.violation_cost(capped3, acts)) <= 1e-6

    def test_walkthrough_intervals(self, capped3):
        ivs = ar_sampler.step_intervals(capped3, [0.3, 0.5, 0.2])
        np.testing.assert_allclose(ivs[0], [0.0, 1.0], atol=1e-9)
        np.testing.assert_allclose(ivs[1], [0.1, 0.7], atol=1e-9)

    def test_batch_matches_single_path_statistics(self, capped3):
        a, iv, lps, forced = ar_sampler.sample_batch(
            capped3, [1.0, 1.0], [1.0, 1.0], 5000, np.random.default_rng(4)
        )
        assert np.max(polytope.violation_cost(capped3, a)) <= 1e-6
        assert not forced.any()
        # batch intervals agree with the sequential walk per sample
        ref = ar_sampler.step_intervals(capped3, a[17])
        np.testing.assert_allclose(iv[17], ref, atol=1e-9)


class TestLogProb:
    def test_simplex_example(self, simplex3):
        prov = ar_sampler.flat_provider()
        got = ar_sampler.log_prob(simplex3, prov, None, [0.3, 0.5, 0.2])
        # step 1 density 1 on [0,1]; step 2 density 1/0.7 on [0, 0.7]
        assert got == pytest.approx(np.log(1.0 / 0.7), abs=1e-9)

    def test_two_entity_beta22(self):
        p = polytope.build([], [], 2)
        prov = ar_sampler.constant_provider([2.0], [2.0])
        got = ar_sampler.log_prob(p, prov, None, [0.5, 0.5])
        assert got == pytest.approx(np.log(1.5), abs=1e-9)

    def test_roundtrip_against_sample(self, capped3):
        rng = np.random.default_rng(6)
        prov = ar_sampler.constant_provider([1.7, 0.8], [2.2, 1.3])
        for _ in range(50):
            s = ar_sampler.sample(capped3, prov, None, rng)
            recomputed = ar_sampler.log_prob(capped3, prov, None, s.action)
            assert recomputed == pytest.approx(s.joint_logp, abs=1e-7)
            cached = ar_sampler.log_prob(
                capped3, prov, None, s.action, cached_intervals=s.intervals
            )
            assert cached == pytest.approx(s.joint_logp, abs=1e-12)

    def test_out_of_support(self, capped3):
        prov = ar_sampler.flat_provider()
        with pytest.raises(OutOfSupport):
            ar_sampler.log_prob(capped3, prov, None, [0.0, 0.3, 0.7])

    def test_density_normalization_chi_square(self, simplex3):
        # histogram of step-1 draws vs exp(log_pdf) mass per bin
        rng = np.random.default_rng(8)
        prov = ar_sampler.constant_provider([2.0, 1.0], [3.0, 1.0])
        draws = np.array(
            [ar_sampler.sample(simplex3, prov, None, rng).action[0] for _ in range(20_000)]
        )
        edges = np.linspace(0.0, 1.0, 21)
        obs, _ = np.histogram(draws, bins=edges)
        cdf = stats.beta(2.0, 3.0).cdf(edges)
        expected = np.diff(cdf) * draws.size
        chi2 = np.sum((obs - expected) ** 2 / expected)
        # 19 dof; 1e-3 upper quantile ~ 43.8
        assert chi2 < 43.8


class TestEmpiricalEntropy:
    def test_simplex_oracle_value(self, simplex3):
        # step 1: uniform on [0,1], entropy 0; step 2: uniform on [0, 1-a1],
        # entropy ln(1-a1).  Batch mean -> E[ln(1-a1)] = -1 by quadrature.
        rng = np.random.default_rng(10)
        prov = ar_sampler.flat_provider()
        batch = [ar_sampler.sample(simplex3, prov, None, rng) for _ in range(10_000)]
        got = ar_sampler.empirical_entropy(batch)
        assert got == pytest.approx(-1.0, abs=0.02)

    def test_empty_batch_raises(self):
        with pytest.raises(ValueError):
            ar_sampler.empirical_entropy([])


class TestRejection:
    def test_capped3_acceptance_matches_area(self, capped3):
        # feasible region in the (a1, a2) plane: 0<=a1, 0<=a2<=0.7,
        # a1+a2<=1, a3=1-a1-a2<=0.6 i.e. a1+a2>=0.4
        region = [(0.4, 0.0), (1.0, 0.0), (0.3, 0.7), (0.0, 0.7), (0.0, 0.4)]
        area_ratio = polygon_area(region) / 0.5
        _, rate = ar_sampler.uniform_rejection_batch(
            capped3, 10_000, np.random.default_rng(12), max_tries=10**5
        )
        assert rate == pytest.approx(area_ratio, abs=0.02)

    def test_accepted_points_feasible(self, capped3):
        pts, _ = ar_sampler.uniform_rejection_batch(
            capped3, 500, np.random.default_rng(13)
        )
        assert np.max(polytope.violation_cost(capped3, pts)) <= 1e-9

    def test_acceptance_too_low(self):
        # thin slab: 0.49 <= a1 <= 0.51 on a 6-simplex is tiny
        p = polytope.build(
            [[1, 0, 0, 0, 0, 0], [-1, 0, 0, 0, 0, 0]], [0.51, -0.49], 6
        )
        with pytest.raises(AcceptanceTooLow):
            ar_sampler.uniform_rejection_batch(
                p, 5000, np.random.default_rng(14), max_tries=2000
            )
