"""De-bias fitting and uniformity diagnostics."""

import numpy as np
import pytest

from polyalloc import debias, polytope


class TestFit:
    def test_simplex3_stick_breaking(self, simplex3):
        terms = debias.fit(simplex3, 20_000, np.random.default_rng(1))
        assert terms.alphas[0] == pytest.approx(1.0, rel=0.05)
        assert terms.betas[0] == pytest.approx(2.0, rel=0.05)
        assert terms.alphas[1] == pytest.approx(1.0, rel=0.05)
        assert terms.betas[1] == pytest.approx(1.0, rel=0.05)

    def test_hash_binds_polytope(self, capped3):
        terms = debias.fit(capped3, 2000, np.random.default_rng(2))
        assert terms.polytope_hash == capped3.digest()
        assert terms.sample_count == 2000

    def test_small_k_rejected(self, simplex3):
        with pytest.raises(ValueError):
            debias.fit(simplex3, 100, np.random.default_rng(0))


class TestUniformity:
    def test_seven_simplex_means(self):
        p = polytope.build([], [], 7)
        rng = np.random.default_rng(3)
        terms = debias.fit(p, 10_000, rng)
        rep = debias.uniformity_report(p, terms, 10_000, rng)
        assert np.abs(rep.means - 1.0 / 7.0).max() <= 0.02

    def test_capped3_matches_rejection_oracle(self, capped3):
        rng = np.random.default_rng(4)
        terms = debias.fit(capped3, 10_000, rng)
        rep = debias.uniformity_report(capped3, terms, 10_000, rng)
        assert rep.max_mean_deviation <= 0.03
        assert "oracle" in rep.summary()


class TestSerialization:
    def test_roundtrip(self, simplex3, tmp_path):
        terms = debias.fit(simplex3, 2000, np.random.default_rng(5))
        path = tmp_path / "terms.json"
        debias.save(terms, path)
        loaded = debias.load(path)
        np.testing.assert_array_equal(loaded.alphas, terms.alphas)
        np.testing.assert_array_equal(loaded.betas, terms.betas)
        assert loaded.polytope_hash == terms.polytope_hash
        assert loaded.sample_count == terms.sample_count
