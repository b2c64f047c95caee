import numpy as np
import pytest

from dmmot.analysis import (
    DegenerateOutputError,
    MapEstimate,
    circular_distance,
    circular_map_extract,
    circular_mean,
    identity_estimate,
    map_error,
    pair_marginal,
    terminal_coupling,
)
from dmmot.grid import GridSpec, StaggeredField, marginalize
from dmmot.measures import ValidationError, product_measure
from dmmot.oracle import analytic_map, preset_marginal


def random_coupling(rng, shape):
    m = rng.random(shape)
    return m / m.sum()


class TestTerminalCoupling:
    def test_nonnegative(self, rng):
        g = GridSpec(2, 2, 4)
        u = StaggeredField.zeros(g)
        u.pi_s[-1] = random_coupling(rng, (4, 4))
        out = terminal_coupling(u)
        assert out.clipped_mass == 0.0
        np.testing.assert_array_equal(out.mass, u.pi_s[-1] / u.pi_s[-1].sum())

    def test_clipped_entry(self):
        last = np.full((3, 3), 1.01 / 8)
        last[1, 1] = -0.01
        out = terminal_coupling(last)
        assert out.clipped_mass == pytest.approx(0.01, abs=1e-15)
        assert out.mass[1, 1] == 0.0 and out.mass.sum() == pytest.approx(1.0, abs=1e-15)

    def test_degenerate(self):
        with pytest.raises(DegenerateOutputError):
            terminal_coupling(-np.ones((2, 2)))
        with pytest.raises(DegenerateOutputError):
            terminal_coupling(np.full((2, 2), np.nan))


class TestPairMarginal:
    def test_two_axes_identity(self, rng):
        c = random_coupling(rng, (5, 5))
        np.testing.assert_array_equal(pair_marginal(c, 0, 1), c)
        np.testing.assert_array_equal(pair_marginal(c, 1, 0), c.T)

    def test_product(self, rng):
        mus = [random_coupling(rng, 4) for _ in range(3)]
        np.testing.assert_allclose(pair_marginal(product_measure(mus), 0, 2), np.outer(mus[0], mus[2]), atol=1e-15)

    def test_mass(self, rng):
        for _ in range(10):
            c = random_coupling(rng, (4, 5, 3, 2))
            assert abs(pair_marginal(c, 3, 1).sum() - 1) <= 1e-14
            np.testing.assert_allclose(pair_marginal(c, 2, 0).sum(axis=1), marginalize(c, 2), atol=1e-15)

    @pytest.mark.parametrize("ij", [(0, 0), (0, 3), (-1, 1)])
    def test_invalid(self, rng, ij):
        with pytest.raises(ValidationError):
            pair_marginal(random_coupling(rng, (3, 3, 3)), *ij)


def pair_with_rows(rows, n):
    """Pair marginal with row ``i`` spread as ``{column: mass}``."""
    pair = np.zeros((n, n))
    for i, spec in rows.items():
        for j, m in spec.items():
            pair[i, j] = m
    return pair


class TestCircularMap:
    def test_single_atom(self):
        n = 10
        est = circular_map_extract(pair_with_rows({4: {3: 0.1}}, n))
        assert est.values[4] == pytest.approx(0.3, abs=1e-15) and est.valid[4]
        assert not est.valid[0] and np.isnan(est.values[0])

    def test_symmetric_pair(self):
        n = 10
        est = circular_map_extract(pair_with_rows({2: {1: 0.05, 5: 0.05}}, n))
        assert est.values[2] == pytest.approx(0.3, abs=1e-14)

    def test_antipodal(self):
        n = 10
        est = circular_map_extract(pair_with_rows({2: {0: 0.05, 5: 0.05}}, n))
        assert not est.valid[2]

    def test_circular_mean_examples(self):
        assert circular_mean([0.1, 0.5], [0.5, 0.5])[0] == pytest.approx(0.3, abs=1e-14)
        assert circular_mean([0.0, 0.5], [0.5, 0.5])[1] <= 1e-15
        # wraps into [0, 1)
        assert circular_mean([0.95, 0.05], [0.6, 0.4])[0] == pytest.approx(0.99, abs=0.01)

    def test_equivariance(self, rng):
        n = 12
        pair = random_coupling(rng, (n, n)) ** 3
        pair /= pair.sum()
        ref = analytic_map(preset_marginal("paper_mu1", n), preset_marginal("paper_mu2", n))
        base = circular_map_extract(pair)
        for s in range(1, n):
            shifted = circular_map_extract(np.roll(pair, s, axis=1))
            np.testing.assert_array_equal(shifted.valid, base.valid)
            assert np.max(circular_distance(shifted.values[base.valid], base.values[base.valid] + s / n)) <= 1e-12
            w = np.ones(n) / n
            assert map_error(shifted, (ref + s / n) % 1.0, w)["l1"] == pytest.approx(map_error(base, ref, w)["l1"],
                                                                                        abs=1e-12)

    def test_target_conditioning(self):
        pair = pair_with_rows({1: {2: 0.25}}, 4)
        mu1 = np.full(4, 0.25)
        est = circular_map_extract(pair, mu1, condition_on="target_mu1")
        assert est.values[1] == pytest.approx(0.5, abs=1e-15)
        with pytest.raises(ValidationError):
            circular_map_extract(pair, condition_on="target_mu1")
        with pytest.raises(ValidationError):
            circular_map_extract(pair, condition_on="median")


class TestMapError:
    def test_equal(self):
        est = identity_estimate(8)
        assert map_error(est, est.values, np.ones(8) / 8) == {"l1": 0.0, "linf": 0.0, "coverage": 1.0}

    def test_wraparound(self):
        assert circular_distance(0.05, 0.95) == pytest.approx(0.1, abs=1e-15)
        est = MapEstimate(np.array([0.05]), np.array([True]))
        assert map_error(est, [0.95], [1.0])["linf"] == pytest.approx(0.1, abs=1e-15)

    def test_coverage(self):
        est = MapEstimate(np.array([0.1, np.nan]), np.array([True, False]))
        out = map_error(est, [0.2, 0.0], [0.75, 0.25])
        assert out["coverage"] == 0.75 and out["l1"] == pytest.approx(0.1, abs=1e-15)

    def test_nothing_valid(self):
        est = MapEstimate(np.full(3, np.nan), np.zeros(3, dtype=bool))
        out = map_error(est, np.zeros(3), np.ones(3) / 3)
        assert out["coverage"] == 0.0 and np.isnan(out["l1"])

    def test_pseudometric(self, rng):
        n = 20
        w = random_coupling(rng, n)
        for _ in range(50):
            a, b, c = (rng.random(n) for _ in range(3))
            ea, eb = MapEstimate(a, np.ones(n, bool)), MapEstimate(b, np.ones(n, bool))
            dab, dba = map_error(ea, b, w)["l1"], map_error(eb, a, w)["l1"]
            assert dab == pytest.approx(dba, abs=1e-12)
            assert map_error(ea, a, w)["l1"] == 0.0
            assert dab <= map_error(ea, c, w)["l1"] + map_error(MapEstimate(c, np.ones(n, bool)), b, w)["l1"] + 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            map_error(identity_estimate(3), np.zeros(4), np.ones(3))
