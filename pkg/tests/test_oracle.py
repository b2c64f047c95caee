import numpy as np
import pytest
from scipy import integrate

from dmmot.cost import CostKind, QuadraticCost, static_cost
from dmmot.measures import CouplingTable, ValidationError
from dmmot.oracle import (
    PRESETS,
    analytic_map,
    cdf,
    comonotone_coupling,
    preset_density,
    preset_marginal,
    quantile,
    static_optimum,
)

PAIR2 = QuadraticCost(CostKind.QUADRATIC_PAIRWISE, 2)

# (pi/2 + 0.2) / 1.2, evaluated to 30 digits
MU1_AT_HALF = 1.47566360566241384935943474303
# int_0^1 (F^{-1}(q) - q)^2 dq for the tent density: 1/120 in closed form
TENT_VS_UNIFORM = 1.0 / 120.0


def northwest_corner(a, b):
    """Coupling of ``a`` and ``b`` filled in the order the cells are listed."""
    a, b = a.copy(), b.copy()
    i = j = 0
    out = np.zeros((len(a), len(b)))
    while i < len(a) and j < len(b):
        m = min(a[i], b[j])
        out[i, j] += m
        a[i] -= m
        b[j] -= m
        if a[i] <= 1e-18:
            i += 1
        else:
            j += 1
    return out


class TestPresets:
    @pytest.mark.parametrize("name", PRESETS)
    @pytest.mark.parametrize("n", [4, 10, 33])
    def test_normalized(self, name, n):
        mu = preset_marginal(name, n)
        assert abs(mu.sum() - 1) <= 1e-14 and mu.min() >= 0

    def test_mu1_midpoint(self):
        assert preset_density("paper_mu1", 0.5) == pytest.approx(MU1_AT_HALF, abs=1e-14)

    def test_mu3_left_closed(self):
        assert preset_density("paper_mu3", 0.25) == 2.0
        assert preset_density("paper_mu3", 0.5) == 0.0
        assert preset_density("paper_mu3", 0.75) == 2.0

    @pytest.mark.parametrize("name", ["paper_mu1", "paper_mu2", "paper_mu3"])
    def test_densities_integrate_to_one(self, name):
        val, _ = integrate.quad(lambda x: preset_density(name, x), 0, 1, points=[0.25, 0.5, 0.75])
        assert val == pytest.approx(1.0, abs=1e-10)

    def test_invalid(self):
        with pytest.raises(ValidationError):
            preset_marginal("gaussian", 4)
        with pytest.raises(ValidationError):
            preset_marginal("paper_mu1", 4, delta=-0.1)


class TestCdf:
    def test_uniform(self):
        n = 8
        c = cdf(np.ones(n) / n)
        edges = np.arange(n + 1) / n
        np.testing.assert_allclose(c(edges), edges, atol=1e-15)
        q = np.linspace(0, 1, 17)
        np.testing.assert_allclose(quantile(c, q), q, atol=1e-15)

    @pytest.mark.parametrize("n", [8, 20, 50])
    def test_tent_half(self, n):
        # left-edge sampling puts the value at exactly 0.5 - 1/n
        assert abs(cdf(preset_marginal("paper_mu2", n))(0.5) - 0.5) <= 1 / n + 1e-12

    @pytest.mark.parametrize("name", PRESETS)
    def test_quantile_monotone(self, name):
        q = np.linspace(0, 1, 1001)
        v = quantile(cdf(preset_marginal(name, 12)), q)
        assert np.all(np.diff(v) >= 0)

    def test_quantile_range(self):
        with pytest.raises(ValidationError):
            quantile(cdf(np.ones(3) / 3), 1.5)

    def test_quantile_inverts_cdf(self):
        c = cdf(preset_marginal("paper_mu1", 10))
        x = np.linspace(0, 1, 41)
        np.testing.assert_allclose(quantile(c, c(x)), x, atol=1e-12)


class TestAnalyticMap:
    @pytest.mark.parametrize("name", ["paper_mu1", "uniform"])
    def test_identity(self, name):
        mu = preset_marginal(name, 16)
        T = analytic_map(mu, mu)
        pos = mu > 0
        np.testing.assert_allclose(T[pos], (np.arange(16) / 16)[pos], atol=1e-12)

    @pytest.mark.parametrize("n", [8, 16, 32])
    def test_uniform_to_tent_midpoint(self, n):
        T = analytic_map(np.ones(n) / n, preset_marginal("paper_mu2", n))
        assert abs(T[n // 2] - 0.5) <= 1 / n

    @pytest.mark.parametrize("a", PRESETS)
    @pytest.mark.parametrize("b", PRESETS)
    def test_monotone(self, a, b):
        T = analytic_map(preset_marginal(a, 15), preset_marginal(b, 15))
        assert np.all(np.diff(T) >= -1e-12)

    @pytest.mark.parametrize("target", ["paper_mu2", "paper_mu3"])
    @pytest.mark.parametrize("n", [10, 20, 40])
    def test_pushforward(self, target, n):
        mu1, mul = preset_marginal("paper_mu1", n), preset_marginal(target, n)
        # cell [x_j, x_{j+1}) goes to [T_j, T_{j+1}]; spread its mass uniformly there and bin
        T = np.append(analytic_map(mu1, mul), 1.0)
        edges = np.arange(n + 1) / n
        lo, hi = T[:-1, None], T[1:, None]
        overlap = np.clip(np.minimum(hi, edges[1:]) - np.maximum(lo, edges[:-1]), 0, None)
        width = (hi - lo)[:, 0]
        share = np.where(width[:, None] > 0, overlap / np.where(width > 0, width, 1)[:, None],
                         (np.floor(lo * n) == np.arange(n)))
        pushed = mu1 @ share
        assert 0.5 * np.abs(pushed - mul).sum() <= 2 / n


class TestComonotone:
    def test_two_point(self):
        mu = np.array([0.5, 0.5])
        gamma = comonotone_coupling([mu, mu])
        np.testing.assert_array_equal(gamma.indices, [[0, 0], [1, 1]])
        np.testing.assert_allclose(gamma.mass, [0.5, 0.5])

    @pytest.mark.parametrize("k", [2, 3, 4])
    def test_identical_is_diagonal(self, k):
        mu = preset_marginal("paper_mu1", 9)
        gamma = comonotone_coupling([mu] * k)
        assert np.all(gamma.indices == gamma.indices[:, :1])
        assert static_cost(gamma, QuadraticCost(CostKind.QUADRATIC_PAIRWISE, k), 9) == 0.0

    @pytest.mark.parametrize("k", [2, 3])
    def test_marginals_reproduced(self, k):
        n = 12
        mus = [preset_marginal(name, n) for name in PRESETS[:k]]
        dense = comonotone_coupling(mus).to_dense(n)
        for l, mu in enumerate(mus):
            axes = tuple(a for a in range(k) if a != l)
            assert 0.5 * np.abs(dense.sum(axis=axes) - mu).sum() <= 1e-12

    @pytest.mark.parametrize("n", [10, 20, 40])
    def test_tent_against_uniform(self, n):
        gamma = comonotone_coupling([np.ones(n) / n, preset_marginal("paper_mu2", n)])
        # 10^6-point quadrature of the continuous quantile coupling
        q = (np.arange(10**6) + 0.5) / 10**6
        tent_q = np.where(q < 0.5, np.sqrt(q / 2), 1 - np.sqrt((1 - q) / 2))
        quad = np.mean((tent_q - q) ** 2)
        assert quad == pytest.approx(TENT_VS_UNIFORM, abs=1e-9)
        assert abs(static_cost(gamma, PAIR2, n) - quad) <= 2 / n


class TestStaticOptimum:
    def test_identical(self):
        mu = preset_marginal("paper_mu3", 8)
        assert static_optimum([mu, mu, mu]) == 0.0

    @pytest.mark.parametrize("n", [10, 20, 40])
    def test_uniform_against_point(self, n):
        delta = np.zeros(n)
        delta[n // 2] = 1.0
        assert abs(static_optimum([np.ones(n) / n, delta]) - 1 / 12) <= 2 / n

    def test_relabel_invariant(self):
        mus = [preset_marginal(name, 10) for name in ("paper_mu1", "paper_mu2", "paper_mu3")]
        base = static_optimum(mus)
        for order in ((1, 0, 2), (2, 1, 0), (1, 2, 0)):
            assert static_optimum([mus[i] for i in order]) == base

    def test_lower_bounds_random_couplings(self, rng):
        n = 10
        a, b = preset_marginal("paper_mu1", n), preset_marginal("paper_mu3", n)
        best = static_optimum([a, b])
        for _ in range(50):
            pa, pb = rng.permutation(n), rng.permutation(n)
            dense = np.zeros((n, n))
            dense[np.ix_(pa, pb)] = northwest_corner(a[pa], b[pb])
            np.testing.assert_allclose(dense.sum(axis=1), a, atol=1e-14)
            assert static_cost(CouplingTable.from_dense(dense), PAIR2, n) >= best - 1e-12

    def test_rejects_other_costs(self):
        mu = np.ones(3) / 3
        with pytest.raises(ValidationError):
            static_optimum([mu, mu], QuadraticCost(CostKind.QUADRATIC_FULL, 2))
