import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dmmot.cost import CostKind, QuadraticCost, dynamic_cost, static_cost
from dmmot.flows import (
    ProbabilityKernel,
    SourceSpec,
    convolve_periodic,
    default_pairing,
    diagonal_source,
    flow_from_coupling,
    realize_source,
    smooth_flow,
)
from dmmot.grid import GridSpec, StaggeredField, divergence_residual, interp, marginalize
from dmmot.measures import CouplingTable, ValidationError
from dmmot.oracle import comonotone_coupling, preset_marginal

PAIR2 = QuadraticCost(CostKind.QUADRATIC_PAIRWISE, 2)


def random_coupling(n, k, rng, power=4.0):
    m = rng.random((n,) * k) ** power
    return CouplingTable.from_dense(m / m.sum())


class TestSources:
    def test_diagonal_uniform(self):
        p = realize_source(SourceSpec.diagonal(np.ones(4)), GridSpec(2, 1, 4))
        np.testing.assert_array_equal(p, np.eye(4) / 4)

    def test_delta(self):
        p = realize_source(SourceSpec.delta((0, 0, 0)), GridSpec(3, 1, 3))
        assert p[0, 0, 0] == 1.0 and p.sum() == 1.0

    def test_diagonal_marginals_exact(self, rng):
        nu = rng.random(7)
        nu /= nu.sum()
        p = diagonal_source(nu, 3)
        for axis in range(3):
            np.testing.assert_array_equal(marginalize(p, axis), nu)

    def test_explicit_normalized(self, rng):
        p = realize_source(SourceSpec.explicit(rng.random((3, 3))), GridSpec(2, 1, 3))
        assert p.sum() == pytest.approx(1.0, abs=1e-15)

    @pytest.mark.parametrize("spec", [SourceSpec.delta((0, 5)), SourceSpec.delta((0, 0.5)), SourceSpec.delta((1,)),
                                      SourceSpec.diagonal(np.ones(3)), SourceSpec.explicit(np.ones((2, 2))),
                                      SourceSpec.diagonal(-np.ones(4))])
    def test_invalid(self, spec):
        with pytest.raises(ValidationError):
            realize_source(spec, GridSpec(2, 1, 4))


class TestFlowFromCoupling:
    def test_single_straight_line(self):
        g = GridSpec(2, 8, 8)
        src = np.zeros((8, 8))
        src[0, 0] = 1.0
        u = flow_from_coupling(src, CouplingTable([[3, 5]], [1.0]), g)
        target = np.zeros((8, 8))
        target[3, 5] = 1.0
        np.testing.assert_allclose(u.pi_s[-1], target, atol=1e-15)
        np.testing.assert_allclose(u.pi_s.sum(axis=(1, 2)), 1.0, atol=1e-13)
        assert np.abs(divergence_residual(u, g)).max() <= 1e-12

    def test_still_atoms(self, rng):
        g = GridSpec(2, 4, 5)
        src = rng.random((5, 5))
        src /= src.sum()
        gamma = CouplingTable.from_dense(src)
        pairing = CouplingTable(np.stack([np.arange(len(gamma))] * 2, axis=1), gamma.mass)
        u = flow_from_coupling(src, gamma, g, pairing)
        assert not u.m_s.any()
        np.testing.assert_allclose(u.pi_s, np.broadcast_to(src, u.pi_s.shape), atol=1e-15)

    def test_feasible_and_nonnegative(self, rng):
        for k in (2, 3):
            g = GridSpec(k, 5, 6)
            gamma = random_coupling(6, k, rng)
            src = diagonal_source(np.ones(6) / 6, k)
            u = flow_from_coupling(src, gamma, g)
            assert np.abs(divergence_residual(u, g)).max() <= 1e-12
            np.testing.assert_allclose(u.pi_s[0], src, atol=1e-15)
            np.testing.assert_allclose(u.pi_s[-1], gamma.to_dense(6), atol=1e-14)
            assert u.pi_s.min() >= -1e-15

    def test_momentum_only_where_mass(self, rng):
        g = GridSpec(2, 6, 6)
        u = flow_from_coupling(diagonal_source(np.ones(6) / 6, 2), random_coupling(6, 2, rng, 12.0), g)
        assert np.isfinite(dynamic_cost(interp(u, g), PAIR2, g))

    def test_comonotone_terminal_slice(self):
        n = 10
        mus = [preset_marginal("paper_mu1", n), preset_marginal("paper_mu2", n)]
        gamma = comonotone_coupling(mus)
        u = flow_from_coupling(diagonal_source(np.ones(n) / n, 2), gamma, GridSpec(2, n, n))
        np.testing.assert_allclose(u.pi_s[-1], gamma.to_dense(n), atol=1e-12)

    def test_bounded_by_static_cost(self, rng):
        n = 16
        g = GridSpec(2, n, n)
        src = diagonal_source(np.ones(n) / n, 2)
        for _ in range(5):
            gamma = random_coupling(n, 2, rng)
            u = flow_from_coupling(src, gamma, g)
            assert dynamic_cost(interp(u, g), PAIR2, g) <= static_cost(gamma, PAIR2, n) + 0.05

    def test_pairing_checks(self):
        g = GridSpec(2, 2, 3)
        src = diagonal_source(np.ones(3) / 3, 2)
        gamma = CouplingTable([[0, 1], [2, 2]], [0.5, 0.5])
        with pytest.raises(ValidationError):
            flow_from_coupling(src, gamma, g, CouplingTable([[0, 0]], [1.0]))
        with pytest.raises(ValidationError):
            flow_from_coupling(src, gamma, g, CouplingTable([[5, 0]], [1.0]))
        with pytest.raises(ValidationError):
            flow_from_coupling(np.ones((2, 2)) / 4, gamma, g)

    def test_default_pairing_marginals(self, rng):
        src = CouplingTable.from_dense(diagonal_source(rng.random(5) + 0.1, 2))
        gamma = random_coupling(5, 2, rng)
        pairing = default_pairing(src, gamma)
        np.testing.assert_allclose(np.bincount(pairing.indices[:, 0], pairing.mass, len(src)), src.mass, atol=1e-14)
        np.testing.assert_allclose(np.bincount(pairing.indices[:, 1], pairing.mass, len(gamma)), gamma.mass, atol=1e-14)


class TestKernel:
    def test_validation(self):
        with pytest.raises(ValidationError):
            ProbabilityKernel(np.ones((2, 2)) / 4)
        with pytest.raises(ValidationError):
            ProbabilityKernel(np.array([[0.5, 0.6, -0.1]] * 3) / 3)
        with pytest.raises(ValidationError):
            ProbabilityKernel(np.array([0.2, 0.3, 0.5]))
        with pytest.raises(ValidationError):
            ProbabilityKernel(np.full(3, 0.3))

    def test_random_kernel_is_valid(self, rng):
        for k in (2, 3):
            z = ProbabilityKernel.random(k, 2, rng)
            assert abs(z.weights.sum() - 1) <= 1e-14
            np.testing.assert_array_equal(z.weights, np.flip(z.weights))

    def test_periodic_convolution_of_delta(self):
        z = ProbabilityKernel.from_1d([1, 2, 1], 2)
        arr = np.zeros((5, 5))
        arr[0, 0] = 1.0
        out = convolve_periodic(arr, z, (0, 1))
        assert out[4, 4] == pytest.approx(1 / 16) and out[0, 0] == pytest.approx(0.25)


def random_field(g, rng):
    return StaggeredField(rng.standard_normal((g.n_t + 1,) + g.spatial_shape),
                          rng.standard_normal((g.k, g.n_t) + g.spatial_shape))


class TestSmoothing:
    def test_point_kernel(self, rng):
        g = GridSpec(2, 3, 4)
        u = random_field(g, rng)
        v = smooth_flow(u, ProbabilityKernel.point(2), g)
        np.testing.assert_array_equal(v.ravel(), u.ravel())

    def test_mass_per_slice(self, rng):
        g = GridSpec(3, 2, 5)
        u = random_field(g, rng)
        v = smooth_flow(u, ProbabilityKernel.random(3, 1, rng))
        np.testing.assert_allclose(v.pi_s.reshape(3, -1).sum(1), u.pi_s.reshape(3, -1).sum(1), atol=1e-14 * 125)

    @given(st.integers(0, 2**32 - 1), st.floats(-2, 2), st.floats(-2, 2))
    def test_linear_and_commutes_with_divergence(self, seed, a, b):
        rng = np.random.default_rng(seed)
        g = GridSpec(2, 3, 6)
        z = ProbabilityKernel.random(2, 2, rng)
        u, v = random_field(g, rng), random_field(g, rng)
        lhs = smooth_flow(a * u + b * v, z).ravel()
        rhs = (a * smooth_flow(u, z) + b * smooth_flow(v, z)).ravel()
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)
        r1 = divergence_residual(smooth_flow(u, z), g)
        r2 = convolve_periodic(divergence_residual(u, g), z, (1, 2))
        np.testing.assert_allclose(r1, r2, atol=1e-12)

    def test_never_increases_cost(self, rng):
        g = GridSpec(2, 6, 6)
        for _ in range(10):
            u = flow_from_coupling(diagonal_source(rng.random(6) + 0.05, 2), random_coupling(6, 2, rng), g)
            before = dynamic_cost(interp(u, g), PAIR2, g)
            after = dynamic_cost(interp(smooth_flow(u, ProbabilityKernel.random(2, 1, rng)), g), PAIR2, g)
            assert after <= before + 1e-10

    def test_dimension_mismatch(self, rng):
        g = GridSpec(2, 2, 3)
        with pytest.raises(ValidationError):
            smooth_flow(random_field(g, rng), ProbabilityKernel.point(3))
