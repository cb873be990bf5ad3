import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from daafd.blaschke import (BlaschkeChain, blaschke_vector, blaschke_vector_rudin,
                            cauchy_kernel_normalized, chain_from_dict, complete_isometry,
                            elementary_factor, factor_from_dict, factor_series,
                            kernel_identity_residual, unitary_completion)
from daafd.seriescore import (da_inner, da_norm, expand_cauchy, random_ball_points,
                              random_polynomial, series_matmul)


def _unit(rng, n):
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


class TestKernel:
    def test_origin(self, rng):
        z = random_ball_points(rng, 5, 3)
        np.testing.assert_allclose(cauchy_kernel_normalized(np.zeros(3), z), 1.0)

    def test_diagonal_value(self):
        a = np.array([0.3, 0.4j])
        s = 0.25
        assert cauchy_kernel_normalized(a, a) == pytest.approx((1 - s) ** -0.5)

    def test_unit_norm(self, rng):
        a = random_ball_points(rng, 1, 2, rmax=0.6)[0]
        s = float(np.vdot(a, a).real)
        e = expand_cauchy(a, 60) * np.sqrt(1 - s)
        assert da_norm(e) == pytest.approx(1.0, abs=1e-10)

    def test_rejects_boundary(self):
        with pytest.raises(ValueError):
            cauchy_kernel_normalized([1.0, 0.0], [0.1, 0.1])


class TestBlaschkeVector:
    def test_origin_is_identity(self, rng):
        z = random_ball_points(rng, 4, 3)
        np.testing.assert_allclose(blaschke_vector(np.zeros(3), z), z, atol=1e-15)

    def test_vanishes_at_a(self, rng):
        a = random_ball_points(rng, 1, 3, rmax=0.9)[0]
        assert np.abs(blaschke_vector(a, a)).max() <= 1e-15
        assert np.abs(blaschke_vector_rudin(a, a)).max() <= 1e-15

    def test_disc_value(self):
        assert blaschke_vector([0.5], [0.25])[0] == pytest.approx(-0.2857142857142857)
        assert blaschke_vector_rudin([0.5], [0.25])[0] == pytest.approx(-0.2857142857142857)

    def test_projection_form_needs_nonzero(self):
        with pytest.raises(ValueError):
            blaschke_vector_rudin([0.0, 0.0], [0.1, 0.2])

    def test_batch(self, rng):
        a = random_ball_points(rng, 1, 2)[0]
        z = random_ball_points(rng, 7, 2)
        np.testing.assert_allclose(blaschke_vector(a, z),
                                   np.stack([blaschke_vector(a, zi) for zi in z]))

    def test_sphere_to_sphere(self, rng):
        a = random_ball_points(rng, 1, 3, rmax=0.95)[0]
        z = random_ball_points(rng, 50, 3, sphere=True)
        np.testing.assert_allclose(np.linalg.norm(blaschke_vector(a, z), axis=1), 1.0,
                                   atol=1e-12)


class TestKernelIdentity:
    def test_zero_point(self, rng):
        z, w = random_ball_points(rng, 2, 2)
        assert kernel_identity_residual(np.zeros(2), z, w) <= 1e-15

    def test_origin_pair(self, rng):
        a = random_ball_points(rng, 1, 2, rmax=0.9)[0]
        assert kernel_identity_residual(a, np.zeros(2), np.zeros(2)) <= 1e-14


class TestUnitaryCompletion:
    def test_first_basis_vector(self):
        np.testing.assert_array_equal(unitary_completion([1, 0, 0]), np.eye(3))

    def test_second_basis_vector(self):
        U = unitary_completion([0, 1])
        np.testing.assert_allclose(U[:, 0], [0, 1])
        np.testing.assert_allclose(np.conj(U.T) @ U, np.eye(2), atol=1e-14)

    @pytest.mark.parametrize("n", [1, 2, 5])
    def test_random(self, rng, n):
        c = _unit(rng, n)
        U = unitary_completion(c)
        np.testing.assert_allclose(np.conj(U.T) @ U, np.eye(n), atol=1e-13)
        np.testing.assert_allclose(U[:, 0], c / np.linalg.norm(c), atol=1e-15)

    def test_zero(self):
        with pytest.raises(ValueError):
            unitary_completion([0, 0])

    def test_complete_isometry(self, rng):
        V, _ = np.linalg.qr(rng.standard_normal((4, 2)) + 1j * rng.standard_normal((4, 2)))
        Q = complete_isometry(V)
        np.testing.assert_allclose(Q[:, :2], V)
        np.testing.assert_allclose(np.conj(Q.T) @ Q, np.eye(4), atol=1e-13)


class TestElementaryFactor:
    def test_scalar_row(self, rng):
        a = random_ball_points(rng, 1, 2)[0]
        f = elementary_factor(a, [2.0])
        z = random_ball_points(rng, 3, 2)
        np.testing.assert_allclose(f.evaluate(z)[:, 0, :], blaschke_vector(a, z))

    def test_block_at_a(self, rng):
        a = random_ball_points(rng, 1, 2)[0]
        B = elementary_factor(a, [1, 0]).evaluate(a)
        expected = np.zeros((2, 3))
        expected[1, 2] = 1
        np.testing.assert_allclose(B, expected, atol=1e-15)

    @pytest.mark.parametrize("N,n", [(1, 3), (2, 2), (3, 2)])
    def test_condition_and_contraction(self, rng, N, n):
        a = random_ball_points(rng, 1, N, rmax=0.9)[0]
        c = _unit(rng, n)
        f = elementary_factor(a, c)
        assert f.shape == (n, n + N - 1)
        assert np.linalg.norm(np.conj(c) @ f.evaluate(a)) <= 1e-10 * np.linalg.norm(c)
        np.testing.assert_allclose(f.U[:, 0], c / np.linalg.norm(c), atol=1e-15)
        z = random_ball_points(rng, 30, N, rmax=0.99)
        assert np.linalg.norm(f.evaluate(z), axis=(1, 2), ord=2).max() <= 1 + 1e-12

    def test_round_trip(self, rng):
        f = elementary_factor(random_ball_points(rng, 1, 2)[0], _unit(rng, 2))
        g = factor_from_dict(f.to_dict())
        z = random_ball_points(rng, 3, 2)
        np.testing.assert_allclose(f.evaluate(z), g.evaluate(z))


class TestFactorSeries:
    def test_origin_exact(self):
        f = elementary_factor([0.0, 0.0], [1.0])
        s = factor_series(f, 1)
        np.testing.assert_allclose(s.coefficient([1, 0]), [[1, 0]])
        np.testing.assert_allclose(s.coefficient([0, 1]), [[0, 1]])
        assert np.all(s.coefficient([0, 0]) == 0)

    def test_disc_tail(self):
        f = elementary_factor([0.5], [1.0])
        for D in (4, 10, 20):
            s = factor_series(f, D)
            exact = (0.3 - 0.5) / (1 - 0.15)
            assert abs(s([0.3])[0, 0] - exact) <= s.tail_bound

    def test_product_of_series(self, rng):
        a, b = random_ball_points(rng, 2, 2, rmax=0.4)
        f = elementary_factor(a, [1.0])
        g = elementary_factor(b, _unit(rng, 2))
        prod = series_matmul(f.series(40), g.series(40))
        z = random_ball_points(rng, 5, 2, rmax=0.5)
        np.testing.assert_allclose(prod(z), f.evaluate(z) @ g.evaluate(z), atol=1e-10)

    @pytest.mark.parametrize("N,n", [(1, 1), (2, 1), (2, 2)])
    def test_apply_matches_series(self, rng, N, n):
        f = elementary_factor(random_ball_points(rng, 1, N, rmax=0.6)[0], _unit(rng, n))
        g = random_polynomial(rng, N, f.cols, 2, 3, 10)
        np.testing.assert_allclose(f.apply(g).data, series_matmul(f.series(10), g).data,
                                   atol=1e-13)


class TestChain:
    def _chain(self, rng, N, n, k):
        chain = BlaschkeChain(n, N)
        for _ in range(k):
            chain = chain.append(elementary_factor(random_ball_points(rng, 1, N, rmax=0.8)[0],
                                                   _unit(rng, chain.cols)))
        return chain

    def test_widths(self, rng):
        chain = self._chain(rng, 3, 2, 3)
        assert chain.rows == 2
        assert chain.cols == 2 + 3 * 2
        for f, g in zip(chain.factors, chain.factors[1:]):
            assert f.cols == g.rows

    def test_empty_chain_is_identity(self, rng):
        chain = BlaschkeChain(2, 2)
        z = random_ball_points(rng, 3, 2)
        np.testing.assert_allclose(chain.evaluate(z), np.broadcast_to(np.eye(2), (3, 2, 2)))

    def test_evaluate_is_product(self, rng):
        chain = self._chain(rng, 2, 2, 4)
        z = random_ball_points(rng, 6, 2)
        P = np.broadcast_to(np.eye(2, dtype=complex), (6, 2, 2))
        for f in chain.factors:
            P = P @ f.evaluate(z)
        np.testing.assert_allclose(chain.evaluate(z), P, atol=1e-14)

    def test_boundary_coisometry(self, rng):
        chain = self._chain(rng, 2, 1, 3)
        z = random_ball_points(rng, 50, 2, sphere=True)
        B = chain.evaluate(z)
        np.testing.assert_allclose(B @ np.conj(np.swapaxes(B, 1, 2)),
                                   np.ones((50, 1, 1)), atol=1e-12)

    def test_adjoint(self, rng):
        chain = self._chain(rng, 2, 1, 2)
        g = random_polynomial(rng, 2, chain.cols, 1, 4, 8)
        h = random_polynomial(rng, 2, chain.rows, 1, 8)
        lhs = da_inner(chain.apply(g), h)
        rhs = da_inner(g, chain.adjoint_apply(h))
        assert abs(lhs - rhs) <= 1e-12 * (1 + abs(lhs))

    def test_round_trip(self, rng):
        chain = self._chain(rng, 2, 2, 2)
        again = chain_from_dict(chain.to_dict())
        z = random_ball_points(rng, 4, 2)
        np.testing.assert_allclose(again.evaluate(z), chain.evaluate(z))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(0, 100_000))
def test_kernel_identity_property(N, seed):
    rng = np.random.default_rng(seed)
    a, z, w = random_ball_points(rng, 3, N, rmax=0.999)
    assert kernel_identity_residual(a, z, w) <= 1e-10
