import numpy as np
import pytest
from hypothesis import given, strategies as st

from specflow import doi
from specflow.errors import InvalidInputError, InvalidKernelError
from specflow.operators import FramedOperator, eigensystem, random_hermitian
from specflow.weights import BumpWeight

from conftest import ESS, hermitian


class TestDividedDifference:
    def test_square_off_diagonal(self):
        assert doi.divided_difference(doi.SQUARE, 1.0, 3.0) == 4.0

    def test_square_diagonal(self):
        assert doi.divided_difference(doi.SQUARE, 2.0, 2.0) == 4.0

    def test_vartheta_at_origin(self):
        assert doi.divided_difference(doi.VARTHETA, 0.0, 0.0) == 1.0

    @given(st.floats(-5, 5), st.floats(1e-9, 1e-3))
    def test_continuous_across_switch(self, lam, gap):
        # either branch must be close to the derivative at the midpoint
        v = doi.divided_difference(doi.TANH, lam + gap, lam)
        assert abs(v - doi.TANH.df(lam + gap / 2)) < 1e-6

    def test_broadcasts(self):
        out = doi.divided_difference(doi.CUBE, np.array([[1.0], [2.0]]), np.array([[1.0, 3.0]]))
        assert np.allclose(out, [[3.0, 13.0], [7.0, 19.0]])


class TestApplyDOI:
    def test_unit_kernel_is_identity(self, rng):
        A, B = random_hermitian(rng, 4), random_hermitian(rng, 4)
        X = rng.standard_normal((4, 4))
        one = doi.custom_kernel(lambda l, m: np.ones(np.broadcast(l, m).shape))
        assert np.allclose(doi.apply_doi(one, A, B, X), X, atol=1e-13)

    def test_worked_example(self):
        A = FramedOperator.diag([1.0, 3.0])
        X = np.array([[0.0, 1.0], [1.0, 0.0]])
        out = doi.apply_doi(doi.divided_difference_kernel(doi.SQUARE), A, A, X)
        assert np.allclose(out, [[0.0, 4.0], [4.0, 0.0]])

    @given(hermitian(max_n=6), st.integers(0, 2**32 - 1))
    def test_left_and_right_multiplication(self, A, seed):
        r = np.random.default_rng(seed)
        n = A.shape[0]
        B = random_hermitian(r, n)
        X = r.standard_normal((n, n)) + 1j * r.standard_normal((n, n))
        left = doi.apply_doi(doi.custom_kernel(lambda l, m: l + 0 * m), A, B, X)
        right = doi.apply_doi(doi.custom_kernel(lambda l, m: m + 0 * l), A, B, X)
        assert np.abs(left - A @ X).max() < 1e-12 * (1 + np.abs(X).max())
        assert np.abs(right - X @ B).max() < 1e-12 * (1 + np.abs(X).max())

    def test_dimension_mismatch(self, rng):
        with pytest.raises(InvalidInputError):
            doi.apply_doi(doi.divided_difference_kernel(doi.SQUARE), random_hermitian(rng, 3), random_hermitian(rng, 3), np.zeros((3, 2)))

    @given(hermitian(max_n=5), st.integers(0, 2**32 - 1))
    def test_multiplicative(self, A, seed):
        r = np.random.default_rng(seed)
        n = A.shape[0]
        B = random_hermitian(r, n)
        X = r.standard_normal((n, n))
        phi = doi.divided_difference_kernel(doi.TANH)
        psi = doi.custom_kernel(lambda l, m: np.cos(l) * np.exp(-m * m))
        lhs = doi.apply_doi(phi * psi, A, B, X)
        ea, eb = eigensystem(FramedOperator(A)), eigensystem(FramedOperator(B))
        inner = doi.apply_doi(psi, ea, eb, X)
        rhs = doi.apply_doi(phi, ea, eb, inner)
        assert np.abs(lhs - rhs).max() < 1e-10

    @given(hermitian(max_n=5), st.integers(0, 2**32 - 1))
    def test_adjoint_rule(self, A, seed):
        r = np.random.default_rng(seed)
        n = A.shape[0]
        B = random_hermitian(r, n)
        X = r.standard_normal((n, n)) + 1j * r.standard_normal((n, n))
        phi = lambda l, m: np.sin(l) + l * m**2
        flipped = lambda l, m: phi(m, l)
        lhs = doi.apply_doi(doi.custom_kernel(flipped), B, A, X.conj().T)
        rhs = doi.apply_doi(doi.custom_kernel(phi), A, B, X).conj().T
        assert np.abs(lhs - rhs).max() < 1e-12 * (1 + np.abs(X).max())

    def test_linear(self, rng):
        A, B = random_hermitian(rng, 5), random_hermitian(rng, 5)
        X, Y = rng.standard_normal((5, 5)), rng.standard_normal((5, 5))
        k = doi.divided_difference_kernel(doi.VARTHETA)
        lhs = doi.apply_doi(k, A, B, 2 * X - 3 * Y)
        rhs = 2 * doi.apply_doi(k, A, B, X) - 3 * doi.apply_doi(k, A, B, Y)
        assert np.abs(lhs - rhs).max() < 1e-12


class TestPerturbation:
    def test_equal_arguments(self, rng):
        A = random_hermitian(rng, 6)
        assert doi.perturbation_residual(doi.TANH, A, A) < 1e-13

    @pytest.mark.parametrize("fn", [doi.SQUARE, doi.CUBE])
    def test_commuting_polynomials(self, rng, fn):
        A, B = np.diag(rng.uniform(-2, 2, 5)), np.diag(rng.uniform(-2, 2, 5))
        assert doi.perturbation_residual(fn, A, B) < 1e-13

    @given(hermitian(max_n=8, scale=1.5), st.integers(0, 2**32 - 1), st.sampled_from(list(doi.FUNCTIONS.values())))
    def test_identity_holds_to_rounding(self, A, seed, fn):
        B = random_hermitian(np.random.default_rng(seed), A.shape[0], 1.5)
        res = doi.perturbation_residual(fn, A, B)
        scale = 1 + np.linalg.norm(doi.matrix_function(A, fn) - doi.matrix_function(B, fn))
        assert res < 1e-10 * scale

    def test_polynomial_bound(self, rng):
        quintic = doi.ScalarFunction(lambda x: x**5 - 2 * x**2, lambda x: 5 * x**4 - 4 * x, "quintic")
        for _ in range(10):
            A, B = random_hermitian(rng, 6, 1.2), random_hermitian(rng, 6, 1.2)
            assert doi.perturbation_residual(quintic, A, B) <= 1e-11 * np.linalg.norm(A - B) * 50

    def test_size_mismatch(self, rng):
        with pytest.raises(InvalidInputError):
            doi.perturbation_residual(doi.SQUARE, random_hermitian(rng, 2), random_hermitian(rng, 3))


class TestVarthetaDerivative:
    def test_at_zero(self, rng):
        X = random_hermitian(rng, 4)
        assert np.allclose(doi.vartheta_derivative(np.zeros((4, 4)), X), X, atol=1e-15)

    def test_commuting(self):
        d, x = np.array([0.5, -2.0, 3.0]), np.array([1.0, 2.0, -1.0])
        out = doi.vartheta_derivative(np.diag(d), np.diag(x))
        assert np.allclose(out, np.diag(doi.vartheta_prime(d) * x))

    def test_second_order_finite_differences(self, rng):
        D, X = random_hermitian(rng, 6, 1.5), random_hermitian(rng, 6, 3.0)
        exact = doi.vartheta_derivative(D, X)
        errs = []
        for h in (1e-2, 1e-3, 1e-4):
            fd = (doi.matrix_function(D + h * X, doi.VARTHETA) - doi.matrix_function(D - h * X, doi.VARTHETA)) / (2 * h)
            errs.append(np.linalg.norm(fd - exact, 2))
        assert errs[2] < 1e-7
        assert np.polyfit(np.log([1e-2, 1e-3, 1e-4]), np.log(errs), 1)[0] > 1.95


class TestVarthetaFactorization:
    @given(hermitian(max_n=5, scale=4.0), st.integers(0, 2**32 - 1))
    def test_difference_of_vartheta(self, D0, seed):
        D1 = D0 + random_hermitian(np.random.default_rng(seed), D0.shape[0], 2.0)
        B = doi.graph_normalized(D0, D1 - D0)
        lhs = doi.apply_phi_theta(D1, D0, B)
        rhs = doi.matrix_function(D1, doi.VARTHETA) - doi.matrix_function(D0, doi.VARTHETA)
        assert np.abs(lhs - rhs).max() < 1e-11

    def test_kernel_relation(self):
        lam, mu = np.array([-2.0, 0.1, 3.0]), np.array([0.5, -1.0, 4.0])
        phi = doi.phi_theta_kernel().matrix(lam, mu)
        psi = doi.psi_theta_kernel().matrix(lam, mu)
        factor = (1 + lam[:, None] ** 2) ** -0.25 * (1 + mu[None, :] ** 2) ** 0.25
        assert np.allclose(phi, factor * psi)

    def test_psi_theta_is_bounded(self):
        x = np.linspace(-1e4, 1e4, 801)
        assert np.abs(doi.psi_theta_kernel().matrix(x, x)).max() <= 2.0

    def test_graph_norm_bound(self, rng):
        for _ in range(10):
            D, A = random_hermitian(rng, 5, 3.0), random_hermitian(rng, 5, 1.0)
            lhs = np.linalg.norm(doi.graph_normalized(D, A), 2)
            assert lhs <= np.linalg.norm(A, 2) + 1e-12

    def test_aux_ratio_is_finite(self, rng):
        D0 = random_hermitian(rng, 5, 2.0)
        D1 = D0 + random_hermitian(rng, 5, 0.1)
        r = doi.aux_estimate_ratio(D1, D0)
        assert np.isfinite(r) and r >= 0


class TestTraceDuality:
    def test_identity_perturbation(self, rng):
        D = FramedOperator(random_hermitian(rng, 5, 0.9), ESS)
        k = doi.bump_trace_kernel(BumpWeight(0.5))
        assert doi.trace_duality_residual(k, D, np.eye(5)) < 1e-14

    def test_diagonal_exact(self, rng):
        D = FramedOperator.diag(rng.uniform(-0.9, 0.9, 6), ESS)
        V = rng.standard_normal((6, 6))
        k = doi.bump_trace_kernel(BumpWeight(0.7, 3))
        assert doi.trace_duality_residual(k, D, V) < 1e-14

    @given(hermitian(max_n=8, scale=0.95), st.integers(0, 2**32 - 1))
    def test_random_instances(self, A, seed):
        r = np.random.default_rng(seed)
        D = FramedOperator(A, ESS)
        n = A.shape[0]
        V = r.standard_normal((n, n)) + 1j * r.standard_normal((n, n))
        w = BumpWeight(0.6, 2)
        k = doi.bump_trace_kernel(w)
        scale = 1 + np.linalg.norm(V, 2) * np.abs(w.h(D.eig.values)).sum()
        assert doi.trace_duality_residual(k, D, V) < 1e-10 * scale

    def test_asymmetric_kernel_rejected(self, rng):
        D = FramedOperator(random_hermitian(rng, 3))
        with pytest.raises(InvalidKernelError):
            doi.trace_duality_residual(doi.custom_kernel(lambda l, m: l - 2 * m), D, np.eye(3))

    def test_kernel_must_vanish_on_essential_points(self, rng):
        D = FramedOperator(random_hermitian(rng, 3, 0.5), ESS)
        with pytest.raises(InvalidKernelError):
            doi.trace_duality_residual(doi.divided_difference_kernel(doi.TANH), D, np.eye(3))


class TestInterpolation:
    def _psd(self, r, n):
        x = r.standard_normal((n, n)) + 1j * r.standard_normal((n, n))
        return x @ x.conj().T

    @pytest.mark.parametrize("theta", [0.0, 1.0])
    def test_endpoints(self, rng, theta):
        A = rng.standard_normal((4, 4))
        B0, B1 = self._psd(rng, 4), self._psd(rng, 4)
        rhs = np.linalg.norm(B1 @ A, 2) ** (1 - theta) * np.linalg.norm(A @ B0, 2) ** theta
        assert abs(doi.interpolation_gap(A, B0, B1, theta)) < 1e-12 * rhs

    @given(st.integers(0, 2**32 - 1), st.floats(0.05, 0.95))
    def test_nonnegative_gap(self, seed, theta):
        r = np.random.default_rng(seed)
        A = r.standard_normal((6, 6))
        B0, B1 = self._psd(r, 6), self._psd(r, 6)
        rhs = np.linalg.norm(B1 @ A, 2) ** (1 - theta) * np.linalg.norm(A @ B0, 2) ** theta
        assert doi.interpolation_gap(A, B0, B1, theta) >= -1e-12 * rhs

    def test_negative_definite_rejected(self, rng):
        with pytest.raises(InvalidInputError):
            doi.interpolation_gap(np.eye(2), -np.eye(2), np.eye(2), 0.5)

    def test_theta_range(self):
        with pytest.raises(InvalidInputError):
            doi.interpolation_gap(np.eye(2), np.eye(2), np.eye(2), 1.5)
