import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from femtoslice import numerics
from femtoslice.numerics import DegenerateChannelError, SingularMatrixError

from conftest import rand_c


def _loop_matmul(a, b):
    # Per-entry sum of products.
    n, m = len(a), len(b[0])
    out = [[0j] * m for _ in range(n)]
    for i in range(n):
        for j in range(m):
            out[i][j] = sum(a[i][k] * b[k][j] for k in range(len(b)))
    return np.array(out)


def _faddeev_leverrier(a):
    # Characteristic polynomial coefficients without any eigen-solver.
    n = a.shape[0]
    coeffs = [1.0 + 0j]
    M = np.zeros_like(a)
    for k in range(1, n + 1):
        M = a @ M + coeffs[-1] * np.eye(n)
        coeffs.append(-np.trace(a @ M) / k)
    return np.array(coeffs)


seeds = st.integers(0, 2**32 - 1)


class TestBuilders:
    def test_cmatrix_roundtrip(self):
        m = numerics.cmatrix([[1, 2j], [3, 4]])
        assert m.dtype == np.complex128 and m.shape == (2, 2)

    @pytest.mark.parametrize("bad", [[[1, 2], [3]], [[np.nan, 0], [0, 1]], [[np.inf]]])
    def test_cmatrix_rejects(self, bad):
        with pytest.raises(ValueError):
            numerics.cmatrix(bad)

    def test_cvector(self):
        v = numerics.cvector([1, 1j])
        assert v.shape == (2,)
        with pytest.raises(ValueError):
            numerics.cvector([np.nan])


class TestMatmul:
    def test_identity(self):
        assert np.array_equal(numerics.matmul(np.eye(2), np.eye(2)), np.eye(2))

    def test_i_squared(self):
        a = np.array([[1j, 0], [0, 1j]])
        assert np.allclose(numerics.matmul(a, a), -np.eye(2))

    def test_against_loop_oracle(self, rng):
        a, b = rand_c(rng, 3, 3), rand_c(rng, 3, 3)
        assert np.allclose(numerics.matmul(a, b), _loop_matmul(a.tolist(), b.tolist()), atol=1e-14)

    def test_mismatch(self):
        with pytest.raises(ValueError):
            numerics.matmul(np.ones((2, 3)), np.ones((2, 3)))

    @given(seeds, st.integers(1, 5), st.integers(1, 5), st.integers(1, 5), st.integers(1, 5))
    def test_associative(self, seed, n, m, p, q):
        r = np.random.default_rng(seed)
        a, b, c = rand_c(r, n, m), rand_c(r, m, p), rand_c(r, p, q)
        lhs = numerics.matmul(numerics.matmul(a, b), c)
        rhs = numerics.matmul(a, numerics.matmul(b, c))
        assert np.abs(lhs - rhs).max() < 1e-9


class TestHermitian:
    def test_identity(self):
        assert np.array_equal(numerics.hermitian(np.eye(2)), np.eye(2))

    def test_conjugation(self):
        a = np.array([[0, 1j], [0, 0]])
        assert np.array_equal(numerics.hermitian(a), np.array([[0, 0], [-1j, 0]]))

    @given(seeds)
    def test_involution(self, seed):
        a = rand_c(np.random.default_rng(seed), 3, 4)
        assert np.array_equal(numerics.hermitian(numerics.hermitian(a)), a)


class TestInvert:
    def test_identity(self):
        assert np.allclose(numerics.invert(np.eye(3)), np.eye(3))

    def test_diagonal(self):
        got = numerics.invert(np.diag([2, 4j]))
        assert np.allclose(got, np.diag([0.5, -0.25j]), atol=1e-15)

    def test_singular(self):
        with pytest.raises(SingularMatrixError):
            numerics.invert(np.array([[1, 2], [2, 4]], dtype=complex))

    def test_zero_matrix(self):
        with pytest.raises(SingularMatrixError):
            numerics.invert(np.zeros((3, 3)))

    def test_singular_is_linalg_error(self):
        assert issubclass(SingularMatrixError, np.linalg.LinAlgError)

    def test_needs_pivoting(self):
        a = np.array([[0, 1], [1, 0]], dtype=complex)
        assert np.allclose(numerics.invert(a), a)

    @settings(max_examples=200)
    @given(seeds, st.integers(1, 7))
    def test_residual(self, seed, n):
        a = rand_c(np.random.default_rng(seed), n, n)
        if np.linalg.cond(a) >= 1e6:
            return
        assert np.abs(a @ numerics.invert(a) - np.eye(n)).max() < 1e-9


class TestMaxEigenvector:
    def test_dominant_axis(self):
        v, lam = numerics.max_eigenvector(np.diag([3.0, 1.0]))
        assert lam == pytest.approx(3.0, rel=1e-9)
        assert np.allclose(v, [1, 0], atol=1e-6)

    def test_degenerate_spectrum(self):
        v, lam = numerics.max_eigenvector(np.eye(2))
        assert lam == pytest.approx(1.0, rel=1e-9)
        assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-12)

    def test_non_square(self):
        with pytest.raises(ValueError):
            numerics.max_eigenvector(np.ones((2, 3)))

    def test_phase_convention(self, rng):
        b = rand_c(rng, 4, 4)
        v, _ = numerics.max_eigenvector(b.conj().T @ b)
        first = v[np.abs(v) > numerics.PHASE_TOL][0]
        assert first.imag == 0.0 and first.real > 0

    def test_against_characteristic_polynomial(self, rng):
        for n in range(1, 7):
            b = rand_c(rng, n, n)
            a = b.conj().T @ b
            top = np.roots(_faddeev_leverrier(a)).real.max()
            _, lam = numerics.max_eigenvector(a)
            assert lam == pytest.approx(top, rel=1e-6)

    @settings(max_examples=200)
    @given(seeds, st.integers(1, 7))
    def test_eigen_equation(self, seed, n):
        b = rand_c(np.random.default_rng(seed), n, n)
        a = b.conj().T @ b
        v, lam = numerics.max_eigenvector(a)
        assert np.linalg.norm(a @ v - lam * v) <= 1e-6 * abs(lam)

    def test_deterministic(self, rng):
        b = rand_c(rng, 5, 5)
        a = b.conj().T @ b
        v1, l1 = numerics.max_eigenvector(a)
        v2, l2 = numerics.max_eigenvector(a.copy())
        assert np.array_equal(v1, v2) and l1 == l2


class TestNullVector:
    def test_axis_complement(self):
        u = numerics.null_vector(np.array([[1.0], [0.0]]))
        assert np.allclose(u, [0, 1], atol=1e-12)

    def test_diagonal_pair(self):
        s = 1 / np.sqrt(2)
        u = numerics.null_vector(np.array([[s], [s]]))
        assert np.allclose(u, [s, -s], atol=1e-9) or np.allclose(u, [-s, s], atol=1e-9)

    def test_shape_checked(self):
        with pytest.raises(ValueError):
            numerics.null_vector(np.ones((3, 1)))

    def test_rank_deficient(self):
        a = np.array([[1, 1], [1, 1], [0, 0]], dtype=complex)
        with pytest.raises(DegenerateChannelError):
            numerics.null_vector(a)

    @settings(max_examples=300)
    @given(seeds, st.integers(1, 6))
    def test_generic(self, seed, J):
        a = rand_c(np.random.default_rng(seed), J + 1, J)
        u = numerics.null_vector(a)
        assert abs(np.linalg.norm(u) - 1) < 1e-12
        assert np.linalg.norm(u.conj() @ a) < 1e-9
