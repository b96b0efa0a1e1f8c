import numpy as np
import pytest

from sparrow import numerics
from sparrow.errors import DefinitenessError, ValidationError


def rand_hermitian(rng, m, scale=1.0):
    a = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    return scale * 0.5 * (a + a.conj().T)


class TestHermitianEig:
    def test_identity(self):
        w, v = numerics.hermitian_eig(np.eye(3))
        assert np.allclose(w, np.ones(3))
        assert np.allclose(v @ v.conj().T, np.eye(3))

    def test_diagonal(self):
        w, v = numerics.hermitian_eig(np.diag([3.0, 1.0]))
        assert np.allclose(w, [3.0, 1.0])
        assert np.allclose(np.abs(v), np.eye(2))

    def test_rank_one_steering(self):
        m = 4
        a = np.exp(-1j * np.pi * 0.37 * np.arange(m))
        w, _ = numerics.hermitian_eig(np.outer(a, a.conj()))
        assert np.allclose(w, [m, 0, 0, 0], atol=1e-12)

    def test_descending_and_reconstruction(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            h = rand_hermitian(rng, 7, scale=rng.uniform(0.1, 50))
            w, v = numerics.hermitian_eig(h)
            assert np.all(np.diff(w) <= 1e-12)
            resid = np.linalg.norm(h - (v * w) @ v.conj().T) / np.linalg.norm(h)
            assert resid < 1e-10

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValidationError):
            numerics.hermitian_eig(np.array([[0.0, 1.0], [0.0, 0.0]]))


class TestSolveHpd:
    def test_identity(self):
        b = np.arange(6.0).reshape(3, 2) + 1j
        assert np.allclose(numerics.solve_hpd(np.eye(3), b), b)

    def test_scaled_identity(self):
        x = numerics.solve_hpd(2.0 * np.eye(4), np.eye(4))
        assert np.allclose(x, 0.5 * np.eye(4))

    def test_residual_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            g = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
            h = g @ g.conj().T + 0.1 * np.eye(5)
            b = rng.normal(size=(5, 3)) + 1j * rng.normal(size=(5, 3))
            x = numerics.solve_hpd(h, b)
            assert np.linalg.norm(h @ x - b) / np.linalg.norm(b) < 1e-10

    def test_indefinite_raises(self):
        with pytest.raises(DefinitenessError):
            numerics.solve_hpd(np.diag([1.0, -1.0]), np.eye(2))


class TestPolyRoots:
    def test_quadratic(self):
        r = np.sort_complex(numerics.poly_roots([1.0, 0.0, -1.0]))
        assert np.allclose(r, [-1.0, 1.0])

    def test_linear(self):
        c = 2.0 - 3.0j
        assert np.allclose(numerics.poly_roots([1.0, -c]), [c])

    def test_degree_zero_empty(self):
        assert numerics.poly_roots([5.0]).size == 0

    def test_residual_oracle_random_degree_six(self):
        rng = np.random.default_rng(2)
        coeffs = rng.normal(size=7) + 1j * rng.normal(size=7)
        roots = numerics.poly_roots(coeffs)
        assert roots.size == 6
        vals = np.polyval(coeffs, roots)
        assert np.abs(vals).max() <= 1e-8 * np.linalg.norm(coeffs)

    def test_count_matches_degree(self):
        rng = np.random.default_rng(3)
        for deg in (1, 3, 5, 9):
            coeffs = rng.normal(size=deg + 1)
            assert numerics.poly_roots(coeffs).size == deg

    def test_zero_leading_coefficient_rejected(self):
        with pytest.raises(ValidationError):
            numerics.poly_roots([0.0, 1.0, 2.0])
