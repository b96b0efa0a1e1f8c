import json

import numpy as np
import pytest

from sparrow import io, model
from sparrow.errors import ValidationError
from sparrow.numerics import hermitian_eig


class TestGeometry:
    def test_ula_positions(self):
        g = model.ArrayGeometry.ula(4)
        assert np.array_equal(g.positions, [0, 1, 2, 3])
        assert g.is_ula

    def test_irregular_is_not_ula(self):
        g = model.ArrayGeometry(positions=np.array([0.0, 1.0, 2.5]))
        assert not g.is_ula

    def test_validation(self):
        with pytest.raises(ValidationError):
            model.ArrayGeometry(positions=np.array([1.0, 2.0]))
        with pytest.raises(ValidationError):
            model.ArrayGeometry(positions=np.array([0.0, 2.0, 1.0]))


class TestSteering:
    def test_zero_frequency_all_ones(self):
        g = model.ArrayGeometry.ula(3)
        assert np.allclose(model.steering_vector(g, 0.0), np.ones(3))

    def test_half_frequency(self):
        g = model.ArrayGeometry.ula(3)
        a = model.steering_vector(g, 0.5)
        assert np.allclose(a, [1.0, -1.0j, -1.0])

    def test_unit_modulus_and_norm(self):
        g = model.ArrayGeometry(positions=np.array([0.0, 0.7, 1.9, 3.3]))
        for nu in (-0.99, -0.3, 0.0, 0.64):
            a = model.steering_vector(g, nu)
            assert np.allclose(np.abs(a), 1.0)
            assert np.isclose(np.linalg.norm(a) ** 2, g.n_sensors)

    def test_matrix_columns(self):
        g = model.ArrayGeometry.ula(2)
        grid = model.uniform_grid(4)
        a = model.steering_matrix(g, grid.points)
        assert a.shape == (2, 4)
        assert np.allclose(a[0], 1.0)
        for k, nu in enumerate(grid.points):
            assert np.allclose(a[:, k], model.steering_vector(g, nu))

    def test_vandermonde_full_rank(self):
        g = model.ArrayGeometry.ula(5)
        a = model.steering_matrix(g, [-0.6, -0.1, 0.2, 0.8])
        assert np.linalg.matrix_rank(a) == 4


class TestSimulate:
    def test_noise_free_single_source_rank_one(self):
        g = model.ArrayGeometry.ula(5)
        scene = model.SourceScene(frequencies=np.array([0.3]), powers=np.array([1.0]))
        batch = model.simulate_mmv(g, scene, 8, 0.0, seed=1)
        cov = model.sample_covariance(batch)
        w, _ = hermitian_eig(cov.r)
        assert w[0] > 1e-6
        assert np.all(np.abs(w[1:]) < 1e-12 * w[0])
        a = model.steering_vector(g, 0.3)
        # every snapshot is a scalar multiple of the steering vector
        coeffs = a.conj() @ batch.y / g.n_sensors
        assert np.allclose(batch.y, np.outer(a, coeffs), atol=1e-12)

    def test_pure_noise_power(self):
        g = model.ArrayGeometry.ula(10)
        scene = model.SourceScene(frequencies=np.array([0.1]), powers=np.array([0.0]))
        sigma2 = 0.37
        batch = model.simulate_mmv(g, scene, 1500, sigma2, seed=2)
        mean_power = np.mean(np.abs(batch.y) ** 2)
        assert abs(mean_power - sigma2) < 0.05 * sigma2

    def test_seed_determinism(self):
        g = model.ArrayGeometry.ula(4)
        scene = model.SourceScene(frequencies=np.array([0.2, -0.4]), powers=np.ones(2))
        b1 = model.simulate_mmv(g, scene, 6, 0.5, seed=42, trial=3)
        b2 = model.simulate_mmv(g, scene, 6, 0.5, seed=42, trial=3)
        b3 = model.simulate_mmv(g, scene, 6, 0.5, seed=42, trial=4)
        assert np.array_equal(b1.y, b2.y)
        assert not np.array_equal(b1.y, b3.y)

    def test_correlated_sources_validated(self):
        with pytest.raises(ValidationError):
            model.SourceScene(
                frequencies=np.array([0.1, 0.2]),
                powers=np.ones(2),
                correlation=np.array([[1.0, 2.0], [2.0, 1.0]]),  # not PSD
            )

    def test_covariance_error_shrinks_with_n(self):
        g = model.ArrayGeometry.ula(4)
        scene = model.SourceScene(frequencies=np.array([0.1]), powers=np.array([0.0]))
        errs = []
        for n in (50, 800, 12800):
            batch = model.simulate_mmv(g, scene, n, 1.0, seed=3)
            cov = model.sample_covariance(batch)
            errs.append(np.linalg.norm(cov.r - np.eye(4)) / np.linalg.norm(np.eye(4)))
        assert errs[0] > errs[1] > errs[2]


class TestSampleCovariance:
    def test_small_example(self):
        batch = model.MmvBatch(y=np.ones((2, 2), dtype=complex))
        cov = model.sample_covariance(batch)
        assert np.allclose(cov.r, np.ones((2, 2)))

    def test_orthogonal_columns_trace(self):
        m = 4
        y = np.sqrt(m) * np.eye(m, 2).astype(complex)
        cov = model.sample_covariance(model.MmvBatch(y=y))
        assert np.isclose(np.trace(cov.r).real, m)

    def test_psd(self):
        rng = np.random.default_rng(4)
        y = rng.normal(size=(5, 7)) + 1j * rng.normal(size=(5, 7))
        cov = model.sample_covariance(model.MmvBatch(y=y))
        w, _ = hermitian_eig(cov.r)
        assert w.min() >= -1e-12


class TestGrid:
    def test_k4(self):
        assert np.allclose(model.uniform_grid(4).points, [-1.0, -0.5, 0.0, 0.5])

    def test_k2(self):
        assert np.allclose(model.uniform_grid(2).points, [-1.0, 0.0])

    def test_k1000(self):
        grid = model.uniform_grid(1000)
        assert grid.size == 1000
        assert np.isclose(grid.points[1] - grid.points[0], 0.002)
        assert np.isclose(grid.points.max(), 0.998)


class TestAngles:
    def test_mu_from_theta(self):
        assert np.isclose(model.mu_from_theta(np.pi / 3), 0.5)


class TestSerialization:
    def test_batch_roundtrip(self, tmp_path):
        g = model.ArrayGeometry.ula(3)
        scene = model.SourceScene(frequencies=np.array([0.25]), powers=np.array([2.0]))
        batch = model.simulate_mmv(g, scene, 4, 0.1, seed=5)
        path = tmp_path / "y.json"
        io.save_batch(path, batch, g, scene)
        loaded, g2, scene2 = io.load_batch(path)
        assert np.allclose(loaded.y, batch.y)
        assert loaded.noise_power == batch.noise_power
        assert np.array_equal(g2.positions, g.positions)
        assert np.allclose(scene2.frequencies, scene.frequencies)

    def test_unknown_keys_rejected(self, tmp_path):
        g = model.ArrayGeometry.ula(3)
        batch = model.MmvBatch(y=np.ones((3, 2), dtype=complex), noise_power=0.0)
        path = tmp_path / "y.json"
        io.save_batch(path, batch, g)
        doc = json.loads(path.read_text())
        doc["surprise"] = 1
        path.write_text(json.dumps(doc))
        with pytest.raises(ValidationError, match="unknown keys"):
            io.load_batch(path)
