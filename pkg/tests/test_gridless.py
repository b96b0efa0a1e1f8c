import numpy as np
import pytest

from sparrow import grid, gridless, model
from sparrow.errors import (
    DecompositionError,
    NonUniqueDecompositionError,
    UnsupportedGeometryError,
)
from sparrow.model import ArrayGeometry, MmvBatch, SampleCovariance


def noisy_batch(seed, n=5, snr_db=3.0, freqs=(0.35, 0.5)):
    g = ArrayGeometry.ula(6)
    scene = model.SourceScene(frequencies=np.asarray(freqs), powers=np.ones(len(freqs)))
    sigma2 = model.snr_to_noise_power(snr_db)
    batch = model.simulate_mmv(g, scene, n, sigma2, seed=seed)
    lam = grid.select_lambda(sigma2, 6)
    return g, batch, model.sample_covariance(batch), lam


class TestToeplitzAtoms:
    def test_single_atom_at_zero(self):
        u = gridless.toeplitz_from_atoms([0.0], [2.0], 3)
        assert np.allclose(u, [2.0, 2.0, 2.0])

    def test_single_atom_half(self):
        u = gridless.toeplitz_from_atoms([0.5], [1.0], 3)
        assert np.allclose(u, [1.0, -1.0j, -1.0])

    def test_random_atoms_psd_with_matching_rank(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            r = rng.integers(1, 5)
            freqs = np.sort(rng.uniform(-1, 0.98, r))
            if r > 1 and np.min(np.diff(freqs)) < 0.05:
                continue
            mags = rng.uniform(0.2, 2.0, r)
            u = gridless.toeplitz_from_atoms(freqs, mags, 6)
            w = np.linalg.eigvalsh(gridless.toeplitz(u))
            assert w.min() >= -1e-10 * w.max()
            assert np.sum(w > 1e-8 * w.max()) == r


class TestGridlessSolvers:
    def test_zero_measurements(self):
        g = ArrayGeometry.ula(6)
        batch = MmvBatch(y=np.zeros((6, 4), dtype=complex))
        sol = gridless.gl_sparrow_snapshot(g, batch, 0.5)
        assert np.abs(sol.u).max() == 0.0

    def test_zero_covariance(self):
        g = ArrayGeometry.ula(6)
        cov = SampleCovariance(r=np.zeros((6, 6), dtype=complex), n_snapshots=3)
        sol = gridless.gl_sparrow_covariance(g, cov, 0.5)
        assert np.abs(sol.u).max() == 0.0

    def test_non_ula_rejected(self):
        g = ArrayGeometry(positions=np.array([0.0, 1.0, 2.5]))
        batch = MmvBatch(y=np.zeros((3, 2), dtype=complex))
        with pytest.raises(UnsupportedGeometryError):
            gridless.gl_sparrow_snapshot(g, batch, 0.5)
        with pytest.raises(UnsupportedGeometryError):
            gridless.gl_sparrow_covariance(
                g, SampleCovariance(r=np.eye(3, dtype=complex), n_snapshots=1), 0.5
            )

    def test_noise_free_single_source_recovery(self):
        g = ArrayGeometry.ula(6)
        scene = model.SourceScene(frequencies=np.array([0.25]), powers=np.array([1.0]))
        batch = model.simulate_mmv(g, scene, 50, 0.0, seed=1)
        sol = gridless.gl_sparrow_snapshot(g, batch, 1e-5)
        order = gridless.estimate_model_order(sol.u)
        assert order == 1
        dec = gridless.vandermonde_decomposition(sol.u, order)
        assert abs(dec.frequencies[0] - 0.25) < 1e-6

    def test_forms_agree(self):
        worst = 0.0
        for seed in range(4):
            g, batch, cov, lam = noisy_batch(seed, n=[1, 4, 8, 12][seed])
            snap = gridless.gl_sparrow_snapshot(g, batch, lam)
            covf = gridless.gl_sparrow_covariance(g, cov, lam)
            worst = max(worst, np.abs(snap.u - covf.u).max())
            assert abs(snap.objective - covf.objective) <= 1e-6 * (1 + abs(covf.objective))
        assert worst <= 1e-5

    def test_covariance_form_ignores_snapshot_count(self):
        g, batch, cov, lam = noisy_batch(5)
        a = gridless.gl_sparrow_covariance(g, SampleCovariance(cov.r, 2), lam)
        b = gridless.gl_sparrow_covariance(g, SampleCovariance(cov.r, 500), lam)
        assert np.array_equal(a.u, b.u)

    def test_solution_is_psd(self):
        for seed in range(3):
            g, batch, cov, lam = noisy_batch(seed + 20)
            sol = gridless.gl_sparrow_covariance(g, cov, lam)
            w = np.linalg.eigvalsh(gridless.toeplitz(sol.u))
            assert w.min() >= -1e-8 * max(np.abs(sol.u).max(), 1e-300)


class TestModelOrder:
    def test_zero(self):
        assert gridless.estimate_model_order(np.zeros(4)) == 0

    def test_single_atom(self):
        u = gridless.toeplitz_from_atoms([0.3], [1.5], 4)
        assert gridless.estimate_model_order(u) == 1

    def test_two_atoms(self):
        u = gridless.toeplitz_from_atoms([-0.3, 0.3], [1.0, 0.7], 6)
        assert gridless.estimate_model_order(u) == 2


class TestVandermondeDecomposition:
    def test_single_atom_roundtrip(self):
        u = gridless.toeplitz_from_atoms([0.37], [1.3], 6)
        dec = gridless.vandermonde_decomposition(u, 1)
        assert abs(dec.frequencies[0] - 0.37) < 1e-10
        assert abs(dec.magnitudes[0] - 1.3) < 1e-10

    def test_two_atoms_roundtrip(self):
        u = gridless.toeplitz_from_atoms([-0.1, 0.3], [0.8, 1.1], 6)
        dec = gridless.vandermonde_decomposition(u, 2)
        assert np.abs(dec.frequencies - [-0.1, 0.3]).max() < 1e-8
        assert np.abs(dec.magnitudes - [0.8, 1.1]).max() < 1e-8

    def test_trace_identity(self):
        u = gridless.toeplitz_from_atoms([-0.4, 0.1, 0.6], [0.5, 1.0, 0.25], 6)
        dec = gridless.vandermonde_decomposition(u, 3)
        t = gridless.toeplitz(u)
        assert abs(dec.magnitudes.sum() * 6 - np.trace(t).real) <= 1e-6 * np.trace(t).real

    def test_full_order_rejected(self):
        u = gridless.toeplitz_from_atoms([0.2], [1.0], 4)
        with pytest.raises(NonUniqueDecompositionError):
            gridless.vandermonde_decomposition(u, 4)

    def test_white_component_fails_loudly(self):
        u = np.zeros(5, dtype=complex)
        u[0] = 2.0  # identity Toeplitz has full rank
        with pytest.raises(DecompositionError):
            gridless.vandermonde_decomposition(u, 2)


class TestAnm:
    def test_zero_measurements(self):
        g = ArrayGeometry.ula(6)
        sol = gridless.anm_sdp(g, MmvBatch(y=np.zeros((6, 3), dtype=complex)), 0.5)
        assert np.abs(sol.v).max() == 0.0
        assert np.abs(sol.y0).max() < 1e-7
        assert sol.atomic_norm < 1e-7

    def test_small_lambda_noise_free_recovery(self):
        g = ArrayGeometry.ula(6)
        scene = model.SourceScene(frequencies=np.array([0.25]), powers=np.array([1.0]))
        batch = model.simulate_mmv(g, scene, 8, 0.0, seed=2)
        sol = gridless.anm_sdp(g, batch, 1e-4)
        assert np.linalg.norm(sol.y0 - batch.y) < 1e-2 * np.linalg.norm(batch.y)
        order = gridless.estimate_model_order(sol.v)
        dec = gridless.vandermonde_decomposition(sol.v, order)
        best = dec.frequencies[np.argmax(dec.magnitudes)]
        assert abs(best - 0.25) < 1e-4

    def test_block_feasibility(self):
        g, batch, cov, lam = noisy_batch(3, n=4)
        sol = gridless.anm_sdp(g, batch, lam)
        n = batch.n_snapshots
        top = np.concatenate([sol.v_n, sol.y0.conj().T], axis=1)
        bottom = np.concatenate([sol.y0, gridless.toeplitz(sol.v)], axis=1)
        block = np.concatenate([top, bottom], axis=0)
        w = np.linalg.eigvalsh(0.5 * (block + block.conj().T))
        assert w.min() >= -1e-7 * max(w.max(), 1e-300)


class TestEquivalence:
    def test_snapshot_vs_anm(self):
        for seed in (0, 1, 2):
            g, batch, cov, lam = noisy_batch(seed, n=[2, 5, 9][seed])
            snap = gridless.gl_sparrow_snapshot(g, batch, lam)
            anm = gridless.anm_sdp(g, batch, lam)
            rep = gridless.check_anm_equivalence(snap, anm, batch.n_snapshots, lam)
            assert rep.passed, rep

    def test_identical_inputs_pass_tightly(self):
        g, batch, cov, lam = noisy_batch(7, n=4)
        snap = gridless.gl_sparrow_snapshot(g, batch, lam)
        fake = gridless.AnmSolution(
            v=snap.u * np.sqrt(batch.n_snapshots),
            v_n=np.eye(batch.n_snapshots, dtype=complex),
            y0=batch.y,
            atomic_norm=0.0,
            objective=snap.objective * lam * batch.n_snapshots / 2.0,
            conic=snap.conic,
        )
        rep = gridless.check_anm_equivalence(snap, fake, batch.n_snapshots, lam, tol=1e-12)
        assert rep.u_gap <= 1e-12

    def test_perturbed_solution_fails(self):
        g, batch, cov, lam = noisy_batch(8, n=4)
        snap = gridless.gl_sparrow_snapshot(g, batch, lam)
        anm = gridless.anm_sdp(g, batch, lam)
        bumped = gridless.AnmSolution(
            v=anm.v + 0.01, v_n=anm.v_n, y0=anm.y0,
            atomic_norm=anm.atomic_norm, objective=anm.objective, conic=anm.conic,
        )
        rep = gridless.check_anm_equivalence(snap, bumped, batch.n_snapshots, lam)
        assert not rep.passed
