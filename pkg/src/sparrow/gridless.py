"""Gridless row-norm recovery on uniform linear arrays.

For a ULA the rank-one sum A S A^H is a Hermitian Toeplitz matrix, so the
grid is replaced by the first Toeplitz column ``u`` and frequencies are
recovered afterwards by decomposing Toep(u) into atoms
``sum_k s_k a(nu_k) a(nu_k)^H`` (subspace rotation on the dominant
eigenvectors plus a least-squares magnitude fit).  The atomic-norm
denoising program is implemented as well; its minimizer matches the
gridless row-norm program after a sqrt(N) rescaling, which
``check_anm_equivalence`` audits at runtime.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

import scipy.optimize

from . import conic
from .errors import (
    ConicError,
    DecompositionError,
    NonUniqueDecompositionError,
    UnsupportedGeometryError,
    ValidationError,
)
from .model import ArrayGeometry, MmvBatch, SampleCovariance, steering_derivative, steering_matrix


def toeplitz(u) -> np.ndarray:
    """Hermitian Toeplitz matrix with first column ``u``."""
    u = np.asarray(u, dtype=complex)
    return scipy.linalg.toeplitz(u, u.conj())


def toeplitz_basis(m: int) -> list[np.ndarray]:
    """Hermitian basis for Toep(u), ordered [u0, Re u1, Im u1, ...]."""
    out = [np.eye(m, dtype=complex)]
    for k in range(1, m):
        d = np.diag(np.ones(m - k), -k).astype(complex)
        out.append(d + d.T)
        out.append(1j * d - 1j * d.T)
    return out


def toeplitz_params_to_u(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    m = (theta.size + 1) // 2
    u = np.zeros(m, dtype=complex)
    u[0] = theta[0]
    u[1:] = theta[1::2] + 1j * theta[2::2]
    return u


def _require_ula(geometry: ArrayGeometry) -> None:
    if not geometry.is_ula:
        raise UnsupportedGeometryError("gridless estimation requires a uniform linear array")


def toeplitz_from_atoms(freqs, mags, m: int) -> np.ndarray:
    """First column of sum_k s_k a(nu_k) a(nu_k)^H on an M-sensor ULA."""
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    mags = np.atleast_1d(np.asarray(mags, dtype=float))
    if freqs.size != mags.size:
        raise ValidationError("frequencies and magnitudes must have equal length")
    if freqs.size > m:
        raise ValidationError("at most M atoms are representable")
    if np.any(mags <= 0):
        raise ValidationError("magnitudes must be positive")
    if np.unique(freqs).size != freqs.size:
        raise ValidationError("frequencies must be distinct")
    a = steering_matrix(ArrayGeometry.ula(m), freqs)
    return a @ mags.astype(complex)


@dataclass(frozen=True)
class AtomicDecomposition:
    frequencies: np.ndarray
    magnitudes: np.ndarray

    @property
    def rank(self) -> int:
        return self.frequencies.size


@dataclass(frozen=True)
class GridlessSolution:
    u: np.ndarray
    objective: float
    solver: str
    conic: conic.ConicSolution
    stationarity: float = np.inf  # certificate: max profitable-atom violation


@dataclass(frozen=True)
class AnmSolution:
    v: np.ndarray
    v_n: np.ndarray
    y0: np.ndarray
    atomic_norm: float
    objective: float
    conic: conic.ConicSolution


def _check(sol: conic.ConicSolution, what: str) -> None:
    if sol.status != "optimal":
        raise ConicError(
            f"{what}: conic solver returned status={sol.status} "
            f"(gap={sol.duality_gap:.2e}, pinf={sol.primal_infeas:.2e})"
        )


def _toeplitz_psd_block(var_offset: int, m: int) -> conic.LmiBlock:
    lmi = conic.HermitianLmi(m)
    for i, basis in enumerate(toeplitz_basis(m)):
        lmi.add_term(var_offset + i, basis)
    return lmi.build()


# ---------------------------------------------------------------------------
# Atomic Newton polish
#
# Both gridless forms reduce to  f(T) = Tr((T + g I)^-1 Q) + Tr(T)/M  over
# PSD Toeplitz T (Q = R for the covariance form, Y Y^H / N for the snapshot
# form, Y Y^H with g = lam sqrt(N) for atomic-norm denoising).  On the face
# T = sum_l m_l a(nu_l) a(nu_l)^H the objective is smooth, so an interior
# solution is refined to machine precision and certified globally optimal by
# the first-order atomic condition  a(nu)^H G a(nu) <= 1  for all nu, with
# G = (T + g I)^-1 Q (T + g I)^-1.  This sidesteps the accuracy floor of the
# interior-point endgame on degenerate instances.
# ---------------------------------------------------------------------------

_CERT_GRID = 4096
_CERT_TOL = 1e-7


def _reduced_value_grad(freqs, mags, q_mat, gamma):
    m = q_mat.shape[0]
    geo = ArrayGeometry.ula(m)
    a = steering_matrix(geo, freqs)
    t = (a * mags) @ a.conj().T if freqs.size else np.zeros((m, m), dtype=complex)
    w = t + gamma * np.eye(m)
    cf = scipy.linalg.cho_factor(0.5 * (w + w.conj().T), lower=True, check_finite=False)
    winv_q = scipy.linalg.cho_solve(cf, q_mat, check_finite=False)
    g_mat = scipy.linalg.cho_solve(cf, winv_q.conj().T, check_finite=False)
    g_mat = 0.5 * (g_mat + g_mat.conj().T)
    val = float(np.trace(winv_q).real + mags.sum())
    if freqs.size:
        ga = g_mat @ a
        da = steering_derivative(geo, freqs)
        grad_m = 1.0 - np.einsum("ij,ij->j", a.conj(), ga).real
        grad_f = -2.0 * mags * np.einsum("ij,ij->j", da.conj(), ga).real
    else:
        grad_m = np.zeros(0)
        grad_f = np.zeros(0)
    return val, grad_f, grad_m, g_mat


def _atom_gain(g_mat, n_grid=_CERT_GRID):
    nu = -1.0 + 2.0 * np.arange(n_grid) / n_grid
    a = steering_matrix(ArrayGeometry.ula(g_mat.shape[0]), nu)
    return nu, np.einsum("ij,ij->j", a.conj(), g_mat @ a).real


def _polish_atoms(freqs, mags, q_mat, gamma):
    """Minimize the reduced objective over atoms; returns a certificate too."""
    m = q_mat.shape[0]
    freqs = np.asarray(freqs, dtype=float).copy()
    mags = np.asarray(mags, dtype=float).copy()
    for _ in range(m + 2):
        r = freqs.size
        if r:
            def fun(theta):
                fr = np.mod(theta[:r] + 1.0, 2.0) - 1.0
                mg = theta[r:]
                val, gf, gm, _ = _reduced_value_grad(fr, mg, q_mat, gamma)
                return val, np.concatenate([gf, gm])

            theta0 = np.concatenate([freqs, mags])
            bounds = [(None, None)] * r + [(0.0, None)] * r
            res = scipy.optimize.minimize(
                fun, theta0, jac=True, method="L-BFGS-B", bounds=bounds,
                options={"maxiter": 500, "ftol": 1e-18, "gtol": 1e-13},
            )
            freqs = np.mod(res.x[:r] + 1.0, 2.0) - 1.0
            mags = res.x[r:]
            keep = mags > 1e-12 * max(mags.max(initial=0.0), 1.0)
            freqs, mags = freqs[keep], mags[keep]
            # merge collapsed atoms
            if freqs.size > 1:
                order = np.argsort(freqs)
                freqs, mags = freqs[order], mags[order]
                merged_f, merged_m = [freqs[0]], [mags[0]]
                for fr, mg in zip(freqs[1:], mags[1:]):
                    if abs(fr - merged_f[-1]) < 1e-9:
                        merged_m[-1] += mg
                    else:
                        merged_f.append(fr)
                        merged_m.append(mg)
                freqs, mags = np.asarray(merged_f), np.asarray(merged_m)
        val, _, _, g_mat = _reduced_value_grad(freqs, mags, q_mat, gamma)
        nu, gain = _atom_gain(g_mat)
        worst = int(np.argmax(gain))
        viol = float(gain[worst] - 1.0)
        if viol <= _CERT_TOL:
            return freqs, mags, val, max(viol, 0.0)
        if freqs.size >= m:
            break
        freqs = np.append(freqs, nu[worst])
        mags = np.append(mags, 1e-6 * max(mags.max(initial=1.0), 1.0))
    val, _, _, g_mat = _reduced_value_grad(freqs, mags, q_mat, gamma)
    _, gain = _atom_gain(g_mat)
    return freqs, mags, val, float(max(gain.max() - 1.0, 0.0))


def _polish_u(u_raw, raw_objective, q_mat, gamma, eps_rank=1e-4):
    """Refine a solver-returned first Toeplitz column on its atomic face."""
    m = q_mat.shape[0]
    order = estimate_model_order(u_raw, eps_rank) if np.abs(u_raw).max(initial=0.0) > 0 else 0
    if order == 0 or order >= m:
        # zero face or ambiguous rank: let the greedy repair build the atoms
        freqs0 = np.zeros(0)
        mags0 = np.zeros(0)
    else:
        t = toeplitz(u_raw)
        w, v = np.linalg.eigh(t)
        es = v[:, m - order :]
        phi, *_ = np.linalg.lstsq(es[:-1], es[1:], rcond=None)
        z = np.linalg.eigvals(phi)
        freqs0 = np.mod(-np.angle(z) / np.pi + 1.0, 2.0) - 1.0
        a = steering_matrix(ArrayGeometry.ula(m), freqs0)
        design = np.vstack([a.real, a.imag])
        target = np.concatenate([u_raw.real, u_raw.imag])
        mags0, *_ = np.linalg.lstsq(design, target, rcond=None)
        keep = mags0 > 0
        freqs0, mags0 = freqs0[keep], mags0[keep]
    freqs, mags, val, viol = _polish_atoms(freqs0, mags0, q_mat, gamma)
    ok = viol <= _CERT_TOL and val <= raw_objective + 1e-7 * (1.0 + abs(raw_objective))
    if not ok:
        return u_raw, raw_objective, viol, False
    u = toeplitz_from_atoms(freqs, mags, m) if freqs.size else np.zeros(m, dtype=complex)
    return u, val, viol, True


def gl_sparrow_snapshot(
    geometry: ArrayGeometry, batch: MmvBatch, lam: float, tol: float = conic.DEFAULT_TOL
) -> GridlessSolution:
    """Gridless snapshot form.

    minimize Tr(U_N)/N + Tr(Toep(u))/M subject to
    [[U_N, Y^H], [Y, Toep(u) + lam I]] PSD and Toep(u) PSD.
    """
    _require_ula(geometry)
    if lam <= 0:
        raise ValidationError("lambda must be positive")
    m = geometry.n_sensors
    if batch.n_sensors != m:
        raise ValidationError("geometry and measurements disagree on sensor count")
    n = batch.n_snapshots
    y = batch.y
    n_un = n * n
    n_u = 2 * m - 1
    c = np.zeros(n_un + n_u)
    c[:n] = 1.0 / n
    c[n_un] = 1.0  # Tr(Toep(u))/M = u0

    dim = n + m
    const = np.zeros((dim, dim), dtype=complex)
    const[n:, :n] = y
    const[:n, n:] = y.conj().T
    const[n:, n:] = lam * np.eye(m)
    lmi = conic.HermitianLmi(dim).add_const(const).set_corner(0, n)
    for i, basis in enumerate(toeplitz_basis(m)):
        h = np.zeros((dim, dim), dtype=complex)
        h[n:, n:] = basis
        lmi.add_term(n_un + i, h)
    problem = conic.ConicProblem(
        c=c, blocks=[lmi.build(), _toeplitz_psd_block(n_un, m)]
    )
    sol = conic.solve_sdp(problem, tol=tol)
    u_raw = toeplitz_params_to_u(sol.x[n_un:])
    q_mat = y @ y.conj().T / n
    u, objective, viol, ok = _polish_u(u_raw, float(sol.objective_value), q_mat, lam)
    if not ok:
        _check(sol, "gridless snapshot-form program")
    return GridlessSolution(
        u=u, objective=objective, solver="gl_snapshot", conic=sol, stationarity=viol
    )


def gl_sparrow_covariance(
    geometry: ArrayGeometry, cov: SampleCovariance, lam: float, tol: float = conic.DEFAULT_TOL
) -> GridlessSolution:
    """Gridless covariance form, independent of the snapshot count.

    minimize Tr(U_M R) + Tr(Toep(u))/M subject to
    [[U_M, I], [I, Toep(u) + lam I]] PSD and Toep(u) PSD.
    """
    _require_ula(geometry)
    if lam <= 0:
        raise ValidationError("lambda must be positive")
    m = geometry.n_sensors
    if cov.r.shape[0] != m:
        raise ValidationError("geometry and covariance disagree on sensor count")
    m_un = m * m
    n_u = 2 * m - 1
    c = np.zeros(m_un + n_u)
    c[:m_un] = conic.herm_trace_coeffs(cov.r)
    c[m_un] = 1.0

    dim = 2 * m
    const = np.zeros((dim, dim), dtype=complex)
    const[m:, :m] = np.eye(m)
    const[:m, m:] = np.eye(m)
    const[m:, m:] = lam * np.eye(m)
    lmi = conic.HermitianLmi(dim).add_const(const).set_corner(0, m)
    for i, basis in enumerate(toeplitz_basis(m)):
        h = np.zeros((dim, dim), dtype=complex)
        h[m:, m:] = basis
        lmi.add_term(m_un + i, h)
    problem = conic.ConicProblem(
        c=c, blocks=[lmi.build(), _toeplitz_psd_block(m_un, m)]
    )
    sol = conic.solve_sdp(problem, tol=tol)
    u_raw = toeplitz_params_to_u(sol.x[m_un:])
    u, objective, viol, ok = _polish_u(u_raw, float(sol.objective_value), cov.r, lam)
    if not ok:
        _check(sol, "gridless covariance-form program")
    return GridlessSolution(
        u=u, objective=objective, solver="gl_covariance", conic=sol, stationarity=viol
    )


def estimate_model_order(u, eps_rank: float = 1e-6) -> int:
    """Numerical rank of Toep(u): eigenvalues above eps_rank * max."""
    u = np.asarray(u, dtype=complex)
    t = toeplitz(u)
    w = np.linalg.eigvalsh(t)
    top = w.max(initial=0.0)
    if top <= 0.0:
        return 0
    return int(np.sum(w > eps_rank * top))


def vandermonde_decomposition(u, order: int, residual_rtol: float = 1e-6) -> AtomicDecomposition:
    """Recover atoms of a PSD Toeplitz matrix of numerical rank ``order``.

    Frequencies come from the shift invariance of the dominant eigenvectors
    (pencil rotation); magnitudes solve the first-column linear system
    A(nu) s = u in the least-squares sense.  Fails loudly when the
    synthesized matrix misses the input by more than ``residual_rtol``,
    e.g. when the true rank exceeds the requested order.
    """
    u = np.asarray(u, dtype=complex)
    m = u.size
    if order >= m:
        raise NonUniqueDecompositionError(
            f"order {order} with {m} sensors: unique decomposition needs order < M"
        )
    if order < 1:
        raise ValidationError("order must be at least 1")
    t = toeplitz(u)
    scale = np.linalg.norm(t)
    w, v = np.linalg.eigh(t)
    if w.min() < -1e-8 * max(w.max(initial=0.0), 1e-300):
        raise ValidationError("Toeplitz matrix must be positive semidefinite")
    es = v[:, m - order :]
    phi, *_ = np.linalg.lstsq(es[:-1], es[1:], rcond=None)
    z = np.linalg.eigvals(phi)
    freqs = np.sort(np.mod(-np.angle(z) / np.pi + 1.0, 2.0) - 1.0)
    a = steering_matrix(ArrayGeometry.ula(m), freqs)
    design = np.vstack([a.real, a.imag])
    target = np.concatenate([u.real, u.imag])
    mags, *_ = np.linalg.lstsq(design, target, rcond=None)
    if np.any(mags < -1e-8 * max(np.abs(mags).max(initial=0.0), 1e-300)):
        raise DecompositionError("recovered magnitudes are negative beyond tolerance")
    mags = np.maximum(mags, 0.0)
    synth = toeplitz(a @ mags.astype(complex))
    if np.linalg.norm(synth - t) > residual_rtol * max(scale, 1e-300):
        raise DecompositionError(
            "synthesized Toeplitz matrix misses the input; rank estimate likely wrong"
        )
    keep = mags > 0
    return AtomicDecomposition(frequencies=freqs[keep], magnitudes=mags[keep])


def anm_sdp(
    geometry: ArrayGeometry, batch: MmvBatch, lam: float, tol: float = conic.DEFAULT_TOL
) -> AnmSolution:
    """Atomic-norm denoising of the measurement matrix.

    minimize ||Y - Y0||_F^2 / 2 + (lam sqrt(N)/2) (Tr(V_N) + Tr(Toep(v))/M)
    subject to [[V_N, Y0^H], [Y0, Toep(v)]] PSD and Toep(v) PSD, with the
    quadratic misfit carried by an epigraph block
    [[T, (Y-Y0)^H], [Y-Y0, I_M]].
    """
    _require_ula(geometry)
    if lam <= 0:
        raise ValidationError("lambda must be positive")
    m = geometry.n_sensors
    if batch.n_sensors != m:
        raise ValidationError("geometry and measurements disagree on sensor count")
    n = batch.n_snapshots
    y = batch.y
    n_un = n * n
    w = lam * np.sqrt(n)

    # variable layout: T params | V_N params | Re/Im Y0 | Toeplitz params
    off_v = n_un
    off_y0 = 2 * n_un
    off_u = off_y0 + 2 * m * n
    n_vars = off_u + 2 * m - 1
    c = np.zeros(n_vars)
    c[:n] = 0.5
    c[off_v : off_v + n] = 0.5 * w
    c[off_u] = 0.5 * w

    dim = n + m

    def y0_term(i: int, j: int, imag: bool) -> np.ndarray:
        h = np.zeros((dim, dim), dtype=complex)
        val = 1j if imag else 1.0
        h[n + i, j] = val
        h[j, n + i] = np.conj(val)
        return h

    epi_const = np.zeros((dim, dim), dtype=complex)
    epi_const[n:, :n] = y
    epi_const[:n, n:] = y.conj().T
    epi_const[n:, n:] = np.eye(m)
    epi = conic.HermitianLmi(dim).add_const(epi_const).set_corner(0, n)
    anm = conic.HermitianLmi(dim).set_corner(off_v, n)
    var = off_y0
    for i in range(m):
        for j in range(n):
            for imag in (False, True):
                epi.add_term(var, -y0_term(i, j, imag))
                anm.add_term(var, y0_term(i, j, imag))
                var += 1
    for i, basis in enumerate(toeplitz_basis(m)):
        h = np.zeros((dim, dim), dtype=complex)
        h[n:, n:] = basis
        anm.add_term(off_u + i, h)
    problem = conic.ConicProblem(
        c=c, blocks=[epi.build(), anm.build(), _toeplitz_psd_block(off_u, m)]
    )
    sol = conic.solve_sdp(problem, tol=tol)
    v_raw = toeplitz_params_to_u(sol.x[off_u:])
    # reduced objective over Toep(v): (w/2) [Tr((T + w I)^-1 Y Y^H) + Tr(T)/M]
    q_mat = y @ y.conj().T
    raw_reduced = 2.0 * float(sol.objective_value) / w
    v, reduced, viol, ok = _polish_u(v_raw, raw_reduced, q_mat, w)
    if not ok:
        _check(sol, "atomic-norm program")
        y0 = (
            sol.x[off_y0 : off_y0 + 2 * m * n : 2]
            + 1j * sol.x[off_y0 + 1 : off_y0 + 2 * m * n : 2]
        ).reshape(m, n)
        v_n = conic.params_to_herm(sol.x[off_v : off_v + n_un], n)
    else:
        t = toeplitz(v)
        y0 = t @ np.linalg.solve(t + w * np.eye(m), y)
        b, *_ = np.linalg.lstsq(t, y0, rcond=None)
        v_n = y0.conj().T @ b
        v_n = 0.5 * (v_n + v_n.conj().T)
    atomic = 0.5 * float(np.trace(v_n).real + v[0].real)
    objective = 0.5 * float(np.linalg.norm(y - y0) ** 2) + w * atomic
    return AnmSolution(v=v, v_n=v_n, y0=y0, atomic_norm=atomic, objective=objective, conic=sol)


@dataclass(frozen=True)
class EquivalenceReport:
    u_gap: float
    objective_gap: float
    raw_objective_gap: float
    tol: float

    @property
    def passed(self) -> bool:
        return (
            self.u_gap <= self.tol
            and self.objective_gap <= self.tol
            and self.raw_objective_gap <= self.tol
        )


def check_anm_equivalence(
    gl: GridlessSolution, anm: AnmSolution, n_snapshots: int, lam: float, tol: float = 1e-5
) -> EquivalenceReport:
    """Audit u = v / sqrt(N) and the lam*N/2 objective rescaling.

    ``raw_objective_gap`` compares the two interior-point objective values
    before any atomic refinement, so the routes stay independent witnesses.
    """
    n = n_snapshots
    u_gap = float(np.abs(gl.u - anm.v / np.sqrt(n)).max())
    scaled = gl.objective * lam * n / 2.0
    obj_gap = abs(scaled - anm.objective) / (1.0 + abs(anm.objective))
    raw_scaled = gl.conic.objective_value * lam * n / 2.0
    raw_gap = abs(raw_scaled - anm.conic.objective_value) / (
        1.0 + abs(anm.conic.objective_value)
    )
    return EquivalenceReport(
        u_gap=u_gap, objective_gap=obj_gap, raw_objective_gap=raw_gap, tol=tol
    )
