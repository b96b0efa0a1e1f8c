"""Reference estimators: mixed-norm oracle, subspace methods, covariance fitting.

``l21_solve`` is the direct solver for the row-sparsity penalized least
squares problem and serves as the independent oracle for the row-norm
reformulation.  MUSIC, root-MUSIC, the two covariance-fitting programs and
the stochastic Cramer-Rao bound are the comparison methods used by the
benchmark harness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import conic
from .errors import ConicError, DefinitenessError, UnsupportedGeometryError, ValidationError
from .grid import Dictionary
from .model import (
    ArrayGeometry,
    FrequencyGrid,
    MmvBatch,
    SampleCovariance,
    SourceScene,
    steering_derivative,
    steering_matrix,
)
from .numerics import hermitian_eig


# ---------------------------------------------------------------------------
# Row-sparse mixed-norm oracle (accelerated proximal gradient)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class L21Solution:
    x: np.ndarray
    objective: float
    iterations: int
    converged: bool
    objective_trace: np.ndarray | None = None


def l21_objective(x: np.ndarray, a: np.ndarray, y: np.ndarray, lam: float) -> float:
    n = y.shape[1]
    fit = 0.5 * np.linalg.norm(a @ x - y) ** 2
    return float(fit + lam * np.sqrt(n) * np.linalg.norm(x, axis=1).sum())


def _row_shrink(x: np.ndarray, thresh: float) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1)
    scale = np.maximum(1.0 - thresh / np.maximum(norms, 1e-300), 0.0)
    return x * scale[:, None]


def l21_solve(
    d: Dictionary,
    batch: MmvBatch,
    lam: float,
    tol: float = 1e-13,
    max_iter: int = 100_000,
) -> L21Solution:
    """FISTA with row-wise group shrinkage and monotone restart.

    Minimizes ||A X - Y||_F^2 / 2 + lam sqrt(N) sum_k ||x_k||_2; stops when
    the relative objective decrease stays below ``tol`` for twenty
    consecutive iterations (momentum phases can stall progress briefly, so
    a single quiet step is not trusted).
    """
    if lam <= 0:
        raise ValidationError("lambda must be positive")
    a = d.a
    y = batch.y
    n = batch.n_snapshots
    k_grid = d.size
    lip = np.linalg.norm(a, 2) ** 2
    step = 1.0 / lip
    thresh = step * lam * np.sqrt(n)
    ah = a.conj().T

    x = np.zeros((k_grid, n), dtype=complex)
    z = x
    t_mom = 1.0
    f_x = l21_objective(x, a, y, lam)
    history = [f_x]
    quiet = 0
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        grad = ah @ (a @ z - y)
        x_new = _row_shrink(z - step * grad, thresh)
        f_new = l21_objective(x_new, a, y, lam)
        if f_new > f_x:
            # monotone restart: plain shrinkage step from the last iterate
            grad = ah @ (a @ x - y)
            x_new = _row_shrink(x - step * grad, thresh)
            f_new = l21_objective(x_new, a, y, lam)
            t_mom = 1.0
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom * t_mom))
        z = x_new + ((t_mom - 1.0) / t_next) * (x_new - x)
        quiet = quiet + 1 if f_x - f_new <= tol * (1.0 + abs(f_new)) else 0
        x, f_x, t_mom = x_new, f_new, t_next
        history.append(f_x)
        if quiet >= 20:
            converged = True
            break
    return L21Solution(
        x=x, objective=f_x, iterations=it, converged=converged,
        objective_trace=np.asarray(history),
    )


# ---------------------------------------------------------------------------
# Subspace methods
# ---------------------------------------------------------------------------

def music_spectrum(
    cov: SampleCovariance, order: int, grid: FrequencyGrid, geometry: ArrayGeometry
):
    """Pseudo-spectrum 1 / ||E_n^H a(nu)||^2 and its top local maxima.

    ``order`` is the assumed number of sources; peaks are circular local
    maxima of the spectrum, padded deterministically with the largest
    remaining bins when fewer than ``order`` maxima exist.
    """
    m = geometry.n_sensors
    if not 1 <= order < m:
        raise ValidationError("model order must satisfy 1 <= L < M")
    _, v = hermitian_eig(cov.r)
    en = v[:, order:]
    a = steering_matrix(geometry, grid.points)
    denom = np.linalg.norm(en.conj().T @ a, axis=0) ** 2
    spectrum = 1.0 / np.maximum(denom, 1e-300)
    peak_idx = _top_peaks(spectrum, order)
    return spectrum, grid.points[peak_idx]


def _top_peaks(values: np.ndarray, count: int) -> np.ndarray:
    """Indices of the ``count`` largest circular local maxima (padded)."""
    left = np.roll(values, 1)
    right = np.roll(values, -1)
    is_peak = (values > left) & (values >= right)
    peaks = np.where(is_peak)[0]
    order = peaks[np.argsort(values[peaks])[::-1]]
    if order.size >= count:
        return np.sort(order[:count])
    rest = np.setdiff1d(np.arange(values.size), order)
    pad = rest[np.argsort(values[rest])[::-1]][: count - order.size]
    return np.sort(np.concatenate([order, pad]))


def root_music(
    cov: SampleCovariance, order: int, geometry: ArrayGeometry, return_moduli: bool = False
):
    """Root-form subspace estimator for uniform linear arrays.

    The 2(M-1) roots of the noise-subspace polynomial come in
    conjugate-reciprocal pairs sharing one frequency; the ``order`` pairs
    closest to the unit circle are selected and each pair's circular-mean
    angle is mapped through nu = -arg(z)/pi.  With a degenerate (e.g.
    isotropic) covariance the roots collapse toward the origin and the
    returned frequencies carry root moduli far from one, which
    ``return_moduli`` exposes as a confidence signal.
    """
    if not geometry.is_ula:
        raise UnsupportedGeometryError("root-form estimator requires a uniform linear array")
    m = geometry.n_sensors
    if not 1 <= order < m:
        raise ValidationError("model order must satisfy 1 <= L < M")
    _, v = hermitian_eig(cov.r)
    en = v[:, order:]
    c = en @ en.conj().T
    gam = np.array([np.trace(c, offset=k) for k in range(m - 1, -m, -1)])
    roots = np.roots(gam)
    roots = roots[np.abs(roots) > 0] if roots.size else roots
    pairs = []
    pool = list(roots)
    while len(pool) >= 2:
        a = pool.pop()
        target = 1.0 / np.conj(a)
        j = int(np.argmin([abs(b - target) for b in pool]))
        b = pool.pop(j)
        dist = abs(np.log(max(abs(a), 1e-300))) + abs(np.log(max(abs(b), 1e-300)))
        ang = np.angle(np.exp(1j * np.angle(a)) + np.exp(1j * np.angle(b)))
        pairs.append((dist, ang, min(abs(a), abs(b))))
    pairs.sort(key=lambda t: t[0])
    while len(pairs) < order:  # degenerate spectra: pad deterministically
        pairs.append((np.inf, 0.0, 0.0))
    sel = pairs[:order]
    freqs = np.sort(np.mod(np.array([-ang / np.pi for _, ang, _ in sel]) + 1.0, 2.0) - 1.0)
    if return_moduli:
        return freqs, np.array([mod for _, _, mod in sel])
    return freqs


# ---------------------------------------------------------------------------
# Covariance fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpiceSolution:
    p: np.ndarray
    noise: float
    objective: float
    variant: str
    conic: conic.ConicSolution


def _check(sol: conic.ConicSolution, what: str, accept_gap: float | None = None) -> None:
    if sol.status == "optimal":
        return
    if (
        accept_gap is not None
        and sol.duality_gap <= accept_gap
        and sol.primal_infeas <= accept_gap
        and sol.dual_infeas <= accept_gap
    ):
        return
    raise ConicError(
        f"{what}: conic solver returned status={sol.status} "
        f"(gap={sol.duality_gap:.2e})"
    )


def _spice_problem(d: Dictionary, offdiag: np.ndarray, p_weights: np.ndarray, eps_weight: float):
    """Epigraph program min Tr(W) + weights @ (p, eps) with
    [[W, offdiag], [offdiag^H, A P A^H + eps I]] PSD."""
    m, k_grid = d.a.shape
    m_un = m * m
    n_vars = m_un + k_grid + 1
    c = np.zeros(n_vars)
    c[:m] = 1.0  # Tr(W)
    c[m_un : m_un + k_grid] = p_weights
    c[-1] = eps_weight
    dim = 2 * m
    const = np.zeros((dim, dim), dtype=complex)
    const[:m, m:] = offdiag
    const[m:, :m] = offdiag.conj().T
    lmi = conic.HermitianLmi(dim).add_const(const).set_corner(0, m)
    for k in range(k_grid):
        h = np.zeros((dim, dim), dtype=complex)
        h[m:, m:] = np.outer(d.a[:, k], d.a[:, k].conj())
        lmi.add_term(m_un + k, h)
    h = np.zeros((dim, dim), dtype=complex)
    h[m:, m:] = np.eye(m)
    lmi.add_term(m_un + k_grid, h)
    return conic.ConicProblem(
        c=c, blocks=[lmi.build()], nonneg=np.arange(m_un, n_vars)
    )


def spice_undersampled(
    d: Dictionary,
    cov: SampleCovariance,
    tol: float = conic.DEFAULT_TOL,
    accept_gap: float | None = None,
) -> SpiceSolution:
    """Covariance fit for few snapshots: Tr(R0^-1 R^2) + Tr(R0) - 2 Tr(R).

    R0 = A P A^H + eps I with P >= 0 diagonal; the quadratic term enters
    through the Schur epigraph [[W, R], [R, R0]] >= 0.  Fine uniform grids
    on a ULA make the program heavily degenerate, so callers that only need
    estimator-level accuracy may pass ``accept_gap`` to keep a best iterate
    whose residuals all fall below it (the conic status stays visible in
    the returned solution).
    """
    m = d.n_sensors
    col_norms = np.linalg.norm(d.a, axis=0) ** 2
    problem = _spice_problem(d, cov.r, col_norms, float(m))
    sol = conic.solve_sdp(problem, tol=tol)
    _check(sol, "undersampled covariance fit", accept_gap)
    k_grid = d.size
    p = np.clip(sol.x[m * m : m * m + k_grid], 0.0, None)
    eps = max(float(sol.x[-1]), 0.0)
    objective = float(sol.objective_value) - 2.0 * float(np.trace(cov.r).real)
    return SpiceSolution(p=p, noise=eps, objective=objective, variant="undersampled", conic=sol)


def spice_oversampled(
    d: Dictionary,
    cov: SampleCovariance,
    tol: float = conic.DEFAULT_TOL,
    accept_gap: float | None = None,
) -> SpiceSolution:
    """Covariance fit for many snapshots: Tr(R0^-1 R) + Tr(R0 R^-1) - 2M.

    Requires a nonsingular sample covariance; the linear term carries the
    data-dependent weights a_k^H R^-1 a_k.  See ``spice_undersampled`` for
    the ``accept_gap`` escape hatch on degenerate fine grids.
    """
    m = d.n_sensors
    w, v = np.linalg.eigh(cov.r)
    if w.min() <= 1e-12 * max(w.max(), 1e-300):
        raise DefinitenessError("sample covariance must be nonsingular (need N >= M)")
    r_half = v @ np.diag(np.sqrt(w)) @ v.conj().T
    r_inv = v @ np.diag(1.0 / w) @ v.conj().T
    p_weights = np.einsum("ij,ij->j", d.a.conj(), r_inv @ d.a).real
    eps_weight = float(np.trace(r_inv).real)
    problem = _spice_problem(d, r_half, p_weights, eps_weight)
    sol = conic.solve_sdp(problem, tol=tol)
    _check(sol, "oversampled covariance fit", accept_gap)
    k_grid = d.size
    p = np.clip(sol.x[m * m : m * m + k_grid], 0.0, None)
    eps = max(float(sol.x[-1]), 0.0)
    objective = float(sol.objective_value) - 2.0 * m
    return SpiceSolution(p=p, noise=eps, objective=objective, variant="oversampled", conic=sol)


def spice_objective(d: Dictionary, cov: SampleCovariance, p, eps: float, variant: str) -> float:
    """Direct evaluation of the written covariance-fit objectives."""
    r0 = (d.a * np.asarray(p, dtype=float)) @ d.a.conj().T + eps * np.eye(d.n_sensors)
    r0 = 0.5 * (r0 + r0.conj().T)
    if variant == "undersampled":
        val = np.trace(np.linalg.solve(r0, cov.r @ cov.r)).real
        return float(val + np.trace(r0).real - 2.0 * np.trace(cov.r).real)
    if variant == "oversampled":
        val = np.trace(np.linalg.solve(r0, cov.r)).real
        val += np.trace(np.linalg.solve(cov.r, r0)).real
        return float(val - 2.0 * d.n_sensors)
    raise ValidationError(f"unknown variant {variant!r}")


# ---------------------------------------------------------------------------
# Stochastic Cramer-Rao bound
# ---------------------------------------------------------------------------

def stochastic_crb(
    scene: SourceScene, noise_power: float, n_snapshots: int, geometry: ArrayGeometry
) -> np.ndarray:
    """Unconditional bound on the frequency estimate covariance.

    sigma^2/(2N) { Re[ (D^H P_A^perp D) o (P A^H R^-1 A P)^T ] }^-1 with
    D the steering derivatives, P the source covariance and o the
    elementwise product.
    """
    if noise_power <= 0:
        raise ValidationError("noise power must be positive")
    l = scene.n_sources
    m = geometry.n_sensors
    if l >= m:
        raise ValidationError("need fewer sources than sensors")
    a = steering_matrix(geometry, scene.frequencies)
    if np.linalg.matrix_rank(a) < l:
        raise ValidationError("steering matrix is rank deficient")
    dmat = steering_derivative(geometry, scene.frequencies)
    if scene.correlation is not None:
        sq = np.sqrt(scene.powers)
        p = np.outer(sq, sq) * scene.correlation
    else:
        p = np.diag(scene.powers).astype(complex)
    r = a @ p @ a.conj().T + noise_power * np.eye(m)
    r_inv_a = np.linalg.solve(r, a)
    proj = a @ np.linalg.solve(a.conj().T @ a, a.conj().T)
    h = dmat.conj().T @ (np.eye(m) - proj) @ dmat
    g = p @ (a.conj().T @ r_inv_a) @ p
    fim = np.real(h * g.T)
    crb = noise_power / (2.0 * n_snapshots) * np.linalg.inv(fim)
    return 0.5 * (crb + crb.T)
