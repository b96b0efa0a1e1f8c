"""Dense semidefinite programming in real symmetric inequality form.

Solves problems of the shape

    minimize    c @ x
    subject to  const_j + sum_i x_i coeff_{j,i}  >= 0   (PSD, one LMI per block)
                x_i >= 0                                 (i in nonneg)

with an infeasible-start primal-dual interior-point method (HKM scaling,
Mehrotra predictor-corrector, dense factorizations, iteration cap 200).

Complex Hermitian constraints enter through the standard real embedding
``[[Re H, -Im H], [Im H, Re H]]``, which preserves semidefiniteness and
doubles each eigenvalue.  ``HermitianLmi`` assembles embedded blocks from
complex pieces.

A block may declare a *corner variable*: a contiguous group of parameters
describing a full complex Hermitian matrix that occupies the top-left
corner of the (complex) block and appears nowhere else.  Such groups are
eliminated from the Schur complement through a Lyapunov solve instead of
being carried as explicit variables, which keeps snapshot-style programs
(whose auxiliary matrix grows with the number of measurement vectors)
tractable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ValidationError
from .numerics import require_hermitian

DEFAULT_TOL = 1e-8
MAX_ITER = 200
STEP_FRACTION = 0.98

_TRIU_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _triu(q: int) -> tuple[np.ndarray, np.ndarray]:
    if q not in _TRIU_CACHE:
        _TRIU_CACHE[q] = np.triu_indices(q, 1)
    return _TRIU_CACHE[q]


# ---------------------------------------------------------------------------
# Hermitian parameterization and real embedding
# ---------------------------------------------------------------------------

def herm_param_count(q: int) -> int:
    return q * q


def herm_param_weights(q: int) -> np.ndarray:
    """Frobenius weights of the Hermitian basis: 1 on diagonal, 2 off."""
    w = np.full(q * q, 2.0)
    w[:q] = 1.0
    return w


def params_to_herm(theta: np.ndarray, q: int) -> np.ndarray:
    """Hermitian matrix from parameters [diag; (Re, Im) per upper pair]."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (q * q,):
        raise ValidationError(f"expected {q * q} parameters, got {theta.shape}")
    h = np.zeros((q, q), dtype=complex)
    h[np.diag_indices(q)] = theta[:q]
    if q > 1:
        rows, cols = _triu(q)
        off = theta[q::2] + 1j * theta[q + 1 :: 2]
        h[rows, cols] = off
        h[cols, rows] = off.conj()
    return h


def herm_to_params(h: np.ndarray) -> np.ndarray:
    """Inverse of :func:`params_to_herm` (Hermitian part of ``h`` is used)."""
    q = h.shape[0]
    out = np.empty(q * q)
    out[:q] = np.diagonal(h).real
    if q > 1:
        rows, cols = _triu(q)
        off = 0.5 * (h[rows, cols] + h[cols, rows].conj())
        out[q::2] = off.real
        out[q + 1 :: 2] = off.imag
    return out


def herm_trace_coeffs(r: np.ndarray) -> np.ndarray:
    """Coefficients c with c @ theta = Tr(params_to_herm(theta) @ r)."""
    q = r.shape[0]
    return herm_param_weights(q) * herm_to_params(r)


def embed_hermitian(h) -> np.ndarray:
    """Real symmetric embedding [[Re H, -Im H], [Im H, Re H]].

    The embedding is PSD exactly when ``h`` is, and its spectrum is that of
    ``h`` with every eigenvalue doubled in multiplicity.
    """
    h = require_hermitian(h)
    return np.block([[h.real, -h.imag], [h.imag, h.real]])


def unembed_hermitian(e: np.ndarray) -> np.ndarray:
    """Complex Hermitian matrix whose embedding is closest to ``e``."""
    q = e.shape[0] // 2
    re = 0.5 * (e[:q, :q] + e[q:, q:])
    im = 0.5 * (e[q:, :q] - e[:q, q:])
    h = re + 1j * im
    return 0.5 * (h + h.conj().T)


# ---------------------------------------------------------------------------
# Problem containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CornerVar:
    """Hermitian matrix variable occupying a block's top-left complex corner.

    ``offset`` points into the global variable vector; the following
    ``dim**2`` entries hold the parameters in :func:`params_to_herm` order.
    """

    offset: int
    dim: int

    @property
    def param_slice(self) -> slice:
        return slice(self.offset, self.offset + self.dim * self.dim)


@dataclass(frozen=True)
class LmiBlock:
    """One linear matrix inequality const + sum_i x_i coeffs[i] >= 0."""

    const: np.ndarray
    coeffs: np.ndarray
    var_idx: np.ndarray
    corner: CornerVar | None = None

    @property
    def dim(self) -> int:
        return self.const.shape[0]


@dataclass(frozen=True)
class ConicProblem:
    c: np.ndarray
    blocks: list[LmiBlock]
    nonneg: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def n_vars(self) -> int:
        return self.c.shape[0]

    def validate(self) -> None:
        c = np.asarray(self.c, dtype=float)
        if c.ndim != 1 or not np.all(np.isfinite(c)):
            raise ValidationError("objective vector must be a finite 1-D array")
        n = c.shape[0]
        nonneg = np.asarray(self.nonneg, dtype=int)
        if nonneg.size and (nonneg.min() < 0 or nonneg.max() >= n):
            raise ValidationError("nonneg indices out of range")
        if np.unique(nonneg).size != nonneg.size:
            raise ValidationError("nonneg indices must be unique")
        seen_corner: set[int] = set()
        for j, blk in enumerate(self.blocks):
            m = blk.const.shape[0]
            if blk.const.shape != (m, m):
                raise ValidationError(f"block {j}: constant matrix must be square")
            if np.abs(blk.const - blk.const.T).max(initial=0.0) > 1e-10 * (
                1.0 + np.abs(blk.const).max(initial=0.0)
            ):
                raise ValidationError(f"block {j}: constant matrix not symmetric")
            t = blk.var_idx.shape[0]
            if blk.coeffs.shape != (t, m, m):
                raise ValidationError(f"block {j}: coefficient tensor shape mismatch")
            if t and (blk.var_idx.min() < 0 or blk.var_idx.max() >= n):
                raise ValidationError(f"block {j}: variable index out of range")
            if np.unique(blk.var_idx).size != t:
                raise ValidationError(f"block {j}: duplicate variable in block")
            if blk.corner is not None:
                cv = blk.corner
                if m % 2 != 0 or cv.dim < 1 or 2 * cv.dim > m:
                    raise ValidationError(f"block {j}: corner does not fit the block")
                params = set(range(cv.offset, cv.offset + cv.dim * cv.dim))
                if cv.offset < 0 or cv.offset + cv.dim * cv.dim > n:
                    raise ValidationError(f"block {j}: corner parameters out of range")
                if params & set(blk.var_idx.tolist()):
                    raise ValidationError(f"block {j}: corner parameters reused in block")
                if params & seen_corner:
                    raise ValidationError(f"block {j}: corner parameters shared across blocks")
                if params & set(nonneg.tolist()):
                    raise ValidationError(f"block {j}: corner parameters cannot be sign constrained")
                seen_corner |= params
        for j, blk in enumerate(self.blocks):
            if set(blk.var_idx.tolist()) & seen_corner:
                raise ValidationError(f"block {j}: corner parameters used as plain coefficients")


@dataclass(frozen=True)
class ConicSolution:
    x: np.ndarray
    objective_value: float
    status: str  # optimal | max_iter | infeasible
    duality_gap: float  # relative
    iterations: int
    primal_infeas: float
    dual_infeas: float


# ---------------------------------------------------------------------------
# Block assembly from complex Hermitian pieces
# ---------------------------------------------------------------------------

class HermitianLmi:
    """Accumulates a complex Hermitian LMI and embeds it into a real block."""

    def __init__(self, dim: int):
        self.dim = dim
        self._const = np.zeros((dim, dim), dtype=complex)
        self._vars: list[int] = []
        self._mats: list[np.ndarray] = []
        self._corner: CornerVar | None = None

    def add_const(self, h) -> "HermitianLmi":
        self._const = self._const + np.asarray(h, dtype=complex)
        return self

    def add_term(self, var: int, h) -> "HermitianLmi":
        self._vars.append(int(var))
        self._mats.append(np.asarray(h, dtype=complex))
        return self

    def set_corner(self, offset: int, dim: int) -> "HermitianLmi":
        self._corner = CornerVar(offset=int(offset), dim=int(dim))
        return self

    def build(self) -> LmiBlock:
        m = 2 * self.dim
        const = embed_hermitian(self._const)
        if self._mats:
            coeffs = np.stack([embed_hermitian(h) for h in self._mats])
        else:
            coeffs = np.zeros((0, m, m))
        return LmiBlock(
            const=const,
            coeffs=coeffs,
            var_idx=np.asarray(self._vars, dtype=int),
            corner=self._corner,
        )


def corner_basis_tensor(block_dim: int, q: int) -> np.ndarray:
    """Explicit embedded coefficient matrices of a corner variable."""
    mc = block_dim // 2
    emb = np.r_[0:q, mc : mc + q]
    out = np.zeros((q * q, block_dim, block_dim))
    for i in range(q * q):
        theta = np.zeros(q * q)
        theta[i] = 1.0
        e = embed_hermitian(params_to_herm(theta, q))
        out[np.ix_([i], emb, emb)] = e[None]
    return out


def materialize_corners(problem: ConicProblem) -> ConicProblem:
    """Rewrite corner variables as explicit coefficient matrices."""
    blocks = []
    for blk in problem.blocks:
        if blk.corner is None:
            blocks.append(blk)
            continue
        cv = blk.corner
        extra = corner_basis_tensor(blk.dim, cv.dim)
        coeffs = np.concatenate([blk.coeffs, extra]) if blk.coeffs.size else extra
        var_idx = np.concatenate(
            [blk.var_idx, np.arange(cv.offset, cv.offset + cv.dim * cv.dim)]
        )
        blocks.append(LmiBlock(const=blk.const, coeffs=coeffs, var_idx=var_idx, corner=None))
    return ConicProblem(c=problem.c, blocks=blocks, nonneg=problem.nonneg)


# ---------------------------------------------------------------------------
# Interior-point solver
# ---------------------------------------------------------------------------

def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def _sym_batch(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.transpose(0, 2, 1))


def _chol_solve(l: np.ndarray, b: np.ndarray) -> np.ndarray:
    y = scipy.linalg.solve_triangular(l, b, lower=True, check_finite=False)
    return scipy.linalg.solve_triangular(l.T, y, lower=False, check_finite=False)


class _ScaledSchur:
    """Jacobi-scaled Cholesky of the Schur complement with refinement.

    The Schur matrix becomes badly conditioned near convergence (active
    bound ratios diverge), so the factorization is done on the
    symmetrically scaled matrix and solves run a few refinement passes
    against the unscaled system.
    """

    def __init__(self, s: np.ndarray):
        self.s = s
        d = np.sqrt(np.maximum(np.diagonal(s), 1e-300))
        self.d = d
        scaled = s / np.outer(d, d)
        base = 1.0
        self.l = None
        for k in range(9):
            shift = 0.0 if k == 0 else base * 10.0 ** (-14 + k)
            try:
                self.l = np.linalg.cholesky(scaled + shift * np.eye(s.shape[0]))
                break
            except np.linalg.LinAlgError:
                continue
        if self.l is None:
            raise np.linalg.LinAlgError("Schur complement factorization failed")

    def solve(self, b: np.ndarray, refine: int = 4) -> np.ndarray:
        x = _chol_solve(self.l, b / self.d) / self.d
        # Residuals in extended precision: the reduced system is small but can
        # carry condition numbers near 1/eps at the end of the central path.
        # Refinement is safeguarded: keep the iterate with the smallest
        # residual and stop once residuals no longer shrink.
        se = self.s.astype(np.longdouble)
        be = b.astype(np.longdouble)

        def resid(v):
            return (be - se @ v.astype(np.longdouble)).astype(float)

        res = resid(x)
        best_x, best_norm = x, float(np.abs(res).max(initial=0.0))
        for _ in range(refine):
            if best_norm <= 1e-16 * (1.0 + np.abs(b).max(initial=0.0)):
                break
            x = x + _chol_solve(self.l, res / self.d) / self.d
            res = resid(x)
            norm = float(np.abs(res).max(initial=0.0))
            if norm >= 0.5 * best_norm:
                break
            best_x, best_norm = x, norm
        return best_x


def _max_step_psd(l: np.ndarray, delta: np.ndarray) -> float:
    """Largest alpha with X + alpha*delta PSD, given X = L L^T."""
    a = scipy.linalg.solve_triangular(l, delta, lower=True, check_finite=False)
    m = scipy.linalg.solve_triangular(l, a.T, lower=True, check_finite=False)
    lam_min = float(np.linalg.eigvalsh(_sym(m)).min())
    if lam_min >= -1e-300:
        return np.inf
    return -1.0 / lam_min


class _CornerGroup:
    """Per-iteration Lyapunov machinery for one eliminated corner variable."""

    def __init__(self, block_index: int, cv: CornerVar, block_dim: int):
        self.block_index = block_index
        self.q = cv.dim
        self.offset = cv.offset
        mc = block_dim // 2
        self.emb = np.r_[0 : self.q, mc : mc + self.q]
        self.weights = herm_param_weights(self.q)

    def corner_complex(self, full: np.ndarray) -> np.ndarray:
        sub = full[np.ix_(self.emb, self.emb)]
        return unembed_hermitian(sub)

    def corner_complex_batch(self, ten: np.ndarray) -> np.ndarray:
        sub = ten[:, self.emb][:, :, self.emb]
        q = self.q
        re = 0.5 * (sub[:, :q, :q] + sub[:, q:, q:])
        im = 0.5 * (sub[:, q:, :q] - sub[:, :q, q:])
        h = re + 1j * im
        return 0.5 * (h + h.conj().transpose(0, 2, 1))

    def prepare(self, w_full: np.ndarray, zinv_full: np.ndarray) -> None:
        wc = self.corner_complex(w_full)
        zic = self.corner_complex(zinv_full)
        self._lz = np.linalg.cholesky(zic)
        tmp = scipy.linalg.solve_triangular(self._lz, wc, lower=True, check_finite=False)
        wt = scipy.linalg.solve_triangular(
            self._lz, tmp.conj().T, lower=True, check_finite=False
        ).conj().T
        wt = 0.5 * (wt + wt.conj().T)
        lam, qmat = np.linalg.eigh(wt)
        lam = np.maximum(lam, 1e-300)
        self._q = qmat
        self._denom = lam[:, None] + lam[None, :]

    def lyap_solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve W V Zi + Zi V W = rhs on the corner, all complex Hermitian."""
        lz, qmat = self._lz, self._q
        r1 = scipy.linalg.solve_triangular(lz, rhs, lower=True, check_finite=False)
        r2 = scipy.linalg.solve_triangular(
            lz, r1.conj().T, lower=True, check_finite=False
        ).conj().T
        rpp = qmat.conj().T @ r2 @ qmat
        vpp = rpp / self._denom
        vp = qmat @ vpp @ qmat.conj().T
        v = scipy.linalg.solve_triangular(
            lz.conj().T, vp, lower=False, check_finite=False
        )
        v = scipy.linalg.solve_triangular(
            lz.conj().T, v.conj().T, lower=False, check_finite=False
        ).conj().T
        return 0.5 * (v + v.conj().T)

    def schur_solve(self, theta_rhs: np.ndarray) -> np.ndarray:
        """Matrix solution V of the corner Schur system S_UU theta = rhs."""
        rm = params_to_herm(theta_rhs / (2.0 * self.weights), self.q)
        return self.lyap_solve(2.0 * rm)


CORNER_ELIM_MIN_DIM = 32


def solve_sdp(
    problem: ConicProblem,
    tol: float = DEFAULT_TOL,
    max_iter: int = MAX_ITER,
    *,
    use_corner_elimination: bool | str = "auto",
    step_fraction: float = STEP_FRACTION,
    trace: list | None = None,
) -> ConicSolution:
    """Solve a conic problem to a relative duality gap of ``tol``.

    Corner variables are eliminated through the Lyapunov path only when
    large (``auto``: complex dimension >= CORNER_ELIM_MIN_DIM); small
    corners are materialized as explicit coefficients, which allows the
    dense Schur complement to be driven to tighter gaps.
    """
    problem.validate()
    if use_corner_elimination == "auto":
        keep = any(
            blk.corner is not None and blk.corner.dim >= CORNER_ELIM_MIN_DIM
            for blk in problem.blocks
        )
        use_corner_elimination = keep
    if not use_corner_elimination:
        problem = materialize_corners(problem)

    c = np.asarray(problem.c, dtype=float)
    n = c.shape[0]
    blocks = problem.blocks
    nonneg = np.asarray(problem.nonneg, dtype=int)
    p = nonneg.size

    groups = [
        _CornerGroup(j, blk.corner, blk.dim)
        for j, blk in enumerate(blocks)
        if blk.corner is not None
    ]
    group_of_block = {g.block_index: g for g in groups}
    corner_mask = np.zeros(n, dtype=bool)
    for g in groups:
        corner_mask[g.offset : g.offset + g.q * g.q] = True
    rest_idx = np.where(~corner_mask)[0]
    n_rest = rest_idx.size
    pos_in_rest = np.full(n, -1, dtype=int)
    pos_in_rest[rest_idx] = np.arange(n_rest)
    block_rpos = [pos_in_rest[blk.var_idx] for blk in blocks]
    lp_rpos = pos_in_rest[nonneg] if p else np.zeros(0, dtype=int)

    coeffs_flat = [blk.coeffs.reshape(blk.var_idx.size, -1) for blk in blocks]
    consts = [np.asarray(blk.const, dtype=float) for blk in blocks]
    const_norms = [np.linalg.norm(b) for b in consts]
    dims = [blk.dim for blk in blocks]
    nu = sum(dims) + p

    scale_b = max(const_norms, default=0.0)
    scale_c = float(np.abs(c).max(initial=0.0))
    eta = 1.0 + scale_b
    omega = 1.0 + scale_c

    x = np.zeros(n)
    zs = [eta * np.eye(m) for m in dims]
    ws = [omega * np.eye(m) for m in dims]
    z_lp = np.full(p, eta)
    w_lp = np.full(p, omega)

    def lmi_apply(dx: np.ndarray, corner_mats: list[np.ndarray | None]) -> list[np.ndarray]:
        out = []
        for j, blk in enumerate(blocks):
            a = np.tensordot(dx[blk.var_idx], blk.coeffs, axes=1) if blk.var_idx.size else np.zeros((dims[j], dims[j]))
            g = group_of_block.get(j)
            if g is not None:
                vmat = corner_mats[j]
                if vmat is None:
                    vmat = params_to_herm(dx[g.offset : g.offset + g.q * g.q], g.q)
                a[np.ix_(g.emb, g.emb)] += embed_hermitian(vmat)
            out.append(a)
        return out

    best = None
    best_score = np.inf
    status = "max_iter"
    it = 0
    stall = 0
    relgap = np.inf
    pinf = np.inf
    dinf = np.inf
    lz = None
    lw = None
    last_sigma = np.nan
    last_ap = np.nan
    last_ad = np.nan

    for it in range(max_iter + 1):
        # Residuals and convergence metrics.
        ax = lmi_apply(x, [None] * len(blocks))
        rps = [zs[j] - consts[j] - ax[j] for j in range(len(blocks))]
        r_lp = z_lp - x[nonneg] if p else np.zeros(0)
        astar = np.zeros(n)
        for j, blk in enumerate(blocks):
            if blk.var_idx.size:
                astar[blk.var_idx] += coeffs_flat[j] @ ws[j].ravel()
            g = group_of_block.get(j)
            if g is not None:
                wc = g.corner_complex(ws[j])
                astar[g.offset : g.offset + g.q * g.q] += 2.0 * g.weights * herm_to_params(wc)
        if p:
            astar[nonneg] += w_lp
        r_d = c - astar

        gap = sum(float(np.tensordot(zs[j], ws[j])) for j in range(len(blocks)))
        if p:
            gap += float(z_lp @ w_lp)
        pobj = float(c @ x)
        dobj = -sum(float(np.tensordot(consts[j], ws[j])) for j in range(len(blocks)))
        relgap = gap / (1.0 + abs(pobj) + abs(dobj))
        pinf = 0.0
        for j in range(len(blocks)):
            pinf = max(pinf, float(np.linalg.norm(rps[j])) / (1.0 + const_norms[j]))
        if p:
            pinf = max(pinf, float(np.abs(r_lp).max(initial=0.0)) / (1.0 + float(np.abs(x[nonneg]).max(initial=0.0))))
        dinf = float(np.abs(r_d).max(initial=0.0)) / (1.0 + scale_c)

        if trace is not None:
            trace.append(
                {"it": it, "relgap": relgap, "pinf": pinf, "dinf": dinf, "pobj": pobj,
                 "mu": gap / nu, "sigma": last_sigma, "ap": last_ap, "ad": last_ad}
            )
        score = max(relgap, pinf, dinf)
        if score < best_score:
            best_score = score
            best = (x.copy(), pobj, relgap, pinf, dinf, it)
            stall = 0
        else:
            stall += 1
        if relgap <= tol and pinf <= tol and dinf <= max(10.0 * tol, 1e-9):
            status = "optimal"
            best = (x.copy(), pobj, relgap, pinf, dinf, it)
            break
        if it == max_iter or stall >= 8:
            break
        if dobj > 1e10 * (1.0 + scale_b + scale_c) and dinf <= np.sqrt(tol):
            status = "infeasible"
            break

        mu = gap / nu

        # Factorizations of the current iterate (carried over from the
        # accepted step whenever possible).
        if lz is None:
            try:
                lz = [np.linalg.cholesky(z) for z in zs]
                lw = [np.linalg.cholesky(w) for w in ws]
            except np.linalg.LinAlgError:
                break
        zinvs = [_chol_solve(lz[j], np.eye(dims[j])) for j in range(len(blocks))]
        zinvs = [_sym(zi) for zi in zinvs]

        # Schur complement over the rest variables; corner groups eliminated.
        s_rr = np.zeros((n_rest, n_rest))
        m_base = []
        group_cross: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        for j, blk in enumerate(blocks):
            w, zi = ws[j], zinvs[j]
            m_base.append(_sym(w @ rps[j] @ zi))
            g = group_of_block.get(j)
            if g is not None:
                g.prepare(w, zi)
            if blk.var_idx.size:
                tten = np.matmul(np.matmul(w, blk.coeffs), zi)
                tsym = _sym_batch(tten)
                sj = coeffs_flat[j] @ tsym.reshape(blk.var_idx.size, -1).T
                rp_ = block_rpos[j]
                s_rr[np.ix_(rp_, rp_)] += 0.5 * (sj + sj.T)
                if g is not None:
                    gc = g.corner_complex_batch(tten)
                    vc = np.stack([g.lyap_solve(2.0 * gc[i]) for i in range(gc.shape[0])])
                    gram = 2.0 * np.real(np.einsum("aij,bji->ab", gc, vc))
                    s_rr[np.ix_(rp_, rp_)] -= 0.5 * (gram + gram.T)
                    group_cross[j] = (gc, vc)
            elif g is not None:
                group_cross[j] = (
                    np.zeros((0, g.q, g.q), dtype=complex),
                    np.zeros((0, g.q, g.q), dtype=complex),
                )
        if p:
            np.add.at(s_rr, (lp_rpos, lp_rpos), w_lp / z_lp)

        try:
            schur = _ScaledSchur(s_rr) if n_rest else None
        except np.linalg.LinAlgError:
            break

        def newton(mu_hat: float, corr_blocks, corr_lp):
            rhs = -c[rest_idx].copy() if n_rest else np.zeros(0)
            mats = []
            corner_rhs: dict[int, tuple[np.ndarray, np.ndarray]] = {}
            for j, blk in enumerate(blocks):
                mj = mu_hat * zinvs[j] + m_base[j]
                if corr_blocks is not None:
                    mj = mj - _sym(corr_blocks[j] @ zinvs[j])
                mats.append(mj)
                if blk.var_idx.size:
                    rhs[block_rpos[j]] += coeffs_flat[j] @ mj.ravel()
                g = group_of_block.get(j)
                if g is not None:
                    sl = slice(g.offset, g.offset + g.q * g.q)
                    ru = 2.0 * g.weights * herm_to_params(g.corner_complex(mj)) - c[sl]
                    vh = g.schur_solve(ru)
                    gc, _ = group_cross[j]
                    if gc.shape[0]:
                        rhs[block_rpos[j]] -= 2.0 * np.real(
                            np.einsum("aij,ji->a", gc, vh)
                        )
                    corner_rhs[j] = (ru, vh)
            if p:
                rhs[lp_rpos] += (mu_hat + w_lp * r_lp - (corr_lp if corr_lp is not None else 0.0)) / z_lp

            dxr = schur.solve(rhs) if n_rest else np.zeros(0)

            dx = np.zeros(n)
            dx[rest_idx] = dxr
            corner_mats: list[np.ndarray | None] = [None] * len(blocks)
            for j, (ru, vh) in corner_rhs.items():
                g = group_of_block[j]
                _, vc = group_cross[j]
                vdelta = vh
                if vc.shape[0]:
                    vdelta = vh - np.tensordot(dxr[block_rpos[j]], vc, axes=1)
                corner_mats[j] = vdelta
                dx[g.offset : g.offset + g.q * g.q] = herm_to_params(vdelta)

            adx = lmi_apply(dx, corner_mats)
            dzs = [adx[j] - rps[j] for j in range(len(blocks))]
            dws = []
            for j in range(len(blocks)):
                dw = mu_hat * zinvs[j] - ws[j] - _sym(ws[j] @ dzs[j] @ zinvs[j])
                if corr_blocks is not None:
                    dw = dw - _sym(corr_blocks[j] @ zinvs[j])
                dws.append(_sym(dw))
            if p:
                dz_lp = dx[nonneg] - r_lp
                corr = corr_lp if corr_lp is not None else 0.0
                dw_lp = (mu_hat - corr) / z_lp - w_lp - (w_lp / z_lp) * dz_lp
            else:
                dz_lp = np.zeros(0)
                dw_lp = np.zeros(0)
            return dx, dzs, dz_lp, dws, dw_lp

        def step_lengths(dzs, dz_lp, dws, dw_lp):
            ap = ad = np.inf
            for j in range(len(blocks)):
                ap = min(ap, _max_step_psd(lz[j], dzs[j]))
                ad = min(ad, _max_step_psd(lw[j], dws[j]))
            if p:
                neg = dz_lp < 0
                if np.any(neg):
                    ap = min(ap, float(np.min(-z_lp[neg] / dz_lp[neg])))
                neg = dw_lp < 0
                if np.any(neg):
                    ad = min(ad, float(np.min(-w_lp[neg] / dw_lp[neg])))
            return ap, ad

        # Mehrotra predictor-corrector.
        dx_a, dzs_a, dzlp_a, dws_a, dwlp_a = newton(0.0, None, None)
        ap_a, ad_a = step_lengths(dzs_a, dzlp_a, dws_a, dwlp_a)
        ap_a, ad_a = min(1.0, ap_a), min(1.0, ad_a)
        gap_aff = sum(
            float(np.tensordot(zs[j] + ap_a * dzs_a[j], ws[j] + ad_a * dws_a[j]))
            for j in range(len(blocks))
        )
        if p:
            gap_aff += float((z_lp + ap_a * dzlp_a) @ (w_lp + ad_a * dwlp_a))
        mu_aff = max(gap_aff, 0.0) / nu
        # cap below 1 so recentering iterations still shrink the gap
        sigma = min(0.95, max((mu_aff / mu) ** 3, 0.0))
        last_sigma = sigma

        corr_blocks = [dws_a[j] @ dzs_a[j] for j in range(len(blocks))]
        corr_lp = dwlp_a * dzlp_a if p else None
        dx_c, dzs_c, dzlp_c, dws_c, dwlp_c = newton(sigma * mu, corr_blocks, corr_lp)
        if not np.all(np.isfinite(dx_c)):
            break
        # sharpen the boundary fraction as the path tightens
        tau = min(0.998, max(step_fraction, 1.0 - 1e3 * mu / (1.0 + scale_b + scale_c)))
        ap, ad = step_lengths(dzs_c, dzlp_c, dws_c, dwlp_c)

        # accept the largest fraction whose slacks still factor numerically
        accepted = False
        for _ in range(5):
            ap_t = min(1.0, tau * ap)
            ad_t = min(1.0, tau * ad)
            zs_t = [_sym(zs[j] + ap_t * dzs_c[j]) for j in range(len(blocks))]
            ws_t = [_sym(ws[j] + ad_t * dws_c[j]) for j in range(len(blocks))]
            z_t = z_lp + ap_t * dzlp_c if p else z_lp
            w_t = w_lp + ad_t * dwlp_c if p else w_lp
            if p and (np.any(z_t <= 0.0) or np.any(w_t <= 0.0)):
                tau *= 0.7
                continue
            try:
                lz_t = [np.linalg.cholesky(z) for z in zs_t]
                lw_t = [np.linalg.cholesky(w) for w in ws_t]
            except np.linalg.LinAlgError:
                tau *= 0.7
                continue
            x = x + ap_t * dx_c
            zs, ws, z_lp, w_lp = zs_t, ws_t, z_t, w_t
            lz, lw = lz_t, lw_t
            last_ap, last_ad = ap_t, ad_t
            accepted = True
            break
        if not accepted:
            break

    if best is None:
        best = (x, float(c @ x), relgap, pinf, dinf, it)
    bx, bobj, brg, bpi, bdi, _ = best
    return ConicSolution(
        x=bx,
        objective_value=bobj,
        status=status,
        duality_gap=brg,
        iterations=it,
        primal_infeas=bpi,
        dual_infeas=bdi,
    )
