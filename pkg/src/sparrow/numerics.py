"""Dense complex linear algebra kernels shared by every solver module.

All tolerances are relative to the input magnitude with an absolute floor
of ``ABS_FLOOR`` so the contracts are scale free.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import DefinitenessError, NumericalError, ValidationError

HERMITIAN_RTOL = 1e-12
ABS_FLOOR = 1e-14


def as_matrix(a) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2:
        raise ValidationError(f"expected a matrix, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise ValidationError("matrix has non-finite entries")
    return a


def is_hermitian(h: np.ndarray, rtol: float = HERMITIAN_RTOL) -> bool:
    h = np.asarray(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        return False
    scale = max(float(np.abs(h).max(initial=0.0)), ABS_FLOOR)
    return bool(np.abs(h - h.conj().T).max(initial=0.0) <= rtol * scale + ABS_FLOOR)


def require_hermitian(h, rtol: float = HERMITIAN_RTOL, name: str = "matrix") -> np.ndarray:
    h = as_matrix(h)
    if not is_hermitian(h, rtol):
        raise ValidationError(f"{name} is not Hermitian within rtol={rtol:g}")
    return h


def hermitian_part(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.conj().T)


def hermitian_eig(h) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix, eigenvalues descending.

    Returns ``(w, v)`` with ``h ≈ v @ diag(w) @ v.conj().T`` and ``w`` sorted
    in descending order.
    """
    h = require_hermitian(h)
    try:
        w, v = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericalError(f"hermitian eigensolver did not converge: {exc}") from exc
    return w[::-1].copy(), v[:, ::-1].copy()


def solve_hpd(h, b) -> np.ndarray:
    """Solve ``h @ x = b`` for Hermitian positive definite ``h``."""
    h = require_hermitian(h)
    b = np.asarray(b)
    try:
        factor = scipy.linalg.cho_factor(h, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise DefinitenessError("matrix is not positive definite") from exc
    return scipy.linalg.cho_solve(factor, b, check_finite=False)


def poly_roots(coeffs) -> np.ndarray:
    """Roots of a polynomial given coefficients in descending degree order.

    The leading coefficient must be nonzero; a degree-zero polynomial has
    an empty root set.
    """
    coeffs = np.atleast_1d(np.asarray(coeffs))
    if coeffs.ndim != 1 or coeffs.size == 0:
        raise ValidationError("coefficients must be a non-empty vector")
    if coeffs[0] == 0:
        raise ValidationError("leading coefficient must be nonzero")
    if coeffs.size == 1:
        return np.zeros(0, dtype=complex)
    return np.roots(coeffs)
