"""Coordinate-descent inner loop, optionally compiled with numba.

The sweep kernel dominates runtime for large grids, so it is JIT compiled
by default.  Set ``SPARROW_NUMBA=0`` in the environment to run the very
same function uncompiled through numpy, e.g. for debugging or on platforms
where numba is unavailable.  ``benchmarks/cd_backend_bench.py`` compares
the two paths.
"""

from __future__ import annotations

import os

NUMBA_ENABLED = os.environ.get("SPARROW_NUMBA", "1") not in ("0", "false", "no")

if NUMBA_ENABLED:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a hard dependency
        NUMBA_ENABLED = False

if not NUMBA_ENABLED:
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(f):
            return f

        return wrap

import numpy as np


@njit(cache=True)
def cd_sweeps(at, r, lam, s, max_sweeps, tol, prune, refactor_every):
    """Cyclic coordinate descent on the row-norm objective.

    Tr((A S A^H + lam I)^-1 R) + Tr(S) over s >= 0, with the inverse
    maintained by rank-one updates and refreshed every ``refactor_every``
    sweeps to bound drift.  ``at`` holds the dictionary columns as rows
    (K x M) so each coordinate touches contiguous memory.

    Returns (sweeps_used, converged, final full-sweep max step).
    """
    k_grid, m = at.shape
    u = lam * np.eye(m).astype(np.complex128)
    for k in range(k_grid):
        if s[k] != 0.0:
            u += s[k] * np.outer(at[k], at[k].conj())
    uinv = np.linalg.inv(u)

    zero_streak = np.zeros(k_grid, dtype=np.int64)
    sweeps = 0
    converged = False
    final_pass = False
    delta_max = 0.0
    while sweeps < max_sweeps:
        sweeps += 1
        delta_max = 0.0
        s_max = 0.0
        for k in range(k_grid):
            if prune and not final_pass and zero_streak[k] >= 3:
                continue
            ak = at[k]
            ua = uinv @ ak
            denom = (ak.conj() @ ua).real
            num = (ua.conj() @ (r @ ua)).real
            if num < 0.0:
                num = 0.0
            d = (np.sqrt(num) - 1.0) / denom
            if d < -s[k]:
                d = -s[k]
            if d != 0.0:
                s[k] += d
                uinv = uinv - (d / (1.0 + d * denom)) * np.outer(ua, ua.conj())
                ad = abs(d)
                if ad > delta_max:
                    delta_max = ad
            if s[k] == 0.0:
                zero_streak[k] += 1
            else:
                zero_streak[k] = 0
            if s[k] > s_max:
                s_max = s[k]

        if sweeps % refactor_every == 0:
            u = lam * np.eye(m).astype(np.complex128)
            for k in range(k_grid):
                if s[k] != 0.0:
                    u += s[k] * np.outer(at[k], at[k].conj())
            uinv = np.linalg.inv(u)

        if delta_max < tol * (1.0 + s_max):
            if final_pass or not prune:
                converged = True
                break
            # confirm optimality over the pruned coordinates with full sweeps
            final_pass = True
        else:
            if final_pass:
                final_pass = False
                zero_streak[:] = 0
    return sweeps, converged, delta_max
