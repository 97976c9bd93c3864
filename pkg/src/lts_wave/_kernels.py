"""Inner loops of the local time-stepping recursion.

Each kernel exists twice: a numba ``@njit`` version over raw CSR arrays and
a numpy/scipy version with identical arithmetic. ``LTS_WAVE_NUMBA=0`` in the
environment selects the numpy path; so does a missing numba install.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        return lambda fn: fn


def numba_enabled() -> bool:
    flag = os.environ.get("LTS_WAVE_NUMBA", "1").strip().lower()
    return _HAVE_NUMBA and flag not in ("0", "false", "no", "off")


@njit(cache=True, nogil=True)
def lts_substeps_jit(indptr, indices, data, dinv, fine_pos, w, u, p, c1, c2,
                     beta, beta_half, z_prev, z_cur, z_next, zf, m):
    """Run the p sub-steps on the active rows and return ``z_p``.

    ``indptr/indices/data`` hold K restricted to active rows and fine
    columns, ``fine_pos`` maps fine columns to positions in the active
    vector. The returned array is one of the three work buffers.
    """
    n = u.shape[0]
    nf = fine_pos.shape[0]
    for j in range(nf):
        zf[j] = u[fine_pos[j]]
    for i in range(n):
        acc = 0.0
        for jj in range(indptr[i], indptr[i + 1]):
            acc += data[jj] * zf[indices[jj]]
        z_prev[i] = u[i]
        z_cur[i] = u[i] - c1 * (w[i] + dinv[i] * acc)
    for k in range(1, p):
        bk = beta[k - 1]
        cb = c2 * beta_half[k - 1]
        for j in range(nf):
            zf[j] = z_cur[fine_pos[j]]
        for i in range(n):
            acc = 0.0
            for jj in range(indptr[i], indptr[i + 1]):
                acc += data[jj] * zf[indices[jj]]
            z_next[i] = (1.0 + bk) * z_cur[i] - bk * z_prev[i] - cb * (w[i] + dinv[i] * acc)
        z_prev, z_cur, z_next = z_cur, z_next, z_prev
    return z_cur


@njit(cache=True, nogil=True)
def poly_fine_jit(indptr, indices, data, dinv, v, g, s, p, delta, omega, dt,
                  beta, beta_half, y_prev, y_cur, y_next, m):
    """Fine entries of ``P^dt(Pi_f A) v``, returned as one of the work buffers.

    ``indptr/indices/data`` hold the fine-fine block of K, ``g`` the fixed
    coarse-to-fine coupling ``D_f^-1 K_fc v_c`` and ``s`` the scalar stage
    values at zero that multiply it.
    """
    n = v.shape[0]
    a = dt * dt / omega
    c0 = 2.0 / (omega * delta)
    for i in range(n):
        y_prev[i] = 0.0
        y_cur[i] = c0 * v[i]
    for k in range(1, p):
        bk = beta[k - 1]
        bh = beta_half[k - 1]
        cst = 4.0 / omega * bh
        sk = s[k]
        for i in range(n):
            acc = 0.0
            for jj in range(indptr[i], indptr[i + 1]):
                acc += data[jj] * y_cur[indices[jj]]
            xy = dinv[i] * acc + sk * g[i]
            y_next[i] = 2.0 * bh * (delta * y_cur[i] - a * xy) - bk * y_prev[i] + cst * v[i]
        y_prev, y_cur, y_next = y_cur, y_next, y_prev
    return y_cur


def lts_substeps_numpy(Kaf, dinv, fine_pos, w, u, p, c1, c2, beta, beta_half):
    """Vectorized counterpart of the jitted sub-step loop (same operation order)."""
    z_cur = u.copy()
    m = Kaf @ z_cur[fine_pos]
    z_prev = z_cur
    z_cur = z_cur - c1 * (w + dinv * m)
    for k in range(1, p):
        bk = beta[k - 1]
        cb = c2 * beta_half[k - 1]
        m = Kaf @ z_cur[fine_pos]
        z_next = (1.0 + bk) * z_cur - bk * z_prev - cb * (w + dinv * m)
        z_prev, z_cur = z_cur, z_next
    return z_cur


def poly_fine_numpy(Kff, dinv, v, g, s, p, delta, omega, dt, beta, beta_half):
    """Vectorized counterpart of the jitted polynomial recursion.

    ``v`` and ``g`` may be 2-D (one column per right-hand side).
    """
    a = dt * dt / omega
    if v.ndim == 2:
        dinv = dinv[:, None]
    y_prev = np.zeros_like(v)
    y_cur = 2.0 / (omega * delta) * v
    for k in range(1, p):
        bk = beta[k - 1]
        bh = beta_half[k - 1]
        xy = dinv * (Kff @ y_cur) + s[k] * g
        y_next = 2.0 * bh * (delta * y_cur - a * xy) - bk * y_prev + 4.0 / omega * bh * v
        y_prev, y_cur = y_cur, y_next
    return y_cur
