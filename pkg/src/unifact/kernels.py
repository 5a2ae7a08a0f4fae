"""Hot numeric kernels.

Each kernel has a numba implementation (``*_nb``) and a vectorized numpy
implementation (``*_np``). The public names dispatch to the numba version
unless numba is missing or ``UNIFACT_NO_NUMBA=1`` is set.

Parameter batches have shape ``(B, K, m)`` with ``m = n(n-1)/2``; coordinate
``p`` of a lower factor sits at matrix position ``(rows[p], cols[p])`` and of
an upper factor at ``(cols[p], rows[p])`` (0-based). Factor ``k`` (0-based)
is lower when ``k`` is even.
"""

import numpy as np

from ._accel import USE_NUMBA, njit

# --------------------------------------------------------------------------
# coordinate tables


def coord_tables(n):
    """0-based (row, col) of lower-factor coordinates in column-major order."""
    rows, cols = [], []
    for c in range(n - 1):
        for r in range(c + 1, n):
            rows.append(r)
            cols.append(c)
    return np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64)


# --------------------------------------------------------------------------
# polynomial evaluation


@njit(cache=True)
def eval_poly_batch_nb(coef, idx, pts):
    B = pts.shape[0]
    T, D = idx.shape
    out = np.zeros(B, dtype=np.complex128)
    for b in range(B):
        acc = 0j
        for t in range(T):
            term = coef[t]
            for d in range(D):
                v = idx[t, d]
                if v < 0:
                    break
                term *= pts[b, v]
            acc += term
        out[b] = acc
    return out


def eval_poly_batch_np(coef, idx, pts):
    B = pts.shape[0]
    ext = np.concatenate([pts, np.ones((B, 1), dtype=pts.dtype)], axis=1)
    safe = np.where(idx < 0, ext.shape[1] - 1, idx)
    return (ext[:, safe].prod(axis=2) * coef).sum(axis=1)


# --------------------------------------------------------------------------
# unipotent chain products


@njit(cache=True)
def _fill_nb(F, vals, rows, cols, lower):
    """Strict triangle of one factor into the preallocated ``F``."""
    F[:, :] = 0.0
    for p in range(rows.shape[0]):
        if lower:
            F[rows[p], cols[p]] = vals[p]
        else:
            F[cols[p], rows[p]] = vals[p]


@njit(cache=True)
def _right_apply_nb(P, F, lower, invert):
    """P <- P F (or P F^-1) in place; F is the strict part of a unit triangle."""
    R, n = P.shape
    sign = -1.0 if invert else 1.0
    for step in range(n):
        j = n - 1 - step if lower == invert else step
        lo, hi = (j + 1, n) if lower else (0, j)
        for r in range(R):
            acc = 0j
            for i in range(lo, hi):
                acc += P[r, i] * F[i, j]
            P[r, j] += sign * acc


@njit(cache=True)
def _left_apply_nb(S, F, lower, invert):
    """S <- F S (or F^-1 S) in place."""
    n, C = S.shape
    sign = -1.0 if invert else 1.0
    for step in range(n):
        i = n - 1 - step if lower != invert else step
        lo, hi = (0, i) if lower else (i + 1, n)
        for c in range(C):
            acc = 0j
            for j in range(lo, hi):
                acc += F[i, j] * S[j, c]
            S[i, c] += sign * acc


@njit(cache=True)
def chain_product_nb(params, rows, cols, n, invert):
    B, K, _ = params.shape
    out = np.empty((B, n, n), dtype=np.complex128)
    F = np.empty((n, n), dtype=np.complex128)
    for b in range(B):
        P = out[b]
        P[:, :] = 0.0
        for i in range(n):
            P[i, i] = 1.0
        for k in range(K):
            _fill_nb(F, params[b, k], rows, cols, k % 2 == 0)
            _right_apply_nb(P, F, k % 2 == 0, invert)
    return out


@njit(cache=True)
def phi_jacobian_nb(params, rows, cols, n, invert):
    B, K, m = params.shape
    phi = np.empty((B, n), dtype=np.complex128)
    jac = np.empty((B, n, K * m), dtype=np.complex128)
    F = np.empty((K, n, n), dtype=np.complex128)
    left = np.empty((K + 1, 1, n), dtype=np.complex128)
    suf = np.empty((K + 1, n, n), dtype=np.complex128)
    for b in range(B):
        for k in range(K):
            _fill_nb(F[k], params[b, k], rows, cols, k % 2 == 0)
        left[0, 0, :] = 0.0
        left[0, 0, n - 1] = 1.0
        for k in range(K):
            left[k + 1, 0, :] = left[k, 0, :]
            _right_apply_nb(left[k + 1], F[k], k % 2 == 0, invert)
        suf[K, :, :] = 0.0
        for i in range(n):
            suf[K, i, i] = 1.0
        for k in range(K - 1, -1, -1):
            suf[k, :, :] = suf[k + 1]
            _left_apply_nb(suf[k], F[k], k % 2 == 0, invert)
        phi[b] = left[K, 0]
        for k in range(K):
            lower = k % 2 == 0
            for p in range(m):
                r = rows[p] if lower else cols[p]
                c = cols[p] if lower else rows[p]
                for q in range(n):
                    if invert:
                        jac[b, q, k * m + p] = -left[k + 1, 0, r] * suf[k, c, q]
                    else:
                        jac[b, q, k * m + p] = left[k, 0, r] * suf[k + 1, c, q]
    return phi, jac


def _factors_np(params, rows, cols, n, invert):
    """All factor matrices, shape (B, K, n, n)."""
    B, K, _ = params.shape
    F = np.broadcast_to(np.eye(n, dtype=np.complex128), (B, K, n, n)).copy()
    F[:, :, rows, cols] = params
    if invert:
        X = np.broadcast_to(np.eye(n, dtype=np.complex128), (B, K, n, n)).copy()
        for j in range(n):
            for i in range(j + 1, n):
                X[:, :, i, j] = -np.einsum("bkq,bkq->bk", F[:, :, i, j:i], X[:, :, j:i, j])
        F = X
    F[:, 1::2] = np.swapaxes(F[:, 1::2], -1, -2)
    return F


def chain_product_np(params, rows, cols, n, invert):
    F = _factors_np(params, rows, cols, n, invert)
    P = np.broadcast_to(np.eye(n, dtype=np.complex128), (params.shape[0], n, n)).copy()
    for k in range(params.shape[1]):
        P = P @ F[:, k]
    return P


def phi_jacobian_np(params, rows, cols, n, invert):
    B, K, m = params.shape
    A = _factors_np(params, rows, cols, n, invert)
    left = np.zeros((B, K + 1, n), dtype=np.complex128)
    left[:, 0, n - 1] = 1.0
    for k in range(K):
        left[:, k + 1] = np.einsum("bi,bij->bj", left[:, k], A[:, k])
    suf = np.empty((B, K + 1, n, n), dtype=np.complex128)
    suf[:, K] = np.eye(n)
    for k in range(K - 1, -1, -1):
        suf[:, k] = A[:, k] @ suf[:, k + 1]
    jac = np.empty((B, n, K * m), dtype=np.complex128)
    for k in range(K):
        r, c = (rows, cols) if k % 2 == 0 else (cols, rows)
        if invert:
            block = -left[:, k + 1, r][:, :, None] * suf[:, k][:, c, :]
        else:
            block = left[:, k, r][:, :, None] * suf[:, k + 1][:, c, :]
        jac[:, :, k * m:(k + 1) * m] = np.swapaxes(block, 1, 2)
    return left[:, K].copy(), jac


# --------------------------------------------------------------------------
# RK4 integration of a shear field dx_j = dp/dx_i, dx_i = -dp/dx_j


@njit(cache=True)
def _eval_one_nb(coef, idx, x):
    acc = 0j
    T, D = idx.shape
    for t in range(T):
        term = coef[t]
        for d in range(D):
            v = idx[t, d]
            if v < 0:
                break
            term *= x[v]
        acc += term
    return acc


@njit(cache=True)
def _shear_rhs_nb(ci, ii, cj, ij, i, j, x, t):
    dx = np.zeros_like(x)
    dx[j] = t * _eval_one_nb(ci, ii, x)
    dx[i] = -t * _eval_one_nb(cj, ij, x)
    return dx


@njit(cache=True)
def rk4_shear_nb(ci, ii, cj, ij, i, j, x0, t, nsteps):
    x = x0.copy()
    h = 1.0 / nsteps
    for _ in range(nsteps):
        k1 = _shear_rhs_nb(ci, ii, cj, ij, i, j, x, t)
        k2 = _shear_rhs_nb(ci, ii, cj, ij, i, j, x + 0.5 * h * k1, t)
        k3 = _shear_rhs_nb(ci, ii, cj, ij, i, j, x + 0.5 * h * k2, t)
        k4 = _shear_rhs_nb(ci, ii, cj, ij, i, j, x + h * k3, t)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def rk4_shear_np(ci, ii, cj, ij, i, j, x0, t, nsteps):
    def rhs(x):
        dx = np.zeros_like(x)
        dx[j] = t * eval_poly_batch_np(ci, ii, x[None, :])[0]
        dx[i] = -t * eval_poly_batch_np(cj, ij, x[None, :])[0]
        return dx

    x = x0.copy()
    h = 1.0 / nsteps
    for _ in range(nsteps):
        k1 = rhs(x)
        k2 = rhs(x + 0.5 * h * k1)
        k3 = rhs(x + 0.5 * h * k2)
        k4 = rhs(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


# --------------------------------------------------------------------------
# dispatch

if USE_NUMBA:
    eval_poly_batch = eval_poly_batch_nb
    chain_product = chain_product_nb
    phi_jacobian = phi_jacobian_nb
    rk4_shear = rk4_shear_nb
else:
    eval_poly_batch = eval_poly_batch_np
    chain_product = chain_product_np
    phi_jacobian = phi_jacobian_np
    rk4_shear = rk4_shear_np

BACKEND = "numba" if USE_NUMBA else "numpy"
