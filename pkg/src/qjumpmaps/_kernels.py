"""Compiled inner loops for the triangular-grid algebra.

Every quadrature here sums in ascending node order and funnels each product
through ``_mac``, so the homogeneous and inhomogeneous convolutions perform the
same floating-point operations in the same order when the inputs are lifted
one-parameter data.  No ``fastmath``: reassociation would break that.

Layouts: a two-parameter family is ``(N, M, D, D)`` with ``cols[c]`` the grid
column held in slot ``c`` (rows ``i < cols[c]`` are unused and kept zero); a
one-parameter family is ``(N, D, D)``; per-node maps are ``(N, D, D)``.
"""
import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _mac(acc, X, Y, w):
    # acc += w * (X @ Y)
    D = acc.shape[0]
    for r in range(D):
        for s in range(D):
            tmp = 0j
            for m in range(D):
                tmp += X[r, m] * Y[m, s]
            acc[r, s] += w * tmp


@njit(cache=True, inline="always")
def _mm(out, X, Y):
    D = out.shape[0]
    for r in range(D):
        for s in range(D):
            tmp = 0j
            for m in range(D):
                tmp += X[r, m] * Y[m, s]
            out[r, s] = tmp


@njit(cache=True)
def conv_cols(A, B, cols, h):
    """(A ⊛ B) on the columns held by B; A must be full."""
    N = A.shape[0]
    M = B.shape[1]
    D = A.shape[2]
    out = np.zeros((N, M, D, D), dtype=np.complex128)
    acc = np.zeros((D, D), dtype=np.complex128)
    for c in range(M):
        j = cols[c]
        for i in range(j + 1, N):
            acc[:, :] = 0.0
            for k in range(j, i + 1):
                w = 0.5 if (k == j or k == i) else 1.0
                _mac(acc, A[i, k], B[k, c], w)
            for r in range(D):
                for s in range(D):
                    out[i, c, r, s] = h * acc[r, s]
    return out


@njit(cache=True)
def conv_hom(a, b, h):
    """(a * b)_p = h sum_m w_m a_{p-m} b_m, trapezoid weights."""
    N = a.shape[0]
    D = a.shape[1]
    out = np.zeros((N, D, D), dtype=np.complex128)
    acc = np.zeros((D, D), dtype=np.complex128)
    for p in range(1, N):
        acc[:, :] = 0.0
        for m in range(0, p + 1):
            w = 0.5 if (m == 0 or m == p) else 1.0
            _mac(acc, a[p - m], b[m], w)
        for r in range(D):
            for s in range(D):
                out[p, r, s] = h * acc[r, s]
    return out


@njit(cache=True)
def left_nodes(A, B, cols):
    """out[i, c] = A[i] @ B[i, c]."""
    N, M, D = B.shape[0], B.shape[1], B.shape[2]
    out = np.zeros((N, M, D, D), dtype=np.complex128)
    for c in range(M):
        for i in range(cols[c], N):
            _mm(out[i, c], A[i], B[i, c])
    return out


@njit(cache=True)
def right_nodes(B, A, cols):
    """out[i, c] = B[i, c] @ A[cols[c]]."""
    N, M, D = B.shape[0], B.shape[1], B.shape[2]
    out = np.zeros((N, M, D, D), dtype=np.complex128)
    for c in range(M):
        j = cols[c]
        for i in range(j, N):
            _mm(out[i, c], B[i, c], A[j])
    return out


@njit(cache=True)
def left_const(A, b):
    out = np.zeros_like(b)
    for p in range(b.shape[0]):
        _mm(out[p], A, b[p])
    return out


@njit(cache=True)
def right_const(b, A):
    out = np.zeros_like(b)
    for p in range(b.shape[0]):
        _mm(out[p], b[p], A)
    return out


@njit(cache=True)
def volterra_cols(Adelta, R, cols, h, iters):
    """Predictor-corrector for dL/dt = A_t L + int_{t0}^t R_{t,u} L_u du, per column."""
    N = R.shape[0]
    D = R.shape[2]
    M = cols.shape[0]
    out = np.zeros((N, M, D, D), dtype=np.complex128)
    I = np.eye(D, dtype=np.complex128)
    past = np.zeros((D, D), dtype=np.complex128)
    Hc = np.zeros((D, D), dtype=np.complex128)
    Hn = np.zeros((D, D), dtype=np.complex128)
    F = np.zeros((D, D), dtype=np.complex128)
    Y = np.zeros((D, D), dtype=np.complex128)
    rhs = np.zeros((D, D), dtype=np.complex128)
    minv = np.zeros((N, D, D), dtype=np.complex128)
    for i in range(N):
        minv[i] = np.linalg.inv(I - (0.5 * h) * Adelta[i])
    for c in range(M):
        j = cols[c]
        out[j, c] = I
        Hc[:, :] = 0.0
        for i in range(j, N - 1):
            L = out[i, c]
            # F_i = A_i L_i + H_i
            F[:, :] = Hc
            _mac(F, Adelta[i], L, 1.0)
            # history at i+1 without its endpoint
            past[:, :] = 0.0
            for k in range(j, i + 1):
                w = 0.5 if k == j else 1.0
                _mac(past, R[i + 1, k], out[k, c], w)
            for r in range(D):
                for s in range(D):
                    past[r, s] = h * past[r, s]
                    Y[r, s] = L[r, s] + h * F[r, s]
            for it in range(iters):
                Hn[:, :] = past
                _mac(Hn, R[i + 1, i + 1], Y, 0.5 * h)
                for r in range(D):
                    for s in range(D):
                        rhs[r, s] = L[r, s] + 0.5 * h * (F[r, s] + Hn[r, s])
                _mm(Y, minv[i + 1], rhs)
            Hn[:, :] = past
            _mac(Hn, R[i + 1, i + 1], Y, 0.5 * h)
            out[i + 1, c] = Y
            Hc[:, :] = Hn
    return out


@njit(cache=True)
def second_kind_rows(D_, h):
    """Solve G = -D - G ⊛ D row by row (trapezoid), G_{i,i} = -D_{i,i}.

    Returns G and the largest condition number of the diagonal blocks
    ``id + (h/2) D_{j,j}`` that were inverted.
    """
    N = D_.shape[0]
    Dm = D_.shape[2]
    G = np.zeros_like(D_)
    I = np.eye(Dm, dtype=np.complex128)
    inv = np.zeros((N, Dm, Dm), dtype=np.complex128)
    worst = 1.0
    for j in range(N):
        blk = I + (0.5 * h) * D_[j, j]
        cnd = np.linalg.cond(blk)
        if cnd > worst:
            worst = cnd
        inv[j] = np.linalg.inv(blk)
    acc = np.zeros((Dm, Dm), dtype=np.complex128)
    for i in range(N):
        G[i, i] = -D_[i, i]
        for j in range(i - 1, -1, -1):
            acc[:, :] = 0.0
            for k in range(j + 1, i):
                _mac(acc, G[i, k], D_[k, j], 1.0)
            _mac(acc, G[i, i], D_[i, j], 0.5)
            for r in range(Dm):
                for s in range(Dm):
                    acc[r, s] = -D_[i, j, r, s] - h * acc[r, s]
            _mm(G[i, j], acc, inv[j])
    return G, worst


@njit(cache=True)
def composition_frob(F, cols):
    """max over k <= j <= i (j, k held columns) of ||F_ij F_jk - F_ik||_F."""
    N, M, D = F.shape[0], F.shape[1], F.shape[2]
    tmp = np.zeros((D, D), dtype=np.complex128)
    worst = 0.0
    for ck in range(M):
        k = cols[ck]
        for cj in range(M):
            j = cols[cj]
            if j < k:
                continue
            for i in range(j, N):
                _mm(tmp, F[i, cj], F[j, ck])
                s = 0.0
                for r in range(D):
                    for q in range(D):
                        z = tmp[r, q] - F[i, ck, r, q]
                        s += z.real * z.real + z.imag * z.imag
                s = np.sqrt(s)
                if s > worst:
                    worst = s
    return worst


@njit(cache=True)
def propagate_steps(P, cols, D):
    """Columns of L_{i+1,j} = P_i L_{i,j}, L_{j,j} = id, from one-step maps P."""
    N = P.shape[0] + 1
    M = cols.shape[0]
    out = np.zeros((N, M, D, D), dtype=np.complex128)
    I = np.eye(D, dtype=np.complex128)
    for c in range(M):
        j = cols[c]
        out[j, c] = I
        for i in range(j, N - 1):
            _mm(out[i + 1, c], P[i], out[i, c])
    return out
