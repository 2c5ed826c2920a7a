"""Operator and superoperator algebra.

Convention
----------
Every superoperator in this package is a ``d**2 x d**2`` complex matrix acting
on column-stacked operators::

    vec(A @ X @ B) == kron(B.T, A) @ vec(X)

so ``vec`` stacks columns (Fortran order) and the matrix unit ``E_rc`` sits at
vec index ``r + c*d``.  All other modules build on the helpers here and never
re-derive the layout.

Superoperators and operators are plain ``numpy`` arrays.  Functions that
inspect superoperators (``choi``, ``min_choi_eigenvalue``, ``trace_row``)
broadcast over leading axes so whole map families can be checked at once.
"""
from __future__ import annotations

from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import DimensionMismatch, NegativeWeight, NonHermitianChoi

CP_TOL = 1e-10
HERMITIAN_DEFECT_MAX = 1e-8

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
# lowering operator |0><1| (|0> is the ground state)
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_PLUS = SIGMA_MINUS.conj().T


def dim_of(superop: np.ndarray) -> int:
    """Hilbert-space dimension ``d`` of a ``d**2 x d**2`` superoperator (or stack)."""
    D = superop.shape[-1]
    d = int(round(np.sqrt(D)))
    if d * d != D or superop.shape[-2] != D:
        raise DimensionMismatch(f"shape {superop.shape[-2:]} is not d^2 x d^2")
    return d


def vec(X: np.ndarray) -> np.ndarray:
    """Column-stack an operator (or a stack of operators) into a vector."""
    X = np.asarray(X)
    return np.swapaxes(X, -1, -2).reshape(X.shape[:-2] + (-1,))


def unvec(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v)
    d = int(round(np.sqrt(v.shape[-1])))
    return np.swapaxes(v.reshape(v.shape[:-1] + (d, d)), -1, -2)


def apply(S: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Image ``S(X)`` of an operator under a superoperator."""
    X = np.asarray(X)
    if X.shape[-1] ** 2 != S.shape[-1] or X.shape[-2] != X.shape[-1]:
        raise DimensionMismatch(f"superop of size {S.shape[-1]} cannot act on {X.shape[-2:]} operator")
    return unvec((S @ vec(X)[..., None])[..., 0])


def identity_superop(d: int) -> np.ndarray:
    return np.eye(d * d, dtype=complex)


def zero_superop(d: int) -> np.ndarray:
    return np.zeros((d * d, d * d), dtype=complex)


def left_right(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Superoperator of ``X -> A X B``."""
    return np.kron(np.asarray(B).T, np.asarray(A))


def unitary_superop(U: np.ndarray) -> np.ndarray:
    """Conjugation ``X -> U X U^dagger``."""
    U = np.asarray(U, dtype=complex)
    return np.kron(U.conj(), U)


def transpose_superop(d: int) -> np.ndarray:
    """The transpose map ``X -> X.T``, positive but not completely positive."""
    S = np.zeros((d * d, d * d), dtype=complex)
    for r in range(d):
        for c in range(d):
            S[c + r * d, r + c * d] = 1.0
    return S


def superop_from_function(f: Callable[[np.ndarray], np.ndarray], d: int) -> np.ndarray:
    """Matrix of a linear map given as a Python callable, column by column."""
    S = np.zeros((d * d, d * d), dtype=complex)
    for k in range(d * d):
        E = np.zeros(d * d, dtype=complex)
        E[k] = 1.0
        S[:, k] = vec(f(unvec(E)))
    return S


def kraus_to_superop(terms: Sequence[tuple[float, np.ndarray]], d: int | None = None) -> np.ndarray:
    """Superoperator of ``X -> sum_k w_k K_k X K_k^dagger``.

    ``d`` is only needed for an empty term list (which gives the zero map).
    """
    terms = list(terms)
    if not terms:
        if d is None:
            raise DimensionMismatch("empty Kraus list needs an explicit dimension")
        return zero_superop(d)
    d0 = np.asarray(terms[0][1]).shape[0]
    if d is not None and d != d0:
        raise DimensionMismatch(f"Kraus operators have dimension {d0}, expected {d}")
    S = np.zeros((d0 * d0, d0 * d0), dtype=complex)
    for w, K in terms:
        K = np.asarray(K, dtype=complex)
        if K.shape != (d0, d0):
            raise DimensionMismatch(f"Kraus operator of shape {K.shape} in a d={d0} list")
        if w < 0:
            raise NegativeWeight(f"Kraus weight {w} < 0")
        S += w * np.kron(K.conj(), K)
    return S


def depolarizing_channel(d: int) -> np.ndarray:
    """Completely depolarizing channel ``X -> Tr(X) I/d``."""
    t = vec(np.eye(d, dtype=complex))
    return np.outer(t, t) / d


def choi(S: np.ndarray) -> np.ndarray:
    """Choi matrix ``sum_ij E_ij (x) S(E_ij)``; broadcasts over leading axes."""
    S = np.asarray(S)
    d = dim_of(S)
    lead = S.shape[:-2]
    # S[r + c d, i + j d] -> S4[..., c, r, j, i];  C[i d + r, j d + c] = S4[..., c, r, j, i]
    S4 = S.reshape(lead + (d, d, d, d))
    n = len(lead)
    C4 = S4.transpose(tuple(range(n)) + (n + 3, n + 1, n + 2, n))
    return C4.reshape(lead + (d * d, d * d))


def hermitian_defect(M: np.ndarray) -> np.ndarray:
    """Spectral norm of the anti-Hermitian part ``(M - M^dagger)/2``."""
    A = 0.5 * (M - np.swapaxes(M.conj(), -1, -2))
    return np.linalg.norm(A, ord=2, axis=(-2, -1))


def min_choi_eigenvalue(S: np.ndarray) -> np.ndarray:
    """Smallest eigenvalue of the Hermitian part of ``choi(S)``; broadcasts."""
    C = choi(S)
    H = 0.5 * (C + np.swapaxes(C.conj(), -1, -2))
    return np.linalg.eigvalsh(H)[..., 0]


class CPVerdict(NamedTuple):
    ok: bool
    min_eigenvalue: float
    hermitian_defect: float


def verdict_cp(S: np.ndarray, tol: float = CP_TOL) -> CPVerdict:
    """Complete-positivity verdict from the Choi spectrum.

    Accepts a single superoperator or a stack, in which case the verdict is
    the worst case over the stack.  The Choi matrix is symmetrised before the
    eigensolve; an anti-Hermitian part larger than ``1e-8`` raises
    :class:`NonHermitianChoi` rather than being silently discarded.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    C = choi(S)
    defect = float(np.max(hermitian_defect(C))) if C.size else 0.0
    if defect > HERMITIAN_DEFECT_MAX:
        raise NonHermitianChoi(f"anti-Hermitian Choi defect {defect:.3e} > {HERMITIAN_DEFECT_MAX}")
    H = 0.5 * (C + np.swapaxes(C.conj(), -1, -2))
    lam = float(np.min(np.linalg.eigvalsh(H)[..., 0]))
    return CPVerdict(lam >= -tol, lam, defect)


def trace_row(S: np.ndarray) -> np.ndarray:
    """Row vector ``t`` with ``Tr S(X) = t @ vec(X)``; broadcasts."""
    d = dim_of(S)
    diag = np.arange(d) * (d + 1)
    return S[..., diag, :].sum(axis=-2)


def trace_defect(S: np.ndarray, mode: str = "preserving") -> np.ndarray:
    """Max over matrix units of the trace defect, per superoperator in a stack."""
    t = trace_row(S)
    if mode == "preserving":
        d = dim_of(S)
        t = t - vec(np.eye(d))
    elif mode != "annihilating":
        raise ValueError(f"unknown trace mode {mode!r}")
    return np.max(np.abs(t), axis=-1)


class TraceVerdict(NamedTuple):
    ok: bool
    defect: float


def verdict_trace(S: np.ndarray, mode: str = "preserving", tol: float = CP_TOL) -> TraceVerdict:
    """Trace-preserving / trace-annihilating verdict on the ``d**2`` matrix units."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    defect = float(np.max(trace_defect(S, mode)))
    return TraceVerdict(defect <= tol, defect)


def max_trace_on_states(S: np.ndarray) -> np.ndarray:
    """``max_rho Tr S(rho)`` over density operators: top eigenvalue of the effect ``S^dagger(I)``."""
    t = trace_row(S)
    d = dim_of(S)
    # Tr S(rho) = Tr(E rho) with E = unvec(t)^T, i.e. the C-order reshape of t
    E = t.reshape(t.shape[:-1] + (d, d))
    H = 0.5 * (E + np.swapaxes(E.conj(), -1, -2))
    return np.linalg.eigvalsh(H)[..., -1]


def superop_norm(S: np.ndarray) -> np.ndarray:
    """Spectral (induced 2-) norm of the superoperator matrix; broadcasts."""
    return np.linalg.norm(S, ord=2, axis=(-2, -1))


def is_density(rho: np.ndarray, tol: float = 1e-12) -> bool:
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        return False
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        return False
    if abs(np.trace(rho) - 1) > tol:
        return False
    return float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]) >= -tol
