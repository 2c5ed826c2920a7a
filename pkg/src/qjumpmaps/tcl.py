"""Time-local (convolutionless) generators and propagators.

``L_{t,s} = (d/dt Lambda_{t,s}) Lambda_{t,s}^{-1}`` is extracted per initial
time column wherever ``Lambda_{t,s}`` is safely invertible; nodes with a
condition number above ``cond_max`` are skipped and logged, never patched.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels as _k
from .errors import SingularMap, SingularMapWarning
from .grid import TimeGrid, TwoParamFamily, node_derivative, spectral_max

COND_MAX = 1e8


@dataclass
class TCLFamily:
    """Generators ``L_{t_j, t0}`` for ``j >= t0_index``.

    ``valid[j]`` is False where the map could not be inverted (and ``values[j]``
    is NaN); ``condition_log[j]`` is the 2-norm condition number of
    ``Lambda_{t_j, t0}`` (NaN before ``t0_index``).
    """

    grid: TimeGrid
    t0_index: int
    values: np.ndarray
    valid: np.ndarray
    condition_log: np.ndarray

    @property
    def complete(self) -> bool:
        return bool(np.all(self.valid[self.t0_index:]))

    @property
    def first_invalid(self) -> int | None:
        bad = np.flatnonzero(~self.valid[self.t0_index:])
        return None if bad.size == 0 else int(self.t0_index + bad[0])


def _right_solve(dX, X):
    # L X = dX  ->  X^T L^T = dX^T
    return np.swapaxes(np.linalg.solve(np.swapaxes(X, -1, -2), np.swapaxes(dX, -1, -2)), -1, -2)


def extract_tcl(family: TwoParamFamily, t0_index: int = 0, cond_max: float = COND_MAX,
                strict: bool = False) -> TCLFamily:
    """``L_{t_j,t0} = (d/dt Lambda)_{t_j,t0} Lambda_{t_j,t0}^{-1}`` on one column.

    Singular nodes are omitted; a ``SingularMapWarning`` lists them, or with
    ``strict=True`` a ``SingularMap`` is raised (its ``partial`` attribute
    holds the partial family).
    """
    if cond_max <= 1:
        raise ValueError("cond_max must exceed 1")
    grid = family.grid
    col = family.column(t0_index)
    dcol = node_derivative(col, grid.h)
    N, D = grid.N, family.D
    values = np.full((N, D, D), np.nan, dtype=complex)
    valid = np.zeros(N, dtype=bool)
    cond = np.full(N, np.nan)
    cond[t0_index:] = np.linalg.cond(col)
    ok = cond[t0_index:] <= cond_max
    idx = t0_index + np.flatnonzero(ok)
    if idx.size:
        values[idx] = _right_solve(dcol[ok], col[ok])
        valid[idx] = True
    out = TCLFamily(grid, t0_index, values, valid, cond)
    if not out.complete:
        bad = np.flatnonzero(~valid[t0_index:]) + t0_index
        msg = f"{bad.size} node(s) skipped for cond > {cond_max:.1e}, first at index {bad[0]}"
        if strict:
            err = SingularMap(msg)
            err.partial = out
            raise err
        warnings.warn(msg, SingularMapWarning, stacklevel=2)
    return out


def integrate_tcl(tcl: TCLFamily) -> TwoParamFamily:
    """RK4 for ``d/dt Lambda = L_{t,t0} Lambda`` from ``Lambda_{t0,t0} = id``.

    Interior RK4 stages use the average of neighbouring node generators.
    Integration stops at the first skipped node; later rows are NaN.
    """
    grid = tcl.grid
    j = tcl.t0_index
    h = grid.h
    D = tcl.values.shape[-1]
    stop = tcl.first_invalid
    last = grid.n if stop is None else stop - 1
    out = np.full((grid.N, 1, D, D), np.nan, dtype=complex)
    out[:j, 0] = 0.0
    I = np.eye(D, dtype=complex)
    X = I.copy()
    out[j, 0] = X
    for i in range(j, last):
        L0 = tcl.values[i]
        L1 = tcl.values[i + 1]
        Lm = 0.5 * (L0 + L1)
        k1 = L0 @ X
        k2 = Lm @ (X + 0.5 * h * k1)
        k3 = Lm @ (X + 0.5 * h * k2)
        k4 = L1 @ (X + h * k3)
        X = X + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i + 1, 0] = X
    return TwoParamFamily(grid, out, [j])


def roundtrip_defect(family: TwoParamFamily, t0_index: int = 0, cond_max: float = COND_MAX) -> float:
    """``max ||integrate(extract(F)) - F||`` on the column, over the integrated range."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SingularMapWarning)
        tcl = extract_tcl(family, t0_index, cond_max)
    back = integrate_tcl(tcl).column(t0_index)
    ref = family.column(t0_index)
    ok = ~np.isnan(back.real).any(axis=(-2, -1))
    return spectral_max(back[ok] - ref[ok])


def propagator(family: TwoParamFamily, i: int, j: int, t0_index: int = 0, cond_max: float = COND_MAX):
    """``V_{t_i,t_j} = Lambda_{t_i,t0} Lambda_{t_j,t0}^{-1}``."""
    if not t0_index <= j <= i:
        raise IndexError(f"need t0_index <= j <= i, got {t0_index}, {j}, {i}")
    Lj = family[j, t0_index]
    c = np.linalg.cond(Lj)
    if c > cond_max:
        raise SingularMap(f"Lambda at node {j} has condition number {c:.3e}")
    return _right_solve(family[i, t0_index], Lj)


def _propagators(family: TwoParamFamily, t0: int, start: int, cond_max: float):
    """All ``V_{i,j}`` for ``start <= j <= i`` from column ``t0``; NaN where singular."""
    col = family.column(t0)[start - t0:]
    cond = np.linalg.cond(col)
    inv = np.full_like(col, np.nan)
    ok = cond <= cond_max
    inv[ok] = np.linalg.inv(col[ok])
    return col[:, None] @ inv[None, :]


def propagator_t0_defect(family: TwoParamFamily, t0_indices: Sequence[int], cond_max: float = COND_MAX) -> float:
    """``max ||V_{t,s}(t0) - V_{t,s}(t0')||`` over ``s <= t`` after every ``t0`` in the list."""
    t0s = sorted(set(int(x) for x in t0_indices))
    if len(t0s) < 2:
        return 0.0
    start = t0s[-1]
    n = family.grid.N - start
    tri = np.tril(np.ones((n, n), dtype=bool))
    Vs = [_propagators(family, t0, start, cond_max) for t0 in t0s]
    worst = 0.0
    for A, B in itertools.combinations(Vs, 2):
        diff = (A - B)[tri]
        diff = diff[~np.isnan(diff.real).any(axis=(-2, -1))]
        worst = max(worst, spectral_max(diff))
    return worst


def composition_defect(family: TwoParamFamily) -> float:
    """``max ||Lambda_{i,j} Lambda_{j,k} - Lambda_{i,k}||`` over node triples ``k <= j <= i``.

    ``j`` and ``k`` range over the stored columns.  The Frobenius norm is used
    (an upper bound on the spectral norm) so the triple loop stays compiled.
    """
    return float(_k.composition_frob(family.values, family.cols))


def tcl_t0_defect(family: TwoParamFamily, t0_indices: Sequence[int], cond_max: float = COND_MAX) -> float:
    """``max ||L_{t,t0} - L_{t,t0'}||`` over the common nodes of the listed columns."""
    t0s = sorted(set(int(x) for x in t0_indices))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SingularMapWarning)
        fams = [extract_tcl(family, t0, cond_max) for t0 in t0s]
    start = t0s[-1]
    worst = 0.0
    for a, b in itertools.combinations(fams, 2):
        ok = a.valid[start:] & b.valid[start:]
        if ok.any():
            worst = max(worst, spectral_max((a.values[start:] - b.values[start:])[ok]))
    return worst
