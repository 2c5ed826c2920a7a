"""Memory-kernel master equations on the grid.

``d/dt Lambda_{t,s} = int_s^t K_{t,u} Lambda_{u,s} du`` with
``K = delta(t - u) A_t + R_{t,u}`` is solved column by column.  The module also
recovers ``Z`` from a free evolution, checks the alternative kernel equation
built from ``P = Lambda^(0) ⊛ Phi`` and compares against Laplace-domain
resolvents.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from . import _kernels as _k
from .errors import GridMismatch, IncompleteFamily, SingularDeconvolution, TailTooHeavy
from .grid import (KernelFamily, OneParamFamily, OneParamKernel, TimeGrid, TwoParamFamily, compose_left,
                   convolve_inhom, convolve_kernel, convolve_right_kernel, lift, spectral_max, triangle_derivatives)
from .series import JumpModel, SeriesResult

COND_MAX = 1e8
TAIL_TOL = 1e-8

Kernel = Union[KernelFamily, OneParamKernel]


@dataclass(frozen=True)
class VolterraScheme:
    """Explicit-Euler predictor, trapezoid corrector applied ``corrector_iterations`` times.

    The delta part of the kernel is taken implicitly in the corrector.
    """

    predictor: str = "explicit_euler"
    corrector: str = "trapezoid"
    corrector_iterations: int = 2

    def __post_init__(self):
        if self.corrector_iterations < 1:
            raise ValueError("corrector_iterations must be >= 1")
        if self.predictor != "explicit_euler" or self.corrector != "trapezoid":
            raise ValueError("only the explicit-Euler / trapezoid pair is implemented")


def _as_kernel(x, grid=None) -> Kernel:
    if isinstance(x, (KernelFamily, OneParamKernel)):
        return x
    if isinstance(x, TwoParamFamily):
        return KernelFamily(x.grid, None, x)
    if isinstance(x, OneParamFamily):
        return OneParamKernel(x.grid, None, x)
    raise TypeError(f"cannot read {type(x).__name__} as a kernel")


def kernel_from_pair(phi, z) -> Kernel:
    """``K = Phi - Z`` part by part."""
    phi = _as_kernel(phi)
    z = _as_kernel(z)
    if type(phi) is not type(z):
        raise GridMismatch("Phi and Z must share a representation (both one- or both two-parameter)")
    return phi - z


def solve_volterra(K: Kernel, grid: TimeGrid | None = None, scheme: VolterraScheme | None = None,
                   columns=None) -> TwoParamFamily:
    """Solve ``d/dt L_{t,s} = A_t L_{t,s} + int_s^t R_{t,u} L_{u,s} du``, ``L_{s,s} = id``.

    A homogeneous kernel is lifted and only column 0 is solved (that column is
    the one-parameter map).  ``columns`` selects initial-time columns.
    """
    scheme = scheme or VolterraScheme()
    grid = grid or K.grid
    if grid != K.grid:
        raise GridMismatch(f"{grid} != {K.grid}")
    if isinstance(K, OneParamKernel):
        K = K.lift()
        if columns is None:
            columns = [0]
    cols = np.arange(grid.N) if columns is None else np.asarray(columns, dtype=np.int64)
    A = K.delta_or_zero()
    R = K.regular_or_zero().values
    out = _k.volterra_cols(A, R, cols, grid.h, scheme.corrector_iterations)
    return TwoParamFamily(grid, out, cols)


def column_as_one_param(F: TwoParamFamily) -> OneParamFamily:
    """Column 0 of a two-parameter family as a one-parameter family."""
    return OneParamFamily(F.grid, F.column(0))


def z_from_free(free, cond_max: float = COND_MAX) -> KernelFamily:
    """``Z = delta(t - s) A_t + R_{t,s}`` with ``d/dt free = -Z ⊛ free``.

    Writing ``G_{t,s} = A_t + int_s^t R_{t,u} du`` turns the relation into the
    second-kind equation ``G = -D - G ⊛ D`` with ``D = d/dt free``; it is
    solved row by row with trapezoid weights, then ``A_t = G_{t,t}`` and
    ``R = -d/ds G``.
    """
    if isinstance(free, OneParamFamily):
        free = lift(free)
    if not free.full:
        raise IncompleteFamily("z_from_free needs every column")
    h = free.grid.h
    # D is taken to fourth order: the one-sided stencil on the diagonal and
    # the centered one just below it would otherwise leave an O(h^2) step
    # in G that d/ds turns into an O(h) error on the first diagonals of R
    D = triangle_derivatives(free.values, h, order=4)[0]
    G, worst = _k.second_kind_rows(D, h)
    if worst > cond_max:
        raise SingularDeconvolution(f"diagonal block condition number {worst:.3e} > {cond_max:.1e}")
    delta = G[np.arange(free.grid.N), np.arange(free.grid.N)].copy()
    R = TwoParamFamily(free.grid, -triangle_derivatives(G, h, order=4)[1])
    return KernelFamily(free.grid, delta, R)


def reconvolution_residual(free, Z: Kernel) -> float:
    """``max ||d/dt free + Z ⊛ free||``."""
    if isinstance(free, OneParamFamily):
        free = lift(free)
    if isinstance(Z, OneParamKernel):
        Z = Z.lift()
    res = free.derivative().values + convolve_kernel(Z, free).values
    return spectral_max(res[free.residual_mask()])


def new_me_terms(free, phi):
    """``(P, local, kernel)`` for the equation driven by ``P = free ⊛ Phi``.

    ``local`` is ``P_{t,t}`` (non-zero only when ``Phi`` has a delta part) and
    ``kernel = d/dt P``.
    """
    if isinstance(free, OneParamFamily):
        free = lift(free)
    phi = _as_kernel(phi)
    if isinstance(phi, OneParamKernel):
        phi = phi.lift()
    P = convolve_right_kernel(free, phi)
    local = P.diagonal().copy()
    return P, local, P.derivative()


def new_me_residual(lam, free, phi) -> float:
    """``max ||d/dt L - (dP/dt ⊛ L + P_{t,t} L) - d/dt free||`` with ``P = free ⊛ Phi``.

    ``lam`` may hold a subset of columns; ``free`` must be complete.  For a
    column subset, columns with fewer than 3 rows are skipped.
    """
    if isinstance(lam, OneParamFamily):
        lam = lift(lam)
    if isinstance(free, OneParamFamily):
        free = lift(free)
    if lam.grid != free.grid:
        raise GridMismatch(f"{lam.grid} != {free.grid}")
    P, local, kern = new_me_terms(free, phi)
    free_cols = free if free.full and np.array_equal(free.cols, lam.cols) else free.restrict(lam.cols)
    rhs = convolve_inhom(kern, lam).values + compose_left(local, lam).values + free_cols.derivative().values
    res = lam.derivative().values - rhs
    return spectral_max(res[lam.residual_mask()])


def _laplace(values: np.ndarray, t: np.ndarray, s: float, h: float) -> np.ndarray:
    w = np.exp(-s * t) * h
    w[0] *= 0.5
    w[-1] *= 0.5
    return np.tensordot(w, values, axes=(0, 0))


def laplace_check(series: SeriesResult, model: JumpModel, s_values: Sequence[float],
                  tail_tol: float = TAIL_TOL) -> list:
    """``||(s + Z~_s - Phi~_s) Lambda~_s - id||`` for each ``s``.

    Transforms are trapezoid sums over the grid; delta parts transform to
    constants.  Raises ``TailTooHeavy`` when ``exp(-s T) ||Lambda_T||`` exceeds
    ``tail_tol``, since the truncated tail would then dominate.
    """
    if model.regime not in ("semigroup", "homogeneous"):
        raise ValueError("the Laplace check needs a homogeneous regime")
    total = series.total
    if not isinstance(total, OneParamFamily):
        total = column_as_one_param(total)
    grid = total.grid
    t = grid.nodes - grid.t0
    T = t[-1]
    norm_T = spectral_max(total.values[-1:])
    Dm = total.D
    I = np.eye(Dm)

    def transform(k, s):
        if model.regime == "semigroup":
            return np.asarray(k, dtype=complex)
        out = np.zeros((Dm, Dm), dtype=complex)
        if k.delta is not None:
            out += k.delta
        if k.regular is not None:
            out += _laplace(k.regular.values, t, s, grid.h)
        return out

    defects = []
    for s in s_values:
        if s <= 0:
            raise ValueError("s must be positive")
        tail = np.exp(-s * T) * norm_T
        if tail > tail_tol:
            raise TailTooHeavy(f"exp(-sT)||Lambda_T|| = {tail:.3e} > {tail_tol:.1e} at s={s}, T={T}")
        lt = _laplace(total.values, t, s, grid.h)
        M = s * I + transform(model.z, s) - transform(model.jump, s)
        defects.append(float(np.linalg.norm(M @ lt - I, ord=2)))
    return defects
