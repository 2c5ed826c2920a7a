"""Dynamical maps as quantum-jump series.

A map is written as ``Lambda = sum_l Lambda^(l)`` where ``Lambda^(l)`` collects
histories with exactly ``l`` jumps: free evolution ``Lambda^(0)`` interleaved
with completely positive jump maps ``Phi``.  Four regimes are covered:

=================  ==================  ===========================  =================================
regime             free                jump                         recursion
=================  ==================  ===========================  =================================
semigroup          ``exp(-Z t)``       one superoperator ``Phi``    ``L0 * (Phi o L^(l-1))``
homogeneous        one-parameter       ``OneParamKernel``           ``P * L^(l-1)``, ``P = L0 * Phi``
inhom_semigroup    RK4 of ``-Z_t``     per-node ``Phi_t``           ``L0 ⊛ (Phi_t o L^(l-1))``
inhomogeneous      two-parameter       ``KernelFamily``             ``P ⊛ L^(l-1)``, ``P = L0 ⊛ Phi``
=================  ==================  ===========================  =================================

Homogeneous regimes keep their terms as one-parameter families; lifting them
gives the two-parameter view (``SeriesResult.lifted_total``).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np
from scipy.linalg import expm

from . import _kernels as _k
from .errors import (DimensionMismatch, IncompleteFamily, NotCompletelyPositive, NotConvergedWarning,
                     SlowDecayWarning)
from .gkls import GKLSSpec, build_generator, split_generator
from .grid import (KernelFamily, OneParamFamily, OneParamKernel, TimeGrid, TwoParamFamily, compose_left,
                   convolve_hom, convolve_inhom, convolve_kernel, convolve_kernel_hom, convolve_right_kernel,
                   convolve_right_kernel_hom, lift, spectral_max)
from .superop import max_trace_on_states, min_choi_eigenvalue

REGIMES = ("semigroup", "homogeneous", "inhom_semigroup", "inhomogeneous")
FREE_CP_TOL = 1e-8

Family = Union[OneParamFamily, TwoParamFamily]


@dataclass
class JumpModel:
    """Free evolution plus jump maps (and optionally the matching ``Z``).

    ``jump`` and ``z`` take the regime's shape: a superoperator (semigroup),
    per-node ``(n + 1, D, D)`` arrays (inhom_semigroup), a ``OneParamKernel``
    (homogeneous) or a ``KernelFamily`` (inhomogeneous).  ``z`` is only needed
    for hierarchy residuals and memory-kernel solves.
    """

    regime: str
    grid: TimeGrid
    free: Family
    jump: object
    z: object = None
    cp_waived: bool = False
    name: str = ""

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")

    @property
    def D(self) -> int:
        return self.free.D

    def validate(self, tol: float = FREE_CP_TOL):
        """Check the free/jump invariants; raises NotCompletelyPositive."""
        vals = self.free.values
        lam = float(np.min(min_choi_eigenvalue(vals))) if vals.size else 0.0
        if lam < -tol:
            raise NotCompletelyPositive(f"free evolution has Choi eigenvalue {lam:.3e}")
        top = float(np.max(max_trace_on_states(vals)))
        if top > 1 + tol:
            raise NotCompletelyPositive(f"free evolution increases trace (max {top:.6f})")
        if isinstance(self.free, TwoParamFamily):
            diag = self.free.diagonal()
        else:
            diag = vals[:1]
        if np.max(np.abs(diag - np.eye(self.D)), initial=0.0) > 1e-12:
            raise NotCompletelyPositive("free evolution must be the identity on the diagonal")
        if self.cp_waived:
            q, p = qp_maps(self)
            for name, fam in (("Q", q), ("P", p)):
                lamq = float(np.min(min_choi_eigenvalue(fam.values)))
                if lamq < -tol:
                    raise NotCompletelyPositive(f"{name} has Choi eigenvalue {lamq:.3e} (CP of Phi waived)")
        else:
            lamj = jump_min_choi(self)
            if lamj < -tol:
                raise NotCompletelyPositive(f"jump map has Choi eigenvalue {lamj:.3e}")
        return self

    def phi_kernel(self):
        """The jump part in kernel form (a semigroup's ``Phi`` is ``delta(t) Phi``)."""
        r = self.regime
        if r == "semigroup":
            return OneParamKernel(self.grid, np.asarray(self.jump, dtype=complex), None, D=self.D)
        if r == "inhom_semigroup":
            return KernelFamily(self.grid, np.asarray(self.jump, dtype=complex), None, D=self.D)
        return self.jump

    def z_kernel(self):
        if self.z is None:
            raise ValueError("model has no Z")
        r = self.regime
        if r == "semigroup":
            return OneParamKernel(self.grid, np.asarray(self.z, dtype=complex), None, D=self.D)
        if r == "inhom_semigroup":
            return KernelFamily(self.grid, np.asarray(self.z, dtype=complex), None, D=self.D)
        return self.z

    def kernel(self):
        """Memory kernel ``K = Phi - Z``."""
        return self.phi_kernel() - self.z_kernel()

    def lifted(self) -> "JumpModel":
        """The homogeneous model as inhomogeneous two-parameter data."""
        if self.regime == "homogeneous":
            return JumpModel("inhomogeneous", self.grid, lift(self.free), self.jump.lift(),
                             None if self.z is None else self.z.lift(), self.cp_waived, self.name)
        if self.regime == "semigroup":
            N = self.grid.N
            return JumpModel("inhom_semigroup", self.grid, lift(self.free),
                             np.broadcast_to(self.jump, (N,) + self.jump.shape).copy(),
                             None if self.z is None else np.broadcast_to(self.z, (N,) + self.z.shape).copy(),
                             self.cp_waived, self.name)
        return self


def jump_min_choi(model: JumpModel) -> float:
    j = model.jump
    parts = []
    if isinstance(j, (OneParamKernel, KernelFamily)):
        if j.delta is not None:
            parts.append(j.delta)
        if j.regular is not None:
            parts.append(j.regular.values)
    else:
        parts.append(np.asarray(j))
    lam = [float(np.min(min_choi_eigenvalue(p))) for p in parts if np.size(p)]
    return min(lam) if lam else 0.0


@dataclass
class SeriesResult:
    total: Family
    terms: List[Family]
    truncation_norm: float
    converged: bool
    term_norms: List[float] = field(default_factory=list)
    regime: str = ""

    @property
    def n_terms(self) -> int:
        return len(self.term_norms)

    def lifted_total(self, columns=None) -> TwoParamFamily:
        if isinstance(self.total, OneParamFamily):
            return lift(self.total, columns)
        return self.total if columns is None else self.total.restrict(columns)

    def term_min_choi(self) -> List[float]:
        return [float(np.min(min_choi_eigenvalue(t.values))) for t in self.terms]


def _norm(F: Family) -> float:
    return spectral_max(F.values)


def _run(first: Family, step, tol: float, lmax: int, keep_terms: bool, regime: str, rate_bound: float,
         no_jumps: bool = False):
    """Shared truncation loop: ``term_{l} = step(term_{l-1})``.

    With ``no_jumps`` every later term vanishes identically, so the loop is
    skipped and the truncation norm is exactly zero.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    total_vals = first.values.copy()
    terms = [first] if keep_terms else []
    norms = [_norm(first)]
    if no_jumps:
        total = OneParamFamily(first.grid, total_vals) if isinstance(first, OneParamFamily) else \
            TwoParamFamily(first.grid, total_vals, first.cols)
        return SeriesResult(total, terms, 0.0, True, norms, regime)
    term = first
    converged = norms[0] < tol
    slow = False
    l = 0
    while not converged and l < lmax:
        l += 1
        term = step(term)
        nrm = _norm(term)
        total_vals += term.values
        norms.append(nrm)
        if keep_terms:
            terms.append(term)
        if l > math.e * rate_bound and nrm > norms[-2] and nrm > tol:
            slow = True
        converged = nrm < tol
    if slow:
        warnings.warn(f"term norms stopped decaying after l > e*M*T = {math.e * rate_bound:.2f}",
                      SlowDecayWarning, stacklevel=3)
    if not converged:
        warnings.warn(f"series not converged at lmax={lmax}: last term norm {norms[-1]:.3e} >= {tol:.1e}",
                      NotConvergedWarning, stacklevel=3)
    if isinstance(first, OneParamFamily):
        total = OneParamFamily(first.grid, total_vals)
    else:
        total = TwoParamFamily(first.grid, total_vals, first.cols)
    return SeriesResult(total, terms, norms[-1], converged, norms, regime)


def semigroup_free(z: np.ndarray, grid: TimeGrid) -> OneParamFamily:
    """``exp(-Z t_j)`` at every node (``t`` measured from ``grid.t0``)."""
    t = grid.nodes - grid.t0
    return OneParamFamily(grid, expm(-t[:, None, None] * np.asarray(z, dtype=complex)[None]))


def series_semigroup(phi, z, grid: TimeGrid, tol: float = 1e-10, lmax: int = 64,
                     keep_terms: bool = True) -> SeriesResult:
    """Jump series of the semigroup ``exp(t (Phi - Z))``."""
    phi = np.asarray(phi, dtype=complex)
    z = np.asarray(z, dtype=complex)
    if phi.shape != z.shape:
        raise DimensionMismatch(f"Phi {phi.shape} and Z {z.shape} differ")
    model = JumpModel("semigroup", grid, semigroup_free(z, grid), phi, z)
    return series(model, tol, lmax, keep_terms=keep_terms)


def series_homogeneous(model: JumpModel, tol: float = 1e-10, lmax: int = 64, keep_terms: bool = True):
    if model.regime != "homogeneous":
        raise ValueError(f"expected a homogeneous model, got {model.regime}")
    return series(model, tol, lmax, keep_terms=keep_terms)


def series_inhomogeneous(model: JumpModel, tol: float = 1e-10, lmax: int = 64, keep_terms: bool = True,
                         columns=None):
    if model.regime != "inhomogeneous":
        raise ValueError(f"expected an inhomogeneous model, got {model.regime}")
    return series(model, tol, lmax, keep_terms=keep_terms, columns=columns)


def rk4_step_maps(spec: GKLSSpec, grid: TimeGrid, which: str = "z") -> np.ndarray:
    """One-step RK4 propagators ``P_i`` for ``dX/dt = M_t X`` on each grid interval.

    ``which="z"`` integrates ``M = -Z_t`` (free evolution), ``"l"`` the full ``L_t``.
    """
    h = grid.h
    t = grid.nodes

    def M(s):
        if which == "z":
            return -split_generator(spec, s)[1]
        return build_generator(spec, s)

    D = spec.dim ** 2
    I = np.eye(D, dtype=complex)
    out = np.empty((grid.n, D, D), dtype=complex)
    M0 = M(t[0])
    for i in range(grid.n):
        Mm = M(t[i] + 0.5 * h)
        M1 = M(t[i + 1])
        k1 = M0
        k2 = Mm @ (I + 0.5 * h * k1)
        k3 = Mm @ (I + 0.5 * h * k2)
        k4 = M1 @ (I + h * k3)
        out[i] = I + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        M0 = M1
    return out


def inhom_semigroup_model(spec: GKLSSpec, grid: TimeGrid, columns=None, free_columns=None) -> JumpModel:
    """Free family ``T exp(-int Z)`` by RK4 per column plus node-wise ``Phi_t``, ``Z_t``."""
    P = rk4_step_maps(spec, grid, "z")
    cols = np.arange(grid.N) if free_columns is None else np.asarray(free_columns, dtype=np.int64)
    free = TwoParamFamily(grid, _k.propagate_steps(P, cols, spec.dim ** 2), cols)
    phis, zs = [], []
    for t in grid.nodes:
        phi, z = split_generator(spec, t)
        phis.append(phi)
        zs.append(z)
    return JumpModel("inhom_semigroup", grid, free, np.array(phis), np.array(zs))


def series_inhom_semigroup(spec: GKLSSpec, grid: TimeGrid, tol: float = 1e-10, lmax: int = 64,
                           keep_terms: bool = True, columns=None) -> SeriesResult:
    """Jump series of the inhomogeneous semigroup of a time-dependent GKLS spec."""
    model = inhom_semigroup_model(spec, grid)
    return series(model, tol, lmax, keep_terms=keep_terms, columns=columns)


def _rate_bound(model: JumpModel, P: Optional[Family]) -> float:
    T = model.grid.n * model.grid.h
    if model.regime in ("semigroup", "inhom_semigroup"):
        return spectral_max(np.asarray(model.jump)) * T
    return (P.sup_norm() if P is not None else 0.0) * T


def p_map(model: JumpModel) -> Family:
    """``P = Lambda^(0) ⊛ Phi`` (or its node-wise / homogeneous analogue)."""
    r = model.regime
    if r == "semigroup":
        return OneParamFamily(model.grid, _k.right_const(model.free.values, np.asarray(model.jump, dtype=complex)))
    if r == "inhom_semigroup":
        free = model.free
        if not free.full:
            raise IncompleteFamily("P needs every column of the free evolution")
        return TwoParamFamily(free.grid, _k.right_nodes(free.values, model.jump, free.cols), free.cols)
    if r == "homogeneous":
        return convolve_right_kernel_hom(model.free, model.jump)
    return convolve_right_kernel(model.free, model.jump)


def q_map(model: JumpModel) -> Family:
    """``Q = Phi ⊛ Lambda^(0)`` (or its node-wise / homogeneous analogue)."""
    r = model.regime
    if r == "semigroup":
        return OneParamFamily(model.grid, _k.left_const(np.asarray(model.jump, dtype=complex), model.free.values))
    if r == "inhom_semigroup":
        return compose_left(model.jump, model.free)
    if r == "homogeneous":
        return convolve_kernel_hom(model.jump, model.free)
    return convolve_kernel(model.jump, model.free)


def qp_maps(model: JumpModel):
    return q_map(model), p_map(model)


def _free_view(model: JumpModel, columns):
    free = model.free
    if columns is None or isinstance(free, OneParamFamily):
        return free
    return free.restrict(columns)


def _no_jumps(model: JumpModel) -> bool:
    j = model.jump
    if isinstance(j, (OneParamKernel, KernelFamily)):
        return not any(p is not None and np.any(p.values if hasattr(p, "values") else p)
                       for p in (j.delta, j.regular))
    return not np.any(j)


def series(model: JumpModel, tol: float = 1e-10, lmax: int = 64, keep_terms: bool = True,
           columns=None) -> SeriesResult:
    """Sum the jump series of any regime, stopping once a term's sup-norm < ``tol``.

    ``columns`` restricts two-parameter regimes to the listed initial-time
    columns (the free evolution must still be complete).  Returns a partial
    result with ``converged=False`` (and a ``NotConvergedWarning``) when
    ``lmax`` is reached first.
    """
    r = model.regime
    first = _free_view(model, columns)
    h = model.grid.h
    if r == "semigroup":
        phi = np.asarray(model.jump, dtype=complex)
        free = model.free.values
        step = lambda X: OneParamFamily(X.grid, _k.conv_hom(free, _k.left_const(phi, X.values), h))
        bound = _rate_bound(model, None)
    elif r == "inhom_semigroup":
        free = model.free
        if not free.full:
            raise IncompleteFamily("the series needs every column of the free evolution")
        phis = np.asarray(model.jump, dtype=complex)

        def step(X):
            Y = _k.left_nodes(phis, X.values, X.cols)
            return TwoParamFamily(X.grid, _k.conv_cols(free.values, Y, X.cols, h), X.cols)

        bound = _rate_bound(model, None)
    elif r == "homogeneous":
        P = p_map(model)
        step = lambda X: convolve_hom(P, X)
        bound = _rate_bound(model, P)
    else:
        P = p_map(model)
        step = lambda X: convolve_inhom(P, X)
        bound = _rate_bound(model, P)
    return _run(first, step, tol, lmax, keep_terms, r, bound, no_jumps=_no_jumps(model))


def resum_qp(model: JumpModel, tol: float = 1e-10, lmax: int = 64, columns=None):
    """Two resummed forms of the same map.

    ``via_Q = L0 + L0 ⊛ (sum_l Q^{⊛l})`` and ``via_P = L0 + sum_l P^{⊛l} ⊛ L0``,
    the latter accumulated as ``X_l = P ⊛ X_{l-1}``, ``X_0 = L0``.
    """
    q, p = qp_maps(model)
    free = _free_view(model, columns)
    hom = isinstance(free, OneParamFamily)
    conv = convolve_hom if hom else convolve_inhom
    if hom:
        start_q = q
    else:
        start_q = q if columns is None else q.restrict(columns)

    # sum of Q powers, right-nested: Y_l = Q ⊛ Y_{l-1}
    sq = _run(start_q, lambda Y: conv(q, Y), tol, lmax, False, model.regime, _rate_bound(model, p))
    via_q = free + conv(model.free, sq.total)
    sp = _run(free, lambda X: conv(p, X), tol, lmax, False, model.regime, _rate_bound(model, p))
    return via_q, sp.total


def hierarchy_residual(result: SeriesResult, model: JumpModel) -> float:
    """``max_l ||d/dt L^(l) + Z-term - Phi-term||`` over the grid.

    The Z/Phi actions follow the regime: node-wise composition for the two
    semigroup regimes, homogeneous or inhomogeneous kernel convolution otherwise.
    Needs ``keep_terms=True`` and ``model.z``.
    """
    if not result.terms:
        raise ValueError("hierarchy residual needs the individual terms (keep_terms=True)")
    if model.z is None:
        raise ValueError("hierarchy residual needs the model's Z")
    r = model.regime
    worst = 0.0
    prev = None
    for term in result.terms:
        dt = term.derivative().values
        if r == "semigroup":
            zt = _k.left_const(np.asarray(model.z, dtype=complex), term.values)
            ph = 0 if prev is None else _k.left_const(np.asarray(model.jump, dtype=complex), prev.values)
        elif r == "inhom_semigroup":
            zt = _k.left_nodes(np.asarray(model.z, dtype=complex), term.values, term.cols)
            ph = 0 if prev is None else _k.left_nodes(np.asarray(model.jump, dtype=complex), prev.values, prev.cols)
        elif r == "homogeneous":
            zt = convolve_kernel_hom(model.z, term).values
            ph = 0 if prev is None else convolve_kernel_hom(model.jump, prev).values
        else:
            zt = convolve_kernel(model.z, term).values
            ph = 0 if prev is None else convolve_kernel(model.jump, prev).values
        res = dt + zt - ph
        if isinstance(term, TwoParamFamily):
            res = res[term.residual_mask()]
        worst = max(worst, spectral_max(res))
        prev = term
    return worst


def time_ordered_rk4(spec: GKLSSpec, grid: TimeGrid, columns=None, substeps: int = 4) -> TwoParamFamily:
    """Reference ``T exp(int_s^t L_u du)`` by classical RK4 on ``dX/dt = L_t X``.

    Uses ``substeps`` RK4 steps per grid interval, sampling the full generator
    (not its split), so it shares no code path with the series.
    """
    fine = TimeGrid(grid.t0, grid.h / substeps, grid.n * substeps)
    P = rk4_step_maps(spec, fine, "l")
    # collapse substeps into one map per grid interval
    D = spec.dim ** 2
    coarse = np.empty((grid.n, D, D), dtype=complex)
    for i in range(grid.n):
        m = np.eye(D, dtype=complex)
        for s in range(substeps):
            m = P[i * substeps + s] @ m
        coarse[i] = m
    cols = np.arange(grid.N) if columns is None else np.asarray(columns, dtype=np.int64)
    return TwoParamFamily(grid, _k.propagate_steps(coarse, cols, D), cols)
