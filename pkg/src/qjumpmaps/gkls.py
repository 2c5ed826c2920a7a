"""GKLS generators, their jump/no-jump split, and grid sampling."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Tuple, Union

import numpy as np

from .errors import DimensionMismatch, NegativeRate, NonHermitianH
from .grid import TimeGrid
from .superop import kraus_to_superop, left_right

HERMITIAN_TOL = 1e-10

OpLike = Union[np.ndarray, Callable[[float], np.ndarray]]
RateLike = Union[float, Callable[[float], float]]


def _as_callable(x):
    if callable(x):
        return x
    const = np.asarray(x) if not np.isscalar(x) else x
    return lambda t: const


@dataclass
class GKLSSpec:
    """``H(t)`` and channels ``(gamma_k(t), L_k(t))``; constants are accepted too.

    Callables are sampled at grid nodes only and must be safe to call
    repeatedly (sample single-threaded if they are not).
    """

    dim: int
    hamiltonian: OpLike = None
    channels: List[Tuple[RateLike, OpLike]] = field(default_factory=list)
    time_dependent: bool | None = None

    def __post_init__(self):
        if self.time_dependent is None:
            self.time_dependent = callable(self.hamiltonian) or any(
                callable(r) or callable(L) for r, L in self.channels)
        if self.hamiltonian is None:
            self.hamiltonian = np.zeros((self.dim, self.dim), dtype=complex)

    def H(self, t: float) -> np.ndarray:
        H = np.asarray(_as_callable(self.hamiltonian)(t), dtype=complex)
        if H.shape != (self.dim, self.dim):
            raise DimensionMismatch(f"H has shape {H.shape}, expected {(self.dim, self.dim)}")
        if np.max(np.abs(H - H.conj().T), initial=0.0) > HERMITIAN_TOL:
            raise NonHermitianH(f"H(t={t}) is not Hermitian")
        return H

    def rates_and_ops(self, t: float):
        out = []
        for rate, L in self.channels:
            g = float(_as_callable(rate)(t))
            if g < 0:
                raise NegativeRate(f"rate {g} < 0 at t={t}")
            L = np.asarray(_as_callable(L)(t), dtype=complex)
            if L.shape != (self.dim, self.dim):
                raise DimensionMismatch(f"noise operator has shape {L.shape}, expected {(self.dim, self.dim)}")
            out.append((g, L))
        return out


def split_generator(spec: GKLSSpec, t: float = 0.0):
    """``(Phi, Z)`` with ``L = Phi - Z``.

    ``Phi(rho) = sum gamma_k L_k rho L_k^dagger`` and ``Z(rho) = C rho + rho C^dagger``
    with ``C = iH + 1/2 sum gamma_k L_k^dagger L_k``.
    """
    H = spec.H(t)
    terms = spec.rates_and_ops(t)
    d = spec.dim
    phi = kraus_to_superop(terms, d)
    C = 1j * H
    for g, L in terms:
        C = C + 0.5 * g * (L.conj().T @ L)
    I = np.eye(d, dtype=complex)
    z = left_right(C, I) + left_right(I, C.conj().T)
    return phi, z


def build_generator(spec: GKLSSpec, t: float = 0.0) -> np.ndarray:
    phi, z = split_generator(spec, t)
    return phi - z


def sample_family(spec: GKLSSpec, grid: TimeGrid):
    """``(L, Phi, Z)`` at every node, each an ``(n + 1, d^2, d^2)`` array."""
    phis, zs = [], []
    for t in grid.nodes:
        phi, z = split_generator(spec, t)
        phis.append(phi)
        zs.append(z)
    phis = np.array(phis)
    zs = np.array(zs)
    return phis - zs, phis, zs
