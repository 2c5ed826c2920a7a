"""Shipped model families with closed forms, plus the name registry used by the CLI.

Semi-Markov models
------------------
A jump happens after a waiting time with density ``f``; each jump applies the
channel ``E`` and restarts the clock.  With survival ``q = 1 - int f`` the map is
``Lambda = q id + Lambda ⊛ (f E)``.  In jump-series form this is
``Lambda^(0) = q id`` with ``Phi = k E`` and ``Z = k id`` where the rate kernel
``k`` solves ``k ⊛ q = f`` (homogeneously ``k~ = f~ / q~``):

* exponential waiting, ``f = kappa e^{-kappa t}``: ``k = kappa delta(t)`` (a semigroup),
* gamma2 waiting, ``f = kappa^2 t e^{-kappa t}``: ``k = kappa^2 e^{-2 kappa t}``.

When ``kappa`` depends on the time of the previous jump, ``k`` has no closed
form: ``G = f + G ⊛ f`` is solved on the grid, giving ``k = delta(t - s) f(t,t) - d/ds G``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Union

import numpy as np
from scipy.linalg import expm

from . import _kernels as _k
from .errors import ChannelNotCPTP, InvalidConfig, NegativeRate, UnknownModel
from .gkls import GKLSSpec, split_generator
from .grid import KernelFamily, OneParamFamily, OneParamKernel, TimeGrid, TwoParamFamily, triangle_derivatives
from .series import JumpModel, inhom_semigroup_model, semigroup_free
from .superop import (SIGMA_MINUS, SIGMA_Z, depolarizing_channel, identity_superop, verdict_cp, verdict_trace)


@dataclass
class ModelDescriptor:
    """A named model: ``jump_model(grid)`` builds its jump-series data on a grid.

    GKLS-driven models also expose ``spec`` (the generator) and the
    closed-form ``exact(t, s)`` map when one exists.
    """

    name: str
    regime: str
    parameters: Dict[str, float]
    builder: Callable[[TimeGrid], JumpModel]
    spec: GKLSSpec | None = None
    exact: Callable | None = None
    notes: Dict[str, object] = field(default_factory=dict)

    def jump_model(self, grid: TimeGrid) -> JumpModel:
        return self.builder(grid)

    @property
    def homogeneous(self) -> bool:
        return self.regime in ("semigroup", "homogeneous")


def _rate_fn(base: float, amp: float = 0.0, freq: float = 0.0):
    if amp == 0.0:
        return float(base)
    return lambda t: base + amp * np.sin(freq * t)


def _check_rate(gamma, name="gamma"):
    if callable(gamma):
        return gamma
    if gamma < 0:
        raise NegativeRate(f"{name} = {gamma} < 0")
    return float(gamma)


def _gkls_jump_model(spec: GKLSSpec, name: str):
    def build(grid: TimeGrid) -> JumpModel:
        if spec.time_dependent:
            m = inhom_semigroup_model(spec, grid)
        else:
            phi, z = split_generator(spec, grid.t0)
            m = JumpModel("semigroup", grid, semigroup_free(z, grid), phi, z)
        m.name = name
        return m
    return build


def model_amplitude_damping(gamma: Union[float, Callable] = 1.0, gamma_amp: float = 0.0,
                            gamma_freq: float = 0.0) -> ModelDescriptor:
    """Qubit decay ``|1> -> |0>`` at rate ``gamma(t) = gamma + gamma_amp sin(gamma_freq t)``.

    A callable ``gamma`` is used as given.  Constant rates give a semigroup.
    """
    if not callable(gamma):
        _check_rate(gamma)
        if gamma_amp and abs(gamma_amp) > gamma:
            raise NegativeRate(f"gamma(t) = {gamma} + {gamma_amp} sin(...) goes negative")
        rate = _rate_fn(gamma, gamma_amp, gamma_freq)
    else:
        rate = gamma
    spec = GKLSSpec(2, None, [(rate, SIGMA_MINUS)])
    regime = "inhom_semigroup" if spec.time_dependent else "semigroup"
    params = {"gamma": gamma if not callable(gamma) else float("nan"),
              "gamma_amp": gamma_amp, "gamma_freq": gamma_freq}

    def integral(t, s=0.0):
        if callable(gamma):
            from scipy.integrate import quad
            return quad(gamma, s, t, epsabs=1e-13, epsrel=1e-13)[0]
        val = gamma * (t - s)
        if gamma_amp and gamma_freq:
            val += gamma_amp / gamma_freq * (np.cos(gamma_freq * s) - np.cos(gamma_freq * t))
        return val

    def exact(t, s=0.0):
        # p1 -> p1 e^{-G}, coherences -> e^{-G/2}, p0 absorbs the rest
        g = integral(t, s)
        e = np.exp(-g)
        S = np.zeros((4, 4), dtype=complex)
        S[0, 0] = 1.0
        S[0, 3] = 1.0 - e
        S[3, 3] = e
        S[1, 1] = S[2, 2] = np.exp(-0.5 * g)
        return S

    desc = ModelDescriptor("amplitude_damping", regime, params, _gkls_jump_model(spec, "amplitude_damping"),
                           spec, exact)
    desc.notes["rate_integral"] = integral
    return desc


def model_dephasing_inhom(gamma: Union[float, Callable, None] = None, omega: float = 1.0, gamma0: float = 1.0,
                          gamma_amp: float = 0.5, gamma_freq: float = 2.0) -> ModelDescriptor:
    """Qubit ``H = omega sigma_z / 2`` with dephasing channel ``(gamma(t), sigma_z)``.

    Default ``gamma(t) = gamma0 + gamma_amp sin(gamma_freq t)``.  Coherences
    evolve as ``exp(-i omega (t - s) - 2 int_s^t gamma)``.
    """
    if gamma is None:
        if gamma0 < 0 or abs(gamma_amp) > gamma0:
            raise NegativeRate(f"gamma(t) = {gamma0} + {gamma_amp} sin(...) goes negative")
        rate = _rate_fn(gamma0, gamma_amp, gamma_freq)
        analytic = True
    else:
        rate = _check_rate(gamma)
        analytic = not callable(gamma)
        gamma0, gamma_amp = (float(gamma), 0.0) if analytic else (float("nan"), 0.0)
    H = 0.5 * omega * SIGMA_Z
    spec = GKLSSpec(2, H, [(rate, SIGMA_Z)])
    regime = "inhom_semigroup" if spec.time_dependent else "semigroup"

    def integral(t, s=0.0):
        if not analytic:
            from scipy.integrate import quad
            return quad(rate, s, t, epsabs=1e-13, epsrel=1e-13)[0]
        val = gamma0 * (t - s)
        if gamma_amp and gamma_freq:
            val += gamma_amp / gamma_freq * (np.cos(gamma_freq * s) - np.cos(gamma_freq * t))
        return val

    def exact(t, s=0.0):
        c = np.exp(-1j * omega * (t - s) - 2 * integral(t, s))
        # vec index of |0><1| is 0 + 1*2 = 2, of |1><0| is 1
        return np.diag([1.0, np.conj(c), c, 1.0]).astype(complex)

    params = {"gamma0": gamma0, "gamma_amp": gamma_amp, "gamma_freq": gamma_freq, "omega": omega}
    desc = ModelDescriptor("dephasing_inhom", regime, params, _gkls_jump_model(spec, "dephasing_inhom"), spec, exact)
    desc.notes["rate_integral"] = integral
    return desc


# ---- semi-Markov -------------------------------------------------------------

def waiting_density(waiting: str, kappa, t):
    t = np.asarray(t, dtype=float)
    if waiting == "exponential":
        return kappa * np.exp(-kappa * t)
    if waiting == "gamma2":
        return kappa ** 2 * t * np.exp(-kappa * t)
    raise InvalidConfig(f"unknown waiting-time law {waiting!r}")


def survival(waiting: str, kappa, t):
    t = np.asarray(t, dtype=float)
    if waiting == "exponential":
        return np.exp(-kappa * t)
    if waiting == "gamma2":
        return (1 + kappa * t) * np.exp(-kappa * t)
    raise InvalidConfig(f"unknown waiting-time law {waiting!r}")


def rate_kernel(waiting: str, kappa: float, t):
    """``(delta coefficient, regular part at t)`` of ``k`` with ``k * q = f``."""
    t = np.asarray(t, dtype=float)
    if waiting == "exponential":
        return kappa, np.zeros_like(t)
    if waiting == "gamma2":
        return 0.0, kappa ** 2 * np.exp(-2 * kappa * t)
    raise InvalidConfig(f"unknown waiting-time law {waiting!r}")


def solve_rate_kernel(f: np.ndarray, h: float):
    """``(c, r)`` with ``k_{t,s} = delta(t - s) c_t + r_{t,s}`` solving ``k ⊛ q = f``.

    ``f[i, j] = f(t_i, t_j)`` on ``i >= j``.  ``G = f + G ⊛ f`` is solved row by
    row with trapezoid weights; ``c_t = G_{t,t}`` and ``r = -d/ds G``.
    """
    N = f.shape[0]
    G, _ = _k.second_kind_rows(-f.astype(complex).reshape(N, N, 1, 1), h)
    G = G[:, :, 0, 0].real
    c = np.diag(G).copy()
    r = -np.tril(triangle_derivatives(G, h)[1])
    return c, r


def _check_channel(channel):
    if not verdict_cp(channel, 1e-10).ok or not verdict_trace(channel, "preserving", 1e-10).ok:
        raise ChannelNotCPTP("the jump channel must be completely positive and trace preserving")


def model_semi_markov(waiting: str = "gamma2", kappa: float = 1.0, channel=None,
                      inhomogeneous_rate: Callable[[float], float] | None = None,
                      kappa_quad: float | None = None) -> ModelDescriptor:
    """Semi-Markov jump model; ``channel`` defaults to the completely depolarizing qubit channel.

    ``inhomogeneous_rate`` (or ``kappa_quad``, meaning ``kappa + kappa_quad t0^2``)
    makes the waiting law depend on the time of the last jump.
    """
    if waiting not in ("exponential", "gamma2"):
        raise InvalidConfig(f"unknown waiting-time law {waiting!r}")
    if kappa <= 0:
        raise NegativeRate(f"kappa = {kappa} must be positive")
    E = depolarizing_channel(2) if channel is None else np.asarray(channel, dtype=complex)
    _check_channel(E)
    Dm = E.shape[0]
    I = identity_superop(int(round(np.sqrt(Dm))))
    params = {"kappa": float(kappa), "waiting": waiting}
    if kappa_quad is not None and inhomogeneous_rate is None and kappa_quad != 0:
        params["kappa_quad"] = float(kappa_quad)
        inhomogeneous_rate = lambda s: kappa + kappa_quad * s ** 2

    if inhomogeneous_rate is None:
        def build(grid: TimeGrid) -> JumpModel:
            t = grid.nodes - grid.t0
            q = survival(waiting, kappa, t)
            free = OneParamFamily(grid, q[:, None, None] * I[None])
            c, r = rate_kernel(waiting, kappa, t)
            reg_j = None if waiting == "exponential" else OneParamFamily(grid, r[:, None, None] * E[None])
            reg_z = None if waiting == "exponential" else OneParamFamily(grid, r[:, None, None] * I[None])
            dj = c * E if c else None
            dz = c * I if c else None
            jump = OneParamKernel(grid, dj, reg_j, D=Dm)
            z = OneParamKernel(grid, dz, reg_z, D=Dm)
            return JumpModel("homogeneous", grid, free, jump, z, name="semi_markov")

        regime = "homogeneous"
    else:
        def build(grid: TimeGrid) -> JumpModel:
            t = grid.nodes
            kap = np.array([inhomogeneous_rate(s) for s in t])
            if np.any(kap <= 0):
                raise NegativeRate("kappa(t0) must stay positive on the grid")
            tau = np.tril(t[:, None] - t[None, :])
            mask = np.tri(grid.N, dtype=bool)
            f = np.where(mask, waiting_density(waiting, kap[None, :], tau), 0.0)
            q = np.where(mask, survival(waiting, kap[None, :], tau), 0.0)
            c, r = solve_rate_kernel(f, grid.h)
            free = TwoParamFamily(grid, q[:, :, None, None] * I)
            jump = KernelFamily(grid, c[:, None, None] * E, TwoParamFamily(grid, r[:, :, None, None] * E))
            z = KernelFamily(grid, c[:, None, None] * I, TwoParamFamily(grid, r[:, :, None, None] * I))
            waived = bool(np.min(r[mask]) < 0 or np.min(c) < 0)
            return JumpModel("inhomogeneous", grid, free, jump, z, cp_waived=waived, name="semi_markov")

        regime = "inhomogeneous"

    exact = None
    if np.allclose(E @ E, E, atol=1e-12):
        # every history with at least one jump ends in E's range
        def exact(t, s=0.0):
            k = kappa if inhomogeneous_rate is None else inhomogeneous_rate(s)
            q = float(survival(waiting, k, t - s))
            return q * I + (1.0 - q) * E
    elif waiting == "exponential" and inhomogeneous_rate is None:
        def exact(t, s=0.0):
            return expm(kappa * (t - s) * (E - I))

    desc = ModelDescriptor("semi_markov", regime, params, build, exact=exact)
    desc.notes["channel"] = E
    desc.notes["kappa_fn"] = inhomogeneous_rate
    return desc


# ---- registry ----------------------------------------------------------------

def _amp(params):
    return model_amplitude_damping(float(params.get("gamma", 1.0)), float(params.get("gamma_amp", 0.0)),
                                   float(params.get("gamma_freq", 0.0)))


def _semi(params):
    ch = str(params.get("channel", "depolarizing"))
    if ch == "depolarizing":
        E = depolarizing_channel(2)
    elif ch == "identity":
        E = identity_superop(2)
    else:
        raise InvalidConfig(f"unknown channel {ch!r} (depolarizing | identity)")
    kq = float(params.get("kappa_quad", 0.0))
    return model_semi_markov(str(params.get("waiting", "gamma2")), float(params.get("kappa", 1.0)), E,
                             kappa_quad=kq if kq else None)


def _deph(params):
    return model_dephasing_inhom(None, float(params.get("omega", 1.0)), float(params.get("gamma0", 1.0)),
                                 float(params.get("gamma_amp", 0.5)), float(params.get("gamma_freq", 2.0)))


REGISTRY = {
    "amplitude_damping": (_amp, "qubit decay; gamma, gamma_amp, gamma_freq"),
    "semi_markov": (_semi, "semi-Markov jumps; waiting=exponential|gamma2, kappa, kappa_quad, channel"),
    "dephasing_inhom": (_deph, "qubit dephasing; gamma0, gamma_amp, gamma_freq, omega"),
}

PARAMETER_NAMES = {
    "amplitude_damping": ("gamma", "gamma_amp", "gamma_freq"),
    "semi_markov": ("waiting", "kappa", "kappa_quad", "channel"),
    "dephasing_inhom": ("gamma0", "gamma_amp", "gamma_freq", "omega"),
}


def get_model(name: str, params: Dict[str, object] | None = None) -> ModelDescriptor:
    if name not in REGISTRY:
        raise UnknownModel(f"unknown model {name!r}; known: {', '.join(sorted(REGISTRY))}")
    params = dict(params or {})
    unknown = set(params) - set(PARAMETER_NAMES[name])
    if unknown:
        raise InvalidConfig(f"unknown parameter(s) for {name}: {', '.join(sorted(unknown))}")
    return REGISTRY[name][0](params)


def list_models():
    return [(name, REGISTRY[name][1]) for name in sorted(REGISTRY)]
