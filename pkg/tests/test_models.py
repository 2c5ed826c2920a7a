import numpy as np
import pytest

from qjumpmaps import TimeGrid, composition_defect, lift, series, transpose_superop
from qjumpmaps.errors import ChannelNotCPTP, InvalidConfig, NegativeRate, UnknownModel
from qjumpmaps.models import (get_model, list_models, model_amplitude_damping, model_dephasing_inhom, model_semi_markov,
                              survival)
from qjumpmaps.superop import identity_superop, min_choi_eigenvalue, trace_defect

from oracles import rate_integral

I4 = np.eye(4, dtype=complex)
EXCITED = np.array([0, 0, 0, 1.0])  # vec |1><1|
COHERENCE = np.array([0, 0, 1.0, 0])  # vec |0><1|


def test_amplitude_damping_population():
    m = model_amplitude_damping(1.0)
    assert m.regime == "semigroup"
    assert abs((m.exact(1.0) @ EXCITED)[3].real - 0.367879) <= 1e-6
    g = TimeGrid.span(0, 1, 256)
    tot = series(m.jump_model(g)).total
    assert abs((tot.values[g.n] @ EXCITED)[3].real - 0.367879) <= 1e-4


def test_zero_rate_is_identity():
    m = model_amplitude_damping(0.0)
    g = TimeGrid.span(0, 1, 16)
    assert np.allclose(series(m.jump_model(g)).total.values, I4)
    assert np.allclose(m.exact(0.7), I4)


def test_time_dependent_damping():
    m = model_amplitude_damping(1.0, 0.5, 2.0)
    assert m.regime == "inhom_semigroup"
    G = m.notes["rate_integral"](1.0)
    assert abs(G - 1.354037) <= 1e-6
    assert abs(G - rate_integral(lambda t: 1 + 0.5 * np.sin(2 * t), 0, 1)) <= 1e-10
    # exp(-1.354037) = 0.258196
    assert abs(np.exp(-G) - 0.2581959) <= 1e-6
    g = TimeGrid.span(0, 1, 128)
    tot = series(m.jump_model(g), columns=[0]).total
    assert abs((tot[g.n, 0] @ EXCITED)[3].real - 0.2581959) <= 1e-4


def test_semi_markov_survival_and_structure():
    assert abs(survival("gamma2", 1.0, 1.0) - 0.735759) <= 1e-6
    m = model_semi_markov("gamma2", 1.0)
    E = m.notes["channel"]
    q = 2 * np.exp(-1)
    assert np.allclose(m.exact(1.0), q * I4 + (1 - q) * E, atol=1e-14)
    g = TimeGrid.span(0, 1, 256)
    tot = series(m.jump_model(g)).total
    assert np.max(np.abs(tot.values[g.n] - m.exact(1.0))) <= 10 * g.h ** 2


def test_identity_channel_is_invisible():
    g = TimeGrid.span(0, 1, 64)
    m = model_semi_markov("gamma2", 1.0, identity_superop(2))
    assert np.allclose(m.exact(0.6), I4)
    assert np.max(np.abs(series(m.jump_model(g)).total.values - I4)) <= 10 * g.h ** 2


def test_dephasing_closed_forms():
    m = model_dephasing_inhom(0.0, omega=0.0)
    assert np.allclose(m.exact(1.3), I4)
    m = model_dephasing_inhom(1.0, omega=0.0)
    assert abs(abs(m.exact(0.5) @ COHERENCE)[2] - np.exp(-1)) <= 1e-12
    m = model_dephasing_inhom(lambda t: t, omega=1.0)
    c = (m.exact(1.0) @ COHERENCE)[2]
    assert abs(abs(c) - np.exp(-1)) <= 1e-10
    assert abs(c / abs(c) - np.exp(-1j)) <= 1e-10
    g = TimeGrid.span(0, 1, 128)
    tot = series(m.jump_model(g), columns=[0]).total
    assert abs((tot[g.n, 0] @ COHERENCE)[2] - c) <= 1e-4


def test_errors():
    with pytest.raises(NegativeRate):
        model_amplitude_damping(-1.0)
    with pytest.raises(NegativeRate):
        model_amplitude_damping(1.0, 2.0, 1.0)
    with pytest.raises(NegativeRate):
        model_dephasing_inhom(gamma0=0.2, gamma_amp=0.5)
    with pytest.raises(NegativeRate):
        model_semi_markov("gamma2", 0.0)
    with pytest.raises(ChannelNotCPTP):
        model_semi_markov("gamma2", 1.0, transpose_superop(2))
    with pytest.raises(ChannelNotCPTP):
        model_semi_markov("gamma2", 1.0, 0.5 * I4)
    with pytest.raises(InvalidConfig):
        model_semi_markov("weibull", 1.0)
    with pytest.raises(UnknownModel):
        get_model("spin_boson")
    with pytest.raises(InvalidConfig):
        get_model("amplitude_damping", {"kappa": 1})
    with pytest.raises(InvalidConfig):
        get_model("semi_markov", {"channel": "dephasing"})


def test_registry():
    names = [n for n, _ in list_models()]
    assert names == ["amplitude_damping", "dephasing_inhom", "semi_markov"]
    m = get_model("semi_markov", {"waiting": "exponential", "kappa": "2", "kappa_quad": "0.1"})
    assert m.regime == "inhomogeneous" and m.parameters["kappa"] == 2.0


def test_exponential_waiting_composes():
    g = TimeGrid.span(0, 1, 128)
    F = lift(series(model_semi_markov("exponential", 1.0).jump_model(g)).total)
    assert composition_defect(F) <= 10 * g.h ** 2


@pytest.mark.parametrize("name,params", [
    ("amplitude_damping", {}), ("amplitude_damping", {"gamma_amp": 0.5, "gamma_freq": 2}),
    ("dephasing_inhom", {}), ("semi_markov", {}), ("semi_markov", {"waiting": "exponential"}),
    ("semi_markov", {"kappa_quad": 0.1})])
def test_every_model_is_cptp(name, params):
    g = TimeGrid.span(0, 1, 64)
    tot = series(get_model(name, params).jump_model(g)).total
    S = lift(tot).entries() if tot.values.ndim == 3 else tot.entries()
    assert np.min(min_choi_eigenvalue(S)) >= -1e-8 - 10 * g.h ** 2
    assert np.max(trace_defect(S)) <= 1e-8 + 10 * g.h ** 2
