import warnings

import numpy as np
import pytest
from scipy.linalg import expm

from qjumpmaps import (GKLSSpec, TimeGrid, TwoParamFamily, composition_defect, extract_tcl, integrate_tcl, lift,
                       propagator, propagator_t0_defect, roundtrip_defect, sample_family, series, tcl_t0_defect,
                       time_ordered_rk4)
from qjumpmaps.errors import SingularMap, SingularMapWarning
from qjumpmaps.models import model_amplitude_damping, model_semi_markov
from qjumpmaps.tcl import TCLFamily

from oracles import SM, SZ, gkls_matrix

I4 = np.eye(4, dtype=complex)
L0 = gkls_matrix(0.3 * SZ, [(1.0, SM), (0.4, SZ)])


def sup(x):
    return np.max(np.linalg.norm(x, 2, axis=(-2, -1)), initial=0.0)


def exp_family(g, L=L0):
    return TwoParamFamily.from_function(g, lambda t, s: expm((t - s) * L))


def test_extract_exponential_family():
    errs = []
    for n in (32, 64):
        g = TimeGrid.span(0, 1, n)
        tcl = extract_tcl(exp_family(g), 5)
        assert tcl.complete and np.all(tcl.condition_log[5:] >= 1)
        assert np.all(np.isnan(tcl.condition_log[:5])) and not tcl.valid[:5].any()
        errs.append(sup(tcl.values[5:] - L0))
    assert errs[1] <= 10 * (1 / 64) ** 2
    assert 3.2 <= errs[0] / errs[1] <= 4.8


def test_extract_identity_is_zero():
    g = TimeGrid.span(0, 1, 16)
    tcl = extract_tcl(TwoParamFamily.constant(g, I4))
    assert not tcl.values.any()


def test_inhomogeneous_semigroup_is_t0_independent():
    g = TimeGrid.span(0, 1, 128)
    spec = GKLSSpec(2, 0.5 * SZ, [(lambda t: 1 + 0.5 * np.sin(2 * t), SM)])
    F = time_ordered_rk4(spec, g)
    assert tcl_t0_defect(F, [0, 16, 64]) <= 10 * g.h ** 2
    # and the extracted generator is the sampled one
    L, _, _ = sample_family(spec, g)
    assert sup(extract_tcl(F, 0).values - L) <= 10 * g.h ** 2


def test_integrate_zero_tcl():
    g = TimeGrid.span(0, 1, 10)
    z = TCLFamily(g, 3, np.zeros((g.N, 4, 4), complex), np.ones(g.N, bool), np.ones(g.N))
    col = integrate_tcl(z).column(3)
    assert np.array_equal(col, np.broadcast_to(I4, col.shape))


def test_roundtrip_amplitude_damping():
    g = TimeGrid.span(0, 2, 1024)
    F = lift(series(model_amplitude_damping(1.0).jump_model(g)).total)
    assert roundtrip_defect(F, 0) <= 5e-5
    assert roundtrip_defect(F, 512) <= 5e-5


def test_roundtrip_semi_markov():
    g = TimeGrid.span(0, 1, 256)
    m = model_semi_markov("gamma2", 1.0).jump_model(g)
    F = lift(series(m).total)
    assert roundtrip_defect(F, 0) <= 10 * g.h ** 2


def test_propagator_basics():
    g = TimeGrid.span(0, 1, 32)
    F = exp_family(g)
    assert np.allclose(propagator(F, 7, 7, 2), I4, atol=1e-13)
    # semigroup: V_{i,j} from any t0 is the family itself
    for t0 in (0, 3):
        assert sup(propagator(F, 20, 9, t0) - F[20, 9]) <= 1e-10
    with pytest.raises(IndexError):
        propagator(F, 3, 5)


def test_propagator_chain_is_exact():
    g = TimeGrid.span(0, 1, 64)
    F = lift(series(model_semi_markov("gamma2", 1.0).jump_model(g)).total)
    V = lambda i, j: propagator(F, i, j, 4)
    assert sup(V(60, 30) @ V(30, 10) - V(60, 10)) <= 1e-10


def test_composition_defect_cases():
    g = TimeGrid.span(0, 1, 32)
    assert composition_defect(exp_family(g)) <= 1e-10
    assert composition_defect(TwoParamFamily.constant(g, I4)) == 0.0
    g = TimeGrid.span(0, 1, 256)
    F = lift(series(model_semi_markov("gamma2", 1.0).jump_model(g)).total)
    assert composition_defect(F) > 10 * g.h ** 2
    assert propagator_t0_defect(F, [0, 64, 128]) > 10 * g.h ** 2


def test_singular_maps():
    g = TimeGrid.span(0, 1, 8)
    vals = np.broadcast_to(I4, (g.N, g.N, 4, 4)).copy() * np.tri(g.N)[:, :, None, None]
    vals[5:, 0] = np.diag([1.0, 1.0, 1.0, 0.0])  # rank deficient from node 5 on
    F = TwoParamFamily(g, vals)
    with pytest.raises(SingularMap) as info:
        extract_tcl(F, 0, strict=True)
    part = info.value.partial
    assert part.first_invalid == 5 and part.valid[:5].all()
    with pytest.warns(SingularMapWarning):
        tcl = extract_tcl(F, 0)
    assert np.isnan(tcl.values[5:]).all()
    col = integrate_tcl(tcl).column(0)
    assert np.isnan(col[5:]).all() and np.isfinite(col[:5]).all()
    assert np.array_equal(col[0], I4)
    with pytest.raises(SingularMap):
        propagator(F, 6, 5)
    with pytest.raises(ValueError):
        extract_tcl(F, 0, cond_max=1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert np.isfinite(roundtrip_defect(F, 0))
