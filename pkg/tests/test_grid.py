import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from qjumpmaps import (KernelFamily, OneParamFamily, OneParamKernel, TimeGrid, TwoParamFamily, associativity_defect,
                       convolve_hom, convolve_inhom, convolve_kernel, homogeneity_defect, lift)
from qjumpmaps.errors import GridMismatch, IncompleteFamily, InvalidGrid
from qjumpmaps.grid import compose_left, node_derivative, triangle_derivatives

from oracles import SM, gkls_matrix, trapezoid_hom, trapezoid_inhom

I4 = np.eye(4, dtype=complex)


def rand_fam(rng, grid, D=2, cols=None):
    vals = rng.normal(size=(grid.N, grid.N, D, D)) + 1j * rng.normal(size=(grid.N, grid.N, D, D))
    vals *= np.tri(grid.N)[:, :, None, None]
    F = TwoParamFamily(grid, vals)
    return F if cols is None else F.restrict(cols)


def poly_family(grid, coef):
    """Entries polynomial of total degree 2 in (t, s), scaled to unit sup-norm."""
    F = TwoParamFamily.from_function(
        grid, lambda t, s: sum(coef[a][b] * t ** a * s ** b for a in range(3) for b in range(3 - a)))
    return F * (1.0 / F.sup_norm())


def test_grid_validation():
    with pytest.raises(InvalidGrid):
        TimeGrid(0, 0.0, 4)
    with pytest.raises(InvalidGrid):
        TimeGrid(0, 0.1, -1)
    with pytest.raises(InvalidGrid):
        TimeGrid.span(1, 1, 4)
    g = TimeGrid.span(0, 2, 8)
    assert g.N == 9 and g.h == 0.25 and g.T == 2.0
    assert g.index(0.5) == 2
    with pytest.raises(InvalidGrid):
        g.index(0.3)


def test_node_derivative_orders():
    errs = []
    for n in (16, 32, 64):
        g = TimeGrid.span(0, 1, n)
        d = node_derivative(np.sin(3 * g.nodes), g.h)
        errs.append(np.max(np.abs(d - 3 * np.cos(3 * g.nodes))))
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5
    # cubic polynomials are differentiated exactly at the ends
    g = TimeGrid.span(0, 1, 8)
    t = g.nodes
    d = node_derivative(t ** 3, g.h)
    assert np.isclose(d[0], 0, atol=1e-12) and np.isclose(d[-1], 3, atol=1e-12)
    assert np.array_equal(node_derivative(np.ones(1), 0.1), np.zeros(1))
    # five-point stencils are exact for quartics
    g = TimeGrid.span(0, 1, 9)
    t = g.nodes
    assert np.allclose(node_derivative(t ** 4 - t, g.h, order=4), 4 * t ** 3 - 1, atol=1e-11)


def test_triangle_derivatives_exact_for_quadratics():
    g = TimeGrid.span(0, 1, 10)
    t = g.nodes
    T, S = np.meshgrid(t, t, indexing="ij")
    V = (T ** 2 + 3 * T * S - S ** 2) * np.tri(g.N)
    dt, ds = triangle_derivatives(V, g.h)
    m = np.tri(g.N, dtype=bool)
    assert np.allclose(dt[m], (2 * T + 3 * S)[m], atol=1e-11)
    assert np.allclose(ds[m], (3 * T - 2 * S)[m], atol=1e-11)
    dt, ds = triangle_derivatives(V * T ** 2, g.h, order=4)
    assert np.allclose(dt[m], (4 * T ** 3 + 9 * T ** 2 * S - 2 * T * S ** 2)[m], atol=1e-10)
    assert np.allclose(ds[m], (3 * T ** 3 - 2 * S * T ** 2)[m], atol=1e-10)


def test_convolve_inhom_matches_nested_loops():
    rng = np.random.default_rng(0)
    g = TimeGrid.span(0, 1, 7)
    A, B = rand_fam(rng, g), rand_fam(rng, g)
    out = convolve_inhom(A, B)
    assert np.allclose(out.values, trapezoid_inhom(A.values, B.values, g.h), atol=1e-12)
    assert not out.diagonal().any()
    # column subsets agree with the full result on their columns
    sub = convolve_inhom(A, B.restrict([0, 3, 7]))
    assert np.array_equal(sub.values, out.values[:, [0, 3, 7]])


def test_convolve_hom_matches_nested_loops():
    rng = np.random.default_rng(1)
    g = TimeGrid.span(0, 1, 9)
    a = OneParamFamily(g, rng.normal(size=(g.N, 3, 3)))
    b = OneParamFamily(g, rng.normal(size=(g.N, 3, 3)))
    assert np.allclose(convolve_hom(a, b).values, trapezoid_hom(a.values, b.values, g.h), atol=1e-12)


def test_convolution_trivial_cases():
    g = TimeGrid.span(0, 1, 64)
    one = TwoParamFamily.constant(g, I4)
    zero = TwoParamFamily.zeros(g, 4)
    assert not convolve_inhom(zero, one).values.any()
    t = g.nodes
    out = convolve_inhom(one, one)
    for j in (0, 10, 40):
        assert np.allclose(out.column(j), (t[j:] - t[j])[:, None, None] * I4, atol=1e-12)
    a = OneParamFamily.constant(g, I4)
    assert np.allclose(convolve_hom(a, a).values, t[:, None, None] * I4, atol=1e-12)


def test_linear_integrand_within_trapezoid_budget():
    g = TimeGrid.span(0, 1, 32)
    A = TwoParamFamily.from_function(g, lambda t, s: (t - s) * I4)
    B = TwoParamFamily.constant(g, I4)
    out = convolve_inhom(A, B)
    t = g.nodes
    for j in (0, 5, 20):
        L = t[j:] - t[j]
        err = np.abs(out.column(j)[:, 0, 0] - L ** 2 / 2)
        assert np.all(err <= g.h ** 2 * L / 12 + 1e-14)


def test_lifted_inhom_equals_hom_bitwise():
    rng = np.random.default_rng(2)
    g = TimeGrid.span(0, 1, 40)
    a = OneParamFamily(g, rng.normal(size=(g.N, 4, 4)) + 1j * rng.normal(size=(g.N, 4, 4)))
    b = OneParamFamily(g, rng.normal(size=(g.N, 4, 4)))
    lifted = convolve_inhom(lift(a), lift(b))
    assert np.array_equal(lifted.values, lift(convolve_hom(a, b)).values)


def test_convolve_kernel():
    g = TimeGrid.span(0, 1, 128)
    L = gkls_matrix(np.zeros((2, 2)), [(1.0, SM)])
    B = TwoParamFamily.from_function(g, lambda t, s: expm((t - s) * L))
    K = KernelFamily(g, np.broadcast_to(L, (g.N, 4, 4)).copy())
    out = convolve_kernel(K, B)
    ref = TwoParamFamily.from_function(g, lambda t, s: L @ expm((t - s) * L))
    assert np.max(np.abs(out.values - ref.values)) < 1e-12
    rng = np.random.default_rng(3)
    R = rand_fam(rng, TimeGrid.span(0, 1, 6), D=4)
    B2 = rand_fam(rng, R.grid, D=4)
    assert np.array_equal(convolve_kernel(KernelFamily(R.grid, None, R), B2).values, convolve_inhom(R, B2).values)
    zero = KernelFamily(R.grid, np.zeros((R.grid.N, 4, 4)), TwoParamFamily.zeros(R.grid, 4))
    assert not convolve_kernel(zero, B2).values.any()


def test_grid_mismatch_and_incomplete():
    a = TwoParamFamily.zeros(TimeGrid.span(0, 1, 4), 4)
    b = TwoParamFamily.zeros(TimeGrid.span(0, 1, 5), 4)
    with pytest.raises(GridMismatch):
        convolve_inhom(a, b)
    with pytest.raises(IncompleteFamily):
        convolve_inhom(a.restrict([0, 2]), a)
    with pytest.raises(IncompleteFamily):
        a.restrict([0, 2]).column(1)


def test_associativity_exact_cases():
    g = TimeGrid.span(0, 1, 64)
    one = TwoParamFamily.constant(g, I4)
    assert associativity_defect(one, one, one) <= 1e-10
    rng = np.random.default_rng(4)
    A = rand_fam(rng, TimeGrid.span(0, 1, 8))
    assert associativity_defect(A, A, TwoParamFamily.zeros(A.grid, 2)) == 0.0


def test_associativity_second_order():
    rng = np.random.default_rng(0)
    coefs = [rng.uniform(-1, 1, size=(3, 3, 4, 4)) + 1j * rng.uniform(-1, 1, size=(3, 3, 4, 4)) for _ in range(3)]
    d = []
    for n in (32, 64):
        g = TimeGrid.span(0, 1, n)
        d.append(associativity_defect(*[poly_family(g, c) for c in coefs]))
    assert 3.2 <= d[0] / d[1] <= 4.8


def test_homogeneity_defect():
    g = TimeGrid.span(0, 1, 16)
    L = gkls_matrix(np.zeros((2, 2)), [(1.0, SM)])
    F = TwoParamFamily.from_function(g, lambda t, s: expm((t - s) * L))
    assert homogeneity_defect(F) <= 1e-13
    G = TwoParamFamily.from_function(g, lambda t, s: (1 + s) * I4)
    assert np.isclose(homogeneity_defect(G), g.T)
    assert homogeneity_defect(TwoParamFamily.zeros(TimeGrid(0, 0.1, 0), 4)) == 0.0


def test_kernel_subtraction():
    g = TimeGrid.span(0, 1, 4)
    a = OneParamKernel(g, I4, None)
    b = OneParamKernel(g, None, OneParamFamily.constant(g, I4))
    k = a - b
    assert np.array_equal(k.delta, I4) and np.array_equal(k.regular.values, -b.regular.values)
    assert not (a - a).delta.any()


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_bilinearity(seed):
    rng = np.random.default_rng(seed)
    g = TimeGrid.span(0, 1, 6)
    A, A2, B, B2 = (rand_fam(rng, g) for _ in range(4))
    a, b = rng.normal(size=2)
    lhs = convolve_inhom(A * a + A2 * b, B)
    rhs = convolve_inhom(A, B) * a + convolve_inhom(A2, B) * b
    assert np.allclose(lhs.values, rhs.values, atol=1e-12)
    lhs = convolve_inhom(A, B * a + B2 * b)
    rhs = convolve_inhom(A, B) * a + convolve_inhom(A, B2) * b
    assert np.allclose(lhs.values, rhs.values, atol=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_delta_kernel_is_nodewise(seed):
    rng = np.random.default_rng(seed)
    g = TimeGrid.span(0, 1, 5)
    Adelta = rng.normal(size=(g.N, 2, 2))
    B = rand_fam(rng, g)
    out = convolve_kernel(KernelFamily(g, Adelta), B)
    assert np.array_equal(out.values, compose_left(Adelta, B).values)
    for j in range(g.N):
        for i in range(j, g.N):
            assert np.allclose(out[i, j], Adelta[i] @ B[i, j], rtol=0, atol=1e-14)
