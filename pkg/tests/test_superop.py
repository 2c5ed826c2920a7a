import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from qjumpmaps import superop as so
from qjumpmaps.errors import DimensionMismatch, NegativeWeight, NonHermitianChoi

from oracles import SM, SZ, gkls_matrix, kraus_apply, matrix_of, unit

PLUS = np.array([[0.5, 0.5], [0.5, 0.5]], dtype=complex)


def rand_op(rng, d):
    return rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))


def test_vec_convention():
    rng = np.random.default_rng(1)
    A, X, B = (rand_op(rng, 3) for _ in range(3))
    assert np.allclose(so.vec(A @ X @ B), np.kron(B.T, A) @ so.vec(X), atol=1e-12)
    assert np.allclose(so.unvec(so.vec(X)), X)
    # E_rc sits at r + c d
    assert so.vec(unit(3, 2, 1))[2 + 1 * 3] == 1


def test_apply_identity_and_flip():
    rho = PLUS
    assert np.allclose(so.apply(so.identity_superop(2), rho), rho)
    out = so.apply(so.unitary_superop(so.SIGMA_X), unit(2, 0, 0))
    assert np.allclose(out, unit(2, 1, 1))


def test_apply_kraus_example():
    terms = [(0.5, np.eye(2)), (0.5, SZ)]
    out = so.apply(so.kraus_to_superop(terms), PLUS)
    assert np.allclose(out, 0.5 * np.eye(2), atol=1e-12)
    assert np.allclose(out, kraus_apply(terms, PLUS), atol=1e-12)


def test_apply_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        so.apply(so.identity_superop(2), np.eye(3))


def test_kraus_trivial():
    assert np.array_equal(so.kraus_to_superop([(1, np.eye(2))]), so.identity_superop(2))
    assert np.array_equal(so.kraus_to_superop([], d=2), np.zeros((4, 4)))


def test_kraus_sigma_minus_single_entry():
    g = 0.7
    S = so.kraus_to_superop([(g, SM)])
    expected = np.zeros((4, 4), dtype=complex)
    expected[0, 3] = g  # vec index of |1><1| is 3, of |0><0| is 0
    assert np.allclose(S, expected)
    assert np.allclose(S, matrix_of(lambda X: g * SM @ X @ SM.conj().T, 2))


def test_kraus_errors():
    with pytest.raises(NegativeWeight):
        so.kraus_to_superop([(-0.1, np.eye(2))])
    with pytest.raises(DimensionMismatch):
        so.kraus_to_superop([(1, np.eye(2)), (1, np.eye(3))])


def test_choi_identity():
    C = so.choi(so.identity_superop(3))
    w = np.linalg.eigvalsh(C)
    assert np.allclose(w[-1], 3) and np.allclose(w[:-1], 0)
    omega = so.vec(np.eye(3))
    # |Omega> = sum_i |ii> is the same vector in either stacking
    assert np.allclose(C, np.outer(omega, omega))


def test_choi_transpose_is_swap():
    C = so.choi(so.transpose_superop(2))
    swap = np.zeros((4, 4))
    for a in range(2):
        for b in range(2):
            swap[a * 2 + b, b * 2 + a] = 1
    assert np.allclose(C, swap)
    assert np.allclose(np.linalg.eigvalsh(C), [-1, 1, 1, 1])


def test_choi_of_decay_channel():
    g = 0.3
    C = so.choi(so.kraus_to_superop([(g, SM)]))
    assert np.min(np.linalg.eigvalsh(C)) >= -1e-14
    assert np.isclose(np.trace(C).real, g)


def test_verdict_cp():
    v = so.verdict_cp(so.identity_superop(2), 1e-10)
    assert v.ok and abs(v.min_eigenvalue) < 1e-12
    v = so.verdict_cp(so.transpose_superop(2), 1e-10)
    assert not v.ok and abs(v.min_eigenvalue + 1) < 1e-10
    L = gkls_matrix(np.zeros((2, 2)), [(1.0, SM)])
    v = so.verdict_cp(expm(0.3 * L), 1e-10)
    assert v.ok and v.min_eigenvalue >= -1e-10


def test_verdict_trace():
    assert so.verdict_trace(so.identity_superop(2), "preserving").defect == 0
    rng = np.random.default_rng(3)
    H = rand_op(rng, 3)
    H = H + H.conj().T
    chans = [(0.4, rand_op(rng, 3)), (1.1, rand_op(rng, 3))]
    L = gkls_matrix(H, chans)
    v = so.verdict_trace(L, "annihilating", 1e-10)
    assert v.ok and v.defect <= 1e-12
    # Z alone is not trace annihilating; its defect is the jump term's trace
    C = 1j * H + 0.5 * sum(g * K.conj().T @ K for g, K in chans)
    Z = matrix_of(lambda X: C @ X + X @ C.conj().T, 3)
    v = so.verdict_trace(Z, "annihilating", 1e-10)
    J = sum(g * K.conj().T @ K for g, K in chans)
    expected = max(abs(np.trace(J @ unit(3, r, c))) for r in range(3) for c in range(3))
    assert not v.ok and np.isclose(v.defect, expected)


def test_hermitian_defect_reported_then_rejected():
    S = so.identity_superop(2).copy()
    S[0, 1] = 1e-9  # breaks Hermiticity preservation slightly
    v = so.verdict_cp(S, 1e-10)
    assert 0 < v.hermitian_defect <= 1e-8
    S[0, 1] = 1e-3
    with pytest.raises(NonHermitianChoi):
        so.verdict_cp(S, 1e-10)


def test_max_trace_on_states():
    E = so.depolarizing_channel(2)
    assert np.isclose(so.max_trace_on_states(E), 1.0)
    S = so.kraus_to_superop([(1.0, np.diag([1.0, 0.5]))])
    assert np.isclose(so.max_trace_on_states(S), 1.0)
    assert np.isclose(so.max_trace_on_states(0.5 * S), 0.5)


def test_is_density():
    assert so.is_density(PLUS)
    assert not so.is_density(np.diag([1.5, -0.5]))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-2, 2), st.floats(-2, 2))
def test_choi_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    S, T = rand_op(rng, 4), rand_op(rng, 4)
    lhs = so.choi(a * S + b * T)
    assert np.allclose(lhs, a * so.choi(S) + b * so.choi(T), atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 4))
def test_kraus_maps_are_cp_and_match_direct_sum(seed, k):
    rng = np.random.default_rng(seed)
    terms = [(float(rng.uniform(0, 2)), rand_op(rng, 2)) for _ in range(k)]
    S = so.kraus_to_superop(terms)
    assert so.verdict_cp(S, 1e-10).ok
    X = rand_op(rng, 2)
    assert np.allclose(so.apply(S, X), kraus_apply(terms, X), atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_apply_linear_and_composition(seed):
    rng = np.random.default_rng(seed)
    S, T = rand_op(rng, 4), rand_op(rng, 4)
    X, Y = rand_op(rng, 2), rand_op(rng, 2)
    a, b = rng.normal(size=2)
    assert np.allclose(so.apply(S, a * X + b * Y), a * so.apply(S, X) + b * so.apply(S, Y), atol=1e-12)
    for r in range(2):
        for c in range(2):
            E = unit(2, r, c)
            assert np.allclose(so.apply(S @ T, E), so.apply(S, so.apply(T, E)), atol=1e-12)
