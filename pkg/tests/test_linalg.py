import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parkernel.linalg import (
    NoConvergence,
    balance,
    OrderTooLarge,
    ShapeMismatch,
    TridiagonalSpec,
    build_tridiagonal,
    charpoly,
    chop,
    determinant,
    eig_qr,
    eigen_key,
    eigenset,
    hessenberg,
    mat_mul,
    match_distance,
    oracle_charpoly_eigs,
    toeplitz_tridiag_eigs,
    trace,
)


def do_loop_tridiagonal(ns, esi, t, p):
    """Row-by-row append then partition, exactly as the nested loops do."""
    vacuum = []
    for i in range(1, ns + 1):
        for j in range(1, ns + 1):
            a1 = esi if i == j else 0
            a2 = t if i < j and abs(i - j) == 1 else 0
            a3 = p if i > j and abs(i - j) == 1 else 0
            vacuum.append(a1 + a2 + a3)
    return [vacuum[k:k + ns] for k in range(0, len(vacuum), ns)]


def tri(n, diag, sup, sub):
    return build_tridiagonal(TridiagonalSpec(n, diag, sup, sub))


# -- construction -------------------------------------------------------------


def test_order_one():
    assert tri(1, 4.5, 1.0, 2.0).tolist() == [[4.5]]


@pytest.mark.parametrize(
    "sup, sub, expected",
    [
        (1.2, 2.1, [[0, 1.2, 0], [2.1, 0, 1.2], [0, 2.1, 0]]),
        (2.6, 1.8, [[0, 2.6, 0], [1.8, 0, 2.6], [0, 1.8, 0]]),
        (2.0, 3.0, [[0, 2, 0], [3, 0, 2], [0, 3, 0]]),
    ],
)
def test_default_parameter_sets(sup, sub, expected):
    assert tri(3, 0.0, sup, sub).tolist() == expected


def test_order_must_be_positive():
    with pytest.raises(ValueError):
        TridiagonalSpec(0)


@settings(max_examples=150, deadline=None)
@given(
    st.integers(1, 20),
    st.floats(-10, 10),
    st.floats(-10, 10),
    st.floats(-10, 10),
)
def test_matches_literal_do_loop(n, esi, t, p):
    assert tri(n, esi, t, p).tolist() == do_loop_tridiagonal(n, esi, t, p)


# -- product, trace, determinant ---------------------------------------------


def test_identity_product():
    a = np.random.default_rng(1).standard_normal((5, 5))
    assert np.array_equal(mat_mul(np.eye(5), a), a)


def test_hand_product():
    got = mat_mul([[0, 1.2], [2.1, 0]], [[0, 2.6], [1.8, 0]])
    assert got == pytest.approx(np.array([[1.2 * 1.8, 0], [0, 2.1 * 2.6]]))
    assert got[0, 0] == pytest.approx(2.16) and got[1, 1] == pytest.approx(5.46)


def test_product_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        mat_mul(np.ones((2, 3)), np.ones((2, 2)))


@pytest.mark.parametrize("n", [1, 2, 5])
def test_identity_trace_det(n):
    assert determinant(np.eye(n)) == 1.0
    assert trace(np.eye(n)) == n


def test_det_2x2():
    assert determinant([[0, 1.2], [2.1, 0]]) == pytest.approx(-2.52, rel=1e-15)


def test_det_zero_row():
    assert determinant([[1, 2, 3], [0, 0, 0], [4, 5, 6]]) == 0.0


def test_det_against_permutation_expansion():
    import itertools

    a = np.random.default_rng(2).standard_normal((5, 5))
    total = 0.0
    for perm in itertools.permutations(range(5)):
        inversions = sum(1 for i in range(5) for j in range(i + 1, 5) if perm[i] > perm[j])
        total += (-1) ** inversions * math.prod(a[i, perm[i]] for i in range(5))
    assert determinant(a) == pytest.approx(total, rel=1e-12)


def test_trace_needs_square():
    with pytest.raises(ShapeMismatch):
        trace(np.ones((2, 3)))


# -- Hessenberg ---------------------------------------------------------------


def test_tridiagonal_is_left_alone():
    t = tri(6, 0.0, 1.2, 2.1)
    h = hessenberg(t)
    assert np.array_equal(h, t)


@pytest.mark.parametrize("seed", range(5))
def test_hessenberg_structure_and_similarity(seed):
    rng = np.random.default_rng(seed)
    n = 7
    a = rng.standard_normal((n, n))
    h = hessenberg(a)
    below = np.tril(h, -2)
    assert np.all(np.abs(below) < 1e-12)
    assert abs(trace(h) - trace(a)) < 1e-10
    assert determinant(h) == pytest.approx(determinant(a), rel=1e-8)
    assert charpoly(h) == pytest.approx(charpoly(a), abs=1e-8)


# -- eigenvalues --------------------------------------------------------------


def test_identity_eigenvalues():
    assert eig_qr(np.eye(3)) == (1, 1, 1)


def test_first_default_matrix_analytic():
    e = eig_qr(tri(3, 0.0, 1.2, 2.1))
    r = 2 * math.sqrt(2.52) * math.cos(math.pi / 4)
    assert r == pytest.approx(2.244994432064365, abs=1e-12)
    expected = (complex(r), 0j, complex(-r))
    assert match_distance(e, expected) < 1e-12
    assert match_distance(e, oracle_charpoly_eigs(tri(3, 0.0, 1.2, 2.1))) < 1e-10


def test_complex_pair():
    # rotation-like block has eigenvalues 1 +- 2i
    e = eig_qr([[1.0, -2.0], [2.0, 1.0]])
    assert match_distance(e, (1 + 2j, 1 - 2j)) < 1e-14


def test_negative_product_tridiagonal_is_complex():
    e = eig_qr(tri(4, 0.5, 1.0, -2.0))
    assert match_distance(e, toeplitz_tridiag_eigs(4, 0.5, 1.0, -2.0)) < 1e-10
    assert any(abs(z.imag) > 0.1 for z in e)


def test_no_convergence_is_reported():
    a = np.random.default_rng(3).standard_normal((8, 8))
    with pytest.raises(NoConvergence):
        eig_qr(a, max_sweeps=1)


def test_zero_matrix():
    assert eig_qr(np.zeros((4, 4))) == (0, 0, 0, 0)


@pytest.mark.parametrize("seed", range(40))
def test_trace_and_det_identities(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 17))
    a = rng.standard_normal((n, n))
    e = eig_qr(a)
    assert len(e) == n
    assert abs(sum(e) - trace(a)) < 1e-9
    d = determinant(a)
    assert abs(np.prod(e) - d) <= 1e-6 * abs(d)


@pytest.mark.parametrize("seed", range(20))
def test_conjugate_closure(seed):
    a = np.random.default_rng(100 + seed).standard_normal((9, 9))
    e = eig_qr(a)
    assert match_distance(e, [z.conjugate() for z in e]) < 1e-9


@pytest.mark.parametrize("seed", range(30))
def test_agrees_with_charpoly_oracle(seed):
    rng = np.random.default_rng(200 + seed)
    n = int(rng.integers(1, 9))
    a = rng.standard_normal((n, n))
    assert match_distance(eig_qr(a), oracle_charpoly_eigs(a)) < 1e-7


# -- eigenset helpers ---------------------------------------------------------


def test_key_order():
    e = eigenset([1j, -2, 2, 1 - 1j, 1 + 1j, 0])
    assert e == (2, -2, 1 + 1j, 1 - 1j, 1j, 0)
    assert sorted(e, key=eigen_key) == list(e)


def test_chop_small_parts():
    assert chop([1e-12, 1.0]) == (1, 0)
    assert chop([complex(2.0, 3e-11)]) == (2,)


def test_chop_keeps_values_above_eps():
    assert chop([1e-9], eps=1e-10) == (1e-9,)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=1e3, allow_nan=False), max_size=8))
def test_chop_idempotent(zs):
    once = chop(zs)
    assert chop(once) == once


# -- oracles ------------------------------------------------------------------


def test_oracle_order_one():
    assert oracle_charpoly_eigs([[3.25]]) == (3.25,)


def test_oracle_refuses_large_order():
    with pytest.raises(OrderTooLarge):
        oracle_charpoly_eigs(np.eye(17))


def test_charpoly_of_known_matrix():
    # det(lambda I - [[2,1],[1,2]]) = lambda^2 - 4 lambda + 3
    assert charpoly([[2.0, 1.0], [1.0, 2.0]]) == pytest.approx([1, -4, 3])


def test_toeplitz_formula_values():
    e = toeplitz_tridiag_eigs(3, 0.0, 1.2, 2.1)
    assert match_distance(e, (2.244994432064365, 0, -2.244994432064365)) < 1e-12


def test_toeplitz_degenerate_product():
    assert toeplitz_tridiag_eigs(2, 5.0, 0.0, 7.0) == (5, 5)


@pytest.mark.parametrize("n", range(1, 9))
@pytest.mark.parametrize("diag, sup, sub", [(0, 1.2, 2.1), (0, 2.6, 1.8), (0, 2, 3), (0.5, -1, 2), (-1, 0.3, 0.7)])
def test_toeplitz_matches_charpoly(n, diag, sup, sub):
    m = tri(n, diag, sup, sub)
    assert match_distance(toeplitz_tridiag_eigs(n, diag, sup, sub), oracle_charpoly_eigs(m)) < 1e-9


@pytest.mark.parametrize("ns", [2, 4, 6])
def test_triple_oracle_on_default_matrices(ns):
    for sup, sub in [(1.2, 2.1), (2.6, 1.8), (2.0, 3.0)]:
        m = tri(ns, 0.0, sup, sub)
        qr = eig_qr(m)
        assert match_distance(qr, oracle_charpoly_eigs(m)) < 1e-7
        assert match_distance(qr, toeplitz_tridiag_eigs(ns, 0.0, sup, sub)) < 1e-7


# -- preconditioning ----------------------------------------------------------


def test_balance_keeps_spectrum_exactly_scaled():
    rng = np.random.default_rng(11)
    a = rng.standard_normal((6, 6)) * np.logspace(-6, 6, 6)
    b = balance(a)
    # powers of two only: every entry is the original times an exact power of two
    ratio = b[a != 0] / a[a != 0]
    assert np.all(np.frexp(ratio)[0] == 0.5)
    assert trace(b) == trace(a)
    assert match_distance(eig_qr(b), eig_qr(a)) < 1e-9


def test_graded_tridiagonal_is_accurate():
    n, b, c = 32, 0.05, 8.0
    got = eig_qr(build_tridiagonal(TridiagonalSpec(n, 1.0, b, c)))
    assert match_distance(got, toeplitz_tridiag_eigs(n, 1.0, b, c)) < 1e-12


def test_mixed_sign_tridiagonal_not_symmetrized():
    # sup * sub < 0 gives a purely imaginary spectrum
    n = 9
    got = eig_qr(build_tridiagonal(TridiagonalSpec(n, 0.0, 1.5, -0.7)))
    assert match_distance(got, toeplitz_tridiag_eigs(n, 0.0, 1.5, -0.7)) < 1e-9
    assert any(z.imag != 0 for z in got)


def test_one_sided_tridiagonal_not_symmetrized():
    # a Jordan-like block: sub is zero, sup is not
    a = build_tridiagonal(TridiagonalSpec(5, 2.0, 1.0, 0.0))
    assert match_distance(eig_qr(a), [2.0] * 5) < 1e-9
