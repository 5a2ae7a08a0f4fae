from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from unifact.factor import (DomainError, ElementaryFactor, LastRowMismatch, PolyMatrix2,
                            canonical, cohn_matrix, factor_constant, factor_sl2_poly,
                            factors_to_chain, peel_last_row, preimage_last_row, product_matrix,
                            product_rows, verify_factorization, whitehead_diag)
from unifact.polyring import ExactComplex, Poly, VarId
from unifact.unipotent import DIRECT, FactorChain, in_singular_set, n_params, phi_eval, psi_eval

z = Poly.var(VarId.symbol("z"))
ONE, ZERO = Poly.const(1), Poly.const(0)
U = lambda x: ElementaryFactor.shear("upper", x)  # noqa: E731
L = lambda x: ElementaryFactor.shear("lower", x)  # noqa: E731
A23 = np.array([[2, 3], [1, 2]], dtype=complex)


# --- preimage of a last row

@pytest.mark.parametrize("b,expected", [((2, 3), (-2, -1, 0)),
                                        ((0, 5), (-1, -4, 0.2)),
                                        ((1, 1), (-1, 0, 0))])
def test_preimage_examples(b, expected):
    ch = preimage_last_row(b)
    assert ch.K == 3
    assert np.allclose(ch.flat(), expected, atol=1e-15)
    assert np.allclose(phi_eval(ch), b, atol=1e-14)
    assert not in_singular_set(ch, 3)


def test_preimage_rejects_zero():
    with pytest.raises(DomainError):
        preimage_last_row([0, 0, 0])


@given(st.integers(2, 5), st.integers(0, 2 ** 32 - 1), st.booleans())
def test_preimage_property(n, seed, zero_first):
    r = np.random.default_rng(seed)
    b = r.normal(size=n) + 1j * r.normal(size=n)
    if zero_first:
        b[0] = 0
    ch = preimage_last_row(b)
    assert np.linalg.norm(phi_eval(ch) - b) <= 1e-12 * np.linalg.norm(b)
    assert not in_singular_set(ch, 3)


# --- peel step

def test_peel_example():
    res = peel_last_row(A23, FactorChain.from_array(2, [-1, -1, 0]))
    assert np.allclose(res.B, [[1, -1], [0, 1]])
    assert np.allclose(res.h, [-1])
    assert np.allclose(res.core, [[1]])


def test_peel_identity_with_zero_chain():
    res = peel_last_row(np.eye(3), FactorChain.zeros(3, 3))
    assert np.allclose(res.B, np.eye(3)) and np.allclose(res.h, 0)
    assert np.allclose(res.core, np.eye(2))


def test_peel_rejects_mismatched_chain():
    with pytest.raises(LastRowMismatch):
        peel_last_row(A23, FactorChain.from_array(2, [0, 0, 0]))


def random_sl(r, n, K=6):
    m = n_params(n)
    Z = r.normal(size=K * m) + 1j * r.normal(size=K * m)
    Z /= max(1.0, np.linalg.norm(Z) / 2)
    return psi_eval(FactorChain.from_array(n, Z)).entries


@given(st.integers(2, 6), st.integers(0, 2 ** 32 - 1))
def test_peel_property(n, seed):
    r = np.random.default_rng(seed)
    A = random_sl(r, n)
    res = peel_last_row(A, preimage_last_row(A[-1]))
    e = np.zeros(n)
    e[-1] = 1
    # recompute from scratch rather than trusting the cleaned-up B
    Psi = psi_eval(preimage_last_row(A[-1])).entries
    assert np.max(np.abs((Psi @ np.linalg.inv(A))[-1] - e)) <= 1e-10
    assert abs(np.linalg.det(res.core) - 1) <= 1e-9


# --- constant matrices

def test_factor_constant_example():
    fs = factor_constant(A23)
    assert [f.side for f in fs] == ["upper", "lower", "upper"]
    assert np.allclose([f.payload for f in fs], [1, 1, 1])
    assert np.allclose(product_matrix(fs, 2), A23)


def test_factor_constant_identity_and_domain():
    assert factor_constant(np.eye(4)) == []
    with pytest.raises(DomainError, match="determinant"):
        factor_constant(np.diag([2.0, 1.0]))
    with pytest.raises(DomainError):
        factor_constant(np.ones((2, 3)))


def test_factor_constant_round_trip_n4(rng):
    A = psi_eval(FactorChain.from_array(4, rng.normal(size=(6, 6)) + 0j, DIRECT)).entries
    fs = factor_constant(A)
    rep = verify_factorization(A, fs)
    assert rep.match and rep.error <= 1e-10


@given(st.integers(2, 6), st.integers(0, 2 ** 32 - 1))
def test_factor_constant_property(n, seed):
    A = random_sl(np.random.default_rng(seed), n)
    fs = factor_constant(A)
    assert verify_factorization(A, fs).error <= 1e-10
    for f, g in zip(fs, fs[1:]):
        assert f.side != g.side
    for f in fs:
        M = f.matrix()
        assert np.allclose(np.diag(M), 1)
        assert np.allclose(np.triu(M, 1) if f.side == "lower" else np.tril(M, -1), 0)
    assert len(fs) <= 4 * (n - 1) + 1


def test_canonical_merges_and_drops():
    fs = canonical([U(1), U(2), L(0), L(3), U(0)])
    assert [(f.side, f.payload) for f in fs] == [("upper", 3), ("lower", 3)]


def test_chain_conversion_starts_lower():
    ch = factors_to_chain([U(2), L(1)], 2)
    assert ch.orientation == DIRECT
    assert np.allclose(ch.flat(), [0, 2, 1])
    assert np.allclose(psi_eval(ch).entries, product_matrix([U(2), L(1)], 2))


# --- Whitehead identity

@pytest.mark.parametrize("u,expected", [(2, [[2, 0], [0, 0.5]]), (1, np.eye(2)), (-1, -np.eye(2))])
def test_whitehead_examples(u, expected):
    fs = whitehead_diag(u)
    assert len(fs) == 5
    assert np.allclose(product_matrix(fs, 2), expected, atol=1e-15)


def test_whitehead_exact_for_rational_u():
    u = ExactComplex(Fraction(3, 7), Fraction(-2, 5))
    fs = [ElementaryFactor(f.side, 2, {rc: Poly.const(v) for rc, v in f.entries.items()})
          for f in whitehead_diag(u)]
    P = product_rows(fs, 2)
    assert P == [[Poly.const(u), ZERO], [ZERO, Poly.const(u.inverse())]]


def test_whitehead_symbolic_u():
    sympy = pytest.importorskip("sympy")
    u = sympy.Symbol("u")
    P = product_rows(whitehead_diag(u), 2)
    assert sympy.simplify(sympy.Matrix(P) - sympy.diag(u, 1 / u)) == sympy.zeros(2, 2)


def test_whitehead_rejects_zero():
    with pytest.raises(DomainError):
        whitehead_diag(0)


# --- SL_2 over C[z]

def test_factor_sl2_examples():
    A = PolyMatrix2(ONE, ONE, z, z + 1)
    fs = factor_sl2_poly(A)
    assert verify_factorization(A, fs, "exact").match
    assert factor_sl2_poly(PolyMatrix2(ONE, ZERO, ZERO, ONE)) == []
    fs = factor_sl2_poly(PolyMatrix2(ZERO, ONE, -ONE, ZERO))
    assert [(f.side, f.payload) for f in fs] == [("upper", ONE), ("lower", -ONE), ("upper", ONE)]


def test_polymatrix_checks_determinant():
    with pytest.raises(DomainError):
        PolyMatrix2(ONE, z, z, ONE)


def test_cohn_is_rejected_as_multivariate():
    with pytest.raises(DomainError):
        factor_sl2_poly(cohn_matrix())


def random_poly(r, deg):
    coeffs = [ExactComplex(Fraction(int(r.integers(-5, 6)), int(r.integers(1, 4))),
                           Fraction(int(r.integers(-2, 3)), int(r.integers(1, 3))))
              for _ in range(deg + 1)]
    out = ZERO
    for e, c in enumerate(coeffs):
        out = out + Poly.const(c) * z ** e
    return out


def random_sl2_product(r):
    fs = [ElementaryFactor.shear("lower" if r.random() < 0.5 else "upper",
                                 random_poly(r, int(r.integers(0, 6))))
          for _ in range(int(r.integers(1, 9)))]
    return PolyMatrix2.from_rows(product_rows(fs, 2))


@given(st.integers(0, 2 ** 32 - 1))
def test_factor_sl2_round_trip(seed):
    A = random_sl2_product(np.random.default_rng(seed))
    fs = factor_sl2_poly(A)
    assert verify_factorization(A, fs, "exact").match


# --- verification

def test_verify_examples():
    assert verify_factorization(A23, [U(1), L(1), U(1)]).to_json()["K"] == 3
    assert verify_factorization(A23, [U(1), L(1), U(1)]).match
    rep = verify_factorization(np.eye(3), [])
    assert rep.match and rep.K == 0
    assert not verify_factorization(A23, [U(1)]).match


def test_cohn_mismatch_against_three_factor_candidates():
    z1, z2 = Poly.var(VarId.symbol("z1")), Poly.var(VarId.symbol("z2"))
    cands = [[U(z1 * z1), L(-(z2 * z2)), U(ZERO)],
             [L(z1 * z2), U(z1 * z1), L(-z1 * z2 * z2 * z2)],
             [U(-z1 * z2), L(z2 * z2 * z1 * z1), U(z1 ** 4)]]
    for fs in cands:
        rep = verify_factorization(cohn_matrix(), fs, "exact")
        assert not rep.match and rep.K == 3 and rep.mismatches


def test_factor_json_round_trip():
    num = U(2 - 1j)
    back = ElementaryFactor.from_json(num.to_json())
    assert back.side == "upper" and back.entries == {(1, 2): 2 - 1j}
    sym = L(z * z + Fraction(1, 3))
    assert ElementaryFactor.from_json(sym.to_json()) == sym
