import numpy as np
import pytest

from unifact.polyring import Poly, TermBudgetExceeded, VarId
from unifact.submersion import (direct_components, expected_support, jacobian_at,
                                numerical_rank, random_points, rank_report,
                                singular_image_check, submersive_at, symbolic_components)
from unifact.unipotent import FactorChain, in_singular_set, n_params, phi_eval

Z = VarId.param(2, 1, 1)
W = VarId.param(1, 2, 2)
V = VarId.param(2, 1, 3)
z, w, v = Poly.var(Z), Poly.var(W), Poly.var(V)


def test_component_examples_n2():
    assert symbolic_components(2, 1).components == [-z, Poly.const(1)]
    assert symbolic_components(2, 2).components == [-z, 1 + z * w]
    assert symbolic_components(2, 3).components == [-z - (1 + z * w) * v, 1 + z * w]


@pytest.mark.parametrize("n", [2, 3, 4])
@pytest.mark.parametrize("K", [1, 2, 3, 4])
def test_recurrence_matches_direct_product(n, K):
    assert symbolic_components(n, K).components == direct_components(n, K)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_last_component_of_first_factor_is_one(n):
    assert symbolic_components(n, 1).components[-1] == Poly.const(1)


@pytest.mark.parametrize("n,K", [(3, 2), (3, 3), (4, 4), (4, 5)])
def test_multilinear_with_expected_support(n, K):
    comps = symbolic_components(n, K).components
    lastK = set(FactorChain.symbolic_chain(n, K).factors[-1].entries.values())
    lastK = {p.variables()[0] for p in lastK}
    for k, p in enumerate(comps, start=1):
        assert p.is_multilinear()[0]
        assert set(p.variables()) & lastK == expected_support(n, K, k)


def test_jacobian_examples():
    J = jacobian_at(symbolic_components(2, 2), {Z: 1, W: 0})
    assert np.allclose(J, [[-1, 0], [0, 1]])
    J3 = jacobian_at(symbolic_components(2, 3), [0, 0, 7])
    assert np.allclose(J3, [[-1, 0, -1], [0, 0, 0]])
    assert numerical_rank(J3) == 1


def test_jacobian_missing_variable():
    from unifact.polyring import MissingVariableError

    with pytest.raises(MissingVariableError):
        jacobian_at(symbolic_components(2, 2), {Z: 1})


@pytest.mark.parametrize("n,K", [(2, 2), (3, 3), (4, 2)])
def test_zero_point_is_rank_deficient(n, K):
    sys_ = symbolic_components(n, K)
    zero = np.zeros(K * n_params(n))
    assert numerical_rank(jacobian_at(sys_, zero)) < n
    assert in_singular_set(FactorChain.from_array(n, zero), K)


def test_submersive_examples():
    s3 = symbolic_components(2, 3)
    assert submersive_at(s3, [-1, -4, 0.2])
    for vv in (0, 1, 3 + 2j):
        assert not submersive_at(s3, [0, 0, vv])
    s2 = symbolic_components(2, 2)
    assert not submersive_at(s2, [0, 4])
    assert submersive_at(s2, [1e-3, 4])
    with pytest.raises(ValueError):
        submersive_at(symbolic_components(2, 1), [1])


def test_rank_report_agrees_with_singular_set(rng):
    sys_ = symbolic_components(3, 3)
    pts = np.concatenate([random_points(3, 3, 30, rng), random_points(3, 3, 30, rng, True)])
    recs = rank_report(sys_, pts)
    assert all(r.agree for r in recs)
    assert sum(r.in_S_K for r in recs) == 30
    assert set(recs[0].to_json()) == {"point", "rank", "in_S_K", "agree"}


def test_singular_image_examples():
    rep = singular_image_check(2, 2)
    assert rep.ok and rep.restricted == [Poly.const(0), Poly.const(1)]
    rep3 = singular_image_check(2, 3)
    assert rep3.ok and rep3.restricted == [-v, Poly.const(1)]
    rep32 = singular_image_check(3, 2)
    assert rep32.ok and rep32.restricted == [Poly.const(0), Poly.const(0), Poly.const(1)]


def test_singular_image_agrees_with_numeric_points(rng):
    pts = random_points(3, 2, 20, rng, on_singular_set=True)
    for p in pts:
        assert np.allclose(phi_eval(FactorChain.from_array(3, p)), [0, 0, 1], atol=1e-12)


def test_term_budget_guard(monkeypatch):
    with pytest.raises(TermBudgetExceeded):
        symbolic_components(3, 5, budget=10)
    monkeypatch.setenv("UNIFACT_TERM_BUDGET", "5")
    with pytest.raises(TermBudgetExceeded):
        symbolic_components(3, 4)


def test_bad_sizes_rejected():
    with pytest.raises(ValueError):
        symbolic_components(1, 2)
    with pytest.raises(ValueError):
        jacobian_at(symbolic_components(2, 2), [1, 2, 3])
