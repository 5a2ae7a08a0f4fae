import cmath

import numpy as np
import pytest
from hypothesis import given, strategies as st

from generators import X, random_shear_case
from unifact.polyring import Poly, VarId
from unifact.spray import (MixedResidualError, NotMultilinearError, ShearField, SprayMap,
                           Translation, chart_off_singular, chart_phi, fiber_chart, rk4_flow,
                           shear_field_flow, span_rank, spray_map, spray_rank, stratum_index)

x1, x2, x3 = (Poly.var(v) for v in X[:3])


def close(a, b, tol=1e-12):
    return all(abs(a[k] - b[k]) <= tol * (1 + abs(b[k])) for k in b)


# --- closed-form flows

@pytest.mark.parametrize("t", [0.3, -1.2, 0.5 + 0.7j, 2j])
def test_flow_of_product(t):
    out = shear_field_flow(ShearField(x1 * x2, X[0], X[1]), {X[0]: 1, X[1]: 1}, t)
    assert close(out, {X[0]: cmath.exp(-t), X[1]: cmath.exp(t)})
    assert abs(out[X[0]] * out[X[1]] - 1) < 1e-12


def test_flow_of_sum_is_a_drift():
    a, b, t = 2 - 1j, 0.5, 1.5 + 0.25j
    out = shear_field_flow(ShearField(x1 + x2, X[0], X[1]), {X[0]: a, X[1]: b}, t)
    assert close(out, {X[0]: a - t, X[1]: b + t})


def test_flow_at_zero_time_is_identity():
    p = x1 * x2 * x3 + 2 * x1 - x3
    start = {X[0]: 0.4, X[1]: -1 + 1j, X[2]: 3}
    assert close(shear_field_flow(ShearField(p, X[0], X[2]), start, 0), start, 0)


def test_shear_field_rejects_bad_input():
    with pytest.raises(NotMultilinearError):
        ShearField(x1 * x1, X[0], X[1])
    with pytest.raises(ValueError):
        ShearField(x1 * x2, X[0], X[0])


@given(st.integers(0, 2 ** 32 - 1))
def test_flow_conserves_and_matches_rk4(seed):
    fld, start, t = random_shear_case(seed)
    end = shear_field_flow(fld, start, t)
    p0 = fld.p.evaluate(start)
    assert abs(fld.p.evaluate(end) - p0) <= 1e-12 * (1 + abs(p0))
    ref = rk4_flow(fld, start, t)
    assert max(abs(end[v] - ref[v]) for v in ref) <= 1e-6


@given(st.integers(0, 2 ** 32 - 1))
def test_flow_group_law(seed):
    fld, start, t = random_shear_case(seed)
    s = 0.4 - 0.3j
    once = shear_field_flow(fld, start, t + s)
    twice = shear_field_flow(fld, shear_field_flow(fld, start, t), s)
    assert max(abs(once[v] - twice[v]) for v in once) <= 1e-10 * (1 + max(abs(x) for x in once.values()))


@given(st.integers(0, 2 ** 32 - 1))
def test_tangency_is_exact(seed):
    fld, _, _ = random_shear_case(seed)
    assert fld.apply(fld.p).is_zero()


# --- span rank

def test_span_rank_examples():
    assert span_rank(x1 * x2, {X[0]: 1, X[1]: 0}) == 1
    assert span_rank(x1 * x2, {X[0]: 0, X[1]: 0}) == 0
    from unifact.submersion import symbolic_components

    p = symbolic_components(2, 2).components[0]
    zw = [VarId.param(2, 1, 1), VarId.param(1, 2, 2)]
    assert span_rank(p, {zw[0]: 3, zw[1]: -2}, zw) == 1


@given(st.integers(0, 2 ** 32 - 1))
def test_span_rank_is_one_less_than_dimension(seed):
    fld, start, _ = random_shear_case(seed)
    vs = sorted(start, key=lambda v: v.sort_key)
    g = [fld.p.diff(v).evaluate(start) for v in vs]
    if max(abs(x) for x in g) > 1e-6:
        assert span_rank(fld.p, start, vs) == len(vs) - 1


# --- spray maps

def test_spray_map_examples():
    fld = ShearField(x1 * x2, X[0], X[1])
    base = {X[0]: 1, X[1]: 1, X[2]: 0.5}
    s = SprayMap((fld, Translation(X[2])), base)
    assert close(spray_map(s, []), base, 0)
    assert close(spray_map(SprayMap((fld,), base), [1]), shear_field_flow(fld, base, 1))
    out = spray_map(s, [0.7, 2.0])
    assert abs(out[X[0]] * out[X[1]] - 1) < 1e-12
    assert abs(out[X[2]] - 2.5) < 1e-15
    assert spray_rank(s) == 2


def test_spray_rejects_mixed_residuals():
    with pytest.raises(MixedResidualError):
        SprayMap((ShearField(x1 * x2, X[0], X[1]), ShearField(x1 + x2, X[0], X[1])), {})


# --- strata and charts

def test_stratum_examples():
    assert stratum_index([5, 0, 1], "even") == 1
    assert stratum_index([0, 0, 2], "even") == 3
    assert stratum_index([2, 0, 0], "odd") == 3
    assert stratum_index([0, 0, 3], 4) == 3
    with pytest.raises(ValueError):
        stratum_index([0, 0], "even")


def test_chart_n2_K2():
    a1, a2 = 2 - 1j, 0.5 + 3j
    ch = fiber_chart(2, 2, [a1, a2])
    (var, num), = ch.solved
    assert var == VarId.param(1, 2, 2)
    from unifact.spray import a_symbol

    val = num.evaluate({a_symbol(1): a1, a_symbol(2): a2}) / a1
    assert abs(val - (1 - a2) / a1) < 1e-14
    cv = ch.complete({}, VarId.param(2, 1, 1))
    assert abs(cv[VarId.param(2, 1, 1)] + a1) < 1e-14
    Z = ch.reconstruct(cv, {})
    assert np.allclose(Z.flat(), [-a1, (1 - a2) / a1])
    assert np.allclose(chart_phi(ch, cv, {}), [a1, a2], atol=1e-12)


def test_chart_rejects_deep_stratum_for_K2():
    with pytest.raises(ValueError):
        fiber_chart(2, 2, [0, 5])
    with pytest.raises(ValueError):
        fiber_chart(3, 2, [0, 0, 0])


def test_chart_variables_partition():
    ch = fiber_chart(4, 4, [0, 2, 1, 1])
    solved = [v for v, _ in ch.solved]
    allv = set(FactorChainVars(4, 4))
    assert len(solved) + len(ch.free) + len(ch.coords) == len(allv)
    assert set(solved) | set(ch.free) | set(ch.coords) == allv
    assert set(ch.residual.variables()) <= set(ch.coords) | {v for v in ch.residual.variables()
                                                            if v.kind != "param"}


def FactorChainVars(n, K):
    from unifact.unipotent import FactorChain

    return FactorChain.symbolic_chain(n, K).variables()


def _target(r, n, k):
    a = r.normal(size=n) + 1j * r.normal(size=n)
    a[: k - 1] = 0
    return a


@pytest.mark.parametrize("n,K,k", [(2, 4, 2), (3, 4, 1), (3, 4, 2), (3, 4, 3), (4, 2, 1),
                                   (3, 3, 1), (3, 3, 2), (3, 5, 3), (4, 3, 2)])
def test_chart_soundness(n, K, k):
    r = np.random.default_rng(100 * n + 10 * K + k)
    for _ in range(10):
        a = _target(r, n, k)
        if K % 2:
            a = a[::-1].copy()   # odd strata count from the back
        ch = fiber_chart(n, K, a)
        assert ch.stratum == k
        cv, fv = ch.sample(r)
        assert abs(ch.residual_value(cv) - ch.target) < 1e-10
        assert np.linalg.norm(chart_phi(ch, cv, fv) - a) <= 1e-10
        if ch.is_smooth_at(cv):
            assert chart_off_singular(ch, cv, fv)


def test_chart_spray_preserves_fiber():
    r = np.random.default_rng(3)
    a = np.array([0, 1.5, -0.5 + 1j])
    ch = fiber_chart(3, 4, a)
    cv, fv = ch.sample(r)
    s = ch.spray(cv, fv)
    moved = spray_map(s, 0.1 * r.normal(size=len(s.fields)))
    cv2, fv2 = ch.split(moved)
    assert np.linalg.norm(chart_phi(ch, cv2, fv2) - a) <= 1e-9
    assert spray_rank(s) == len(ch.coords) - 1 + len(ch.free)


@given(st.integers(0, 2 ** 32 - 1))
def test_conservation_scales_with_evaluation_conditioning(seed):
    # Gaussian data can give exp(alpha t) ~ 1e5; then p itself is ill-conditioned
    # at the endpoint and only a condition-scaled bound is meaningful.
    r = np.random.default_rng(seed)
    nvars = int(r.integers(2, 7))
    p = Poly.const(complex(*r.normal(size=2)))
    for _ in range(int(r.integers(1, 6))):
        term = Poly.const(complex(*r.normal(size=2)))
        for i in r.choice(nvars, size=int(r.integers(1, nvars + 1)), replace=False):
            term = term * Poly.var(X[i])
        p = p + term
    i, j = (int(q) for q in r.choice(nvars, size=2, replace=False))
    start = {X[k]: complex(*r.normal(size=2)) for k in range(nvars)}
    t = complex(*r.normal(size=2))
    t *= min(1.0, 2 / abs(t))
    end = shear_field_flow(ShearField(p, X[i], X[j]), start, t)
    cond = 1 + sum(abs(complex(c)) * np.prod([abs(end[v]) ** e for v, e in mono])
                   for mono, c in p.items())
    assert abs(p.evaluate(end) - p.evaluate(start)) <= 1e-12 * cond
