"""Shear fields of multilinear polynomials, their flows, and fiber charts.

For a polynomial ``p`` that is at most linear in every variable the field

    V_{ij,p} = (dp/dx_i) d/dx_j - (dp/dx_j) d/dx_i

has an explicit flow: along it ``x_j`` and ``x_i`` solve decoupled linear
ODEs with constant coefficients and all other coordinates stay put.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .polyring import Poly, VarId
from .submersion import symbolic_components
from .unipotent import FactorChain, ParamVector, in_singular_set, phi_eval

__all__ = [
    "ShearField",
    "Translation",
    "SprayMap",
    "FiberChart",
    "shear_field_flow",
    "rk4_flow",
    "span_rank",
    "spray_map",
    "spray_rank",
    "fiber_chart",
    "stratum_index",
    "NotMultilinearError",
    "MixedResidualError",
]

ALPHA_TOL = 1e-14


class NotMultilinearError(ValueError):
    pass


class MixedResidualError(ValueError):
    pass


def _phi1(z: complex) -> complex:
    """(exp(z) - 1) / z without cancellation near 0."""
    if abs(z) < 1e-2:
        s, term = 1 + 0j, 1 + 0j
        for k in range(2, 9):
            term *= z / k
            s += term
        return s
    return (cmath.exp(z) - 1) / z


@dataclass(frozen=True)
class ShearField:
    p: Poly
    i: VarId
    j: VarId

    def __post_init__(self):
        ok, bad = self.p.is_multilinear()
        if not ok:
            raise NotMultilinearError(f"{self.p} is not multilinear in {', '.join(map(str, bad))}")
        if self.i == self.j:
            raise ValueError("a shear field needs two distinct variables")

    @property
    def dp_di(self) -> Poly:
        return self.p.diff(self.i)

    @property
    def dp_dj(self) -> Poly:
        return self.p.diff(self.j)

    @property
    def alpha(self) -> Poly:
        return self.p.diff(self.i).diff(self.j)

    @property
    def beta(self) -> Poly:
        # dp/dx_i - alpha x_j, formed exactly so no cancellation reaches the flow
        return self.p.diff(self.i).subs({self.j: 0})

    @property
    def gamma(self) -> Poly:
        return self.p.diff(self.j).subs({self.i: 0})

    def components(self) -> dict:
        """The field as ``{variable: coefficient Poly}``."""
        return {self.j: self.dp_di, self.i: -self.dp_dj}

    def apply(self, q: Poly) -> Poly:
        """Directional derivative of ``q`` along the field (exact)."""
        return self.dp_di * q.diff(self.j) - self.dp_dj * q.diff(self.i)


@dataclass(frozen=True)
class Translation:
    """Constant unit field d/dx_var."""

    var: VarId


def _full(point: Mapping, p: Poly) -> dict:
    out = {v: complex(x) for v, x in point.items()}
    missing = [v for v in p.variables() if v not in out]
    if missing:
        from .polyring import MissingVariableError

        raise MissingVariableError(missing)
    return out


def shear_field_flow(fld: ShearField, start: Mapping, t: complex) -> dict:
    """Time-``t`` flow of a shear field from ``start`` (closed form)."""
    x = _full(start, fld.p)
    t = complex(t)
    xi, xj = x.get(fld.i, 0j), x.get(fld.j, 0j)
    x.setdefault(fld.i, xi)
    x.setdefault(fld.j, xj)
    alpha_poly = fld.alpha
    alpha = 0j if alpha_poly.is_zero() else alpha_poly.evaluate(x)
    beta = fld.beta.evaluate(x)
    gamma = fld.gamma.evaluate(x)
    if abs(alpha) < ALPHA_TOL:
        x[fld.j] = xj + beta * t
        x[fld.i] = xi - gamma * t
    else:
        ep, em = cmath.exp(alpha * t), cmath.exp(-alpha * t)
        x[fld.j] = xj * ep + beta * t * _phi1(alpha * t)
        x[fld.i] = xi * em - gamma * t * _phi1(-alpha * t)
    return x


def rk4_flow(fld: ShearField, start: Mapping, t: complex, rtol: float = 1e-10,
             min_steps: int = 32, max_steps: int = 1 << 16) -> dict:
    """Numerical flow by RK4 with step doubling until successive results agree."""
    x = _full(start, fld.p)
    x.setdefault(fld.i, 0j)
    x.setdefault(fld.j, 0j)
    order = sorted(x, key=lambda v: v.sort_key)
    pos = {v: k for k, v in enumerate(order)}
    ci = fld.dp_di.compile(order)
    cj = fld.dp_dj.compile(order)
    x0 = np.array([x[v] for v in order], dtype=np.complex128)
    steps = min_steps
    prev = kernels.rk4_shear(ci.coef, ci.idx, cj.coef, cj.idx, pos[fld.i], pos[fld.j],
                             x0, complex(t), steps)
    while steps < max_steps:
        steps *= 2
        cur = kernels.rk4_shear(ci.coef, ci.idx, cj.coef, cj.idx, pos[fld.i], pos[fld.j],
                                x0, complex(t), steps)
        if np.max(np.abs(cur - prev)) <= rtol * (1 + np.max(np.abs(cur))):
            prev = cur
            break
        prev = cur
    return {v: complex(prev[pos[v]]) for v in order}


def gradient(p: Poly, point: Mapping, variables: Sequence[VarId]) -> np.ndarray:
    return np.array([p.diff(v).evaluate(point) if v in set(p.variables()) else 0j
                     for v in variables], dtype=np.complex128)


def field_matrix(p: Poly, point: Mapping, variables: Sequence[VarId] | None = None) -> np.ndarray:
    """Rows are V_{ij,p}(point) for all i < j, in ``variables`` coordinates."""
    vs = list(variables) if variables is not None else p.variables()
    g = gradient(p, point, vs)
    rows = []
    for a in range(len(vs)):
        for b in range(a + 1, len(vs)):
            r = np.zeros(len(vs), dtype=np.complex128)
            r[b] = g[a]
            r[a] = -g[b]
            rows.append(r)
    return np.array(rows).reshape(len(rows), len(vs))


def span_rank(p: Poly, point: Mapping, variables: Sequence[VarId] | None = None,
              tol: float = 1e-10) -> int:
    """Rank of the shear fields of ``p`` at ``point``."""
    M = field_matrix(p, point, variables)
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0:
        return 0
    return int((s > tol * s[0]).sum())


@dataclass(frozen=True)
class SprayMap:
    """Composition of complete flows, ``s(z, t) = phi_1^{t_1} o ... o phi_N^{t_N}(z)``."""

    fields: tuple
    base: Mapping

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(self.fields))
        residuals = {f.p for f in self.fields if isinstance(f, ShearField)}
        if len(residuals) > 1:
            raise MixedResidualError("all shear fields of a spray must share one polynomial")

    @property
    def residual(self) -> Poly | None:
        for f in self.fields:
            if isinstance(f, ShearField):
                return f.p
        return None

    def variables(self) -> list[VarId]:
        vs = set(self.base)
        for f in self.fields:
            if isinstance(f, ShearField):
                vs.update(f.p.variables())
                vs.update((f.i, f.j))
            else:
                vs.add(f.var)
        return sorted(vs, key=lambda v: v.sort_key)


def spray_map(s: SprayMap, t: Sequence[complex]) -> dict:
    t = list(t)
    if len(t) > len(s.fields):
        raise ValueError("more times than fields")
    t = t + [0j] * (len(s.fields) - len(t))
    x = {v: complex(val) for v, val in s.base.items()}
    for f, tk in reversed(list(zip(s.fields, t))):
        if tk == 0:
            continue
        if isinstance(f, Translation):
            x[f.var] = x.get(f.var, 0j) + complex(tk)
        else:
            x = shear_field_flow(f, x, tk)
    return x


def spray_rank(s: SprayMap, h: float = 1e-6, tol: float = 1e-6) -> int:
    """Rank of d/dt s(z, t) at t = 0, by central differences."""
    vs = s.variables()
    cols = []
    N = len(s.fields)
    for k in range(N):
        e = np.zeros(N, dtype=np.complex128)
        e[k] = h
        xp = spray_map(s, e)
        xm = spray_map(s, -e)
        cols.append([(xp.get(v, 0j) - xm.get(v, 0j)) / (2 * h) for v in vs])
    if not cols:
        return 0
    D = np.array(cols).T
    sv = np.linalg.svd(D, compute_uv=False)
    return int((sv > tol * max(sv[0], 1e-300)).sum())


# --------------------------------------------------------------------------
# stratification and fiber charts


def stratum_index(a: Sequence[complex], parity, tol: float = 0.0) -> int:
    """Stratum of ``a``: first nonzero coordinate, from the front (even K) or back (odd K)."""
    a = [complex(x) for x in a]
    even = (parity % 2 == 0) if isinstance(parity, int) else parity == "even"
    if all(abs(x) <= tol for x in a):
        raise ValueError("the zero vector lies in no stratum")
    seq = a if even else a[::-1]
    for k, x in enumerate(seq, start=1):
        if abs(x) > tol:
            return k
    raise AssertionError("unreachable")


def a_symbol(j: int) -> VarId:
    return VarId.symbol(f"a{j}")


def _a(j: int) -> Poly:
    return Poly.var(a_symbol(j))


@lru_cache(maxsize=None)
def _components(n: int, K: int) -> tuple:
    if K == 0:
        return tuple(Poly.const(1 if i == n - 1 else 0) for i in range(n))
    return tuple(symbolic_components(n, K).components)


def _z(r, c, k) -> VarId:
    return VarId.param(r, c, k)


@dataclass
class FiberChart:
    """Graph parametrization of one fiber of the last-row map over a stratum.

    ``solved`` holds ``(variable, numerator)`` pairs; each variable equals
    ``numerator / a_pivot``, where numerators are Polys in the chart
    coordinates and the symbols ``a1 .. an``. ``coords`` are the variables
    constrained only by ``residual == a_pivot``; ``free`` are unconstrained.
    """

    n: int
    K: int
    stratum: int
    a: tuple
    pivot: int
    solved: list
    free: list
    coords: list
    residual: Poly
    base_dims: tuple = field(default=(0, 0))

    @property
    def target(self) -> complex:
        return self.a[self.pivot - 1]

    def _assignment(self, values: Mapping) -> dict:
        out = {v: complex(x) for v, x in values.items()}
        for j, aj in enumerate(self.a, start=1):
            out[a_symbol(j)] = complex(aj)
        return out

    def residual_value(self, coord_values: Mapping) -> complex:
        return self.residual.evaluate(self._assignment(coord_values))

    def residual_gradient(self, coord_values: Mapping) -> np.ndarray:
        return gradient(self.residual, self._assignment(coord_values), self.coords)

    def is_smooth_at(self, coord_values: Mapping, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.residual_gradient(coord_values)), initial=0.0) > tol)

    def complete(self, partial: Mapping, var: VarId) -> dict:
        """Solve ``residual == a_pivot`` for ``var`` given the other coordinates."""
        if var not in self.coords:
            raise ValueError(f"{var} is not a chart coordinate")
        asg = self._assignment(partial)
        asg[var] = 0j
        rest = self.residual.evaluate(asg)
        slope = self.residual.diff(var).evaluate(asg)
        if slope == 0:
            raise ZeroDivisionError(f"residual does not depend on {var} here")
        out = dict(partial)
        out[var] = (self.target - rest) / slope
        return out

    def sample(self, rng: np.random.Generator, scale: float = 0.5):
        """Random residual-surface point and random free values."""
        vals = {v: complex(*(scale * rng.normal(size=2))) for v in self.coords}
        live = [v for v in self.residual.variables() if v.kind == "param"]
        if not live:
            raise ValueError("constant residual: fiber is empty or everything")
        asg = self._assignment(vals)
        pivot_var = max(live, key=lambda v: abs(self.residual.diff(v).evaluate(asg)))
        vals = self.complete(vals, pivot_var)
        free = {v: complex(*(scale * rng.normal(size=2))) for v in self.free}
        return vals, free

    def reconstruct(self, coord_values: Mapping, free_values: Mapping) -> FactorChain:
        """Full inverse-orientation point on the fiber over ``a``."""
        asg = self._assignment({**coord_values, **free_values})
        ak = self.target
        for var, num in self.solved:
            asg[var] = num.evaluate(asg) / ak
        vals = []
        for k in range(1, self.K + 1):
            vals.append([asg[v] for v in ParamVector.variables_of(self.n, k)])
        return FactorChain.from_array(self.n, np.array(vals, dtype=np.complex128))

    def spray(self, coord_values: Mapping, free_values: Mapping) -> SprayMap:
        """Shear fields of the residual over chart coordinates plus free translations."""
        fields = [ShearField(self.residual, self.coords[i], self.coords[j])
                  for i in range(len(self.coords)) for j in range(i + 1, len(self.coords))]
        fields += [Translation(v) for v in self.free]
        return SprayMap(tuple(fields), {**coord_values, **free_values})

    def split(self, values: Mapping) -> tuple[dict, dict]:
        cs, fs = set(self.coords), set(self.free)
        return ({v: x for v, x in values.items() if v in cs},
                {v: x for v, x in values.items() if v in fs})

    def to_json(self) -> dict:
        return {
            "n": self.n, "K": self.K, "stratum": self.stratum,
            "solved": [{"var": v.to_json(), "num": num.to_json(), "den": f"a_{self.pivot}"}
                       for v, num in self.solved],
            "free": [v.to_json() for v in self.free],
            "coords": [v.to_json() for v in self.coords],
            "residual": self.residual.to_json(),
            "residual_value": f"a_{self.pivot}",
            "base_dims": {"M": self.base_dims[0], "N": self.base_dims[1]},
        }


def fiber_chart(n: int, K: int, a: Sequence[complex], tol: float = 0.0) -> FiberChart:
    """Chart of the fiber over ``a`` on its stratum.

    Even K solves the first nonzero coordinate's row of factor K and, for
    deeper strata, row ``k`` of factor K-1; odd K mirrors this from the end.
    """
    a = tuple(complex(x) for x in a)
    if len(a) != n:
        raise ValueError(f"target must have {n} coordinates")
    k = stratum_index(a, K, tol)
    if K % 2 == 0:
        if K < 2 or (K == 2 and k >= 2):
            raise ValueError(f"stratum {k} needs K >= 4 for even K (got K={K})")
        solved, free, residual, pivot = _even_chart(n, K, k)
    else:
        if K < 3:
            raise ValueError("odd-K charts need K >= 3")
        solved, free, residual, pivot = _odd_chart(n, K, k)
    used = {v for v, _ in solved} | set(free)
    allv = [v for kk in range(1, K + 1) for v in ParamVector.variables_of(n, kk)]
    coords = [v for v in allv if v not in used]
    return FiberChart(n, K, k, a, pivot, solved, free, coords, residual,
                      (len(coords), len(free)))


def _even_chart(n, K, k):
    P1 = _components(n, K - 1)   # P_{., K-1}
    P2 = _components(n, K - 2)   # P_{., K-2}
    ak = k
    free = [_z(i, j, K) for i in range(1, k) for j in range(i + 1, n + 1)]
    free += [_z(j, i, K - 1) for i in range(1, k - 1) for j in range(i + 1, k)]
    solved = []
    for i in range(1, k):
        num = P2[i - 1]
        for j in range(k + 1, n + 1):
            num = num - Poly.var(_z(j, i, K - 1)) * P1[j - 1]
        solved.append((_z(k, i, K - 1), num))
    for j in range(k + 1, n + 1):
        num = P1[j - 1] - _a(j)
        for i in range(k + 1, j):
            num = num - Poly.var(_z(i, j, K)) * _a(i)
        solved.append((_z(k, j, K), num))
    return solved, free, P1[k - 1], ak


def _odd_chart(n, K, k):
    P1 = _components(n, K - 1)
    P2 = _components(n, K - 2)
    r = n - k + 1
    free = [_z(j, i, K) for j in range(r + 1, n + 1) for i in range(1, j)]
    free += [_z(j, i, K - 1) for j in range(r + 1, n + 1) for i in range(j + 1, n + 1)]
    solved = []
    for i in range(r + 1, n + 1):
        num = P2[i - 1]
        for j in range(1, r):
            num = num - Poly.var(_z(j, i, K - 1)) * P1[j - 1]
        solved.append((_z(r, i, K - 1), num))
    for i in range(1, r):
        num = P1[i - 1] - _a(i)
        for j in range(i + 1, r):
            num = num - Poly.var(_z(j, i, K)) * _a(j)
        solved.append((_z(r, i, K), num))
    return solved, free, P1[r - 1], r


def chart_phi(chart: FiberChart, coord_values: Mapping, free_values: Mapping) -> np.ndarray:
    return phi_eval(chart.reconstruct(coord_values, free_values))


def chart_off_singular(chart: FiberChart, coord_values: Mapping, free_values: Mapping) -> bool:
    return not in_singular_set(chart.reconstruct(coord_values, free_values), chart.K)


__all__ += ["chart_phi", "chart_off_singular", "gradient", "field_matrix"]
