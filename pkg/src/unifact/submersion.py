"""Component polynomials of the last-row map and its rank structure."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .polyring import CompiledPoly, Poly, TermBudgetExceeded, VarId
from .unipotent import (FactorChain, ParamVector, build_factor, constrained_coords,
                        in_singular_set, inverse_params, n_params)

__all__ = [
    "ComponentSystem",
    "symbolic_components",
    "direct_components",
    "jacobian_at",
    "submersive_at",
    "singular_image_check",
    "expected_support",
    "TermBudgetExceeded",
]

DEFAULT_TERM_BUDGET = 2_000_000
RANK_TOL = 1e-8


def term_budget() -> int:
    raw = os.environ.get("UNIFACT_TERM_BUDGET")
    return int(raw) if raw else DEFAULT_TERM_BUDGET


def _var(r, c, k) -> Poly:
    return Poly.var(VarId.param(r, c, k))


@dataclass
class ComponentSystem:
    n: int
    K: int
    components: list
    _jac: list | None = field(default=None, repr=False)

    def variables(self) -> list[VarId]:
        return [v for k in range(1, self.K + 1) for v in ParamVector.variables_of(self.n, k)]

    def jacobian_polys(self) -> list[list[Poly]]:
        if self._jac is None:
            vs = self.variables()
            self._jac = [[p.diff(v) for v in vs] for p in self.components]
        return self._jac

    def compiled_jacobian(self) -> list[list[CompiledPoly]]:
        vs = self.variables()
        return [[d.compile(vs) for d in row] for row in self.jacobian_polys()]

    def total_terms(self) -> int:
        return sum(len(p) for p in self.components)


def _check_budget(polys, budget):
    total = sum(len(p) for p in polys)
    if total > budget:
        raise TermBudgetExceeded(f"symbolic system has {total} terms (budget {budget})")


def symbolic_components(n: int, K: int, budget: int | None = None) -> ComponentSystem:
    """Build P_{1,K} .. P_{n,K} by the factor-by-factor recurrences.

    ``K = 1`` is the last row of the exactly inverted first factor; each
    further factor peels one triangular solve off the previous last row.
    """
    if n < 2 or K < 1:
        raise ValueError("need n >= 2 and K >= 1")
    budget = term_budget() if budget is None else budget
    first = build_factor(inverse_params(ParamVector.symbolic_vector(n, 1)))
    P = list(first[n - 1])
    for k in range(2, K + 1):
        new = [None] * n
        if k % 2 == 0:
            # P_{i,k} = P_{i,k-1} - sum_{j<i} z_{ji,k} P_{j,k}
            for i in range(n):
                acc = P[i]
                for j in range(i):
                    acc = acc - _var(j + 1, i + 1, k) * new[j]
                new[i] = acc
        else:
            # P_{i,k} = P_{i,k-1} - sum_{j>i} z_{ji,k} P_{j,k}
            for i in range(n - 1, -1, -1):
                acc = P[i]
                for j in range(i + 1, n):
                    acc = acc - _var(j + 1, i + 1, k) * new[j]
                new[i] = acc
        P = new
        _check_budget(P, budget)
    return ComponentSystem(n, K, P)


def direct_components(n: int, K: int) -> list[Poly]:
    """Last row of the fully expanded symbolic product (independent route)."""
    from .unipotent import psi_eval

    return list(psi_eval(FactorChain.symbolic_chain(n, K))[n - 1])


def expected_support(n: int, K: int, k: int) -> set:
    """Factor-K variables that P_{k,K} depends on (1-based k)."""
    if K % 2 == 0:
        return {VarId.param(i, j, K) for j in range(1, k + 1) for i in range(1, j)}
    return {VarId.param(i, j, K) for j in range(k, n + 1) for i in range(j + 1, n + 1)}


def _points(system: ComponentSystem, point) -> np.ndarray:
    vs = system.variables()
    if isinstance(point, dict):
        missing = [v for v in vs if v not in point]
        if missing:
            from .polyring import MissingVariableError

            raise MissingVariableError(missing)
        return np.array([[complex(point[v]) for v in vs]], dtype=np.complex128)
    arr = np.asarray(point, dtype=np.complex128)
    if arr.ndim == 1:
        arr = arr[None]
    arr = arr.reshape(arr.shape[0], -1)
    if arr.shape[1] != len(vs):
        raise ValueError(f"point needs {len(vs)} coordinates, got {arr.shape[1]}")
    return arr


def jacobian_at(system: ComponentSystem, point) -> np.ndarray:
    """Jacobian of the symbolic components at a point or a batch of points.

    Columns follow :meth:`ComponentSystem.variables`. A single point gives an
    ``(n, K*m)`` array, a batch ``(B, n, K*m)``.
    """
    pts = _points(system, point)
    rows = system.compiled_jacobian()
    J = np.empty((pts.shape[0], system.n, len(system.variables())), dtype=np.complex128)
    for a, row in enumerate(rows):
        for b, cp in enumerate(row):
            J[:, a, b] = cp(pts)
    single = isinstance(point, dict) or np.asarray(point).ndim == 1
    return J[0] if single else J


def numerical_rank(J: np.ndarray, tol: float = RANK_TOL) -> np.ndarray | int:
    s = np.linalg.svd(J, compute_uv=False)
    smax = s[..., :1]
    r = (s > tol * np.maximum(smax, np.finfo(float).tiny)).sum(axis=-1)
    return r


def min_singular_ratio(J: np.ndarray) -> np.ndarray:
    s = np.linalg.svd(J, compute_uv=False)
    return s[..., -1] / np.maximum(s[..., 0], np.finfo(float).tiny)


def submersive_at(system: ComponentSystem, point, tol: float = RANK_TOL):
    """True where the Jacobian has full numerical rank n."""
    if system.K < 2:
        raise ValueError("submersivity is characterized for K >= 2")
    J = jacobian_at(system, point)
    r = numerical_rank(J, tol)
    return bool(r == system.n) if np.ndim(r) == 0 else r == system.n


@dataclass
class RankRecord:
    point: np.ndarray
    rank: int
    in_S_K: bool
    agree: bool

    def to_json(self):
        from .jsonio import vector_to_json

        return {"point": vector_to_json(self.point), "rank": int(self.rank),
                "in_S_K": bool(self.in_S_K), "agree": bool(self.agree)}


def rank_report(system: ComponentSystem, points, tol: float = RANK_TOL) -> list[RankRecord]:
    pts = _points(system, points)
    ranks = np.atleast_1d(numerical_rank(jacobian_at(system, pts), tol))
    out = []
    for p, r in zip(pts, ranks):
        chain = FactorChain.from_array(system.n, p)
        s = in_singular_set(chain, system.K)
        out.append(RankRecord(p, int(r), s, (r == system.n) != s))
    return out


def singular_restriction(n: int, K: int) -> dict:
    """Substitution map that zeroes the S_K-constrained coordinates."""
    zero = Poly.const(0)
    return {VarId.param(r, c, k): zero
            for k in range(1, K) for r, c in constrained_coords(n, k)}


@dataclass
class SingularImageReport:
    n: int
    K: int
    restricted: list
    failures: list

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_json(self):
        return {"n": self.n, "K": self.K, "ok": self.ok,
                "restricted": [p.to_json() for p in self.restricted],
                "failures": self.failures}


def singular_image_check(n: int, K: int, system: ComponentSystem | None = None
                         ) -> SingularImageReport:
    """Restrict the components to S_K and compare with the claimed image.

    Even K: every component but the last restricts to 0 and the last to 1.
    Odd K: the last component restricts to 1.
    """
    if K < 2:
        raise ValueError("S_K is defined for K >= 2")
    system = system or symbolic_components(n, K)
    sub = singular_restriction(n, K)
    restricted = [p.subs(sub) for p in system.components]
    failures = []
    if restricted[-1] != Poly.const(1):
        failures.append(f"P_{n},{K} restricts to {restricted[-1]}, expected 1")
    if K % 2 == 0:
        for k, p in enumerate(restricted[:-1], start=1):
            if not p.is_zero():
                failures.append(f"P_{k},{K} restricts to {p}, expected 0")
    return SingularImageReport(n, K, restricted, failures)


def random_points(n: int, K: int, count: int, rng: np.random.Generator,
                  on_singular_set: bool = False) -> np.ndarray:
    """Points uniform in the complex ball of radius 2 (then S_K-projected if asked)."""
    dim = K * n_params(n)
    g = rng.normal(size=(count, dim)) + 1j * rng.normal(size=(count, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    radius = 2.0 * rng.random(count) ** (1.0 / (2 * dim))
    pts = g * radius[:, None]
    if on_singular_set:
        vs = FactorChain.symbolic_chain(n, K).variables()
        zero = singular_restriction(n, K)
        mask = np.array([v in zero for v in vs])
        pts[:, mask] = 0
    return pts
