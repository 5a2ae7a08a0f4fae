"""Unipotent triangular factors, their products and the last-row map.

Factor ``k`` (1-based) is lower triangular for odd ``k`` and upper
triangular for even ``k``. A chain in *inverse* orientation stands for
``M_1(Z_1)^-1 ... M_K(Z_K)^-1``; in *direct* orientation for
``M_1(Z_1) ... M_K(Z_K)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .polyring import Poly, VarId

__all__ = [
    "ParamVector",
    "FactorChain",
    "ComplexMatrix",
    "coords",
    "build_factor",
    "inverse_params",
    "psi_eval",
    "phi_eval",
    "phi_batch",
    "phi_jacobian_batch",
    "in_singular_set",
    "pad_factors",
]

DIRECT = "direct"
INVERSE = "inverse"


@lru_cache(maxsize=None)
def coords(n: int, k: int) -> tuple:
    """Canonical 1-based (row, col) order for factor ``k`` of size ``n``.

    Lower factors are column-major, upper factors row-major, so the last
    coordinate is ``(n, n-1)`` resp. ``(n-1, n)``.
    """
    if k % 2 == 1:
        return tuple((r, c) for c in range(1, n) for r in range(c + 1, n + 1))
    return tuple((r, c) for r in range(1, n) for c in range(r + 1, n + 1))


def n_params(n: int) -> int:
    return n * (n - 1) // 2


def _is_symbolic(x) -> bool:
    return isinstance(x, Poly)


@dataclass(frozen=True)
class ParamVector:
    """Off-diagonal entries of one unipotent factor.

    ``entries`` maps 1-based ``(row, col)`` to a Poly (symbolic mode) or a
    number (numeric mode).
    """

    n: int
    factor_index: int
    entries: Mapping

    def __post_init__(self):
        if self.factor_index < 1:
            raise ValueError("factor_index starts at 1")
        want = set(coords(self.n, self.factor_index))
        got = set(self.entries)
        if got != want:
            side = "lower" if self.lower else "upper"
            raise ValueError(f"factor {self.factor_index} is {side}; expected keys {sorted(want)}, "
                             f"got {sorted(got)}")

    @property
    def lower(self) -> bool:
        return self.factor_index % 2 == 1

    @property
    def parity(self) -> str:
        return "lower" if self.lower else "upper"

    @property
    def symbolic(self) -> bool:
        return any(_is_symbolic(v) for v in self.entries.values())

    @classmethod
    def from_values(cls, n: int, k: int, values: Sequence) -> "ParamVector":
        cs = coords(n, k)
        if len(values) != len(cs):
            raise ValueError(f"need {len(cs)} values, got {len(values)}")
        return cls(n, k, dict(zip(cs, values)))

    @classmethod
    def zeros(cls, n: int, k: int) -> "ParamVector":
        return cls.from_values(n, k, [0j] * n_params(n))

    @classmethod
    def variables_of(cls, n: int, k: int) -> list[VarId]:
        return [VarId.param(r, c, k) for r, c in coords(n, k)]

    @classmethod
    def symbolic_vector(cls, n: int, k: int) -> "ParamVector":
        return cls.from_values(n, k, [Poly.var(v) for v in cls.variables_of(n, k)])

    def values(self) -> list:
        return [self.entries[rc] for rc in coords(self.n, self.factor_index)]

    def to_array(self) -> np.ndarray:
        return np.array([complex(v) for v in self.values()], dtype=np.complex128)

    def with_index(self, k: int) -> "ParamVector":
        if k % 2 != self.factor_index % 2:
            raise ValueError("re-indexing must preserve parity")
        return ParamVector(self.n, k, dict(self.entries))


def build_factor(Z: ParamVector):
    """The unit-diagonal triangular matrix of ``Z``.

    Symbolic vectors give a nested list of Polys, numeric ones an ndarray.
    """
    if Z.symbolic:
        return _entry_rows(ParamVector(Z.n, Z.factor_index,
                                       {rc: Poly.coerce(v) for rc, v in Z.entries.items()}),
                           Poly.const(1), Poly.const(0))
    return np.array(_entry_rows(Z, 1, 0), dtype=np.complex128)


def inverse_params(Z: ParamVector) -> ParamVector:
    """Parameters of ``build_factor(Z)^-1`` by back-substitution.

    Works in any ring; exact for Poly or ExactComplex entries.
    """
    n = Z.n
    e = Z.entries
    out: dict = {}
    if Z.lower:
        # X[i][j] = -L[i][j] - sum_{j<q<i} L[i][q] X[q][j]
        for j in range(1, n):
            for i in range(j + 1, n + 1):
                s = -e[(i, j)]
                for q in range(j + 1, i):
                    s = s - e[(i, q)] * out[(q, j)]
                out[(i, j)] = s
    else:
        # X[i][j] = -U[i][j] - sum_{i<q<j} X[i][q] U[q][j]
        for i in range(n - 1, 0, -1):
            for j in range(i + 1, n + 1):
                s = -e[(i, j)]
                for q in range(i + 1, j):
                    s = s - out[(i, q)] * e[(q, j)]
                out[(i, j)] = s
    return ParamVector(n, Z.factor_index, out)


@dataclass(frozen=True)
class ComplexMatrix:
    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=np.complex128)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"square matrix required, got shape {a.shape}")
        object.__setattr__(self, "entries", a)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def det(self) -> complex:
        return complex(np.linalg.det(self.entries))

    def is_special(self, tol: float = 1e-10) -> bool:
        return abs(self.det() - 1) <= tol

    def last_row(self) -> np.ndarray:
        return self.entries[-1].copy()

    def __matmul__(self, other):
        return ComplexMatrix(self.entries @ np.asarray(getattr(other, "entries", other)))

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


@dataclass(frozen=True)
class FactorChain:
    n: int
    factors: tuple
    orientation: str = INVERSE

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if self.orientation not in (DIRECT, INVERSE):
            raise ValueError(f"orientation must be 'direct' or 'inverse', got {self.orientation!r}")
        for k, Z in enumerate(self.factors, start=1):
            if Z.factor_index != k or Z.n != self.n:
                raise ValueError("factor indices must run 1..K with matching n")

    @property
    def K(self) -> int:
        return len(self.factors)

    @property
    def symbolic(self) -> bool:
        return any(Z.symbolic for Z in self.factors)

    @classmethod
    def from_array(cls, n: int, values, orientation: str = INVERSE) -> "FactorChain":
        m = n_params(n)
        arr = np.asarray(values, dtype=np.complex128)
        if m == 0:
            K = arr.shape[0] if arr.ndim == 2 else 0
            arr = arr.reshape(K, 0)
        else:
            arr = arr.reshape(-1, m)
        return cls(n, tuple(ParamVector.from_values(n, k + 1, list(arr[k]))
                            for k in range(arr.shape[0])), orientation)

    @classmethod
    def symbolic_chain(cls, n: int, K: int, orientation: str = INVERSE) -> "FactorChain":
        return cls(n, tuple(ParamVector.symbolic_vector(n, k) for k in range(1, K + 1)),
                   orientation)

    @classmethod
    def zeros(cls, n: int, K: int, orientation: str = INVERSE) -> "FactorChain":
        return cls.from_array(n, np.zeros((K, n_params(n))), orientation)

    def variables(self) -> list[VarId]:
        return [v for k in range(1, self.K + 1) for v in ParamVector.variables_of(self.n, k)]

    def to_array(self) -> np.ndarray:
        return np.array([Z.to_array() for Z in self.factors],
                        dtype=np.complex128).reshape(self.K, n_params(self.n))

    def flat(self) -> np.ndarray:
        return self.to_array().ravel()

    def to_orientation(self, orientation: str) -> "FactorChain":
        if orientation == self.orientation:
            return self
        return FactorChain(self.n, tuple(inverse_params(Z) for Z in self.factors), orientation)

    def at(self, point) -> "FactorChain":
        """Numeric chain with this shape, taking values from ``point``."""
        if isinstance(point, Mapping):
            vals = [point[v] for v in self.variables()]
            return FactorChain.from_array(self.n, np.array(vals, dtype=np.complex128)
                                          .reshape(self.K, -1), self.orientation)
        return FactorChain.from_array(self.n, np.asarray(point).reshape(self.K, -1),
                                      self.orientation)


def _matmul(A, B):
    n = len(A)
    return [[sum((A[i][q] * B[q][j] for q in range(1, n)), A[i][0] * B[0][j])
             for j in range(n)] for i in range(n)]


def _entry_rows(Z: ParamVector, one, zero):
    M = [[one if i == j else zero for j in range(Z.n)] for i in range(Z.n)]
    for (r, c), v in Z.entries.items():
        M[r - 1][c - 1] = v
    return M


def ring_product(chain: FactorChain, one=1, zero=0):
    """Product of the chain in whatever ring its entries live in.

    Returns a nested list. With Poly or ExactComplex entries the result is
    exact; inverse orientation inverts factors with :func:`inverse_params`.
    """
    facs = chain.factors
    if chain.orientation == INVERSE:
        facs = [inverse_params(Z) for Z in facs]
    if chain.symbolic:
        one, zero = Poly.const(1), Poly.const(0)
    n = chain.n
    P = [[one if i == j else zero for j in range(n)] for i in range(n)]
    for Z in facs:
        P = _matmul(P, _entry_rows(Z, one, zero))
    return P


def psi_eval(chain: FactorChain, point=None):
    """Ordered product of the chain's factors (inverted in inverse orientation).

    Symbolic chains without a point return a nested list of Polys; numeric
    evaluation returns a :class:`ComplexMatrix`.
    """
    if point is not None:
        chain = chain.at(point)
    if chain.symbolic:
        return ring_product(chain)
    n = chain.n
    if chain.K == 0:
        return ComplexMatrix(np.eye(n))
    rows, cols = kernels.coord_tables(n)
    P = kernels.chain_product(chain.to_array()[None], rows, cols, n,
                              chain.orientation == INVERSE)
    return ComplexMatrix(P[0])


def phi_eval(chain: FactorChain, point=None):
    """Last row of :func:`psi_eval` (the map Phi_K)."""
    if chain.orientation != INVERSE:
        raise ValueError("phi_eval expects an inverse-orientation chain")
    P = psi_eval(chain, point)
    if isinstance(P, ComplexMatrix):
        return P.last_row()
    return list(P[-1])


def _as_batch(n, points):
    arr = np.asarray(points, dtype=np.complex128)
    m = n_params(n)
    if arr.ndim == 1:
        arr = arr[None]
    if arr.ndim == 2:
        arr = arr.reshape(arr.shape[0], -1, m)
    return np.ascontiguousarray(arr)


def phi_batch(n: int, points, orientation: str = INVERSE) -> np.ndarray:
    """Last rows for a batch of flat points, shape ``(B, n)``."""
    P = _as_batch(n, points)
    rows, cols = kernels.coord_tables(n)
    return kernels.chain_product(P, rows, cols, n, orientation == INVERSE)[:, -1, :]


def phi_jacobian_batch(n: int, points, orientation: str = INVERSE):
    """Last rows and their Jacobians by the product rule.

    Returns ``(phi, jac)`` with shapes ``(B, n)`` and ``(B, n, K*m)``.
    """
    P = _as_batch(n, points)
    rows, cols = kernels.coord_tables(n)
    return kernels.phi_jacobian(P, rows, cols, n, orientation == INVERSE)


def _is_zero(v, tol):
    if isinstance(v, Poly):
        return v.is_zero()
    return abs(complex(v)) <= tol


def constrained_coords(n: int, k: int) -> list:
    """Last-row entries of a lower factor, last-column entries of an upper one."""
    if k % 2 == 1:
        return [(n, c) for c in range(1, n)]
    return [(r, n) for r in range(1, n)]


def in_singular_set(params, K: int | None = None, tol: float = 0.0) -> bool:
    """Membership of a chain point in the non-submersion set S_K.

    ``params`` is a FactorChain or a sequence of ParamVectors; only factors
    ``1..K-1`` are constrained.
    """
    facs = params.factors if isinstance(params, FactorChain) else tuple(params)
    K = len(facs) if K is None else K
    if K < 2:
        raise ValueError("S_K is defined for K >= 2")
    for Z in facs[:K - 1]:
        if not all(_is_zero(Z.entries[rc], tol) for rc in constrained_coords(Z.n, Z.factor_index)):
            return False
    return True


def pad_factors(chain: FactorChain) -> FactorChain:
    """Append (e_last, 0, -e_last) so the product is unchanged and the point leaves S_K."""
    if chain.orientation != INVERSE:
        raise ValueError("padding is defined for inverse-orientation chains")
    n, K = chain.n, chain.K
    sym = chain.symbolic
    zero = Poly.const(0) if sym else 0j
    m = n_params(n)
    new = list(chain.factors)
    for step, last in enumerate((1, 0, -1), start=1):
        vals = [zero] * m
        if m:
            vals[-1] = Poly.const(last) if sym else complex(last)
        new.append(ParamVector.from_values(n, K + step, vals))
    return FactorChain(n, tuple(new), INVERSE)
