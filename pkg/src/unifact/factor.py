"""Constructive factorizations into unipotent triangular matrices.

* :func:`preimage_last_row` builds a 3-factor chain whose last row is a
  prescribed nonzero vector.
* :func:`peel_last_row` uses such a chain to reduce an SL_n matrix to an
  SL_{n-1} core.
* :func:`factor_constant` runs that reduction recursively.
* :func:`factor_sl2_poly` factors SL_2 over C[z] by Euclidean reduction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .polyring import ExactComplex, Poly, VarId
from .unipotent import (DIRECT, INVERSE, ComplexMatrix, FactorChain, ParamVector,
                        coords, n_params, psi_eval)

__all__ = [
    "DomainError",
    "LastRowMismatch",
    "ElementaryFactor",
    "PolyMatrix2",
    "PeelResult",
    "VerifyReport",
    "preimage_last_row",
    "peel_last_row",
    "factor_constant",
    "whitehead_diag",
    "factor_sl2_poly",
    "verify_factorization",
    "factors_to_chain",
    "cohn_matrix",
]


class DomainError(ValueError):
    """Input outside the domain of an operation (bad determinant, zero vector, ...)."""


class LastRowMismatch(DomainError):
    pass


# --------------------------------------------------------------------------
# elementary factors


@dataclass(frozen=True)
class ElementaryFactor:
    """Unit-diagonal triangular matrix given by its off-diagonal entries.

    ``entries`` maps 1-based ``(row, col)`` to a number or Poly; all entries
    lie below the diagonal for ``side == "lower"``, above it otherwise.
    """

    side: str
    n: int
    entries: Mapping

    def __post_init__(self):
        if self.side not in ("lower", "upper"):
            raise ValueError(f"side must be 'lower' or 'upper', got {self.side!r}")
        for r, c in self.entries:
            if (r > c) != (self.side == "lower") or r == c:
                raise ValueError(f"entry ({r}, {c}) does not fit a {self.side} factor")

    @classmethod
    def shear(cls, side: str, x) -> "ElementaryFactor":
        """2x2 shear: E21(x) for ``lower``, E12(x) for ``upper``."""
        return cls(side, 2, {(2, 1) if side == "lower" else (1, 2): x})

    @classmethod
    def from_param_vector(cls, Z: ParamVector) -> "ElementaryFactor":
        return cls(Z.parity, Z.n, dict(Z.entries))

    @property
    def payload(self):
        """The single entry for n = 2, else a ParamVector."""
        if self.n == 2:
            return next(iter(self.entries.values()), 0)
        return self.param_vector()

    def param_vector(self, k: int | None = None) -> ParamVector:
        k = k if k is not None else (1 if self.side == "lower" else 2)
        zero = Poly.const(0) if self.symbolic else 0j
        return ParamVector(self.n, k, {rc: self.entries.get(rc, zero) for rc in coords(self.n, k)})

    @property
    def symbolic(self) -> bool:
        return any(isinstance(v, Poly) for v in self.entries.values())

    def rows(self, one=1, zero=0) -> list:
        if self.symbolic:
            one, zero = Poly.const(1), Poly.const(0)
        M = [[one if i == j else zero for j in range(self.n)] for i in range(self.n)]
        for (r, c), v in self.entries.items():
            M[r - 1][c - 1] = v
        return M

    def matrix(self) -> np.ndarray:
        return np.array(self.rows(), dtype=np.complex128)

    def is_identity(self) -> bool:
        for v in self.entries.values():
            if isinstance(v, Poly):
                if not v.is_zero():
                    return False
            elif v != 0:
                return False
        return True

    def merged(self, other: "ElementaryFactor") -> "ElementaryFactor":
        """Product with a same-side factor (adds payloads when n = 2)."""
        if other.side != self.side or other.n != self.n:
            raise ValueError("only same-side factors of equal size merge")
        P = _matmul(self.rows(), other.rows())
        ent = {(r, c): P[r - 1][c - 1] for r in range(1, self.n + 1)
               for c in range(1, self.n + 1) if (r > c) == (self.side == "lower") and r != c}
        return ElementaryFactor(self.side, self.n, ent)

    def to_json(self) -> dict:
        from .jsonio import scalar_to_json

        return {"side": self.side, "n": self.n,
                "entries": [{"row": r, "col": c, **scalar_to_json(v)}
                            for (r, c), v in sorted(self.entries.items())]}

    @classmethod
    def from_json(cls, obj, n: int | None = None) -> "ElementaryFactor":
        from .jsonio import scalar_from_json

        ent = {(int(e["row"]), int(e["col"])): scalar_from_json(e) for e in obj["entries"]}
        if n is None:
            n = obj.get("n") or max([2] + [max(rc) for rc in ent])
        if any(isinstance(v, Poly) for v in ent.values()):
            ent = {rc: Poly.coerce(v) if isinstance(v, Poly) else _exact_const(v)
                   for rc, v in ent.items()}
        return cls(obj["side"], int(n), ent)


def _exact_const(z) -> Poly:
    from fractions import Fraction

    z = complex(z)
    return Poly.const(ExactComplex(Fraction(z.real), Fraction(z.imag)))


def _matmul(A, B):
    n = len(A)
    return [[sum((A[i][q] * B[q][j] for q in range(1, n)), A[i][0] * B[0][j])
             for j in range(n)] for i in range(n)]


def product_rows(factors: Sequence[ElementaryFactor], n: int, one=1, zero=0):
    """Exact/generic product of a factor list as a nested list."""
    if any(f.symbolic for f in factors):
        one, zero = Poly.const(1), Poly.const(0)
    P = [[one if i == j else zero for j in range(n)] for i in range(n)]
    for f in factors:
        P = _matmul(P, f.rows(one, zero))
    return P


def product_matrix(factors: Sequence[ElementaryFactor], n: int) -> np.ndarray:
    P = np.eye(n, dtype=np.complex128)
    for f in factors:
        P = P @ f.matrix()
    return P


def canonical(factors: Sequence[ElementaryFactor]) -> list[ElementaryFactor]:
    """Drop identity factors and merge adjacent same-side ones."""
    out: list[ElementaryFactor] = []
    for f in factors:
        if f.is_identity():
            continue
        if out and out[-1].side == f.side:
            g = out.pop().merged(f)
            if not g.is_identity():
                out.append(g)
        else:
            out.append(f)
    return out


def factors_to_chain(factors: Sequence[ElementaryFactor], n: int) -> FactorChain:
    """Direct-orientation chain for an alternating factor list (leading lower
    identity inserted when the list starts with an upper factor)."""
    facs = list(factors)
    vecs = []
    k = 1
    if facs and facs[0].side == "upper":
        vecs.append(ParamVector.zeros(n, 1) if not facs[0].symbolic else
                    ParamVector.from_values(n, 1, [Poly.const(0)] * n_params(n)))
        k = 2
    for f in facs:
        want = "lower" if k % 2 == 1 else "upper"
        if f.side != want:
            raise ValueError("factor sides must alternate")
        vecs.append(f.param_vector(k))
        k += 1
    return FactorChain(n, tuple(vecs), DIRECT)


def chain_to_factors(chain: FactorChain) -> list[ElementaryFactor]:
    chain = chain.to_orientation(DIRECT)
    return [ElementaryFactor.from_param_vector(Z) for Z in chain.factors]


# --------------------------------------------------------------------------
# last-row preimage and peel step


def _direct_vector(n, k, entries):
    vals = {rc: 0j for rc in coords(n, k)}
    vals.update(entries)
    return ParamVector(n, k, vals)


def preimage_last_row(b: Sequence[complex], branch_tol: float = 1e-12) -> FactorChain:
    """Three-factor inverse-orientation chain whose last row is ``b``.

    With ``b_1`` nonzero two factors suffice; otherwise the chain first hits
    ``(1, b_2, ..., b_n)`` and a third lower factor moves the first entry.
    ``|b_1| <= branch_tol * max|b|`` counts as zero.
    """
    b = np.asarray(b, dtype=np.complex128).ravel()
    n = b.size
    if n < 2:
        raise DomainError("need n >= 2")
    scale = np.max(np.abs(b))
    if scale == 0:
        raise DomainError("the last row of an invertible matrix cannot be zero")
    two_factor = abs(b[0]) > branch_tol * scale
    first = b[0] if two_factor else 1 + 0j
    x1 = {(n, 1): first}
    for k in range(2, n):
        x1[(n, k)] = b[k - 1]
    x2 = {(1, n): (b[n - 1] - 1) / first}
    x3 = {}
    if not two_factor:
        m = 1 + int(np.argmax(np.abs(b[1:])))  # 0-based index of the largest tail entry
        x3[(m + 1, 1)] = (b[0] - 1) / b[m]
    X = [_direct_vector(n, 1, x1), _direct_vector(n, 2, x2), _direct_vector(n, 3, x3)]
    return FactorChain(n, tuple(X), DIRECT).to_orientation(INVERSE)


@dataclass
class PeelResult:
    B: np.ndarray
    h: np.ndarray
    core: np.ndarray

    def to_json(self):
        from .jsonio import matrix_to_json, vector_to_json

        return {"B": matrix_to_json(self.B), "h": vector_to_json(self.h),
                "core": matrix_to_json(self.core)}


def peel_last_row(A, chain: FactorChain, tol: float = 1e-8) -> PeelResult:
    """``B = Psi(chain) A^-1`` has last row e_n; clear its last column.

    Returns B, the column ``h`` above B's corner, and the upper-left block
    of ``E(-h) B``, which lies in SL_{n-1}.
    """
    A = np.asarray(getattr(A, "entries", A), dtype=np.complex128)
    n = A.shape[0]
    if chain.orientation != INVERSE:
        chain = chain.to_orientation(INVERSE)
    Psi = psi_eval(chain).entries
    B = np.linalg.solve(A.T, Psi.T).T
    e_n = np.zeros(n)
    e_n[-1] = 1
    err = np.max(np.abs(B[-1] - e_n))
    if err > tol * max(1.0, np.max(np.abs(B))):
        raise LastRowMismatch(f"chain last row does not match the matrix (deviation {err:.3g})")
    B[-1] = e_n
    h = B[:-1, -1].copy()
    E = np.eye(n, dtype=np.complex128)
    E[:-1, -1] = -h
    core = (E @ B)[:-1, :-1]
    return PeelResult(B, h, core)


def _check_special(A: np.ndarray, tol: float):
    d = np.linalg.det(A)
    if abs(d - 1) > tol:
        raise DomainError(f"determinant is {complex(d):.6g}, expected 1")


def _upper_last_column(n, v) -> ElementaryFactor:
    return ElementaryFactor("upper", n, {(i + 1, n): complex(v[i]) for i in range(n - 1)})


def _embed(f: ElementaryFactor, n: int) -> ElementaryFactor:
    return ElementaryFactor(f.side, n, dict(f.entries))


def _factor_rec(A: np.ndarray) -> list[ElementaryFactor]:
    n = A.shape[0]
    if n == 1 or np.array_equal(A, np.eye(n)):
        return []
    chain = preimage_last_row(A[-1])
    peel = peel_last_row(A, chain)
    sub = [_embed(f, n) for f in _factor_rec(np.linalg.inv(peel.core))]
    direct = chain.to_orientation(DIRECT)
    tail = [ElementaryFactor.from_param_vector(Z) for Z in direct.factors]
    return sub + [_upper_last_column(n, -peel.h)] + tail


def factor_constant(A, det_tol: float = 1e-10) -> list[ElementaryFactor]:
    """Alternating unipotent factors whose product is ``A`` (det A = 1)."""
    A = np.asarray(getattr(A, "entries", A), dtype=np.complex128)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DomainError("square matrix required")
    _check_special(A, det_tol)
    return canonical(_factor_rec(A))


# --------------------------------------------------------------------------
# SL_2 over C[z]


def whitehead_diag(u) -> list[ElementaryFactor]:
    """Five shears with product diag(u, 1/u)."""
    if u == 0:
        raise DomainError("diag(u, 1/u) needs u != 0")
    return [ElementaryFactor.shear("upper", u),
            ElementaryFactor.shear("lower", -1 / u),
            ElementaryFactor.shear("upper", u - 1),
            ElementaryFactor.shear("lower", 1),
            ElementaryFactor.shear("upper", -1)]


@dataclass(frozen=True)
class PolyMatrix2:
    a: Poly
    b: Poly
    c: Poly
    d: Poly

    def __post_init__(self):
        for name in "abcd":
            object.__setattr__(self, name, Poly.coerce(getattr(self, name)))
        if self.a * self.d - self.b * self.c != Poly.const(1):
            raise DomainError("determinant of the polynomial matrix is not 1")

    @classmethod
    def from_rows(cls, rows) -> "PolyMatrix2":
        (a, b), (c, d) = rows
        return cls(a, b, c, d)

    def rows(self):
        return [[self.a, self.b], [self.c, self.d]]

    def variables(self) -> list[VarId]:
        vs = set()
        for p in (self.a, self.b, self.c, self.d):
            vs.update(p.variables())
        return sorted(vs, key=lambda v: v.sort_key)


def cohn_matrix() -> PolyMatrix2:
    z1, z2 = Poly.var(VarId.symbol("z1")), Poly.var(VarId.symbol("z2"))
    return PolyMatrix2(1 - z1 * z2, z1 * z1, -(z2 * z2), 1 + z1 * z2)


def _dense(p: Poly, z: VarId) -> list:
    """Coefficients, lowest degree first, of a univariate Poly."""
    out = [ExactComplex(0)] * (p.degree() + 1) if not p.is_zero() else []
    for mono, c in p.items():
        e = mono[0][1] if mono else 0
        if mono and mono[0][0] != z:
            raise DomainError("polynomial is not univariate")
        out[e] = c
    return out


def _poly(coeffs: list, z: VarId) -> Poly:
    return Poly({((z, e),) if e else (): c for e, c in enumerate(coeffs)})


def _divmod(a: Poly, c: Poly, z: VarId) -> tuple[Poly, Poly]:
    num, den = _dense(a, z), _dense(c, z)
    if not den:
        raise ZeroDivisionError("division by the zero polynomial")
    q = [ExactComplex(0)] * max(len(num) - len(den) + 1, 0)
    lead_inv = den[-1].inverse()
    num = list(num)
    while len(num) >= len(den) and num:
        shift = len(num) - len(den)
        coef = num[-1] * lead_inv
        q[shift] = coef
        for i, dc in enumerate(den):
            num[shift + i] = num[shift + i] - coef * dc
        num.pop()
        while num and not num[-1]:
            num.pop()
    return _poly(q, z), _poly(num, z)


def factor_sl2_poly(A: PolyMatrix2) -> list[ElementaryFactor]:
    """Exact unipotent factorization of an SL_2(C[z]) matrix."""
    vs = A.variables()
    if len(vs) > 1:
        raise DomainError("only univariate polynomial matrices factor by Euclidean reduction")
    z = vs[0] if vs else VarId.symbol("z")
    a, b, c, d = A.a, A.b, A.c, A.d
    steps: list[ElementaryFactor] = []   # left multipliers, in order of application
    while not c.is_zero():
        if c.is_constant():
            # a <- 1 with E12(x), then c <- 0 with E21(-c)
            x = (Poly.const(1) - a) * Poly.const(c.constant_value().inverse())
            a, b = a + x * c, b + x * d
            steps.append(ElementaryFactor.shear("upper", x))
            steps.append(ElementaryFactor.shear("lower", -c))
            c, d = Poly.const(0), d - c * b
        elif a.degree() <= c.degree():
            q, r = _divmod(c, a, z)
            c, d = r, d - q * b
            steps.append(ElementaryFactor.shear("lower", -q))
        else:
            q, r = _divmod(a, c, z)
            a, b = r, b - q * d
            steps.append(ElementaryFactor.shear("upper", -q))
    if not a.is_constant():
        raise AssertionError("reduction ended with a non-unit corner")
    u = a.constant_value()
    inv = [ElementaryFactor(f.side, 2, {rc: -v for rc, v in f.entries.items()}) for f in steps]
    tail = [ElementaryFactor.shear("upper", b * Poly.const(u))]
    if u != 1:
        tail += [ElementaryFactor.shear(f.side, Poly.const(ExactComplex.coerce(f.payload)))
                 for f in whitehead_diag(u)]
    return canonical(inv + tail)


# --------------------------------------------------------------------------
# verification


@dataclass
class VerifyReport:
    match: bool
    K: int
    mode: str
    error: float | None = None
    mismatches: list | None = None

    def to_json(self) -> dict:
        out = {"match": self.match, "K": self.K, "mode": self.mode}
        if self.error is not None:
            out["error"] = self.error
        if self.mismatches:
            out["mismatches"] = self.mismatches
        return out


def verify_factorization(target, factors, mode: str = "tol", tol: float = 1e-10) -> VerifyReport:
    """Multiply out ``factors`` and compare with ``target``.

    ``mode="exact"`` compares entries structurally (Poly/ExactComplex);
    ``mode="tol"`` uses the relative Frobenius distance.
    """
    if isinstance(factors, FactorChain):
        factors = chain_to_factors(factors)
    factors = list(factors)
    if isinstance(target, PolyMatrix2):
        target = target.rows()
    if isinstance(target, ComplexMatrix):
        target = target.entries
    n = len(target)
    K = len(factors)
    if mode == "exact":
        T = [[Poly.coerce(x) for x in row] for row in target]
        P = product_rows(factors, n, Poly.const(1), Poly.const(0))
        P = [[Poly.coerce(x) for x in row] for row in P]
        bad = [[i + 1, j + 1] for i in range(n) for j in range(n) if P[i][j] != T[i][j]]
        return VerifyReport(not bad, K, mode, mismatches=bad)
    if mode != "tol":
        raise ValueError(f"unknown mode {mode!r}")
    T = np.asarray(target, dtype=np.complex128)
    P = product_matrix(factors, n)
    err = float(np.linalg.norm(P - T) / max(np.linalg.norm(T), np.finfo(float).tiny))
    return VerifyReport(err <= tol, K, mode, error=err)
