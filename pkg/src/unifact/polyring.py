"""Exact sparse multivariate polynomials over Gaussian rationals.

Coefficients are :class:`ExactComplex` values (rational real and imaginary
parts). Variables are :class:`VarId` tags: either the off-diagonal parameter
``z_{row col, factor}`` of a unipotent factor, or a named free symbol.
"""

from __future__ import annotations

import numbers
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

import numpy as np

__all__ = [
    "ExactComplex",
    "VarId",
    "Poly",
    "CompiledPoly",
    "MissingVariableError",
    "mul",
    "partial_derivative",
    "evaluate",
    "is_multilinear",
]


def _rational(x) -> Fraction | int:
    """Normalize to int when integral, Fraction otherwise."""
    if isinstance(x, bool):
        return int(x)
    if isinstance(x, int):
        return x
    if isinstance(x, Fraction):
        return x.numerator if x.denominator == 1 else x
    if isinstance(x, str):
        x = Fraction(x.strip().replace("−", "-"))
        return x.numerator if x.denominator == 1 else x
    if isinstance(x, numbers.Rational):
        return _rational(Fraction(x.numerator, x.denominator))
    if isinstance(x, float):
        return _rational(Fraction(x))
    raise TypeError(f"cannot convert {x!r} to an exact rational")


class ExactComplex:
    """Complex number with exact rational parts.

    Parts are kept as ``int`` when integral so that the common case of
    integer coefficients stays on Python's fast integer path.
    """

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        self.re = _rational(re)
        self.im = _rational(im)

    @classmethod
    def coerce(cls, x) -> "ExactComplex":
        if isinstance(x, ExactComplex):
            return x
        if isinstance(x, complex):
            return cls(x.real, x.imag)
        return cls(x, 0)

    def __add__(self, other):
        o = ExactComplex.coerce(other)
        return ExactComplex(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __sub__(self, other):
        o = ExactComplex.coerce(other)
        return ExactComplex(self.re - o.re, self.im - o.im)

    def __rsub__(self, other):
        return ExactComplex.coerce(other) - self

    def __neg__(self):
        return ExactComplex(-self.re, -self.im)

    def __mul__(self, other):
        o = ExactComplex.coerce(other)
        if self.im == 0 and o.im == 0:
            return ExactComplex(self.re * o.re, 0)
        return ExactComplex(self.re * o.re - self.im * o.im,
                            self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def conjugate(self):
        return ExactComplex(self.re, -self.im)

    def norm2(self):
        return self.re * self.re + self.im * self.im

    def inverse(self) -> "ExactComplex":
        d = self.norm2()
        if d == 0:
            raise ZeroDivisionError("inverse of exact zero")
        return ExactComplex(Fraction(self.re) / d, Fraction(-self.im) / d)

    def __truediv__(self, other):
        return self * ExactComplex.coerce(other).inverse()

    def __rtruediv__(self, other):
        return ExactComplex.coerce(other) * self.inverse()

    def __eq__(self, other):
        if isinstance(other, (ExactComplex, numbers.Number)):
            o = ExactComplex.coerce(other)
            return self.re == o.re and self.im == o.im
        return NotImplemented

    def __hash__(self):
        return hash((self.re, self.im))

    def __bool__(self):
        return self.re != 0 or self.im != 0

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def __repr__(self):
        if self.im == 0:
            return f"ExactComplex({self.re})"
        return f"ExactComplex({self.re}, {self.im})"

    def __str__(self):
        if self.im == 0:
            return str(self.re)
        if self.re == 0:
            return f"{self.im}*I"
        return f"({self.re} + {self.im}*I)"


ZERO = ExactComplex(0)
ONE = ExactComplex(1)


@dataclass(frozen=True, eq=True)
class VarId:
    """A polynomial variable.

    ``kind`` is ``"param"`` for the entry ``z_{row col, factor}`` of a
    unipotent factor, ``"symbol"`` for a free symbol identified by ``name``.
    """

    kind: str
    row: int = 0
    col: int = 0
    factor: int = 0
    name: str = ""
    sort_key: tuple = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if self.kind == "param":
            if self.factor < 1:
                raise ValueError("parameter variables need factor >= 1")
            if self.row == self.col or self.row < 1 or self.col < 1:
                raise ValueError(f"bad off-diagonal position ({self.row}, {self.col})")
            if (self.factor % 2 == 1) != (self.row > self.col):
                raise ValueError(
                    f"z_{self.row}{self.col},{self.factor}: odd factors are lower, even upper")
        elif self.kind == "symbol":
            if not self.name:
                raise ValueError("free symbols need a name")
        else:
            raise ValueError(f"unknown variable kind {self.kind!r}")
        object.__setattr__(self, "sort_key", (self.factor, self.row, self.col, self.name))

    @classmethod
    def param(cls, row: int, col: int, factor: int) -> "VarId":
        return cls("param", row, col, factor)

    @classmethod
    def symbol(cls, name: str) -> "VarId":
        return cls("symbol", name=name)

    def __lt__(self, other):
        return self.sort_key < other.sort_key

    def __str__(self):
        if self.kind == "symbol":
            return self.name
        return f"z{self.row}{self.col}_{self.factor}"

    def to_json(self) -> dict:
        if self.kind == "symbol":
            return {"name": self.name}
        return {"k": self.factor, "row": self.row, "col": self.col}

    @classmethod
    def from_json(cls, obj: Mapping) -> "VarId":
        if "name" in obj:
            return cls.symbol(obj["name"])
        return cls.param(int(obj["row"]), int(obj["col"]), int(obj["k"]))


def _key(v: VarId):
    return v.sort_key


def _mono_mul(m1: tuple, m2: tuple) -> tuple:
    if not m1:
        return m2
    if not m2:
        return m1
    d = dict(m1)
    for v, e in m2:
        d[v] = d.get(v, 0) + e
    return tuple(sorted(d.items(), key=lambda ve: ve[0].sort_key))


class MissingVariableError(KeyError):
    """Raised when an evaluation point does not cover every variable."""

    def __init__(self, missing):
        self.missing = sorted(missing, key=_key)
        super().__init__("missing values for: " + ", ".join(map(str, self.missing)))


class TermBudgetExceeded(RuntimeError):
    pass


class Poly:
    """Immutable sparse polynomial.

    ``terms`` maps a monomial, a tuple of ``(VarId, exponent)`` pairs sorted
    by variable, to a nonzero :class:`ExactComplex` coefficient.
    """

    __slots__ = ("_terms", "_hash")

    def __init__(self, terms: Mapping | None = None):
        acc: dict = {}
        if terms:
            for mono, c in terms.items():
                key = tuple(sorted(mono, key=lambda ve: ve[0].sort_key))
                acc[key] = acc.get(key, ZERO) + ExactComplex.coerce(c)
        self._terms = {m: c for m, c in acc.items() if c}
        self._hash = None

    @classmethod
    def _raw(cls, terms: dict) -> "Poly":
        p = cls.__new__(cls)
        p._terms = terms
        p._hash = None
        return p

    @classmethod
    def const(cls, c) -> "Poly":
        c = ExactComplex.coerce(c)
        return cls._raw({(): c} if c else {})

    @classmethod
    def var(cls, v: VarId) -> "Poly":
        return cls._raw({((v, 1),): ONE})

    @classmethod
    def coerce(cls, x) -> "Poly":
        if isinstance(x, Poly):
            return x
        if isinstance(x, VarId):
            return cls.var(x)
        return cls.const(x)

    @property
    def terms(self) -> dict:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def __len__(self):
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def is_constant(self) -> bool:
        return all(not m for m in self._terms)

    def constant_value(self) -> ExactComplex:
        if not self.is_constant():
            raise ValueError("polynomial is not constant")
        return self._terms.get((), ZERO)

    def variables(self) -> list[VarId]:
        vs = {v for m in self._terms for v, _ in m}
        return sorted(vs, key=_key)

    def degree(self, v: VarId | None = None) -> int:
        if not self._terms:
            return -1
        if v is None:
            return max(sum(e for _, e in m) for m in self._terms)
        return max((e for m in self._terms for w, e in m if w == v), default=0)

    # arithmetic -----------------------------------------------------------

    def __add__(self, other):
        o = Poly.coerce(other)
        out = dict(self._terms)
        for m, c in o._terms.items():
            s = out.get(m)
            s = c if s is None else s + c
            if s:
                out[m] = s
            else:
                out.pop(m, None)
        return Poly._raw(out)

    __radd__ = __add__

    def __neg__(self):
        return Poly._raw({m: -c for m, c in self._terms.items()})

    def __sub__(self, other):
        return self + (-Poly.coerce(other))

    def __rsub__(self, other):
        return Poly.coerce(other) - self

    def __mul__(self, other):
        o = Poly.coerce(other)
        if not self._terms or not o._terms:
            return Poly._raw({})
        out: dict = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in o._terms.items():
                m = _mono_mul(m1, m2)
                s = out.get(m)
                out[m] = c1 * c2 if s is None else s + c1 * c2
        return Poly._raw({m: c for m, c in out.items() if c})

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative powers are not polynomials")
        out = Poly.const(1)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def __eq__(self, other):
        if isinstance(other, (Poly, VarId, ExactComplex, numbers.Number)):
            return self._terms == Poly.coerce(other)._terms
        return NotImplemented

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self._terms.items()))
        return self._hash

    # calculus and substitution ---------------------------------------------

    def diff(self, v: VarId) -> "Poly":
        out = {}
        for m, c in self._terms.items():
            for idx, (w, e) in enumerate(m):
                if w == v:
                    rest = m[:idx] + (((w, e - 1),) if e > 1 else ()) + m[idx + 1:]
                    s = out.get(rest)
                    t = c * e
                    out[rest] = t if s is None else s + t
                    break
        return Poly._raw({m: c for m, c in out.items() if c})

    def subs(self, values: Mapping[VarId, object]) -> "Poly":
        """Substitute Polys or exact constants for some variables."""
        vals = {v: Poly.coerce(x) for v, x in values.items()}
        out = Poly._raw({})
        for m, c in self._terms.items():
            keep = []
            acc = Poly.const(c)
            for v, e in m:
                if v in vals:
                    acc = acc * (vals[v] ** e)
                else:
                    keep.append((v, e))
            if keep:
                acc = acc * Poly._raw({tuple(keep): ONE})
            out = out + acc
        return out

    def evaluate(self, assignment: Mapping[VarId, complex]) -> complex:
        missing = {v for v in self.variables() if v not in assignment}
        if missing:
            raise MissingVariableError(missing)
        # nested by leading variable (Horner in the multilinear case)
        return _horner(sorted(self._terms.items(), key=lambda mc: [v.sort_key for v, _ in mc[0]]),
                       assignment)

    def is_multilinear(self) -> tuple[bool, list[VarId]]:
        bad = {v for m in self._terms for v, e in m if e > 1}
        return (not bad, sorted(bad, key=_key))

    def compile(self, variables: Iterable[VarId]) -> "CompiledPoly":
        return CompiledPoly.from_poly(self, list(variables))

    # display / serialization ----------------------------------------------

    def sorted_terms(self):
        return sorted(self._terms.items(),
                      key=lambda mc: [(v.sort_key, e) for v, e in mc[0]])

    def __repr__(self):
        return f"Poly({self})"

    def __str__(self):
        if not self._terms:
            return "0"
        parts = []
        for m, c in self.sorted_terms():
            mono = "*".join(str(v) if e == 1 else f"{v}^{e}" for v, e in m)
            if not mono:
                parts.append(str(c))
            elif c == ONE:
                parts.append(mono)
            elif c == -ONE:
                parts.append("-" + mono)
            else:
                parts.append(f"{c}*{mono}")
        return " + ".join(parts)

    def to_json(self) -> dict:
        return {"terms": [
            {"mono": [{"var": v.to_json(), "exp": e} for v, e in m],
             "re": str(c.re), "im": str(c.im)}
            for m, c in self.sorted_terms()]}

    @classmethod
    def from_json(cls, obj: Mapping) -> "Poly":
        terms = {}
        for t in obj["terms"]:
            mono = tuple((VarId.from_json(x["var"]), int(x["exp"])) for x in t["mono"])
            if any(e <= 0 for _, e in mono):
                raise ValueError("exponents must be positive")
            c = ExactComplex(t.get("re", "0"), t.get("im", "0"))
            key = tuple(sorted(mono, key=lambda ve: ve[0].sort_key))
            terms[key] = terms.get(key, ZERO) + c
        return cls(terms)


def _horner(items, assignment) -> complex:
    # items: (mono, coeff) sorted so that monomials sharing a leading
    # variable are adjacent; factor that variable out and recurse.
    total = 0j
    i = 0
    n = len(items)
    while i < n:
        mono, c = items[i]
        if not mono:
            total += complex(c)
            i += 1
            continue
        v, e = mono[0]
        j = i
        group = []
        while j < n and items[j][0] and items[j][0][0] == (v, e):
            group.append((items[j][0][1:], items[j][1]))
            j += 1
        total += complex(assignment[v]) ** e * _horner(group, assignment)
        i = j
    return total


def mul(a: Poly, b: Poly) -> Poly:
    return Poly.coerce(a) * Poly.coerce(b)


def partial_derivative(p: Poly, v: VarId) -> Poly:
    return p.diff(v)


def evaluate(p: Poly, assignment: Mapping[VarId, complex]) -> complex:
    return p.evaluate(assignment)


def is_multilinear(p: Poly) -> tuple[bool, list[VarId]]:
    return p.is_multilinear()


@dataclass(frozen=True)
class CompiledPoly:
    """Floating-point image of a Poly for batched evaluation.

    ``idx[t]`` lists the variable positions of monomial ``t`` (repeated by
    exponent), padded with -1.
    """

    variables: tuple
    coef: np.ndarray
    idx: np.ndarray

    @classmethod
    def from_poly(cls, p: Poly, variables: list[VarId]) -> "CompiledPoly":
        pos = {v: i for i, v in enumerate(variables)}
        missing = [v for v in p.variables() if v not in pos]
        if missing:
            raise MissingVariableError(missing)
        items = p.sorted_terms()
        width = max((sum(e for _, e in m) for m, _ in items), default=0)
        idx = np.full((max(len(items), 1), max(width, 1)), -1, dtype=np.int64)
        coef = np.zeros(max(len(items), 1), dtype=np.complex128)
        for t, (m, c) in enumerate(items):
            coef[t] = complex(c)
            k = 0
            for v, e in m:
                for _ in range(e):
                    idx[t, k] = pos[v]
                    k += 1
        return cls(tuple(variables), coef, idx)

    def __call__(self, points) -> np.ndarray:
        from .kernels import eval_poly_batch

        pts = np.atleast_2d(np.asarray(points, dtype=np.complex128))
        return eval_poly_batch(self.coef, self.idx, pts)
