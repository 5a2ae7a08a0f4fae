"""JSON encoding for numbers, matrices, chains and polynomials.

Complex numbers are always written as ``{"re": .., "im": ..}``. On input a
plain number, a ``[re, im]`` pair or that object are all accepted.

* matrix: ``{"n": 2, "rows": [[z, z], [z, z]]}`` (a bare list of rows is read too)
* chain: ``{"n", "orientation", "factors": [{"k", "entries": [{"row", "col", "re", "im"}]}]}``
* factor entries holding a polynomial carry ``"poly"`` instead of ``re``/``im``;
  exact constants add ``"exact": {"re": "p/q", "im": "p/q"}``.
"""

from __future__ import annotations

import ast
import json
from fractions import Fraction
from typing import Any

import numpy as np

from .polyring import ExactComplex, Poly, VarId
from .unipotent import INVERSE, FactorChain, ParamVector, coords

__all__ = [
    "complex_to_json",
    "complex_from_json",
    "scalar_to_json",
    "scalar_from_json",
    "vector_to_json",
    "vector_from_json",
    "matrix_to_json",
    "matrix_from_json",
    "chain_to_json",
    "chain_from_json",
    "parse_poly",
    "poly_matrix_from_json",
    "dumps",
]


def _clean(x: float) -> float:
    x = float(x)
    return 0.0 if x == 0 else x


def complex_to_json(z) -> dict:
    z = complex(z)
    return {"re": _clean(z.real), "im": _clean(z.imag)}


def complex_from_json(obj) -> complex:
    if isinstance(obj, bool):
        raise TypeError("booleans are not numbers")
    if isinstance(obj, (int, float)):
        return complex(obj)
    if isinstance(obj, (list, tuple)) and len(obj) == 2:
        return complex(float(obj[0]), float(obj[1]))
    if isinstance(obj, dict) and "re" in obj:
        return complex(float(obj["re"]), float(obj.get("im", 0.0)))
    raise ValueError(f"cannot read a complex number from {obj!r}")


def scalar_to_json(v) -> dict:
    """Flat ``{"re", "im"}`` for numbers, ``{"poly": ...}`` for non-constant Polys."""
    if isinstance(v, Poly):
        if not v.is_constant():
            return {"poly": v.to_json(), "text": str(v)}
        v = v.constant_value()
    if isinstance(v, ExactComplex):
        return {**complex_to_json(v), "exact": {"re": str(v.re), "im": str(v.im)}}
    return complex_to_json(v)


def scalar_from_json(obj):
    """Inverse of :func:`scalar_to_json`; exact and polynomial entries come back as Poly."""
    if "poly" in obj:
        p = obj["poly"]
        return parse_poly(p) if isinstance(p, str) else Poly.from_json(p)
    if "exact" in obj:
        return Poly.const(ExactComplex(obj["exact"]["re"], obj["exact"].get("im", "0")))
    if "value" in obj:
        v = obj["value"]
        return parse_poly(v) if isinstance(v, str) else complex_from_json(v)
    return complex_from_json(obj)


def vector_to_json(v) -> list:
    return [complex_to_json(z) for z in np.asarray(v).ravel()]


def vector_from_json(obj) -> np.ndarray:
    if not isinstance(obj, (list, tuple)):
        raise ValueError("a vector must be a JSON list")
    return np.array([complex_from_json(z) for z in obj], dtype=np.complex128).reshape(len(obj))


def matrix_to_json(A) -> dict:
    A = np.asarray(getattr(A, "entries", A))
    return {"n": int(A.shape[0]), "rows": [vector_to_json(row) for row in A]}


def matrix_from_json(obj) -> np.ndarray:
    rows = obj["rows"] if isinstance(obj, dict) else obj
    if not isinstance(rows, list):
        raise ValueError("matrix rows must be a list")
    rows = [vector_from_json(r) for r in rows]
    if not rows or any(len(r) != len(rows) for r in rows):
        raise ValueError("matrix must be square and nonempty")
    if isinstance(obj, dict) and "n" in obj and obj["n"] != len(rows):
        raise ValueError("matrix size does not match 'n'")
    return np.array(rows)


def chain_to_json(chain: FactorChain) -> dict:
    out = {"n": chain.n, "K": chain.K, "orientation": chain.orientation, "factors": []}
    for Z in chain.factors:
        entries = [{"row": r, "col": c, **scalar_to_json(v)}
                   for (r, c), v in sorted(Z.entries.items())]
        out["factors"].append({"k": Z.factor_index, "side": Z.parity, "entries": entries})
    return out


def chain_from_json(obj, n: int | None = None, orientation: str | None = None) -> FactorChain:
    """Read a chain from its object form or from a flat list of K*m values."""
    if isinstance(obj, dict):
        n = int(obj["n"])
        facs = []
        for f in obj["factors"]:
            k = int(f["k"])
            vals = {rc: 0j for rc in coords(n, k)}
            for e in f["entries"]:
                vals[(int(e["row"]), int(e["col"]))] = scalar_from_json(e)
            facs.append(ParamVector(n, k, vals))
        symbolic = any(isinstance(v, Poly) and not v.is_constant()
                       for Z in facs for v in Z.entries.values())
        facs = [ParamVector(n, Z.factor_index, {rc: _entry(v, symbolic) for rc, v in Z.entries.items()})
                for Z in facs]
        return FactorChain(n, tuple(facs), orientation or obj.get("orientation", INVERSE))
    if n is None:
        raise ValueError("a flat parameter list needs n")
    return FactorChain.from_array(n, vector_from_json(obj), orientation or INVERSE)


def _entry(v, symbolic: bool):
    """Chains are all-numeric unless some entry is a genuine polynomial."""
    if symbolic:
        return v if isinstance(v, Poly) else Poly.const(_exact(v))
    return complex(v.constant_value()) if isinstance(v, Poly) else complex(v)


def _exact(z: complex) -> ExactComplex:
    return ExactComplex(Fraction(z.real).limit_denominator(10**12),
                        Fraction(z.imag).limit_denominator(10**12))


def _poly_from_json(obj) -> Poly:
    if isinstance(obj, dict) and "terms" in obj:
        return Poly.from_json(obj)
    if isinstance(obj, str):
        return parse_poly(obj)
    return Poly.const(_exact(complex_from_json(obj)))


def parse_poly(text: str) -> Poly:
    """Parse a small polynomial expression such as ``"1 - z1*z2"`` or ``"z^2 + 3/2"``.

    Identifiers become symbol variables. Supports ``+ - * / ^ **`` and
    parentheses; division only by numeric literals, exponents only as
    nonnegative integer literals. ``j`` suffixes give imaginary constants.
    """
    tree = ast.parse(text.replace("^", "**").replace("−", "-"), mode="eval")

    def const(node):
        p = walk(node)
        if not p.is_constant():
            raise ValueError("division by a non-constant")
        return p.constant_value()

    def walk(node):
        if isinstance(node, ast.Expression):
            return walk(node.body)
        if isinstance(node, ast.Constant) and type(node.value) in (int, float, complex):
            v = node.value
            if isinstance(v, complex):
                return Poly.const(ExactComplex(Fraction(v.real), Fraction(v.imag)))
            return Poly.const(Fraction(v) if isinstance(v, float) else v)
        if isinstance(node, ast.Name):
            return Poly.var(VarId.symbol(node.id))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            p = walk(node.operand)
            return -p if isinstance(node.op, ast.USub) else p
        if isinstance(node, ast.BinOp):
            left = walk(node.left)
            if isinstance(node.op, ast.Pow):
                r = node.right
                if not (isinstance(r, ast.Constant) and type(r.value) is int and r.value >= 0):
                    raise ValueError("exponents must be nonnegative integer literals")
                return left ** r.value
            if isinstance(node.op, ast.Div):
                c = const(node.right)
                if not c:
                    raise ZeroDivisionError("division by zero")
                return left * Poly.const(c.inverse())
            right = walk(node.right)
            if isinstance(node.op, ast.Add):
                return left + right
            if isinstance(node.op, ast.Sub):
                return left - right
            if isinstance(node.op, ast.Mult):
                return left * right
        raise ValueError(f"unsupported expression: {ast.unparse(node)}")

    return walk(tree)


def poly_matrix_from_json(obj) -> list[list[Poly]]:
    rows = obj["rows"] if isinstance(obj, dict) else obj
    return [[_poly_from_json(x) for x in row] for row in rows]


def _default(o: Any):
    if isinstance(o, (complex, np.complexfloating, ExactComplex)):
        return complex_to_json(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if hasattr(o, "to_json"):
        return o.to_json()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def dumps(obj, **kw) -> str:
    return json.dumps(obj, default=_default, **kw)
