"""Random inputs shared by the unit and acceptance suites."""

import numpy as np

from unifact.polyring import Poly, VarId
from unifact.spray import ShearField

X = [VarId.symbol(f"x{i}") for i in range(1, 7)]


def disk(r, size=None):
    """Uniform samples from the closed complex unit disk."""
    rad = np.sqrt(r.random(size))
    ang = 2 * np.pi * r.random(size)
    return rad * np.exp(1j * ang)


def random_multilinear(r, nvars, max_terms=5):
    p = Poly.const(complex(disk(r)))
    for _ in range(int(r.integers(1, max_terms + 1))):
        k = int(r.integers(1, nvars + 1))
        term = Poly.const(complex(disk(r)))
        for i in r.choice(nvars, size=k, replace=False):
            term = term * Poly.var(X[i])
        p = p + term
    return p


def random_shear_case(seed):
    """(field, start, t): up to 6 variables, unit-disk data, |t| <= 2."""
    r = np.random.default_rng(seed)
    nvars = int(r.integers(2, 7))
    p = random_multilinear(r, nvars)
    i, j = (int(q) for q in r.choice(nvars, size=2, replace=False))
    start = {X[k]: complex(disk(r)) for k in range(nvars)}
    t = 2 * complex(disk(r))
    return ShearField(p, X[i], X[j]), start, t
