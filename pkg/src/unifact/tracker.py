"""Continuation along sampled paths of last rows and of matrices.

Points are flat complex parameter arrays of length ``K*m`` in inverse
orientation, the same layout as :meth:`FactorChain.flat`.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .factor import DomainError, peel_last_row, preimage_last_row
from .unipotent import (DIRECT, INVERSE, FactorChain, ParamVector, coords, n_params,
                        phi_jacobian_batch, psi_eval)

__all__ = [
    "TrackerConfig",
    "PathProblem",
    "TrackRecord",
    "NoConvergence",
    "NearSingularJacobian",
    "TrackingError",
    "newton_step",
    "track_path",
    "factor_matrix_path",
]


class NumericFailure(RuntimeError):
    pass


class NoConvergence(NumericFailure):
    pass


class NearSingularJacobian(NumericFailure):
    pass


class TrackingError(NumericFailure):
    def __init__(self, msg: str, t_interval: tuple[float, float]):
        super().__init__(f"{msg} on t in [{t_interval[0]:.6g}, {t_interval[1]:.6g}]")
        self.t_interval = t_interval


@dataclass(frozen=True)
class TrackerConfig:
    residual_tol: float = 1e-8      # acceptance bound per tracked point
    newton_tol: float = 1e-12       # corrector target
    max_iters: int = 50
    rank_tol: float = 1e-8          # smallest/largest singular value threshold
    safety_ratio: float = 1e-3      # below this, slide along the fiber away from S_K
    max_bisections: int = 12
    continuity_cap: float = 1.0     # max parameter jump between accepted points
    step_cap: float = 1.0           # max |b(t_i+1) - b(t_i)| between samples

    def __post_init__(self):
        for k, v in asdict(self).items():
            if v <= 0:
                raise ValueError(f"{k} must be positive")

    def to_json(self) -> dict:
        return asdict(self)


def _eval(n: int, Z: np.ndarray):
    phi, J = phi_jacobian_batch(n, Z[None, :], INVERSE)
    return phi[0], J[0]


def _sv(J: np.ndarray) -> np.ndarray:
    return np.linalg.svd(J, compute_uv=False)


def _ratio(s: np.ndarray) -> float:
    return float(s[-1] / s[0]) if s[0] > 0 else 0.0


def newton_step(n: int, Z, b, max_iters: int = 50, tol: float = 1e-12,
                rank_tol: float = 1e-8) -> np.ndarray:
    """Damped minimum-norm Gauss-Newton for ``Phi_K(Z) = b``.

    Each update solves ``J d = b - Phi(Z)`` in the least-norm sense and is
    halved until the residual decreases.
    """
    Z = np.array(Z, dtype=np.complex128).ravel()
    b = np.asarray(b, dtype=np.complex128).ravel()
    if Z.size % n_params(n):
        raise ValueError("point length is not a multiple of n(n-1)/2")
    phi, J = _eval(n, Z)
    res = np.linalg.norm(phi - b)
    for _ in range(max_iters):
        if res <= tol:
            return Z
        s = _sv(J)
        if s[-1] <= rank_tol * s[0]:
            raise NearSingularJacobian(
                f"Jacobian near singular (ratio {_ratio(s):.3g}); point is close to S_K")
        d = np.linalg.lstsq(J, b - phi, rcond=None)[0]
        lam = 1.0
        while True:
            Znew = Z + lam * d
            phin, Jn = _eval(n, Znew)
            rn = np.linalg.norm(phin - b)
            if rn < res or lam < 2.0 ** -30:
                break
            lam *= 0.5
        if rn >= res:
            raise NoConvergence(f"residual stalled at {res:.3g}")
        Z, phi, J, res = Znew, phin, Jn, rn
    if res <= tol:
        return Z
    raise NoConvergence(f"no convergence after {max_iters} iterations (residual {res:.3g})")


def _log_ratio_gradient(n: int, Z: np.ndarray, h: float = 1e-7) -> np.ndarray:
    """Steepest-ascent direction of log(smin/smax) in complex coordinates."""
    D = Z.size
    pts = np.concatenate([Z[None, :] + h * np.eye(D), Z[None, :] + 1j * h * np.eye(D), Z[None, :]])
    _, J = phi_jacobian_batch(n, pts, INVERSE)
    s = np.linalg.svd(J, compute_uv=False)
    f = np.log(np.maximum(s[:, -1], 1e-300) / s[:, 0])
    return ((f[:D] - f[-1]) + 1j * (f[D:2 * D] - f[-1])) / h


def _slide_off(n: int, Z: np.ndarray, b: np.ndarray, cfg: TrackerConfig,
               max_moves: int = 40) -> np.ndarray:
    """Move along the fiber until the singular-value ratio reaches the safety margin."""
    start = Z
    for _ in range(max_moves):
        _, J = _eval(n, Z)
        if _ratio(_sv(J)) >= cfg.safety_ratio:
            break
        g = _log_ratio_gradient(n, Z)
        P = np.eye(Z.size) - np.linalg.pinv(J) @ J
        g = P @ g
        norm = np.linalg.norm(g)
        if norm == 0:
            break
        step = 0.05 * cfg.continuity_cap * g / norm
        Z = newton_step(n, Z + step, b, cfg.max_iters, cfg.newton_tol, rank_tol=0.0)
        if np.linalg.norm(Z - start) > cfg.continuity_cap:
            break
    return Z


@dataclass(frozen=True)
class PathProblem:
    n: int
    K: int
    samples: tuple  # ((t, b), ...)
    seed: np.ndarray
    step_cap: float = 1.0

    def __post_init__(self):
        samples = tuple((float(t), np.asarray(b, dtype=np.complex128).ravel()) for t, b in self.samples)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "seed", np.asarray(self.seed, dtype=np.complex128).ravel())
        if not samples:
            raise ValueError("path needs at least one sample")
        if self.seed.size != self.K * n_params(self.n):
            raise ValueError(f"seed needs {self.K * n_params(self.n)} coordinates")
        ts = [t for t, _ in samples]
        if any(b.size != self.n for _, b in samples):
            raise ValueError("every sample needs n entries")
        if any(b2 <= b1 for b1, b2 in zip(ts, ts[1:])):
            raise ValueError("sample times must increase")
        for (_, b), (_, c) in zip(samples, samples[1:]):
            if np.linalg.norm(c - b) > self.step_cap:
                raise ValueError(f"consecutive samples differ by more than step_cap={self.step_cap}")
        if any(not np.any(b) for _, b in samples):
            raise DomainError("path passes through the zero vector")


@dataclass
class TrackRecord:
    t: float
    Z: np.ndarray
    residual: float
    min_singular_value: float
    singular_ratio: float

    def to_json(self) -> dict:
        from .jsonio import vector_to_json

        return {"t": self.t, "Z": vector_to_json(self.Z), "residual": self.residual,
                "min_singular_value": self.min_singular_value,
                "singular_ratio": self.singular_ratio}


def _record(n, t, Z, b) -> TrackRecord:
    phi, J = _eval(n, Z)
    s = _sv(J)
    return TrackRecord(t, Z, float(np.linalg.norm(phi - b)), float(s[-1]), _ratio(s))


def _accept(n, Zprev, Z, b, cfg) -> bool:
    phi, J = _eval(n, Z)
    if np.linalg.norm(phi - b) > cfg.residual_tol:
        return False
    if _ratio(_sv(J)) <= cfg.rank_tol:
        return False
    return np.linalg.norm(Z - Zprev) <= cfg.continuity_cap


def _correct(n, Z, b, cfg) -> np.ndarray:
    Z = newton_step(n, Z, b, cfg.max_iters, cfg.newton_tol, cfg.rank_tol)
    _, J = _eval(n, Z)
    if _ratio(_sv(J)) < cfg.safety_ratio:
        Z = _slide_off(n, Z, b, cfg)
    return Z


def _advance(n, Z, ta, ba, tb, bb, cfg, depth=0) -> np.ndarray:
    try:
        Znew = _correct(n, Z, bb, cfg)
        if _accept(n, Z, Znew, bb, cfg):
            return Znew
        why = "step rejected"
    except NumericFailure as exc:
        why = str(exc)
    if depth >= cfg.max_bisections:
        raise TrackingError(f"step-size underflow ({why})", (ta, tb))
    tm, bm = 0.5 * (ta + tb), 0.5 * (ba + bb)
    Zm = _advance(n, Z, ta, ba, tm, bm, cfg, depth + 1)
    return _advance(n, Zm, tm, bm, tb, bb, cfg, depth + 1)


def track_path(problem: PathProblem, config: TrackerConfig | None = None) -> list[TrackRecord]:
    """Track a solution of ``Phi_K(Z) = b(t)`` through the samples.

    Each accepted point meets the residual, rank and continuity checks;
    failed steps are bisected with linearly interpolated targets.
    """
    cfg = config or TrackerConfig(step_cap=problem.step_cap)
    n = problem.n
    t0, b0 = problem.samples[0]
    try:
        Z = _correct(n, problem.seed, b0, cfg)
    except NumericFailure as exc:
        raise TrackingError(f"seed does not converge ({exc})", (t0, t0)) from exc
    if not _accept(n, Z, Z, b0, cfg):
        raise TrackingError("seed point rejected", (t0, t0))
    out = [_record(n, t0, Z, b0)]
    for (ta, ba), (tb, bb) in zip(problem.samples, problem.samples[1:]):
        Z = _advance(n, Z, ta, ba, tb, bb, cfg)
        out.append(_record(n, tb, Z, bb))
    return out


# --------------------------------------------------------------------------
# matrix paths


@dataclass
class MatrixPathRecord:
    t: float
    chain: FactorChain
    residual: float
    min_singular_value: float

    def to_json(self) -> dict:
        from .jsonio import chain_to_json

        return {"t": self.t, "chain": chain_to_json(self.chain), "K": self.chain.K,
                "residual": self.residual, "min_singular_value": self.min_singular_value}


def _upper_last_column(n, v) -> ParamVector:
    vals = {rc: 0j for rc in coords(n, 2)}
    for i in range(n - 1):
        vals[(i + 1, n)] = complex(v[i])
    return ParamVector(n, 2, vals)


def _embed(Z: ParamVector, n: int, k: int) -> ParamVector:
    vals = {rc: 0j for rc in coords(n, k)}
    vals.update(Z.entries)
    return ParamVector(n, k, vals)


def _factor_path_rec(ts, mats, cfg) -> tuple[list[list[ParamVector]], list[float]]:
    """Direct-orientation factor lists (same structure at every sample)."""
    n = mats[0].shape[0]
    if n == 1:
        return [[] for _ in mats], [np.inf] * len(mats)
    rows = [A[-1] for A in mats]
    seed = preimage_last_row(rows[0]).flat()
    problem = PathProblem(n, 3, tuple(zip(ts, rows)), seed, step_cap=cfg.step_cap)
    track = track_path(problem, cfg)
    hs, cores, tails = [], [], []
    for rec, A in zip(track, mats):
        chain = FactorChain.from_array(n, rec.Z, INVERSE)
        peel = peel_last_row(A, chain, tol=max(cfg.residual_tol, 1e-8))
        hs.append(peel.h)
        cores.append(np.linalg.inv(peel.core))
        tails.append(list(chain.to_orientation(DIRECT).factors))
    sub, smins = _factor_path_rec(ts, cores, cfg)
    out = []
    for s, h, tail in zip(sub, hs, tails):
        if s:
            lead = [_embed(Z, n, i + 1) for i, Z in enumerate(s)]
        else:
            lead = [ParamVector.zeros(n, 1)]
        K0 = len(lead)
        facs = lead + [_upper_last_column(n, -h).with_index(K0 + 1)]
        facs += [Z.with_index(K0 + 2 + i) for i, Z in enumerate(tail)]
        out.append(facs)
    return out, [min(a, r.min_singular_value) for a, r in zip(smins, track)]


def factor_matrix_path(samples: Sequence, config: TrackerConfig | None = None,
                       det_tol: float = 1e-10) -> list[MatrixPathRecord]:
    """Continuous unipotent factorizations of sampled SL_n matrices.

    The last row is tracked with K = 3, then the peeled SL_{n-1} cores are
    factored recursively; the chain shape is the same at every sample.
    """
    cfg = config or TrackerConfig()
    ts = [float(t) for t, _ in samples]
    mats = [np.asarray(getattr(A, "entries", A), dtype=np.complex128) for _, A in samples]
    if not mats:
        return []
    n = mats[0].shape[0]
    for t, A in zip(ts, mats):
        if A.shape != (n, n):
            raise ValueError("all samples must be square of the same size")
        if abs(np.linalg.det(A) - 1) > det_tol:
            raise DomainError(f"determinant at t={t} is not 1")
    if all(np.array_equal(A, np.eye(n)) for A in mats):
        return [MatrixPathRecord(t, FactorChain(n, (), DIRECT), 0.0, np.inf) for t in ts]
    facs, smins = _factor_path_rec(ts, mats, cfg)
    out = []
    for t, A, f, smin in zip(ts, mats, facs, smins):
        chain = FactorChain(n, tuple(f), DIRECT)
        P = psi_eval(chain).entries
        res = float(np.linalg.norm(P - A) / np.linalg.norm(A))
        out.append(MatrixPathRecord(t, chain, res, smin))
    return out
