import numpy as np
import pytest

from unifact.factor import DomainError, preimage_last_row, verify_factorization
from unifact.tracker import (NearSingularJacobian, PathProblem, TrackerConfig, TrackingError,
                             factor_matrix_path, newton_step, track_path)
from unifact.unipotent import phi_batch, phi_eval


def phi(n, Z):
    return phi_batch(n, np.asarray(Z)[None, :])[0]


def test_newton_leaves_solution_unchanged():
    Z = np.array([-2, -1, 0], dtype=complex)
    assert np.array_equal(newton_step(2, Z, [2, 3]), Z)


def test_newton_converges_from_nearby_seed():
    Z0 = np.array([-2, -1, 0], dtype=complex)
    b = np.array([2.1, 3])
    Z = newton_step(2, Z0, b)
    assert np.linalg.norm(phi(2, Z) - b) <= 1e-12
    # the fiber is a curve; the endpoint is a nearby point on it, not the constructive preimage
    assert abs(Z[0] + 2.1) < 0.2
    assert np.linalg.norm(Z - Z0) < 0.2
    ref = preimage_last_row(b)
    assert np.linalg.norm(phi_eval(ref) - b) <= 1e-12


def test_newton_refuses_singular_set():
    with pytest.raises(NearSingularJacobian):
        newton_step(2, [0, 0, 0.3], [1, 2])


def half_circle(N=50):
    ts = np.linspace(0, 1, N)
    return tuple((t, (np.exp(1j * np.pi * t), 1)) for t in ts)


def check_records(recs, samples, cfg=TrackerConfig()):
    for rec, (t, b) in zip(recs, samples):
        assert rec.t == t
        assert rec.residual <= cfg.residual_tol
        assert rec.singular_ratio > cfg.rank_tol
        assert np.linalg.norm(phi(2, rec.Z) - np.asarray(b)) <= cfg.residual_tol
        ref = preimage_last_row(b)
        assert np.linalg.norm(phi(2, rec.Z) - phi_eval(ref)) <= 2e-8
    for a, b in zip(recs, recs[1:]):
        assert np.linalg.norm(b.Z - a.Z) <= cfg.continuity_cap


def test_half_circle_path():
    samples = half_circle()
    prob = PathProblem(2, 3, samples, preimage_last_row([1, 1]).flat())
    recs = track_path(prob)
    assert len(recs) == 50
    check_records(recs, samples)


def test_path_crossing_zero_first_entry():
    samples = tuple((t, (1 - 2 * t, 5)) for t in np.linspace(0, 1, 21))
    recs = track_path(PathProblem(2, 3, samples, preimage_last_row([1, 5]).flat()))
    check_records(recs, samples)


def test_constant_path_gives_constant_output():
    seed = preimage_last_row([2, 3]).flat()
    recs = track_path(PathProblem(2, 3, tuple((t, (2, 3)) for t in np.linspace(0, 1, 5)), seed))
    for r in recs:
        assert np.array_equal(r.Z, recs[0].Z)


def test_tracking_is_deterministic():
    prob = PathProblem(2, 3, half_circle(20), preimage_last_row([1, 1]).flat())
    a, b = track_path(prob), track_path(prob)
    assert all(np.array_equal(x.Z, y.Z) for x, y in zip(a, b))


def test_path_validation():
    seed = preimage_last_row([1, 1]).flat()
    with pytest.raises(ValueError):
        PathProblem(2, 3, ((0, (1, 1)), (1, (9, 1))), seed)          # exceeds step cap
    with pytest.raises(ValueError):
        PathProblem(2, 3, ((0.5, (1, 1)), (0.1, (1, 1))), seed)      # time goes backwards
    with pytest.raises(DomainError):
        PathProblem(2, 3, ((0, (0.5, 0.5)), (1, (0, 0))), seed)
    with pytest.raises(ValueError):
        TrackerConfig(residual_tol=-1)


def test_failure_reports_interval():
    # a seed on S_3 cannot be corrected
    prob = PathProblem(2, 3, ((0, (1, 2)), (1, (1, 2.5))), [0, 0, 0.3])
    with pytest.raises(TrackingError) as err:
        track_path(prob)
    assert err.value.t_interval == (0.0, 0.0)


def test_matrix_path_n2():
    ts = np.linspace(0, 1, 11)
    samples = [(t, np.array([[1, t], [0, 1]]) @ np.array([[1, 0], [t, 1]])) for t in ts]
    recs = factor_matrix_path(samples)
    for rec, (_, A) in zip(recs, samples):
        assert rec.residual <= 1e-8
        assert verify_factorization(A, rec.chain, tol=1e-8).match
    Ks = {r.chain.K for r in recs}
    assert len(Ks) == 1
    for a, b in zip(recs, recs[1:]):
        assert np.linalg.norm(a.chain.flat() - b.chain.flat()) <= 1.0


def test_matrix_path_n3_exponential():
    N = np.array([[0, 1, 2], [0, 0, 3], [0, 0, 0]], dtype=complex)
    ts = np.linspace(0, 1, 20)
    samples = [(t, np.eye(3) + t * N + (t * N) @ (t * N) / 2) for t in ts]
    recs = factor_matrix_path(samples)
    assert all(r.residual <= 1e-8 for r in recs)
    assert all(verify_factorization(A, r.chain, tol=1e-8).match for r, (_, A) in zip(recs, samples))


def test_matrix_path_identity_and_domain():
    recs = factor_matrix_path([(t, np.eye(3)) for t in (0, 0.5, 1)])
    assert all(r.chain.K == 0 for r in recs)
    with pytest.raises(DomainError):
        factor_matrix_path([(0, np.diag([2.0, 1.0]))])
