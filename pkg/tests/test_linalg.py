import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gamband.linalg import (
    AuditViolation,
    Covariance,
    DesignGram,
    NotInSpan,
    potential_audit,
    potential_bound,
    ridge_solve,
    weighted_norm,
    weighted_sq_norms,
)


def test_fresh_covariance():
    c = Covariance(3, 0.5)
    np.testing.assert_array_equal(c.matrix, 0.5 * np.eye(3))
    np.testing.assert_array_equal(c.inverse, 2.0 * np.eye(3))
    with pytest.raises(ValueError):
        Covariance(2, 0.0)


def test_one_update_by_hand():
    c = Covariance(2, 1.0).update([1.0, 0.0])
    np.testing.assert_allclose(c.inverse, np.diag([0.5, 1.0]), atol=1e-15)


def test_zero_update_counts_but_does_nothing():
    c = Covariance(2, 1.0)
    c.update([0.0, 0.0])
    assert c.count == 1
    np.testing.assert_array_equal(c.matrix, np.eye(2))


def test_sherman_morrison_long_run():
    rng = np.random.default_rng(0)
    c = Covariance(8, 0.1)
    X = rng.standard_normal((20_000, 8))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    for x in X:
        c.update(x)
    assert np.linalg.norm(c.inverse - np.linalg.inv(c.matrix)) < 1e-8
    assert c.max_drift < 1e-8


def test_det_growth_identity():
    rng = np.random.default_rng(1)
    c = Covariance(4, 0.3)
    for _ in range(500):
        x = rng.standard_normal(4) * 0.5
        ld = c.logdet()
        u2 = x @ c.inverse @ x
        c.update(x)
        assert c.logdet() - ld == pytest.approx(math.log1p(u2), abs=1e-6)


def test_ridge_solve_matches_direct():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((50, 3))
    y = X @ np.array([0.2, -0.4, 0.1]) + 0.01 * rng.standard_normal(50)
    c = Covariance(3, 0.1)
    for x in X:
        c.update(x)
    direct = np.linalg.solve(0.1 * np.eye(3) + X.T @ X, X.T @ y)
    np.testing.assert_allclose(ridge_solve(c, X.T @ y), direct, atol=1e-10)


def test_copy_is_independent():
    c = Covariance(2, 1.0)
    d = c.copy()
    d.update([1.0, 1.0])
    np.testing.assert_array_equal(c.matrix, np.eye(2))


def test_weighted_norm_examples():
    assert weighted_norm(np.eye(2), [3.0, 4.0]) == 5.0
    assert weighted_norm(np.diag([4.0, 0.0]), [1.0, 7.0]) == 2.0
    with pytest.raises(ValueError):
        weighted_norm(-np.eye(2), [1.0, 0.0])
    # tiny negative round-off is clamped
    assert weighted_norm(np.array([[-1e-14]]), [1.0]) == 0.0


def test_design_gram_pseudo_inverse_and_span():
    X = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    G = DesignGram.from_points(X, [2.0, 3.0])
    assert G.rank == 2
    np.testing.assert_allclose(G.pseudo_inverse, np.diag([0.5, 1 / 3, 0.0]), atol=1e-15)
    assert G.norm([1.0, 0.0, 0.0]) == pytest.approx(math.sqrt(0.5))
    with pytest.raises(NotInSpan):
        G.norm([0.0, 0.0, 1.0])
    assert G.logpdet() == pytest.approx(math.log(6.0))


def test_weighted_sq_norms_rows():
    M = np.diag([1.0, 2.0])
    np.testing.assert_allclose(weighted_sq_norms(M, np.array([[1.0, 1.0], [0.0, 2.0]])), [3.0, 8.0])


def test_potential_closed_form_1d():
    # x_t = 1 each step: u_t^2 = 1 / (lam + t - 1)
    lam, T = 1.0, 500
    u = np.array([1.0 / math.sqrt(lam + t) for t in range(T)])
    c = Covariance(1, lam)
    hist = np.ones((T, 1))
    for x in hist:
        c.update(x)
    rep = potential_audit(u, 1, lam, 1.0, c, hist)
    assert rep.unclamped_checked
    assert rep.final_sum == pytest.approx(T / (lam + T))
    assert rep.clamped_bound == pytest.approx(potential_bound(T, 1, lam, 1.0))


def test_potential_audit_detects_violation():
    with pytest.raises(AuditViolation) as err:
        potential_audit(np.ones(50), 1, 1.0, 1.0)
    assert err.value.step is not None


def test_unclamped_only_checked_for_large_lambda():
    rep = potential_audit(np.full(3, 0.1), 2, 0.01, 1.0)
    assert not rep.unclamped_checked


@settings(max_examples=30, deadline=None)
@given(d=st.integers(1, 6), lam=st.floats(0.01, 10.0), seed=st.integers(0, 10_000))
def test_inverse_property(d, lam, seed):
    rng = np.random.default_rng(seed)
    c = Covariance(d, lam, refresh_every=1_000_000)
    for _ in range(100):
        c.update(rng.standard_normal(d))
    np.testing.assert_allclose(c.inverse @ c.matrix, np.eye(d), atol=1e-8)
    X = rng.standard_normal((100, d))
    # elliptical potential on the last matrix never exceeds d
    H = np.vstack([X])
    cov = Covariance(d, lam)
    for x in H:
        cov.update(x)
    assert np.sum(weighted_sq_norms(cov.inverse, H)) <= d + 1e-9
