import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from banditlab.errors import InvalidConfigError, RejectedInputError
from banditlab.linconf import (REFACTOR_EVERY, ConfidenceConfig, ConfidenceSet, DesignState,
                               beta_radius, estimate, optimistic_value, ridge_update)


def test_two_by_two_hand_solve():
    # V = diag(2, 1), b = (2, 0) -> theta = (1, 0)
    s = DesignState(0, 2, lam=1.0)
    ridge_update(s, [1.0, 0.0], 2.0)
    np.testing.assert_allclose(estimate(s), [1.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(s.gram, np.diag([2.0, 1.0]))
    np.testing.assert_allclose(s.moment, [2.0, 0.0])


@pytest.mark.parametrize("lam", [0.1, 1.0, 7.0])
def test_fresh_state_estimates_zero(lam):
    s = DesignState(0, 3, lam=lam)
    np.testing.assert_array_equal(estimate(s), np.zeros(3))


def test_batch_solve_oracle():
    rng = np.random.default_rng(3)
    d, lam = 4, 0.7
    X = rng.standard_normal((50, d))
    y = rng.standard_normal(50)
    s = DesignState(0, d, lam)
    for x, r in zip(X, y):
        ridge_update(s, x, r)
    direct = np.linalg.solve(X.T @ X + lam * np.eye(d), X.T @ y)
    np.testing.assert_allclose(estimate(s), direct, atol=1e-8)
    np.testing.assert_allclose(s.center, direct, atol=1e-8)


def test_consistency_many_updates():
    rng = np.random.default_rng(4)
    d = 5
    theta = rng.standard_normal(d)
    s = DesignState(0, d)
    for _ in range(10_000):
        x = rng.random(d)
        ridge_update(s, x, x @ theta + 0.1 * rng.standard_normal())
    assert np.linalg.norm(estimate(s) - theta) < 0.1


def test_refactor_keeps_inverse_accurate():
    rng = np.random.default_rng(5)
    d = 3
    s = DesignState(0, d)
    for _ in range(REFACTOR_EVERY * 2 + 17):
        ridge_update(s, rng.random(d), rng.standard_normal())
    np.testing.assert_allclose(s.gram_inverse, np.linalg.inv(s.gram), rtol=1e-9, atol=1e-12)


@given(st.lists(st.lists(st.floats(-5, 5), min_size=3, max_size=3), min_size=1, max_size=30))
def test_inverse_tracks_gram(xs):
    s = DesignState(0, 3)
    for x in xs:
        ridge_update(s, x, 1.0)
    np.testing.assert_allclose(s.gram_inverse @ s.gram, np.eye(3), atol=1e-7)


@pytest.mark.parametrize("bad", [[np.nan, 0.0], [np.inf, 1.0]])
def test_non_finite_context_rejected(bad):
    s = DesignState(0, 2)
    with pytest.raises(RejectedInputError):
        ridge_update(s, bad, 1.0)
    assert s.count == 0


def test_non_finite_reward_and_dimension_rejected():
    s = DesignState(0, 2)
    with pytest.raises(RejectedInputError):
        ridge_update(s, [1.0, 0.0], float("nan"))
    with pytest.raises(RejectedInputError):
        ridge_update(s, [1.0, 0.0, 0.0], 1.0)


def test_norm_bound_warning():
    s = DesignState(0, 2)
    with pytest.warns(RuntimeWarning):
        ridge_update(s, [3.0, 0.0], 1.0, s_x=1.0)


def test_beta_noise_free():
    cfg = ConfidenceConfig(sigma=0.0, s_theta=1.0)
    for t in (0, 1, 100, 10**6):
        assert beta_radius(cfg, t, 1.0, 5) == pytest.approx(1.0)


def test_beta_formula_value():
    cfg = ConfidenceConfig(sigma=1.0, delta=0.05, s_x=1.0, s_theta=1.0, arm_count_for_union=20)
    expect = (math.sqrt(2 * math.log(20 * 101 / 0.05)) + 1.0) ** 2
    assert beta_radius(cfg, 100, 1.0, 2) == pytest.approx(expect, rel=1e-12)
    assert beta_radius(cfg, 100, 1.0, 2) == pytest.approx(31.4247, abs=1e-4)


def test_beta_monotone_in_t():
    cfg = ConfidenceConfig(sigma=2.0, arm_count_for_union=20, s_x=math.sqrt(5), s_theta=3.0)
    vals = np.array([beta_radius(cfg, t, 1.0, 5) for t in range(10_001)])
    assert np.all(np.diff(vals) >= 0)


def test_beta_rejects_negative_t():
    with pytest.raises(InvalidConfigError):
        beta_radius(ConfidenceConfig(1.0), -1, 1.0, 2)


@pytest.mark.parametrize("kw", [dict(sigma=-1), dict(sigma=1, delta=0), dict(sigma=1, delta=1),
                                dict(sigma=1, s_x=0), dict(sigma=1, arm_count_for_union=0)])
def test_config_validation(kw):
    with pytest.raises(InvalidConfigError):
        ConfidenceConfig(**kw)


def test_unit_ball_optimism():
    s = DesignState(0, 2, lam=1.0)
    v, th = optimistic_value(ConfidenceSet.ellipsoid(s, 1.0), [1.0, 0.0])
    assert v == pytest.approx(1.0)
    np.testing.assert_allclose(th, [1.0, 0.0])


def test_singleton_optimism():
    cs = ConfidenceSet.singleton([0.5, -1.0])
    v, th = optimistic_value(cs, [2.0, 1.0])
    assert v == 0.0
    np.testing.assert_array_equal(th, [0.5, -1.0])
    assert cs.contains([0.5, -1.0]) and not cs.contains([0.5, -0.9])


def test_closed_form_against_boundary_sampling():
    rng = np.random.default_rng(6)
    d = 3
    for _ in range(20):
        s = DesignState(0, d, lam=rng.uniform(0.5, 2))
        for _ in range(rng.integers(1, 10)):
            ridge_update(s, rng.standard_normal(d), rng.standard_normal())
        beta = rng.uniform(0.1, 4)
        cs = ConfidenceSet.ellipsoid(s, beta)
        x = rng.standard_normal(d)
        v, th = optimistic_value(cs, x)
        # boundary points center + sqrt(beta) L^{-T} u for unit u, where V = L L^T
        L = np.linalg.cholesky(s.gram)
        u = rng.standard_normal((200_000, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        pts = s.center + math.sqrt(beta) * np.linalg.solve(L.T, u.T).T
        sampled = pts @ x
        assert sampled.max() <= v + 1e-9
        assert v - sampled.max() < 1e-3 * max(1.0, abs(v))
        assert cs.contains(th, atol=1e-9)
        assert th @ x == pytest.approx(v)


def test_ellipsoid_coverage_over_runs():
    # theta* must stay in the ellipsoid for every t in at least 1 - delta - 0.05 of runs
    d, k, sigma, delta, T = 3, 1, 0.5, 0.05, 200
    covered = 0
    for run in range(200):
        rng = np.random.default_rng(1000 + run)
        theta = rng.standard_normal(d)
        theta *= 0.9 / np.linalg.norm(theta)
        cfg = ConfidenceConfig(sigma, delta, math.sqrt(d), 1.0, k)
        s = DesignState(0, d)
        ok = True
        for t in range(1, T + 1):
            x = rng.random(d)
            ridge_update(s, x, x @ theta + sigma * rng.standard_normal())
            if not ConfidenceSet.ellipsoid(s, beta_radius(cfg, t, 1.0, d)).contains(theta):
                ok = False
                break
        covered += ok
    assert covered / 200 >= 1 - delta - 0.05
