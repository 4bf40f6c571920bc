from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from banditlab.environ import BanditizedDataset, RewardModel
from banditlab.errors import AlignmentError, InvalidConfigError
from banditlab.harness import (RunConfig, build_world, classification_error, oracle_policy_value,
                               run_algorithms, run_experiment, run_sweep, summarize_sweep)


def test_oracle_tie_and_simple():
    assert oracle_policy_value(RewardModel(np.ones((3, 2)), 0.0), [0.3, 0.1])[0] == 0
    assert oracle_policy_value(RewardModel(np.array([[2.0], [-1.0]]), 0.0), [1.0]) == (0, 2.0)


def test_oracle_matches_scan():
    rng = np.random.default_rng(0)
    for _ in range(100):
        k, d = rng.integers(1, 10), rng.integers(1, 6)
        m = RewardModel(rng.standard_normal((k, d)), 1.0)
        x = rng.random(d)
        vals = [float(sum(x[j] * m.theta_star[a, j] for j in range(d))) for a in range(k)]
        best = max(range(k), key=lambda a: (vals[a], -a))
        a, v = oracle_policy_value(m, x)
        assert a == best and v == pytest.approx(vals[best])


def test_moful_calls_equal_horizon():
    m = run_experiment(RunConfig(algorithm="moful", horizon=100))
    assert m.reward_calls == 100 and m.steps == 100
    assert np.all(np.diff(m.cumulative_regret) >= 0)


def test_eps_moful_full_support_no_calls():
    m = run_experiment(RunConfig(algorithm="eps_moful", l=20, offline_size=20_000, horizon=300))
    assert m.reward_calls == 0 and m.epsilon_skips == 300


def test_run_is_deterministic():
    cfg = RunConfig(algorithm="eps_moful_ips", l=5, offline_size=400, horizon=600, record_trace=True)
    a, b = run_experiment(cfg), run_experiment(cfg)
    assert a.same_as(b)


def test_algorithm_does_not_perturb_world():
    cfg = RunConfig(offline_size=300, horizon=500)
    w1 = build_world(replace(cfg, algorithm="moful"))
    w2 = build_world(replace(cfg, algorithm="opr"))
    np.testing.assert_array_equal(w1.X, w2.X)
    assert w1.dataset == w2.dataset


def test_horizon_prefix_property():
    short = run_experiment(RunConfig(horizon=300, seed=4))
    long = run_experiment(RunConfig(horizon=900, seed=4))
    np.testing.assert_array_equal(short.cumulative_regret, long.cumulative_regret[:300])


@settings(max_examples=25, deadline=None)
@given(alg=st.sampled_from(["moful", "eps_moful", "eps_moful_ips", "opr"]),
       seed=st.integers(0, 10_000), horizon=st.integers(1, 120), l=st.integers(0, 6),
       n_ua=st.sampled_from([0.0, 0.2, 0.5]), offline=st.integers(60, 200),
       budget=st.one_of(st.none(), st.integers(0, 80)))
def test_accounting_identity(alg, seed, horizon, l, n_ua, offline, budget):
    cfg = RunConfig(seed=seed, algorithm=alg, k=6, d=3, horizon=horizon, n_ua=n_ua, l=l,
                    offline_size=offline, reward_budget=budget)
    m = run_experiment(cfg)
    assert m.reward_calls + m.below_threshold_skips + m.epsilon_skips == m.steps
    assert m.steps == horizon or (budget is not None and m.reward_calls == budget)
    assert np.all(np.diff(m.cumulative_regret) >= -1e-12)


def test_accounting_200_step_run_from_trace():
    m = run_experiment(RunConfig(algorithm="eps_moful_ips", l=6, offline_size=150, horizon=200,
                                 record_trace=True, radius_scale=0.2))
    tr = m.trace
    reasons = list(tr["skip_reason"])
    assert sum(tr["reward_called"]) == m.reward_calls
    assert reasons.count("below_u_threshold") == m.below_threshold_skips
    assert reasons.count("epsilon_supported") == m.epsilon_skips
    assert m.reward_calls + m.below_threshold_skips + m.epsilon_skips == 200
    assert m.below_threshold_skips > 0 and m.epsilon_skips > 0


def test_config_validation_messages():
    with pytest.raises(InvalidConfigError, match="horizon"):
        RunConfig(horizon=0).validate()
    with pytest.raises(InvalidConfigError, match="l:"):
        RunConfig(l=21).validate()
    with pytest.raises(InvalidConfigError, match="offline_size"):
        RunConfig(algorithm="eps_moful_ips").validate()


def test_classification_error_cases():
    ds = BanditizedDataset(np.zeros((4, 1)), np.array([0, 1, 2, 1]), 3)
    assert classification_error([0, 1, 2, 1], ds) == 0.0
    assert classification_error([1, 0, 0, 0], ds) == 1.0
    with pytest.raises(AlignmentError):
        classification_error([0, 1], ds)


def test_uniform_agent_error_rate():
    rng = np.random.default_rng(0)
    k, n = 7, 10_000
    ds = BanditizedDataset(np.zeros((n, 1)), rng.integers(0, k, n), k)
    assert abs(classification_error(rng.integers(0, k, n), ds) - (1 - 1 / k)) < 0.02


def test_classification_run_reports_error():
    m = run_experiment(RunConfig(algorithm="opr", dataset_source="bundled:segment", n_ua=0.4,
                                 horizon=5000))
    # stream = 1400 logged rows followed by the 600 held-out rows
    assert m.classification_error is not None and m.steps == 2000
    assert 0.0 <= m.classification_error <= 1.0


def test_sweep_single_value_matches_run():
    base = RunConfig(algorithm="moful", horizon=200, seed=3)
    rows = run_sweep(base, "horizon", [200], 1, workers=1)
    m = run_experiment(base)
    assert len(rows) == 1
    assert rows[0].final_regret == m.final_regret and rows[0].reward_calls == m.reward_calls


def test_sweep_parallel_equals_serial_and_sorted():
    base = RunConfig(algorithm="eps_moful_ips", horizon=150, offline_size=200, seed=1)
    serial = run_sweep(base, "l", [6, 0, 3], 2, workers=1)
    parallel = run_sweep(base, "l", [6, 0, 3], 2, workers=2)
    assert serial == parallel
    assert [(r.axis_value, r.seed) for r in serial] == sorted((v, s) for v in (0, 3, 6) for s in (1, 2))


def test_sweep_summary_population_std():
    base = RunConfig(algorithm="moful", horizon=50)
    rows = run_sweep(base, "horizon", [50], 3, workers=1)
    s = summarize_sweep(rows)[0]
    vals = np.array([r.final_regret for r in rows])
    assert s["final_regret_mean"] == pytest.approx(vals.mean())
    assert s["final_regret_std"] == pytest.approx(np.sqrt(np.mean((vals - vals.mean()) ** 2)))


def test_sweep_rejects_axis():
    with pytest.raises(InvalidConfigError):
        run_sweep(RunConfig(), "sigma", [1.0], 1)


def test_sublinear_probe_three_horizons():
    seeds = range(10)
    ratios = np.zeros(3)
    for s in seeds:
        m = run_experiment(RunConfig(algorithm="moful", horizon=10_000, seed=s))
        for i, T in enumerate((1000, 3000, 10_000)):
            ratios[i] += m.cumulative_regret[T - 1] / T / len(seeds)
    assert ratios[0] > ratios[1] > ratios[2]


def _sweep_calls(axis, values, **kw):
    base = RunConfig(algorithm="eps_moful_ips", k=20, d=5, sigma=2.0, horizon=2000,
                     offline_size=20_000, **kw)
    summ = summarize_sweep(run_sweep(base, axis, values, 10))
    return [e["reward_calls_mean"] for e in summ]


def test_savings_nonincreasing_in_l():
    calls = _sweep_calls("l", [0, 5, 10, 12], n_ua=0.2)
    assert all(a >= b for a, b in zip(calls, calls[1:])), calls


def test_savings_nonincreasing_as_n_ua_decreases():
    calls = _sweep_calls("n_ua", [0.2, 0.4, 0.6], l=4)
    assert all(a <= b for a, b in zip(calls, calls[1:])), calls


def test_shared_world_matches_separate_runs():
    cfg = RunConfig(offline_size=300, horizon=400, l=4)
    shared = run_algorithms(cfg, ["eps_moful", "eps_moful_ips"])
    alone = run_experiment(replace(cfg, algorithm="eps_moful_ips"))
    assert shared["eps_moful_ips"].same_as(alone)
