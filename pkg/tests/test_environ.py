
import numpy as np
import pytest

from banditlab.environ import (BanditizedDataset, Environment, LabelRewardModel, LoggingPolicy,
                               OfflineDataset, RewardModel, banditize, env_pull,
                               gen_logging_policy, gen_offline_dataset, gen_synthetic_model,
                               ingest_csv, read_offline_dataset, sample_contexts, split_dataset,
                               validate_dataset, write_offline_dataset)
from banditlab.errors import IngestionError, InvalidConfigError, RejectedInputError


def test_model_determinism_and_shape():
    a = gen_synthetic_model(7, 20, 5, 2.0)
    b = gen_synthetic_model(7, 20, 5, 2.0)
    np.testing.assert_array_equal(a.theta_star, b.theta_star)
    assert (a.k, a.d, a.sigma) == (20, 5, 2.0)


def test_model_entries_centered():
    m = gen_synthetic_model(0, 2000, 5, 1.0)
    assert abs(m.theta_star.mean()) < 0.05


def test_contexts_in_unit_cube():
    X = sample_contexts(0, 1000, 5)
    assert X.shape == (1000, 5) and X.min() >= 0 and X.max() < 1


def test_half_unsupported_gives_two_over_k():
    pol = gen_logging_policy(0, 500, 20, 0.5)
    for c in range(500):
        p = pol.propensities(c)
        sup = p > 0
        assert sup.sum() == 10
        np.testing.assert_allclose(p[sup], 0.1)


def test_full_support():
    pol = gen_logging_policy(0, 50, 4, 0.0)
    assert not pol.unsupported.any()
    np.testing.assert_allclose(pol.propensities(3), 0.25)


def test_unsupported_fraction_exact():
    pol = gen_logging_policy(1, 1000, 20, 0.4)
    assert pol.unsupported.sum(axis=1).tolist() == [8] * 1000
    assert pol.n_ua == 0.4


def test_logging_policy_rejects_full_hiding():
    with pytest.raises(InvalidConfigError):
        gen_logging_policy(0, 10, 3, 1.0)
    with pytest.raises(InvalidConfigError):
        LoggingPolicy(np.ones((2, 3), dtype=bool))


def test_forced_action_noise_free():
    m = RewardModel(np.array([[1.0, 2.0], [3.0, -1.0]]), 0.0)
    pol = LoggingPolicy(np.array([[True, False]]))
    x = np.array([[0.5, 0.25]])
    ds = gen_offline_dataset(0, m, pol, x)
    assert ds.actions.tolist() == [1]
    assert ds.rewards[0] == 3.0 * 0.5 - 0.25
    assert ds.propensities[0] == 1.0


def test_logged_action_frequencies():
    m = gen_synthetic_model(0, 20, 3, 1.0)
    n = 100_000
    pol = gen_logging_policy(1, n, 20, 0.5)
    ds = gen_offline_dataset(2, m, pol, sample_contexts(3, n, 3))
    assert not pol.unsupported[np.arange(n), ds.actions].any()
    assert ds.per_action_counts.sum() == n
    # conditional on being supported each action is drawn with probability 0.1
    sup_counts = (~pol.unsupported).sum(axis=0)
    freq = ds.per_action_counts / sup_counts
    assert np.all(np.abs(freq - 0.1) < 0.01)


def test_env_pull():
    m = RewardModel(np.array([[1.0, -2.0]]), 0.0)
    assert env_pull(m, [0.3, 0.1], 0, np.random.default_rng(0)) == pytest.approx(0.1)
    m = RewardModel(np.array([[1.0, -2.0]]), 2.0)
    rng = np.random.default_rng(1)
    draws = np.array([env_pull(m, [0.3, 0.1], 0, rng) for _ in range(10_000)])
    assert abs(draws.mean() - 0.1) < 3 * 2.0 / 100
    assert draws[0] != draws[1]


def test_environment_counts_calls():
    env = Environment(RewardModel(np.eye(2), 1.0), np.random.default_rng(0))
    for _ in range(5):
        env.pull([1.0, 0.0], 1)
    assert env.reward_calls == 5


def test_banditize_clean_and_noisy():
    ds = BanditizedDataset(np.eye(3), np.array([0, 1, 2]), 3)
    rng = np.random.default_rng(0)
    assert banditize(ds, 1, 1, False, rng) == 1.0
    assert banditize(ds, 0, 1, False, rng) == 0.0
    noisy = np.mean([banditize(ds, 2, 2, True, rng) for _ in range(100_000)])
    assert abs(noisy - 0.75) < 0.01
    with pytest.raises(RejectedInputError):
        banditize(ds, 3, 0, False, rng)


def test_label_model_batch_noisy_mean():
    m = LabelRewardModel(np.zeros(100_000, dtype=np.int64), 2, noisy=True)
    r = m.sample(None, np.arange(100_000), np.zeros(100_000, dtype=np.int64),
                 np.random.default_rng(0))
    assert abs(r.mean() - 0.75) < 0.01


def test_dataset_csv_roundtrip(tmp_path):
    m = gen_synthetic_model(0, 5, 3, 1.0)
    pol = gen_logging_policy(0, 40, 5, 0.4)
    ds = gen_offline_dataset(0, m, pol, sample_contexts(0, 40, 3))
    p = tmp_path / "ds.csv"
    write_offline_dataset(ds, p)
    back = read_offline_dataset(p, 5)
    assert back == ds
    assert validate_dataset(back) == []


def test_validate_names_rows():
    ds = OfflineDataset([0, 1, 1], np.zeros((3, 2)), [0, 5, 1], [0.0, np.nan, 1.0],
                        [0.5, 0.0, 0.5], 3)
    problems = validate_dataset(ds)
    text = "\n".join(problems)
    assert "row 2: non-positive propensity" in text
    assert "row 2: action 5" in text
    assert "row 2: non-finite reward" in text
    assert "row 3: context_id 1 already logged at row 2" in text


def test_read_dataset_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("context_id,x_0,action,reward,propensity\n0,0.1,1,0.5,0.5\n1,zz,1,0.5,0.5\n")
    with pytest.raises(IngestionError, match="row 2"):
        read_offline_dataset(p)
    p.write_text("a,b\n")
    with pytest.raises(IngestionError):
        read_offline_dataset(p)


def test_ingest_two_rows(tmp_path):
    p = tmp_path / "tiny.csv"
    p.write_text("3,4,1\n1,0,0\n")
    ds = ingest_csv(p, normalize=True)
    assert ds.k == 2 and len(ds) == 2
    assert ds.labels.tolist() == [1, 0]
    np.testing.assert_allclose(ds.X, [[0.6, 0.8], [1.0, 0.0]])
    assert ds.source_name == "tiny"


def test_ingest_header_and_label_column(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("label,f1,f2\n2,1,1\n0,2,0\n")
    ds = ingest_csv(p, label_column=0, normalize=False)
    assert ds.k == 3
    np.testing.assert_array_equal(ds.X, [[1, 1], [2, 0]])


@pytest.mark.parametrize("body,row", [("1,2,0\n1,2\n", 2), ("1,2,0\n1,x,0\n", 2),
                                      ("1,2,0.5\n", 1), ("1,2,-1\n", 1),
                                      ("f,g,y\n1,2,0\n1,2,zz\n", 3)])
def test_ingest_errors_name_row(tmp_path, body, row):
    p = tmp_path / "bad.csv"
    p.write_text(body)
    with pytest.raises(IngestionError, match=f"row {row}"):
        ingest_csv(p)


def test_split_sizes_and_union():
    ds = BanditizedDataset(np.arange(20.0).reshape(10, 2), np.arange(10) % 3, 3)
    a, b = split_dataset(ds, 0.7, 5)
    assert (len(a), len(b)) == (7, 3)
    assert sorted(a.labels.tolist() + b.labels.tolist()) == sorted(ds.labels.tolist())
    assert sorted(np.vstack([a.X, b.X])[:, 0]) == sorted(ds.X[:, 0])
    a2, _ = split_dataset(ds, 0.7, 5)
    np.testing.assert_array_equal(a.X, a2.X)


def test_bundled_segment_shape():
    from banditlab.harness import BUNDLED
    ds = ingest_csv(BUNDLED["segment"])
    assert len(ds) == 2000 and ds.k == 7 and ds.d == 14
    np.testing.assert_allclose(np.linalg.norm(ds.X, axis=1), 1.0)
    assert set(np.bincount(ds.labels)) and np.bincount(ds.labels).min() > 200
