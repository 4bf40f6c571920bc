"""Seeded experiment runs, sweeps, and the oracle used to score them.

A run is a pure function of its :class:`RunConfig`. One master seed fans out
to named random streams, so switching the algorithm never changes the model,
the logging policy, the logged data, or the context stream.
"""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional, Sequence, Union

import numpy as np

from . import agents
from .agents import (SKIP_BELOW_U, SKIP_EPSILON, SKIP_NONE, AgentState,
                     LoggedContext)
from .environ import (BanditizedDataset, Environment, LabelRewardModel,
                      RewardModel, gen_logging_policy, gen_offline_dataset,
                      gen_synthetic_model, ingest_csv, sample_contexts,
                      split_dataset)
from .errors import AlignmentError, InvalidConfigError
from .linconf import ConfidenceConfig
from .offpolicy import (build_epsilon_support, percentile_clip_constant,
                        solve_pi_plus)

ALGORITHMS = ("moful", "eps_moful", "eps_moful_ips", "opr")
SWEEP_AXES = ("l", "n_ua", "horizon")
FALLBACK_MODES = ("pi_plus", "logged")

STREAMS = {name: i for i, name in enumerate(
    ("model", "contexts", "policy", "dataset", "noise", "agent", "opr", "split", "eval"))}

BUNDLED = {"segment": os.path.join(os.path.dirname(__file__), "data", "segment2000.csv")}


def stream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), STREAMS[name]]))


@dataclass
class RunConfig:
    """Everything a run depends on.

    ``dataset_source`` is ``"synthetic"``, ``"csv:<path>"`` or
    ``"bundled:segment"``. ``clip_m_rule`` is ``"percentile"`` or a number.
    ``s_x``/``s_theta`` left as None are derived: ``sqrt(d)`` and the largest
    true parameter norm for synthetic runs, 1 for classification data.
    ``reward_budget`` stops the interaction once that many reward calls were
    spent; the learnt policy is still scored on the full context stream.
    ``radius_scale`` shrinks or widens the confidence radius; 1.0 is the
    theoretical value.
    """

    seed: int = 0
    algorithm: str = "moful"
    k: int = 20
    d: int = 5
    horizon: int = 1000
    n_ua: float = 0.2
    l: int = 0
    offline_size: int = 0
    sigma: float = 2.0
    lam: float = 1.0
    delta: float = 0.05
    s_x: Optional[float] = None
    s_theta: Optional[float] = None
    dataset_source: str = "synthetic"
    noisy_rewards: bool = False
    clip_m_rule: Union[str, float] = "percentile"
    reward_budget: Optional[int] = None
    fallback_action: str = "pi_plus"
    label_column: int = -1
    normalize: bool = True
    logging_fraction: float = 0.7
    radius_scale: float = 1.0
    record_trace: bool = False

    def validate(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise InvalidConfigError(f"algorithm: unknown {self.algorithm!r}, expected one of {ALGORITHMS}")
        if int(self.horizon) < 1:
            raise InvalidConfigError(f"horizon: must be >= 1, got {self.horizon}")
        if int(self.k) < 1 or int(self.d) < 1:
            raise InvalidConfigError("k and d must be >= 1")
        if not 0.0 <= self.n_ua < 1.0:
            raise InvalidConfigError(f"n_ua: must lie in [0, 1), got {self.n_ua}")
        if not 0 <= int(self.l) <= int(self.k):
            raise InvalidConfigError(f"l: must lie in [0, k={self.k}], got {self.l}")
        if int(self.offline_size) < 0:
            raise InvalidConfigError("offline_size: must be >= 0")
        if self.algorithm in ("eps_moful_ips", "opr") and self.is_synthetic and self.offline_size < 1:
            raise InvalidConfigError(f"offline_size: {self.algorithm} needs offline data")
        if self.algorithm in ("eps_moful", "eps_moful_ips") and self.l > 0 and \
                self.is_synthetic and self.offline_size < 1:
            raise InvalidConfigError("offline_size: l > 0 needs offline data")
        if not self.sigma >= 0.0:
            raise InvalidConfigError("sigma: must be >= 0")
        if not self.lam > 0.0:
            raise InvalidConfigError("lambda: must be positive")
        if not 0.0 < self.delta < 1.0:
            raise InvalidConfigError("delta: must lie in (0, 1)")
        for name in ("s_x", "s_theta"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise InvalidConfigError(f"{name}: must be positive")
        if isinstance(self.clip_m_rule, str):
            if self.clip_m_rule != "percentile":
                raise InvalidConfigError(f"clip_m_rule: expected 'percentile' or a number, got {self.clip_m_rule!r}")
        elif not float(self.clip_m_rule) >= 1.0:
            raise InvalidConfigError("clip_m_rule: a fixed clip constant must be >= 1")
        if self.reward_budget is not None and int(self.reward_budget) < 0:
            raise InvalidConfigError("reward_budget: must be >= 0")
        if self.fallback_action not in FALLBACK_MODES:
            raise InvalidConfigError(f"fallback_action: expected one of {FALLBACK_MODES}")
        if not self.radius_scale > 0.0:
            raise InvalidConfigError("radius_scale: must be positive")
        if not 0.0 < self.logging_fraction < 1.0:
            raise InvalidConfigError("logging_fraction: must lie in (0, 1)")
        src = self.dataset_source
        if not (src == "synthetic" or src.startswith("csv:") or
                (src.startswith("bundled:") and src.split(":", 1)[1] in BUNDLED)):
            raise InvalidConfigError(f"dataset_source: unknown source {src!r}")

    @property
    def is_synthetic(self) -> bool:
        return self.dataset_source == "synthetic"


@dataclass
class RunMetrics:
    """Outcome of one run.

    ``average_reward`` scores the learnt policy on every context of the
    stream; ``online_average_reward`` averages the true mean reward of the
    actions actually taken during the run.
    """

    algorithm: str
    seed: int
    steps: int
    cumulative_regret: np.ndarray
    reward_calls: int
    below_threshold_skips: int
    epsilon_skips: int
    average_reward: float
    online_average_reward: float
    classification_error: Optional[float] = None
    epsilon_hat: Optional[float] = None
    clip_m: Optional[float] = None
    reward_calls_trajectory: Optional[np.ndarray] = None
    trace: Optional[dict] = None
    wall_time: float = field(default=0.0, compare=False)

    @property
    def final_regret(self) -> float:
        return float(self.cumulative_regret[-1]) if self.steps else 0.0

    def same_as(self, other: "RunMetrics") -> bool:
        """Bit-level equality on everything except wall time."""
        for f in fields(self):
            if f.name == "wall_time":
                continue
            a, b = getattr(self, f.name), getattr(other, f.name)
            if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
                if not (isinstance(a, np.ndarray) and isinstance(b, np.ndarray)
                        and a.dtype == b.dtype and a.tobytes() == b.tobytes()):
                    return False
            elif isinstance(a, dict):
                if a.keys() != b.keys() or any(
                        np.asarray(a[key]).tobytes() != np.asarray(b[key]).tobytes() for key in a):
                    return False
            elif a != b and not (isinstance(a, float) and math.isnan(a) and math.isnan(b)):
                return False
        return True


def oracle_policy_value(model: RewardModel, x) -> tuple[int, float]:
    """Best action under the true parameters (lowest id on ties) and its value."""
    values = model.mean_rewards(x)
    a = int(np.argmax(values))
    return a, float(values[a])


def classification_error(actions, dataset: BanditizedDataset) -> float:
    """Fraction of rows whose chosen action differs from the label."""
    actions = np.asarray(actions)
    if actions.shape[0] != len(dataset):
        raise AlignmentError(f"{actions.shape[0]} actions for {len(dataset)} rows")
    if actions.shape[0] == 0:
        return 0.0
    return float(np.mean(actions != dataset.labels))


# --------------------------------------------------------------------------
# world construction


@dataclass
class World:
    X: np.ndarray                    # stream contexts, row t is context id t
    mean_table: Optional[np.ndarray]  # true mean reward per (row, action), small worlds only
    model: Union[RewardModel, LabelRewardModel]
    policy: object
    dataset: object
    n_offline: int
    labels: Optional[np.ndarray]
    s_x: float
    s_theta: float

    def mean_rewards(self, rows) -> np.ndarray:
        rows = np.asarray(rows)
        if isinstance(self.model, RewardModel):
            return self.X[rows] @ self.model.theta_star.T
        onehot = np.zeros((rows.shape[0], self.model.k))
        onehot[np.arange(rows.shape[0]), self.labels[rows]] = 1.0
        return onehot


def _load_classification(cfg: RunConfig) -> BanditizedDataset:
    src = cfg.dataset_source
    if src.startswith("bundled:"):
        path = BUNDLED[src.split(":", 1)[1]]
    else:
        path = src.split(":", 1)[1]
    return ingest_csv(path, cfg.label_column, cfg.normalize, cfg.noisy_rewards)


def build_world(cfg: RunConfig) -> World:
    seed = cfg.seed
    if cfg.is_synthetic:
        model = gen_synthetic_model(stream(seed, "model"), cfg.k, cfg.d, cfg.sigma)
        n_off = int(cfg.offline_size)
        n_fresh = max(0, int(cfg.horizon) - n_off)
        X = sample_contexts(stream(seed, "contexts"), n_off + n_fresh, cfg.d)
        policy = gen_logging_policy(stream(seed, "policy"), X.shape[0], cfg.k, cfg.n_ua)
        dataset = gen_offline_dataset(stream(seed, "dataset"), model, policy, X[:n_off])
        s_x = cfg.s_x if cfg.s_x is not None else math.sqrt(cfg.d)
        s_theta = cfg.s_theta if cfg.s_theta is not None else \
            float(np.max(np.linalg.norm(model.theta_star, axis=1)))
        return World(X, None, model, policy, dataset, n_off, None, s_x, s_theta)

    data = _load_classification(cfg)
    logged_part, online_part = split_dataset(data, cfg.logging_fraction, stream(seed, "split"))
    n_off = len(logged_part) if cfg.offline_size in (0, None) else \
        min(int(cfg.offline_size), len(logged_part))
    X = np.vstack([logged_part.X[:n_off], online_part.X])
    labels = np.concatenate([logged_part.labels[:n_off], online_part.labels])
    model = LabelRewardModel(labels, data.k, cfg.noisy_rewards)
    policy = gen_logging_policy(stream(seed, "policy"), X.shape[0], data.k, cfg.n_ua)
    dataset = gen_offline_dataset(stream(seed, "dataset"), model, policy, X[:n_off])
    s_x = cfg.s_x if cfg.s_x is not None else float(np.max(np.linalg.norm(X, axis=1)))
    s_theta = cfg.s_theta if cfg.s_theta is not None else 1.0
    return World(X, None, model, policy, dataset, n_off, labels, s_x, s_theta)


# --------------------------------------------------------------------------
# runs


def _uniform_supported(policy, cid: int, rng) -> int:
    sup = policy.supported_actions(cid)
    return int(sup[int(rng.integers(sup.shape[0]))])


def run_experiment(cfg: RunConfig, world: Optional[World] = None) -> RunMetrics:
    """Run one algorithm on the world generated from ``cfg.seed``.

    A ``world`` already built from an identical config (up to the algorithm
    and agent settings) may be passed to skip regenerating it.
    """
    cfg.validate()
    started = time.perf_counter()
    if world is None:
        world = build_world(cfg)
    k = world.model.k
    d = world.X.shape[1]
    T = min(int(cfg.horizon), world.X.shape[0])
    alg = cfg.algorithm
    dataset = world.dataset

    eps_support = None
    if alg in ("eps_moful", "eps_moful_ips"):
        diag = world.model if isinstance(world.model, RewardModel) else None
        eps_support = build_epsilon_support(dataset, int(cfg.l), diag)
    restricted = None
    clip_m = None
    if alg in ("eps_moful_ips", "opr"):
        clip_m = percentile_clip_constant(dataset) if cfg.clip_m_rule == "percentile" \
            else float(cfg.clip_m_rule)
        restricted = solve_pi_plus(dataset, world.policy, clip_m)

    conf = ConfidenceConfig(cfg.sigma, cfg.delta, world.s_x, world.s_theta, k)
    state = AgentState(k, d, conf, cfg.lam, eps_support, restricted, cfg.radius_scale)
    env = Environment(world.model, stream(cfg.seed, "noise"))
    opr_rng = stream(cfg.seed, "opr")

    actions = np.zeros(T, dtype=np.int64)
    called = np.zeros(T, dtype=bool)
    skips = np.empty(T, dtype=object)
    opt_values = np.full(T, np.nan)
    inst_regret = np.zeros(T)
    calls_traj = np.zeros(T, dtype=np.int64)
    n_below = n_eps = 0
    budget = cfg.reward_budget
    steps = 0

    for t in range(T):
        if budget is not None and env.reward_calls >= budget:
            break
        x = world.X[t]
        cid = t

        def pull(a, _x=x, _t=t):
            return env.pull(_x, a, row=_t)

        if alg == "opr":
            if cid in restricted:
                a = agents.opr_act(restricted, cid, opr_rng)
            else:
                a = _uniform_supported(world.policy, cid, opr_rng)
            skip = SKIP_BELOW_U
            value = math.nan
        else:
            if alg == "moful":
                out = agents.moful_step(state, x, pull)
            elif alg == "eps_moful":
                out = agents.eps_moful_step(state, x, pull)
            else:
                pos = dataset.position(cid) if cid < world.n_offline else None
                logged = None
                if pos is not None:
                    logged = LoggedContext(cid, int(dataset.actions[pos]), float(dataset.rewards[pos]),
                                           float(dataset.propensities[pos]),
                                           restricted.u_value(cid))
                out = agents.eps_moful_ips_step(state, x, logged, pull)
            a = out.action
            skip = out.skip_reason
            value = out.optimistic_value
            if skip == SKIP_BELOW_U:
                if cfg.fallback_action == "logged":
                    a = int(dataset.actions[dataset.position(cid)])
                else:
                    a = agents.opr_act(restricted, cid, opr_rng)
        if skip == SKIP_BELOW_U:
            n_below += 1
        elif skip == SKIP_EPSILON:
            n_eps += 1
        means = world.mean_rewards(np.array([t]))[0]
        actions[t] = a
        called[t] = skip == SKIP_NONE
        skips[t] = skip
        opt_values[t] = value
        inst_regret[t] = float(np.max(means) - means[a])
        calls_traj[t] = env.reward_calls
        steps = t + 1

    actions, called, skips = actions[:steps], called[:steps], skips[:steps]
    opt_values, inst_regret, calls_traj = opt_values[:steps], inst_regret[:steps], calls_traj[:steps]
    rows = np.arange(steps)
    online_avg = float(np.mean(world.mean_rewards(rows)[rows, actions])) if steps else 0.0

    learnt = _learnt_policy_actions(cfg, world, state, T)
    eval_means = world.mean_rewards(np.arange(T))
    average_reward = float(np.mean(eval_means[np.arange(T), learnt]))

    cls_err = None
    if world.labels is not None:
        cls_err = float(np.mean(actions != world.labels[:steps])) if steps else 0.0

    trace = None
    if cfg.record_trace:
        trace = {"t": rows + 1, "context_id": rows, "action": actions,
                 "reward_called": called, "skip_reason": skips.astype(str),
                 "optimistic_value": opt_values, "instantaneous_regret": inst_regret}

    return RunMetrics(
        algorithm=alg, seed=int(cfg.seed), steps=steps,
        cumulative_regret=np.cumsum(inst_regret), reward_calls=env.reward_calls,
        below_threshold_skips=n_below, epsilon_skips=n_eps,
        average_reward=average_reward, online_average_reward=online_avg,
        classification_error=cls_err,
        epsilon_hat=eps_support.epsilon_hat if eps_support is not None else None,
        clip_m=clip_m, reward_calls_trajectory=calls_traj, trace=trace,
        wall_time=time.perf_counter() - started)


def _learnt_policy_actions(cfg, world, state, T) -> np.ndarray:
    """Actions of the final learnt policy on the first ``T`` stream contexts.

    Online learners act greedily on their point estimates (fixed arms at their
    offline fit); OPR samples from the restricted policy, and outside the
    logged contexts from the uniform distribution over supported actions.
    """
    if cfg.algorithm == "opr":
        rng = stream(cfg.seed, "eval")
        restricted = state.restricted
        out = np.empty(T, dtype=np.int64)
        for cid in range(T):
            out[cid] = agents.opr_act(restricted, cid, rng) if cid in restricted \
                else _uniform_supported(world.policy, cid, rng)
        return out
    return np.argmax(world.X[:T] @ state.centers.T, axis=1)


def run_algorithms(cfg: RunConfig, algorithms: Sequence[str]) -> dict[str, RunMetrics]:
    """Run several algorithms against one shared world."""
    world = None
    out = {}
    for alg in algorithms:
        c = replace(cfg, algorithm=alg)
        c.validate()
        if world is None:
            world = build_world(c)
        out[alg] = run_experiment(c, world)
    return out


# --------------------------------------------------------------------------
# sweeps


@dataclass
class SweepRow:
    algorithm: str
    axis_value: float
    seed: int
    final_regret: float
    reward_calls: int
    t_doubleprime: int
    average_reward: float
    classification_error: Optional[float]


def _run_row(args) -> SweepRow:
    value, cfg = args
    m = run_experiment(cfg)
    return SweepRow(cfg.algorithm, value, cfg.seed, m.final_regret, m.reward_calls,
                    m.below_threshold_skips, m.average_reward, m.classification_error)


def max_workers() -> int:
    env = os.environ.get("BANDITLAB_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_sweep(base: RunConfig, axis: str, values: Sequence, repeats: int,
              workers: Optional[int] = None) -> list[SweepRow]:
    """Run every (value, seed offset) pair; rows come back sorted by (value, seed)."""
    if axis not in SWEEP_AXES:
        raise InvalidConfigError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    if int(repeats) < 1:
        raise InvalidConfigError("repeats must be >= 1")
    jobs = [(v, replace(base, **{axis: v}, seed=base.seed + r, record_trace=False))
            for v in values for r in range(int(repeats))]
    for _, cfg in jobs:
        cfg.validate()
    workers = max_workers() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            rows = list(pool.map(_run_row, jobs))
    else:
        rows = [_run_row(job) for job in jobs]
    rows.sort(key=lambda r: (r.axis_value, r.seed))
    return rows


def summarize_sweep(rows: Sequence[SweepRow]) -> list[dict]:
    """Mean and population standard deviation per axis value."""
    out = []
    for value in sorted({r.axis_value for r in rows}):
        group = [r for r in rows if r.axis_value == value]
        entry = {"axis_value": value, "n": len(group)}
        for name in ("final_regret", "reward_calls", "average_reward"):
            arr = np.array([getattr(r, name) for r in group], dtype=float)
            entry[f"{name}_mean"] = float(arr.mean())
            entry[f"{name}_std"] = float(arr.std())
        out.append(entry)
    return out


def config_dict(cfg: RunConfig) -> dict:
    return asdict(cfg)
