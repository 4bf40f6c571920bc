"""Simulated environments, deficient-support logging, and dataset I/O.

Context identity is an integer id. Generated logging policies are indexed by
that id, and an :class:`OfflineDataset` holds at most one logged event per id.
"""
from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from dataclasses import dataclass
from typing import Iterator, Optional, Union

import numpy as np

from .errors import (CorruptedDatasetError, IngestionError, InvalidConfigError,
                     RejectedInputError)

SeedLike = Union[int, np.random.Generator, np.random.SeedSequence, None]


def as_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


# --------------------------------------------------------------------------
# reward models


@dataclass
class RewardModel:
    """Disjoint linear rewards ``<x, theta_a> + N(0, sigma^2)``.

    ``theta_star`` has one row per action.
    """

    theta_star: np.ndarray
    sigma: float
    reward_clip: Optional[tuple[float, float]] = None

    def __post_init__(self):
        self.theta_star = np.atleast_2d(np.asarray(self.theta_star, dtype=float))
        if not self.sigma >= 0:
            raise InvalidConfigError(f"sigma must be >= 0, got {self.sigma}")
        if not np.all(np.isfinite(self.theta_star)):
            raise InvalidConfigError("theta_star has non-finite entries")

    @property
    def k(self) -> int:
        return self.theta_star.shape[0]

    @property
    def d(self) -> int:
        return self.theta_star.shape[1]

    def mean_rewards(self, x) -> np.ndarray:
        return self.theta_star @ np.asarray(x, dtype=float)

    def mean_reward(self, x, a: int) -> float:
        return float(self.theta_star[a] @ np.asarray(x, dtype=float))

    def _clip(self, r):
        if self.reward_clip is None:
            return r
        lo, hi = self.reward_clip
        return np.clip(r, lo, hi)

    def sample(self, X, rows, actions, rng) -> np.ndarray:
        """Noisy rewards for a batch of (context, action) pairs; ``rows`` is unused."""
        X = np.asarray(X, dtype=float)
        actions = np.asarray(actions)
        mean = np.einsum("ij,ij->i", X, self.theta_star[actions])
        noise = rng.standard_normal(mean.shape[0]) if self.sigma > 0 else 0.0
        return self._clip(mean + self.sigma * noise)


@dataclass
class LabelRewardModel:
    """Rewards ``1(a == label)`` for a banditized classification dataset.

    Contexts are addressed by row. In noisy mode the clean reward is revealed
    with probability 0.5 and a fair coin is returned otherwise.
    """

    labels: np.ndarray
    k: int
    noisy: bool = False

    def mean_reward_rows(self, rows, actions) -> np.ndarray:
        return (self.labels[np.asarray(rows)] == np.asarray(actions)).astype(float)

    def sample(self, X, rows, actions, rng) -> np.ndarray:
        clean = self.mean_reward_rows(rows, actions)
        if not self.noisy:
            return clean
        n = clean.shape[0]
        reveal = rng.random(n) < 0.5
        coin = (rng.random(n) < 0.5).astype(float)
        return np.where(reveal, clean, coin)


def gen_synthetic_model(seed: SeedLike, k: int, d: int, sigma: float,
                        reward_clip=None) -> RewardModel:
    if k < 1 or d < 1:
        raise InvalidConfigError(f"need k >= 1 and d >= 1, got k={k}, d={d}")
    rng = as_rng(seed)
    return RewardModel(rng.standard_normal((k, d)), float(sigma), reward_clip)


def sample_contexts(seed: SeedLike, n: int, d: int) -> np.ndarray:
    """``n`` contexts drawn uniformly from the unit cube."""
    return as_rng(seed).random((n, d))


def env_pull(model: RewardModel, x, a: int, rng: np.random.Generator) -> float:
    """One noisy reward draw. Does not count calls; :class:`Environment` does."""
    r = model.mean_reward(x, a)
    if model.sigma > 0:
        r += model.sigma * rng.standard_normal()
    return float(model._clip(r))


class Environment:
    """Reward oracle for one run; owns the reward-call counter."""

    def __init__(self, model, rng: np.random.Generator):
        self.model = model
        self.rng = rng
        self.reward_calls = 0

    def pull(self, x, a: int, row: Optional[int] = None) -> float:
        self.reward_calls += 1
        if isinstance(self.model, LabelRewardModel):
            return banditize_labels(self.model, a, row, self.rng)
        return env_pull(self.model, x, a, self.rng)


# --------------------------------------------------------------------------
# logging policy


class LoggingPolicy:
    """Uniform logging over a per-context supported set.

    ``unsupported[c, a]`` is True when action ``a`` has zero probability at
    context id ``c``; the remaining actions share probability equally.
    """

    def __init__(self, unsupported: np.ndarray):
        unsupported = np.asarray(unsupported, dtype=bool)
        if unsupported.ndim != 2:
            raise InvalidConfigError("unsupported mask must be 2-d")
        n_supported = unsupported.shape[1] - unsupported.sum(axis=1)
        if np.any(n_supported == 0):
            raise InvalidConfigError("every context needs at least one supported action")
        self.unsupported = unsupported
        self.n_supported = n_supported
        self.unsupported.setflags(write=False)

    @property
    def k(self) -> int:
        return self.unsupported.shape[1]

    @property
    def n_contexts(self) -> int:
        return self.unsupported.shape[0]

    @property
    def n_ua(self) -> float:
        """Mean fraction of unsupported actions over contexts."""
        return float(self.unsupported.mean())

    def unsupported_set(self, cid: int) -> frozenset:
        return frozenset(np.flatnonzero(self.unsupported[cid]).tolist())

    def supported_actions(self, cid: int) -> np.ndarray:
        return np.flatnonzero(~self.unsupported[cid])

    def propensity(self, cid: int, a: int) -> float:
        if self.unsupported[cid, a]:
            return 0.0
        return 1.0 / float(self.n_supported[cid])

    def propensities(self, cid: int) -> np.ndarray:
        row = (~self.unsupported[cid]).astype(float)
        return row / row.sum()


def gen_logging_policy(seed: SeedLike, contexts, k: int, n_ua: float,
                       chunk: int = 100_000) -> LoggingPolicy:
    """Hide a uniformly random ``floor(n_ua * k)``-subset of actions per context.

    ``contexts`` may be the context array or just their count.
    """
    if not 0.0 <= n_ua < 1.0:
        raise InvalidConfigError(f"n_ua must lie in [0, 1), got {n_ua}")
    n = contexts if isinstance(contexts, (int, np.integer)) else len(contexts)
    m = int(math.floor(n_ua * k + 1e-9))
    if m >= k:
        raise InvalidConfigError(f"n_ua={n_ua} leaves no supported action for k={k}")
    rng = as_rng(seed)
    mask = np.zeros((n, k), dtype=bool)
    if m > 0:
        for start in range(0, n, chunk):
            stop = min(start + chunk, n)
            keys = rng.random((stop - start, k))
            hidden = np.argpartition(keys, m - 1, axis=1)[:, :m]
            np.put_along_axis(mask[start:stop], hidden, True, axis=1)
    return LoggingPolicy(mask)


# --------------------------------------------------------------------------
# offline data


@dataclass(frozen=True)
class LoggedEvent:
    context_id: int
    x: np.ndarray
    action: int
    reward: float
    propensity: float


class OfflineDataset:
    """Column-stored logged bandit feedback, one event per context id."""

    def __init__(self, context_ids, X, actions, rewards, propensities, k: int):
        self.context_ids = np.asarray(context_ids, dtype=np.int64)
        self.X = np.atleast_2d(np.asarray(X, dtype=float))
        self.actions = np.asarray(actions, dtype=np.int64)
        self.rewards = np.asarray(rewards, dtype=float)
        self.propensities = np.asarray(propensities, dtype=float)
        self.k = int(k)
        n = self.context_ids.shape[0]
        if not (self.X.shape[0] == self.actions.shape[0] == self.rewards.shape[0]
                == self.propensities.shape[0] == n):
            raise CorruptedDatasetError("column lengths differ")
        self._index = None
        self._contiguous = bool(n == 0 or (self.context_ids[0] == 0 and np.array_equal(
            self.context_ids, np.arange(n))))

    def __len__(self) -> int:
        return self.context_ids.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def __getitem__(self, i: int) -> LoggedEvent:
        return LoggedEvent(int(self.context_ids[i]), self.X[i], int(self.actions[i]),
                           float(self.rewards[i]), float(self.propensities[i]))

    def __iter__(self) -> Iterator[LoggedEvent]:
        return (self[i] for i in range(len(self)))

    @property
    def events(self) -> list[LoggedEvent]:
        return list(self)

    @property
    def per_action_counts(self) -> np.ndarray:
        return np.bincount(self.actions, minlength=self.k)

    @property
    def context_index(self) -> dict:
        if self._index is None:
            self._index = {int(c): i for i, c in enumerate(self.context_ids)}
        return self._index

    def position(self, cid: int) -> Optional[int]:
        """Event index logged for ``cid``, or None when the context is not in S."""
        if self._contiguous:
            return cid if 0 <= cid < len(self) else None
        return self.context_index.get(int(cid))

    def __eq__(self, other):
        if not isinstance(other, OfflineDataset):
            return NotImplemented
        return (self.k == other.k and np.array_equal(self.context_ids, other.context_ids)
                and np.array_equal(self.X, other.X)
                and np.array_equal(self.actions, other.actions)
                and np.array_equal(self.rewards, other.rewards)
                and np.array_equal(self.propensities, other.propensities))


def gen_offline_dataset(seed: SeedLike, model, policy: LoggingPolicy, contexts,
                        context_ids=None, policy_rows=None,
                        chunk: int = 100_000) -> OfflineDataset:
    """Log one action per context from ``policy`` and draw its reward.

    ``context_ids`` defaults to ``0..n-1``. ``policy_rows`` (default: the
    context ids) selects the policy row of each context and, for label
    rewards, the dataset row.
    """
    rng = as_rng(seed)
    X = np.atleast_2d(np.asarray(contexts, dtype=float))
    n = X.shape[0]
    ids = np.arange(n) if context_ids is None else np.asarray(context_ids, dtype=np.int64)
    rows = ids if policy_rows is None else np.asarray(policy_rows, dtype=np.int64)
    n_sup = policy.n_supported[rows]
    # pick the j-th supported action with j uniform in [0, n_sup)
    j = np.minimum((rng.random(n) * n_sup).astype(np.int64), n_sup - 1)
    actions = np.empty(n, dtype=np.int64)
    for start in range(0, n, chunk):
        sl = slice(start, min(start + chunk, n))
        supported = ~policy.unsupported[rows[sl]]
        rank = np.cumsum(supported, axis=1) - 1
        actions[sl] = np.argmax(supported & (rank == j[sl, None]), axis=1)
    propensities = 1.0 / n_sup
    rewards = model.sample(X, rows, actions, rng)
    return OfflineDataset(ids, X, actions, rewards, propensities, policy.k)


def validate_dataset(ds: OfflineDataset) -> list[str]:
    """Invariant violations of a (possibly deserialized) dataset, one string each."""
    problems = []
    for i in np.flatnonzero(~(ds.propensities > 0.0)):
        problems.append(f"row {i + 1}: non-positive propensity {ds.propensities[i]!r}")
    for i in np.flatnonzero(ds.propensities > 1.0):
        problems.append(f"row {i + 1}: propensity {ds.propensities[i]!r} exceeds 1")
    for i in np.flatnonzero((ds.actions < 0) | (ds.actions >= ds.k)):
        problems.append(f"row {i + 1}: action {ds.actions[i]} outside [0, {ds.k})")
    for i in np.flatnonzero(~np.isfinite(ds.rewards)):
        problems.append(f"row {i + 1}: non-finite reward")
    seen = {}
    for i, c in enumerate(ds.context_ids.tolist()):
        if c in seen:
            problems.append(f"row {i + 1}: context_id {c} already logged at row {seen[c] + 1}")
        else:
            seen[c] = i
    counts = np.bincount(ds.actions[(ds.actions >= 0) & (ds.actions < ds.k)], minlength=ds.k)
    if int(counts.sum()) != len(ds) and not problems:
        problems.append("per-action counts do not sum to the number of events")
    return problems


def _fmt(v: float) -> str:
    return repr(float(v))


def write_offline_dataset(ds: OfflineDataset, path) -> None:
    """Write the dataset CSV atomically (temp file, then rename)."""
    header = ["context_id"] + [f"x_{j}" for j in range(ds.d)] + ["action", "reward", "propensity"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for i in range(len(ds)):
        w.writerow([int(ds.context_ids[i]), *map(_fmt, ds.X[i]), int(ds.actions[i]),
                    _fmt(ds.rewards[i]), _fmt(ds.propensities[i])])
    atomic_write_text(path, buf.getvalue())


def read_offline_dataset(path, k: Optional[int] = None) -> OfflineDataset:
    """Parse a dataset CSV; ``k`` defaults to the largest logged action + 1."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file") from None
        d = len(header) - 4
        expected = ["context_id"] + [f"x_{j}" for j in range(d)] + ["action", "reward", "propensity"]
        if d < 1 or header != expected:
            raise IngestionError(f"{path}: unexpected header {header}")
        cids, xs, acts, rews, props = [], [], [], [], []
        for lineno, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise IngestionError(f"row {lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                cids.append(int(row[0]))
                xs.append([float(v) for v in row[1:1 + d]])
                acts.append(int(row[1 + d]))
                rews.append(float(row[2 + d]))
                props.append(float(row[3 + d]))
            except ValueError as exc:
                raise IngestionError(f"row {lineno}: {exc}") from None
    n = len(cids)
    X = np.array(xs, dtype=float).reshape(n, d)
    if k is None:
        k = (max(acts) + 1) if acts else 0
    return OfflineDataset(cids, X, acts, rews, props, k)


def atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --------------------------------------------------------------------------
# classification datasets


@dataclass
class BanditizedDataset:
    X: np.ndarray
    labels: np.ndarray
    k: int
    noisy: bool = False
    source_name: str = ""
    normalized: bool = False

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def rows(self) -> list[tuple[np.ndarray, int]]:
        return list(zip(self.X, self.labels.tolist()))

    def reward_model(self) -> LabelRewardModel:
        return LabelRewardModel(self.labels, self.k, self.noisy)


def banditize_labels(model: LabelRewardModel, a: int, row: int, rng) -> float:
    label = int(model.labels[row])
    clean = 1.0 if a == label else 0.0
    if model.noisy and rng.random() >= 0.5:
        return 1.0 if rng.random() < 0.5 else 0.0
    return clean


def banditize(dataset: BanditizedDataset, a: int, row: int, noisy: bool,
              rng: np.random.Generator) -> float:
    """Reveal the bandit reward for predicting class ``a`` on ``row``."""
    if not 0 <= row < len(dataset):
        raise RejectedInputError(f"row {row} out of range")
    if not 0 <= a < dataset.k:
        raise RejectedInputError(f"action {a} out of range")
    return banditize_labels(LabelRewardModel(dataset.labels, dataset.k, noisy), a, row, rng)


def _looks_numeric(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def ingest_csv(path, label_column: int = -1, normalize: bool = True,
               noisy: bool = False) -> BanditizedDataset:
    """Load a numeric CSV with one integer label column.

    A first row with any non-numeric cell is treated as a header. With
    ``normalize`` every feature vector is scaled to unit euclidean norm.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise IngestionError(f"{path}: no data rows")
    start = 0 if all(_looks_numeric(c) for c in rows[0]) else 1
    width = len(rows[start]) if start < len(rows) else 0
    if width < 2:
        raise IngestionError(f"{path}: need at least one feature and a label column")
    col = label_column % width
    feats, labels = [], []
    for lineno in range(start, len(rows)):
        row = rows[lineno]
        if len(row) != width:
            raise IngestionError(f"row {lineno + 1}: expected {width} fields, got {len(row)}")
        try:
            lab = float(row[col])
        except ValueError:
            raise IngestionError(f"row {lineno + 1}: non-numeric label {row[col]!r}") from None
        if lab != int(lab) or lab < 0:
            raise IngestionError(f"row {lineno + 1}: label {row[col]!r} is not a class id >= 0")
        try:
            vec = [float(v) for j, v in enumerate(row) if j != col]
        except ValueError:
            raise IngestionError(f"row {lineno + 1}: non-numeric feature") from None
        if not all(math.isfinite(v) for v in vec):
            raise IngestionError(f"row {lineno + 1}: non-finite feature")
        feats.append(vec)
        labels.append(int(lab))
    X = np.array(feats, dtype=float)
    if normalize:
        norms = np.linalg.norm(X, axis=1)
        norms[norms == 0.0] = 1.0
        X = X / norms[:, None]
    labels = np.array(labels, dtype=np.int64)
    name = os.path.splitext(os.path.basename(os.fspath(path)))[0]
    return BanditizedDataset(X, labels, int(labels.max()) + 1, noisy, name, normalize)


def split_dataset(dataset: BanditizedDataset, fraction: float,
                  seed: SeedLike) -> tuple[BanditizedDataset, BanditizedDataset]:
    """Shuffle and split into ``floor(fraction * n)`` rows and the rest."""
    if not 0.0 < fraction < 1.0:
        raise InvalidConfigError(f"fraction must lie in (0, 1), got {fraction}")
    n = len(dataset)
    perm = as_rng(seed).permutation(n)
    cut = int(math.floor(fraction * n))

    def part(idx):
        return BanditizedDataset(dataset.X[idx], dataset.labels[idx], dataset.k,
                                 dataset.noisy, dataset.source_name, dataset.normalized)

    return part(perm[:cut]), part(perm[cut:])
