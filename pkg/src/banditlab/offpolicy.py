"""Offline estimators and the objects derived from logged data.

Policies evaluated here are given either as a dense table ``pi[context_id, a]``
or as a :class:`RestrictedPolicy`.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .environ import (LoggingPolicy, OfflineDataset, RewardModel, as_rng,
                      atomic_write_text, gen_offline_dataset)
from .errors import (CorruptedDatasetError, InsufficientSupportError,
                     InvalidConfigError, MissingContextError)

SINGULAR_COND = 1e12


class RestrictedPolicy:
    """Clipped-IPS-optimal policy over each context's supported actions.

    Stored compactly: per logged context, the probability placed on the logged
    action and the (uniform) probability of every other supported action.
    """

    def __init__(self, context_ids, logged_action, logged_prob, residual_prob,
                 unsupported, clip_m, u_values):
        self.context_ids = np.asarray(context_ids, dtype=np.int64)
        self.logged_action = np.asarray(logged_action, dtype=np.int64)
        self.logged_prob = np.asarray(logged_prob, dtype=float)
        self.residual_prob = np.asarray(residual_prob, dtype=float)
        self.unsupported = np.asarray(unsupported, dtype=bool)
        self.clip_m = float(clip_m)
        self.u_values = np.asarray(u_values, dtype=float)
        n = self.context_ids.shape[0]
        self._contiguous = bool(n == 0 or np.array_equal(self.context_ids, np.arange(n)))
        self._index = None if self._contiguous else \
            {int(c): i for i, c in enumerate(self.context_ids)}

    @property
    def k(self) -> int:
        return self.unsupported.shape[1]

    def __len__(self) -> int:
        return self.context_ids.shape[0]

    def __contains__(self, cid) -> bool:
        if self._contiguous:
            return 0 <= int(cid) < len(self)
        return int(cid) in self._index

    def _row(self, cid) -> int:
        if cid in self:
            return int(cid) if self._contiguous else self._index[int(cid)]
        raise MissingContextError(f"context {cid} is not covered by the restricted policy")

    def probs(self, cid) -> np.ndarray:
        i = self._row(cid)
        row = np.where(self.unsupported[i], 0.0, self.residual_prob[i])
        row[self.logged_action[i]] = self.logged_prob[i]
        return row

    def prob(self, cid, a: int) -> float:
        return float(self.probs(cid)[a])

    def u_value(self, cid) -> float:
        return float(self.u_values[self._row(cid)])

    @property
    def table(self) -> dict:
        return {int(c): self.probs(c) for c in self.context_ids}

    def probs_for_events(self, context_ids, actions) -> np.ndarray:
        rows = np.array([self._row(c) for c in context_ids], dtype=np.int64)
        actions = np.asarray(actions)
        out = np.where(self.unsupported[rows, actions], 0.0, self.residual_prob[rows])
        hit = self.logged_action[rows] == actions
        out[hit] = self.logged_prob[rows][hit]
        return out

    def to_csv(self, path=None) -> str:
        """``context_id, action, probability, u_value`` for every supported action."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["context_id", "action", "probability", "u_value"])
        for i, c in enumerate(self.context_ids.tolist()):
            row = self.probs(c)
            for a in np.flatnonzero(~self.unsupported[i]).tolist():
                w.writerow([c, a, repr(float(row[a])), repr(float(self.u_values[i]))])
        text = buf.getvalue()
        if path is not None:
            atomic_write_text(path, text)
        return text


@dataclass
class EpsilonSupport:
    actions: tuple
    learned: dict
    epsilon_hat: Optional[float] = None

    def __contains__(self, a) -> bool:
        return a in self.learned


@dataclass
class BiasReport:
    empirical_bias: float
    formula_bias: float
    n_samples: int


def _target_probs(dataset: OfflineDataset, pi) -> np.ndarray:
    if isinstance(pi, RestrictedPolicy):
        return pi.probs_for_events(dataset.context_ids, dataset.actions)
    table = np.asarray(pi, dtype=float)
    return table[dataset.context_ids, dataset.actions]


def _ratios(dataset: OfflineDataset, pi) -> np.ndarray:
    mu = dataset.propensities
    if np.any(~(mu > 0.0)):
        bad = int(np.flatnonzero(~(mu > 0.0))[0])
        raise CorruptedDatasetError(f"event {bad} has non-positive propensity {mu[bad]!r}")
    return _target_probs(dataset, pi) / mu


def ips_value(dataset: OfflineDataset, pi) -> float:
    """Plain inverse-propensity estimate of the value of ``pi``."""
    if len(dataset) == 0:
        return 0.0
    return float(np.mean(_ratios(dataset, pi) * dataset.rewards))


def clipped_ips_value(dataset: OfflineDataset, pi, m: float) -> float:
    """IPS with importance weights capped at ``m``."""
    if not m > 0:
        raise InvalidConfigError(f"clip constant must be positive, got {m}")
    if len(dataset) == 0:
        return 0.0
    return float(np.mean(dataset.rewards * np.minimum(_ratios(dataset, pi), m)))


def true_policy_value(model: RewardModel, contexts, pi) -> float:
    """Exact value of ``pi`` under the uniform distribution on ``contexts``."""
    means = np.asarray(contexts, dtype=float) @ model.theta_star.T
    return float(np.mean(np.sum(np.asarray(pi) * means, axis=1)))


def ips_bias_report(model: RewardModel, policy_mu: LoggingPolicy, pi, contexts,
                    n_mc: int, seed, n_samples: int = 100) -> BiasReport:
    """Monte Carlo bias of IPS next to its closed-form value.

    Each simulated dataset draws ``n_samples`` contexts uniformly from the
    enumerable set ``contexts`` (whose rows index ``policy_mu`` and ``pi``).
    """
    contexts = np.asarray(contexts, dtype=float)
    pi = np.asarray(pi, dtype=float)
    means = contexts @ model.theta_star.T
    value = float(np.mean(np.sum(pi * means, axis=1)))
    formula = float(np.mean(-np.sum(np.where(policy_mu.unsupported, pi * means, 0.0), axis=1)))
    rng = as_rng(seed)
    total = 0.0
    for _ in range(n_mc):
        rows = rng.integers(0, contexts.shape[0], size=n_samples)
        ds = gen_offline_dataset(rng, model, policy_mu, contexts[rows], policy_rows=rows)
        total += ips_value(ds, pi[rows])
    return BiasReport(total / n_mc - value, formula, int(n_mc))


def percentile_clip_constant(dataset: OfflineDataset) -> float:
    """Ratio of the 90th to the 10th percentile of logged propensities.

    Percentiles use linear interpolation between closest ranks.
    """
    if len(dataset) == 0:
        raise InvalidConfigError("cannot derive a clip constant from an empty dataset")
    p = dataset.propensities
    return float(np.percentile(p, 90) / np.percentile(p, 10))


def solve_pi_plus(dataset: OfflineDataset, policy_mu: LoggingPolicy,
                  m: float) -> RestrictedPolicy:
    """Maximize clipped IPS over policies that share the logging support.

    The objective touches only the logged action of each context, so the
    maximizer is closed form: put ``min(m * mu, 1)`` on the logged action when
    its reward is positive and spread the rest uniformly over the other
    supported actions. A zero reward leaves the objective flat and the support
    is played uniformly; a negative reward moves all mass off the logged
    action unless it is the only supported one.
    """
    if not m >= 1.0:
        raise InvalidConfigError(
            f"clip constant {m} < 1 admits no distribution with all ratios <= m")
    ids = dataset.context_ids
    n = ids.shape[0]
    if n and ids[0] == 0 and ids[-1] == n - 1 and np.array_equal(ids, np.arange(n)):
        mask = policy_mu.unsupported[:n]
        n_sup = policy_mu.n_supported[:n].astype(float)
    else:
        mask = policy_mu.unsupported[ids]
        n_sup = policy_mu.n_supported[ids].astype(float)
    mu = dataset.propensities
    r = dataset.rewards
    logged = np.where(r > 0.0, np.minimum(m * mu, 1.0), np.where(r < 0.0, 0.0, 1.0 / n_sup))
    logged = np.where(n_sup == 1, 1.0, logged)
    others = np.maximum(n_sup - 1.0, 1.0)
    residual = np.where(n_sup > 1, (1.0 - logged) / others, 0.0)
    residual = np.maximum(residual, 0.0)
    u = r * np.minimum(logged / mu, m)
    return RestrictedPolicy(ids, dataset.actions, logged, residual, mask, m, u)


def build_epsilon_support(dataset: OfflineDataset, l: int,
                          model_for_diagnostics: Optional[RewardModel] = None) -> EpsilonSupport:
    """Fix the ``l`` most-logged actions at their offline least-squares fit."""
    if not 0 <= l <= dataset.k:
        raise InvalidConfigError(f"l must lie in [0, {dataset.k}], got {l}")
    counts = dataset.per_action_counts
    order = sorted(range(dataset.k), key=lambda a: (-int(counts[a]), a))[:l]
    chosen = tuple(sorted(order))
    learned = {}
    d = dataset.d
    by_action = np.argsort(dataset.actions, kind="stable")
    starts = np.searchsorted(dataset.actions[by_action], np.arange(dataset.k + 1))
    for a in chosen:
        idx = by_action[starts[a]:starts[a + 1]]
        n_a = idx.shape[0]
        if n_a < d:
            raise InsufficientSupportError(a, f"action {a}: {n_a} logged contexts, need >= {d}")
        Xa = dataset.X[idx]
        second = Xa.T @ Xa / n_a
        cross = Xa.T @ dataset.rewards[idx] / n_a
        if not np.linalg.cond(second) < SINGULAR_COND:
            raise InsufficientSupportError(a, f"action {a}: second-moment matrix is singular")
        learned[a] = np.linalg.solve(second, cross)
    eps = None
    if model_for_diagnostics is not None and chosen:
        eps = max(float(np.linalg.norm(learned[a] - model_for_diagnostics.theta_star[a]))
                  for a in chosen)
    elif model_for_diagnostics is not None:
        eps = 0.0
    return EpsilonSupport(chosen, learned, eps)
