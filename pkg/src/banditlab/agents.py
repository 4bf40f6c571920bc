"""Optimistic learners sharing one per-arm state layout.

All arms' centers, design inverses and radii live in stacked arrays so a step
scores every arm with one kernel call. Arms fixed from offline data are
singletons: radius zero and a center that never moves.

The ellipsoid radius is indexed by the number of online observations folded
into the state, so a step that makes no reward call leaves the confidence sets
exactly as they were.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from . import kernels
from .errors import InternalConsistencyError, MissingContextError
from .linconf import (ConfidenceConfig, ConfidenceSet, DesignState, beta_radius,
                      ridge_update)
from .offpolicy import EpsilonSupport, RestrictedPolicy

SKIP_NONE = "none"
SKIP_EPSILON = "epsilon_supported"
SKIP_BELOW_U = "below_u_threshold"

Pull = Callable[[int], float]


@dataclass(slots=True)
class StepOutcome:
    action: int
    reward_called: bool
    reward: Optional[float]
    skip_reason: str
    optimistic_value: float


class LoggedContext(NamedTuple):
    """What the learner may see about a context that also appears in S."""

    context_id: int
    action: int
    reward: float
    propensity: float
    u_value: Optional[float]


class AgentState:
    """Confidence sets for every arm plus the offline objects an agent uses.

    ``radius_scale`` multiplies the theoretical ellipsoid radius; 1.0 keeps the
    exact high-probability radius.
    """

    def __init__(self, k: int, d: int, cfg: ConfidenceConfig, lam: float = 1.0,
                 epsilon_support: Optional[EpsilonSupport] = None,
                 restricted: Optional[RestrictedPolicy] = None,
                 radius_scale: float = 1.0):
        self.k = int(k)
        self.radius_scale = float(radius_scale)
        self.d = int(d)
        self.lam = float(lam)
        self.epsilon_support = epsilon_support
        self.restricted = restricted
        fixed = epsilon_support.learned if epsilon_support is not None else {}
        self.cfg = ConfidenceConfig(cfg.sigma, cfg.delta, cfg.s_x, cfg.s_theta,
                                    max(self.k - len(fixed), 1))
        self.centers = np.zeros((self.k, self.d))
        self.gram_inv = np.zeros((self.k, self.d, self.d))
        self.sqrt_beta = np.zeros(self.k)
        self.singleton = np.zeros(self.k, dtype=bool)
        self.designs: list[Optional[DesignState]] = [None] * self.k
        for a in range(self.k):
            if a in fixed:
                self.singleton[a] = True
                self.centers[a] = fixed[a]
            else:
                self.designs[a] = DesignState(a, self.d, self.lam, self.gram_inv[a],
                                              self.centers[a])
        self.updates = 0
        self.step_count = 0
        self._scores = np.empty(self.k)
        self._refresh_radius()

    def _refresh_radius(self) -> None:
        beta = beta_radius(self.cfg, self.updates, self.lam, self.d)
        self.radius_sq = beta * self.radius_scale ** 2
        self.sqrt_beta[~self.singleton] = math.sqrt(self.radius_sq)

    @property
    def per_action(self) -> list[ConfidenceSet]:
        sets = []
        for a in range(self.k):
            if self.singleton[a]:
                sets.append(ConfidenceSet.singleton(self.centers[a]))
            else:
                sets.append(ConfidenceSet.ellipsoid(self.designs[a], self.radius_sq))
        return sets

    def scores(self, x: np.ndarray) -> np.ndarray:
        return kernels.optimistic_scores(x, self.centers, self.gram_inv,
                                         self.sqrt_beta, self._scores)

    def select(self, x: np.ndarray) -> tuple[int, float]:
        """Optimistic argmax; ties go to the lowest action id."""
        s = self.scores(x)
        a = int(np.argmax(s))
        return a, float(s[a])

    def greedy_action(self, x) -> tuple[int, float]:
        """Argmax of the point estimates, used when the learnt policy is evaluated."""
        v = self.centers @ np.asarray(x, dtype=float)
        a = int(np.argmax(v))
        return a, float(v[a])

    def observe(self, a: int, x: np.ndarray, r: float) -> None:
        ridge_update(self.designs[a], x, r)
        self.updates += 1
        self._refresh_radius()

    def is_fixed(self, a: int) -> bool:
        return bool(self.singleton[a])


def _vec(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float64)


def moful_step(state: AgentState, x, pull: Pull) -> StepOutcome:
    """Play the optimistic arm and update its ellipsoid; always calls the reward."""
    x = _vec(x)
    state.step_count += 1
    a, value = state.select(x)
    r = float(pull(a))
    state.observe(a, x, r)
    return StepOutcome(a, True, r, SKIP_NONE, value)


def eps_moful_step(state: AgentState, x, pull: Pull) -> StepOutcome:
    """Like :func:`moful_step`, but an arm fixed offline is never pulled."""
    x = _vec(x)
    state.step_count += 1
    a, value = state.select(x)
    if state.singleton[a]:
        return StepOutcome(a, False, None, SKIP_EPSILON, value)
    r = float(pull(a))
    state.observe(a, x, r)
    return StepOutcome(a, True, r, SKIP_NONE, value)


def eps_moful_ips_step(state: AgentState, x, logged: Optional[LoggedContext],
                       pull: Pull) -> StepOutcome:
    """One step that also defers to the logged data when it already looks good.

    For a context from S the reward is called only if the optimistic value
    beats that context's clipped-IPS value ``u`` and the arm is not fixed.
    """
    if logged is None:
        return eps_moful_step(state, x, pull)
    if logged.u_value is None or not math.isfinite(logged.u_value):
        raise InternalConsistencyError(f"context {logged.context_id} has no u value")
    x = _vec(x)
    state.step_count += 1
    a, value = state.select(x)
    if not value > logged.u_value:
        return StepOutcome(a, False, None, SKIP_BELOW_U, value)
    if state.singleton[a]:
        return StepOutcome(a, False, None, SKIP_EPSILON, value)
    r = float(pull(a))
    state.observe(a, x, r)
    return StepOutcome(a, True, r, SKIP_NONE, value)


def opr_act(restricted: RestrictedPolicy, context_id: int,
            rng: np.random.Generator) -> int:
    """Sample an action from the restricted policy; never touches the environment."""
    if context_id not in restricted:
        raise MissingContextError(f"context {context_id} is not covered by the restricted policy")
    p = restricted.probs(context_id)
    cdf = np.cumsum(p)
    a = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    a = min(a, restricted.k - 1)
    while p[a] == 0.0:
        a -= 1
    return a
