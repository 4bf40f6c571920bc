"""Per-action ridge estimates and optimistic confidence sets.

Each action keeps its own regularized design matrix and reward moment. The
design inverse is maintained by rank-one updates and refactored periodically
so that long horizons stay O(d^2) per step without accumulating drift.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .errors import InvalidConfigError, RejectedInputError

REFACTOR_EVERY = 1000
MIN_DENOMINATOR = 1e-12

ELLIPSOID = "ellipsoid"
SINGLETON = "singleton"


@dataclass(frozen=True)
class ConfidenceConfig:
    """Constants entering the ellipsoid radius.

    ``arm_count_for_union`` is the number of arms the failure probability is
    split over: K for plain optimism, K - L once L arms are fixed offline.
    """

    sigma: float
    delta: float = 0.05
    s_x: float = 1.0
    s_theta: float = 1.0
    arm_count_for_union: int = 1

    def __post_init__(self):
        if not (self.sigma >= 0.0 and math.isfinite(self.sigma)):
            raise InvalidConfigError(f"sigma must be >= 0, got {self.sigma}")
        if not 0.0 < self.delta < 1.0:
            raise InvalidConfigError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.s_x > 0.0:
            raise InvalidConfigError(f"s_x must be positive, got {self.s_x}")
        if not self.s_theta > 0.0:
            raise InvalidConfigError(f"s_theta must be positive, got {self.s_theta}")
        if int(self.arm_count_for_union) < 1:
            raise InvalidConfigError(
                f"arm_count_for_union must be >= 1, got {self.arm_count_for_union}"
            )


class DesignState:
    """Ridge statistics for one action.

    ``gram_inverse`` and ``center`` may be views into arrays owned by an agent;
    every update writes through them in place.
    """

    __slots__ = ("action", "lam", "gram", "moment", "count", "gram_inverse",
                 "center", "_since_refactor")

    def __init__(self, action: int, d: int, lam: float = 1.0,
                 gram_inverse: Optional[np.ndarray] = None,
                 center: Optional[np.ndarray] = None):
        if not lam > 0.0:
            raise InvalidConfigError(f"lambda must be positive, got {lam}")
        self.action = int(action)
        self.lam = float(lam)
        self.gram = lam * np.eye(d)
        self.moment = np.zeros(d)
        self.count = 0
        if gram_inverse is None:
            gram_inverse = np.empty((d, d))
        if center is None:
            center = np.empty(d)
        gram_inverse[...] = np.eye(d) / lam
        center[...] = 0.0
        self.gram_inverse = gram_inverse
        self.center = center
        self._since_refactor = 0

    @property
    def d(self) -> int:
        return self.moment.shape[0]

    def refactor(self) -> None:
        inv = np.linalg.inv(self.gram)
        self.gram_inverse[...] = 0.5 * (inv + inv.T)
        self._since_refactor = 0

    def __repr__(self):
        return f"DesignState(action={self.action}, count={self.count}, lam={self.lam})"


def _as_finite_vector(x, name="x") -> np.ndarray:
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise RejectedInputError(f"{name} must be a vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise RejectedInputError(f"{name} has non-finite entries")
    return arr


def ridge_update(state: DesignState, x, r: float,
                 s_x: Optional[float] = None) -> DesignState:
    """Add one observation ``(x, r)`` to ``state`` in place and return it."""
    x = _as_finite_vector(x)
    r = float(r)
    if not math.isfinite(r):
        raise RejectedInputError(f"reward must be finite, got {r}")
    if x.shape[0] != state.d:
        raise RejectedInputError(f"expected dimension {state.d}, got {x.shape[0]}")
    if s_x is not None and float(x @ x) > s_x * s_x * (1 + 1e-12):
        warnings.warn(f"context norm {np.linalg.norm(x):.4g} exceeds s_x={s_x}",
                      RuntimeWarning, stacklevel=2)

    state.gram += np.outer(x, x)
    state.moment += r * x
    state.count += 1
    state._since_refactor += 1
    if state._since_refactor >= REFACTOR_EVERY:
        state.refactor()
    else:
        denom = kernels.sherman_morrison(state.gram_inverse, x)
        if denom < MIN_DENOMINATOR:
            state.refactor()
    state.center[...] = state.gram_inverse @ state.moment
    return state


def estimate(state: DesignState) -> np.ndarray:
    """Regularized least-squares estimate ``V^{-1} b``."""
    return state.gram_inverse @ state.moment


def beta_radius(cfg: ConfidenceConfig, t: int, lam: float, d: int) -> float:
    """Squared ellipsoid radius after ``t`` iterations.

    ``sqrt(beta) = sigma * sqrt(d * log(m * (1 + t s_x^2 / lam) / delta)) + sqrt(lam) s_theta``
    with ``m = cfg.arm_count_for_union``.
    """
    if t < 0:
        raise InvalidConfigError(f"t must be >= 0, got {t}")
    arg = cfg.arm_count_for_union * (1.0 + t * cfg.s_x ** 2 / lam) / cfg.delta
    if not arg > 0.0:
        raise InvalidConfigError(f"log argument must be positive, got {arg}")
    log_term = max(math.log(arg), 0.0)
    root = cfg.sigma * math.sqrt(d * log_term) + math.sqrt(lam) * cfg.s_theta
    return root * root


class ConfidenceSet:
    """Either an ellipsoid around a ridge estimate or a fixed point."""

    __slots__ = ("kind", "_center", "radius_sq", "design")

    def __init__(self, kind, center, radius_sq=0.0, design=None):
        self.kind = kind
        self._center = center
        self.radius_sq = float(radius_sq)
        self.design = design

    @classmethod
    def ellipsoid(cls, design: DesignState, radius_sq: float) -> "ConfidenceSet":
        return cls(ELLIPSOID, None, radius_sq, design)

    @classmethod
    def singleton(cls, theta) -> "ConfidenceSet":
        theta = np.array(theta, dtype=float)
        theta.setflags(write=False)
        return cls(SINGLETON, theta, 0.0, None)

    @property
    def center(self) -> np.ndarray:
        if self.kind == ELLIPSOID:
            return self.design.center
        return self._center

    def contains(self, theta, atol: float = 0.0) -> bool:
        theta = np.asarray(theta, dtype=float)
        if self.kind == SINGLETON:
            return bool(np.allclose(theta, self._center, rtol=0.0, atol=atol))
        diff = theta - self.design.center
        return float(diff @ self.design.gram @ diff) <= self.radius_sq + atol


def optimistic_value(cset: ConfidenceSet, x) -> tuple[float, np.ndarray]:
    """Maximum of ``<x, theta>`` over the set, and the maximizing ``theta``."""
    x = np.asarray(x, dtype=float)
    if cset.kind == SINGLETON:
        return float(x @ cset.center), cset.center.copy()
    design = cset.design
    vx = design.gram_inverse @ x
    norm = math.sqrt(max(float(x @ vx), 0.0))
    center = design.center
    if norm == 0.0:
        return float(x @ center), center.copy()
    root = math.sqrt(cset.radius_sq)
    return float(x @ center) + root * norm, center + (root / norm) * vx
