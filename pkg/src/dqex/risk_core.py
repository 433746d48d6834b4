"""Scalar risk-measure primitives on weighted empirical samples.

Losses are positive. Every sample carries probability weights (uniform by
default) so that exact discrete laws such as Bernoulli pairs can be written
down as a handful of weighted atoms.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

# survival-probability comparisons snap to the VaR grid within this slack
_GRID_TOL = 1e-12


class SampleError(ValueError):
    """Raised for empty, non-finite or badly weighted samples."""


class LevelError(ValueError):
    """Raised for a risk level outside its admissible band."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _check_weights(weights, n_obs: int) -> np.ndarray:
    if weights is None:
        return np.full(n_obs, 1.0 / n_obs)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.shape[0] != n_obs:
        raise SampleError(f"expected {n_obs} weights, got {w.shape[0]}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise SampleError("weights must be finite and nonnegative")
    if abs(w.sum() - 1.0) > 1e-12:
        raise SampleError(f"weights must sum to 1 (got {w.sum()!r})")
    return w.copy()


@dataclass(frozen=True)
class RiskLevel:
    """A probability level together with the family it parametrises."""

    alpha: float
    kind: str = "expectile"

    def __post_init__(self):
        if self.kind not in ("expectile", "var", "es"):
            raise LevelError(f"unknown risk measure kind {self.kind!r}")
        a = float(self.alpha)
        if not np.isfinite(a) or not 0.0 < a < 1.0:
            raise LevelError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        object.__setattr__(self, "alpha", a)

    @property
    def theta(self) -> float:
        """Safe loading (1 - 2 alpha) / alpha."""
        return (1.0 - 2.0 * self.alpha) / self.alpha


@dataclass(frozen=True, eq=False)
class ScalarSample:
    values: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        x = np.asarray(self.values, dtype=float).reshape(-1)
        if x.size == 0:
            raise SampleError("sample is empty")
        if not np.all(np.isfinite(x)):
            raise SampleError("sample contains non-finite values")
        w = _check_weights(self.weights, x.size)
        object.__setattr__(self, "_uniform", self.weights is None or bool(np.all(w == w[0])))
        object.__setattr__(self, "values", _freeze(x.copy()))
        object.__setattr__(self, "weights", _freeze(w))

    def __len__(self) -> int:
        return self.values.size

    @property
    def is_uniform(self) -> bool:
        return self._uniform

    def mean(self) -> float:
        return float(np.dot(self.weights, self.values))

    def is_degenerate(self) -> bool:
        support = self.values[self.weights > 0]
        return bool(support.max() == support.min())

    def __neg__(self) -> "ScalarSample":
        return ScalarSample(-self.values, self.weights)


@dataclass(frozen=True, eq=False)
class LossSample:
    """N joint observations of n losses, one row per scenario."""

    observations: np.ndarray
    weights: np.ndarray = None
    labels: tuple = field(default=None)

    def __post_init__(self):
        X = np.asarray(self.observations, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
            raise SampleError(f"observations must be a nonempty N x n matrix, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise SampleError("observations contain non-finite values")
        w = _check_weights(self.weights, X.shape[0])
        labels = self.labels
        if labels is None:
            labels = tuple(f"X{i + 1}" for i in range(X.shape[1]))
        labels = tuple(str(s) for s in labels)
        if len(labels) != X.shape[1]:
            raise SampleError(f"expected {X.shape[1]} labels, got {len(labels)}")
        object.__setattr__(self, "_uniform", self.weights is None or bool(np.all(w == w[0])))
        object.__setattr__(self, "observations", _freeze(X.copy()))
        object.__setattr__(self, "weights", _freeze(w))
        object.__setattr__(self, "labels", labels)

    @property
    def n_obs(self) -> int:
        return self.observations.shape[0]

    @property
    def n_assets(self) -> int:
        return self.observations.shape[1]

    @property
    def is_uniform(self) -> bool:
        return self._uniform

    def column(self, i: int) -> ScalarSample:
        return ScalarSample(self.observations[:, i], self.weights)

    def columns(self) -> list[ScalarSample]:
        return [self.column(i) for i in range(self.n_assets)]

    def row_sum(self) -> ScalarSample:
        return ScalarSample(self.observations.sum(axis=1), self.weights)

    def weighted(self, w: Sequence[float]) -> "LossSample":
        """The loss vector w * X (componentwise scaling of the columns)."""
        w = np.asarray(w, dtype=float).reshape(-1)
        if w.shape[0] != self.n_assets:
            raise SampleError(f"expected {self.n_assets} weights, got {w.shape[0]}")
        return LossSample(self.observations * w, self.weights, self.labels)

    def negated(self) -> "LossSample":
        return LossSample(-self.observations, self.weights, self.labels)

    def is_constant_vector(self) -> bool:
        X = self.observations[self.weights > 0]
        return bool(np.all(X.max(axis=0) == X.min(axis=0)))

    def column_means(self) -> np.ndarray:
        return self.weights @ self.observations


SampleLike = Union[ScalarSample, Sequence[float], np.ndarray]


def as_scalar_sample(s: SampleLike) -> ScalarSample:
    return s if isinstance(s, ScalarSample) else ScalarSample(s)


def as_loss_sample(ls) -> LossSample:
    return ls if isinstance(ls, LossSample) else LossSample(ls)


def level_value(alpha) -> float:
    if isinstance(alpha, RiskLevel):
        return alpha.alpha
    return RiskLevel(alpha).alpha


def upper_partial_expectation(s: SampleLike, t: float) -> float:
    """Weighted E[(X - t)+]."""
    s = as_scalar_sample(s)
    return float(np.dot(s.weights, np.maximum(s.values - t, 0.0)))


def lower_partial_expectation(s: SampleLike, t: float) -> float:
    """Weighted E[(X - t)-] = E[(t - X)+]."""
    s = as_scalar_sample(s)
    return float(np.dot(s.weights, np.maximum(t - s.values, 0.0)))


def expectile(s: SampleLike, alpha) -> float:
    """Root t of (1 - alpha) E[(X - t)+] = alpha E[(X - t)-].

    The defining function is piecewise linear and strictly decreasing between
    order statistics, so the bracketing segment is located on the sorted
    sample and the root is solved exactly on it.
    """
    s = as_scalar_sample(s)
    a = level_value(alpha)
    order = np.argsort(s.values, kind="stable")
    x = s.values[order]
    w = s.weights[order]
    if x[0] == x[-1]:
        return float(x[0])
    m = float(np.dot(w, x))
    # tail sums over strictly later positions j > k
    tail_wx = np.concatenate([np.cumsum((w * x)[::-1])[::-1][1:], [0.0]])
    tail_w = np.concatenate([np.cumsum(w[::-1])[::-1][1:], [0.0]])
    upper = np.maximum(tail_wx - x * tail_w, 0.0)
    g = (1.0 - 2.0 * a) * upper + a * (m - x)
    k = int(np.flatnonzero(g >= 0.0)[-1]) if g[0] >= 0.0 else 0
    if k == x.size - 1:
        return float(x[-1])
    A, B = tail_wx[k], tail_w[k]
    t = ((1.0 - 2.0 * a) * A + a * m) / ((1.0 - 2.0 * a) * B + a)
    return float(min(max(t, x[k]), x[k + 1]))


def _survival_after(s: ScalarSample, order: np.ndarray) -> np.ndarray:
    """P(X > x_(k)) position by position along the ascending order."""
    N = len(s)
    if s.is_uniform:
        return np.arange(N - 1, -1, -1, dtype=float) / N
    w = s.weights[order]
    return np.concatenate([np.cumsum(w[::-1])[::-1][1:], [0.0]])


def var_empirical(s: SampleLike, alpha) -> float:
    """Small-alpha VaR: the order statistic X[k] with alpha in ((N-k)/N, (N-k+1)/N].

    For weighted samples this is the smallest atom x with P(X > x) < alpha.
    """
    s = as_scalar_sample(s)
    a = level_value(alpha)
    order = np.argsort(s.values, kind="stable")
    surv = _survival_after(s, order)
    k = int(np.argmax(surv < a - _GRID_TOL))
    return float(s.values[order[k]])


def es_empirical(s: SampleLike, alpha) -> float:
    """(1/alpha) times the integral of the step quantile function over (0, alpha]."""
    s = as_scalar_sample(s)
    a = level_value(alpha)
    order = np.argsort(s.values, kind="stable")[::-1]
    x = s.values[order]
    w = s.weights[order]
    above = np.concatenate([[0.0], np.cumsum(w)[:-1]])
    covered = np.clip(a - above, 0.0, w)
    return float(np.dot(x, covered) / a)


def tilted_cdf(s: SampleLike, y: float) -> float:
    """L(y) / (2 L(y) + E[X] - y) with L(y) = E[(X - y)-].

    A degenerate sample at c gives 0/0 at y = c; it is resolved as 1 when
    y >= c and 0 otherwise.
    """
    s = as_scalar_sample(s)
    low = lower_partial_expectation(s, y)
    denom = 2.0 * low + s.mean() - y
    if denom <= 0.0:
        return 1.0 if y >= s.values.max() else 0.0
    return float(min(max(low / denom, 0.0), 1.0))


def omega_ratio(s: SampleLike, t: float) -> float:
    """E[(R - t)+] / E[(R - t)-]; 0/0 is 0 and x/0 is +inf."""
    s = as_scalar_sample(s)
    up = upper_partial_expectation(s, t)
    down = lower_partial_expectation(s, t)
    if down == 0.0:
        return 0.0 if up == 0.0 else float("inf")
    return up / down
