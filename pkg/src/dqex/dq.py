"""Diversification quotients and ratios on joint loss samples."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import brentq

from .risk_core import (
    LevelError,
    LossSample,
    RiskLevel,
    SampleError,
    as_loss_sample,
    es_empirical,
    expectile,
    level_value,
    lower_partial_expectation,
    omega_ratio,
    tilted_cdf,
    upper_partial_expectation,
    var_empirical,
)

_MARGINAL = {"expectile": expectile, "var": var_empirical, "es": es_empirical}


def _lower_half(alpha) -> float:
    a = level_value(alpha)
    if not a < 0.5:
        raise LevelError(f"expectile DQ needs alpha in (0, 1/2), got {a}")
    return a


def _scale_tol(values: np.ndarray, t: float) -> float:
    return 1e-12 * max(1.0, abs(t), float(np.max(np.abs(values))))


def marginal_risks(ls: LossSample, alpha, kind: str = "expectile") -> np.ndarray:
    ls = as_loss_sample(ls)
    rho = _MARGINAL[kind]
    return np.array([rho(col, alpha) for col in ls.columns()])


def dq_ex(ls: LossSample, alpha) -> float:
    """DQ based on expectiles, (1/alpha) E[(S - t)+] / E[|S - t|]."""
    ls = as_loss_sample(ls)
    a = _lower_half(alpha)
    t = float(marginal_risks(ls, a).sum())
    S = ls.row_sum()
    up = upper_partial_expectation(S, t)
    if up == 0.0:
        return 0.0
    down = lower_partial_expectation(S, t)
    return min(up / (a * (up + down)), 1.0)


def dq_ex_tilted(ls: LossSample, alpha) -> float:
    """Same quantity through the tilted distribution function of S."""
    ls = as_loss_sample(ls)
    a = _lower_half(alpha)
    t = float(marginal_risks(ls, a).sum())
    value = (1.0 - tilted_cdf(ls.row_sum(), t)) / a
    return min(max(value, 0.0), 1.0)


def dq_var(ls: LossSample, alpha) -> float:
    """alpha* / alpha with alpha* = P(S > sum of marginal VaRs).

    For uniform weights alpha* is the count of rows exceeding the threshold
    divided by N. Weighted samples use the weighted exceedance probability.
    """
    ls = as_loss_sample(ls)
    a = level_value(alpha)
    t = float(marginal_risks(ls, a, "var").sum())
    S = ls.observations.sum(axis=1)
    exceed = S > t + _scale_tol(S, t)
    if ls.is_uniform:
        return int(exceed.sum()) / (ls.n_obs * a)
    return float(ls.weights[exceed].sum()) / a


def dq_es(ls: LossSample, alpha) -> float:
    """alpha* / alpha with alpha* = inf{beta : ES_beta(S) <= sum of marginal ES}.

    beta * ES_beta(S) is piecewise linear and concave in beta, so the
    crossing with t * beta is located segment by segment and solved exactly.
    """
    ls = as_loss_sample(ls)
    a = level_value(alpha)
    t = float(marginal_risks(ls, a, "es").sum())
    S = ls.observations.sum(axis=1)
    tol = _scale_tol(S, t)
    if S.max() <= t + tol:
        return 0.0
    order = np.argsort(S, kind="stable")[::-1]
    x = S[order]
    w = ls.weights[order]
    keep = w > 0
    x, w = x[keep], w[keep]
    cum = np.cumsum(w)
    excess = np.cumsum((x - t) * w)  # beta ES_beta(S) - t beta at the breakpoints
    hit = np.flatnonzero(excess <= 0.0)
    if hit.size == 0:
        return 1.0 / a
    k = int(hit[0])
    prev_cum = cum[k - 1] if k > 0 else 0.0
    prev_excess = excess[k - 1] if k > 0 else 0.0
    beta = prev_cum + prev_excess / (t - x[k])
    return float(min(beta, 1.0)) / a


def dr(ls: LossSample, alpha, kind: str = "expectile") -> float:
    """Aggregate risk over the sum of marginal risks; 0/0 = 0 and x/0 = inf."""
    ls = as_loss_sample(ls)
    if kind not in _MARGINAL:
        raise LevelError(f"unknown risk measure kind {kind!r}")
    RiskLevel(level_value(alpha), kind)
    num = _MARGINAL[kind](ls.row_sum(), alpha)
    den = float(marginal_risks(ls, alpha, kind).sum())
    if den == 0.0:
        return 0.0 if num == 0.0 else math.copysign(math.inf, num)
    return num / den


def adjusted_level(ls: LossSample, alpha) -> float:
    """The unique c in (0, 1] with ex_{c alpha}(S) = sum of marginal expectiles."""
    ls = as_loss_sample(ls)
    a = _lower_half(alpha)
    if dq_ex(ls, a) == 0.0:
        raise ValueError("adjusted level undefined: dq_ex is 0 (S never exceeds the pooled threshold)")
    t = float(marginal_risks(ls, a).sum())
    S = ls.row_sum()

    def gap(c: float) -> float:
        return expectile(S, c * a) - t

    if gap(1.0) >= 0.0:
        return 1.0
    lo = 0.5
    while gap(lo) <= 0.0:
        lo *= 0.5
        if lo < 1e-300:
            raise ValueError("adjusted level below floating-point range")
    return float(brentq(gap, lo, 1.0, xtol=1e-300, rtol=1e-15, maxiter=500))


def dq_ex_upper_half(ls: LossSample, alpha) -> float:
    """DQ^ex at alpha in (1/2, 1) through the symmetry identity.

    alpha DQ_alpha(X) + (1 - alpha) DQ_{1-alpha}(-X) = 1 for non-degenerate X.
    """
    ls = as_loss_sample(ls)
    a = level_value(alpha)
    if not a > 0.5:
        raise LevelError(f"upper-half DQ needs alpha in (1/2, 1), got {a}")
    if ls.is_constant_vector():
        raise SampleError("symmetry identity requires a non-degenerate loss vector")
    return (1.0 - (1.0 - a) * dq_ex(ls.negated(), 1.0 - a)) / a


@dataclass(frozen=True)
class DqReport:
    dq_ex: float
    dq_var: float
    dq_es: float
    dr: float
    omega_at_t: float
    adjusted_level: float
    alpha: float
    marginal_risks: tuple
    aggregate_threshold: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["marginal_risks"] = list(self.marginal_risks)
        return d


def dq_report(ls: LossSample, alpha) -> DqReport:
    ls = as_loss_sample(ls)
    a = _lower_half(alpha)
    risks = marginal_risks(ls, a)
    t = float(risks.sum())
    value = dq_ex(ls, a)
    return DqReport(
        dq_ex=value,
        dq_var=dq_var(ls, a),
        dq_es=dq_es(ls, a),
        dr=dr(ls, a, "expectile"),
        omega_at_t=omega_ratio(ls.row_sum(), t),
        adjusted_level=a * value,
        alpha=a,
        marginal_risks=tuple(float(r) for r in risks),
        aggregate_threshold=t,
    )
