"""Portfolio selection by minimising the expectile DQ or maximising Omega.

Notation used throughout: for simplex weights w and sample rows X_j,
D_j = X_j - x_hat with x_hat the marginal expectiles, the upside is
U(w) = E[(w'D)+] and the cushion is z(w) = -E[w'D] = w'mu. The objective
DQ(w) = U / (alpha (2U + z)) is a monotone function of v = U / z.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special

from ..dq import marginal_risks
from ..risk_core import LevelError, LossSample, as_loss_sample, level_value
from .lp import TOL, LpError, LpInfeasible, LpProblem, solve_lp


class OptimizeError(ValueError):
    """Raised for infeasible or ill-posed portfolio problems."""


class KinkWarning(UserWarning):
    """Sample rows sit exactly on the kink of the positive part."""


def normalize_weights(w) -> np.ndarray:
    w = np.asarray(w, dtype=float).reshape(-1)
    if np.any(w < 0.0) or not np.all(np.isfinite(w)):
        raise OptimizeError("weights must be finite and nonnegative")
    total = w.sum()
    if total <= 0.0:
        raise OptimizeError("weights must not all be zero")
    return w / total


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = int(np.flatnonzero(u - css / idx > 0.0)[-1])
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


@dataclass(frozen=True, eq=False)
class _Problem:
    """Precomputed centred sample for one (sample, alpha) pair."""

    D: np.ndarray  # N x n, rows X_j - x_hat
    p: np.ndarray  # scenario probabilities
    mu: np.ndarray  # per-asset cushion E[x_hat - X]
    alpha: float

    @classmethod
    def build(cls, ls: LossSample, alpha) -> "_Problem":
        a = level_value(alpha)
        if not a < 0.5:
            raise LevelError(f"expectile DQ needs alpha in (0, 1/2), got {a}")
        x_hat = marginal_risks(ls, a)
        D = ls.observations - x_hat
        p = np.asarray(ls.weights)
        return cls(D, p, -(p @ D), a)

    def upside(self, w: np.ndarray) -> float:
        return float(self.p @ np.maximum(self.D @ w, 0.0))

    def objective(self, w: np.ndarray) -> float:
        up = self.upside(w)
        if up == 0.0:
            return 0.0
        return min(up / (self.alpha * (2.0 * up + float(self.mu @ w))), 1.0)


def dq_objective(ls: LossSample, alpha, w) -> float:
    """f(w) = DQ^ex of the loss vector w * X, for w in the nonnegative orthant."""
    w = np.asarray(w, dtype=float)
    if np.any(w < 0.0):
        raise OptimizeError("weights must be nonnegative")
    if not np.any(w > 0.0):
        return 0.0
    return _Problem.build(as_loss_sample(ls), alpha).objective(w)


def _v_to_dq(v: float, alpha: float) -> float:
    return min(v / (alpha * (2.0 * v + 1.0)), 1.0)


@dataclass
class LpResult:
    weights: np.ndarray
    objective: float  # v = U / z at the optimum
    dq: float
    status: str = "optimal"
    iterations: int = 0
    big_m: float = math.nan
    excluded: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "objective": self.objective,
            "dq": self.dq,
            "status": self.status,
            "iterations": self.iterations,
            "big_m": self.big_m,
            "excluded": list(self.excluded),
        }


def _live_columns(prob: _Problem) -> np.ndarray:
    scale = max(1.0, float(np.max(np.abs(prob.D))))
    live = prob.mu > 1e-12 * scale
    if not live.any():
        raise OptimizeError("normalisation infeasible: no asset has a positive cushion (all columns degenerate)")
    dropped = np.flatnonzero(~live)
    if dropped.size:
        warnings.warn(f"excluding degenerate columns {dropped.tolist()} with nonpositive cushion", stacklevel=3)
    return live


def _fractional_lp(D: np.ndarray, p: np.ndarray, mu: np.ndarray, big_m: float) -> LpProblem:
    """Charnes-Cooper form in variables [w~ (n), v0, d~ (N)]; minimises E[d~]."""
    N, n = D.shape
    nv = n + 1 + N
    c = np.zeros(nv)
    c[n + 1:] = p
    A_eq = np.zeros((2, nv))
    A_eq[0, :n] = 1.0
    A_eq[0, n] = -1.0
    A_eq[1, :n] = mu
    b_eq = np.array([0.0, 1.0])
    A_ub = np.zeros((N, nv))
    A_ub[:, :n] = D
    A_ub[:, n + 1:] = -np.eye(N)
    bounds = [(0.0, None)] * n + [(0.0, big_m)] + [(0.0, None)] * N
    return LpProblem(c, A_ub, np.zeros(N), A_eq, b_eq, bounds, big_m)


def _ratio(D: np.ndarray, p: np.ndarray, mu: np.ndarray, w: np.ndarray) -> float:
    return float(p @ np.maximum(D @ w, 0.0)) / float(mu @ w)


def _maximin_tiebreak(D: np.ndarray, p: np.ndarray, mu: np.ndarray, v_star: float) -> Optional[np.ndarray]:
    """Among simplex w with U(w) <= v* z(w), maximise min_i w_i.

    Variables [w (n), tau, d (N)]. The constraint is homogeneous in w, so the
    optimal set of the fractional program is a polytope in w.
    """
    N, n = D.shape
    nv = n + 1 + N
    c = np.zeros(nv)
    c[n] = -1.0
    rows = [np.concatenate([D[j], [0.0], -np.eye(N)[j]]) for j in range(N)]
    A_ub = np.array(rows)
    slack = np.zeros(nv)
    slack[:n] = -v_star * mu
    slack[n + 1:] = p
    floor = np.zeros((n, nv))
    floor[:, :n] = -np.eye(n)
    floor[:, n] = 1.0
    scale = max(1.0, float(np.max(np.abs(D))))
    A_ub = np.vstack([A_ub, slack, floor])
    A_eq = np.zeros((1, nv))
    A_eq[0, :n] = 1.0
    bounds = [(0.0, None)] * n + [(None, None)] + [(0.0, None)] * N
    # the exact optimal set first; a little slack only if rounding makes it look empty
    for eps in (0.0, 1e-11 * scale * (1.0 + v_star)):
        b_ub = np.concatenate([np.zeros(N), [eps], np.zeros(n)])
        try:
            sol = solve_lp(LpProblem(c, A_ub, b_ub, A_eq, np.ones(1), bounds))
        except LpError:
            continue
        return normalize_weights(np.maximum(sol.x[:n], 0.0))
    return None


def min_dq_ex_lp(ls: LossSample, alpha, M: Optional[float] = None, tie_break: bool = True) -> LpResult:
    """Minimise the empirical DQ^ex over the simplex through an exact LP."""
    ls = as_loss_sample(ls)
    prob = _Problem.build(ls, alpha)
    live = _live_columns(prob)
    D, mu, p = prob.D[:, live], prob.mu[live], prob.p
    n = D.shape[1]
    big_m = float(M) if M is not None else 1e4 * n / float(mu.mean())
    iterations = 0
    for _ in range(11):
        # v0 = 1/z must fit under M; an infeasible LP means M is below every 1/z
        try:
            sol = solve_lp(_fractional_lp(D, p, mu, big_m))
        except LpInfeasible:
            big_m *= 2.0
            continue
        iterations += sol.iterations
        if n not in sol.active_upper:
            break
        big_m *= 2.0
    else:
        raise OptimizeError("big-M bound still active after 10 doublings")
    v_star = max(sol.objective, 0.0)
    w_live = normalize_weights(np.maximum(sol.x[:n], 0.0))
    if tie_break:
        alt = _maximin_tiebreak(D, p, mu, v_star)
        # keep the vertex if rounding in the tie-break LP cost any objective
        v_lp = _ratio(D, p, mu, w_live)
        if alt is not None and _ratio(D, p, mu, alt) <= v_lp + 1e-13 * (1.0 + v_lp):
            w_live = alt
    w = np.zeros(ls.n_assets)
    w[live] = w_live
    # report the fractional objective at the returned weights
    v = prob.upside(w) / float(prob.mu @ w)
    return LpResult(
        weights=w,
        objective=v,
        dq=_v_to_dq(v, prob.alpha),
        iterations=iterations,
        big_m=big_m,
        excluded=np.flatnonzero(~live).tolist(),
    )


@dataclass(frozen=True, eq=False)
class FrontierPoint:
    m: float
    upside: float
    weights: np.ndarray

    @property
    def ratio(self) -> float:
        return self.upside / self.m


@dataclass
class FrontierResult:
    best: FrontierPoint
    frontier: list
    dq: float


def _upside_at_cushion(prob: _Problem, m: float) -> FrontierPoint:
    """min E[(w'D)+] subject to w'mu = m and w in the simplex."""
    D, p, mu = prob.D, prob.p, prob.mu
    N, n = D.shape
    nv = n + N
    c = np.zeros(nv)
    c[n:] = p
    A_ub = np.hstack([D, -np.eye(N)])
    A_eq = np.zeros((2, nv))
    A_eq[0, :n] = 1.0
    A_eq[1, :n] = mu
    try:
        sol = solve_lp(LpProblem(c, A_ub, np.zeros(N), A_eq, np.array([1.0, m])))
    except LpInfeasible as exc:
        raise OptimizeError(f"cushion m = {m} is not attainable on the simplex") from exc
    w = normalize_weights(np.maximum(sol.x[:n], 0.0))
    return FrontierPoint(m=m, upside=max(sol.objective, 0.0), weights=w)


def default_cushion_grid(ls: LossSample, alpha, size: int = 40) -> np.ndarray:
    """Log-spaced cushions over [0.05, 1] x the largest attainable cushion."""
    mu = _Problem.build(as_loss_sample(ls), alpha).mu
    m_max, m_min = float(mu.max()), float(mu.min())
    if not m_max > 0.0:
        raise OptimizeError("no attainable positive cushion")
    lo = max(0.05 * m_max, m_min, 1e-300)
    if lo >= m_max:
        return np.array([m_max])
    return np.geomspace(lo, m_max, size)


def min_dq_ex_frontier(
    ls: LossSample, alpha, m_grid: Optional[Sequence[float]] = None, refine: bool = True
) -> FrontierResult:
    """Sweep cushions m, minimising the upside at each, and keep the steepest point.

    upside(m) is convex, so upside(m)/m is quasi-convex in m; with ``refine``
    a golden-section search on the bracketing grid cell sharpens the best point.
    """
    ls = as_loss_sample(ls)
    prob = _Problem.build(ls, alpha)
    grid = default_cushion_grid(ls, alpha) if m_grid is None else np.asarray(m_grid, dtype=float)
    if grid.size == 0:
        raise OptimizeError("empty cushion grid")
    if np.any(grid <= 0.0):
        raise OptimizeError("cushion values must be positive")
    lo_m, hi_m = float(prob.mu.min()), float(prob.mu.max())
    slack = 1e-12 * max(1.0, hi_m)
    if np.any(grid < lo_m - slack) or np.any(grid > hi_m + slack):
        raise OptimizeError(f"cushion grid must lie within the attainable range [{lo_m}, {hi_m}]")
    grid = np.clip(grid, lo_m, hi_m)
    frontier = [_upside_at_cushion(prob, float(m)) for m in grid]
    k = int(np.argmin([pt.ratio for pt in frontier]))
    best = frontier[k]
    if refine and grid.size > 1:
        a = float(grid[max(k - 1, 0)])
        b = float(grid[min(k + 1, grid.size - 1)])
        best = min(best, _golden(prob, a, b), key=lambda pt: pt.ratio)
    return FrontierResult(best=best, frontier=frontier, dq=_v_to_dq(best.ratio, prob.alpha))


def _golden(prob: _Problem, a: float, b: float, iters: int = 60) -> FrontierPoint:
    g = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = _upside_at_cushion(prob, c), _upside_at_cushion(prob, d)
    for _ in range(iters):
        if fc.ratio <= fd.ratio:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = _upside_at_cushion(prob, c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = _upside_at_cushion(prob, d)
        if b - a <= 1e-13 * max(1.0, b):
            break
    return min(fc, fd, key=lambda pt: pt.ratio)


@dataclass
class OmegaResult:
    weights: np.ndarray
    omega: float
    status: str = "optimal"

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "omega": self.omega, "status": self.status}


def _omega(R: np.ndarray, p: np.ndarray, w: np.ndarray, t: float) -> float:
    r = R @ w - t
    up = float(p @ np.maximum(r, 0.0))
    down = float(p @ np.maximum(-r, 0.0))
    if down == 0.0:
        return 0.0 if up == 0.0 else math.inf
    return up / down


def max_omega_lp(ls: LossSample, threshold: float) -> OmegaResult:
    """Maximise the empirical Omega ratio of the portfolio return R = -w'X at t."""
    ls = as_loss_sample(ls)
    R = -np.asarray(ls.observations)
    p = np.asarray(ls.weights)
    t = float(threshold)
    N, n = R.shape
    if np.all(R >= t):
        raise OptimizeError("downside E[(R - t)-] vanishes for every portfolio")
    # minimal downside over the simplex: zero means Omega is unbounded
    nv = n + N
    c = np.zeros(nv)
    c[n:] = p
    A_ub = np.hstack([-R, -np.eye(N)])
    A_eq = np.zeros((1, nv))
    A_eq[0, :n] = 1.0
    low = solve_lp(LpProblem(c, A_ub, np.full(N, -t), A_eq, np.ones(1)))
    if low.objective <= TOL * max(1.0, abs(t)):
        w = normalize_weights(np.maximum(low.x[:n], 0.0))
        return OmegaResult(w, _omega(R, p, w, t), status="unbounded_ratio")
    rbar = p @ R
    vertices = [np.eye(n)[i] for i in range(n)]
    best_vertex = max(vertices, key=lambda w: _omega(R, p, w, t))
    if rbar.max() <= t:
        # the ratio is quasi-convex where the mean excess is nonpositive
        return OmegaResult(best_vertex, _omega(R, p, best_vertex, t), status="vertex")
    # Charnes-Cooper: variables [w~ (n), s, d~ (N)]
    nv = n + 1 + N
    c = np.zeros(nv)
    c[:n] = -rbar
    c[n] = t
    A_eq = np.zeros((2, nv))
    A_eq[0, :n] = 1.0
    A_eq[0, n] = -1.0
    A_eq[1, n + 1:] = p
    A_ub = np.hstack([-R, np.full((N, 1), t), -np.eye(N)])
    sol = solve_lp(LpProblem(c, A_ub, np.zeros(N), A_eq, np.array([0.0, 1.0])))
    if -sol.objective <= TOL:
        return OmegaResult(best_vertex, _omega(R, p, best_vertex, t), status="vertex")
    w = normalize_weights(np.maximum(sol.x[:n], 0.0))
    return OmegaResult(w, _omega(R, p, w, t))


def dq_ex_gradient(ls: LossSample, alpha, w) -> np.ndarray:
    """Analytic gradient of f(w) = U / (alpha (2U + z)) on the open orthant.

    Rows with w'D_j within 1e-12 of zero take the upper indicator value.
    """
    w = np.asarray(w, dtype=float)
    if np.any(w <= 0.0):
        raise OptimizeError("gradient needs strictly positive weights")
    prob = _Problem.build(as_loss_sample(ls), alpha)
    return _gradient(prob, w)


def _gradient(prob: _Problem, w: np.ndarray) -> np.ndarray:
    y = prob.D @ w
    scale = 1e-12 * max(1.0, float(np.max(np.abs(y))))
    at_kink = np.abs(y) <= scale
    if float(prob.p[at_kink].sum()) > 1e-12:
        warnings.warn("sample rows on the kink of the positive part; using the upper indicator", KinkWarning, stacklevel=3)
    ind = (y > 0.0) | at_kink
    up = float(prob.p @ np.maximum(y, 0.0))
    mean_y = float(prob.p @ y)
    den = 2.0 * up - mean_y
    if den <= 0.0:
        return np.zeros_like(w)
    P = (prob.p * ind) @ prob.D
    m = prob.p @ prob.D
    return (up * m - P * mean_y) / (prob.alpha * den * den)


@dataclass
class DescentResult:
    weights: np.ndarray
    objective: float
    iterations: int
    converged: bool

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "objective": self.objective,
            "iterations": self.iterations,
            "converged": self.converged,
        }


def _smoothed(prob: _Problem, w: np.ndarray, tau: float) -> tuple[float, np.ndarray]:
    """Objective and gradient with (y)+ replaced by tau log(1 + exp(y / tau))."""
    y = prob.D @ w
    up = float(prob.p @ (tau * np.logaddexp(0.0, y / tau)))
    mean_y = float(prob.p @ y)
    den = 2.0 * up - mean_y
    P = (prob.p * special.expit(y / tau)) @ prob.D
    m = prob.p @ prob.D
    return up / (prob.alpha * den), (up * m - P * mean_y) / (prob.alpha * den * den)


def _descend(prob: _Problem, w: np.ndarray, tau: float, max_iter: int, tol: float):
    """One projected-gradient run with Armijo backtracking; tau = 0 is the exact objective."""

    def evaluate(x):
        if tau > 0.0:
            return _smoothed(prob, x, tau)
        return prob.objective(x), _gradient(prob, x)

    f, g = evaluate(w)
    step = 1.0
    best_w, best_exact = w.copy(), prob.objective(w)
    for it in range(1, max_iter + 1):
        if np.linalg.norm(project_simplex(w - g) - w) <= tol:
            return w, best_w, best_exact, it, True
        step = min(step * 2.0, 1e6)
        while True:
            cand = project_simplex(w - step * g)
            fc, gc = evaluate(cand)
            if fc <= f + 1e-4 * float(g @ (cand - w)):
                break
            step *= 0.5
            if step < 1e-20:
                return w, best_w, best_exact, it, True
        w, f, g = cand, fc, gc
        exact = prob.objective(w)
        if exact < best_exact:
            best_w, best_exact = w.copy(), exact
    return w, best_w, best_exact, max_iter, False


def min_dq_ex_gradient_descent(
    ls: LossSample, alpha, start=None, max_iter: int = 500, tol: float = 1e-8, smoothing: bool = True
) -> DescentResult:
    """Projected gradient descent on the simplex with Armijo backtracking.

    The empirical objective is only piecewise smooth, and plain descent can
    stall on a kink. With ``smoothing`` the positive part is replaced by a
    softplus whose width shrinks tenfold per stage (warm-started), and the
    last stage runs on the exact objective. The smoothed ratio is convex over
    affine, hence still pseudo-convex, so every stage targets a global minimum.
    The best exact objective over all iterates is returned.
    """
    ls = as_loss_sample(ls)
    prob = _Problem.build(ls, alpha)
    n = ls.n_assets
    w = np.full(n, 1.0 / n) if start is None else normalize_weights(start)
    if np.any(w <= 0.0):
        raise OptimizeError("starting weights must be strictly positive")
    scale = float(np.max(np.abs(prob.D)))
    taus = []
    if smoothing and scale > 0.0:
        tau = 0.1 * float(prob.p @ np.abs(prob.D @ w))
        while tau > 1e-9 * scale:
            taus.append(tau)
            tau *= 0.1
    taus.append(0.0)
    best_w, best_f = w.copy(), prob.objective(w)
    total, converged = 0, False
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", KinkWarning)
        for tau in taus:
            w, stage_w, stage_f, its, converged = _descend(prob, w, tau, max_iter, tol)
            total += its
            if stage_f < best_f:
                best_w, best_f = stage_w, stage_f
    return DescentResult(best_w, best_f, total, converged)


@dataclass(frozen=True)
class ProbeRecord:
    f_w: float
    f_v: float
    directional: float


def pseudo_convexity_probe(ls: LossSample, alpha, w, v) -> ProbeRecord:
    prob = _Problem.build(as_loss_sample(ls), alpha)
    w = np.asarray(w, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(w <= 0.0) or np.any(v <= 0.0):
        raise OptimizeError("probe points must be strictly positive")
    g = _gradient(prob, w)
    return ProbeRecord(prob.objective(w), prob.objective(v), float(g @ (v - w)))
