"""Parametric closed forms, limit values and synthetic samplers.

Elliptical results reduce to the standard one-dimensional marginal Y of the
family: DQ^ex depends on the dispersion matrix only through k_Sigma, the
ratio of summed marginal scales to the scale of the sum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import special, stats
from scipy.optimize import brentq

from .risk_core import LevelError, LossSample, level_value


class ModelError(ValueError):
    """Raised for invalid model parameters."""


@dataclass(frozen=True)
class Generator:
    """Standard marginal of an elliptical family: ``normal`` or ``student_t``."""

    name: str = "normal"
    nu: Optional[float] = None

    def __post_init__(self):
        if self.name == "normal":
            return
        if self.name != "student_t":
            raise ModelError(f"unsupported generator {self.name!r}")
        if self.nu is None or not self.nu > 1.0:
            raise ModelError("student_t generator needs nu > 1 for a finite mean")

    def upper_partial(self, c: float) -> float:
        """E[(Y - c)+] in closed form."""
        if self.name == "normal":
            if c <= 0.0:
                return float(stats.norm.pdf(c) - c * stats.norm.sf(c))
            # Mills-ratio form avoids cancellation deep in the tail
            mills = math.sqrt(math.pi / 2.0) * special.erfcx(c / math.sqrt(2.0))
            return float(stats.norm.pdf(c) * (1.0 - c * mills))
        nu = self.nu
        head = stats.t.pdf(c, nu) * (nu + c * c) / (nu - 1.0)
        return float(head - c * stats.t.sf(c, nu))

    def abs_deviation(self, c: float) -> float:
        """E[|Y - c|] = 2 E[(Y - c)+] + c, using E[Y] = 0."""
        return 2.0 * self.upper_partial(c) + c


NORMAL = Generator("normal")


def student_t(nu: float) -> Generator:
    return Generator("student_t", float(nu))


@dataclass(frozen=True, eq=False)
class EllipticalSpec:
    mu: np.ndarray
    sigma: np.ndarray
    generator: Generator = NORMAL

    def __post_init__(self):
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        n = sigma.shape[0]
        if sigma.shape != (n, n):
            raise ModelError(f"dispersion matrix must be square, got {sigma.shape}")
        if not np.all(np.isfinite(sigma)) or np.max(np.abs(sigma - sigma.T)) > 1e-12:
            raise ModelError("dispersion matrix must be finite and symmetric")
        if np.all(sigma == 0.0):
            raise ModelError("dispersion matrix is the zero matrix")
        if np.any(np.diag(sigma) < 0.0):
            raise ModelError("dispersion matrix has a negative diagonal entry")
        mu = np.zeros(n) if self.mu is None else np.asarray(self.mu, dtype=float).reshape(-1)
        if mu.shape != (n,):
            raise ModelError(f"location must have length {n}")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "mu", mu)

    @property
    def n(self) -> int:
        return self.sigma.shape[0]

    @property
    def scales(self) -> np.ndarray:
        return np.sqrt(np.diag(self.sigma))


def equicorrelated(n: int, r: float, scale: float = 1.0) -> np.ndarray:
    sigma = np.full((n, n), float(r))
    np.fill_diagonal(sigma, 1.0)
    return sigma * scale**2


def k_sigma(sigma) -> float:
    """Sum of marginal scales over the scale of the sum; at least 1."""
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    total = float(sigma.sum())
    if not total > 0.0:
        raise ModelError("1' Sigma 1 must be positive (dispersion matrix not PSD?)")
    return float(np.sqrt(np.diag(sigma)).sum() / math.sqrt(total))


def standard_expectile(generator: Generator, alpha) -> float:
    """Expectile of the standard marginal Y at level alpha."""
    a = level_value(alpha)
    if a == 0.5:
        return 0.0

    # (1 - alpha) E[(Y-c)+] - alpha E[(Y-c)-], with E[(Y-c)-] = E[(Y-c)+] + c
    def foc(c: float) -> float:
        return (1.0 - 2.0 * a) * generator.upper_partial(c) - a * c

    lo, hi = -1.0, 1.0
    while foc(hi) > 0.0:
        hi *= 2.0
    while foc(lo) < 0.0:
        lo *= 2.0
    return float(brentq(foc, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=500))


def _check_lower_half(alpha) -> float:
    a = level_value(alpha)
    if not a < 0.5:
        raise LevelError(f"expectile DQ needs alpha in (0, 1/2), got {a}")
    return a


def elliptical_dq_from_k(k: float, generator: Generator, alpha) -> float:
    a = _check_lower_half(alpha)
    if k <= 1.0:
        # k = 1 exactly for comonotonic dispersion, where DQ is 1
        return 1.0
    c = k * standard_expectile(generator, a)
    up = generator.upper_partial(c)
    return min(up / (a * generator.abs_deviation(c)), 1.0)


def elliptical_dq_ex(spec: EllipticalSpec, alpha) -> float:
    """Closed-form DQ^ex of an elliptical vector; independent of the location."""
    return elliptical_dq_from_k(k_sigma(spec.sigma), spec.generator, alpha)


def elliptical_dr(spec: EllipticalSpec) -> float:
    """DR of a centred elliptical vector, identical for VaR, ES and expectiles."""
    if np.any(spec.mu != 0.0):
        raise ModelError("the DR identity holds for centred elliptical vectors only")
    return 1.0 / k_sigma(spec.sigma)


def _project_scaled_simplex(v: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Euclidean projection of v onto {w >= 0, s'w = 1} for s > 0."""
    ratio = v / s
    order = np.argsort(-ratio)
    sv = np.cumsum((s * v)[order])
    ss = np.cumsum((s * s)[order])
    lam = (sv - 1.0) / ss
    # largest active set whose multiplier keeps every member positive
    valid = ratio[order] - lam > 0.0
    k = int(np.flatnonzero(valid)[-1]) if valid.any() else 0
    return np.maximum(v - lam[k] * s, 0.0)


def qp_kkt_residual(sigma: np.ndarray, w: np.ndarray) -> float:
    """KKT residual of min w'Sigma w s.t. sigma_vec'w = 1, w >= 0 at w (rescaled)."""
    s = np.sqrt(np.diag(sigma))
    w = np.asarray(w, dtype=float) / float(s @ w)
    grad = 2.0 * sigma @ w
    nu = float(w @ grad)
    reduced = grad - nu * s
    active = w > 1e-12
    res = np.where(active, np.abs(reduced), np.maximum(-reduced, 0.0))
    return float(np.max(res))


def elliptical_optimal_weights(spec: EllipticalSpec, tol: float = 1e-10, max_iter: int = 20000) -> np.ndarray:
    """Simplex weights maximising w'sigma / sqrt(w'Sigma w).

    Solved as min w'Sigma w subject to w'sigma = 1, w >= 0 by projected
    gradient with Armijo backtracking, followed by an exact solve on the
    detected support, then rescaled onto the simplex.
    """
    sigma = spec.sigma
    s_full = spec.scales
    live = s_full > 0.0
    if not live.any():
        raise ModelError("all marginal scales are zero: normalisation w'sigma = 1 is infeasible")
    S = sigma[np.ix_(live, live)]
    s = s_full[live]
    w = _project_scaled_simplex(np.full(s.size, 1.0 / s.sum()), s)
    f = float(w @ S @ w)
    step = 1.0 / max(float(np.linalg.norm(S, 2)), 1e-300)
    for _ in range(max_iter):
        grad = 2.0 * S @ w
        while True:
            cand = _project_scaled_simplex(w - step * grad, s)
            fc = float(cand @ S @ cand)
            if fc <= f + 1e-4 * float(grad @ (cand - w)) or step < 1e-300:
                break
            step *= 0.5
        moved = float(np.max(np.abs(cand - w)))
        w, f = cand, fc
        step *= 2.0
        if moved <= tol:
            break
    w = _polish_support(S, s, w)
    out = np.zeros(s_full.size)
    out[live] = w
    return out / out.sum()


def _polish_support(S: np.ndarray, s: np.ndarray, w: np.ndarray) -> np.ndarray:
    support = w > 1e-9 * w.max()
    try:
        z = np.linalg.solve(S[np.ix_(support, support)], s[support])
    except np.linalg.LinAlgError:
        return w
    if not np.all(z > 0.0):
        return w
    cand = np.zeros_like(w)
    cand[support] = z / float(s[support] @ z)
    if qp_kkt_residual(S, cand) <= qp_kkt_residual(S, w):
        return cand
    return w


@dataclass(frozen=True, eq=False)
class MrvSpec:
    """Tail index and a discrete spectral measure (atoms with probabilities)."""

    gamma: float
    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if not self.gamma > 1.0:
            raise ModelError("tail index gamma must exceed 1")
        atoms = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if atoms.shape[0] != weights.shape[0]:
            raise ModelError("one weight per atom is required")
        if np.any(weights < 0.0) or abs(weights.sum() - 1.0) > 1e-10:
            raise ModelError("spectral weights must be nonnegative and sum to 1")
        if np.any(np.abs(np.abs(atoms).sum(axis=1) - 1.0) > 1e-10):
            raise ModelError("spectral atoms must have unit L1 norm")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @property
    def n(self) -> int:
        return self.atoms.shape[1]

    def eta(self, x) -> float:
        proj = np.maximum(self.atoms @ np.asarray(x, dtype=float), 0.0)
        return float(self.weights @ proj**self.gamma)


def coordinate_spectrum(n: int, gamma: float) -> MrvSpec:
    """Spectral measure of iid regularly varying components."""
    return MrvSpec(gamma, np.eye(n), np.full(n, 1.0 / n))


def comonotonic_spectrum(n: int, gamma: float) -> MrvSpec:
    return MrvSpec(gamma, np.full((1, n), 1.0 / n), np.ones(1))


def mrv_limit_dq(spec: MrvSpec) -> float:
    """Limit of DQ^ex as alpha -> 0: eta_1 (sum_i eta_{e_i}^{1/gamma})^{-gamma}."""
    g = spec.gamma
    marg = np.array([spec.eta(e) for e in np.eye(spec.n)])
    if not np.any(marg > 0.0):
        raise ModelError("degenerate spectrum: no mass in any positive coordinate direction")
    return spec.eta(np.ones(spec.n)) * float(np.sum(marg ** (1.0 / g))) ** (-g)


@dataclass(frozen=True)
class BernoulliSpec:
    p: float
    n: int = 2

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ModelError("Bernoulli parameter must lie in (0, 1)")


@dataclass(frozen=True)
class BernoulliOracle:
    ex_marginal: float
    alpha_star_ex: float
    alpha_star_var: Optional[float]
    alpha_star_es: Optional[float]


def bernoulli_oracle(spec: BernoulliSpec, alpha) -> BernoulliOracle:
    """Closed forms for an iid Bernoulli(p) pair.

    The VaR and ES levels are only tabulated for p = 0.1 and are None otherwise.
    """
    if spec.n != 2:
        raise ModelError("closed forms are available for pairs (n = 2) only")
    a = level_value(alpha)
    p = spec.p
    ex = (1.0 - a) * p / (a + p * (1.0 - 2.0 * a))
    if a <= p:
        star_ex = p * a / (1.0 - 2.0 * a * (1.0 - p))
    else:
        star_ex = (a - p + p * p - a * p * p) / (2.0 * p * a + 1.0 - 3.0 * p + 2.0 * p * p * (1.0 - a))
    star_var = star_es = None
    if p == 0.1:
        star_var = 0.19 if a > 0.1 else 0.0
        if a <= 0.1:
            star_es = 0.0
        elif a <= 18.0 / 95.0:
            star_es = a / (20.0 - 100.0 * a)
        else:
            star_es = a
    return BernoulliOracle(ex, star_ex, star_var, star_es)


def bernoulli_pair_sample(p: float) -> LossSample:
    """Exact joint law of two independent Bernoulli(p) losses as four weighted atoms."""
    q = 1.0 - p
    X = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    w = np.array([q * q, p * q, q * p, p * p])
    return LossSample(X, w / w.sum())


@dataclass(frozen=True)
class EquicorrelatedNormal:
    n: int
    r: float


@dataclass(frozen=True)
class MultivariateT:
    nu: float
    sigma: tuple  # nested tuples so the spec stays hashable


@dataclass(frozen=True)
class IidT:
    nu: float
    n: int


@dataclass(frozen=True)
class IidPareto:
    gamma: float
    n: int


SampleModel = Union[EquicorrelatedNormal, MultivariateT, IidT, IidPareto]


def _matrix_root(sigma: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(sigma)
        if vals.min() < -1e-10 * max(1.0, vals.max()):
            raise ModelError("dispersion matrix is not positive semi-definite")
        return vecs * np.sqrt(np.clip(vals, 0.0, None))


def sample_model(model: SampleModel, count: int, seed: Union[int, np.random.SeedSequence] = 0) -> LossSample:
    """Draw ``count`` joint loss scenarios; reproducible for a given seed."""
    if count < 1:
        raise ModelError("count must be positive")
    rng = np.random.default_rng(seed)
    if isinstance(model, EquicorrelatedNormal):
        n, r = int(model.n), float(model.r)
        if n < 1 or (n > 1 and not -1.0 / (n - 1) < r <= 1.0):
            raise ModelError(f"correlation {r} invalid for n = {n}")
        root = _matrix_root(equicorrelated(n, r))
        X = rng.standard_normal((count, n)) @ root.T
    elif isinstance(model, MultivariateT):
        if not model.nu > 1.0:
            raise ModelError("multivariate t needs nu > 1")
        sigma = np.asarray(model.sigma, dtype=float)
        root = _matrix_root(sigma)
        Z = rng.standard_normal((count, sigma.shape[0])) @ root.T
        mix = np.sqrt(rng.chisquare(model.nu, size=count) / model.nu)
        X = Z / mix[:, None]
    elif isinstance(model, IidT):
        if not model.nu > 1.0:
            raise ModelError("t marginals need nu > 1")
        X = rng.standard_t(model.nu, size=(count, int(model.n)))
    elif isinstance(model, IidPareto):
        if not model.gamma > 1.0:
            raise ModelError("Pareto tail index must exceed 1")
        # classical Pareto with unit scale: P(X > x) = x^-gamma for x >= 1
        X = (1.0 - rng.random((count, int(model.n)))) ** (-1.0 / model.gamma)
    else:
        raise ModelError(f"unknown model {model!r}")
    return LossSample(X)
