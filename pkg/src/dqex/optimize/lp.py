"""Dense-tableau two-phase primal simplex with Bland's anti-cycling rule.

Small and deterministic by design: the portfolio LPs here have at most a few
hundred rows, and identical inputs must give identical pivots.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

TOL = 1e-9
# consecutive degenerate pivots before pricing falls back to Bland's rule
_STALL = 20


class LpError(RuntimeError):
    """Base class for LP failures."""


class LpInfeasible(LpError):
    pass


class LpUnbounded(LpError):
    pass


class LpIterationLimit(LpError):
    pass


@dataclass
class LpProblem:
    """minimize c'x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  lo <= x <= hi.

    ``bounds`` holds one (lo, hi) pair per variable, with None for an infinite
    side; the default is (0, None) for every variable. ``big_m`` records the
    artificial bound used by the caller, when one applies.
    """

    c: np.ndarray
    A_ub: Optional[np.ndarray] = None
    b_ub: Optional[np.ndarray] = None
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    bounds: Optional[Sequence[tuple]] = None
    big_m: Optional[float] = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        n = self.c.size
        self.A_ub, self.b_ub = self._rows(self.A_ub, self.b_ub, n, "inequality")
        self.A_eq, self.b_eq = self._rows(self.A_eq, self.b_eq, n, "equality")
        if self.bounds is None:
            self.bounds = [(0.0, None)] * n
        if len(self.bounds) != n:
            raise ValueError(f"expected {n} bounds, got {len(self.bounds)}")
        for lo, hi in self.bounds:
            if lo is not None and hi is not None and lo > hi:
                raise ValueError(f"empty bound interval [{lo}, {hi}]")
        if self.big_m is not None and not (0.0 < self.big_m < math.inf):
            raise ValueError("big-M bound must be positive and finite")

    @staticmethod
    def _rows(A, b, n, what):
        if A is None:
            return np.zeros((0, n)), np.zeros(0)
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).reshape(-1)
        if A.shape[1] != n or A.shape[0] != b.size:
            raise ValueError(f"{what} block has shape {A.shape} with {b.size} right-hand sides; need {n} columns")
        return A, b

    @property
    def n_vars(self) -> int:
        return self.c.size


@dataclass
class LpSolution:
    x: np.ndarray
    objective: float
    status: str = "optimal"
    iterations: int = 0
    active_upper: list = field(default_factory=list)


class _Tableau:
    """Rows 0..m-1 hold constraints; the last row holds reduced costs."""

    def __init__(self, A: np.ndarray, b: np.ndarray, basis: np.ndarray):
        m, n = A.shape
        self.T = np.zeros((m + 1, n + 1))
        self.T[:m, :n] = A
        self.T[:m, n] = b
        self.basis = basis.copy()
        self.iterations = 0

    @property
    def m(self) -> int:
        return self.T.shape[0] - 1

    def set_cost(self, cost: np.ndarray) -> None:
        n = self.T.shape[1] - 1
        self.T[-1, :n] = cost
        self.T[-1, n] = 0.0
        for r, j in enumerate(self.basis):
            if self.T[-1, j] != 0.0:
                self.T[-1] -= self.T[-1, j] * self.T[r]

    def pivot(self, r: int, j: int) -> None:
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        T[:, j] = 0.0
        T[r, j] = 1.0
        self.basis[r] = j
        self.iterations += 1

    def run(self, allowed: np.ndarray, max_iter: int) -> None:
        """Dantzig pricing with a switch to Bland's rule on degenerate stalls.

        After ``_STALL`` consecutive degenerate pivots the entering column is
        the lowest-index improving one until a pivot makes progress again;
        ratio-test ties always leave by the lowest basic index. Bland's rule
        alone is finite but needs orders of magnitude more pivots here.
        """
        T = self.T
        stalled = 0
        while True:
            if self.iterations >= max_iter:
                raise LpIterationLimit(f"simplex exceeded {max_iter} pivots")
            red = T[-1, :-1]
            improving = allowed & (red < -TOL)
            cand = np.flatnonzero(improving)
            if cand.size == 0:
                return
            if stalled >= _STALL:
                j = int(cand[0])
            else:
                j = int(cand[np.argmin(red[cand])])
            col = T[:-1, j]
            rows = np.flatnonzero(col > TOL)
            if rows.size == 0:
                raise LpUnbounded("objective is unbounded below")
            ratios = T[rows, -1] / col[rows]
            best = ratios.min()
            ties = rows[ratios <= best + TOL * max(1.0, abs(best))]
            r = int(ties[np.argmin(self.basis[ties])])
            stalled = stalled + 1 if best <= TOL else 0
            self.pivot(r, j)


def _standard_form(p: LpProblem):
    """Rewrite as min c'y, A y (<= or =) b, y >= 0, with a map back to x."""
    n = p.n_vars
    cols = []  # per original variable: list of (new column index, sign)
    shift = np.zeros(n)
    extra_ub = []  # (original var, width) rows y <= width for finite two-sided bounds
    k = 0
    for i, (lo, hi) in enumerate(p.bounds):
        lo = -math.inf if lo is None else float(lo)
        hi = math.inf if hi is None else float(hi)
        if math.isfinite(lo):
            shift[i] = lo
            cols.append([(k, 1.0)])
            if math.isfinite(hi):
                extra_ub.append((k, hi - lo, i))
            k += 1
        elif math.isfinite(hi):
            shift[i] = hi
            cols.append([(k, -1.0)])
            k += 1
        else:
            cols.append([(k, 1.0), (k + 1, -1.0)])
            k += 2
    Tmap = np.zeros((n, k))
    for i, entries in enumerate(cols):
        for j, s in entries:
            Tmap[i, j] = s
    c = p.c @ Tmap
    A_ub = p.A_ub @ Tmap
    b_ub = p.b_ub - p.A_ub @ shift
    if extra_ub:
        B = np.zeros((len(extra_ub), k))
        for r, (j, width, _) in enumerate(extra_ub):
            B[r, j] = 1.0
        A_ub = np.vstack([A_ub, B])
        b_ub = np.concatenate([b_ub, [w for _, w, _ in extra_ub]])
    A_eq = p.A_eq @ Tmap
    b_eq = p.b_eq - p.A_eq @ shift
    bound_rows = {p.A_ub.shape[0] + r: i for r, (_, _, i) in enumerate(extra_ub)}
    return c, A_ub, b_ub, A_eq, b_eq, Tmap, shift, bound_rows


def solve_lp(p: LpProblem, max_iter: int = 50000) -> LpSolution:
    """Two-phase primal simplex; raises LpInfeasible, LpUnbounded or LpIterationLimit."""
    c, A_ub, b_ub, A_eq, b_eq, Tmap, shift, bound_rows = _standard_form(p)
    k = c.size
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq
    # columns: structural | slacks | artificials
    A = np.zeros((m, k + m_ub))
    A[:m_ub, :k] = A_ub
    A[:m_ub, k:] = np.eye(m_ub)
    A[m_ub:, :k] = A_eq
    b = np.concatenate([b_ub, b_eq])
    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0
    # an inequality row with b >= 0 starts with its slack basic
    needs_art = np.ones(m, dtype=bool)
    needs_art[:m_ub] = flip[:m_ub]
    art_rows = np.flatnonzero(needs_art)
    n_art = art_rows.size
    A_full = np.hstack([A, np.zeros((m, n_art))])
    basis = np.empty(m, dtype=int)
    basis[:m_ub] = k + np.arange(m_ub)
    for a, r in enumerate(art_rows):
        A_full[r, k + m_ub + a] = 1.0
        basis[r] = k + m_ub + a
    n_cols = k + m_ub + n_art
    tab = _Tableau(A_full, b, basis)
    scale = max(1.0, float(np.max(np.abs(b))) if m else 1.0)

    if n_art:
        phase1 = np.zeros(n_cols)
        phase1[k + m_ub:] = 1.0
        tab.set_cost(phase1)
        tab.run(np.ones(n_cols, dtype=bool), max_iter)
        if -tab.T[-1, -1] > TOL * scale:
            raise LpInfeasible(f"no feasible point (phase-one residual {-tab.T[-1, -1]:.3g})")
        # drive zero-level artificials out of the basis; drop redundant rows
        keep = np.ones(tab.m, dtype=bool)
        for r in range(tab.m):
            if tab.basis[r] >= k + m_ub:
                row = tab.T[r, : k + m_ub]
                nz = np.flatnonzero(np.abs(row) > TOL)
                if nz.size:
                    tab.pivot(r, int(nz[0]))
                else:
                    keep[r] = False
        if not keep.all():
            tab.T = np.vstack([tab.T[:-1][keep], tab.T[-1:]])
            tab.basis = tab.basis[keep]
    allowed = np.zeros(n_cols, dtype=bool)
    allowed[: k + m_ub] = True
    cost = np.zeros(n_cols)
    cost[:k] = c
    tab.set_cost(cost)
    tab.run(allowed, max_iter)

    y = np.zeros(n_cols)
    y[tab.basis] = tab.T[:-1, -1]
    x = Tmap @ y[:k] + shift
    active = [i for r, i in bound_rows.items() if y[k + r] <= TOL * scale]
    return LpSolution(x=x, objective=float(p.c @ x), iterations=tab.iterations, active_upper=sorted(active))
