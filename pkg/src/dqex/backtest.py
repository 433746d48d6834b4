"""Return panels, rolling DQ series and rolling-window portfolio backtests.

Losses are negated simple returns throughout.
"""
from __future__ import annotations

import csv
import datetime as dt
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .dq import DqReport, dq_report
from .optimize.lp import LpError
from .optimize.portfolio import OptimizeError, max_omega_lp, min_dq_ex_lp
from .risk_core import LossSample, RiskLevel, level_value, omega_ratio

TRADING_DAYS = 252


class PanelError(ValueError):
    """Malformed or inconsistent return data."""


@dataclass(frozen=True, eq=False)
class ReturnPanel:
    dates: tuple
    returns: np.ndarray
    tickers: tuple

    def __post_init__(self):
        R = np.atleast_2d(np.asarray(self.returns, dtype=float))
        dates = tuple(self.dates)
        tickers = tuple(str(t) for t in self.tickers)
        if R.shape != (len(dates), len(tickers)):
            raise PanelError(f"returns shape {R.shape} does not match {len(dates)} dates x {len(tickers)} tickers")
        if not np.all(np.isfinite(R)):
            raise PanelError("returns must be finite")
        for a, b in zip(dates, dates[1:]):
            if not a < b:
                raise PanelError(f"dates must be strictly increasing; {b} follows {a}")
        R = R.copy()
        R.setflags(write=False)
        object.__setattr__(self, "returns", R)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "tickers", tickers)

    @property
    def T(self) -> int:
        return self.returns.shape[0]

    @property
    def n(self) -> int:
        return self.returns.shape[1]

    def losses(self, start: int, stop: int) -> LossSample:
        return LossSample(-self.returns[start:stop], labels=self.tickers)


def read_matrix_csv(path) -> tuple[list, list, np.ndarray]:
    """Read a header plus numeric rows; a leading ``date`` column is split off.

    Returns (row keys or None, column labels, matrix).
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise PanelError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    has_date = header[0].lower() == "date"
    labels = header[1:] if has_date else header
    if not labels or any(not h for h in labels):
        raise PanelError(f"{path}: malformed header {rows[0]!r}")
    keys, data = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise PanelError(f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
        cells = row[1:] if has_date else row
        if has_date:
            keys.append((lineno, row[0].strip()))
        values = []
        for label, cell in zip(labels, cells):
            cell = cell.strip()
            if not cell:
                raise PanelError(f"{path}: missing value at row {lineno}, column {label!r}")
            try:
                values.append(float(cell))
            except ValueError:
                raise PanelError(f"{path}: non-numeric value {cell!r} at row {lineno}, column {label!r}") from None
        data.append(values)
    if not data:
        raise PanelError(f"{path}: no data rows")
    return (keys if has_date else None), labels, np.array(data, dtype=float)


def load_returns_csv(path) -> ReturnPanel:
    """Load ``date,TICKER1,...`` with ISO-8601 dates and decimal returns."""
    keys, labels, R = read_matrix_csv(path)
    if keys is None:
        raise PanelError(f"{path}: first header field must be 'date'")
    dates = []
    for lineno, raw in keys:
        try:
            d = dt.date.fromisoformat(raw)
        except ValueError:
            raise PanelError(f"{path}: bad date {raw!r} at row {lineno}") from None
        if dates and d == dates[-1]:
            raise PanelError(f"{path}: duplicated date {raw} at row {lineno}")
        if dates and d < dates[-1]:
            raise PanelError(f"{path}: date {raw} at row {lineno} is earlier than {dates[-1]}")
        dates.append(d)
    if not np.all(np.isfinite(R)):
        raise PanelError(f"{path}: non-finite returns")
    return ReturnPanel(tuple(dates), R, tuple(labels))


@dataclass(frozen=True)
class RollingPoint:
    date: object
    report: DqReport
    loss_gain: float  # E[S+] / E[S-], the reciprocal of Omega at 0


def rolling_dq_series(panel: ReturnPanel, alpha, window: int) -> list[RollingPoint]:
    """DQ reports on every trailing window; date i uses rows (i - window, i]."""
    if window < 2:
        raise PanelError("window must be at least 2")
    if panel.T <= window:
        raise PanelError(f"insufficient history: {panel.T} rows for a window of {window}")
    out = []
    for i in range(window, panel.T):
        ls = panel.losses(i - window + 1, i + 1)
        out.append(RollingPoint(panel.dates[i], dq_report(ls, alpha), omega_ratio(ls.row_sum(), 0.0)))
    return out


@dataclass(frozen=True)
class BacktestConfig:
    window: int = 500
    rebalance: Union[str, int] = "monthly"
    alpha: float = 0.1
    strategy: str = "min_dq_ex"
    threshold_multiple: float = 1.0
    risk_free_rate: float = 0.0
    seed: int = 0
    record_dq: bool = False

    def __post_init__(self):
        if self.window < 2:
            raise ValueError("window must be at least 2")
        if self.strategy not in ("min_dq_ex", "max_omega", "equal_weight"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if isinstance(self.rebalance, str):
            if self.rebalance != "monthly":
                raise ValueError("rebalance must be 'monthly' or a positive day count")
        elif int(self.rebalance) < 1:
            raise ValueError("rebalance period must be positive")
        RiskLevel(self.alpha)
        if self.strategy == "min_dq_ex" and not level_value(self.alpha) < 0.5:
            raise ValueError("min_dq_ex needs alpha in (0, 1/2)")


@dataclass
class BacktestResult:
    dates: list
    wealth: np.ndarray
    weights_history: list
    stats: dict
    fallbacks: list = field(default_factory=list)
    dq_series: Optional[list] = None

    def to_dict(self) -> dict:
        out = {
            "dates": [str(d) for d in self.dates],
            "wealth": self.wealth.tolist(),
            "weights_history": [{"date": str(d), "weights": w.tolist()} for d, w in self.weights_history],
            "stats": dict(self.stats),
            "fallbacks": [str(d) for d in self.fallbacks],
        }
        if self.dq_series is not None:
            out["dq_series"] = [
                {"date": str(p.date), "loss_gain": p.loss_gain, **p.report.to_dict()} for p in self.dq_series
            ]
        return out


def rebalance_indices(dates: Sequence, window: int, rule: Union[str, int]) -> list[int]:
    """Row indices at which weights are refit; the first is always ``window``."""
    T = len(dates)
    if window >= T:
        return []
    if rule == "monthly":
        idx = [window]
        for i in range(window + 1, T):
            if (dates[i].year, dates[i].month) != (dates[i - 1].year, dates[i - 1].month):
                idx.append(i)
        return idx
    return list(range(window, T, int(rule)))


def _fit(panel: ReturnPanel, start: int, stop: int, config: BacktestConfig) -> np.ndarray:
    n = panel.n
    if config.strategy == "equal_weight":
        return np.full(n, 1.0 / n)
    ls = panel.losses(start, stop)
    if config.strategy == "min_dq_ex":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return min_dq_ex_lp(ls, config.alpha).weights
    t0 = float(panel.returns[start:stop].mean())
    return max_omega_lp(ls, config.threshold_multiple * t0).weights


def run_backtest(panel: ReturnPanel, config: BacktestConfig) -> BacktestResult:
    """Refit on the trailing window at each rebalance date and hold the mix.

    Weights fitted at row i see rows [i - window, i) only and apply to the
    returns of rows i, i+1, ... up to the next refit. Between refits the
    portfolio return is w'r per period (constant mix, no costs).
    """
    W = config.window
    if panel.T < W + 1:
        raise PanelError(f"panel has {panel.T} rows; need at least window + 1 = {W + 1}")
    refits = set(rebalance_indices(panel.dates, W, config.rebalance))
    wealth = np.empty(panel.T - W + 1)
    wealth[0] = 1.0
    history, fallbacks = [], []
    w = np.full(panel.n, 1.0 / panel.n)
    for i in range(W, panel.T):
        if i in refits:
            try:
                w = _fit(panel, i - W, i, config)
            except (OptimizeError, LpError, ValueError):
                fallbacks.append(panel.dates[i])
            history.append((panel.dates[i], w.copy()))
        wealth[i - W + 1] = wealth[i - W] * (1.0 + float(panel.returns[i] @ w))
    dates = list(panel.dates[W - 1:])
    series = rolling_dq_series(panel, config.alpha, W) if config.record_dq else None
    return BacktestResult(
        dates=dates,
        wealth=wealth,
        weights_history=history,
        stats=performance_stats(wealth, dates, config.risk_free_rate),
        fallbacks=fallbacks,
        dq_series=series,
    )


def performance_stats(wealth, dates=None, risk_free_rate: float = 0.0) -> dict:
    """AR, AV and SR in percent using 252 trading days per year.

    AR annualises the total return geometrically, AV is the sample standard
    deviation of daily log returns times sqrt(252), and SR = (AR - rf) / AV.
    SR is None when AV vanishes (below 1e-10 percent, i.e. rounding noise).
    """
    wealth = np.asarray(wealth, dtype=float)
    if wealth.size < 2:
        raise ValueError("wealth path needs at least two points")
    if np.any(wealth <= 0.0):
        raise ValueError("wealth must stay positive")
    steps = wealth.size - 1
    ar = ((wealth[-1] / wealth[0]) ** (TRADING_DAYS / steps) - 1.0) * 100.0
    logs = np.diff(np.log(wealth))
    av = float(np.std(logs, ddof=1 if steps > 1 else 0)) * math.sqrt(TRADING_DAYS) * 100.0
    if av < 1e-10:
        av = 0.0
    sr = None if av == 0.0 else float((ar - 100.0 * risk_free_rate) / av * 100.0)
    return {"AR": float(ar), "AV": av, "SR": sr}
