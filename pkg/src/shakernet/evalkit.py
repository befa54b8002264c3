"""Shaker-driven market-trend monitoring, sMAPE scoring and a toy pair-trading backtest."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, InsufficientEntities, LengthMismatch, NegativeCash, ZeroDenominator


@dataclass
class TrendSeries:
    values: np.ndarray
    label: str = "predicted"
    dates: tuple = ()

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError("trend series must be 1-D")
        if np.any(~np.isfinite(self.values)) or np.any(self.values <= 0):
            raise DataError(f"trend series {self.label!r} must be strictly positive")
        if self.dates and len(self.dates) != self.values.size:
            raise LengthMismatch("dates and values differ in length")

    def __len__(self):
        return self.values.size


def normalize_to_100(series) -> np.ndarray:
    series = np.asarray(series, dtype=np.float64)
    if series[0] == 0:
        raise ZeroDenominator("cannot normalize a series starting at zero")
    return 100.0 * series / series[0]


def monitor_trend(m_t: float, prev_prices, prices, f) -> float:
    """Next trend value: ``m_t`` times the ``f``-weighted mean of shaker price ratios."""
    prev_prices = np.asarray(prev_prices, dtype=np.float64)
    prices = np.asarray(prices, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    if not (prev_prices.shape == prices.shape == f.shape):
        raise LengthMismatch("prices and weights must align")
    total = f.sum()
    if total <= 0:
        raise ZeroDenominator("shaker influence strengths sum to zero")
    if np.any(prev_prices == 0):
        raise ZeroDenominator("a shaker's prior price is zero")
    return float(m_t * np.sum(prices / prev_prices * f) / total)


def smape(predicted, truth) -> float:
    """Mean of ``|m - m*| / ((m + m*) / 2)`` over aligned points; lies in [0, 2]."""
    p = predicted.values if isinstance(predicted, TrendSeries) else np.asarray(predicted, float)
    t = truth.values if isinstance(truth, TrendSeries) else np.asarray(truth, float)
    if p.shape != t.shape:
        raise LengthMismatch(f"predicted has {p.size} points, truth has {t.size}")
    if p.size == 0:
        raise LengthMismatch("sMAPE needs at least one point")
    return float(np.mean(np.abs(p - t) / ((p + t) / 2.0)))


def predict_trend(prices, timestamps, report, truth, r: int | None = None):
    """Rolling ``r``-step-ahead trend predictions anchored on the observed trend.

    ``prices`` is ``(L, N)`` in ``report.entities`` order and ``truth`` the
    ground-truth index levels. Returns ``(predicted, truth)`` TrendSeries over
    the dates that received a prediction; ``truth`` is normalized to 100 at
    the window start.
    """
    prices = np.asarray(prices, dtype=np.float64)
    r = report.r if r is None else r
    m_true = normalize_to_100(truth)
    pos = {e: i for i, e in enumerate(report.entities)}
    cols = [pos[e] for e in report.shakers]
    f = report.f[cols]
    L = prices.shape[0]
    if L != m_true.size:
        raise LengthMismatch("prices and truth series differ in length")
    dates, pred, actual = [], [], []
    for t in range(1, L - r):
        pred.append(monitor_trend(m_true[t], prices[t - 1, cols], prices[t, cols], f))
        actual.append(m_true[t + r])
        dates.append(timestamps[t + r])
    return (
        TrendSeries(np.array(pred), "predicted", tuple(dates)),
        TrendSeries(np.array(actual), "truth", tuple(dates)),
    )


def write_trend_csv(predicted: TrendSeries, truth: TrendSeries, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("date", "predicted", "truth"))
        for d, p, t in zip(predicted.dates, predicted.values, truth.values):
            w.writerow((d, repr(float(p)), repr(float(t))))


@dataclass
class BacktestConfig:
    p1: int = 5
    p2: int = 3
    wp: float = 0.01
    q: float = 0.5
    initial_cash: float = 10_000.0
    transaction_cost: float = 0.0
    sell_mode: str = "all"

    def __post_init__(self):
        if self.p1 < 1 or self.p2 < 1:
            raise ValueError("p1 and p2 must be >= 1")
        if not 0 < self.q <= 1:
            raise ValueError("q must lie in (0, 1]")
        if self.wp <= 0:
            raise ValueError("wp must be > 0")
        if self.initial_cash < 0:
            raise ValueError("initial_cash must be >= 0")
        if not 0 <= self.transaction_cost < 1:
            raise ValueError("transaction_cost must lie in [0, 1)")
        if self.sell_mode not in ("all", "fraction"):
            raise ValueError("sell_mode must be 'all' or 'fraction'")


def screening(report, W, cfg: BacktestConfig) -> list:
    """Pair each of the top ``p1`` shakers with its ``p2`` most influenced entities.

    Influence is read from row ``u`` of ``W`` (largest entries first, ties by
    entity id); an entity is never paired with itself.
    """
    W = np.asarray(W, dtype=np.float64)
    entities = report.entities
    n = len(entities)
    if cfg.p2 >= n:
        raise InsufficientEntities(f"p2={cfg.p2} needs more than {n} entities")
    if cfg.p1 > n:
        raise InsufficientEntities(f"p1={cfg.p1} exceeds {n} entities")
    pos = {e: i for i, e in enumerate(entities)}
    pairs = []
    for u in report.ranking[: cfg.p1]:
        i = pos[u]
        cands = sorted((j for j in range(n) if j != i), key=lambda j: (-W[i, j], entities[j]))
        pairs.extend((u, entities[j]) for j in cands[: cfg.p2])
    return pairs


@dataclass
class PortfolioState:
    cash: float
    holdings: dict = field(default_factory=dict)
    equity_curve: list = field(default_factory=list)
    positions: dict = field(default_factory=dict)


@dataclass
class BacktestResult:
    state: PortfolioState
    log: list

    @property
    def final_value(self) -> float:
        return self.log[-1]["total_value"]

    @property
    def total_return(self) -> float:
        start = self.log[0]["total_value"]
        return self.final_value / start - 1.0 if start else 0.0

    def write_log(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("date", "cash", "holdings_value", "total_value", "action_count"))
            for row in self.log:
                w.writerow((row["date"], repr(row["cash"]), repr(row["holdings_value"]),
                            repr(row["total_value"]), row["action_count"]))


def run_backtest(panel, pairs, cfg: BacktestConfig, view=None) -> BacktestResult:
    """Replay the threshold-trigger strategy day by day on one view's prices.

    Shakers are visited in the order they first appear in ``pairs``. A shaker
    whose one-day return reaches ``wp`` buys its pool with ``q`` of the cash
    on hand, split equally; any other day its pool positions are sold. Trades
    fill at that day's price; the first day only marks the starting value.
    """
    view = panel.views[0] if view is None else view
    P = panel.view_matrix(view)
    if np.any(P <= 0):
        raise DataError("backtest prices must be strictly positive")
    pos = {e: i for i, e in enumerate(panel.entities)}
    pools: dict = {}
    for u, j in pairs:
        if u not in pos or j not in pos:
            raise DataError(f"pair ({u}, {j}) references an unknown entity")
        pools.setdefault(u, []).append(j)

    c = cfg.transaction_cost
    state = PortfolioState(cash=float(cfg.initial_cash))
    log = []

    def mark(d, actions):
        hv = 0.0
        for (_, j), sh in state.positions.items():
            hv += sh * P[d, pos[j]]
        total = state.cash + hv
        state.equity_curve.append(total)
        log.append(dict(date=panel.timestamps[d], cash=state.cash, holdings_value=hv,
                        total_value=total, action_count=actions, shares=dict(state.positions)))

    mark(0, 0)
    for d in range(1, P.shape[0]):
        actions = 0
        for u, pool in pools.items():
            ret = P[d, pos[u]] / P[d - 1, pos[u]] - 1.0
            if ret >= cfg.wp:
                budget = cfg.q * state.cash
                if budget <= 0:
                    continue
                per = budget / len(pool)
                for j in pool:
                    key = (u, j)
                    state.positions[key] = state.positions.get(key, 0.0) + per * (1.0 - c) / P[d, pos[j]]
                    actions += 1
                state.cash -= budget
            else:
                for j in pool:
                    key = (u, j)
                    held = state.positions.get(key, 0.0)
                    if held <= 0:
                        continue
                    qty = held if cfg.sell_mode == "all" else cfg.q * held
                    state.cash += qty * P[d, pos[j]] * (1.0 - c)
                    state.positions[key] = held - qty
                    actions += 1
            if state.cash < -1e-9 * max(1.0, cfg.initial_cash):
                raise NegativeCash(f"cash went negative on {panel.timestamps[d]}")
            state.cash = max(state.cash, 0.0)
        mark(d, actions)

    holdings: dict = {}
    for (_, j), sh in state.positions.items():
        holdings[j] = holdings.get(j, 0.0) + sh
    state.holdings = {j: sh for j, sh in sorted(holdings.items()) if sh > 0}
    return BacktestResult(state, log)


def write_summary(path, **fields) -> None:
    Path(path).write_text(json.dumps(fields, indent=1, sort_keys=True) + "\n", encoding="utf-8")
