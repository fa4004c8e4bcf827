"""Share-holdings estimation for a fund observed only through its value.

If a fund holds ``N_{i,t}`` shares of asset ``i`` priced ``P_{i,t}``, its value
is ``Q_t = sum_i N_{i,t} P_{i,t}``, and dividing by ``Q_{t-1}`` gives the
regression

    y_t = Q_t / Q_{t-1} = sum_i (P_{i,t} / Q_{t-1}) N_{i,t}

whose coefficients are the share counts.  Rebalancing changes the counts, so
they are piecewise constant in time and IFL applies directly.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import PanelFormatError, RegressionPanel
from .ifl import IflConfig, IflFit, fit_ifl

__all__ = [
    "InvalidPriceDataError",
    "PriceTable",
    "HoldingsEstimate",
    "returns_panel",
    "estimate_holdings",
    "synth_price_table",
    "paper_shape_table",
    "read_price_csv",
    "write_price_csv",
]


class InvalidPriceDataError(PanelFormatError):
    """Nonpositive or otherwise unusable price data."""


@dataclass(frozen=True, eq=False)
class PriceTable:
    """Asset prices and fund value over ``T + 1`` dates.

    Parameters
    ----------
    dates : sequence of str
        Strictly increasing labels (ISO dates for CSV round trips).
    prices : ndarray, shape (T + 1, K)
        Asset prices ``P_{i,t}``.
    fund_value : ndarray, shape (T + 1,)
        Fund value ``Q_t``.
    holdings : ndarray, shape (T, K), optional
        True share counts, when known (synthetic tables).
    """

    dates: tuple
    prices: np.ndarray
    fund_value: np.ndarray
    holdings: np.ndarray | None = None

    def __post_init__(self):
        prices = np.asarray(self.prices, dtype=float)
        q = np.asarray(self.fund_value, dtype=float)
        dates = tuple(str(d) for d in self.dates)
        if prices.ndim != 2 or q.ndim != 1 or prices.shape[0] != q.size or len(dates) != q.size:
            raise InvalidPriceDataError("dates, prices and fund_value must share their first dimension")
        if q.size < 3:
            raise InvalidPriceDataError("need at least three dates (two returns)")
        if not np.all(np.isfinite(prices)) or not np.all(np.isfinite(q)):
            raise InvalidPriceDataError("prices and fund values must be finite")
        bad = np.flatnonzero(q <= 0)
        if bad.size:
            raise InvalidPriceDataError(f"fund value must be positive (date {dates[bad[0]]})")
        bad = np.argwhere(prices <= 0)
        if bad.size:
            t, i = bad[0]
            raise InvalidPriceDataError(f"price of asset {i + 1} must be positive (date {dates[t]})")
        if any(a >= b for a, b in zip(dates, dates[1:])):
            raise InvalidPriceDataError("dates must be strictly increasing")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "fund_value", q)
        if self.holdings is not None:
            object.__setattr__(self, "holdings", np.asarray(self.holdings, dtype=float))

    @property
    def T(self) -> int:
        return self.fund_value.size - 1

    @property
    def K(self) -> int:
        return self.prices.shape[1]


@dataclass(frozen=True, eq=False)
class HoldingsEstimate:
    """IFL fit of the holdings regression with breaks read as rebalancing dates."""

    fit: IflFit
    dates: tuple

    @property
    def N_hat(self) -> np.ndarray:
        """Estimated share counts, shape ``(T, K)``; row ``t`` belongs to ``dates[t + 1]``."""
        return self.fit.B_hat.by_time

    @property
    def rebalancing(self) -> list[tuple[str, int]]:
        """``(date, asset)`` pairs, asset 1-based, sorted by date then asset."""
        return sorted((self.dates[t + 1], j + 1) for j, t in self.fit.breaks.as_set())

    @property
    def rebalancing_dates(self) -> list[str]:
        return sorted({d for d, _ in self.rebalancing})

    def write_holdings_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["date"] + [f"N_{i}" for i in range(1, self.N_hat.shape[1] + 1)])
            for d, row in zip(self.dates[1:], self.N_hat):
                w.writerow([d] + [repr(float(v)) for v in row])

    def write_breaks_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["date", "asset"])
            w.writerows(self.rebalancing)


def returns_panel(table: PriceTable) -> RegressionPanel:
    """Regression panel with ``y_t = Q_t / Q_{t-1}`` and ``x_{t,i} = P_{i,t} / Q_{t-1}``, ``t = 1..T``."""
    q_prev = table.fund_value[:-1]
    if np.any(q_prev <= 0):
        raise InvalidPriceDataError("fund value must be positive")
    y = table.fund_value[1:] / q_prev
    X = table.prices[1:] / q_prev[:, None]
    return RegressionPanel(y=y, X=X)


def estimate_holdings(table: PriceTable, config: IflConfig = IflConfig()) -> HoldingsEstimate:
    return HoldingsEstimate(fit=fit_ifl(returns_panel(table), config), dates=table.dates)


def _business_days(start: dt.date, n: int) -> list[str]:
    out, d = [], start
    while len(out) < n:
        if d.weekday() < 5:
            out.append(d.isoformat())
        d += dt.timedelta(days=1)
    return out


def synth_price_table(
    K: int,
    T: int,
    regime_weights: Sequence[Sequence[float]],
    break_times: Sequence[int],
    seed: int = 0,
    drift: float = 2e-4,
    vol: float = 0.02,
    obs_noise: float = 0.0,
    initial_value: float = 1e6,
    start: str = "2015-01-02",
) -> PriceTable:
    """Synthetic fund following geometric random-walk prices.

    Parameters
    ----------
    K : int
        Number of assets.
    T : int
        Number of returns; the table has ``T + 1`` dates.
    regime_weights : sequence of sequences
        One weight vector per regime (``len(break_times) + 1`` of them), each of
        length at most ``K`` (missing entries are zero).  Weights are value
        fractions at the start of the regime; any remainder sits in cash.
    break_times : sequence of int
        Return indices ``b`` in ``(1, T)`` at which new holdings take effect,
        i.e. the fund is rebalanced at the close of date ``b - 1``.
    seed : int
        Seed for prices and observation noise.
    drift, vol : float
        Mean and standard deviation of the daily log return of every asset.
    obs_noise : float
        Standard deviation of multiplicative noise on the reported fund value.

    Returns
    -------
    PriceTable
        With ``holdings`` set to the true share counts.

    Notes
    -----
    Shares are held fixed within a regime, so when a regime is fully
    invested ``Q_t = sum_i N_{i,t} P_{i,t}`` exactly.  Cash is carried at zero
    return and is part of ``Q_t`` but not of the regression.
    """
    breaks = list(break_times)
    if len(regime_weights) != len(breaks) + 1:
        raise ValueError("need one weight vector per regime")
    if breaks != sorted(breaks) or any(not 1 < b < T for b in breaks) or len(set(breaks)) != len(breaks):
        raise ValueError("break_times must be distinct, sorted and inside (1, T)")
    W = np.zeros((len(regime_weights), K))
    for r, w in enumerate(regime_weights):
        w = np.asarray(w, dtype=float)
        if w.size > K or np.any(w < 0) or w.sum() > 1 + 1e-12:
            raise ValueError("weights must be nonnegative, at most K long and sum to at most 1")
        W[r, : w.size] = w

    rng = np.random.default_rng(seed)
    p0 = rng.uniform(10.0, 100.0, size=K)
    steps = rng.normal(drift, vol, size=(T, K)) if vol > 0 else np.full((T, K), drift)
    prices = p0 * np.exp(np.vstack([np.zeros(K), np.cumsum(steps, axis=0)]))

    starts = [1] + breaks
    ends = breaks + [T + 1]
    q = np.empty(T + 1)
    N = np.empty((T, K))
    q[0] = initial_value
    for r, (s, e) in enumerate(zip(starts, ends)):
        value = q[s - 1]
        shares = W[r] * value / prices[s - 1]
        cash = value - shares @ prices[s - 1]
        N[s - 1 : e - 1] = shares
        q[s:e] = prices[s:e] @ shares + cash
    if obs_noise > 0:
        q[1:] *= np.exp(rng.normal(0.0, obs_noise, size=T))
    return PriceTable(dates=_business_days(dt.date.fromisoformat(start), T + 1), prices=prices, fund_value=q, holdings=N)


def paper_shape_table(n_per_regime: int = 758, seed: int = 0, **kwargs) -> PriceTable:
    """Twenty assets, three held: 25/25/50 percent, then 75/0/25 percent after one rebalancing."""
    return synth_price_table(
        K=20,
        T=2 * n_per_regime,
        regime_weights=[(0.25, 0.25, 0.50), (0.75, 0.0, 0.25)],
        break_times=[n_per_regime + 1],
        seed=seed,
        **kwargs,
    )


def read_price_csv(path: str | Path) -> PriceTable:
    """Read ``date,fund,asset_1,...,asset_K``; errors carry the line number."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InvalidPriceDataError("empty file", line=1) from None
        K = len(header) - 2
        expected = ["date", "fund"] + [f"asset_{i}" for i in range(1, K + 1)]
        if K < 1 or header != expected:
            raise InvalidPriceDataError("header must be date,fund,asset_1,...,asset_K", line=1)
        dates, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise InvalidPriceDataError(f"expected {len(header)} fields, found {len(row)}", line=lineno)
            try:
                d = dt.date.fromisoformat(row[0].strip()).isoformat()
            except ValueError:
                raise InvalidPriceDataError(f"{row[0]!r} is not an ISO date", line=lineno, column="date") from None
            if dates and d <= dates[-1]:
                raise InvalidPriceDataError("dates must be strictly increasing", line=lineno, column="date")
            vals = []
            for name, cell in zip(header[1:], row[1:]):
                try:
                    v = float(cell)
                except ValueError:
                    raise InvalidPriceDataError(f"value {cell!r} is not numeric", line=lineno, column=name) from None
                if not np.isfinite(v) or v <= 0:
                    raise InvalidPriceDataError(f"value {cell!r} must be positive and finite", line=lineno, column=name)
                vals.append(v)
            dates.append(d)
            rows.append(vals)
    if len(rows) < 3:
        raise InvalidPriceDataError("need at least three dates")
    data = np.array(rows)
    return PriceTable(dates=tuple(dates), prices=data[:, 1:], fund_value=data[:, 0])


def write_price_csv(table: PriceTable, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "fund"] + [f"asset_{i}" for i in range(1, table.K + 1)])
        for d, q, row in zip(table.dates, table.fund_value, table.prices):
            w.writerow([d, repr(float(q))] + [repr(float(v)) for v in row])
