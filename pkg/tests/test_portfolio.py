import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from iflasso.portfolio import (
    InvalidPriceDataError,
    PriceTable,
    estimate_holdings,
    paper_shape_table,
    read_price_csv,
    returns_panel,
    synth_price_table,
    write_price_csv,
)

DATES3 = ("2020-01-01", "2020-01-02", "2020-01-03")


# -- returns panel


def test_two_asset_example():
    N = np.array([1.0, 2.0])
    P0, P1 = np.array([40.0, 30.0]), np.array([50.0, 30.0])
    Q = np.array([100.0, P1 @ N, P1 @ N])
    assert Q[1] == 110.0 and P0 @ N == 100.0
    pan = returns_panel(PriceTable(DATES3, np.vstack([P0, P1, P1]), Q))
    assert pan.y[0] == pytest.approx(1.10)
    np.testing.assert_allclose(pan.X[0], [0.5, 0.3])
    assert pan.X[0] @ N == pytest.approx(1.10)


def test_constant_prices_give_unit_returns():
    prices = np.full((5, 3), 20.0)
    pan = returns_panel(PriceTable([f"2020-01-0{i}" for i in range(1, 6)], prices, np.full(5, 60.0)))
    assert np.all(pan.y == 1.0)


@given(st.integers(0, 10_000))
def test_panel_matches_loop(seed):
    rng = np.random.default_rng(seed)
    T, K = int(rng.integers(2, 8)), int(rng.integers(1, 5))
    prices = rng.uniform(0.1, 100, (T + 1, K))
    q = rng.uniform(1, 1000, T + 1)
    pan = returns_panel(PriceTable([f"d{t:03d}" for t in range(T + 1)], prices, q))
    for t in range(1, T + 1):
        assert abs(pan.y[t - 1] - q[t] / q[t - 1]) <= 1e-12 * abs(pan.y[t - 1])
        for i in range(K):
            assert abs(pan.X[t - 1, i] - prices[t, i] / q[t - 1]) <= 1e-12 * abs(pan.X[t - 1, i])


@given(st.integers(0, 10_000), st.floats(1e-3, 1e3))
def test_scale_equivariance(seed, c):
    tab = synth_price_table(4, 20, [(0.5, 0.5)], [], seed=seed)
    scaled = PriceTable(tab.dates, c * tab.prices, c * tab.fund_value)
    a, b = returns_panel(tab), returns_panel(scaled)
    np.testing.assert_allclose(b.y, a.y, rtol=1e-12)
    np.testing.assert_allclose(b.X, a.X, rtol=1e-12)


@st.composite
def invested_weights(draw, K):
    raw = np.array(draw(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=K)))
    return tuple(raw / raw.sum())


@given(st.integers(0, 10_000), st.integers(2, 6), st.data())
def test_accounting_identity(seed, K, data):
    T = 30
    breaks = sorted(data.draw(st.sets(st.integers(2, T - 1), max_size=3)))
    weights = [data.draw(invested_weights(K)) for _ in range(len(breaks) + 1)]
    tab = synth_price_table(K, T, weights, breaks, seed=seed)
    pan = returns_panel(tab)
    assert np.max(np.abs(pan.y - np.sum(pan.X * tab.holdings, axis=1))) <= 1e-10


# -- validation


def test_rejects_nonpositive_fund_value():
    prices = np.ones((3, 1))
    with pytest.raises(InvalidPriceDataError):
        PriceTable(DATES3, prices, np.array([1.0, 0.0, 1.0]))
    with pytest.raises(InvalidPriceDataError):
        PriceTable(DATES3, -prices, np.ones(3))
    with pytest.raises(InvalidPriceDataError):
        PriceTable(DATES3[::-1], prices, np.ones(3))


# -- generator


def test_zero_volatility_and_drift_gives_unit_returns():
    tab = synth_price_table(3, 25, [(0.2, 0.3, 0.5), (0.6, 0.4)], [10], seed=1, drift=0.0, vol=0.0)
    assert np.all(tab.prices == tab.prices[0])
    np.testing.assert_allclose(returns_panel(tab).y, 1.0, rtol=0, atol=1e-15)


def test_regime_weights_are_value_fractions():
    tab = synth_price_table(4, 40, [(0.25, 0.25, 0.5), (0.75, 0.0, 0.25)], [20], seed=2)
    for b, w in ((1, [0.25, 0.25, 0.5, 0]), (20, [0.75, 0, 0.25, 0])):
        value = tab.holdings[b - 1] * tab.prices[b - 1]
        np.testing.assert_allclose(value / tab.fund_value[b - 1], w, atol=1e-12)
    assert np.all(tab.holdings[:19] == tab.holdings[0]) and np.all(tab.holdings[19:] == tab.holdings[19])


def test_paper_shape():
    tab = paper_shape_table(758)
    assert tab.K == 20 and tab.T == 2 * 758
    held = np.flatnonzero(np.any(tab.holdings != 0, axis=0))
    assert held.tolist() == [0, 1, 2]
    changes = np.flatnonzero(np.any(np.diff(tab.holdings, axis=0) != 0, axis=1)) + 1
    assert changes.tolist() == [758]


def test_generator_is_deterministic_and_validates():
    a = synth_price_table(3, 20, [(0.5,)], [], seed=4)
    b = synth_price_table(3, 20, [(0.5,)], [], seed=4)
    assert np.array_equal(a.prices, b.prices) and np.array_equal(a.fund_value, b.fund_value)
    with pytest.raises(ValueError):
        synth_price_table(3, 20, [(0.7, 0.7)], [])
    with pytest.raises(ValueError):
        synth_price_table(3, 20, [(0.5,), (0.5,)], [20])


# -- estimation


def test_six_asset_rebalancing_recovered():
    tab = synth_price_table(6, 200, [(0.3, 0.3, 0.4), (0.5, 0.0, 0.5)], [101], seed=0)
    est = estimate_holdings(tab)
    assert est.rebalancing_dates == [tab.dates[101]]
    np.testing.assert_allclose(est.N_hat[:, :3], tab.holdings[:, :3], atol=1e-3)
    assert not np.any(est.N_hat[:, 3:])


def test_empty_fund_has_empty_support():
    tab = synth_price_table(3, 60, [()], [], seed=0)
    assert np.all(tab.holdings == 0)
    np.testing.assert_allclose(returns_panel(tab).y, 1.0)
    assert not np.any(estimate_holdings(tab).N_hat)


def test_single_asset_holdings_constant():
    tab = synth_price_table(1, 100, [(1.0,)], [], seed=0)
    N = estimate_holdings(tab).N_hat[:, 0]
    true = tab.holdings[0, 0]
    ols = np.linalg.lstsq(returns_panel(tab).X, returns_panel(tab).y, rcond=None)[0][0]
    assert ols == pytest.approx(true, rel=1e-12)
    assert np.ptp(N) == 0
    assert N[0] == pytest.approx(ols, rel=1e-3)


def test_holdings_exports(tmp_path):
    tab = synth_price_table(2, 30, [(0.5, 0.5)], [], seed=5)
    est = estimate_holdings(tab)
    est.write_holdings_csv(tmp_path / "holdings.csv")
    est.write_breaks_csv(tmp_path / "breaks.csv")
    rows = (tmp_path / "holdings.csv").read_text().splitlines()
    assert rows[0] == "date,N_1,N_2" and len(rows) == 31
    assert rows[1].split(",")[0] == tab.dates[1]
    back = np.array([[float(v) for v in r.split(",")[1:]] for r in rows[1:]])
    assert np.array_equal(back, est.N_hat)
    assert (tmp_path / "breaks.csv").read_text().splitlines()[0] == "date,asset"


# -- CSV


def test_price_csv_roundtrip(tmp_path):
    tab = synth_price_table(3, 15, [(0.2, 0.3, 0.5)], [], seed=6)
    write_price_csv(tab, tmp_path / "p.csv")
    back = read_price_csv(tmp_path / "p.csv")
    assert back.dates == tab.dates
    assert np.array_equal(back.prices, tab.prices) and np.array_equal(back.fund_value, tab.fund_value)


@pytest.mark.parametrize(
    "body, line, column",
    [
        ("2020-01-02,0,1.0\n", 3, "fund"),
        ("2020-01-02,1.0,x\n", 3, "asset_1"),
        ("2020-13-02,1.0,1.0\n", 3, "date"),
        ("2020-01-01,1.0,1.0\n", 3, "date"),
        ("2020-01-02,1.0\n", 3, None),
    ],
)
def test_price_csv_errors(tmp_path, body, line, column):
    path = tmp_path / "bad.csv"
    path.write_text("date,fund,asset_1\n2020-01-01,1.0,1.0\n" + body + "2020-01-05,1.0,1.0\n")
    with pytest.raises(InvalidPriceDataError) as err:
        read_price_csv(path)
    assert err.value.line == line and err.value.column == column
