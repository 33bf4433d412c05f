"""Builders and random generators shared by the test modules."""

import math
import random
from decimal import Decimal

import oracle

from pumpwatch.metrics import TradeWindow, compute_metric_vector
from pumpwatch.model import METRIC_NAMES, OrderBookSnapshot, Side, Trade

T0 = 1_720_000_000_000

ACCEPTANCE = {}


def D(x):
    return Decimal(str(x))


def book(bids, asks, ts=T0, symbol="GFT", exchange="poloniex"):
    return OrderBookSnapshot(
        ts, exchange, symbol, tuple((D(p), D(q)) for p, q in bids), tuple((D(p), D(q)) for p, q in asks)
    )


def trade(price, qty, side="buy", ts=T0, symbol="GFT", exchange="poloniex", tid=None):
    s = None if side is None else Side(side)
    return Trade(ts, exchange, symbol, D(price), D(qty), s, tid or f"t{ts}-{price}-{qty}")


def window(trades, start=T0 - 60_000, end=T0 + 1, symbol="GFT"):
    return TradeWindow(symbol, start, end, tuple(trades))


def random_ladders(rng: random.Random, max_depth=6):
    """Valid random ladders of decimals with a few significant digits."""
    mid = rng.uniform(0.01, 500.0)
    tick = Decimal(10) ** rng.randint(-6, -1)

    def q():
        return Decimal(rng.randint(1, 100_000)) / 100

    nb, na = rng.randint(1, max_depth), rng.randint(1, max_depth)
    best_bid = (Decimal(str(mid)) / tick).to_integral_value() * tick
    best_bid = max(best_bid, tick * nb)
    bids, p = [], best_bid
    for _ in range(nb):
        bids.append((p, q()))
        p -= tick * rng.randint(1, 5)
    asks, p = [], best_bid + tick * rng.randint(1, 5)
    for _ in range(na):
        asks.append((p, q()))
        p += tick * rng.randint(1, 5)
    return bids, asks


def random_trades(rng: random.Random, ref_price: Decimal, n_max=8, sides=True):
    out = []
    for _ in range(rng.randint(0, n_max)):
        price = (ref_price * Decimal(rng.randint(900, 1100)) / 1000).quantize(Decimal("0.000001"))
        if price <= 0:
            price = Decimal("0.000001")
        qty = Decimal(rng.randint(1, 50_000)) / 100
        side = rng.choice(["buy", "sell"]) if sides else rng.choice(["buy", "sell", None])
        out.append((price, qty, side))
    return out


def _oracle_values(bids, asks, trades, prior):
    vals = {
        "bid_ask_spread": oracle.spread(bids, asks),
        "avg_order_size": oracle.avg_order_size(bids, asks),
        "imbalance": oracle.imbalance(bids, asks),
        "imbalance_ratio": oracle.imbalance_ratio(bids, asks),
        "book_pressure": oracle.pressure(bids, asks),
        "book_slope": oracle.slope(bids, asks) if min(len(bids), len(asks)) >= 2 else None,
        "order_flow_imbalance": oracle.ofi(bids, asks),
        "liquidity_consumption": oracle.liquidity(trades),
        "market_order_impact": oracle.market_impact(trades),
        "relative_impact": oracle.relative_impact(prior, (bids, asks)),
        "vwap": oracle.vwap(trades) if trades else None,
        "high_low_spread": oracle.high_low(trades) if trades else None,
        "trade_count": len(trades),
        "taker_buy_volume": oracle.taker_volume(trades, "buy"),
        "taker_sell_volume": oracle.taker_volume(trades, "sell"),
    }
    return vals


def check_against_oracle(rng: random.Random) -> int:
    """Build one random book/window, compare every metric with the oracle; returns comparisons made."""
    bids, asks = random_ladders(rng)
    prior = random_ladders(rng)
    trades = random_trades(rng, bids[0][0])
    b = book(bids, asks)
    pb = book(*prior, ts=T0 - 5000)
    w = window([trade(p, q, s, ts=T0 - 1000 + i) for i, (p, q, s) in enumerate(trades)])
    got = compute_metric_vector(b, w, pb).values
    want = _oracle_values(bids, asks, trades, prior)
    n = 0
    for m in METRIC_NAMES:
        g, x = got[m], want[m]
        if x is None:
            assert g is None, m
            continue
        scale = float(oracle.magnitude(m, bids, asks, trades))
        assert math.isclose(g, float(x), rel_tol=1e-9, abs_tol=1e-9 * scale), (m, g, float(x), bids, asks, trades)
        n += 1
    return n


HOUR = 3_600_000

# Desk-scale scenario: one hour of history, the last 30 minutes at 5 s cadence.
QUICK = dict(span_ms=HOUR, fine_span_ms=HOUR // 2, trade_rate=0.1)


def scenario_ranks(seed, offsets=(20, 40, 60), modes=("both",), **overrides):
    """Generate one scenario in memory and return its backtest event entry."""
    from pumpwatch.backtest import BacktestEvent, run_backtest
    from pumpwatch.ingest import MarketData
    from pumpwatch.simulator import ScenarioConfig, generate_scenario
    from pumpwatch.zscore import ModelConfig

    sc = generate_scenario(ScenarioConfig(seed=seed, **{**QUICK, **overrides}))
    data = MarketData.from_records(sc.all_records())
    report = run_backtest(
        [BacktestEvent(sc.event, sc.pump_time)], data, offsets=offsets, modes=modes, cfg=ModelConfig(), seed=seed
    )
    assert not report.skipped, report.skipped
    return report.events[0]
