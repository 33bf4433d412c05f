"""Order-book and trade metrics.

Book metrics take one :class:`OrderBookSnapshot`; trade metrics take a
half-open :class:`TradeWindow`. :func:`compute_metric_vector` bundles all of
them and degrades individual failures to absent (``None``) values.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from typing import Iterator, List, NamedTuple, Optional, Sequence

from .errors import (
    EmptySide,
    EmptyWindow,
    InsufficientDepth,
    MetricError,
    MissingSide,
    SymbolMismatch,
    ZeroDenominator,
)
from .model import MetricVector, OrderBookSnapshot, Side, Trade

DEFAULT_SLOPE_LEVELS = 10


@dataclass(frozen=True)
class TradeWindow:
    symbol: str
    window_start: int
    window_end: int
    trades: Sequence[Trade]

    def __post_init__(self):
        prev = self.window_start
        for t in self.trades:
            if not self.window_start <= t.timestamp < self.window_end:
                raise ValueError(f"trade {t.trade_id} outside [{self.window_start}, {self.window_end})")
            if t.timestamp < prev:
                raise ValueError("trades not in time order")
            prev = t.timestamp


@dataclass(frozen=True)
class BookPair:
    before: OrderBookSnapshot
    after: OrderBookSnapshot

    def __post_init__(self):
        if (self.before.exchange, self.before.symbol) != (self.after.exchange, self.after.symbol):
            raise SymbolMismatch("book pair spans different instruments")
        if self.before.timestamp >= self.after.timestamp:
            raise ValueError("book pair timestamps must strictly increase")


def _need_both(book: OrderBookSnapshot) -> None:
    if not book.bids or not book.asks:
        raise EmptySide(f"{book.symbol}@{book.timestamp}: one side empty")


def mid_price(book: OrderBookSnapshot) -> float:
    _need_both(book)
    return (book.bid_prices[0] + book.ask_prices[0]) / 2.0


def bid_ask_spread(book: OrderBookSnapshot) -> float:
    """Best ask minus best bid. Non-positive for crossed or touching books."""
    _need_both(book)
    return book.ask_prices[0] - book.bid_prices[0]


def average_order_size(book: OrderBookSnapshot) -> float:
    qs = book.bid_qtys + book.ask_qtys
    if not qs:
        raise EmptySide("empty book")
    return sum(qs) / len(qs)


def imbalance(book: OrderBookSnapshot) -> float:
    ask_total = sum(book.ask_qtys)
    if ask_total <= 0:
        raise ZeroDenominator("no ask quantity")
    return sum(book.bid_qtys) / ask_total


def imbalance_ratio(book: OrderBookSnapshot) -> float:
    """Notional imbalance scaled by mid-price, in the table's literal form.

    ``(N_bid * P_mid - N_ask * P_mid) / (N_bid + N_ask)`` where ``N`` is the
    side's notional (sum of price * qty) and ``P_mid`` the touch midpoint.
    The result carries price units.
    """
    _need_both(book)
    n_bid = sum(p * q for p, q in zip(book.bid_prices, book.bid_qtys))
    n_ask = sum(p * q for p, q in zip(book.ask_prices, book.ask_qtys))
    denom = n_bid + n_ask
    if denom == 0:
        raise ZeroDenominator("zero notional")
    p_mid = (book.bid_prices[0] + book.ask_prices[0]) / 2.0
    return (n_bid * p_mid - n_ask * p_mid) / denom


def order_book_pressure(book: OrderBookSnapshot) -> float:
    bid_total = sum(book.bid_qtys)
    total = bid_total + sum(book.ask_qtys)
    if total <= 0:
        raise ZeroDenominator("empty book")
    return bid_total / total


def order_book_slope(book: OrderBookSnapshot, levels: int = DEFAULT_SLOPE_LEVELS) -> float:
    """Median over the top levels of (bid qty step - ask qty step), best-first."""
    if levels < 1:
        raise ValueError("levels must be positive")
    n = min(levels, len(book.bids), len(book.asks))
    if n < 2:
        raise InsufficientDepth(f"need 2 levels per side, have {len(book.bids)}/{len(book.asks)}")
    bq, aq = book.bid_qtys, book.ask_qtys
    return statistics.median((bq[i] - bq[i - 1]) - (aq[i] - aq[i - 1]) for i in range(1, n))


def order_flow_imbalance(book: OrderBookSnapshot) -> float:
    """Total resting bid minus ask quantity; positive means bid-heavy."""
    return sum(book.bid_qtys) - sum(book.ask_qtys)


def liquidity_consumption(window: TradeWindow) -> float:
    return sum(t.qty_f for t in window.trades)


def market_orders_impact(window: TradeWindow) -> float:
    buy = sell = 0.0
    for t in window.trades:
        if t.taker_side is Side.BUY:
            buy += t.qty_f
        elif t.taker_side is Side.SELL:
            sell += t.qty_f
        else:
            raise MissingSide(f"trade {t.trade_id} has no taker side")
    return buy + sell


def relative_impact(pair: BookPair) -> float:
    """Relative change of the mid-price from ``pair.before`` to ``pair.after``."""
    before = mid_price(pair.before)
    after = mid_price(pair.after)
    if before == 0:
        raise ZeroDenominator("zero mid-price")
    return (after - before) / before


def vwap(window: TradeWindow) -> float:
    qty = sum(t.qty_f for t in window.trades)
    if qty <= 0:
        raise EmptyWindow(f"{window.symbol}: no volume in window")
    return sum(t.price_f * t.qty_f for t in window.trades) / qty


class WindowSummary(NamedTuple):
    high_low_spread: Optional[float]
    trade_count: int
    taker_buy_volume: float
    taker_sell_volume: float


def trade_window_summary(window: TradeWindow) -> WindowSummary:
    trades = window.trades
    if not trades:
        return WindowSummary(None, 0, 0.0, 0.0)
    prices = [t.price_f for t in trades]
    buy = sum(t.qty_f for t in trades if t.taker_side is Side.BUY)
    sell = sum(t.qty_f for t in trades if t.taker_side is Side.SELL)
    return WindowSummary(max(prices) - min(prices), len(trades), buy, sell)


def _safe(fn, *args) -> Optional[float]:
    try:
        return fn(*args)
    except MetricError:
        return None


def compute_metric_vector(
    book: OrderBookSnapshot,
    window: TradeWindow,
    prior_book: Optional[OrderBookSnapshot] = None,
    slope_levels: int = DEFAULT_SLOPE_LEVELS,
) -> MetricVector:
    """Evaluate every metric for one book and its trailing trade window.

    ``relative_impact`` needs ``prior_book``; without it the value is absent.
    """
    if book.symbol != window.symbol:
        raise SymbolMismatch(f"book {book.symbol} vs window {window.symbol}")
    if prior_book is not None and prior_book.symbol != book.symbol:
        raise SymbolMismatch(f"prior book {prior_book.symbol} vs book {book.symbol}")

    summary = trade_window_summary(window)
    impact = None
    if prior_book is not None and prior_book.timestamp < book.timestamp and prior_book.exchange == book.exchange:
        impact = _safe(relative_impact, BookPair(prior_book, book))
    values = {
        "bid_ask_spread": _safe(bid_ask_spread, book),
        "avg_order_size": _safe(average_order_size, book),
        "imbalance": _safe(imbalance, book),
        "imbalance_ratio": _safe(imbalance_ratio, book),
        "book_pressure": _safe(order_book_pressure, book),
        "book_slope": _safe(order_book_slope, book, slope_levels),
        "liquidity_consumption": liquidity_consumption(window),
        "order_flow_imbalance": order_flow_imbalance(book),
        "market_order_impact": _safe(market_orders_impact, window),
        "relative_impact": impact,
        "vwap": _safe(vwap, window),
        "high_low_spread": summary.high_low_spread,
        "trade_count": float(summary.trade_count),
        "taker_buy_volume": summary.taker_buy_volume,
        "taker_sell_volume": summary.taker_sell_volume,
    }
    flags = ("crossed_book",) if book.is_crossed else ()
    return MetricVector(book.symbol, window.window_start, window.window_end, values, flags)


def stream_metric_vectors(
    data,
    until: int,
    short_window_ms: int,
    cadence_ms: int,
    since: Optional[int] = None,
    slope_levels: int = DEFAULT_SLOPE_LEVELS,
) -> Iterator[MetricVector]:
    """Rolling metric vectors for one symbol's :class:`~pumpwatch.ingest.SymbolData`.

    One vector per snapshot, thinned to at most one per ``cadence_ms``, for
    snapshots with ``since <= ts <= until``. Each vector pairs the snapshot
    with trades in ``[ts - short_window_ms, ts]``. Snapshots whose trade
    window would reach before the first record are skipped as warm-up.
    """
    first = data.start
    if first is None:
        return
    lo = first + short_window_ms
    if since is not None:
        lo = max(lo, since)
    snaps: List[OrderBookSnapshot] = data.snapshots
    stop = data.snapshots_until(until)
    last_sampled = None
    for i in range(stop):
        book = snaps[i]
        ts = book.timestamp
        if ts < lo:
            continue
        if last_sampled is not None and ts - last_sampled < cadence_ms:
            continue
        last_sampled = ts
        start, end = ts - short_window_ms, ts + 1
        window = TradeWindow(book.symbol, start, end, data.trades_between(start, end))
        prior = snaps[i - 1] if i > 0 else None
        yield compute_metric_vector(book, window, prior, slope_levels)
