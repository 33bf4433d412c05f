"""Shared domain types.

Prices and quantities are held as :class:`~decimal.Decimal` exactly as quoted by
the exchange; metric code reads the cached float views (``bid_prices`` etc.).
All timestamps are integer UTC epoch milliseconds. Metrics assume USDT quoting.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Dict, Optional, Tuple

from .errors import EmptyBothSides, NonPositiveValue, UnsortedLadder

Level = Tuple[Decimal, Decimal]

HOUR_MS = 3_600_000
MINUTE_MS = 60_000
SECOND_MS = 1_000


class Side(str, enum.Enum):
    BUY = "buy"
    SELL = "sell"


class MessageLabel(str, enum.Enum):
    PUMP_ANNOUNCEMENT = "PumpAnnouncement"
    COUNTDOWN = "Countdown"
    TARGET_COIN_RELEASE = "TargetCoinRelease"
    PUMP_RESULTS = "PumpResults"
    DELAY_OR_CANCELLATION = "DelayOrCancellation"
    NOISE = "Noise"


class TokenStandard(str, enum.Enum):
    ERC20 = "ERC20"
    BEP20 = "BEP20"
    BRC20 = "BRC20"
    RUNE = "Rune"
    OTHER = "other"


BOOK_METRICS = (
    "bid_ask_spread",
    "avg_order_size",
    "imbalance",
    "imbalance_ratio",
    "book_pressure",
    "book_slope",
    "order_flow_imbalance",
    "relative_impact",
)
TRADE_METRICS = (
    "liquidity_consumption",
    "market_order_impact",
    "vwap",
    "high_low_spread",
    "trade_count",
    "taker_buy_volume",
    "taker_sell_volume",
)
METRIC_NAMES = (
    "bid_ask_spread",
    "avg_order_size",
    "imbalance",
    "imbalance_ratio",
    "book_pressure",
    "book_slope",
    "liquidity_consumption",
    "order_flow_imbalance",
    "market_order_impact",
    "relative_impact",
    "vwap",
    "high_low_spread",
    "trade_count",
    "taker_buy_volume",
    "taker_sell_volume",
)
assert set(METRIC_NAMES) == set(BOOK_METRICS) | set(TRADE_METRICS)


@dataclass(frozen=True)
class OrderBookSnapshot:
    timestamp: int
    exchange: str
    symbol: str
    bids: Tuple[Level, ...]
    asks: Tuple[Level, ...]

    @property
    def depth(self) -> int:
        """Levels present on the deeper side."""
        return max(len(self.bids), len(self.asks))

    # float views for metric arithmetic, derived once at construction
    bid_prices: Tuple[float, ...] = field(init=False, repr=False, compare=False)
    bid_qtys: Tuple[float, ...] = field(init=False, repr=False, compare=False)
    ask_prices: Tuple[float, ...] = field(init=False, repr=False, compare=False)
    ask_qtys: Tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for side, levels in (("bid", self.bids), ("ask", self.asks)):
            prices, qtys = zip(*levels) if levels else ((), ())
            object.__setattr__(self, f"{side}_prices", tuple(map(float, prices)))
            object.__setattr__(self, f"{side}_qtys", tuple(map(float, qtys)))

    @property
    def is_crossed(self) -> bool:
        return bool(self.bids and self.asks and self.bids[0][0] >= self.asks[0][0])


@dataclass(frozen=True)
class Trade:
    timestamp: int
    exchange: str
    symbol: str
    price: Decimal
    quantity: Decimal
    taker_side: Optional[Side]
    trade_id: str
    price_f: float = field(init=False, repr=False, compare=False)
    qty_f: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "price_f", float(self.price))
        object.__setattr__(self, "qty_f", float(self.quantity))


@dataclass(frozen=True)
class CoinMetadata:
    symbol: str
    name: str
    market_cap_usd: Decimal
    token_standard: Optional[TokenStandard] = None

    def __post_init__(self):
        if self.market_cap_usd < 0:
            raise ValueError(f"{self.symbol}: negative market cap")


@dataclass(frozen=True)
class PumpEvent:
    symbol: str
    exchange: str
    release_time: int
    source_channel: str
    message_ids: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.release_time % HOUR_MS:
            raise ValueError("release_time must sit on an hour boundary")


@dataclass(frozen=True)
class LabeledMessage:
    timestamp: int
    channel: str
    text: str
    label: Optional[MessageLabel] = None
    extracted_symbol: Optional[str] = None
    extracted_exchange: Optional[str] = None
    message_id: Optional[str] = None

    @property
    def id(self) -> str:
        return self.message_id or f"{self.channel}@{self.timestamp}"


@dataclass(frozen=True)
class MetricVector:
    """Per-symbol metric values for one window; ``None`` marks an absent value."""

    symbol: str
    window_start: int
    window_end: int
    values: Dict[str, Optional[float]]
    flags: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        missing = set(METRIC_NAMES) - set(self.values)
        extra = set(self.values) - set(METRIC_NAMES)
        if missing or extra:
            raise ValueError(f"metric keys mismatch: missing={sorted(missing)} extra={sorted(extra)}")

    @property
    def timestamp(self) -> int:
        """Evaluation instant: the last millisecond inside the window."""
        return self.window_end - 1


def _check_ladder(levels, descending: bool, side: str) -> None:
    prev = None
    for price, qty in levels:
        for v in (price, qty):
            if not (isinstance(v, Decimal) and v.is_finite() or isinstance(v, (int, float)) and math.isfinite(v)):
                raise NonPositiveValue(f"{side}: non-finite value {v!r}")
            if v <= 0:
                raise NonPositiveValue(f"{side}: non-positive value {v!r}")
        if prev is not None and (price >= prev if descending else price <= prev):
            raise UnsortedLadder(f"{side} ladder not strictly {'decreasing' if descending else 'increasing'} at {price}")
        prev = price


def validate_snapshot(snapshot: OrderBookSnapshot) -> OrderBookSnapshot:
    """Return ``snapshot`` unchanged if it is well formed; raise otherwise.

    Sortedness is checked, never repaired. Crossed books are allowed.
    """
    if not snapshot.bids and not snapshot.asks:
        raise EmptyBothSides(f"{snapshot.symbol}@{snapshot.timestamp}: both sides empty")
    _check_ladder(snapshot.bids, True, "bids")
    _check_ladder(snapshot.asks, False, "asks")
    return snapshot


def validate_trade(trade: Trade) -> Trade:
    for v in (trade.price, trade.quantity):
        if not v.is_finite() or v <= 0:
            raise NonPositiveValue(f"trade {trade.trade_id}: invalid value {v!r}")
    return trade
