"""Message labels, pump-event clustering and the empirical pump statistics."""

from __future__ import annotations

import bisect
import re
from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence, Tuple, Union

from .errors import EmptyInput, InsufficientCoverage, MissingExtraction, ZeroDenominator
from .model import HOUR_MS, MINUTE_MS, LabeledMessage, MessageLabel, PumpEvent

# Ordered rule table: the first matching rule wins, unmatched text is Noise.
# Countdown rules sit ahead of the release and announcement rules because
# reminders routinely repeat the exchange and start time.
_RULES: Tuple[Tuple[MessageLabel, re.Pattern], ...] = tuple(
    (label, re.compile(pattern, re.IGNORECASE))
    for label, pattern in (
        (MessageLabel.DELAY_OR_CANCELLATION, r"\b(postpon\w*|cancel\w*|delay\w*|reschedul\w*|called off)\b"),
        (
            MessageLabel.COUNTDOWN,
            r"\b\d+\s*(minutes?|mins?|hours?|hrs?|seconds?|secs?|days?)\s+(until|left|remaining|to go|before)\b"
            r"|\b(countdown|get ready|next message will be the coin)\b",
        ),
        (
            MessageLabel.PUMP_RESULTS,
            r"\b(results?|profits?|gains?|peaked|reached|congratulations|congrats)\b",
        ),
        (
            MessageLabel.TARGET_COIN_RELEASE,
            r"\b(the coin (is|we are pumping)|coin\s*:|target coin|pumping now|buy now)"
            r"|\$[a-z][a-z0-9]{1,9}\b|[a-z0-9]+_usdt\b",
        ),
        (
            MessageLabel.PUMP_ANNOUNCEMENT,
            r"\b(pump announcement|next pump|upcoming pump|pump (will|is scheduled)|"
            r"date\s*:|time\s*:|exchange\s*:)",
        ),
    )
)


def classify_message_baseline(text: str) -> MessageLabel:
    """Deterministic keyword classifier over the six message labels."""
    if not text or not text.strip():
        raise ValueError("text must be non-empty")
    for label, pattern in _RULES:
        if pattern.search(text):
            return label
    return MessageLabel.NOISE


def round_to_nearest_hour(ts: int) -> int:
    """Half-up rounding: minute 30 and later goes to the next hour."""
    return (ts + HOUR_MS // 2) // HOUR_MS * HOUR_MS


def cluster_pump_events(messages: Iterable[LabeledMessage]) -> List[PumpEvent]:
    """Group target-coin releases by (symbol, exchange, nearest hour).

    Messages with other labels are ignored. Output is sorted by release
    time, exchange and symbol, so it does not depend on input order.
    """
    groups: Dict[Tuple[str, str, int], List[LabeledMessage]] = {}
    for msg in messages:
        if msg.label is not MessageLabel.TARGET_COIN_RELEASE:
            continue
        if not msg.extracted_symbol or not msg.extracted_exchange:
            raise MissingExtraction(f"release message {msg.id} lacks symbol or exchange")
        key = (msg.extracted_symbol.upper(), msg.extracted_exchange.lower(), round_to_nearest_hour(msg.timestamp))
        groups.setdefault(key, []).append(msg)
    events = []
    for (symbol, exchange, hour), members in groups.items():
        first = min(members, key=lambda m: (m.timestamp, m.channel, m.id))
        events.append(
            PumpEvent(
                symbol=symbol,
                exchange=exchange,
                release_time=hour,
                source_channel=first.channel,
                message_ids=tuple(sorted({m.id for m in members})),
            )
        )
    events.sort(key=lambda e: (e.release_time, e.exchange, e.symbol))
    return events


RankEntry = Union[int, Tuple[object, int]]


def topk_hit_rate(ranks: Sequence[RankEntry], k: int) -> float:
    """Fraction of events whose target ranked within the top ``k``.

    ``ranks`` holds plain ranks or ``(event, rank)`` pairs.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not ranks:
        raise EmptyInput("no ranked events")
    values = [r[1] if isinstance(r, tuple) else r for r in ranks]
    if any(r < 1 for r in values):
        raise ValueError("ranks start at 1")
    return sum(1 for r in values if r <= k) / len(values)


def volume_ratio(pump_day_volume: float, prior_day_volume: float) -> float:
    if prior_day_volume <= 0:
        raise ZeroDenominator("prior-day volume must be positive")
    return pump_day_volume / prior_day_volume


def order_size_increase_ratio(avg_7d: float, avg_pump_day: float) -> float:
    if avg_7d <= 0:
        raise ZeroDenominator("seven-day average order size must be positive")
    return avg_pump_day / avg_7d


@dataclass(frozen=True)
class SpikeMetrics:
    time_to_peak: float  # minutes
    spike_magnitude: float  # peak / baseline


SPIKE_HORIZON_MS = 10 * MINUTE_MS


def price_spike_metrics(series: Sequence[Tuple[int, float]], t_pump: int) -> SpikeMetrics:
    """Peak mid-price within ten minutes after ``t_pump`` against the mid ten minutes before.

    The baseline is the last point at or before ``t_pump - 10min``; the
    earliest maximum wins ties.
    """
    ts = [t for t, _ in series]
    if any(b < a for a, b in zip(ts, ts[1:])):
        raise ValueError("series must be time-ordered")
    start, end = t_pump - SPIKE_HORIZON_MS, t_pump + SPIKE_HORIZON_MS
    i = bisect.bisect_right(ts, start) - 1
    if i < 0 or not ts or ts[-1] < end:
        raise InsufficientCoverage(f"series does not cover [{start}, {end}]")
    baseline = series[i][1]
    if baseline <= 0:
        raise InsufficientCoverage("baseline price must be positive")
    lo = bisect.bisect_left(ts, t_pump)
    hi = bisect.bisect_right(ts, end)
    if lo >= hi:
        raise InsufficientCoverage("no observations after the pump start")
    peak_t, peak = series[lo]
    for t, p in series[lo + 1 : hi]:
        if p > peak:
            peak_t, peak = t, p
    return SpikeMetrics(time_to_peak=(peak_t - t_pump) / MINUTE_MS, spike_magnitude=peak / baseline)
