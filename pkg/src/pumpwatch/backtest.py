"""Ranking pipeline over market data and the TOP-k backtest protocol.

For an evaluation instant ``now`` each symbol's baseline holds the metric
vectors sampled in ``(now - short_window - span, now - short_window]``: the
most recent short window is kept out of the reference it is compared with.
The short-term vector is the latest sample at or before ``now``.
"""

from __future__ import annotations

import bisect
import json
import multiprocessing
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .errors import InsufficientCoverage, NoScorableMetrics, PumpwatchError, SchemaViolation, ZeroDenominator
from .events import price_spike_metrics, topk_hit_rate, order_size_increase_ratio, volume_ratio
from .ingest import MarketData, SymbolData
from .metrics import mid_price, stream_metric_vectors
from .model import SECOND_MS, PumpEvent
from .zscore import (
    DAY_MS,
    MODE_METRICS,
    BaselineState,
    ModelConfig,
    RankedCandidate,
    ZVector,
    aggregate_score,
    rank_candidates,
    score_symbol,
)

MODES = tuple(MODE_METRICS)


@dataclass(frozen=True)
class BacktestEvent:
    event: PumpEvent
    pump_time: int  # exact pump start; the clustered release hour when unknown

    @classmethod
    def of(cls, event: PumpEvent, pump_time: Optional[int] = None) -> "BacktestEvent":
        return cls(event, event.release_time if pump_time is None else pump_time)


def _event_from_dict(d: dict) -> BacktestEvent:
    try:
        ev = PumpEvent(
            symbol=d["symbol"],
            exchange=d["exchange"],
            release_time=int(d["release_time"]),
            source_channel=d.get("source_channel", ""),
            message_ids=tuple(d.get("message_ids", ())),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise SchemaViolation(f"bad event: {e}") from None
    return BacktestEvent.of(ev, d.get("pump_time"))


def load_events(path) -> List[BacktestEvent]:
    """Read events from ``ground_truth.json`` (one or a list) or an events JSONL file."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
        items = doc if isinstance(doc, list) else [doc]
    except json.JSONDecodeError:
        items = [json.loads(line) for line in text.splitlines() if line.strip()]
    out = []
    for item in items:
        if "event" in item:
            ev = dict(item["event"])
            ev.setdefault("pump_time", item.get("pump_time"))
            out.append(_event_from_dict(ev))
        else:
            out.append(_event_from_dict(item))
    return out


def event_to_json(ev: PumpEvent, pump_time: Optional[int] = None) -> str:
    d = asdict(ev)
    d["message_ids"] = list(ev.message_ids)
    if pump_time is not None and pump_time != ev.release_time:
        d["pump_time"] = pump_time
    return json.dumps(d, sort_keys=True, separators=(",", ":"))


# --------------------------------------------------------------------------- scoring


def symbol_zvectors(sd: SymbolData, eval_times: Sequence[int], cfg: ModelConfig) -> Dict[int, Optional[ZVector]]:
    """Z-vectors for one symbol at each evaluation time (ascending), sharing one baseline pass."""
    times = sorted(eval_times)
    if not times:
        return {}
    first_cut = times[0] - cfg.short_window_ms - cfg.span_ms
    vectors = list(
        stream_metric_vectors(
            sd, times[-1], cfg.short_window_ms, cfg.cadence_ms, since=first_cut + 1, slope_levels=cfg.slope_levels
        )
    )
    stamps = [v.timestamp for v in vectors]
    symbol = vectors[0].symbol if vectors else None
    state = BaselineState(symbol, cfg.span_ms) if symbol else None
    fed = 0
    out: Dict[int, Optional[ZVector]] = {}
    for now in times:
        cut = now - cfg.short_window_ms
        latest = bisect.bisect_right(stamps, now) - 1
        if state is None or latest < 0 or stamps[latest] < now - cfg.short_window_ms:
            out[now] = None
            continue
        while fed < len(vectors) and stamps[fed] <= cut:
            state.update(vectors[fed], stamps[fed])
            fed += 1
        state.advance(max(cut, state.now or cut))
        out[now] = score_symbol(vectors[latest], state, cfg.directions, cfg.min_samples, cfg.epsilon_sigma)
    return out


def score_universe(zvectors: Mapping[str, Optional[ZVector]], cfg: ModelConfig, mode: str = "both"):
    """Aggregate and rank; symbols with nothing scorable are left out."""
    metrics = MODE_METRICS[mode]
    scores, zs = {}, {}
    for sym, z in zvectors.items():
        if z is None:
            continue
        zr = z.restrict(metrics)
        try:
            scores[sym] = aggregate_score(zr, cfg.weights)
        except NoScorableMetrics:
            continue
        zs[sym] = zr
    return rank_candidates(scores, zs) if scores else []


def rank_at(
    data: MarketData, at: int, cfg: ModelConfig = ModelConfig(), exchange: Optional[str] = None,
    symbols: Optional[Iterable[str]] = None, mode: str = "both",
) -> List[RankedCandidate]:
    """Rank every symbol of ``exchange`` (or of the only exchange present) at time ``at``."""
    if exchange is None:
        exchanges = data.exchanges()
        if len(exchanges) != 1:
            raise PumpwatchError(f"pick an exchange among {exchanges}")
        exchange = exchanges[0]
    universe = data.for_exchange(exchange)
    if symbols is not None:
        keep = set(symbols)
        universe = {s: d for s, d in universe.items() if s in keep}
    zv = {sym: symbol_zvectors(sd, [at], cfg)[at] for sym, sd in sorted(universe.items())}
    return score_universe(zv, cfg, mode)


# --------------------------------------------------------------------------- backtest


@dataclass
class BacktestReport:
    offsets: Tuple[int, ...]
    modes: Tuple[str, ...]
    ks: Tuple[int, ...]
    seed: int
    sample_size: int
    events: List[dict] = field(default_factory=list)
    skipped: List[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def ranks(self, mode: str, offset: int) -> List[int]:
        return [e["ranks"][mode][str(offset)]["rank"] for e in self.events]

    def hit_rate(self, mode: str, offset: int, k: int) -> Optional[float]:
        ranks = self.ranks(mode, offset)
        return topk_hit_rate(ranks, k) if ranks else None

    def table(self) -> List[dict]:
        rows = []
        for off in self.offsets:
            row = {"offset_s": off}
            for mode in self.modes:
                row[mode] = {f"TOP{k}": self.hit_rate(mode, off, k) for k in self.ks}
            rows.append(row)
        return rows

    def to_dict(self) -> dict:
        return {
            "offsets_s": list(self.offsets),
            "modes": list(self.modes),
            "k": list(self.ks),
            "seed": self.seed,
            "sample_size": self.sample_size,
            "config": self.config,
            "events": self.events,
            "skipped": self.skipped,
            "skipped_count": len(self.skipped),
            "table": self.table(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _config_dict(cfg: ModelConfig) -> dict:
    d = asdict(cfg)
    d["weights"] = dict(sorted(cfg.weights.items()))
    d["directions"] = dict(sorted(cfg.directions.items()))
    return d


def _event_seed(seed: int, index: int, ev: PumpEvent) -> str:
    return f"{seed}:{index}:{ev.exchange}:{ev.symbol}:{ev.release_time}"


def _run_event(args):
    index, bev, offsets, modes, cfg, seed, sample_size = args
    data: MarketData = _SHARED["data"]
    ev = bev.event
    head = {"symbol": ev.symbol, "exchange": ev.exchange, "release_time": ev.release_time, "pump_time": bev.pump_time}
    universe = data.for_exchange(ev.exchange)
    if ev.symbol not in universe:
        return None, {**head, "reason": "UnknownTarget"}
    others = sorted(s for s in universe if s != ev.symbol)
    rng = random.Random(_event_seed(seed, index, ev))
    sampled = sorted(rng.sample(others, min(sample_size, len(others))))
    candidates = [ev.symbol] + sampled
    eval_times = {off: bev.pump_time - off * SECOND_MS for off in offsets}
    per_symbol = {sym: symbol_zvectors(universe[sym], list(eval_times.values()), cfg) for sym in candidates}
    ranks: Dict[str, Dict[str, dict]] = {}
    for mode in modes:
        ranks[mode] = {}
        for off, now in eval_times.items():
            ranked = score_universe({sym: zs[now] for sym, zs in per_symbol.items()}, cfg, mode)
            hit = next((c for c in ranked if c.symbol == ev.symbol), None)
            if hit is None:
                return None, {**head, "reason": "InsufficientHistory", "mode": mode, "offset_s": off}
            ranks[mode][str(off)] = {"rank": hit.rank, "candidate_count": len(ranked), "score": hit.score}
    return {**head, "candidates": candidates, "ranks": ranks}, None


_SHARED: dict = {}


def run_backtest(
    events: Sequence,
    data,
    offsets: Sequence[int] = (20, 40, 60),
    modes: Sequence[str] = ("both",),
    cfg: ModelConfig = ModelConfig(),
    ks: Sequence[int] = (5, 10),
    seed: int = 0,
    sample_size: int = 50,
    jobs: int = 1,
) -> BacktestReport:
    """Rank each event's target among itself plus ``sample_size`` seeded decoys.

    ``events`` are :class:`BacktestEvent` or :class:`PumpEvent`; ``data`` is a
    :class:`MarketData` or record files/directory. Offsets are seconds before
    the pump start. Events whose target cannot be scored are skipped and
    listed with a reason. The result does not depend on ``jobs``.
    """
    for m in modes:
        if m not in MODE_METRICS:
            raise ValueError(f"unknown mode {m!r}")
    if not isinstance(data, MarketData):
        data = MarketData.load(data)
    bevents = [e if isinstance(e, BacktestEvent) else BacktestEvent.of(e) for e in events]
    offsets = tuple(sorted(set(int(o) for o in offsets)))
    tasks = [(i, e, offsets, tuple(modes), cfg, seed, sample_size) for i, e in enumerate(bevents)]
    _SHARED["data"] = data
    try:
        if jobs > 1 and len(tasks) > 1:
            with multiprocessing.get_context("fork").Pool(jobs) as pool:
                results = pool.map(_run_event, tasks)
        else:
            results = [_run_event(t) for t in tasks]
    finally:
        _SHARED.clear()
    report = BacktestReport(offsets, tuple(modes), tuple(sorted(set(ks))), seed, sample_size, config=_config_dict(cfg))
    for done, skipped in results:
        if done is not None:
            report.events.append(done)
        else:
            report.skipped.append(skipped)
    return report


# --------------------------------------------------------------------------- empirical analytics


def _day_start(ts: int) -> int:
    return ts // DAY_MS * DAY_MS


def analyze_event(data: MarketData, bev: BacktestEvent) -> dict:
    """Volume ratio, price-spike metrics and order-size ratio for one event; ``None`` where data is missing."""
    ev = bev.event
    out = {"symbol": ev.symbol, "exchange": ev.exchange, "pump_time": bev.pump_time}
    sd = data.symbols.get((ev.exchange, ev.symbol))
    if sd is None:
        out["error"] = "UnknownTarget"
        return out
    day = _day_start(bev.pump_time)

    def notional(a, b):
        return sum(t.price_f * t.qty_f for t in sd.trades_between(a, b))

    def avg_size(a, b):
        trades = sd.trades_between(a, b)
        return sum(t.qty_f for t in trades) / len(trades) if trades else 0.0

    try:
        out["volume_ratio"] = volume_ratio(notional(day, day + DAY_MS), notional(day - DAY_MS, day))
    except ZeroDenominator:
        out["volume_ratio"] = None
    try:
        out["order_size_increase_ratio"] = order_size_increase_ratio(
            avg_size(day - 7 * DAY_MS, day), avg_size(day, day + DAY_MS)
        )
    except ZeroDenominator:
        out["order_size_increase_ratio"] = None
    series = []
    for s in sd.snapshots:
        try:
            series.append((s.timestamp, mid_price(s)))
        except PumpwatchError:
            continue
    try:
        spike = price_spike_metrics(series, bev.pump_time)
        out["time_to_peak_min"] = spike.time_to_peak
        out["spike_magnitude"] = spike.spike_magnitude
    except InsufficientCoverage:
        out["time_to_peak_min"] = out["spike_magnitude"] = None
    return out
