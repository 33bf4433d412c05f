"""Deterministic synthetic order-book and trade streams with injected pumps.

Each symbol's randomness comes from a Philox (counter-based) generator keyed
by ``(seed, symbol_index, stream)``, so symbols can be generated in any order
or in parallel without changing a single byte of output.
"""

from __future__ import annotations

import json
import math
import multiprocessing
from dataclasses import asdict, dataclass, replace
from decimal import Decimal
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidConfig, WindowOutOfRange
from .ingest import EventRecord, atomic_write_text, write_coin_metadata, write_records
from .model import HOUR_MS, MINUTE_MS, SECOND_MS, CoinMetadata, OrderBookSnapshot, PumpEvent, Side, Trade
from .zscore import DAY_MS

# generator streams per symbol
_PARAMS, _PATH, _TRADES, _BOOK, _INJECT, _META = range(6)

QTY_EXP = -2  # quantities quoted in hundredths
QTY_SIGMA = 0.5  # log-sd of trade and level sizes


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    symbol_count: int = 51
    exchange: str = "simex"
    start_time: int = 1_720_000_800_000  # hour aligned; data covers [pump - span, pump)
    span_ms: int = 3 * DAY_MS
    fine_span_ms: int = HOUR_MS
    cadence_ms: int = 5 * SECOND_MS
    coarse_cadence_ms: int = MINUTE_MS
    # baseline means; each symbol draws its own values around these
    mid_price: float = 0.5
    volatility: float = 0.0005  # log-price diffusion per sqrt(second)
    reversion_half_life_s: float = 3600.0
    trade_rate: float = 0.05  # trades per second
    order_size_usd: float = 50.0
    level_size_usd: float = 500.0
    depth_levels: int = 10
    half_spread_bps: float = 10.0
    level_step_bps: float = 10.0
    # injection
    target_index: Optional[int] = None  # None: drawn from the seed
    pump_time: Optional[int] = None  # None: start_time + span_ms
    accumulation_ms: int = MINUTE_MS
    buy_sigma: float = 5.0
    buy_multiplier: Optional[float] = None  # None: calibrated from buy_sigma
    wall_multiplier: float = 3.0
    impact: float = 0.5

    def validate(self) -> None:
        if not 0 <= self.seed < 2**64:
            raise InvalidConfig("seed must be a 64-bit unsigned integer")
        if self.symbol_count < 1:
            raise InvalidConfig("symbol_count must be >= 1")
        if self.span_ms <= 0 or self.cadence_ms <= 0 or self.coarse_cadence_ms <= 0:
            raise InvalidConfig("span and cadences must be positive")
        if not 0 <= self.fine_span_ms <= self.span_ms:
            raise InvalidConfig("fine_span_ms must lie within span_ms")
        if self.target_index is not None and not 0 <= self.target_index < self.symbol_count:
            raise InvalidConfig("target_index out of range")
        if not 0 <= self.accumulation_ms <= self.span_ms:
            raise InvalidConfig("accumulation window must fit in the span")
        if self.wall_multiplier <= 0 or (self.buy_multiplier is not None and self.buy_multiplier <= 0):
            raise InvalidConfig("multipliers must be > 0")
        if self.buy_sigma < 0 or self.impact < 0:
            raise InvalidConfig("buy_sigma and impact must be >= 0")
        for name in ("mid_price", "volatility", "trade_rate", "order_size_usd", "level_size_usd"):
            if getattr(self, name) <= 0:
                raise InvalidConfig(f"{name} must be > 0")
        if self.depth_levels < 1 or self.reversion_half_life_s <= 0:
            raise InvalidConfig("depth_levels and reversion_half_life_s must be positive")

    @property
    def resolved_pump_time(self) -> int:
        return self.start_time + self.span_ms if self.pump_time is None else self.pump_time

    @property
    def resolved_target_index(self) -> int:
        if self.target_index is not None:
            return self.target_index
        return int(_rng(self.seed, 0, _META).integers(self.symbol_count))

    def symbol(self, index: int) -> str:
        return f"C{index:03d}"


@dataclass(frozen=True)
class SymbolParams:
    index: int
    symbol: str
    mid0: float
    tick_exp: int  # tick size = 10 ** tick_exp
    volatility: float
    trade_rate: float
    order_qty: float  # mean trade quantity
    level_qty: float  # mean resting quantity per level
    half_spread: float  # relative
    level_step_ticks: int


def _rng(seed: int, index: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, index, stream])))


def symbol_params(cfg: ScenarioConfig, index: int) -> SymbolParams:
    r = _rng(cfg.seed, index, _PARAMS)
    mid0 = cfg.mid_price * math.exp(r.uniform(-2.0, 2.0))
    tick_exp = math.floor(math.log10(mid0)) - 4
    rate = cfg.trade_rate * r.uniform(0.5, 1.5)
    vol = cfg.volatility * r.uniform(0.7, 1.3)
    size = r.uniform(0.7, 1.3)
    step = max(1, round(mid0 * cfg.level_step_bps * 1e-4 / 10.0**tick_exp))
    return SymbolParams(
        index=index,
        symbol=cfg.symbol(index),
        mid0=mid0,
        tick_exp=tick_exp,
        volatility=vol,
        trade_rate=rate,
        order_qty=cfg.order_size_usd * size / mid0,
        level_qty=cfg.level_size_usd * size / mid0,
        half_spread=cfg.half_spread_bps * 1e-4,
        level_step_ticks=step,
    )


def snapshot_schedule(cfg: ScenarioConfig) -> np.ndarray:
    """Snapshot timestamps: coarse cadence early, fine cadence over the final ``fine_span_ms``."""
    pump = cfg.resolved_pump_time
    start = pump - cfg.span_ms
    fine_start = pump - cfg.fine_span_ms
    coarse = np.arange(start, fine_start, cfg.coarse_cadence_ms, dtype=np.int64)
    fine = np.arange(fine_start, pump, cfg.cadence_ms, dtype=np.int64)
    return np.concatenate([coarse, fine])


def _ou_path(times_ms: np.ndarray, p: SymbolParams, cfg: ScenarioConfig, r: np.random.Generator) -> np.ndarray:
    """Log-price deviation following an Ornstein-Uhlenbeck process, sampled exactly."""
    theta = math.log(2.0) / cfg.reversion_half_life_s
    stationary = p.volatility / math.sqrt(2.0 * theta)
    dt = np.diff(times_ms, prepend=times_ms[:1]) / 1000.0
    decay = np.exp(-theta * dt)
    scale = stationary * np.sqrt(1.0 - decay**2)
    noise = r.standard_normal(len(times_ms))
    x = np.empty(len(times_ms))
    prev = stationary * noise[0]
    for i in range(len(times_ms)):
        if i:
            prev = prev * decay[i] + scale[i] * noise[i]
        x[i] = prev
    return x


def _dec(value: int, exp: int) -> Decimal:
    return Decimal(value).scaleb(exp)


def _touch_ticks_array(mid: np.ndarray, p: SymbolParams) -> Tuple[np.ndarray, np.ndarray]:
    """Best bid and ask in ticks around each mid; the ask always sits above the bid."""
    tick = 10.0**p.tick_exp
    bid = np.floor(mid * (1.0 - p.half_spread) / tick).astype(np.int64)
    ask = np.ceil(mid * (1.0 + p.half_spread) / tick).astype(np.int64)
    return bid, np.maximum(ask, bid + 1)


def _as_decimals(ticks: np.ndarray, exp: int) -> np.ndarray:
    """Object array of Decimals ``ticks * 10**exp``, building each distinct value once."""
    uniq, inv = np.unique(ticks, return_inverse=True)
    table = np.empty(len(uniq), dtype=object)
    table[:] = [_dec(int(u), exp) for u in uniq.tolist()]
    return table[inv.reshape(ticks.shape)]


def _qty_ticks(mean: float, z: np.ndarray) -> np.ndarray:
    """Lognormal sizes with mean ``mean``, in hundredths, kept to three significant figures."""
    q = np.maximum(1.0, mean * np.exp(QTY_SIGMA * z - QTY_SIGMA**2 / 2.0) * 10**-QTY_EXP)
    scale = 10.0 ** np.maximum(0, np.floor(np.log10(q)) - 2)
    return np.maximum(1, np.round(q / scale) * scale).astype(np.int64)


def generate_symbol(cfg: ScenarioConfig, index: int) -> List[EventRecord]:
    """Baseline (uninjected) snapshots followed by trades for one symbol, each time-ordered."""
    p = symbol_params(cfg, index)
    pump = cfg.resolved_pump_time
    start = pump - cfg.span_ms
    snap_t = snapshot_schedule(cfg)

    tr = _rng(cfg.seed, index, _TRADES)
    n_trades = int(tr.poisson(p.trade_rate * cfg.span_ms / 1000.0))
    trade_t = np.sort(tr.integers(start, pump, size=n_trades, dtype=np.int64))
    sides = tr.random(n_trades) < 0.5
    trade_q = _qty_ticks(p.order_qty, tr.standard_normal(n_trades))

    all_t = np.concatenate([snap_t, trade_t])
    order = np.argsort(all_t, kind="stable")
    x = np.empty(len(all_t))
    x[order] = _ou_path(all_t[order], p, cfg, _rng(cfg.seed, index, _PATH))
    mids = p.mid0 * np.exp(x)
    snap_mid, trade_mid = mids[: len(snap_t)], mids[len(snap_t) :]

    br = _rng(cfg.seed, index, _BOOK)
    L = cfg.depth_levels
    level_q = _qty_ticks(p.level_qty, br.standard_normal((len(snap_t), 2, L)))
    bid0, ask0 = _touch_ticks_array(snap_mid, p)
    steps = np.arange(L, dtype=np.int64) * p.level_step_ticks
    prices = np.stack([bid0[:, None] - steps, ask0[:, None] + steps], axis=1)
    price_dec = _as_decimals(prices, p.tick_exp)
    qty_dec = _as_decimals(level_q, QTY_EXP)
    out: List[EventRecord] = []
    for i, t in enumerate(snap_t.tolist()):
        bids = tuple(zip(price_dec[i, 0].tolist(), qty_dec[i, 0].tolist()))
        asks = tuple(zip(price_dec[i, 1].tolist(), qty_dec[i, 1].tolist()))
        out.append(OrderBookSnapshot(t, cfg.exchange, p.symbol, bids, asks))
    trade_bid, trade_ask = _touch_ticks_array(trade_mid, p)
    trade_px = _as_decimals(np.where(sides, trade_ask, trade_bid), p.tick_exp).tolist()
    trade_qd = _as_decimals(trade_q, QTY_EXP).tolist()
    for j, (t, buy) in enumerate(zip(trade_t.tolist(), sides.tolist())):
        out.append(
            Trade(
                timestamp=t,
                exchange=cfg.exchange,
                symbol=p.symbol,
                price=trade_px[j],
                quantity=trade_qd[j],
                taker_side=Side.BUY if buy else Side.SELL,
                trade_id=f"{p.symbol}-{j}",
            )
        )
    return out


# --------------------------------------------------------------------------- injection


@dataclass(frozen=True)
class InjectionParams:
    symbol: str
    window_start: int
    window_end: int
    buy_multiplier: float
    expected_buy_qty: float  # baseline taker-buy quantity expected in the window
    expected_buy_trades: float  # baseline taker-buy count expected in the window
    wall_multiplier: float
    impact: float  # relative mid shift per resting-depth unit of extra buying
    reference_depth_qty: float
    tick_exp: int
    seed: int = 0
    symbol_index: int = 0


def buy_multiplier(cfg: ScenarioConfig, p: SymbolParams) -> float:
    """Multiplier putting the window's taker-buy volume ``buy_sigma`` sds above its mean."""
    if cfg.buy_multiplier is not None:
        return cfg.buy_multiplier
    expected_buys = p.trade_rate * 0.5 * cfg.accumulation_ms / 1000.0
    if expected_buys <= 0:
        return 1.0
    return 1.0 + cfg.buy_sigma * math.sqrt(math.exp(QTY_SIGMA**2) / expected_buys)


def expected_window_buy_qty(cfg: ScenarioConfig, p: SymbolParams) -> float:
    return p.trade_rate * 0.5 * cfg.accumulation_ms / 1000.0 * p.order_qty


def injection_params(cfg: ScenarioConfig) -> InjectionParams:
    idx = cfg.resolved_target_index
    p = symbol_params(cfg, idx)
    pump = cfg.resolved_pump_time
    return InjectionParams(
        symbol=p.symbol,
        window_start=pump - cfg.accumulation_ms,
        window_end=pump,
        buy_multiplier=buy_multiplier(cfg, p),
        expected_buy_qty=expected_window_buy_qty(cfg, p),
        expected_buy_trades=p.trade_rate * 0.5 * cfg.accumulation_ms / 1000.0,
        wall_multiplier=cfg.wall_multiplier,
        impact=cfg.impact,
        reference_depth_qty=p.level_qty * cfg.depth_levels,
        tick_exp=p.tick_exp,
        seed=cfg.seed,
        symbol_index=idx,
    )


def injected_buys(records: Sequence[EventRecord], params: InjectionParams) -> Tuple[int, int]:
    """Extra taker-buy quantity (in hundredths) and trade count the injection adds.

    With multiplier ``m > 1`` the window receives at least ``(m - 1)`` times
    the expected baseline buy volume, topped up so the window total reaches
    ``m`` times that expectation. ``m <= 1`` adds nothing.
    """
    m = params.buy_multiplier
    if m <= 1.0 or params.window_end <= params.window_start:
        return 0, 0
    unit = 10**-QTY_EXP
    realized = sum(
        int(r.quantity * unit)
        for r in records
        if isinstance(r, Trade)
        and r.symbol == params.symbol
        and r.taker_side is Side.BUY
        and params.window_start <= r.timestamp < params.window_end
    )
    floor_ticks = (m - 1.0) * params.expected_buy_qty * unit
    target_ticks = m * params.expected_buy_qty * unit - realized
    extra = max(int(math.ceil(floor_ticks)), int(math.ceil(target_ticks)), 0)
    if extra == 0:
        return 0, 0
    n = max(1, round((m - 1.0) * params.expected_buy_trades))
    return extra, min(n, extra)


def inject_pump(
    records: Sequence[EventRecord], params: InjectionParams, stream_end: Optional[int] = None
) -> List[EventRecord]:
    """Overlay a taker-buy surge and a growing ask wall on ``params.symbol`` inside the window.

    Records of other symbols and records outside ``[window_start, window_end)``
    are returned as the very same objects. The ask wall ramps linearly from
    nothing at the window start towards ``wall_multiplier`` at its end; extra
    buys (see :func:`injected_buys`) shift both ladders up in proportion to
    the cumulative injected quantity.
    """
    ws, we = params.window_start, params.window_end
    if we < ws:
        raise WindowOutOfRange("window ends before it starts")
    if we == ws:
        return list(records)
    own = [r for r in records if r.symbol == params.symbol]
    if not own:
        raise WindowOutOfRange(f"no records for {params.symbol}")
    first = min(r.timestamp for r in own)
    end = stream_end if stream_end is not None else max(r.timestamp for r in own) + 1
    if ws < first or we > end:
        raise WindowOutOfRange(f"window [{ws}, {we}) outside stream [{first}, {end})")

    r = _rng(params.seed, params.symbol_index, _INJECT)
    extra_qty, n = injected_buys(records, params)
    extra_t = np.sort(r.integers(ws, we, size=n, dtype=np.int64)) if n else np.empty(0, dtype=np.int64)
    base, rem = divmod(extra_qty, n) if n else (0, 0)
    extra_q = [base + (1 if i < rem else 0) for i in range(n)]
    cum_q = np.cumsum(extra_q) if n else np.empty(0)

    tick = Decimal(1).scaleb(params.tick_exp)
    qty_tick = Decimal(1).scaleb(QTY_EXP)
    ref_qty_ticks = params.reference_depth_qty * 10**-QTY_EXP

    def shift_ticks(t: int, mid_ticks: float) -> int:
        done = int(np.searchsorted(extra_t, t, side="right"))
        injected = float(cum_q[done - 1]) if done else 0.0
        return int(round(params.impact * injected / ref_qty_ticks * mid_ticks))

    out: List[EventRecord] = []
    last_ask: Optional[Decimal] = None
    for rec in records:
        if rec.symbol != params.symbol or not ws <= rec.timestamp < we:
            if rec.symbol == params.symbol and isinstance(rec, OrderBookSnapshot) and rec.timestamp < ws and rec.asks:
                last_ask = rec.asks[0][0]
            out.append(rec)
            continue
        if isinstance(rec, OrderBookSnapshot):
            mid_ticks = float((rec.bids[0][0] + rec.asks[0][0]) / 2 / tick) if rec.bids and rec.asks else 0.0
            k = shift_ticks(rec.timestamp, mid_ticks) * tick
            grow = 1.0 + (params.wall_multiplier - 1.0) * (rec.timestamp - ws) / (we - ws)
            bids = tuple((p + k, q) for p, q in rec.bids)
            asks = tuple(
                (p + k, max(qty_tick, (q * Decimal(repr(grow))).quantize(qty_tick))) for p, q in rec.asks
            )
            rec = replace(rec, bids=bids, asks=asks)
            if rec.asks:
                last_ask = rec.asks[0][0]
        elif isinstance(rec, Trade):
            mid_ticks = float(rec.price / tick)
            rec = replace(rec, price=rec.price + shift_ticks(rec.timestamp, mid_ticks) * tick)
        out.append(rec)

    if n:
        extras = []
        snaps = sorted(
            (x for x in out if isinstance(x, OrderBookSnapshot) and x.symbol == params.symbol and x.asks),
            key=lambda s: s.timestamp,
        )
        snap_ts = [s.timestamp for s in snaps]
        for i, t in enumerate(extra_t):
            j = int(np.searchsorted(snap_ts, t, side="right")) - 1
            ask = snaps[j].asks[0][0] if j >= 0 else last_ask
            if ask is None:
                raise WindowOutOfRange("no book to price injected trades")
            mid_ticks = float(ask / tick)
            # the trade itself moves the price: apply its own shift on top of the pre-trade book
            prior = shift_ticks(int(t) - 1, mid_ticks)
            price = ask + (shift_ticks(int(t), mid_ticks) - prior) * tick
            extras.append(
                Trade(
                    timestamp=int(t),
                    exchange=snaps[0].exchange if snaps else own[0].exchange,
                    symbol=params.symbol,
                    price=price,
                    quantity=Decimal(extra_q[i]) * qty_tick,
                    taker_side=Side.BUY,
                    trade_id=f"{params.symbol}-x{i}",
                )
            )
        out = _merge_trades(out, extras)
    return out


def _merge_trades(records: List[EventRecord], extras: List[Trade]) -> List[EventRecord]:
    """Insert ``extras`` after existing same-symbol trades with equal or earlier timestamps."""
    symbol = extras[0].symbol
    trades = [r for r in records if isinstance(r, Trade) and r.symbol == symbol]
    others = [r for r in records if not (isinstance(r, Trade) and r.symbol == symbol)]
    merged = sorted(trades + extras, key=lambda t: t.timestamp)  # stable: originals first on ties
    # keep the per-symbol layout of generate_symbol: snapshots, then trades
    return others + merged


# --------------------------------------------------------------------------- scenarios


@dataclass
class Scenario:
    config: ScenarioConfig
    records: Dict[str, List[EventRecord]]  # per symbol
    event: PumpEvent
    pump_time: int
    injection: InjectionParams
    coins: List[CoinMetadata]

    def all_records(self) -> List[EventRecord]:
        return [r for sym in sorted(self.records) for r in self.records[sym]]

    def ground_truth(self) -> dict:
        cfg = asdict(self.config)
        cfg["target_index"] = self.config.resolved_target_index
        cfg["pump_time"] = self.pump_time
        ev = asdict(self.event)
        ev["message_ids"] = list(ev["message_ids"])
        return {
            "config": cfg,
            "event": ev,
            "pump_time": self.pump_time,
            "injection": {
                "buy_multiplier": self.injection.buy_multiplier,
                "expected_window_buy_qty": self.injection.expected_buy_qty,
                "wall_multiplier": self.injection.wall_multiplier,
                "window_start": self.injection.window_start,
                "window_end": self.injection.window_end,
            },
        }


def _coin_metadata(cfg: ScenarioConfig, index: int) -> CoinMetadata:
    r = _rng(cfg.seed, index, _META + 1)
    cap = 0 if r.random() < 0.2 else int(min(59_000_000, 2_700_000 * math.exp(r.normal(0.0, 1.2))))
    return CoinMetadata(symbol=cfg.symbol(index), name=f"Synthetic {index}", market_cap_usd=Decimal(cap))


def _generate_one(args):
    cfg, index = args
    return generate_symbol(cfg, index)


def generate_scenario(cfg: ScenarioConfig, out_dir=None, jobs: int = 1) -> Scenario:
    """Build every symbol's stream, inject the pump into the target and optionally write files.

    Files: ``<SYM>.snapshots.jsonl`` and ``<SYM>.trades.jsonl`` per symbol,
    ``ground_truth.json`` and ``coins.csv``.
    """
    cfg.validate()
    tasks = [(cfg, i) for i in range(cfg.symbol_count)]
    if jobs > 1:
        with multiprocessing.get_context("fork").Pool(jobs) as pool:
            streams = pool.map(_generate_one, tasks)
    else:
        streams = [_generate_one(t) for t in tasks]
    inj = injection_params(cfg)
    pump = cfg.resolved_pump_time
    records = {cfg.symbol(i): s for i, s in enumerate(streams)}
    records[inj.symbol] = inject_pump(records[inj.symbol], inj, stream_end=pump)
    event = PumpEvent(
        symbol=inj.symbol,
        exchange=cfg.exchange,
        release_time=(pump + HOUR_MS // 2) // HOUR_MS * HOUR_MS,
        source_channel="simulator",
        message_ids=(),
    )
    coins = [_coin_metadata(cfg, i) for i in range(cfg.symbol_count)]
    sc = Scenario(cfg, records, event, pump, inj, coins)
    if out_dir is not None:
        write_scenario(sc, out_dir)
    return sc


def write_scenario(sc: Scenario, out_dir) -> None:
    out = Path(out_dir)
    for sym in sorted(sc.records):
        recs = sc.records[sym]
        write_records(out / f"{sym}.snapshots.jsonl", (r for r in recs if isinstance(r, OrderBookSnapshot)))
        write_records(out / f"{sym}.trades.jsonl", (r for r in recs if isinstance(r, Trade)))
    atomic_write_text(out / "ground_truth.json", json.dumps(sc.ground_truth(), indent=2, sort_keys=True) + "\n")
    write_coin_metadata(sc.coins, out / "coins.csv")
