"""Record formats, time-ordered merging and replay.

Event records are line-delimited JSON; tabular outputs are CSV. A *source* for
:func:`replay` is either a path to a JSONL file or any iterable yielding
records in non-decreasing timestamp order (the live-feed adapter interface).
"""

from __future__ import annotations

import bisect
import csv
import heapq
import io
import json
import logging
import math
import os
import tempfile
import time
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

from .errors import IoFailure, MalformedRecord, OutOfOrderInput, SchemaViolation, ValidationError
from .model import (
    METRIC_NAMES,
    CoinMetadata,
    LabeledMessage,
    MessageLabel,
    MetricVector,
    OrderBookSnapshot,
    Side,
    TokenStandard,
    Trade,
    validate_snapshot,
    validate_trade,
)

log = logging.getLogger(__name__)

EventRecord = Union[OrderBookSnapshot, Trade, LabeledMessage]
Source = Union[str, os.PathLike, Iterable[EventRecord]]

# tie-break rank: book state must be current before trades are attributed
TAG_ORDER = {"snapshot": 0, "trade": 1, "message": 2}


def record_tag(record: EventRecord) -> str:
    if isinstance(record, OrderBookSnapshot):
        return "snapshot"
    if isinstance(record, Trade):
        return "trade"
    if isinstance(record, LabeledMessage):
        return "message"
    raise TypeError(f"not an event record: {type(record).__name__}")


# --------------------------------------------------------------------------- parsing


def _reject_constant(name):
    raise ValueError(f"non-finite literal {name}")


def _require(obj: dict, key: str, offset):
    if key not in obj:
        raise SchemaViolation(f"missing field {key!r}", offset=offset)
    return obj[key]


def _int_ms(obj, key, offset) -> int:
    v = _require(obj, key, offset)
    if isinstance(v, bool) or not isinstance(v, int):
        raise SchemaViolation(f"{key!r} must be integer milliseconds", offset=offset)
    return v


def _text(obj, key, offset, optional=False) -> Optional[str]:
    if optional and obj.get(key) is None:
        return None
    v = _require(obj, key, offset)
    if not isinstance(v, str) or not v:
        raise SchemaViolation(f"{key!r} must be a non-empty string", offset=offset)
    return v


def _positive(v, what, offset) -> Decimal:
    if isinstance(v, bool) or not isinstance(v, (int, Decimal)):
        raise SchemaViolation(f"{what} must be a number", offset=offset)
    d = Decimal(v)
    if not d.is_finite() or d <= 0:
        raise SchemaViolation(f"{what} must be finite and > 0, got {v}", offset=offset)
    return d


def _ladder(obj, key, offset):
    raw = _require(obj, key, offset)
    if not isinstance(raw, list):
        raise SchemaViolation(f"{key!r} must be a list of [price, qty]", offset=offset)
    out = []
    for lvl in raw:
        if not isinstance(lvl, list) or len(lvl) != 2:
            raise SchemaViolation(f"{key!r} level must be [price, qty]", offset=offset)
        out.append((_positive(lvl[0], f"{key} price", offset), _positive(lvl[1], f"{key} qty", offset)))
    return tuple(out)


def _infer_kind(obj: dict) -> str:
    if "bids" in obj or "asks" in obj:
        return "snapshot"
    if "text" in obj or "channel" in obj:
        return "message"
    return "trade"


def parse_record(line: Union[str, bytes], kind: Optional[str] = None, offset: int = 0) -> EventRecord:
    """Parse one JSONL line into a validated record.

    ``kind`` is ``"snapshot"``, ``"trade"`` or ``"message"``; when omitted it is
    inferred from the fields present. ``offset`` is the byte offset of the
    line within its file and is attached to any error raised.
    """
    if isinstance(line, bytes):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError as e:
            raise MalformedRecord(f"invalid UTF-8: {e.reason}", offset=offset + e.start) from None
    try:
        obj = json.loads(line, parse_float=Decimal, parse_constant=_reject_constant)
    except json.JSONDecodeError as e:
        pos = offset + len(line[: e.pos].encode("utf-8"))
        raise MalformedRecord(f"bad JSON: {e.msg}", offset=pos) from None
    except (ValueError, RecursionError) as e:
        raise MalformedRecord(f"bad JSON: {e}", offset=offset) from None
    if not isinstance(obj, dict):
        raise SchemaViolation("record must be a JSON object", offset=offset)
    kind = kind or _infer_kind(obj)

    if kind == "snapshot":
        snap = OrderBookSnapshot(
            timestamp=_int_ms(obj, "ts", offset),
            exchange=_text(obj, "exchange", offset),
            symbol=_text(obj, "symbol", offset),
            bids=_ladder(obj, "bids", offset),
            asks=_ladder(obj, "asks", offset),
        )
        try:
            return validate_snapshot(snap)
        except ValidationError as e:
            raise SchemaViolation(f"{e.code}: {e}", offset=offset) from None
    if kind == "trade":
        side = obj.get("side")
        if side is not None:
            try:
                side = Side(side)
            except ValueError:
                raise SchemaViolation(f"side must be 'buy' or 'sell', got {side!r}", offset=offset) from None
        trade_id = _require(obj, "id", offset)
        if isinstance(trade_id, (int, Decimal)) and not isinstance(trade_id, bool):
            trade_id = str(trade_id)
        if not isinstance(trade_id, str) or not trade_id:
            raise SchemaViolation("'id' must be a non-empty string", offset=offset)
        return validate_trade(
            Trade(
                timestamp=_int_ms(obj, "ts", offset),
                exchange=_text(obj, "exchange", offset),
                symbol=_text(obj, "symbol", offset),
                price=_positive(_require(obj, "price", offset), "price", offset),
                quantity=_positive(_require(obj, "qty", offset), "qty", offset),
                taker_side=side,
                trade_id=trade_id,
            )
        )
    if kind == "message":
        text = _require(obj, "text", offset)
        if not isinstance(text, str):
            raise SchemaViolation("'text' must be a string", offset=offset)
        label = obj.get("label")
        if label is not None:
            try:
                label = MessageLabel(label)
            except ValueError:
                raise SchemaViolation(f"unknown label {label!r}", offset=offset) from None
        return LabeledMessage(
            timestamp=_int_ms(obj, "ts", offset),
            channel=_text(obj, "channel", offset),
            text=text,
            label=label,
            extracted_symbol=_text(obj, "symbol", offset, optional=True),
            extracted_exchange=_text(obj, "exchange", offset, optional=True),
            message_id=_text(obj, "id", offset, optional=True),
        )
    raise ValueError(f"unknown record kind {kind!r}")


def _num(d: Decimal) -> str:
    return str(d)


def encode_record(record: EventRecord) -> str:
    """Serialize a record to one JSONL line (no trailing newline)."""
    q = json.dumps
    if isinstance(record, OrderBookSnapshot):
        bids = ",".join(f"[{_num(p)},{_num(v)}]" for p, v in record.bids)
        asks = ",".join(f"[{_num(p)},{_num(v)}]" for p, v in record.asks)
        return (
            f'{{"ts":{record.timestamp},"exchange":{q(record.exchange)},"symbol":{q(record.symbol)},'
            f'"bids":[{bids}],"asks":[{asks}]}}'
        )
    if isinstance(record, Trade):
        side = f',"side":{q(record.taker_side.value)}' if record.taker_side is not None else ""
        return (
            f'{{"ts":{record.timestamp},"exchange":{q(record.exchange)},"symbol":{q(record.symbol)},'
            f'"price":{_num(record.price)},"qty":{_num(record.quantity)}{side},"id":{q(record.trade_id)}}}'
        )
    if isinstance(record, LabeledMessage):
        obj = {"ts": record.timestamp, "channel": record.channel, "text": record.text}
        if record.label is not None:
            obj["label"] = record.label.value
        if record.extracted_symbol is not None:
            obj["symbol"] = record.extracted_symbol
        if record.extracted_exchange is not None:
            obj["exchange"] = record.extracted_exchange
        if record.message_id is not None:
            obj["id"] = record.message_id
        return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))
    raise TypeError(f"not an event record: {type(record).__name__}")


def iter_file(path, kind: Optional[str] = None) -> Iterator[Tuple[int, EventRecord]]:
    """Yield ``(byte_offset, record)`` for every non-blank line of a JSONL file."""
    seen_ids = set()
    try:
        fh = open(path, "rb")
    except OSError as e:
        raise IoFailure(f"cannot open {path}: {e}") from e
    with fh:
        offset = 0
        for raw in fh:
            start = offset
            offset += len(raw)
            if not raw.strip():
                continue
            try:
                rec = parse_record(raw, kind, offset=start)
                if isinstance(rec, Trade):
                    key = (rec.exchange, rec.symbol, rec.trade_id)
                    if key in seen_ids:
                        raise SchemaViolation(f"duplicate trade id {rec.trade_id!r}", offset=start)
                    seen_ids.add(key)
            except (MalformedRecord, SchemaViolation) as e:
                raise type(e)(e.detail, path=path, offset=e.offset) from None
            yield start, rec


def read_records(path, kind: Optional[str] = None) -> List[EventRecord]:
    return [rec for _, rec in iter_file(path, kind)]


def atomic_write_text(path, text: str) -> None:
    """Write via a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


def write_records(path, records: Iterable[EventRecord]) -> int:
    lines = [encode_record(r) for r in records]
    atomic_write_text(path, "".join(line + "\n" for line in lines))
    return len(lines)


# --------------------------------------------------------------------------- replay


def _replay_key(record: EventRecord):
    if isinstance(record, LabeledMessage):
        return record.timestamp, record.extracted_exchange or "", record.extracted_symbol or "", 2
    return record.timestamp, record.exchange, record.symbol, TAG_ORDER[record_tag(record)]


def _ordered(source: Source, index: int) -> Iterator[Tuple[tuple, EventRecord]]:
    if isinstance(source, (str, os.PathLike)):
        items = iter_file(source)
        name = str(source)
    else:
        items = ((None, rec) for rec in source)
        name = f"<source {index}>"
    # A source is only ordered by time; records sharing a timestamp are
    # buffered and released in full key order so the merge stays correct.
    run: List[Tuple[tuple, EventRecord]] = []
    for seq, (pos, rec) in enumerate(items):
        if run and rec.timestamp != run[0][1].timestamp:
            if rec.timestamp < run[0][1].timestamp:
                yield from sorted(run, key=lambda kr: kr[0])
                raise OutOfOrderInput(f"timestamp {rec.timestamp} after {run[0][1].timestamp}", path=name, offset=pos)
            yield from sorted(run, key=lambda kr: kr[0])
            run = []
        run.append((_replay_key(rec) + (index, seq), rec))
    yield from sorted(run, key=lambda kr: kr[0])


def parse_speed(speed) -> Optional[float]:
    """Map a speed spec to a time multiplier; ``None`` means as fast as possible."""
    if speed is None:
        return None
    if isinstance(speed, (int, float)):
        if speed <= 0:
            raise ValueError("speed multiplier must be > 0")
        return float(speed)
    s = str(speed).strip().lower()
    if s in ("fast", "as_fast_as_possible", "max"):
        return None
    if s in ("real", "real_time", "realtime"):
        return 1.0
    return parse_speed(float(s.lstrip("x")))


def replay(
    sources: Sequence[Source],
    speed=None,
    *,
    sleep: Callable[[float], None] = time.sleep,
    monotonic: Callable[[], float] = time.monotonic,
) -> Iterator[EventRecord]:
    """Merge sources into one stream ordered by (ts, exchange, symbol, tag, input order).

    With a multiplier ``k`` the stream is paced so that ``k`` seconds of event
    time pass per wall-clock second. A source whose own timestamps decrease
    raises :class:`OutOfOrderInput` and the stream stops there.
    """
    k = parse_speed(speed)
    merged = heapq.merge(*(_ordered(s, i) for i, s in enumerate(sources)), key=lambda kr: kr[0])
    t0_event = t0_wall = None
    for _, rec in merged:
        if k is not None:
            if t0_event is None:
                t0_event, t0_wall = rec.timestamp, monotonic()
            due = t0_wall + (rec.timestamp - t0_event) / 1000.0 / k
            wait = due - monotonic()
            if wait > 0:
                sleep(wait)
        yield rec


def data_files(path) -> List[Path]:
    """All ``*.jsonl`` files under ``path`` (or ``path`` itself), sorted by name."""
    p = Path(path)
    if p.is_file():
        return [p]
    if not p.is_dir():
        raise IoFailure(f"no such file or directory: {p}")
    return sorted(f for f in p.rglob("*.jsonl") if f.is_file())


# --------------------------------------------------------------------------- market data


@dataclass
class SymbolData:
    snapshots: List[OrderBookSnapshot] = field(default_factory=list)
    trades: List[Trade] = field(default_factory=list)

    def __post_init__(self):
        self._index()

    def _index(self):
        self.snapshot_ts = [s.timestamp for s in self.snapshots]
        self.trade_ts = [t.timestamp for t in self.trades]

    @property
    def start(self) -> Optional[int]:
        firsts = [xs[0] for xs in (self.snapshot_ts, self.trade_ts) if xs]
        return min(firsts) if firsts else None

    def trades_between(self, start: int, end: int) -> List[Trade]:
        """Trades with ``start <= ts < end``."""
        i = bisect.bisect_left(self.trade_ts, start)
        j = bisect.bisect_left(self.trade_ts, end)
        return self.trades[i:j]

    def snapshots_until(self, ts: int) -> int:
        """Number of snapshots with timestamp ``<= ts``."""
        return bisect.bisect_right(self.snapshot_ts, ts)


class MarketData:
    """Snapshots and trades grouped per (exchange, symbol), each time-ordered."""

    def __init__(self):
        self.symbols: Dict[Tuple[str, str], SymbolData] = {}

    @classmethod
    def from_records(cls, records: Iterable[EventRecord]) -> "MarketData":
        md = cls()
        buckets: Dict[Tuple[str, str], Tuple[list, list]] = {}
        for rec in records:
            if isinstance(rec, LabeledMessage):
                continue
            snaps, trades = buckets.setdefault((rec.exchange, rec.symbol), ([], []))
            (snaps if isinstance(rec, OrderBookSnapshot) else trades).append(rec)
        for key in sorted(buckets):
            snaps, trades = buckets[key]
            # stable sort keeps input order for equal timestamps
            snaps.sort(key=lambda r: r.timestamp)
            trades.sort(key=lambda r: r.timestamp)
            md.symbols[key] = SymbolData(snaps, trades)
        return md

    @classmethod
    def load(cls, paths) -> "MarketData":
        if isinstance(paths, (str, os.PathLike)):
            paths = data_files(paths)
        return cls.from_records(replay(list(paths)))

    def for_exchange(self, exchange: str) -> Dict[str, SymbolData]:
        return {sym: d for (ex, sym), d in self.symbols.items() if ex == exchange}

    def exchanges(self) -> List[str]:
        return sorted({ex for ex, _ in self.symbols})


# --------------------------------------------------------------------------- CSV


def _fmt(v: Optional[float]) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))


def _csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(row)
    return buf.getvalue()


RANKING_HEADER = ("rank", "symbol", "score") + tuple(f"z_{m}" for m in METRIC_NAMES)


def persist_rankings(rankings: Sequence, path) -> int:
    """Write ranked candidates as CSV; returns the number of data rows."""
    ranks = [c.rank for c in rankings]
    if ranks != sorted(ranks):
        raise ValueError("rankings must be sorted by rank ascending")
    rows = [
        [c.rank, c.symbol, _fmt(c.score)] + [_fmt(c.z.values.get(m)) for m in METRIC_NAMES] for c in rankings
    ]
    atomic_write_text(path, _csv_text(RANKING_HEADER, rows))
    return len(rows)


def write_metrics_dump(vectors: Iterable[MetricVector], path) -> int:
    rows = [[v.timestamp, v.symbol] + [_fmt(v.values[m]) for m in METRIC_NAMES] for v in vectors]
    atomic_write_text(path, _csv_text(("ts", "symbol") + METRIC_NAMES, rows))
    return len(rows)


def read_coin_metadata(path) -> List[CoinMetadata]:
    """Read ``symbol,name,market_cap_usd,token_standard`` rows; extra columns are ignored."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    out = []
    for i, row in enumerate(rows, start=2):
        try:
            std = (row.get("token_standard") or "").strip()
            out.append(
                CoinMetadata(
                    symbol=row["symbol"].strip(),
                    name=(row.get("name") or "").strip(),
                    market_cap_usd=Decimal((row.get("market_cap_usd") or "0").strip() or "0"),
                    token_standard=TokenStandard(std) if std else None,
                )
            )
        except (KeyError, ValueError, ArithmeticError) as e:
            raise SchemaViolation(f"bad coin metadata row: {e}", path=path, offset=None) from None
    return out


def write_coin_metadata(coins: Iterable[CoinMetadata], path) -> int:
    rows = [
        [c.symbol, c.name, str(c.market_cap_usd), c.token_standard.value if c.token_standard else ""] for c in coins
    ]
    atomic_write_text(path, _csv_text(("symbol", "name", "market_cap_usd", "token_standard"), rows))
    return len(rows)


def write_rejections(rejected: Iterable[Tuple[CoinMetadata, str]], path) -> int:
    rows = [[c.symbol, reason] for c, reason in rejected]
    atomic_write_text(path, _csv_text(("symbol", "reason"), rows))
    return len(rows)
