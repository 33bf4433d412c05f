import random
from decimal import Decimal

import pytest
from hypothesis import given, settings, strategies as st

from helpers import T0, book, trade
from pumpwatch.errors import IoFailure, MalformedRecord, OutOfOrderInput, SchemaViolation
from pumpwatch.ingest import (
    RANKING_HEADER,
    MarketData,
    encode_record,
    iter_file,
    parse_record,
    parse_speed,
    persist_rankings,
    read_coin_metadata,
    read_records,
    record_tag,
    replay,
    write_records,
)
from pumpwatch.model import LabeledMessage, MessageLabel, OrderBookSnapshot, Side, Trade
from pumpwatch.zscore import ZVector, rank_candidates


def test_parse_trade_example():
    line = '{"ts":1720000000000,"exchange":"poloniex","symbol":"GFT","price":0.012,"qty":500,"side":"buy","id":"t1"}'
    t = parse_record(line)
    assert isinstance(t, Trade)
    assert t.price == Decimal("0.012") and t.quantity == 500 and t.taker_side is Side.BUY
    assert t.trade_id == "t1"


def test_parse_negative_qty_is_schema_violation():
    line = '{"ts":1720000000000,"exchange":"poloniex","symbol":"GFT","price":0.012,"qty":-5,"side":"buy","id":"t1"}'
    with pytest.raises(SchemaViolation):
        parse_record(line)


def test_parse_snapshot_example_and_round_trip():
    line = '{"ts":1720000000000,"exchange":"poloniex","symbol":"GFT","bids":[[10.0,5],[9.9,3]],"asks":[[10.2,4],[10.3,6]]}'
    s = parse_record(line)
    assert isinstance(s, OrderBookSnapshot)
    assert s.depth == 2
    assert s.bids[0] == (Decimal("10.0"), Decimal(5))
    assert parse_record(encode_record(s)) == s


def test_field_order_is_irrelevant():
    a = parse_record('{"ts":1,"exchange":"x","symbol":"A","price":1,"qty":2,"side":"sell","id":"q"}')
    b = parse_record('{"id":"q","side":"sell","qty":2,"price":1,"symbol":"A","exchange":"x","ts":1}')
    assert a == b


@pytest.mark.parametrize(
    "line, err",
    [
        ('{"ts":1,"exchange":"x"', MalformedRecord),
        ("not json", MalformedRecord),
        ('{"ts":1,"exchange":"x","symbol":"A","price":NaN,"qty":1,"side":"buy","id":"a"}', MalformedRecord),
        ("[1,2]", SchemaViolation),
        ('{"ts":1.5,"exchange":"x","symbol":"A","price":1,"qty":1,"side":"buy","id":"a"}', SchemaViolation),
        ('{"ts":1,"exchange":"x","symbol":"A","price":1,"qty":1,"side":"hold","id":"a"}', SchemaViolation),
        ('{"ts":1,"exchange":"x","symbol":"A","price":1,"qty":1,"side":"buy"}', SchemaViolation),
        ('{"ts":1,"exchange":"x","symbol":"A","bids":[[9,1],[10,1]],"asks":[]}', SchemaViolation),
        ('{"ts":1,"exchange":"x","symbol":"A","bids":[],"asks":[]}', SchemaViolation),
        ('{"ts":1,"channel":"c","text":"hi","label":"Spam"}', SchemaViolation),
        ('{"ts":1,"exchange":"","symbol":"A","price":1,"qty":1,"side":"buy","id":"a"}', SchemaViolation),
    ],
)
def test_parse_errors_are_typed(line, err):
    with pytest.raises(err):
        parse_record(line)


def test_parse_error_reports_byte_offset():
    with pytest.raises(MalformedRecord) as ei:
        parse_record('{"ts": 1, oops}', offset=100)
    assert ei.value.offset == 110


@settings(max_examples=300)
@given(st.binary(max_size=80))
def test_validation_is_total(raw):
    try:
        rec = parse_record(raw)
    except (MalformedRecord, SchemaViolation):
        return
    assert record_tag(rec) in ("snapshot", "trade", "message")


def test_message_record():
    m = parse_record('{"ts":5,"channel":"alpha","text":"The coin is $GFT","label":"TargetCoinRelease","symbol":"GFT","exchange":"poloniex"}')
    assert isinstance(m, LabeledMessage)
    assert m.label is MessageLabel.TARGET_COIN_RELEASE
    assert (m.extracted_symbol, m.extracted_exchange) == ("GFT", "poloniex")


def test_iter_file_offsets_and_duplicate_ids(tmp_path):
    p = tmp_path / "t.jsonl"
    lines = [encode_record(trade(1, 1, ts=T0 + i, tid=f"id{i % 2}")) for i in range(3)]
    p.write_text("\n".join(lines) + "\n")
    got = iter_file(p)
    assert next(got)[0] == 0
    assert next(got)[0] == len(lines[0]) + 1
    with pytest.raises(SchemaViolation) as ei:
        next(got)
    assert ei.value.path == p
    assert ei.value.offset == 2 * (len(lines[0]) + 1)


def test_missing_file_is_io_failure(tmp_path):
    with pytest.raises(IoFailure):
        read_records(tmp_path / "nope.jsonl")


# ---------------------------------------------------------------- replay


def _write(path, recs):
    write_records(path, recs)
    return path


def test_replay_merges_interleaved_files(tmp_path):
    a = _write(tmp_path / "a.jsonl", [trade(1, 1, ts=T0 + t, tid=f"a{t}") for t in (0, 2, 4)])
    b = _write(tmp_path / "b.jsonl", [trade(1, 1, ts=T0 + t, symbol="AMC", tid=f"b{t}") for t in (1, 3, 5)])
    out = list(replay([a, b]))
    assert [r.timestamp - T0 for r in out] == [0, 1, 2, 3, 4, 5]


def test_replay_snapshot_before_trade_on_tie(tmp_path):
    t = _write(tmp_path / "t.jsonl", [trade(1, 1, ts=T0)])
    s = _write(tmp_path / "s.jsonl", [book([(1, 1)], [(2, 1)], ts=T0)])
    out = list(replay([t, s]))
    assert [record_tag(r) for r in out] == ["snapshot", "trade"]


def test_replay_tie_break_exchange_symbol_then_input_order():
    x = [trade(1, 1, ts=T0, symbol="B", exchange="b", tid="1"), trade(1, 2, ts=T0, symbol="A", exchange="b", tid="2")]
    y = [trade(1, 3, ts=T0, symbol="Z", exchange="a", tid="3"), trade(1, 4, ts=T0, symbol="A", exchange="b", tid="4")]
    out = list(replay([x, y]))
    assert [r.trade_id for r in out] == ["3", "2", "4", "1"]


def test_replay_out_of_order_halts_with_location(tmp_path):
    p = tmp_path / "bad.jsonl"
    lines = [encode_record(trade(1, 1, ts=T0 + t, tid=str(t))) for t in (5, 6, 3)]
    p.write_text("\n".join(lines) + "\n")
    seen = []
    with pytest.raises(OutOfOrderInput) as ei:
        for r in replay([p]):
            seen.append(r)
    assert len(seen) == 2
    assert ei.value.path == str(p)
    assert ei.value.offset == 2 * (len(lines[0]) + 1)


def _random_stream(rng, n, idx):
    ts = T0
    out = []
    for j in range(n):
        ts += rng.choice([0, 0, 1, 7, 50])
        kind = rng.random()
        sym = rng.choice(["AAA", "BBB"])
        if kind < 0.5:
            out.append(trade(1, 1, ts=ts, symbol=sym, tid=f"{idx}-{j}"))
        elif kind < 0.9:
            out.append(book([(1, 1)], [(2, j + 1)], ts=ts, symbol=sym))
        else:
            out.append(LabeledMessage(ts, "c", f"m{j}", None, sym, "poloniex", f"{idx}-{j}"))
    return out


def _key(rec):
    if isinstance(rec, LabeledMessage):
        return (rec.timestamp, rec.extracted_exchange or "", rec.extracted_symbol or "", 2)
    return (rec.timestamp, rec.exchange, rec.symbol, 0 if isinstance(rec, OrderBookSnapshot) else 1)


def test_replay_three_files_of_1000_matches_stable_sort(tmp_path):
    rng = random.Random(3)
    streams = [_random_stream(rng, 1000, i) for i in range(3)]
    paths = [_write(tmp_path / f"s{i}.jsonl", s) for i, s in enumerate(streams)]
    out = list(replay(paths))
    assert len(out) == 3000
    expected = sorted(
        (rec for s in streams for rec in s),
        key=lambda r: _key(r),
    )
    # stable sort of the concatenation orders equal keys by source index then position
    assert [encode_record(r) for r in out] == [encode_record(r) for r in expected]
    assert all(a.timestamp <= b.timestamp for a, b in zip(out, out[1:]))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 4))
def test_replay_equals_stable_sort_property(seed, n_sources):
    rng = random.Random(seed)
    streams = [_random_stream(rng, rng.randint(0, 40), i) for i in range(n_sources)]
    out = list(replay(streams))
    expected = sorted((rec for s in streams for rec in s), key=_key)
    assert out == expected


def test_replay_is_deterministic(tmp_path):
    rng = random.Random(11)
    paths = [_write(tmp_path / f"s{i}.jsonl", _random_stream(rng, 200, i)) for i in range(3)]
    first = [encode_record(r) for r in replay(paths)]
    assert first == [encode_record(r) for r in replay(paths)]


class FakeClock:
    def __init__(self):
        self.t = 100.0
        self.sleeps = []

    def monotonic(self):
        return self.t

    def sleep(self, dt):
        self.sleeps.append(dt)
        self.t += dt


def test_replay_paces_with_multiplier():
    recs = [trade(1, 1, ts=T0 + ms, tid=str(ms)) for ms in (0, 1000, 3000)]
    clock = FakeClock()
    out = list(replay([recs], speed="x2", sleep=clock.sleep, monotonic=clock.monotonic))
    assert len(out) == 3
    assert clock.sleeps == pytest.approx([0.5, 1.0])
    clock = FakeClock()
    list(replay([recs], speed="real", sleep=clock.sleep, monotonic=clock.monotonic))
    assert clock.sleeps == pytest.approx([1.0, 2.0])
    clock = FakeClock()
    list(replay([recs], speed="fast", sleep=clock.sleep, monotonic=clock.monotonic))
    assert clock.sleeps == []


def test_parse_speed():
    assert parse_speed("fast") is None
    assert parse_speed("real") == 1.0
    assert parse_speed("x10") == 10.0
    assert parse_speed(2.5) == 2.5
    with pytest.raises(ValueError):
        parse_speed(0)


def test_market_data_groups_by_instrument(tmp_path):
    recs = [book([(1, 1)], [(2, 1)], ts=T0), trade(1, 1, ts=T0 + 1), trade(1, 1, ts=T0 + 2, symbol="AMC")]
    md = MarketData.from_records(recs)
    assert sorted(md.symbols) == [("poloniex", "AMC"), ("poloniex", "GFT")]
    sd = md.symbols[("poloniex", "GFT")]
    assert sd.start == T0
    assert [t.timestamp for t in sd.trades_between(T0, T0 + 2)] == [T0 + 1]
    assert sd.snapshots_until(T0) == 1


# ---------------------------------------------------------------- rankings CSV


def _ranked(n, seed=0):
    rng = random.Random(seed)
    scores = {f"C{i:03d}": rng.gauss(0, 1) for i in range(n)}
    zs = {s: ZVector(s, {"taker_buy_volume": v, "vwap": None}, T0) for s, v in scores.items()}
    return rank_candidates(scores, zs)


def test_persist_rankings_empty(tmp_path):
    p = tmp_path / "r.csv"
    assert persist_rankings([], p) == 0
    assert p.read_text().splitlines() == [",".join(RANKING_HEADER)]


def test_persist_rankings_51_rows_and_deterministic(tmp_path):
    p, q = tmp_path / "a.csv", tmp_path / "b.csv"
    assert persist_rankings(_ranked(51), p) == 51
    persist_rankings(_ranked(51), q)
    lines = p.read_text().splitlines()
    assert len(lines) == 52
    assert [int(line.split(",")[0]) for line in lines[1:]] == list(range(1, 52))
    assert p.read_bytes() == q.read_bytes()
    header = lines[0].split(",")
    assert header[:3] == ["rank", "symbol", "score"] and len(header) == 18
    row = lines[1].split(",")
    assert row[header.index("z_vwap")] == ""


def test_persist_rankings_requires_rank_order(tmp_path):
    with pytest.raises(ValueError):
        persist_rankings(list(reversed(_ranked(3))), tmp_path / "r.csv")


def test_read_coin_metadata_fixture():
    from pathlib import Path

    coins = read_coin_metadata(Path(__file__).parent / "fixtures" / "coins_200.csv")
    assert len(coins) == 200
    assert len({c.symbol for c in coins}) == 200
    assert any(c.market_cap_usd == 0 for c in coins)
