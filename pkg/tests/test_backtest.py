import json

import pytest

from helpers import HOUR, QUICK
from pumpwatch.backtest import (
    BacktestEvent,
    analyze_event,
    event_to_json,
    load_events,
    rank_at,
    run_backtest,
    symbol_zvectors,
)
from pumpwatch.ingest import MarketData
from pumpwatch.model import PumpEvent
from pumpwatch.simulator import ScenarioConfig, generate_scenario
from pumpwatch.zscore import ModelConfig


@pytest.fixture(scope="module")
def ten_events():
    records, events = [], []
    for seed in range(10):
        sc = generate_scenario(ScenarioConfig(seed=seed, symbol_count=21, exchange=f"sim{seed}", **QUICK))
        records += sc.all_records()
        events.append(BacktestEvent(sc.event, sc.pump_time))
    return MarketData.from_records(records), events


def test_report_populated(ten_events):
    data, events = ten_events
    rep = run_backtest(events, data, offsets=(20,), ks=(5, 10))
    assert len(rep.events) == 10 and not rep.skipped
    for e in rep.events:
        r = e["ranks"]["both"]["20"]
        assert 1 <= r["rank"] <= r["candidate_count"] == 21
        assert e["candidates"][0] == e["symbol"] and len(e["candidates"]) == 21
    row = rep.table()[0]
    assert row["offset_s"] == 20
    assert row["both"]["TOP5"] <= row["both"]["TOP10"]
    assert row["both"]["TOP5"] == sum(r <= 5 for r in rep.ranks("both", 20)) / 10


def test_offsets_trend(ten_events):
    data, events = ten_events
    rep = run_backtest(events, data, offsets=(20, 40, 60))
    assert rep.hit_rate("both", 20, 5) >= rep.hit_rate("both", 60, 5)


def test_event_without_history_is_skipped(ten_events):
    data, events = ten_events
    early = BacktestEvent(events[0].event, events[0].pump_time - 2 * HOUR)
    ghost = BacktestEvent(PumpEvent("NOPE", "sim0", events[0].event.release_time, "x"), events[0].pump_time)
    rep = run_backtest([events[1], early, ghost], data, offsets=(20,))
    assert len(rep.events) == 1
    assert [s["reason"] for s in rep.skipped] == ["InsufficientHistory", "UnknownTarget"]
    assert rep.to_dict()["skipped_count"] == 2


def test_deterministic_and_independent_of_jobs(ten_events):
    data, events = ten_events
    a = run_backtest(events, data, modes=("both", "trade_only", "book_only"), seed=3).to_json()
    b = run_backtest(events, data, modes=("both", "trade_only", "book_only"), seed=3, jobs=3).to_json()
    assert a == b
    doc = json.loads(a)
    assert set(doc["table"][0]) == {"offset_s", "both", "trade_only", "book_only"}


def test_decoy_sampling_is_seeded():
    sc = generate_scenario(ScenarioConfig(seed=1, symbol_count=12, **QUICK))
    data = MarketData.from_records(sc.all_records())
    ev = [BacktestEvent(sc.event, sc.pump_time)]
    a = run_backtest(ev, data, offsets=(20,), sample_size=4, seed=1).events[0]["candidates"]
    b = run_backtest(ev, data, offsets=(20,), sample_size=4, seed=1).events[0]["candidates"]
    assert a == b and len(a) == 5 and a[0] == sc.event.symbol
    sets = {tuple(run_backtest(ev, data, offsets=(20,), sample_size=4, seed=s).events[0]["candidates"]) for s in range(2, 6)}
    assert len(sets | {tuple(a)}) > 1
    with pytest.raises(ValueError):
        run_backtest(ev, data, modes=("neither",))


def test_baseline_excludes_the_short_window(ten_events):
    data, events = ten_events
    cfg = ModelConfig()
    sd = data.symbols[(events[0].event.exchange, events[0].event.symbol)]
    now = events[0].pump_time - 20_000
    z = symbol_zvectors(sd, [now], cfg)[now]
    assert z is not None and z.evaluated_at <= now


def test_rank_at_single_exchange(ten_events):
    data, events = ten_events
    sc_data = MarketData()
    sc_data.symbols = {k: v for k, v in data.symbols.items() if k[0] == "sim0"}
    ranked = rank_at(sc_data, events[0].pump_time - 20_000)
    assert [c.rank for c in ranked] == list(range(1, 22))


def test_events_io_round_trip(tmp_path, ten_events):
    _, events = ten_events
    p = tmp_path / "events.jsonl"
    p.write_text("".join(event_to_json(e.event, e.pump_time) + "\n" for e in events))
    assert load_events(p) == events


def test_analyze_event(ten_events):
    data, events = ten_events
    out = analyze_event(data, events[0])
    assert set(out) >= {"volume_ratio", "order_size_increase_ratio", "time_to_peak_min", "spike_magnitude"}
    # synthetic data stops at the pump, so the post-pump spike is not covered
    assert out["spike_magnitude"] is None
    assert analyze_event(data, BacktestEvent(PumpEvent("NOPE", "sim0", events[0].event.release_time, "x"), 0))["error"] == "UnknownTarget"
