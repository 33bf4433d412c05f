import hashlib
from dataclasses import replace
from pathlib import Path

import pytest

from helpers import HOUR, QUICK, scenario_ranks
from pumpwatch.errors import InvalidConfig, WindowOutOfRange
from pumpwatch.ingest import encode_record, parse_record
from pumpwatch.model import OrderBookSnapshot, Side, Trade
from pumpwatch.simulator import (
    ScenarioConfig,
    generate_scenario,
    generate_symbol,
    inject_pump,
    injection_params,
    snapshot_schedule,
    symbol_params,
)

SMALL = ScenarioConfig(seed=7, symbol_count=6, **QUICK)


def _digest(out_dir: Path) -> str:
    h = hashlib.sha256()
    for f in sorted(out_dir.iterdir()):
        h.update(f.name.encode())
        h.update(f.read_bytes())
    return h.hexdigest()


def test_same_seed_gives_identical_files(tmp_path):
    generate_scenario(SMALL, tmp_path / "a")
    generate_scenario(SMALL, tmp_path / "b", jobs=2)
    assert _digest(tmp_path / "a") == _digest(tmp_path / "b")
    generate_scenario(replace(SMALL, seed=8), tmp_path / "c")
    assert _digest(tmp_path / "a") != _digest(tmp_path / "c")


def test_symbol_stream_does_not_depend_on_universe_size():
    a = generate_symbol(SMALL, 2)
    b = generate_symbol(replace(SMALL, symbol_count=40), 2)
    assert a == b


def test_three_day_schedule_count():
    cfg = ScenarioConfig(fine_span_ms=3 * 24 * HOUR)
    sched = snapshot_schedule(cfg)
    assert len(sched) == 51_840
    assert 51 * len(sched) == 51 * 51_840


def test_default_schedule_is_coarse_then_fine():
    cfg = ScenarioConfig()
    sched = snapshot_schedule(cfg)
    gaps = set((sched[1:] - sched[:-1]).tolist())
    assert gaps == {5_000, 60_000}
    assert len(sched) == (3 * 24 - 1) * 60 + 720
    assert sched[-1] < cfg.resolved_pump_time


def test_emitted_records_validate_and_round_trip():
    sc = generate_scenario(SMALL)
    recs = sc.all_records()
    assert recs
    for r in recs[::7]:
        assert parse_record(encode_record(r)) == r
    ids = [(r.symbol, r.trade_id) for r in recs if isinstance(r, Trade)]
    assert len(ids) == len(set(ids))


def test_realized_trade_rate_within_ten_percent():
    cfg = ScenarioConfig(seed=3, symbol_count=10, span_ms=HOUR, fine_span_ms=0, trade_rate=1.0)
    window_start = cfg.resolved_pump_time - cfg.accumulation_ms
    for i in range(cfg.symbol_count):
        p = symbol_params(cfg, i)
        trades = [r for r in generate_symbol(cfg, i) if isinstance(r, Trade) and r.timestamp < window_start]
        realized = len(trades) / ((window_start - (cfg.resolved_pump_time - cfg.span_ms)) / 1000)
        assert abs(realized / p.trade_rate - 1) < 0.10, (i, realized, p.trade_rate)


def test_injection_locality():
    cfg = SMALL
    inj = injection_params(cfg)
    base = generate_symbol(cfg, inj.symbol_index)
    other = generate_symbol(cfg, (inj.symbol_index + 1) % cfg.symbol_count)
    mixed = base + other
    out = inject_pump(mixed, inj, stream_end=cfg.resolved_pump_time)
    out_ids = {id(r) for r in out}
    for r in mixed:
        inside = r.symbol == inj.symbol and inj.window_start <= r.timestamp < inj.window_end
        if not inside:
            assert id(r) in out_ids
    assert [encode_record(r) for r in out if r.symbol != inj.symbol] == [encode_record(r) for r in other]
    changed = [r for r in out if id(r) not in {id(x) for x in mixed}]
    assert changed and all(inj.window_start <= r.timestamp < inj.window_end for r in changed)


def test_zero_width_window_is_identity():
    inj = injection_params(SMALL)
    base = generate_symbol(SMALL, inj.symbol_index)
    zero = replace(inj, window_start=inj.window_end)
    assert inject_pump(base, zero) == base


def test_window_out_of_range():
    inj = injection_params(SMALL)
    base = generate_symbol(SMALL, inj.symbol_index)
    with pytest.raises(WindowOutOfRange):
        inject_pump(base, replace(inj, window_start=inj.window_start - 10 * HOUR))
    with pytest.raises(WindowOutOfRange):
        inject_pump(base, replace(inj, symbol="NOPE"))


@pytest.mark.parametrize("seed", range(8))
def test_window_buy_volume_reaches_multiplier(seed):
    sc = generate_scenario(ScenarioConfig(seed=seed, symbol_count=3, **QUICK))
    inj = sc.injection
    total = sum(
        r.quantity
        for r in sc.records[inj.symbol]
        if isinstance(r, Trade) and r.taker_side is Side.BUY and inj.window_start <= r.timestamp < inj.window_end
    )
    assert float(total) >= inj.buy_multiplier * inj.expected_buy_qty - 0.01
    assert inj.buy_multiplier > 1


def test_ask_wall_grows_towards_the_pump():
    sc = generate_scenario(SMALL)
    inj = sc.injection
    base = {r.timestamp: r for r in generate_symbol(SMALL, inj.symbol_index) if isinstance(r, OrderBookSnapshot)}
    seen = 0
    for r in sc.records[inj.symbol]:
        if isinstance(r, OrderBookSnapshot) and inj.window_start <= r.timestamp < inj.window_end:
            ratio = float(sum(q for _, q in r.asks) / sum(q for _, q in base[r.timestamp].asks))
            ramp = 1 + (SMALL.wall_multiplier - 1) * (r.timestamp - inj.window_start) / SMALL.accumulation_ms
            assert ratio == pytest.approx(ramp, rel=0.01)
            seen += 1
    assert seen == SMALL.accumulation_ms // SMALL.cadence_ms


def test_control_is_at_chance_level():
    hits = 0
    for seed in range(20):
        ev = scenario_ranks(seed, offsets=(20,), buy_multiplier=1.0, wall_multiplier=1.0)
        hits += ev["ranks"]["both"]["20"]["rank"] <= 5
    assert 0.05 <= hits / 20 <= 0.15, hits


@pytest.mark.parametrize(
    "bad",
    [
        dict(symbol_count=0),
        dict(seed=-1),
        dict(fine_span_ms=10 * HOUR, span_ms=HOUR),
        dict(target_index=99),
        dict(wall_multiplier=0),
        dict(buy_multiplier=-1.0),
        dict(trade_rate=0),
    ],
)
def test_invalid_config(bad):
    with pytest.raises(InvalidConfig):
        generate_scenario(ScenarioConfig(**bad))
