"""Command-line entry point: ``pumpwatch <subcommand> ...``.

Exit status is 0 on success, 1 on a domain error (reported on stderr as
``error[<Code>]: message``) and 2 on a usage error. Logs go to stderr; data
only to files, each written atomically.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from decimal import Decimal
from typing import List, Optional, Sequence

from . import __version__
from .backtest import MODES, analyze_event, event_to_json, load_events, rank_at, run_backtest
from .candidates import FilterConfig, filter_universe
from .errors import IoFailure, PumpwatchError
from .events import classify_message_baseline, cluster_pump_events
from .ingest import (
    MarketData,
    atomic_write_text,
    data_files,
    encode_record,
    persist_rankings,
    read_coin_metadata,
    read_records,
    replay,
    write_coin_metadata,
    write_metrics_dump,
    write_rejections,
)
from .metrics import stream_metric_vectors
from .model import HOUR_MS, MINUTE_MS, LabeledMessage
from .simulator import ScenarioConfig, generate_scenario
from .zscore import ModelConfig, load_config

log = logging.getLogger("pumpwatch")


def _int_list(text: str) -> List[int]:
    try:
        values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or any(v < 0 for v in values):
        raise argparse.ArgumentTypeError("expected non-negative integers")
    return values


def _modes(text: str) -> List[str]:
    if text == "all":
        return list(MODES)
    modes = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in modes if m not in MODES]
    if bad or not modes:
        raise argparse.ArgumentTypeError(f"mode must be one of {', '.join(MODES)} or 'all'")
    return modes


def _model_config(args) -> ModelConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else ModelConfig()
    overrides = {}
    if getattr(args, "min_samples", None) is not None:
        overrides["min_samples"] = args.min_samples
    if getattr(args, "short_window", None) is not None:
        overrides["short_window_ms"] = args.short_window * 1000
    return replace(cfg, **overrides) if overrides else cfg


# --------------------------------------------------------------------------- subcommands


def cmd_simulate(args) -> int:
    kw = dict(seed=args.seed, symbol_count=args.coins)
    if args.span_hours is not None:
        kw["span_ms"] = int(args.span_hours * HOUR_MS)
    if args.fine_span_minutes is not None:
        kw["fine_span_ms"] = int(args.fine_span_minutes * MINUTE_MS)
    for name in ("trade_rate", "buy_multiplier", "wall_multiplier", "target_index"):
        if getattr(args, name) is not None:
            kw[name] = getattr(args, name)
    cfg = ScenarioConfig(**kw)
    if "fine_span_ms" not in kw and cfg.fine_span_ms > cfg.span_ms:
        cfg = replace(cfg, fine_span_ms=cfg.span_ms)
    sc = generate_scenario(cfg, out_dir=args.out, jobs=args.jobs)
    log.info("wrote %d symbols to %s; target %s at %d", len(sc.records), args.out, sc.event.symbol, sc.pump_time)
    return 0


def cmd_replay(args) -> int:
    files = [f for p in args.data for f in data_files(p)]
    lines = [encode_record(r) + "\n" for r in replay(files, args.speed)]
    atomic_write_text(args.out, "".join(lines))
    log.info("replayed %d records from %d files", len(lines), len(files))
    return 0


def cmd_rank(args) -> int:
    cfg = _model_config(args)
    data = MarketData.load(args.data)
    symbols = None
    if args.filter:
        kept, rejected = filter_universe(read_coin_metadata(args.filter), FilterConfig())
        symbols = [c.symbol for c in kept]
        log.info("filter kept %d coins, rejected %d", len(kept), len(rejected))
    ranked = rank_at(data, args.at, cfg, exchange=args.exchange, symbols=symbols, mode=args.mode)
    n = persist_rankings(ranked, args.out)
    if args.metrics_out:
        vectors = []
        exchange = args.exchange or data.exchanges()[0]
        for sym, sd in sorted(data.for_exchange(exchange).items()):
            if symbols is not None and sym not in symbols:
                continue
            vecs = list(
                stream_metric_vectors(sd, args.at, cfg.short_window_ms, cfg.cadence_ms,
                                      since=args.at - cfg.span_ms, slope_levels=cfg.slope_levels)
            )
            vectors.extend(vecs)
        write_metrics_dump(vectors, args.metrics_out)
    log.info("ranked %d symbols", n)
    return 0


def cmd_backtest(args) -> int:
    cfg = _model_config(args)
    events = load_events(args.events)
    report = run_backtest(
        events, args.data, offsets=args.offsets, modes=args.mode, cfg=cfg, ks=args.k,
        seed=args.seed, sample_size=args.sample_size, jobs=args.jobs,
    )
    atomic_write_text(args.out, report.to_json())
    for row in report.table():
        log.info("offset %ss: %s", row["offset_s"], {m: row[m] for m in report.modes})
    return 0


def cmd_filter(args) -> int:
    cfg = FilterConfig(
        mcap_max=Decimal(str(args.mcap_max)),
        include_unreported=not args.exclude_unreported,
    )
    kept, rejected = filter_universe(read_coin_metadata(args.coins), cfg)
    write_coin_metadata(kept, args.out)
    if args.rejected:
        write_rejections(rejected, args.rejected)
    log.info("kept %d, rejected %d", len(kept), len(rejected))
    return 0


def _messages(path) -> List[LabeledMessage]:
    return [r for r in read_records(path, "message")]


def cmd_classify(args) -> int:
    out = []
    for msg in _messages(args.messages):
        if msg.label is None or args.overwrite:
            msg = replace(msg, label=classify_message_baseline(msg.text) if msg.text.strip() else None)
        out.append(encode_record(msg) + "\n")
    atomic_write_text(args.out, "".join(out))
    return 0


def cmd_cluster(args) -> int:
    msgs = _messages(args.messages)
    if args.classify_missing:
        msgs = [replace(m, label=classify_message_baseline(m.text)) if m.label is None and m.text.strip() else m
                for m in msgs]
    events = cluster_pump_events(msgs)
    atomic_write_text(args.out, "".join(event_to_json(e) + "\n" for e in events))
    log.info("%d pump events", len(events))
    return 0


def cmd_analyze(args) -> int:
    data = MarketData.load(args.data)
    rows = [analyze_event(data, ev) for ev in load_events(args.events)]
    atomic_write_text(args.out, json.dumps(rows, indent=2, sort_keys=True) + "\n")
    return 0


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pumpwatch", description="Pump-and-dump target ranking from market data.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(fn=fn)
        return sp

    def model_opts(sp):
        sp.add_argument("--config", help="model config file (INI)")
        sp.add_argument("--min-samples", type=int)
        sp.add_argument("--short-window", type=int, help="short-term window in seconds")

    sp = add("simulate", cmd_simulate, "write a synthetic scenario")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--coins", type=int, default=51)
    sp.add_argument("--out", required=True)
    sp.add_argument("--span-hours", type=float)
    sp.add_argument("--fine-span-minutes", type=float)
    sp.add_argument("--trade-rate", type=float)
    sp.add_argument("--buy-multiplier", type=float)
    sp.add_argument("--wall-multiplier", type=float)
    sp.add_argument("--target-index", type=int)
    sp.add_argument("--jobs", type=int, default=1)

    sp = add("replay", cmd_replay, "merge record files into one time-ordered stream")
    sp.add_argument("--data", nargs="+", required=True)
    sp.add_argument("--speed", default="fast", help="fast, real, or a multiplier such as x10")
    sp.add_argument("--out", required=True)

    sp = add("rank", cmd_rank, "rank symbols at one instant")
    sp.add_argument("--data", required=True)
    sp.add_argument("--at", type=int, required=True, help="evaluation time, epoch ms")
    sp.add_argument("--filter", help="coin metadata CSV; only coins passing the filter are ranked")
    sp.add_argument("--exchange")
    sp.add_argument("--mode", choices=MODES, default="both")
    sp.add_argument("--out", default="rankings.csv")
    sp.add_argument("--metrics-out")
    model_opts(sp)

    sp = add("backtest", cmd_backtest, "TOP-k backtest over pump events")
    sp.add_argument("--events", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--offsets", type=_int_list, default=[20, 40, 60], help="seconds before the pump")
    sp.add_argument("--k", type=_int_list, default=[5, 10])
    sp.add_argument("--mode", type=_modes, default=["both"], help="both, trade_only, book_only, a list, or all")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--sample-size", type=int, default=50)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--out", default="backtest_report.json")
    model_opts(sp)

    sp = add("filter", cmd_filter, "market-cap and derivative-token filter")
    sp.add_argument("--coins", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--rejected")
    sp.add_argument("--mcap-max", type=float, default=60_000_000)
    sp.add_argument("--exclude-unreported", action="store_true")

    sp = add("cluster-events", cmd_cluster, "group target-coin releases into pump events")
    sp.add_argument("--messages", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--classify-missing", action="store_true")

    sp = add("classify", cmd_classify, "label messages with the keyword classifier")
    sp.add_argument("--messages", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--overwrite", action="store_true")

    sp = add("analyze", cmd_analyze, "volume, price-spike and order-size statistics per event")
    sp.add_argument("--data", required=True)
    sp.add_argument("--events", required=True)
    sp.add_argument("--out", required=True)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.fn(args)
    except PumpwatchError as e:
        print(f"error[{e.code}]: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error[{IoFailure.code}]: {e}", file=sys.stderr)
        return 1


def run(argv: Optional[Sequence[str]] = None) -> int:
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
