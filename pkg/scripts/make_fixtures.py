"""Regenerate the bundled test fixtures under tests/fixtures/.

coins_200.csv      200 coins; 93 flagged as historically pumped with a median
                   cap near 2.6M USD and 89 of them (95.7%) inside [0, 60M].
messages_40.jsonl  40 labeled channel messages around seven pump events.
expected_events.json  the event set those messages are built around.

Run from the repository root: python scripts/make_fixtures.py
"""

import csv
import json
import math
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures"
DAY0 = 1_719_964_800_000  # 2024-07-03 00:00 UTC
H, M, S = 3_600_000, 60_000, 1_000

KNOWN_COINS = ["TOKKI", "GFT", "AMC", "KPOL", "DMT", "COLLAB", "IZI", "KOL", "MTS", "AIEPK"]
DERIVATIVES = ["BTC3L", "ETH3S", "XRPUP", "ADADOWN", "BNBBULL", "LINKBEAR"]
SUFFIXES = ("3L", "3S", "5L", "5S", "UP", "DOWN", "BULL", "BEAR")


def tickers(rng, n, taken):
    out = []
    while len(out) < n:
        t = "".join(rng.choice("ABCDEFGHIJKLMNOPQRSTUVWXYZ") for _ in range(rng.randint(3, 5)))
        if t in taken or t.endswith(SUFFIXES):
            continue
        taken.add(t)
        out.append(t)
    return out


def coins():
    rng = random.Random(20240703)
    taken = set(KNOWN_COINS) | set(DERIVATIVES)
    pumped_syms = KNOWN_COINS + tickers(rng, 93 - len(KNOWN_COINS), taken)
    other_syms = tickers(rng, 107 - len(DERIVATIVES), taken) + DERIVATIVES

    # pumped: 12 unreported, 77 reported inside the range, 4 above it
    caps = [0] * 12
    while len(caps) < 89:
        c = int(3_000_000 * math.exp(rng.gauss(0.0, 1.1)))
        if 1_000 <= c <= 60_000_000:
            caps.append(c)
    caps += [75_000_000, 120_000_000, 250_000_000, 1_100_000_000]
    rng.shuffle(caps)

    rows = [(s, c, 1) for s, c in zip(pumped_syms, caps)]
    for s in other_syms:
        if s in DERIVATIVES:
            c = rng.choice([0, 5_000_000, 20_000_000])
        else:
            c = 0 if rng.random() < 0.05 else int(150_000_000 * math.exp(rng.gauss(0.0, 2.0)))
        rows.append((s, c, 0))
    rng.shuffle(rows)
    with open(OUT / "coins_200.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["symbol", "name", "market_cap_usd", "token_standard", "pumped"])
        for s, c, p in rows:
            w.writerow([s, s.title(), c, rng.choice(["ERC20", "BEP20", "other", ""]), p])


def messages():
    day1 = DAY0 + 24 * H
    msgs = []

    def add(ts, channel, text, label, symbol=None, exchange=None):
        m = {"ts": ts, "channel": channel, "text": text, "label": label, "id": f"m{len(msgs) + 1:02d}"}
        if symbol:
            m["symbol"] = symbol
        if exchange:
            m["exchange"] = exchange
        msgs.append(m)
        return m["id"]

    rel = "TargetCoinRelease"
    ev = {}
    # GFT on poloniex: 14:10 and 14:20 both round to 14:00
    ev["GFT/poloniex"] = [
        add(DAY0 + 14 * H + 10 * M, "alpha", "The coin is $GFT", rel, "GFT", "poloniex"),
        add(DAY0 + 14 * H + 20 * M, "bravo", "Coin: GFT buy now", rel, "GFT", "poloniex"),
    ]
    # same symbol on another exchange is its own event
    ev["GFT/kucoin"] = [add(DAY0 + 14 * H + 12 * M, "charlie", "The coin is $GFT", rel, "GFT", "kucoin")]
    # 14:40 and 15:10 both round to 15:00
    ev["AMC/poloniex"] = [
        add(DAY0 + 14 * H + 40 * M, "alpha", "Target coin: AMC", rel, "AMC", "poloniex"),
        add(DAY0 + 15 * H + 10 * M, "delta", "The coin is $AMC", rel, "AMC", "poloniex"),
    ]
    # rounding edge: one millisecond either side of the half hour
    ev["TOKKI/mexc@9"] = [add(DAY0 + 9 * H + 30 * M - 1, "echo", "The coin is $TOKKI", rel, "TOKKI", "mexc")]
    ev["TOKKI/mexc@10"] = [add(DAY0 + 9 * H + 30 * M, "foxtrot", "The coin is $TOKKI", rel, "TOKKI", "mexc")]
    ev["KPOL/kucoin"] = [
        add(day1 + 20 * H + 5 * M, ch, "Coin: KPOL", rel, "KPOL", "kucoin") for ch in ("alpha", "bravo", "golf")
    ]
    # lower-case extraction normalizes; 23:45 rounds into the next day
    ev["DMT/poloniex"] = [add(day1 + 23 * H + 45 * M, "hotel", "the coin is $dmt", rel, "dmt", "Poloniex")]

    other = [
        (DAY0 + 8 * H, "alpha", "Pump announcement! Exchange: Poloniex, time: 14:00 UTC", "PumpAnnouncement"),
        (DAY0 + 13 * H, "alpha", "1 HOUR UNTIL THE PUMP", "Countdown"),
        (DAY0 + 13 * H + 30 * M, "bravo", "30 minutes left", "Countdown"),
        (DAY0 + 13 * H + 55 * M, "alpha", "5 minutes left, get ready", "Countdown"),
        (DAY0 + 14 * H + 30 * M, "alpha", "GFT peaked at +350%, congratulations", "PumpResults"),
        (DAY0 + 15 * H, "delta", "Results: AMC reached 4x", "PumpResults"),
        (DAY0 + 10 * H, "echo", "Next pump will be tomorrow", "PumpAnnouncement"),
        (DAY0 + 12 * H, "foxtrot", "join our vip group now!!!", "Noise"),
        (DAY0 + 16 * H, "golf", "Pump postponed to Friday", "DelayOrCancellation"),
        (DAY0 + 17 * H, "golf", "Sorry, the pump is cancelled", "DelayOrCancellation"),
        (DAY0 + 18 * H, "hotel", "Market looks bullish today", "Noise"),
        (DAY0 + 19 * H, "hotel", "Thanks for joining", "Noise"),
        (day1 + 6 * H, "alpha", "Upcoming pump on KuCoin, date: Friday", "PumpAnnouncement"),
        (day1 + 19 * H, "alpha", "2 hours until the pump", "Countdown"),
        (day1 + 19 * H + 50 * M, "bravo", "10 minutes left", "Countdown"),
        (day1 + 20 * H + 3 * M, "golf", "2 minutes left", "Countdown"),
        (day1 + 21 * H, "alpha", "KPOL pump results: profit 130%", "PumpResults"),
        (day1 + 22 * H, "hotel", "Next pump will be on Poloniex", "PumpAnnouncement"),
        (day1 + 23 * H + 30 * M, "hotel", "15 minutes left", "Countdown"),
        (day1 + 23 * H + 40 * M, "hotel", "5 minutes until the pump", "Countdown"),
        (day1 + 12 * H, "india", "gm everyone", "Noise"),
        (day1 + 13 * H, "india", "Pump delayed by one hour", "DelayOrCancellation"),
        (day1 + 14 * H, "india", "Invite your friends", "Noise"),
        (day1 + 15 * H, "juliet", "3 hours left", "Countdown"),
        (day1 + 16 * H, "juliet", "Huge gains for our members", "PumpResults"),
        (day1 + 17 * H, "juliet", "Follow us on X", "Noise"),
        (day1 + 18 * H, "kilo", "Pump announcement for Sunday", "PumpAnnouncement"),
        (day1 + 18 * H + 30 * M, "kilo", "Stay tuned", "Noise"),
        (day1 + 23 * H + 59 * M, "kilo", "Get ready", "Countdown"),
    ]
    for ts, ch, text, label in other:
        add(ts, ch, text, label)
    assert len(msgs) == 40, len(msgs)
    msgs.sort(key=lambda m: (m["ts"], m["id"]))
    with open(OUT / "messages_40.jsonl", "w") as fh:
        for m in msgs:
            fh.write(json.dumps(m, separators=(",", ":")) + "\n")

    def hour(h):
        return h * H

    expected = [
        {"symbol": "TOKKI", "exchange": "mexc", "release_time": DAY0 + hour(9), "message_ids": ev["TOKKI/mexc@9"]},
        {"symbol": "TOKKI", "exchange": "mexc", "release_time": DAY0 + hour(10), "message_ids": ev["TOKKI/mexc@10"]},
        {"symbol": "GFT", "exchange": "kucoin", "release_time": DAY0 + hour(14), "message_ids": ev["GFT/kucoin"]},
        {"symbol": "GFT", "exchange": "poloniex", "release_time": DAY0 + hour(14), "message_ids": ev["GFT/poloniex"]},
        {"symbol": "AMC", "exchange": "poloniex", "release_time": DAY0 + hour(15), "message_ids": ev["AMC/poloniex"]},
        {"symbol": "KPOL", "exchange": "kucoin", "release_time": day1 + hour(20), "message_ids": ev["KPOL/kucoin"]},
        {"symbol": "DMT", "exchange": "poloniex", "release_time": day1 + hour(24), "message_ids": ev["DMT/poloniex"]},
    ]
    (OUT / "expected_events.json").write_text(json.dumps(expected, indent=2) + "\n")


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    coins()
    messages()
