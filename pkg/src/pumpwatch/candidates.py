"""Candidate universe filtering: market-cap range and derivative-token exclusion."""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal
from typing import List, Sequence, Tuple

from .errors import DuplicateSymbol, InvalidConfig
from .model import CoinMetadata

DEFAULT_DERIVATIVE_SUFFIXES = ("3L", "3S", "5L", "5S", "UP", "DOWN", "BULL", "BEAR")


@dataclass(frozen=True)
class DerivativePattern:
    text: str
    position: str = "suffix"  # "suffix" or "infix"

    def matches(self, symbol: str) -> bool:
        s, p = symbol.upper(), self.text.upper()
        if self.position == "suffix":
            # at least two base characters must precede the suffix ("JUP" is spot)
            return len(s) >= len(p) + 2 and s.endswith(p)
        return p in s


@dataclass(frozen=True)
class FilterConfig:
    mcap_min: Decimal = Decimal(0)
    mcap_max: Decimal = Decimal(60_000_000)
    include_unreported: bool = True
    derivative_patterns: Tuple[DerivativePattern, ...] = tuple(
        DerivativePattern(p) for p in DEFAULT_DERIVATIVE_SUFFIXES
    )

    def __post_init__(self):
        if self.mcap_min > self.mcap_max:
            raise InvalidConfig("mcap_min must not exceed mcap_max")
        for p in self.derivative_patterns:
            if p.position not in ("suffix", "infix") or not p.text:
                raise InvalidConfig(f"bad derivative pattern {p!r}")


def market_cap_pass(coin: CoinMetadata, cfg: FilterConfig = FilterConfig()) -> bool:
    """Inclusive range check; a zero cap means unreported and follows ``include_unreported``."""
    cap = coin.market_cap_usd
    if cap == 0:
        return cfg.include_unreported
    return cfg.mcap_min <= cap <= cfg.mcap_max


def base_symbol(symbol: str) -> str:
    """Strip a USDT quote if the symbol is written as a pair (``BTC3L/USDT``, ``BTC3L_USDT``)."""
    s = symbol.strip().upper()
    for sep in ("/", "_", "-"):
        if sep in s:
            return s.split(sep, 1)[0]
    if s.endswith("USDT") and len(s) > 4:
        return s[:-4]
    return s


def is_derivative_symbol(symbol: str, cfg: FilterConfig = FilterConfig()) -> bool:
    if not symbol:
        raise ValueError("empty symbol")
    base = base_symbol(symbol)
    return any(p.matches(base) for p in cfg.derivative_patterns)


def filter_universe(
    coins: Sequence[CoinMetadata], cfg: FilterConfig = FilterConfig()
) -> Tuple[List[CoinMetadata], List[Tuple[CoinMetadata, str]]]:
    """Split ``coins`` into kept and rejected, preserving input order.

    Rejection reasons are ``mcap_out_of_range`` or ``derivative_pattern``;
    a coin failing both is reported under the market-cap reason.
    """
    seen = set()
    kept, rejected = [], []
    for coin in coins:
        if coin.symbol in seen:
            raise DuplicateSymbol(f"duplicate symbol {coin.symbol}")
        seen.add(coin.symbol)
        if not market_cap_pass(coin, cfg):
            rejected.append((coin, "mcap_out_of_range"))
        elif is_derivative_symbol(coin.symbol, cfg):
            rejected.append((coin, "derivative_pattern"))
        else:
            kept.append(coin)
    return kept, rejected
