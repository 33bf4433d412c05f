"""Rolling baselines, Z-scores, aggregation and ranking."""

from __future__ import annotations

import configparser
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Deque, Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple

from .errors import EmptyInput, InvalidConfig, NonMonotonicTime, NoScorableMetrics, SymbolMismatch
from .model import BOOK_METRICS, METRIC_NAMES, MINUTE_MS, SECOND_MS, TRADE_METRICS, MetricVector

DAY_MS = 86_400_000

# +1: an increase looks pump-like, -1: a decrease does. A pre-placed sell wall
# lowers imbalance, imbalance_ratio, book_pressure and order_flow_imbalance.
DEFAULT_DIRECTIONS: Dict[str, int] = {m: 1 for m in METRIC_NAMES}
DEFAULT_DIRECTIONS.update(imbalance=-1, imbalance_ratio=-1, book_pressure=-1, order_flow_imbalance=-1)

MODE_METRICS = {
    "both": METRIC_NAMES,
    "trade_only": TRADE_METRICS,
    "book_only": BOOK_METRICS,
}


@dataclass(frozen=True)
class ModelConfig:
    span_ms: int = 3 * DAY_MS
    short_window_ms: int = 5 * MINUTE_MS
    cadence_ms: int = 5 * SECOND_MS
    min_samples: int = 30
    epsilon_sigma: float = 1e-12
    slope_levels: int = 10
    weights: Mapping[str, float] = field(default_factory=lambda: {m: 1.0 for m in METRIC_NAMES})
    directions: Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_DIRECTIONS))

    def __post_init__(self):
        if self.span_ms <= 0 or self.short_window_ms <= 0 or self.cadence_ms <= 0:
            raise InvalidConfig("durations must be positive")
        if self.min_samples < 1 or self.slope_levels < 1:
            raise InvalidConfig("min_samples and slope_levels must be >= 1")
        for name, table in (("weights", self.weights), ("directions", self.directions)):
            unknown = set(table) - set(METRIC_NAMES)
            if unknown:
                raise InvalidConfig(f"unknown metric in {name}: {sorted(unknown)}")
        if any(w < 0 for w in self.weights.values()):
            raise InvalidConfig("weights must be non-negative")
        if any(d not in (-1, 1) for d in self.directions.values()):
            raise InvalidConfig("directions must be +1 or -1")


_DURATIONS = {"span": "span_ms", "short_window": "short_window_ms", "cadence": "cadence_ms"}


def _duration_ms(text: str) -> int:
    """Parse ``"3d"``, ``"5m"``, ``"5s"``, ``"250ms"`` or a bare millisecond count."""
    s = text.strip().lower()
    for suffix, scale in (("ms", 1), ("d", DAY_MS), ("h", 3_600_000), ("m", MINUTE_MS), ("s", SECOND_MS)):
        if s.endswith(suffix):
            return int(round(float(s[: -len(suffix)]) * scale))
    return int(s)


def load_config(path=None, text: Optional[str] = None) -> ModelConfig:
    """Read a model config in INI form.

    ``[model]`` holds ``span``, ``short_window``, ``cadence`` (durations like
    ``3d``/``5m``/``5s``), ``min_samples``, ``epsilon_sigma`` and
    ``slope_levels``. ``[weights]`` and ``[directions]`` map metric names to
    values; unlisted metrics keep their defaults.
    """
    cp = configparser.ConfigParser()
    try:
        if text is not None:
            cp.read_string(text)
        elif path is not None:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
    except (OSError, configparser.Error) as e:
        raise InvalidConfig(f"cannot read config: {e}") from e
    kw = {}
    try:
        if cp.has_section("model"):
            sec = cp["model"]
            for key, attr in _DURATIONS.items():
                if key in sec:
                    kw[attr] = _duration_ms(sec[key])
            if "min_samples" in sec:
                kw["min_samples"] = sec.getint("min_samples")
            if "epsilon_sigma" in sec:
                kw["epsilon_sigma"] = sec.getfloat("epsilon_sigma")
            if "slope_levels" in sec:
                kw["slope_levels"] = sec.getint("slope_levels")
        base = ModelConfig()
        if cp.has_section("weights"):
            kw["weights"] = {**base.weights, **{k: float(v) for k, v in cp["weights"].items()}}
        if cp.has_section("directions"):
            kw["directions"] = {**base.directions, **{k: int(v) for k, v in cp["directions"].items()}}
    except ValueError as e:
        raise InvalidConfig(f"bad config value: {e}") from e
    return ModelConfig(**kw)


# --------------------------------------------------------------------------- baselines


class Stats(NamedTuple):
    n: int
    mean: float
    std: float


_FIX = 1074  # every finite double is an integer multiple of 2**-1074


def _fixed(x: float) -> int:
    """``x * 2**1074`` as an exact integer."""
    num, den = float(x).as_integer_ratio()
    return num << (_FIX - den.bit_length() + 1)


class BaselineState:
    """Running per-metric mean and population std over ``(now - span, now]``.

    Sums of values and of squares are kept as exact integers in units of
    ``2**-1074``, so adding and evicting samples never accumulates rounding
    error; mean and variance are single correctly rounded divisions.
    Non-finite values count as absent.
    """

    def __init__(self, symbol: str, span_ms: int = 3 * DAY_MS):
        self.symbol = symbol
        self.span_ms = span_ms
        self.ring: Deque[Tuple[int, MetricVector]] = deque()
        self.now: Optional[int] = None
        self._n = {m: 0 for m in METRIC_NAMES}
        self._s1 = {m: 0 for m in METRIC_NAMES}
        self._s2 = {m: 0 for m in METRIC_NAMES}

    def _fold(self, values, sign: int):
        for m in METRIC_NAMES:
            x = values[m]
            if x is None or not math.isfinite(x):
                continue
            f = _fixed(x)
            self._n[m] += sign
            self._s1[m] += sign * f
            self._s2[m] += sign * f * f

    def advance(self, now: int) -> "BaselineState":
        """Move the clock to ``now`` and evict samples at or before ``now - span``."""
        if self.now is not None and now < self.now:
            raise NonMonotonicTime(f"{self.symbol}: now={now} before last update {self.now}")
        self.now = now
        cutoff = now - self.span_ms
        while self.ring and self.ring[0][0] <= cutoff:
            _, v = self.ring.popleft()
            self._fold(v.values, -1)
        return self

    def update(self, vector: MetricVector, now: int) -> "BaselineState":
        if vector.symbol != self.symbol:
            raise SymbolMismatch(f"vector for {vector.symbol} fed to baseline of {self.symbol}")
        ts = vector.timestamp
        if ts > now:
            raise ValueError(f"vector timestamp {ts} is after now={now}")
        if self.ring and ts < self.ring[-1][0]:
            raise NonMonotonicTime(f"{self.symbol}: vector at {ts} older than last retained {self.ring[-1][0]}")
        self.advance(now)
        if ts > now - self.span_ms:
            self.ring.append((ts, vector))
            self._fold(vector.values, 1)
        return self

    def stats(self, metric: str) -> Stats:
        n = self._n[metric]
        if not n:
            return Stats(0, 0.0, 0.0)
        s1 = self._s1[metric]
        mean = s1 / (n << _FIX)
        var = (n * self._s2[metric] - s1 * s1) / (n * n << 2 * _FIX)
        return Stats(n, mean, math.sqrt(var))

    def snapshot(self) -> Dict[str, Stats]:
        """Immutable point-in-time copy of every metric's statistics."""
        return {m: self.stats(m) for m in METRIC_NAMES}


def update_baseline(state: BaselineState, vector: MetricVector, now: int) -> BaselineState:
    return state.update(vector, now)


def batch_stats(vectors: Iterable[MetricVector], metric: str) -> Stats:
    """Two-pass statistics over ``vectors``; reference for the incremental path."""
    xs = [v.values[metric] for v in vectors if v.values[metric] is not None]
    if not xs:
        return Stats(0, 0.0, 0.0)
    mean = math.fsum(xs) / len(xs)
    return Stats(len(xs), mean, math.sqrt(math.fsum((x - mean) ** 2 for x in xs) / len(xs)))


# --------------------------------------------------------------------------- scoring


def zscore(x: float, mu: float, sigma: float, epsilon_sigma: float = 1e-12) -> Optional[float]:
    """``(x - mu) / sigma``; ``None`` when sigma vanishes but x differs from mu."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma < epsilon_sigma:
        return 0.0 if abs(x - mu) < epsilon_sigma else None
    return (x - mu) / sigma


@dataclass(frozen=True)
class ZVector:
    symbol: str
    values: Dict[str, Optional[float]]
    evaluated_at: int

    def present(self) -> Dict[str, float]:
        return {m: z for m, z in self.values.items() if z is not None}

    def restrict(self, metrics: Sequence[str]) -> "ZVector":
        keep = set(metrics)
        return replace(self, values={m: (z if m in keep else None) for m, z in self.values.items()})


def score_symbol(
    short_term: MetricVector,
    baseline,
    directions: Optional[Mapping[str, int]] = None,
    min_samples: int = 30,
    epsilon_sigma: float = 1e-12,
) -> ZVector:
    """Direction-adjusted Z-scores of ``short_term`` against ``baseline``.

    ``baseline`` is a :class:`BaselineState` or a symbol-tagged snapshot
    ``(symbol, {metric: Stats})``. Metrics with fewer than ``min_samples``
    observations get no score.
    """
    if isinstance(baseline, BaselineState):
        symbol, stats = baseline.symbol, baseline.snapshot()
    else:
        symbol, stats = baseline
    if symbol != short_term.symbol:
        raise SymbolMismatch(f"baseline {symbol} vs vector {short_term.symbol}")
    directions = DEFAULT_DIRECTIONS if directions is None else directions
    out = {}
    for m in METRIC_NAMES:
        x, st = short_term.values[m], stats[m]
        z = None
        if x is not None and st.n >= min_samples:
            z = zscore(x, st.mean, st.std, epsilon_sigma)
            if z is not None:
                z *= directions.get(m, 1)
        out[m] = z
    return ZVector(short_term.symbol, out, short_term.timestamp)


def aggregate_score(z: ZVector, weights: Optional[Mapping[str, float]] = None) -> float:
    """Weighted mean of the present Z-scores; weights renormalize over them."""
    num = den = 0.0
    for m, v in z.present().items():
        w = 1.0 if weights is None else weights.get(m, 1.0)
        num += w * v
        den += w
    if den <= 0:
        raise NoScorableMetrics(f"{z.symbol}: no scorable metrics")
    return num / den


@dataclass(frozen=True)
class RankedCandidate:
    symbol: str
    score: float
    normalized: float
    rank: int
    z: Optional[ZVector] = None


def rank_candidates(
    scores: Mapping[str, float], zvectors: Optional[Mapping[str, ZVector]] = None
) -> List[RankedCandidate]:
    """Sort by score descending (symbol ascending on ties) with min-max normalization."""
    if not scores:
        raise EmptyInput("nothing to rank")
    order = sorted(scores, key=lambda s: (-scores[s], s))
    hi, lo = scores[order[0]], scores[order[-1]]
    span = hi - lo
    zvectors = zvectors or {}
    return [
        RankedCandidate(
            symbol=s,
            score=scores[s],
            normalized=(scores[s] - lo) / span if span > 0 else 1.0,
            rank=i,
            z=zvectors.get(s),
        )
        for i, s in enumerate(order, start=1)
    ]
