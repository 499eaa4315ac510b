"""Windowed flow signals over an event stream.

Signals are evaluated on a fixed grid of anchor times.  Each anchor ``t``
owns the half-open lookback window ``(t - h, t]`` and a short forecast
window ``(t, t + xi]``.  Within the lookback window we count events per side
(every event type counts as activity on its side), form the book imbalance

    obi = (n_sell - n_buy) / (n_sell + n_buy)

and, from the trade tape alone, a trade imbalance with the opposite
orientation

    trade_obi = (buyer_initiated - seller_initiated) / total_trades

where initiation is assigned by the tick rule: a print above the previous
distinct price is buyer-initiated, below is seller-initiated, an unchanged
price inherits the previous sign, and the first print of the session counts
as buyer-initiated.  The two orientations are deliberately kept as-is; the
mask construction in :mod:`lobsift.scoring` accounts for the sign flip.

Realized return is the relative change from the first to the last trade
price inside the window; windows without trades carry no return, and
windows without directional activity carry no imbalance.  The window is
additionally resampled on a fine sub-grid (default one second), giving the
intra-window imbalance observations that the regime layer counts and the
excitation layer timestamps.

The imbalance can also be recomputed over retained trades only (those whose
order survived a filter).  The full-tape ``trade_obi`` never varies across
filters, because trades are always retained; the masked variant is the one
that lets a filter sharpen the trade tape.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .book import FilteredStream
from .durations import NS_PER_S
from .events import Event, EventType, Side
from .ingest import SessionMeta


@dataclass(frozen=True)
class WindowGrid:
    """Anchor times plus the window geometry they share (all ns)."""

    lookback: int
    stride: int
    forecast: int
    subsample: int
    anchors: tuple[int, ...]

    def __post_init__(self) -> None:
        for name in ("lookback", "stride", "forecast", "subsample"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.subsample > self.lookback:
            raise ValueError("subsample interval cannot exceed the lookback window")
        if any(b <= a for a, b in zip(self.anchors, self.anchors[1:])):
            raise ValueError("anchors must be strictly increasing")

    @classmethod
    def build(
        cls,
        meta: SessionMeta,
        lookback: int = 10 * NS_PER_S,
        stride: int = 15 * NS_PER_S,
        forecast: int = 1 * NS_PER_S,
        subsample: int = 1 * NS_PER_S,
    ) -> "WindowGrid":
        """Anchors every ``stride`` from the first full window to session end."""
        first = meta.session_start + lookback
        anchors = tuple(range(first, meta.session_end + 1, stride))
        if not anchors:
            raise ValueError("session too short for a single window")
        return cls(lookback, stride, forecast, subsample, anchors)


@dataclass(frozen=True)
class WindowSignal:
    """Everything one anchor window yields.

    ``obi_samples`` holds ``(sample_time, value)`` pairs from the intra-window
    sub-grid; sub-intervals without activity contribute nothing.  The
    ``trade_*`` twins carry the tape-based imbalance, both over the full tape
    and restricted to retained orders.
    """

    anchor: int
    n_buy: int
    n_sell: int
    obi: Optional[float]
    trade_obi: Optional[float]
    ret: Optional[float]
    fwd_ret: Optional[float]
    obi_samples: tuple[tuple[int, float], ...] = ()
    trade_obi_retained: Optional[float] = None
    trade_obi_samples: tuple[tuple[int, float], ...] = ()


def sign_trades(prices: np.ndarray) -> np.ndarray:
    """Tick-rule signs (+1 buyer-initiated, -1 seller-initiated) per print."""
    signs = np.ones(len(prices), dtype=np.int8)
    last_price = None
    last_sign = 1
    for i, price in enumerate(prices):
        if last_price is not None:
            if price > last_price:
                last_sign = 1
            elif price < last_price:
                last_sign = -1
        signs[i] = last_sign
        last_price = price
    return signs


class SignalEngine:
    """Array-backed view of one stream for fast window queries.

    The engine converts the stream to sorted numpy arrays once, then answers
    every window with ``searchsorted`` plus prefix sums.
    """

    def __init__(self, stream: Union[FilteredStream, Sequence[Event]]):
        if isinstance(stream, FilteredStream):
            events: Sequence[Event] = stream.events
            excluded = stream.excluded
        else:
            events = stream
            excluded = frozenset()

        n = len(events)
        self.ts = np.fromiter((ev.timestamp for ev in events), dtype=np.int64, count=n)
        is_buy = np.fromiter(
            (ev.side is Side.BID for ev in events), dtype=bool, count=n
        )
        # prefix[i] = number of buy-side events among the first i
        self._buy_prefix = np.concatenate(([0], np.cumsum(is_buy)))

        trade_idx = [i for i, ev in enumerate(events) if ev.etype is EventType.TRADE]
        self.trade_ts = self.ts[trade_idx]
        self.trade_price = np.fromiter(
            (events[i].price for i in trade_idx), dtype=np.int64, count=len(trade_idx)
        )
        self.trade_sign = sign_trades(self.trade_price)
        retained = np.fromiter(
            (events[i].oid not in excluded for i in trade_idx),
            dtype=bool,
            count=len(trade_idx),
        )
        self._tape_prefix = self._signed_prefixes(np.ones(len(trade_idx), dtype=bool))
        self._retained_prefix = self._signed_prefixes(retained)

    def _signed_prefixes(self, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        pos = np.concatenate(([0], np.cumsum(mask & (self.trade_sign > 0))))
        neg = np.concatenate(([0], np.cumsum(mask & (self.trade_sign < 0))))
        return pos, neg

    # -- window primitives ------------------------------------------------

    def directional_counts(self, start: int, end: int) -> tuple[int, int]:
        """(buy, sell) event counts over the half-open window ``(start, end]``."""
        i0 = int(np.searchsorted(self.ts, start, side="right"))
        i1 = int(np.searchsorted(self.ts, end, side="right"))
        n_buy = int(self._buy_prefix[i1] - self._buy_prefix[i0])
        return n_buy, (i1 - i0) - n_buy

    def trade_counts(
        self, start: int, end: int, retained_only: bool = False
    ) -> tuple[int, int]:
        """(buyer-initiated, seller-initiated) print counts over ``(start, end]``."""
        pos, neg = self._retained_prefix if retained_only else self._tape_prefix
        i0 = int(np.searchsorted(self.trade_ts, start, side="right"))
        i1 = int(np.searchsorted(self.trade_ts, end, side="right"))
        return int(pos[i1] - pos[i0]), int(neg[i1] - neg[i0])

    def window_return(self, start: int, end: int) -> Optional[float]:
        """First-to-last print return over ``(start, end]``; None without prints."""
        i0 = int(np.searchsorted(self.trade_ts, start, side="right"))
        i1 = int(np.searchsorted(self.trade_ts, end, side="right"))
        if i1 <= i0:
            return None
        first = float(self.trade_price[i0])
        last = float(self.trade_price[i1 - 1])
        return (last - first) / first

    def return_series(self, anchors: Sequence[int], lookback: int) -> np.ndarray:
        """Window returns at arbitrary anchors; NaN marks windows without prints."""
        out = np.full(len(anchors), np.nan)
        for k, anchor in enumerate(anchors):
            r = self.window_return(anchor - lookback, anchor)
            if r is not None:
                out[k] = r
        return out

    # -- bulk evaluation ---------------------------------------------------

    def _subsamples(
        self, anchor: int, grid: WindowGrid, retained_trades: bool
    ) -> tuple[tuple[int, float], ...]:
        samples = []
        start = anchor - grid.lookback
        edges = range(start + grid.subsample, anchor + 1, grid.subsample)
        for hi in edges:
            lo = hi - grid.subsample
            if retained_trades:
                n_pos, n_neg = self.trade_counts(lo, hi, retained_only=True)
                total = n_pos + n_neg
                if total:
                    samples.append((hi, (n_pos - n_neg) / total))
            else:
                n_buy, n_sell = self.directional_counts(lo, hi)
                total = n_buy + n_sell
                if total:
                    samples.append((hi, (n_sell - n_buy) / total))
        return tuple(samples)

    def window_signals(self, grid: WindowGrid) -> list[WindowSignal]:
        """Evaluate every anchor of the grid."""
        out = []
        for anchor in grid.anchors:
            start = anchor - grid.lookback
            n_buy, n_sell = self.directional_counts(start, anchor)
            activity = n_buy + n_sell
            obi_val = (n_sell - n_buy) / activity if activity else None

            tape_b, tape_s = self.trade_counts(start, anchor)
            tape_total = tape_b + tape_s
            tobi = (tape_b - tape_s) / tape_total if tape_total else None

            kept_b, kept_s = self.trade_counts(start, anchor, retained_only=True)
            kept_total = kept_b + kept_s
            tobi_kept = (kept_b - kept_s) / kept_total if kept_total else None

            out.append(
                WindowSignal(
                    anchor=anchor,
                    n_buy=n_buy,
                    n_sell=n_sell,
                    obi=obi_val,
                    trade_obi=tobi,
                    ret=self.window_return(start, anchor),
                    fwd_ret=self.window_return(anchor, anchor + grid.forecast),
                    obi_samples=self._subsamples(anchor, grid, retained_trades=False),
                    trade_obi_retained=tobi_kept,
                    trade_obi_samples=self._subsamples(anchor, grid, retained_trades=True),
                )
            )
        return out


# -- one-shot conveniences mirroring the engine methods --------------------


def directional_counts(
    stream: Union[FilteredStream, Sequence[Event]], window: tuple[int, int]
) -> tuple[int, int]:
    return SignalEngine(stream).directional_counts(*window)


def obi(counts: tuple[int, int]) -> Optional[float]:
    """Sell-minus-buy imbalance from a ``(n_buy, n_sell)`` pair."""
    n_buy, n_sell = counts
    total = n_buy + n_sell
    if total == 0:
        return None
    return (n_sell - n_buy) / total


def trade_obi(
    stream: Union[FilteredStream, Sequence[Event]], window: tuple[int, int]
) -> Optional[float]:
    """Buy-minus-sell tape imbalance over the window, tick-rule signed."""
    n_pos, n_neg = SignalEngine(stream).trade_counts(*window)
    total = n_pos + n_neg
    if total == 0:
        return None
    return (n_pos - n_neg) / total


def realized_return(
    stream: Union[FilteredStream, Sequence[Event]], window: tuple[int, int]
) -> Optional[float]:
    return SignalEngine(stream).window_return(*window)


def compute_signals(
    stream: Union[FilteredStream, Sequence[Event]], grid: WindowGrid
) -> list[WindowSignal]:
    return SignalEngine(stream).window_signals(grid)


def write_signal_csv(path, signals: Sequence[WindowSignal]) -> None:
    """Per-window CSV; absent values are empty fields."""
    import csv
    from pathlib import Path

    def cell(value) -> str:
        return "" if value is None else f"{value:.10g}"

    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ("anchor_ns", "n_buy", "n_sell", "obi", "trade_obi", "ret", "fwd_ret")
        )
        for ws in signals:
            writer.writerow(
                (
                    str(ws.anchor), str(ws.n_buy), str(ws.n_sell),
                    cell(ws.obi), cell(ws.trade_obi), cell(ws.ret), cell(ws.fwd_ret),
                )
            )
