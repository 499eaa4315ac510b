"""Exclusion replay and order-book reconstruction.

``apply_exclusion`` realizes a filter decision on a stream: NEW/MODIFY/CANCEL
events of excluded orders disappear, while every TRADE row stays, whoever it
belongs to.  Executions are facts about what traded; removing them would
tear holes in the tape, shift realized returns, and make filtered runs
incomparable.  The price of keeping them is that a filtered stream is no
longer self-contained: a retained trade may reference an order the stream
never opened.  The replay below treats such trades as tape-only (they touch
no depth), which is exactly right, because the referenced order carries no
depth in the filtered book either.

``reconstruct_book`` replays a stream into top-five depth snapshots, one per
event.  A MODIFY is a cancel-replace in place: the order leaves its old
level and re-enters at the new price and size.  A TRADE decrements the named
order where it currently rests.  Inconsistencies (trades larger than the
resting size, MODIFY/CANCEL for an absent order) are tolerated and counted
rather than raised, since filtered streams are deliberately non-physical.
"""

from __future__ import annotations

import csv
from bisect import bisect_left, insort
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Iterable, Sequence, Union

from .events import BookSnapshot, Event, EventType, Side
from .filters import ExclusionSet, FilterSpec
from .ingest import DEFAULT_TICK_SIZE, DEPTH_COLUMNS

_REMOVABLE = (EventType.NEW, EventType.MODIFY, EventType.CANCEL)


@dataclass(frozen=True)
class FilteredStream:
    """Events surviving one exclusion set, plus the set itself."""

    spec: FilterSpec
    events: tuple[Event, ...]
    excluded: frozenset[int]
    retained_excluded_trades: int

    def __len__(self) -> int:
        return len(self.events)


def apply_exclusion(
    events: Sequence[Event], exclusion: ExclusionSet
) -> FilteredStream:
    """Drop book events of excluded orders; keep the full trade tape."""
    kept: list[Event] = []
    retained_trades = 0
    excluded = exclusion.excluded
    for ev in events:
        if ev.oid in excluded:
            if ev.etype is not EventType.TRADE:
                continue
            retained_trades += 1
        kept.append(ev)
    return FilteredStream(
        spec=exclusion.spec,
        events=tuple(kept),
        excluded=excluded,
        retained_excluded_trades=retained_trades,
    )


@dataclass
class BookReplay:
    """Per-event snapshots and the anomaly counters the replay accumulated."""

    timestamps: list[int]
    snapshots: list[BookSnapshot]
    clamped_trades: int = 0
    orphan_events: int = 0
    crossed_states: int = 0


def _snapshot_unchecked(
    bids: tuple[tuple[int, int], ...], asks: tuple[tuple[int, int], ...]
) -> BookSnapshot:
    # Replays of filtered or truncated streams can pass through transiently
    # crossed states; those are reported via a counter instead of refused.
    snap = object.__new__(BookSnapshot)
    object.__setattr__(snap, "bids", bids)
    object.__setattr__(snap, "asks", asks)
    return snap


class _SideBook:
    """One side's depth: per-price aggregate plus a sorted price index."""

    __slots__ = ("depth", "prices", "descending")

    def __init__(self, descending: bool):
        self.depth: dict[int, int] = {}
        self.prices: list[int] = []
        self.descending = descending

    def add(self, price: int, qty: int) -> None:
        if price in self.depth:
            self.depth[price] += qty
        else:
            self.depth[price] = qty
            insort(self.prices, price)

    def remove(self, price: int, qty: int) -> None:
        left = self.depth[price] - qty
        if left > 0:
            self.depth[price] = left
        else:
            del self.depth[price]
            self.prices.pop(bisect_left(self.prices, price))

    def top(self, levels: int) -> tuple[tuple[int, int], ...]:
        if self.descending:
            best = self.prices[-1 : -levels - 1 : -1]
        else:
            best = self.prices[:levels]
        return tuple((p, self.depth[p]) for p in best)


def reconstruct_book(
    stream: Union[FilteredStream, Sequence[Event]], levels: int = 5
) -> BookReplay:
    """Replay a stream into a top-``levels`` snapshot after every event."""
    events = stream.events if isinstance(stream, FilteredStream) else stream
    orders: dict[int, tuple[Side, int, int]] = {}  # oid -> (side, price, remaining)
    books = {Side.BID: _SideBook(descending=True), Side.ASK: _SideBook(descending=False)}
    replay = BookReplay(timestamps=[], snapshots=[])

    for ev in events:
        if ev.etype is EventType.NEW:
            if ev.oid in orders:
                replay.orphan_events += 1
            else:
                orders[ev.oid] = (ev.side, ev.price, ev.qty)
                books[ev.side].add(ev.price, ev.qty)
        elif ev.etype is EventType.MODIFY:
            held = orders.get(ev.oid)
            if held is None:
                # A MODIFY carries the full replacement state, so an orphan
                # (entry dropped at the session edge) can still be booked.
                replay.orphan_events += 1
                orders[ev.oid] = (ev.side, ev.price, ev.qty)
                books[ev.side].add(ev.price, ev.qty)
            else:
                side, price, remaining = held
                books[side].remove(price, remaining)
                orders[ev.oid] = (side, ev.price, ev.qty)
                books[side].add(ev.price, ev.qty)
        elif ev.etype is EventType.CANCEL:
            held = orders.pop(ev.oid, None)
            if held is None:
                replay.orphan_events += 1
            else:
                side, price, remaining = held
                books[side].remove(price, remaining)
        else:  # TRADE
            held = orders.get(ev.oid)
            if held is not None:
                side, price, remaining = held
                fill = ev.qty
                if fill > remaining:
                    replay.clamped_trades += 1
                    fill = remaining
                if fill:
                    books[side].remove(price, fill)
                if remaining - fill > 0:
                    orders[ev.oid] = (side, price, remaining - fill)
                else:
                    del orders[ev.oid]
            # Trades of unknown orders stay on the tape without touching depth.

        bids = books[Side.BID].top(levels)
        asks = books[Side.ASK].top(levels)
        if bids and asks and asks[0][0] <= bids[0][0]:
            replay.crossed_states += 1
        replay.timestamps.append(ev.timestamp)
        replay.snapshots.append(_snapshot_unchecked(bids, asks))

    return replay


def write_snapshot_csv(
    path: Union[str, Path],
    replay: BookReplay,
    tick_size: Decimal = DEFAULT_TICK_SIZE,
) -> None:
    """Dump the replayed snapshots, one row per event, empty cells for gaps."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("timestamp_ns",) + DEPTH_COLUMNS)
        for ts, snap in zip(replay.timestamps, replay.snapshots):
            row = [str(ts)] + [""] * len(DEPTH_COLUMNS)
            for base, side_levels in ((1, snap.bids), (11, snap.asks)):
                for lvl, (price, qty) in enumerate(side_levels):
                    row[base + 2 * lvl] = str(Decimal(price) * tick_size)
                    row[base + 2 * lvl + 1] = str(qty)
            writer.writerow(row)
