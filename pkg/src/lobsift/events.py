"""Canonical tick events and per-order lifecycle accounting.

An event stream is a time-ordered sequence of :class:`Event` records, one per
exchange message.  Every message names the order it belongs to, so the whole
history of an order (entry, modifications, partial fills, exit) can be folded
into a single :class:`OrderLifecycle`.  Lifecycles are the raw material for
the structural filters: they expose how long an order rested, how often it
was modified, and how tightly its final modifications were clustered.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional

from .errors import StreamOrderError, StreamStructureError


class EventType(Enum):
    NEW = "NEW"
    TRADE = "TRADE"
    MODIFY = "MODIFY"
    CANCEL = "CANCEL"


class Side(Enum):
    BID = "BID"
    ASK = "ASK"


class Terminal(Enum):
    """How an order left the book."""

    CANCELLED = "CANCELLED"
    FULLY_EXECUTED = "FULLY_EXECUTED"
    REPLACED = "REPLACED"
    SESSION_END = "SESSION_END"


@dataclass(frozen=True, slots=True)
class BookSnapshot:
    """Top-of-book depth, at most five levels per side, best level first.

    ``bids`` and ``asks`` hold ``(price, qty)`` pairs in integer tick units.
    Bid prices must be strictly decreasing, ask prices strictly increasing,
    and when both sides are present the best ask must sit above the best bid.
    """

    bids: tuple[tuple[int, int], ...]
    asks: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        for name, levels in (("bids", self.bids), ("asks", self.asks)):
            if len(levels) > 5:
                raise ValueError(f"{name} holds {len(levels)} levels; at most 5 allowed")
            for price, qty in levels:
                if qty <= 0:
                    raise ValueError(f"{name} level at price {price} has nonpositive qty")
        bid_prices = [p for p, _ in self.bids]
        ask_prices = [p for p, _ in self.asks]
        if any(lo >= hi for hi, lo in zip(bid_prices, bid_prices[1:])):
            raise ValueError("bid prices must be strictly decreasing")
        if any(hi <= lo for lo, hi in zip(ask_prices, ask_prices[1:])):
            raise ValueError("ask prices must be strictly increasing")
        if bid_prices and ask_prices and ask_prices[0] <= bid_prices[0]:
            raise ValueError("book is crossed: best ask at or below best bid")


@dataclass(frozen=True, slots=True)
class Event:
    """One exchange message.

    ``timestamp`` is integer nanoseconds since midnight of the trading date,
    ``price`` is in integer tick units, and ``qty`` is in contracts.  A TRADE
    row records an execution against the named order for ``qty`` at ``price``;
    partial fills leave the order resting with the remainder.
    """

    timestamp: int
    oid: int
    etype: EventType
    side: Side
    price: int
    qty: int
    snapshot: Optional[BookSnapshot] = None

    def __post_init__(self) -> None:
        if self.timestamp < 0:
            raise ValueError(f"negative timestamp {self.timestamp} on oid {self.oid}")
        if self.qty < 0:
            raise ValueError(f"negative qty {self.qty} on oid {self.oid}")
        if self.price <= 0 and self.etype is not EventType.CANCEL:
            raise ValueError(
                f"nonpositive price {self.price} on {self.etype.value} for oid {self.oid}"
            )


@dataclass(frozen=True, slots=True)
class OrderLifecycle:
    """Entry-to-exit summary of a single order.

    ``last_mod_gap`` is the time between the final two MODIFY events and is
    only defined once an order has been modified at least twice.
    """

    oid: int
    entry: int
    exit: int
    mod_count: int
    last_mod_gap: Optional[int]
    terminal: Terminal

    def __post_init__(self) -> None:
        if self.exit < self.entry:
            raise ValueError(f"oid {self.oid}: exit {self.exit} precedes entry {self.entry}")
        if (self.last_mod_gap is None) != (self.mod_count < 2):
            raise ValueError(
                f"oid {self.oid}: last_mod_gap defined iff mod_count >= 2 "
                f"(mod_count={self.mod_count}, gap={self.last_mod_gap})"
            )

    @property
    def lifetime(self) -> int:
        return self.exit - self.entry


class _Tracker:
    """Mutable per-order state while scanning a stream."""

    __slots__ = ("entry", "mod_count", "prev_mod_ts", "last_mod_ts", "remaining")

    def __init__(self, entry: int, qty: int):
        self.entry = entry
        self.mod_count = 0
        self.prev_mod_ts: Optional[int] = None
        self.last_mod_ts: Optional[int] = None
        self.remaining = qty


def build_lifecycles(
    events: Iterable[Event], session_end: Optional[int] = None
) -> dict[int, OrderLifecycle]:
    """Fold a time-ordered event stream into one lifecycle per order id.

    Orders still resting when the stream ends are closed at ``session_end``
    (default: the final event timestamp) with terminal ``SESSION_END``.
    A TRADE that consumes the full remaining quantity closes the order as
    ``FULLY_EXECUTED``; a MODIFY re-prices and re-sizes it in place, keeping
    the clock running.

    Raises :class:`StreamOrderError` if timestamps go backwards, and
    :class:`StreamStructureError` for a MODIFY/CANCEL/TRADE naming an order
    that was never opened (or already closed), for a duplicate NEW, or for a
    TRADE larger than the order's remaining quantity.
    """
    live: dict[int, _Tracker] = {}
    done: dict[int, OrderLifecycle] = {}
    last_ts: Optional[int] = None

    def close(oid: int, ts: int, terminal: Terminal) -> None:
        trk = live.pop(oid)
        gap = None
        if trk.mod_count >= 2:
            gap = trk.last_mod_ts - trk.prev_mod_ts  # type: ignore[operator]
        done[oid] = OrderLifecycle(
            oid=oid, entry=trk.entry, exit=ts, mod_count=trk.mod_count,
            last_mod_gap=gap, terminal=terminal,
        )

    for ev in events:
        if last_ts is not None and ev.timestamp < last_ts:
            raise StreamOrderError(
                f"timestamp {ev.timestamp} after {last_ts} (oid {ev.oid})"
            )
        last_ts = ev.timestamp

        if ev.etype is EventType.NEW:
            if ev.oid in live or ev.oid in done:
                raise StreamStructureError(
                    f"duplicate NEW for oid {ev.oid} at {ev.timestamp}"
                )
            live[ev.oid] = _Tracker(ev.timestamp, ev.qty)
            continue

        trk = live.get(ev.oid)
        if trk is None:
            state = "closed" if ev.oid in done else "unknown"
            raise StreamStructureError(
                f"{ev.etype.value} for {state} oid {ev.oid} at {ev.timestamp}"
            )

        if ev.etype is EventType.MODIFY:
            trk.mod_count += 1
            trk.prev_mod_ts = trk.last_mod_ts
            trk.last_mod_ts = ev.timestamp
            trk.remaining = ev.qty
        elif ev.etype is EventType.CANCEL:
            close(ev.oid, ev.timestamp, Terminal.CANCELLED)
        elif ev.etype is EventType.TRADE:
            if ev.qty > trk.remaining:
                raise StreamStructureError(
                    f"TRADE for {ev.qty} exceeds remaining {trk.remaining} "
                    f"on oid {ev.oid} at {ev.timestamp}"
                )
            trk.remaining -= ev.qty
            if trk.remaining == 0:
                close(ev.oid, ev.timestamp, Terminal.FULLY_EXECUTED)

    if live:
        end = session_end if session_end is not None else (last_ts or 0)
        for oid in sorted(live):
            close(oid, max(end, live[oid].entry), Terminal.SESSION_END)

    return done
