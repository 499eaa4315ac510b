"""Shared builders for randomized streams and lifecycle maps."""

from __future__ import annotations

import numpy as np
import pytest

from lobsift.events import Event, EventType, OrderLifecycle, Side, Terminal


def random_stream(rng: np.random.Generator, n_events: int = 1000,
                  n_orders: int = 120, base_price: int = 5000) -> list[Event]:
    """A structurally valid random stream: every oid opens before it acts.

    Produces a mix of NEW / MODIFY / CANCEL / TRADE with plausible prices and
    strictly tracked remaining quantities, so lifecycle building never trips
    a structure error.  Timestamps are nondecreasing with occasional ties.
    """
    events: list[Event] = []
    ts = 1_000_000
    open_orders: dict[int, list] = {}  # oid -> [side, price, remaining]
    next_oid = 1

    while len(events) < n_events:
        ts += int(rng.integers(0, 2_000_000))  # ties allowed
        can_open = next_oid <= n_orders
        roll = rng.random()
        if open_orders and roll < 0.25:
            oid = int(rng.choice(list(open_orders)))
            side, price, rem = open_orders[oid]
            action = rng.random()
            if action < 0.45:
                new_price = max(1, price + int(rng.integers(-3, 4)))
                open_orders[oid][1] = new_price
                events.append(Event(ts, oid, EventType.MODIFY, side, new_price, rem))
            elif action < 0.75:
                fill = int(rng.integers(1, rem + 1))
                events.append(Event(ts, oid, EventType.TRADE, side, price, fill))
                if fill == rem:
                    del open_orders[oid]
                else:
                    open_orders[oid][2] = rem - fill
            else:
                events.append(Event(ts, oid, EventType.CANCEL, side, price, rem))
                del open_orders[oid]
        elif can_open:
            oid = next_oid
            next_oid += 1
            side = Side.BID if rng.random() < 0.5 else Side.ASK
            offset = int(rng.integers(1, 20))
            price = base_price - offset if side is Side.BID else base_price + offset
            qty = int(rng.integers(1, 50))
            open_orders[oid] = [side, price, qty]
            events.append(Event(ts, oid, EventType.NEW, side, price, qty))
        elif open_orders:
            continue
        else:
            break
    return events


def random_lifecycles(rng: np.random.Generator, n_orders: int = 200) -> dict[int, OrderLifecycle]:
    """Random lifecycle maps spanning the interesting corners of each filter."""
    out = {}
    for oid in range(1, n_orders + 1):
        entry = int(rng.integers(0, 10**9))
        lifetime = int(rng.integers(0, 2 * 10**9))
        mod_count = int(rng.integers(0, 8))
        gap = int(rng.integers(0, 400_000_000)) if mod_count >= 2 else None
        terminal = rng.choice(list(Terminal))
        out[oid] = OrderLifecycle(
            oid=oid, entry=entry, exit=entry + lifetime,
            mod_count=mod_count, last_mod_gap=gap, terminal=terminal,
        )
    return out


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(2024)
