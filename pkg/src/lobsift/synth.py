"""Synthetic tick-session generator with planted structure.

Sessions are built from four order populations:

* two huge backstop orders (one per side) that track the price walk in a
  wide band and absorb every execution on their side,
* persistent quoting whose side choice leans with a slowly varying planted
  imbalance ``d(t)``,
* flicker orders (sub-100ms lifetimes) and spoof-style orders (at least two
  modifications, the last pair tightly spaced) whose side choice leans with
  an independent nuisance process ``z(t)``,
* aggressor orders that enter shortly before their execution; informed ones
  lean with ``d(t)`` and drive the price walk through ``signal_strength``,
  noise ones are direction-fair, move nothing on average, and wear a flicker
  or spoof profile, so structural filters can see them.

The point of the construction is that only persistent flow carries the
return signal: trade prices drift by ``signal_strength * d(t)`` ticks per
informed trade, while flicker/spoof flow is pure directional noise.  A
filter that strips the planted noise should sharpen every imbalance-return
diagnostic, and by exactly the mechanism the filters advertise.

Generation is two-phase: all randomness is drawn up front into a plan
(fixed draw order, so a seed pins the session byte-for-byte), then the plan
is replayed in time order against a live book so every price can be capped
against the opposite side.  Books therefore never cross.  The plan is also
returned as per-order ground truth for tests.
"""

from __future__ import annotations

import json
from bisect import bisect_right
from dataclasses import dataclass, fields
from datetime import date as date_type
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .durations import NS_PER_MS, NS_PER_S
from .events import Event, EventType, Side
from .ingest import DEFAULT_SESSION_START, SessionMeta

ANCHOR_BID_OID = 1
ANCHOR_ASK_OID = 2
_FIRST_FLOW_OID = 10

_BAND_TICKS = 25
_RECENTER_TICKS = 15
_ANCHOR_QTY = 10**9


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int = 0
    date: str = "20230102"
    session_seconds: float = 3600.0
    order_rate: float = 20.0          # arrivals per second, both sides pooled
    flicker_fraction: float = 0.0
    spoof_fraction: float = 0.0
    trade_rate: float = 1.5           # executions per second
    noise_trade_fraction: float = 0.5
    signal_strength: float = 0.0      # ticks of drift per informed trade per unit imbalance
    persistent_lifetime_s: float = 30.0
    imbalance_block_s: float = 45.0
    imbalance_amplitude: float = 0.8
    start_price_ticks: int = 10000
    trade_noise_ticks: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.flicker_fraction + self.spoof_fraction <= 1.0:
            raise ValueError("flicker and spoof fractions must sum to at most 1")
        if not 0.0 <= self.noise_trade_fraction <= 1.0:
            raise ValueError("noise_trade_fraction must lie in [0, 1]")
        for name in ("session_seconds", "order_rate", "trade_rate",
                     "persistent_lifetime_s", "imbalance_block_s"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.imbalance_amplitude <= 1.0:
            raise ValueError("imbalance_amplitude must lie in (0, 1]")

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "GeneratorConfig":
        raw = json.loads(Path(path).read_text())
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown generator settings: {sorted(unknown)}")
        return cls(**raw)

    def session_meta(self) -> SessionMeta:
        day = date_type(int(self.date[:4]), int(self.date[4:6]), int(self.date[6:8]))
        start = DEFAULT_SESSION_START
        return SessionMeta(
            trading_date=day,
            session_start=start,
            session_end=start + int(round(self.session_seconds * NS_PER_S)),
            instrument="SYNTH",
        )


@dataclass(frozen=True)
class PlantedOrder:
    """Ground truth for one generated order."""

    oid: int
    population: str      # anchor | persistent | flicker | spoof |
                         # agg_informed | agg_flicker | agg_spoof
    entry: int
    planned_exit: Optional[int]   # None for orders meant to survive the session
    mod_times: tuple[int, ...]


def _poisson_times(rng: np.random.Generator, rate: float, horizon: float) -> np.ndarray:
    """Arrival times of a homogeneous Poisson process on (0, horizon)."""
    times: list[float] = []
    t = float(rng.exponential(1.0 / rate))
    # One gap per draw keeps the draw order independent of any chunk-size
    # choice, which keeps sessions reproducible across refactors.
    while t < horizon:
        times.append(t)
        t += float(rng.exponential(1.0 / rate))
    return np.asarray(times)


def _block_value(values: np.ndarray, block_ns: int, t_ns: int, start_ns: int) -> float:
    idx = (t_ns - start_ns) // block_ns
    return float(values[min(int(idx), len(values) - 1)])


class _LiveSide:
    """Sorted live prices for one side, enough to answer best-of-book."""

    __slots__ = ("prices", "is_bid")

    def __init__(self, is_bid: bool):
        self.prices: list[int] = []
        self.is_bid = is_bid

    def add(self, price: int) -> None:
        lo, hi = 0, len(self.prices)
        while lo < hi:
            mid = (lo + hi) // 2
            if self.prices[mid] < price:
                lo = mid + 1
            else:
                hi = mid
        self.prices.insert(lo, price)

    def remove(self, price: int) -> None:
        lo = bisect_right(self.prices, price) - 1
        if lo < 0 or self.prices[lo] != price:
            raise RuntimeError(f"price {price} not live")
        self.prices.pop(lo)

    def best(self) -> Optional[int]:
        if not self.prices:
            return None
        return self.prices[-1] if self.is_bid else self.prices[0]


def generate_session(
    config: GeneratorConfig,
) -> tuple[list[Event], dict[int, PlantedOrder]]:
    """Produce one session's events plus the planted per-order truth.

    The same config yields the identical event list every time; any change
    to ``seed`` reshuffles everything.
    """
    rng = np.random.default_rng(config.seed)
    meta = config.session_meta()
    start_ns, end_ns = meta.session_start, meta.session_end
    horizon_s = config.session_seconds

    # ---- phase one: draw the whole plan -------------------------------
    block_ns = int(round(config.imbalance_block_s * NS_PER_S))
    n_blocks = int(np.ceil(horizon_s / config.imbalance_block_s))
    amp = config.imbalance_amplitude
    d_vals = rng.uniform(-amp, amp, n_blocks)   # signal imbalance
    z_vals = rng.uniform(-amp, amp, n_blocks)   # nuisance imbalance

    def d_at(t_ns: int) -> float:
        return _block_value(d_vals, block_ns, t_ns, start_ns)

    def z_at(t_ns: int) -> float:
        return _block_value(z_vals, block_ns, t_ns, start_ns)

    arrivals = _poisson_times(rng, config.order_rate, horizon_s)
    arrival_cls = rng.random(len(arrivals))
    arrival_side = rng.random(len(arrivals))

    # kind, entry_ns, side, qty, price_offset, mods [(ts, offset)...], cancel_ns
    plan_orders: list[dict] = []
    truth: dict[int, PlantedOrder] = {}
    next_oid = _FIRST_FLOW_OID

    f_cut = config.flicker_fraction
    s_cut = f_cut + config.spoof_fraction

    def spoof_mod_times(entry: int, exit_: int) -> tuple[int, ...]:
        n_extra = int(rng.poisson(1.5))
        gap = int(round(rng.uniform(1.0, 40.0) * NS_PER_MS))
        settle = int(round(rng.uniform(5.0, 20.0) * NS_PER_MS))
        final = exit_ - settle
        prev = final - gap
        earlier = sorted(
            int(entry + 1 + rng.uniform() * max(1, prev - entry - 2))
            for _ in range(n_extra)
        )
        return tuple(min(m, prev - 1) for m in earlier) + (prev, final)

    for t_s, cls_u, side_u in zip(arrivals, arrival_cls, arrival_side):
        entry = start_ns + int(round(t_s * NS_PER_S))
        oid = next_oid
        next_oid += 1
        qty = int(rng.integers(5, 50))
        offset = int(rng.integers(1, 7))
        if cls_u < f_cut:
            population = "flicker"
            life = int(round(rng.uniform(1.0, 90.0) * NS_PER_MS))
            lean = z_at(entry)
            mods: tuple[int, ...] = ()
        elif cls_u < s_cut:
            population = "spoof"
            life = int(round(rng.uniform(0.5, 5.0) * NS_PER_S))
            lean = z_at(entry)
            mods = spoof_mod_times(entry, entry + life)
        else:
            population = "persistent"
            life = max(NS_PER_MS, int(round(rng.exponential(config.persistent_lifetime_s) * NS_PER_S)))
            lean = d_at(entry)
            n_mods = int(rng.poisson(0.3))
            raw = sorted(
                entry + 1 + int(rng.uniform() * max(1, life - 2)) for _ in range(n_mods)
            )
            mods = tuple(m for m in raw if m < entry + life)
        side = Side.BID if side_u < (1.0 + lean) / 2.0 else Side.ASK
        cancel = entry + life
        plan_orders.append(
            dict(oid=oid, population=population, entry=entry, side=side, qty=qty,
                 offset=offset, mods=mods, cancel=cancel)
        )
        truth[oid] = PlantedOrder(
            oid=oid, population=population, entry=entry,
            planned_exit=cancel if cancel <= end_ns else None,
            mod_times=tuple(m for m in mods if m <= end_ns),
        )

    # Trades: times, aggressor profiles, and the price walk they carve out.
    trade_times = _poisson_times(rng, config.trade_rate, horizon_s)
    trade_plan: list[dict] = []
    walk = float(config.start_price_ticks)
    walk_path: list[int] = []
    trade_ts_ns: list[int] = []
    for t_s in trade_times:
        t_ns = start_ns + int(round(t_s * NS_PER_S))
        is_noise = bool(rng.random() < config.noise_trade_fraction)
        coin = rng.random()
        qty = int(rng.integers(1, 6))
        shock = float(rng.normal(0.0, config.trade_noise_ticks))
        d_here = d_at(t_ns)
        if is_noise:
            aggr_buy = coin < 0.5
            profile = "agg_flicker" if rng.random() < 0.5 else "agg_spoof"
            walk += shock
        else:
            aggr_buy = coin < (1.0 + d_here) / 2.0
            profile = "agg_informed"
            walk += config.signal_strength * d_here + shock
        if profile == "agg_flicker":
            lead = int(round(rng.uniform(1.0, 90.0) * NS_PER_MS))
            mods = ()
        elif profile == "agg_spoof":
            lead = int(round(rng.uniform(0.5, 2.0) * NS_PER_S))
            mods = spoof_mod_times(max(start_ns, t_ns - lead), t_ns)
        else:
            lead = int(round(rng.uniform(0.2, 2.0) * NS_PER_S))
            mods = ()
        entry = max(start_ns, t_ns - lead)
        oid = next_oid
        next_oid += 1
        price = int(round(walk))
        walk_path.append(price)
        trade_ts_ns.append(t_ns)
        trade_plan.append(
            dict(oid=oid, t_ns=t_ns, entry=entry, aggr_buy=aggr_buy, qty=qty,
                 price=price, profile=profile, mods=mods)
        )
        truth[oid] = PlantedOrder(
            oid=oid, population=profile, entry=entry, planned_exit=t_ns,
            # Mods scheduled before a start-clamped entry never get emitted.
            mod_times=tuple(m for m in mods if m >= entry),
        )

    truth[ANCHOR_BID_OID] = PlantedOrder(
        oid=ANCHOR_BID_OID, population="anchor", entry=start_ns,
        planned_exit=None, mod_times=(),
    )
    truth[ANCHOR_ASK_OID] = PlantedOrder(
        oid=ANCHOR_ASK_OID, population="anchor", entry=start_ns,
        planned_exit=None, mod_times=(),
    )

    # ---- phase two: replay the plan in time order ----------------------
    # Action tuples sort by (time, sequence); sequence is assignment order,
    # so planning order breaks timestamp ties deterministically.
    actions: list[tuple[int, int, str, dict]] = []
    seq = 0

    def push(t_ns: int, kind: str, payload: dict) -> None:
        nonlocal seq
        if start_ns <= t_ns <= end_ns:
            actions.append((t_ns, seq, kind, payload))
            seq += 1

    push(start_ns, "anchor_new", dict(oid=ANCHOR_BID_OID, side=Side.BID))
    push(start_ns, "anchor_new", dict(oid=ANCHOR_ASK_OID, side=Side.ASK))
    for od in plan_orders:
        push(od["entry"], "new", od)
        for m in od["mods"]:
            push(m, "mod", dict(oid=od["oid"], offset=int(rng.integers(1, 4))))
        push(od["cancel"], "cancel", dict(oid=od["oid"]))
    for tr in trade_plan:
        push(tr["entry"], "new", dict(
            oid=tr["oid"], entry=tr["entry"],
            side=Side.BID if tr["aggr_buy"] else Side.ASK,
            qty=tr["qty"], offset=int(rng.integers(0, 3)), population=tr["profile"],
        ))
        for m in tr["mods"]:
            push(m, "mod", dict(oid=tr["oid"], offset=int(rng.integers(1, 4))))
        push(tr["t_ns"], "trade", tr)

    actions.sort(key=lambda a: (a[0], a[1]))

    walk_ts = np.asarray(trade_ts_ns, dtype=np.int64)
    walk_px = np.asarray(walk_path, dtype=np.int64)

    def walk_at(t_ns: int) -> int:
        k = int(np.searchsorted(walk_ts, t_ns, side="right"))
        return int(walk_px[k - 1]) if k else config.start_price_ticks

    sides = {Side.BID: _LiveSide(is_bid=True), Side.ASK: _LiveSide(is_bid=False)}
    live: dict[int, tuple[Side, int, int]] = {}  # oid -> (side, price, remaining)

    def capped(side: Side, desired: int) -> int:
        if side is Side.BID:
            best_ask = sides[Side.ASK].best()
            return desired if best_ask is None else min(desired, best_ask - 1)
        best_bid = sides[Side.BID].best()
        return desired if best_bid is None else max(desired, best_bid + 1)

    def enter(oid: int, side: Side, price: int, qty: int) -> None:
        live[oid] = (side, price, qty)
        sides[side].add(price)

    def reprice(oid: int, price: int) -> int:
        side, old, qty = live[oid]
        sides[side].remove(old)
        sides[side].add(price)
        live[oid] = (side, price, qty)
        return qty

    def leave(oid: int) -> tuple[Side, int, int]:
        side, price, qty = live.pop(oid)
        sides[side].remove(price)
        return side, price, qty

    events: list[Event] = []
    center = config.start_price_ticks
    anchor_mods: dict[int, list[int]] = {ANCHOR_BID_OID: [], ANCHOR_ASK_OID: []}

    for t_ns, _, kind, payload in actions:
        if kind == "anchor_new":
            side = payload["side"]
            price = center - _BAND_TICKS if side is Side.BID else center + _BAND_TICKS
            enter(payload["oid"], side, price, _ANCHOR_QTY)
            events.append(Event(t_ns, payload["oid"], EventType.NEW, side, price, _ANCHOR_QTY))
        elif kind == "new":
            side = payload["side"]
            ref = walk_at(t_ns)
            desired = ref - payload["offset"] if side is Side.BID else ref + payload["offset"]
            price = capped(side, desired)
            enter(payload["oid"], side, price, payload["qty"])
            events.append(Event(t_ns, payload["oid"], EventType.NEW, side, price, payload["qty"]))
        elif kind == "mod":
            if payload["oid"] not in live:
                continue
            side = live[payload["oid"]][0]
            ref = walk_at(t_ns)
            desired = ref - payload["offset"] if side is Side.BID else ref + payload["offset"]
            price = capped(side, desired)
            qty = reprice(payload["oid"], price)
            events.append(Event(t_ns, payload["oid"], EventType.MODIFY, side, price, qty))
        elif kind == "cancel":
            if payload["oid"] not in live:
                continue
            side, price, qty = leave(payload["oid"])
            events.append(Event(t_ns, payload["oid"], EventType.CANCEL, side, price, qty))
        else:  # trade
            aggr_oid = payload["oid"]
            if aggr_oid not in live:
                continue  # entry fell outside the session window
            price = payload["price"]
            qty = payload["qty"]
            aggr_side = Side.BID if payload["aggr_buy"] else Side.ASK
            anchor_oid = ANCHOR_ASK_OID if aggr_side is Side.BID else ANCHOR_BID_OID
            anchor_side = Side.ASK if aggr_side is Side.BID else Side.BID
            events.append(Event(t_ns, aggr_oid, EventType.TRADE, aggr_side, price, qty))
            leave(aggr_oid)
            a_side, a_price, a_rem = live[anchor_oid]
            events.append(Event(t_ns, anchor_oid, EventType.TRADE, anchor_side, price, qty))
            live[anchor_oid] = (a_side, a_price, a_rem - qty)
            if abs(price - center) > _RECENTER_TICKS:
                center = price
                bid_target = capped(Side.BID, center - _BAND_TICKS)
                qa = reprice(ANCHOR_BID_OID, bid_target)
                events.append(Event(t_ns, ANCHOR_BID_OID, EventType.MODIFY, Side.BID, bid_target, qa))
                anchor_mods[ANCHOR_BID_OID].append(t_ns)
                ask_target = capped(Side.ASK, center + _BAND_TICKS)
                qb = reprice(ANCHOR_ASK_OID, ask_target)
                events.append(Event(t_ns, ANCHOR_ASK_OID, EventType.MODIFY, Side.ASK, ask_target, qb))
                anchor_mods[ANCHOR_ASK_OID].append(t_ns)

    for oid, mod_list in anchor_mods.items():
        base = truth[oid]
        truth[oid] = PlantedOrder(
            oid=oid, population=base.population, entry=base.entry,
            planned_exit=base.planned_exit, mod_times=tuple(mod_list),
        )
    return events, truth
