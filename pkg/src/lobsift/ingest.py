"""Tick-file ingestion and serialization.

The on-disk format is a plain CSV with header::

    timestamp_ns,oid,etype,side,price,qty

optionally extended with 20 depth columns ``bp1,bq1,...,bp5,bq5,ap1,aq1,...,
ap5,aq5`` carrying a top-five snapshot alongside each row.  Prices are
decimal quotes; on ingest they are converted to integer tick units, so all
downstream arithmetic is exact.  Rows outside the session window are dropped
(and counted), rows that fail validation either raise or are counted as
rejected depending on ``strict``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import date
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .durations import hhmmss_to_ns
from .errors import ParseError
from .events import BookSnapshot, Event, EventType, Side

DEFAULT_TICK_SIZE = Decimal("0.05")
DEFAULT_SESSION_START = hhmmss_to_ns("09:20")
DEFAULT_SESSION_END = hhmmss_to_ns("15:25")

BASE_COLUMNS = ("timestamp_ns", "oid", "etype", "side", "price", "qty")
DEPTH_COLUMNS = tuple(
    f"{side}{kind}{level}"
    for side in ("b", "a")
    for level in range(1, 6)
    for kind in ("p", "q")
)
# i.e. bp1,bq1,...,bp5,bq5,ap1,aq1,...,ap5,aq5


@dataclass(frozen=True)
class SessionMeta:
    """Trading-session identity and clock bounds (ns past midnight)."""

    trading_date: date
    session_start: int = DEFAULT_SESSION_START
    session_end: int = DEFAULT_SESSION_END
    instrument: str = ""

    def __post_init__(self) -> None:
        if self.session_end <= self.session_start:
            raise ValueError("session_end must fall after session_start")

    @property
    def date_label(self) -> str:
        return self.trading_date.strftime("%Y%m%d")


@dataclass
class ParseResult:
    """Events plus bookkeeping about what the parser set aside."""

    events: list[Event]
    dropped: int = 0
    rejected: int = 0
    rejected_lines: list[tuple[int, str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)


def _to_ticks(text: str, tick_size: Decimal, line_no: int, column: str) -> int:
    try:
        quote = Decimal(text)
    except InvalidOperation as exc:
        raise ParseError(line_no, f"{column} {text!r} is not a decimal") from exc
    ratio = quote / tick_size
    ticks = int(ratio)
    if ratio != ticks:
        raise ParseError(line_no, f"{column} {text!r} is not a multiple of tick size {tick_size}")
    return ticks


def _parse_snapshot(
    row: Sequence[str], tick_size: Decimal, line_no: int
) -> Optional[BookSnapshot]:
    cells = row[len(BASE_COLUMNS):]
    if all(c == "" for c in cells):
        return None
    sides: list[tuple[tuple[int, int], ...]] = []
    for offset in (0, 10):
        levels = []
        for lvl in range(5):
            p_txt, q_txt = cells[offset + 2 * lvl], cells[offset + 2 * lvl + 1]
            if p_txt == "" and q_txt == "":
                continue
            if p_txt == "" or q_txt == "":
                raise ParseError(line_no, f"half-empty depth level {lvl + 1}")
            price = _to_ticks(p_txt, tick_size, line_no, "depth price")
            try:
                qty = int(q_txt)
            except ValueError as exc:
                raise ParseError(line_no, f"depth qty {q_txt!r} is not an integer") from exc
            levels.append((price, qty))
        sides.append(tuple(levels))
    try:
        return BookSnapshot(bids=sides[0], asks=sides[1])
    except ValueError as exc:
        raise ParseError(line_no, f"invalid snapshot: {exc}") from exc


def _parse_row(
    row: Sequence[str], has_depth: bool, tick_size: Decimal, line_no: int
) -> Event:
    expected = len(BASE_COLUMNS) + (len(DEPTH_COLUMNS) if has_depth else 0)
    if len(row) != expected:
        raise ParseError(line_no, f"expected {expected} fields, found {len(row)}")
    ts_txt, oid_txt, etype_txt, side_txt, price_txt, qty_txt = row[:6]
    try:
        timestamp = int(ts_txt)
        oid = int(oid_txt)
        qty = int(qty_txt)
    except ValueError as exc:
        raise ParseError(line_no, f"non-integer field: {exc}") from exc
    try:
        etype = EventType(etype_txt)
    except ValueError as exc:
        raise ParseError(line_no, f"unknown etype {etype_txt!r}") from exc
    try:
        side = Side(side_txt)
    except ValueError as exc:
        raise ParseError(line_no, f"unknown side {side_txt!r}") from exc
    price = _to_ticks(price_txt, tick_size, line_no, "price")
    snapshot = _parse_snapshot(row, tick_size, line_no) if has_depth else None
    try:
        return Event(
            timestamp=timestamp, oid=oid, etype=etype, side=side,
            price=price, qty=qty, snapshot=snapshot,
        )
    except ValueError as exc:
        raise ParseError(line_no, str(exc)) from exc


def parse_tick_file(
    path: Union[str, Path],
    meta: SessionMeta,
    tick_size: Decimal = DEFAULT_TICK_SIZE,
    strict: bool = True,
) -> ParseResult:
    """Read a tick CSV into validated events, sorted by timestamp.

    Rows whose timestamp falls outside ``[meta.session_start,
    meta.session_end]`` are dropped and counted.  With ``strict=True`` (the
    default) any malformed row raises :class:`ParseError`; with
    ``strict=False`` such rows are skipped and tallied in ``rejected``.
    Sorting is stable, so same-timestamp rows keep their file order.
    """
    path = Path(path)
    result = ParseResult(events=[])
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(1, "empty file: header row required") from None
        if tuple(header[:6]) != BASE_COLUMNS:
            raise ParseError(1, f"bad header {header[:6]!r}; expected {BASE_COLUMNS!r}")
        if len(header) == len(BASE_COLUMNS):
            has_depth = False
        elif tuple(header[6:]) == DEPTH_COLUMNS:
            has_depth = True
        else:
            raise ParseError(1, "depth columns malformed; expected bp1,bq1,...,ap5,aq5")

        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                event = _parse_row(row, has_depth, tick_size, line_no)
            except ParseError as exc:
                if strict:
                    raise
                result.rejected += 1
                result.rejected_lines.append((line_no, str(exc)))
                continue
            if not meta.session_start <= event.timestamp <= meta.session_end:
                result.dropped += 1
                continue
            result.events.append(event)

    result.events.sort(key=lambda ev: ev.timestamp)
    return result


def _format_price(ticks: int, tick_size: Decimal) -> str:
    return str(Decimal(ticks) * tick_size)


def write_tick_file(
    path: Union[str, Path],
    events: Iterable[Event],
    tick_size: Decimal = DEFAULT_TICK_SIZE,
    with_depth: bool = False,
) -> None:
    """Serialize events back to the ingest CSV format.

    ``with_depth`` adds the 20 snapshot columns (rows without a snapshot
    leave them empty).  Writing then re-parsing reproduces the same events.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        header = list(BASE_COLUMNS) + (list(DEPTH_COLUMNS) if with_depth else [])
        writer.writerow(header)
        for ev in events:
            row = [
                str(ev.timestamp), str(ev.oid), ev.etype.value, ev.side.value,
                _format_price(ev.price, tick_size), str(ev.qty),
            ]
            if with_depth:
                depth = [""] * len(DEPTH_COLUMNS)
                if ev.snapshot is not None:
                    for base, levels in ((0, ev.snapshot.bids), (10, ev.snapshot.asks)):
                        for lvl, (price, qty) in enumerate(levels):
                            depth[base + 2 * lvl] = _format_price(price, tick_size)
                            depth[base + 2 * lvl + 1] = str(qty)
                row.extend(depth)
            writer.writerow(row)
