"""Integer-nanosecond time arithmetic helpers.

All timestamps in the package are integer nanoseconds since midnight of the
trading date, and all durations are integer nanoseconds.  Human-facing
surfaces (CLI flags, filter labels, report columns) use compact strings such
as ``500ms`` or ``10s``; the two functions here convert between the forms.
"""

from __future__ import annotations

import re

NS_PER_US = 1_000
NS_PER_MS = 1_000_000
NS_PER_S = 1_000_000_000

_UNIT_NS = {"ns": 1, "us": NS_PER_US, "ms": NS_PER_MS, "s": NS_PER_S}

_DURATION_RE = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*(ns|us|ms|s)\s*$")


def parse_duration(text: str) -> int:
    """Parse a duration string like ``500ms``, ``1s`` or ``250us`` to ns."""
    m = _DURATION_RE.match(text)
    if m is None:
        raise ValueError(f"malformed duration {text!r}; expected <value><ns|us|ms|s>")
    value, unit = m.groups()
    ns = float(value) * _UNIT_NS[unit]
    if ns != int(ns):
        raise ValueError(f"duration {text!r} is not a whole number of nanoseconds")
    return int(ns)


def format_duration(ns: int) -> str:
    """Render a nanosecond duration with the largest unit that divides it."""
    if ns < 0:
        raise ValueError("durations are nonnegative")
    for unit in ("s", "ms", "us", "ns"):
        scale = _UNIT_NS[unit]
        if ns % scale == 0 and (ns >= scale or ns == 0):
            return f"{ns // scale}{unit}"
    return f"{ns}ns"


def hhmmss_to_ns(text: str) -> int:
    """Convert a wall-clock ``HH:MM`` or ``HH:MM:SS`` string to ns past midnight."""
    parts = text.strip().split(":")
    if len(parts) not in (2, 3):
        raise ValueError(f"malformed clock time {text!r}")
    try:
        fields = [int(p) for p in parts]
    except ValueError as exc:
        raise ValueError(f"malformed clock time {text!r}") from exc
    while len(fields) < 3:
        fields.append(0)
    hh, mm, ss = fields
    if not (0 <= hh < 24 and 0 <= mm < 60 and 0 <= ss < 60):
        raise ValueError(f"clock time {text!r} out of range")
    return ((hh * 60 + mm) * 60 + ss) * NS_PER_S
