"""Structural order filters.

Each filter inspects per-order lifecycles and nominates whole orders for
exclusion; every event of a nominated order is later removed from the stream
(trades excepted; see :mod:`lobsift.book`).  Three schemes are provided:

* lifetime:   exclude orders resting for less than a threshold,
* mod-count:  exclude orders modified more than a threshold number of times,
* mod-lag:    exclude orders whose final two modifications arrived within a
              threshold of each other (at least two modifications required).

Thresholds sit on the retention side of each boundary: an order whose
lifetime equals the lifetime threshold is kept, as is an order with exactly
the mod-count threshold, and a final-modification gap equal to the mod-lag
threshold is kept.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping, Optional, Union

from .durations import format_duration
from .events import OrderLifecycle


class FilterKind(Enum):
    UNFILTERED = "uf"
    LIFETIME = "lf"
    MODCOUNT = "mf"
    MODTIME = "mtf"


_SHORT = {
    FilterKind.UNFILTERED: "UF",
    FilterKind.LIFETIME: "LF",
    FilterKind.MODCOUNT: "MF",
    FilterKind.MODTIME: "MTF",
}


@dataclass(frozen=True)
class FilterSpec:
    """A filter kind plus its threshold (ns for durations, count for mods)."""

    kind: FilterKind
    threshold: Optional[int] = None

    def __post_init__(self) -> None:
        if self.kind is FilterKind.UNFILTERED:
            if self.threshold is not None:
                raise ValueError("the unfiltered baseline takes no threshold")
        elif self.threshold is None:
            raise ValueError(f"{self.kind.value} filter requires a threshold")
        elif self.kind is FilterKind.MODCOUNT:
            if self.threshold < 0:
                raise ValueError("mod-count threshold must be nonnegative")
        elif self.threshold <= 0:
            raise ValueError("duration thresholds must be positive")

    @property
    def label(self) -> str:
        """Compact report label, e.g. ``UF``, ``LF-500ms``, ``MF-3``."""
        if self.kind is FilterKind.UNFILTERED:
            return "UF"
        if self.kind is FilterKind.MODCOUNT:
            return f"MF-{self.threshold}"
        return f"{_SHORT[self.kind]}-{format_duration(self.threshold)}"

    @classmethod
    def unfiltered(cls) -> "FilterSpec":
        return cls(FilterKind.UNFILTERED)

    @classmethod
    def lifetime(cls, threshold_ns: int) -> "FilterSpec":
        return cls(FilterKind.LIFETIME, threshold_ns)

    @classmethod
    def modcount(cls, threshold: int) -> "FilterSpec":
        return cls(FilterKind.MODCOUNT, threshold)

    @classmethod
    def modtime(cls, threshold_ns: int) -> "FilterSpec":
        return cls(FilterKind.MODTIME, threshold_ns)


@dataclass(frozen=True)
class ExclusionSet:
    """Order ids nominated for removal by one filter."""

    spec: FilterSpec
    excluded: frozenset[int]

    def __contains__(self, oid: int) -> bool:
        return oid in self.excluded

    def __len__(self) -> int:
        return len(self.excluded)


def lifetime_filter(
    lifecycles: Mapping[int, OrderLifecycle], threshold_ns: int
) -> ExclusionSet:
    """Exclude orders that rested for less than ``threshold_ns``."""
    excluded = frozenset(
        oid for oid, lc in lifecycles.items() if lc.lifetime < threshold_ns
    )
    return ExclusionSet(FilterSpec.lifetime(threshold_ns), excluded)


def modcount_filter(
    lifecycles: Mapping[int, OrderLifecycle], threshold: int
) -> ExclusionSet:
    """Exclude orders modified more than ``threshold`` times."""
    excluded = frozenset(
        oid for oid, lc in lifecycles.items() if lc.mod_count > threshold
    )
    return ExclusionSet(FilterSpec.modcount(threshold), excluded)


def modtime_filter(
    lifecycles: Mapping[int, OrderLifecycle], threshold_ns: int
) -> ExclusionSet:
    """Exclude orders whose final two modifications sit closer than ``threshold_ns``.

    Orders modified fewer than twice have no final-modification gap and are
    always retained.
    """
    excluded = frozenset(
        oid
        for oid, lc in lifecycles.items()
        if lc.mod_count >= 2 and lc.last_mod_gap < threshold_ns  # type: ignore[operator]
    )
    return ExclusionSet(FilterSpec.modtime(threshold_ns), excluded)


def apply_filter(
    spec: FilterSpec, lifecycles: Mapping[int, OrderLifecycle]
) -> ExclusionSet:
    """Dispatch on the filter kind; the unfiltered baseline excludes nothing."""
    if spec.kind is FilterKind.UNFILTERED:
        return ExclusionSet(spec, frozenset())
    if spec.kind is FilterKind.LIFETIME:
        return lifetime_filter(lifecycles, spec.threshold)  # type: ignore[arg-type]
    if spec.kind is FilterKind.MODCOUNT:
        return modcount_filter(lifecycles, spec.threshold)  # type: ignore[arg-type]
    return modtime_filter(lifecycles, spec.threshold)  # type: ignore[arg-type]


def write_oid_list(path: Union[str, Path], exclusion: ExclusionSet) -> None:
    """Dump excluded order ids, one per line, ascending (audit format)."""
    Path(path).write_text("".join(f"{oid}\n" for oid in sorted(exclusion.excluded)))


def read_oid_list(path: Union[str, Path]) -> frozenset[int]:
    text = Path(path).read_text()
    return frozenset(int(line) for line in text.splitlines() if line.strip())
