"""Discretization of imbalance and return series into categorical regimes.

Imbalance lives on [-1, +1] and is cut into ``obi_bins`` equal cells (nine
by default), with +1 folded into the top cell.  Returns are cut by signed
magnitude edges: with the default four cells the edges are ``(-theta, 0,
+theta)``, where ``theta`` is the 60th percentile of absolute window returns
over the session, so the two outer cells each catch roughly the largest
fifth of moves.  Values sitting exactly on an edge fall upward, which in
particular sends a zero return to the milder of the two up cells.

Each valid window turns into a pair of vectors: ``q_vec`` counts which
imbalance cells the intra-window sub-samples visited, and ``r_vec`` is a
one-hot indicator of the window's return cell.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .signals import WindowSignal


@dataclass(frozen=True)
class RegimeScheme:
    """Bin geometry for both series."""

    obi_bins: int = 9
    ret_bins: int = 4
    ret_edges: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.obi_bins < 2 or self.ret_bins < 2:
            raise ValueError("both series need at least two cells")
        if len(self.ret_edges) != self.ret_bins - 1:
            raise ValueError(
                f"{self.ret_bins} return cells require {self.ret_bins - 1} edges, "
                f"got {len(self.ret_edges)}"
            )
        if any(b <= a for a, b in zip(self.ret_edges, self.ret_edges[1:])):
            raise ValueError("return edges must be strictly increasing")

    @property
    def obi_edges(self) -> tuple[float, ...]:
        return tuple(-1.0 + 2.0 * k / self.obi_bins for k in range(self.obi_bins + 1))


def calibrate_return_edges(
    returns: Sequence[float], ret_bins: int = 4, tail_quantile: float = 0.6
) -> tuple[float, ...]:
    """Symmetric return edges from the session's own return distribution.

    For an even cell count the edges are magnitude quantiles mirrored around
    a zero edge; for an odd count the zero edge is omitted, leaving a neutral
    middle cell.  Degenerate sessions (all returns zero) get a hair-width
    edge so the scheme stays valid.
    """
    arr = np.asarray([r for r in returns if r is not None and np.isfinite(r)], dtype=float)
    if arr.size == 0:
        raise ValueError("no finite returns to calibrate on")
    magnitude = np.abs(arr)
    half = ret_bins // 2
    n_pos = half - 1 if ret_bins % 2 == 0 else half
    if n_pos == 1:
        qs = [tail_quantile]
    else:
        qs = [tail_quantile * (k + 1) / n_pos for k in range(n_pos)]
    pos = []
    floor = 0.0
    for q in qs:
        edge = float(np.quantile(magnitude, q))
        edge = max(edge, floor + 1e-12)  # keep edges strictly increasing
        pos.append(edge)
        floor = edge
    edges = [-e for e in reversed(pos)]
    if ret_bins % 2 == 0:
        edges.append(0.0)
    edges.extend(pos)
    return tuple(edges)


def build_scheme(
    returns: Sequence[float],
    obi_bins: int = 9,
    ret_bins: int = 4,
    tail_quantile: float = 0.6,
) -> RegimeScheme:
    return RegimeScheme(
        obi_bins=obi_bins,
        ret_bins=ret_bins,
        ret_edges=calibrate_return_edges(returns, ret_bins, tail_quantile),
    )


def discretize_obi(value: float, scheme: RegimeScheme) -> int:
    """Cell index of an imbalance value; +1 belongs to the top cell."""
    if not -1.0 <= value <= 1.0:
        raise ValueError(f"imbalance {value} outside [-1, +1]")
    cell = int(np.floor((value + 1.0) * scheme.obi_bins / 2.0))
    return min(cell, scheme.obi_bins - 1)


def discretize_return(value: float, scheme: RegimeScheme) -> int:
    """Cell index of a return; values on an edge (zero included) fall upward."""
    if not np.isfinite(value):
        raise ValueError(f"non-finite return {value}")
    return int(np.searchsorted(scheme.ret_edges, value, side="right"))


def bin_direction(index: int, bins: int) -> float:
    """Signed cell position in [-1, +1]; the middle of an odd count is 0."""
    if not 0 <= index < bins:
        raise ValueError(f"cell {index} outside 0..{bins - 1}")
    half = (bins - 1) / 2.0
    return (index - half) / half


@dataclass(frozen=True)
class RegimeVectors:
    """One window's regime observation pair."""

    anchor: int
    q_vec: tuple[int, ...]
    r_vec: tuple[int, ...]


def build_regime_vectors(
    signals: Sequence[WindowSignal],
    scheme: RegimeScheme,
    variant: str = "book",
    returns: Optional[Sequence[Optional[float]]] = None,
) -> tuple[list[RegimeVectors], int]:
    """Vectorize every window that has both a return and imbalance samples.

    ``variant`` chooses which sub-sample family feeds ``q_vec``: ``book``
    (side counts over all retained events) or ``trade`` (tick-rule signs
    over retained prints).  ``returns`` optionally overrides each window's
    own return, which is how lagged pairings are formed; entries may be None
    or NaN for windows whose shifted window had no prints.

    Returns the vector list and the number of windows excluded for want of
    data.
    """
    if variant not in ("book", "trade"):
        raise ValueError(f"unknown variant {variant!r}")
    if returns is not None and len(returns) != len(signals):
        raise ValueError("returns override must align with the window list")

    vectors: list[RegimeVectors] = []
    excluded = 0
    for k, ws in enumerate(signals):
        samples = ws.obi_samples if variant == "book" else ws.trade_obi_samples
        if returns is not None:
            ret = returns[k]
            if ret is not None and not np.isfinite(ret):
                ret = None
        else:
            ret = ws.ret
        if ret is None or not samples:
            excluded += 1
            continue
        q = [0] * scheme.obi_bins
        for _, value in samples:
            q[discretize_obi(value, scheme)] += 1
        r = [0] * scheme.ret_bins
        r[discretize_return(ret, scheme)] = 1
        vectors.append(RegimeVectors(anchor=ws.anchor, q_vec=tuple(q), r_vec=tuple(r)))
    return vectors, excluded


def stack_regime_vectors(
    vectors: Sequence[RegimeVectors],
) -> tuple[np.ndarray, np.ndarray]:
    """Stack vector pairs into float matrices (windows x cells)."""
    if not vectors:
        return np.empty((0, 0)), np.empty((0, 0))
    q = np.array([v.q_vec for v in vectors], dtype=float)
    r = np.array([v.r_vec for v in vectors], dtype=float)
    return q, r


def write_regime_csv(path, vectors: Sequence[RegimeVectors]) -> None:
    import csv
    from pathlib import Path

    if not vectors:
        raise ValueError("nothing to write: no valid windows")
    nq = len(vectors[0].q_vec)
    nr = len(vectors[0].r_vec)
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["anchor_ns"]
            + [f"q{i}" for i in range(nq)]
            + [f"r{j}" for j in range(nr)]
        )
        for v in vectors:
            writer.writerow([v.anchor, *v.q_vec, *v.r_vec])
