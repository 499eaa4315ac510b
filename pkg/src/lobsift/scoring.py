"""Association scores between imbalance signals and returns.

Three score families live here, ordered by how much structure they assume:

1. ``pearson_score`` / ``lagged_pearson``: plain product-moment correlation
   between the window series, optionally after ``ar_residualize`` strips the
   autocorrelation that would otherwise inflate it.

2. ``masked_regime_correlation``: the windows are cut into equal contiguous
   blocks; within each block the correlation between every imbalance-cell
   count and every return-cell indicator forms a matrix; block matrices are
   averaged and contracted against a signed alignment mask.  The mask pays
   for correlations between directionally matched cells of similar severity
   and charges for anti-aligned ones, so the score is a signed sum, positive
   when regime co-movement lines up with the expected geometry.

3. ``regime_r2``: per block, the return indicators are regressed on the
   imbalance counts and the block's pooled R-squared values are summed,
   measuring raw explanatory power without directional priors.

The alignment geometry needs one convention: the imbalance here is
sell-minus-buy, so genuine buying pressure appears as a negative imbalance
cell paired with a positive return cell.  ``orientation="opposed"`` (the
default) encodes exactly that; ``"aligned"`` flips it for experiments with
buy-positive imbalance variants.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .regimes import bin_direction

log = logging.getLogger(__name__)

DEFAULT_BLOCKS = 20
RIDGE_PENALTY = 1e-8


def pearson_score(x: Sequence[float], y: Sequence[float]) -> Optional[float]:
    """Product-moment correlation; None (with a log line) on zero variance."""
    ax = np.asarray(x, dtype=float)
    ay = np.asarray(y, dtype=float)
    if ax.shape != ay.shape or ax.ndim != 1:
        raise ValueError("series must be one-dimensional and aligned")
    if ax.size < 3:
        raise ValueError(f"need at least 3 points, got {ax.size}")
    if not (np.isfinite(ax).all() and np.isfinite(ay).all()):
        raise ValueError("series must be finite; drop invalid windows first")
    dx = ax - ax.mean()
    dy = ay - ay.mean()
    vx = float(dx @ dx)
    vy = float(dy @ dy)
    if vx == 0.0 or vy == 0.0:
        log.info("pearson_score: degenerate series (zero variance)")
        return None
    return float(dx @ dy / np.sqrt(vx * vy))


def lagged_pearson(
    x: Sequence[float],
    y: Sequence[float],
    lags: Sequence[int],
    stride: int,
) -> dict[int, Optional[float]]:
    """Correlation of ``x[t]`` against ``y[t + lag]`` for grid-aligned lags.

    Both series must be sampled on the same anchor grid with spacing
    ``stride``; each lag must be a nonnegative multiple of it.  NaN entries
    mark invalid windows and any pair touching one is dropped; lags with
    fewer than three surviving pairs come back as None.
    """
    ax = np.asarray(x, dtype=float)
    ay = np.asarray(y, dtype=float)
    if ax.shape != ay.shape or ax.ndim != 1:
        raise ValueError("series must be one-dimensional and aligned")
    out: dict[int, Optional[float]] = {}
    for lag in lags:
        if lag < 0 or lag % stride != 0:
            raise ValueError(f"lag {lag} is not a multiple of the grid stride {stride}")
        k = lag // stride
        if k >= ax.size:
            out[lag] = None
            continue
        lead = ax[: ax.size - k] if k else ax
        lagged = ay[k:]
        ok = np.isfinite(lead) & np.isfinite(lagged)
        if ok.sum() < 3:
            out[lag] = None
            continue
        out[lag] = pearson_score(lead[ok], lagged[ok])
    return out


def _ar_design(x: np.ndarray, order: int, start: int) -> tuple[np.ndarray, np.ndarray]:
    rows = len(x) - start
    cols = [np.ones(rows)]
    for j in range(1, order + 1):
        cols.append(x[start - j : len(x) - j])
    return np.column_stack(cols), x[start:]


def ar_residualize(series: Sequence[float], max_order: int = 5) -> np.ndarray:
    """Residuals of the AIC-best autoregression of order 1..max_order.

    Orders are compared on a common estimation window so their likelihoods
    are commensurate; the winner is refit on the full series.  The returned
    array is aligned with the input: the first ``p`` entries are NaN, the
    rest are mean-removed one-step-ahead residuals.  A singular design drops
    to order one (with a warning), where the least-squares solution is the
    minimum-norm one, so even a constant series comes back (as all zeros).
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ValueError("series must be one-dimensional")
    if max_order < 1:
        raise ValueError("max_order must be at least 1")
    if len(x) <= 10 * max_order:
        raise ValueError(
            f"series of length {len(x)} too short for max_order {max_order}"
        )
    if not np.isfinite(x).all():
        raise ValueError("series must be finite")

    best_order = None
    best_aic = np.inf
    for p in range(1, max_order + 1):
        design, target = _ar_design(x, p, max_order)
        coef, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
        if rank < design.shape[1]:
            continue  # singular at this order; AIC not comparable
        resid = target - design @ coef
        m = len(target)
        sse = float(resid @ resid)
        aic = m * np.log(max(sse / m, 1e-300)) + 2 * (p + 1)
        if aic < best_aic:
            best_aic = aic
            best_order = p

    if best_order is None:
        log.warning("ar_residualize: singular design at every order; using order 1")
        best_order = 1

    design, target = _ar_design(x, best_order, best_order)
    coef, _, _, _ = np.linalg.lstsq(design, target, rcond=None)
    resid = target - design @ coef
    resid = resid - resid.mean()
    out = np.full(len(x), np.nan)
    out[best_order:] = resid
    return out


# -- alignment mask ---------------------------------------------------------


@dataclass(frozen=True)
class MaskLambda:
    """Signed geometry weights between imbalance cells and return cells.

    ``values[i, j]`` weighs imbalance cell ``i`` against return cell ``j``:
    positive where the pair is directionally consistent (under the chosen
    orientation) and of similar severity, negative where it is contradictory,
    zero for the neutral imbalance cell.
    """

    values: np.ndarray
    sigma: float
    orientation: str

    def __post_init__(self) -> None:
        self.values.setflags(write=False)


def alignment_mask(
    obi_bins: int = 9,
    ret_bins: int = 4,
    sigma: float = 0.5,
    orientation: str = "opposed",
) -> MaskLambda:
    """Build the signed mask over (imbalance cell, return cell) pairs.

    Cell positions are mapped to directions in [-1, +1]; a Gaussian factor
    ``exp(-(|u| - |v|)^2 / (2 sigma^2))`` rewards matched severity and the
    sign factor encodes direction.  With ``orientation="opposed"`` a positive
    (sell-heavy) imbalance cell pairs positively with negative return cells.
    """
    if orientation not in ("opposed", "aligned"):
        raise ValueError(f"unknown orientation {orientation!r}")
    flip = -1.0 if orientation == "opposed" else 1.0
    values = np.zeros((obi_bins, ret_bins))
    for i in range(obi_bins):
        u = bin_direction(i, obi_bins)
        if u == 0.0:
            continue
        for j in range(ret_bins):
            v = bin_direction(j, ret_bins)
            if v == 0.0:
                continue
            proximity = np.exp(-((abs(u) - abs(v)) ** 2) / (2.0 * sigma**2))
            values[i, j] = np.sign(u * flip * v) * proximity
    return MaskLambda(values=values, sigma=sigma, orientation=orientation)


def _split_blocks(n: int, block_count: int) -> list[np.ndarray]:
    if block_count < 1:
        raise ValueError("block_count must be positive")
    return [idx for idx in np.array_split(np.arange(n), block_count) if idx.size]


def _block_correlation(q: np.ndarray, r: np.ndarray) -> np.ndarray:
    qc = q - q.mean(axis=0)
    rc = r - r.mean(axis=0)
    sq = np.sqrt((qc**2).sum(axis=0))
    sr = np.sqrt((rc**2).sum(axis=0))
    cov = qc.T @ rc
    denom = np.outer(sq, sr)
    rho = np.zeros_like(cov)
    ok = denom > 0
    rho[ok] = cov[ok] / denom[ok]  # degenerate cells stay at zero
    return rho


def masked_regime_correlation(
    q: np.ndarray,
    r: np.ndarray,
    mask: MaskLambda,
    block_count: int = DEFAULT_BLOCKS,
) -> Optional[float]:
    """Block-averaged cellwise correlation contracted with the signed mask.

    ``q`` is (windows x imbalance cells), ``r`` is (windows x return cells),
    both in window order.  Blocks with fewer than two windows cannot carry a
    correlation and are skipped; with no usable block the score is absent.
    """
    q = np.asarray(q, dtype=float)
    r = np.asarray(r, dtype=float)
    if q.ndim != 2 or r.ndim != 2 or q.shape[0] != r.shape[0]:
        raise ValueError("q and r must be matrices over the same windows")
    if mask.values.shape != (q.shape[1], r.shape[1]):
        raise ValueError(
            f"mask shape {mask.values.shape} does not match cells "
            f"({q.shape[1]}, {r.shape[1]})"
        )
    used = 0
    accum = np.zeros_like(mask.values)
    for idx in _split_blocks(q.shape[0], block_count):
        if idx.size < 2:
            continue
        qb = q[idx]
        rb = r[idx]
        if np.isnan(qb).any() or np.isnan(rb).any():
            keep = ~(np.isnan(qb).any(axis=1) | np.isnan(rb).any(axis=1))
            qb, rb = qb[keep], rb[keep]
            if qb.shape[0] < 2:
                continue
        accum += _block_correlation(qb, rb)
        used += 1
    if used == 0:
        log.info("masked_regime_correlation: no block had enough windows")
        return None
    mean_rho = accum / used
    return float((mask.values * mean_rho).sum())


def regime_r2(
    q: np.ndarray,
    r: np.ndarray,
    block_count: int = DEFAULT_BLOCKS,
    ridge: float = RIDGE_PENALTY,
) -> float:
    """Sum over blocks of the pooled R-squared of returns regressed on counts.

    Each block fits an intercept-plus-counts linear model to all return
    indicator columns at once; R-squared pools the residual and total sums
    of squares across those columns.  Rank-deficient blocks (the cell counts
    are often collinear by construction) fall back to a lightly ridged solve.
    Raises ValueError when no block has more windows than regressors.
    """
    q = np.asarray(q, dtype=float)
    r = np.asarray(r, dtype=float)
    if q.ndim != 2 or r.ndim != 2 or q.shape[0] != r.shape[0]:
        raise ValueError("q and r must be matrices over the same windows")
    n_reg = q.shape[1] + 1
    score = 0.0
    used = 0
    fallbacks = 0
    for idx in _split_blocks(q.shape[0], block_count):
        qb = q[idx]
        rb = r[idx]
        if np.isnan(qb).any() or np.isnan(rb).any():
            keep = ~(np.isnan(qb).any(axis=1) | np.isnan(rb).any(axis=1))
            qb, rb = qb[keep], rb[keep]
        m = qb.shape[0]
        if m <= n_reg:
            continue
        design = np.column_stack([np.ones(m), qb])
        coef, _, rank, _ = np.linalg.lstsq(design, rb, rcond=None)
        if rank < n_reg:
            fallbacks += 1
            gram = design.T @ design + ridge * np.eye(n_reg)
            coef = np.linalg.solve(gram, design.T @ rb)
        resid = rb - design @ coef
        sse = float((resid**2).sum())
        sst = float(((rb - rb.mean(axis=0)) ** 2).sum())
        if sst == 0.0:
            continue
        score += 1.0 - sse / sst
        used += 1
    if used == 0:
        raise ValueError("no block has more windows than regressors")
    if fallbacks:
        log.debug("regime_r2: ridge fallback in %d/%d blocks", fallbacks, used)
    return score


@dataclass
class ScoreReport:
    """All scores for one (filter, signal-variant) cell of a run."""

    label: str
    variant: str
    n_windows: int
    n_excluded: int
    pearson_raw: dict[int, Optional[float]] = field(default_factory=dict)
    pearson_ar: dict[int, Optional[float]] = field(default_factory=dict)
    cc_raw: dict[int, Optional[float]] = field(default_factory=dict)
    cc_ar: dict[int, Optional[float]] = field(default_factory=dict)
    r2_raw: dict[int, Optional[float]] = field(default_factory=dict)
    r2_ar: dict[int, Optional[float]] = field(default_factory=dict)
    excitation: Optional[float] = None
    spectral_radius: Optional[float] = None
    converged: Optional[bool] = None
