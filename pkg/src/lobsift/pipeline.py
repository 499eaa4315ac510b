"""End-to-end run orchestration.

A run takes one session of events (parsed from a tick file or drawn from the
synthetic generator), applies every configured filter cell, recomputes the
windowed signals per cell, and scores each cell at three layers:

* windowed Pearson correlation between the imbalance signal and forward
  returns over several horizons, raw and AR-prewhitened,
* regime association: masked block correlation and pooled block regression
  between discretized imbalance and discretized returns,
* a marked Hawkes fit whose kernel-norm block is contracted against a
  sign-alignment mask.

Comparability across cells is enforced by scoring every cell on the same
window set: a window enters the per-variant mask only if it is usable under
every cell (signal defined, sub-samples present, return finite).  Returns
come from trade prints, which every filter retains, so the return series and
the regime edges are shared across cells by construction.

Artifacts under the output directory:

    signals/<cell>.csv        per-window signal table per cell
    kernels/<cell>_<variant>.json
    scores.json               every score for every cell and variant
    manifest.json             config echo, counts, per-cell status
    tables/*.csv, figures/*.png  (written by the report step)

Everything written is a pure function of the config, so a rerun reproduces
each artifact byte for byte.  Worker processes rebuild the event list from
the source description instead of receiving it pickled, and result ordering
is fixed by sorting cells before dispatch.
"""

from __future__ import annotations

import json
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, asdict
from datetime import date as date_type
from decimal import Decimal
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .durations import NS_PER_MS, NS_PER_S, hhmmss_to_ns
from .errors import ConfigError
from .events import Event, build_lifecycles
from .filters import FilterSpec, apply_filter
from .book import apply_exclusion
from .ingest import SessionMeta, parse_tick_file
from .regimes import (
    RegimeScheme,
    build_regime_vectors,
    calibrate_return_edges,
    stack_regime_vectors,
)
from .scoring import (
    ScoreReport,
    alignment_mask,
    ar_residualize,
    masked_regime_correlation,
    pearson_score,
    regime_r2,
)
from .signals import SignalEngine, WindowGrid, WindowSignal, write_signal_csv
from .hawkes import (
    build_marked_stream,
    excitation_mask,
    excitation_score,
    fit_hawkes,
    write_kernel_json,
)
from .synth import GeneratorConfig, generate_session


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs; loadable from JSON."""

    tick_size: str = "0.05"
    # one synthetic session or one tick file, never both
    generator: Optional[GeneratorConfig] = None
    input_path: Optional[str] = None
    date: Optional[str] = None            # YYYYMMDD, file mode only
    instrument: str = "UNKNOWN"
    session_start: str = "09:20"
    session_end: str = "15:25"
    strict_parse: bool = True
    # filter grid
    lifetime_thresholds_ms: tuple = (100, 500, 1000)
    modcount_thresholds: tuple = (1, 3, 5)
    modlag_thresholds_ms: tuple = (50, 100, 200)
    # signal grid
    lookback_s: float = 10.0
    stride_s: float = 15.0
    forecast_s: float = 1.0
    subsample_s: float = 1.0
    # scoring
    lag_horizons_s: tuple = (1, 10, 30, 50, 80, 100)
    regime_horizons_s: tuple = (1, 10, 20)
    obi_bins: int = 9
    ret_bins: int = 4
    tail_quantile: float = 0.6
    block_count: int = 20
    mask_sigma: float = 0.5
    orientation: str = "opposed"
    ar_max_order: int = 5
    hawkes_decays: tuple = (0.1, 1.0, 10.0)
    hawkes_max_iter: int = 2000
    hawkes_tol: float = 1e-8

    def __post_init__(self) -> None:
        if (self.generator is None) == (self.input_path is None):
            raise ConfigError("configure exactly one of generator / input_path")
        if self.input_path is not None and self.date is None:
            raise ConfigError("file input needs a trading date (YYYYMMDD)")
        if self.orientation not in ("opposed", "aligned"):
            raise ConfigError("orientation must be 'opposed' or 'aligned'")
        if self.forecast_s not in self.lag_horizons_s:
            raise ConfigError("lag_horizons_s must include the base forecast horizon")

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "RunConfig":
        raw = json.loads(Path(path).read_text())
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown run settings: {sorted(unknown)}")
        gen = raw.pop("generator", None)
        if gen is not None:
            gen = GeneratorConfig(**gen)
        for name, value in list(raw.items()):
            if isinstance(value, list):
                raw[name] = tuple(value)
        return cls(generator=gen, **raw)

    def meta(self) -> SessionMeta:
        if self.generator is not None:
            return self.generator.session_meta()
        day = date_type(int(self.date[:4]), int(self.date[4:6]), int(self.date[6:8]))
        return SessionMeta(
            trading_date=day,
            session_start=hhmmss_to_ns(self.session_start),
            session_end=hhmmss_to_ns(self.session_end),
            instrument=self.instrument,
        )

    def filter_specs(self) -> list[FilterSpec]:
        specs = [FilterSpec.unfiltered()]
        for ms in self.lifetime_thresholds_ms:
            specs.append(FilterSpec.lifetime(int(ms) * NS_PER_MS))
        for m in self.modcount_thresholds:
            specs.append(FilterSpec.modcount(int(m)))
        for ms in self.modlag_thresholds_ms:
            specs.append(FilterSpec.modtime(int(ms) * NS_PER_MS))
        return specs

    def window_grid(self) -> WindowGrid:
        return WindowGrid.build(
            self.meta(),
            lookback=int(round(self.lookback_s * NS_PER_S)),
            stride=int(round(self.stride_s * NS_PER_S)),
            forecast=int(round(self.forecast_s * NS_PER_S)),
            subsample=int(round(self.subsample_s * NS_PER_S)),
        )


VARIANTS = ("book", "trade")

# Worker-process state, rebuilt from the source description by the pool
# initializer so the parent never pickles a few hundred thousand events.
_W_EVENTS: Optional[list[Event]] = None


def _load_events(source: tuple) -> list[Event]:
    mode = source[0]
    if mode == "synth":
        events, _ = generate_session(GeneratorConfig(**source[1]))
        return events
    if mode == "file":
        path, meta_fields, tick_size, strict = source[1:]
        meta = SessionMeta(
            trading_date=date_type.fromisoformat(meta_fields[0]),
            session_start=meta_fields[1],
            session_end=meta_fields[2],
            instrument=meta_fields[3],
        )
        return parse_tick_file(path, meta, Decimal(tick_size), strict=strict).events
    raise ConfigError(f"unknown event source {mode!r}")


def _pool_init(source: tuple) -> None:
    global _W_EVENTS
    _W_EVENTS = _load_events(source)


def _source_of(config: RunConfig) -> tuple:
    if config.generator is not None:
        return ("synth", asdict(config.generator))
    meta = config.meta()
    return (
        "file",
        config.input_path,
        (meta.trading_date.isoformat(), meta.session_start, meta.session_end,
         meta.instrument),
        config.tick_size,
        config.strict_parse,
    )


# ---------------------------------------------------------------------------
# phase A: per-cell signal recomputation


def _phase_a(args: tuple) -> tuple[str, str, dict]:
    label, exclusion, grid_fields, csv_path = args
    try:
        grid = WindowGrid(*grid_fields)
        stream = apply_exclusion(_W_EVENTS, exclusion)
        engine = SignalEngine(stream)
        signals = engine.window_signals(grid)
        write_signal_csv(csv_path, signals)
        payload = dict(
            signals=signals,
            n_events=len(stream.events),
            retained_excluded_trades=stream.retained_excluded_trades,
        )
        return label, "ok", payload
    except Exception:
        return label, "error", dict(trace=traceback.format_exc())


# ---------------------------------------------------------------------------
# phase C: per-cell, per-variant scoring


def _signal_values(signals: Sequence[WindowSignal], variant: str) -> np.ndarray:
    if variant == "book":
        vals = [ws.obi for ws in signals]
    else:
        vals = [ws.trade_obi_retained for ws in signals]
    return np.asarray([np.nan if v is None else v for v in vals], dtype=float)


def _samples_present(signals: Sequence[WindowSignal], variant: str) -> np.ndarray:
    if variant == "book":
        return np.asarray([len(ws.obi_samples) > 0 for ws in signals])
    return np.asarray([len(ws.trade_obi_samples) > 0 for ws in signals])


def _masked_pair(x: np.ndarray, y: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    keep = mask & np.isfinite(x) & np.isfinite(y)
    return x[keep], y[keep]


def _prewhitened(x: np.ndarray, y: np.ndarray, max_order: int) -> Optional[float]:
    if len(x) <= 10 * max_order:
        return None
    rx = ar_residualize(x, max_order=max_order)
    ry = ar_residualize(y, max_order=max_order)
    keep = np.isfinite(rx) & np.isfinite(ry)
    if keep.sum() < 3:
        return None
    return pearson_score(rx[keep], ry[keep])


def _phase_c(args: tuple) -> tuple[str, str, str, dict]:
    (label, variant, signals, shared) = args
    try:
        cfg = shared["config"]
        x_all = _signal_values(signals, variant)
        out: dict = {
            "pearson_raw": {}, "pearson_ar": {},
            "cc_raw": {}, "cc_ar": {}, "r2_raw": {}, "r2_ar": {},
        }
        for h_ns in shared["lag_horizons_ns"]:
            mask = shared["masks"][variant][h_ns]
            y_all = shared["returns"][h_ns]
            x, y = _masked_pair(x_all, y_all, mask)
            out["pearson_raw"][h_ns] = pearson_score(x, y) if len(x) >= 3 else None
            out["pearson_ar"][h_ns] = _prewhitened(x, y, cfg["ar_max_order"])

        lam = alignment_mask(cfg["obi_bins"], cfg["ret_bins"],
                             sigma=cfg["mask_sigma"], orientation=cfg["orientation"])
        base_scheme_edges = None
        for h_ns in shared["regime_horizons_ns"]:
            mask = shared["masks"][variant][h_ns]
            for tag, rets, edges in (
                ("raw", shared["returns"][h_ns], shared["edges"][h_ns]),
                ("ar", shared["resid_returns"][h_ns], shared["resid_edges"][h_ns]),
            ):
                scheme = RegimeScheme(obi_bins=cfg["obi_bins"], ret_bins=cfg["ret_bins"],
                                      ret_edges=tuple(edges))
                rets_cell = np.where(mask, rets, np.nan)
                vectors, _ = build_regime_vectors(signals, scheme, variant=variant,
                                                  returns=rets_cell)
                if len(vectors) == 0:
                    out[f"cc_{tag}"][h_ns] = None
                    out[f"r2_{tag}"][h_ns] = None
                    continue
                q, r = stack_regime_vectors(vectors)
                blocks = max(1, min(cfg["block_count"], len(vectors) // (cfg["obi_bins"] + 2)))
                out[f"cc_{tag}"][h_ns] = masked_regime_correlation(q, r, lam, block_count=blocks)
                try:
                    out[f"r2_{tag}"][h_ns] = regime_r2(q, r, block_count=blocks)
                except ValueError:
                    out[f"r2_{tag}"][h_ns] = None
                if tag == "raw" and h_ns == shared["base_horizon_ns"]:
                    base_scheme_edges = tuple(edges)

        # Hawkes layer at the base forecast horizon, raw returns.
        base_h = shared["base_horizon_ns"]
        scheme = RegimeScheme(obi_bins=cfg["obi_bins"], ret_bins=cfg["ret_bins"],
                              ret_edges=base_scheme_edges or shared["edges"][base_h])
        mask = shared["masks"][variant][base_h]
        rets_cell = np.where(mask, shared["returns"][base_h], np.nan)
        stream = build_marked_stream(
            signals, scheme,
            session_start=shared["session_start"], session_end=shared["session_end"],
            variant=variant, returns=rets_cell,
        )
        est = fit_hawkes(stream, decays=tuple(cfg["hawkes_decays"]),
                         max_iter=cfg["hawkes_max_iter"], tol=cfg["hawkes_tol"])
        emask = excitation_mask(cfg["obi_bins"], cfg["ret_bins"],
                                sigma=cfg["mask_sigma"], orientation=cfg["orientation"])
        out["excitation"] = excitation_score(est, emask, obi_bins=cfg["obi_bins"])
        out["spectral_radius"] = est.spectral_radius
        out["converged"] = est.converged
        out["n_windows"] = int(shared["masks"][variant][base_h].sum())
        out["kernel"] = est
        return label, variant, "ok", out
    except Exception:
        return label, variant, "error", dict(trace=traceback.format_exc())


# ---------------------------------------------------------------------------
# parent-side assembly


def _forward_returns(engine: SignalEngine, anchors: Sequence[int], horizon_ns: int) -> np.ndarray:
    vals = [engine.window_return(a, a + horizon_ns) for a in anchors]
    return np.asarray([np.nan if v is None else v for v in vals], dtype=float)


def _calibrate(returns: np.ndarray, mask: np.ndarray, cfg: RunConfig) -> tuple:
    usable = returns[mask & np.isfinite(returns)]
    if usable.size == 0:
        usable = np.zeros(1)
    return calibrate_return_edges(usable, ret_bins=cfg.ret_bins,
                                  tail_quantile=cfg.tail_quantile)


def run_pipeline(config: RunConfig, out_dir: Union[str, Path], jobs: int = 1) -> tuple[dict, int]:
    """Execute every phase; returns (manifest, exit_code)."""
    out = Path(out_dir)
    (out / "signals").mkdir(parents=True, exist_ok=True)
    (out / "kernels").mkdir(exist_ok=True)

    meta = config.meta()
    source = _source_of(config)
    events = _load_events(source)
    lifecycles = build_lifecycles(events, session_end=meta.session_end)
    grid = config.window_grid()
    specs = sorted(config.filter_specs(), key=lambda s: s.label)
    tick = Decimal(config.tick_size)

    cell_status: dict[str, str] = {}
    cell_payload: dict[str, dict] = {}

    tasks_a = []
    for spec in specs:
        exclusion = apply_filter(spec, lifecycles)
        tasks_a.append((
            spec.label,
            exclusion,
            (grid.lookback, grid.stride, grid.forecast, grid.subsample, grid.anchors),
            str(out / "signals" / f"{spec.label}.csv"),
        ))
    excluded_counts = {t[0]: len(t[1].excluded) for t in tasks_a}

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_pool_init,
                                 initargs=(source,)) as pool:
            results_a = list(pool.map(_phase_a, tasks_a))
    else:
        global _W_EVENTS
        _W_EVENTS = events
        results_a = [_phase_a(t) for t in tasks_a]

    signals_by_cell: dict[str, list[WindowSignal]] = {}
    for label, status, payload in results_a:
        cell_status[label] = status
        cell_payload[label] = {k: v for k, v in payload.items() if k != "signals"}
        if status == "ok":
            signals_by_cell[label] = payload["signals"]

    # Shared scoring state: returns from the full tape, one mask per variant
    # and horizon that every surviving cell satisfies simultaneously.
    engine = SignalEngine(events)
    anchors = grid.anchors
    lag_ns = sorted({int(round(h * NS_PER_S)) for h in config.lag_horizons_s}
                    | {int(round(h * NS_PER_S)) for h in config.regime_horizons_s})
    returns = {h: _forward_returns(engine, anchors, h) for h in lag_ns}
    resid_returns = {}
    for h in lag_ns:
        r = returns[h]
        if np.isfinite(r).sum() > 10 * config.ar_max_order:
            rr = np.full_like(r, np.nan)
            finite = np.isfinite(r)
            rr[finite] = ar_residualize(r[finite], max_order=config.ar_max_order)
            resid_returns[h] = rr
        else:
            resid_returns[h] = np.full_like(r, np.nan)

    ok_cells = [lbl for lbl in sorted(signals_by_cell)]
    masks: dict[str, dict[int, np.ndarray]] = {v: {} for v in VARIANTS}
    for variant in VARIANTS:
        for h in lag_ns:
            m = np.isfinite(returns[h])
            for lbl in ok_cells:
                sig = signals_by_cell[lbl]
                m = m & np.isfinite(_signal_values(sig, variant))
                m = m & _samples_present(sig, variant)
            masks[variant][h] = m

    # Regime edges are shared across cells (same returns, same mask family);
    # the book mask is the wider one, so calibrate on it.
    edges = {h: _calibrate(returns[h], masks["book"][h], config) for h in lag_ns}
    resid_edges = {h: _calibrate(resid_returns[h], masks["book"][h], config) for h in lag_ns}

    shared = dict(
        config=dict(
            obi_bins=config.obi_bins, ret_bins=config.ret_bins,
            mask_sigma=config.mask_sigma, orientation=config.orientation,
            block_count=config.block_count, ar_max_order=config.ar_max_order,
            hawkes_decays=tuple(config.hawkes_decays),
            hawkes_max_iter=config.hawkes_max_iter, hawkes_tol=config.hawkes_tol,
        ),
        lag_horizons_ns=[int(round(h * NS_PER_S)) for h in config.lag_horizons_s],
        regime_horizons_ns=[int(round(h * NS_PER_S)) for h in config.regime_horizons_s],
        base_horizon_ns=int(round(config.forecast_s * NS_PER_S)),
        returns=returns, resid_returns=resid_returns,
        edges=edges, resid_edges=resid_edges, masks=masks,
        session_start=meta.session_start, session_end=meta.session_end,
    )

    tasks_c = [(lbl, variant, signals_by_cell[lbl], shared)
               for lbl in ok_cells for variant in VARIANTS]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results_c = list(pool.map(_phase_c, tasks_c))
    else:
        results_c = [_phase_c(t) for t in tasks_c]

    reports: dict[str, dict[str, ScoreReport]] = {}
    for label, variant, status, payload in results_c:
        if status != "ok":
            cell_status[label] = "error"
            cell_payload.setdefault(label, {})[f"trace_{variant}"] = payload["trace"]
            continue
        est = payload.pop("kernel")
        write_kernel_json(out / "kernels" / f"{label}_{variant}.json", est,
                          label=f"{label}_{variant}")
        report = ScoreReport(
            label=label, variant=variant,
            n_windows=payload["n_windows"],
            n_excluded=excluded_counts[label],
            pearson_raw=payload["pearson_raw"], pearson_ar=payload["pearson_ar"],
            cc_raw=payload["cc_raw"], cc_ar=payload["cc_ar"],
            r2_raw=payload["r2_raw"], r2_ar=payload["r2_ar"],
            excitation=payload["excitation"],
            spectral_radius=payload["spectral_radius"],
            converged=payload["converged"],
        )
        reports.setdefault(label, {})[variant] = report

    scores = {
        "date": meta.date_label,
        "horizons_ns": shared["lag_horizons_ns"],
        "regime_horizons_ns": shared["regime_horizons_ns"],
        "cells": {},
    }
    for label in sorted(reports):
        entry = {"excluded_orders": excluded_counts.get(label, 0)}
        for variant in VARIANTS:
            rep = reports[label].get(variant)
            if rep is None:
                continue
            entry[variant] = {
                "n_windows": rep.n_windows,
                "pearson_raw": {str(k): rep.pearson_raw[k] for k in sorted(rep.pearson_raw)},
                "pearson_ar": {str(k): rep.pearson_ar[k] for k in sorted(rep.pearson_ar)},
                "cc_raw": {str(k): rep.cc_raw[k] for k in sorted(rep.cc_raw)},
                "cc_ar": {str(k): rep.cc_ar[k] for k in sorted(rep.cc_ar)},
                "r2_raw": {str(k): rep.r2_raw[k] for k in sorted(rep.r2_raw)},
                "r2_ar": {str(k): rep.r2_ar[k] for k in sorted(rep.r2_ar)},
                "excitation": rep.excitation,
                "spectral_radius": rep.spectral_radius,
                "converged": rep.converged,
            }
        scores["cells"][label] = entry
    (out / "scores.json").write_text(json.dumps(scores, indent=2, sort_keys=True) + "\n")

    failed = sorted(lbl for lbl, st in cell_status.items() if st != "ok")
    manifest = {
        "date": meta.date_label,
        "instrument": meta.instrument,
        "n_events": len(events),
        "n_orders": len(lifecycles),
        "n_windows": len(anchors),
        "cells": {
            lbl: {
                "status": cell_status[lbl],
                "excluded_orders": excluded_counts.get(lbl, 0),
                **{k: v for k, v in cell_payload.get(lbl, {}).items()
                   if k in ("n_events", "retained_excluded_trades") or k.startswith("trace")},
            }
            for lbl in sorted(cell_status)
        },
        "failed_cells": failed,
        "tick_size": str(tick),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest, (2 if failed else 0)
