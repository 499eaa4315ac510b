"""Delimited score tables and companion figures for one finished run.

Input is the ``scores.json`` payload a run writes; output is a set of CSV
tables under ``tables/`` and PNG charts under ``figures/``.  Row order walks
the filter families unfiltered, lifetime, mod-count, mod-lag, each family in
threshold order, so the tables read like a threshold sweep.
"""

from __future__ import annotations

import csv
import json
import re
from pathlib import Path
from typing import Optional, Sequence, Union

_FAMILY_RANK = {"UF": 0, "LF": 1, "MF": 2, "MTF": 3}


def _label_key(label: str) -> tuple:
    m = re.match(r"^([A-Z]+)(?:-(\d+)(ns|us|ms|s)?)?", label)
    if not m:
        return (99, 0, label)
    family = m.group(1)
    scale = {"ns": 1, "us": 10**3, "ms": 10**6, "s": 10**9, None: 1}[m.group(3)]
    threshold = int(m.group(2)) * scale if m.group(2) else 0
    return (_FAMILY_RANK.get(family, 98), threshold, label)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "yes" if value else "no"
    return f"{value:.10g}"


def _horizon_name(ns: int) -> str:
    return f"{ns / 1e9:g}s"


def _ordered_cells(scores: dict) -> list[str]:
    return sorted(scores.get("cells", {}), key=_label_key)


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[str]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def write_tables(scores: dict, out_dir: Union[str, Path]) -> list[Path]:
    out = Path(out_dir) / "tables"
    out.mkdir(parents=True, exist_ok=True)
    date = scores.get("date", "")
    cells = _ordered_cells(scores)
    horizons = [int(h) for h in scores.get("horizons_ns", [])]
    regime_horizons = [int(h) for h in scores.get("regime_horizons_ns", [])]
    written: list[Path] = []

    def cell_block(label: str, variant: str) -> Optional[dict]:
        return scores["cells"].get(label, {}).get(variant)

    for variant in ("book", "trade"):
        for tag in ("raw", "ar"):
            path = out / f"pearson_{variant}_{tag}.csv"
            header = ["session", "windows"] + [_horizon_name(h) for h in horizons]
            rows = []
            for label in cells:
                block = cell_block(label, variant)
                if block is None:
                    continue
                scores_by_h = block.get(f"pearson_{tag}", {})
                rows.append(
                    [f"{date}_{label}", str(block.get("n_windows", ""))]
                    + [_fmt(scores_by_h.get(str(h))) for h in horizons]
                )
            _write_csv(path, header, rows)
            written.append(path)

            path = out / f"regimes_{variant}_{tag}.csv"
            header = ["session", "windows"]
            for h in regime_horizons:
                header += [f"CC_{_horizon_name(h)}", f"R2_{_horizon_name(h)}"]
            rows = []
            for label in cells:
                block = cell_block(label, variant)
                if block is None:
                    continue
                cc = block.get(f"cc_{tag}", {})
                r2 = block.get(f"r2_{tag}", {})
                row = [f"{date}_{label}", str(block.get("n_windows", ""))]
                for h in regime_horizons:
                    row += [_fmt(cc.get(str(h))), _fmt(r2.get(str(h)))]
                rows.append(row)
            _write_csv(path, header, rows)
            written.append(path)

    path = out / "hawkes.csv"
    header = ["session"]
    for variant in ("book", "trade"):
        header += [f"SumExp_{variant}", f"SpectralRadius_{variant}", f"Converged_{variant}"]
    rows = []
    for label in cells:
        row = [f"{date}_{label}"]
        for variant in ("book", "trade"):
            block = cell_block(label, variant) or {}
            row += [
                _fmt(block.get("excitation")),
                _fmt(block.get("spectral_radius")),
                _fmt(block.get("converged")),
            ]
        rows.append(row)
    _write_csv(path, header, rows)
    written.append(path)

    path = out / "summary.csv"
    base = str(horizons[0]) if horizons else ""
    header = [
        "session", "excluded_orders", "windows",
        "pearson_book", "pearson_trade", "CC_book", "R2_book",
        "SumExp_book", "SumExp_trade",
    ]
    rows = []
    for label in cells:
        entry = scores["cells"][label]
        book = entry.get("book", {})
        trade = entry.get("trade", {})
        regime_base = str(regime_horizons[0]) if regime_horizons else ""
        rows.append([
            f"{date}_{label}",
            str(entry.get("excluded_orders", "")),
            str(book.get("n_windows", "")),
            _fmt(book.get("pearson_raw", {}).get(base)),
            _fmt(trade.get("pearson_raw", {}).get(base)),
            _fmt(book.get("cc_raw", {}).get(regime_base)),
            _fmt(book.get("r2_raw", {}).get(regime_base)),
            _fmt(book.get("excitation")),
            _fmt(trade.get("excitation")),
        ])
    _write_csv(path, header, rows)
    written.append(path)
    return written


def write_figures(scores: dict, out_dir: Union[str, Path]) -> list[Path]:
    """Render the run's headline comparisons as PNG charts."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir) / "figures"
    out.mkdir(parents=True, exist_ok=True)
    date = scores.get("date", "")
    cells = _ordered_cells(scores)
    horizons = [int(h) for h in scores.get("horizons_ns", [])]
    written: list[Path] = []

    def save(fig, name: str) -> None:
        path = out / name
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    # correlation against forward horizon, one line per filter cell
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    for label in cells:
        block = scores["cells"][label].get("book")
        if not block:
            continue
        ys = [block["pearson_raw"].get(str(h)) for h in horizons]
        xs = [h / 1e9 for h in horizons]
        pts = [(x, y) for x, y in zip(xs, ys) if y is not None]
        if not pts:
            continue
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=label)
    ax.axhline(0.0, color="grey", lw=0.8)
    ax.set_xlabel("forward horizon (s)")
    ax.set_ylabel("Pearson correlation")
    ax.set_title(f"{date}: imbalance vs forward return")
    ax.legend(fontsize=8)
    fig.tight_layout()
    save(fig, "pearson_by_horizon.png")

    # excitation mass per cell and variant
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    width = 0.38
    xs = range(len(cells))
    for k, variant in enumerate(("book", "trade")):
        vals = []
        for label in cells:
            block = scores["cells"][label].get(variant) or {}
            vals.append(block.get("excitation") or 0.0)
        ax.bar([x + (k - 0.5) * width for x in xs], vals, width=width, label=variant)
    ax.set_xticks(list(xs))
    ax.set_xticklabels(cells, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("masked cross-excitation mass")
    ax.set_title(f"{date}: kernel-norm score by filter")
    ax.legend()
    fig.tight_layout()
    save(fig, "excitation_by_filter.png")

    # masked block correlation at the shortest regime horizon
    regime_horizons = [int(h) for h in scores.get("regime_horizons_ns", [])]
    if regime_horizons:
        base = str(regime_horizons[0])
        fig, ax = plt.subplots(figsize=(7.0, 4.2))
        for k, variant in enumerate(("book", "trade")):
            vals = []
            for label in cells:
                block = scores["cells"][label].get(variant) or {}
                vals.append(block.get("cc_raw", {}).get(base) or 0.0)
            ax.bar([x + (k - 0.5) * width for x in xs], vals, width=width, label=variant)
        ax.axhline(0.0, color="grey", lw=0.8)
        ax.set_xticks(list(xs))
        ax.set_xticklabels(cells, rotation=30, ha="right", fontsize=8)
        ax.set_ylabel("masked regime correlation")
        ax.set_title(f"{date}: regime association by filter")
        ax.legend()
        fig.tight_layout()
        save(fig, "regime_by_filter.png")

    return written


def render_report(scores: dict, out_dir: Union[str, Path]) -> list[Path]:
    """Tables first, then figures; returns every path written."""
    return write_tables(scores, out_dir) + write_figures(scores, out_dir)


def load_scores(run_dir: Union[str, Path]) -> dict:
    path = Path(run_dir) / "scores.json"
    return json.loads(path.read_text())
