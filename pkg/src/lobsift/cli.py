"""Command-line front end.

Subcommands mirror the library layers: ``simulate`` and ``ingest`` produce
and digest tick files, ``filter`` and ``signals`` run one filter cell,
``score`` and ``hawkes`` evaluate one cell in place, ``run`` executes the
whole grid and ``report`` re-renders tables and figures from a finished run
directory.
"""

from __future__ import annotations

import argparse
import csv
import sys
from datetime import date as date_type
from decimal import Decimal

from .durations import hhmmss_to_ns, parse_duration
from .errors import LobsiftError, ConfigError
from .events import build_lifecycles
from .filters import FilterKind, FilterSpec, apply_filter, write_oid_list
from .book import apply_exclusion
from .ingest import DEFAULT_TICK_SIZE, SessionMeta, parse_tick_file, write_tick_file
from .pipeline import RunConfig, run_pipeline
from .report import load_scores, render_report
from .scoring import pearson_score
from .signals import SignalEngine, write_signal_csv
from .synth import GeneratorConfig, generate_session


def _session_meta(args) -> SessionMeta:
    if not args.date:
        raise ConfigError("--date YYYYMMDD is required for tick-file input")
    day = date_type(int(args.date[:4]), int(args.date[4:6]), int(args.date[6:8]))
    return SessionMeta(
        trading_date=day,
        session_start=hhmmss_to_ns(args.start),
        session_end=hhmmss_to_ns(args.end),
        instrument=args.instrument,
    )


def _filter_spec(args) -> FilterSpec:
    kind = FilterKind(args.filter)
    if kind is FilterKind.UNFILTERED:
        return FilterSpec.unfiltered()
    if args.threshold is None:
        raise ConfigError(f"filter {kind.value!r} needs --threshold")
    if kind is FilterKind.MODCOUNT:
        return FilterSpec.modcount(int(args.threshold))
    return FilterSpec(kind, parse_duration(args.threshold))


def _load_events(args) -> tuple[list, SessionMeta]:
    meta = _session_meta(args)
    result = parse_tick_file(args.tickfile, meta, Decimal(args.tick_size),
                             strict=not args.lenient)
    if result.rejected:
        print(f"rejected {result.rejected} malformed line(s)", file=sys.stderr)
    return result.events, meta


def _cmd_ingest(args) -> int:
    events, meta = _load_events(args)
    lifecycles = build_lifecycles(events, session_end=meta.session_end)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["oid", "entry_ns", "exit_ns", "lifetime_ns",
                             "mod_count", "last_mod_gap_ns", "terminal"])
            for oid in sorted(lifecycles):
                lc = lifecycles[oid]
                gap = "" if lc.last_mod_gap is None else str(lc.last_mod_gap)
                writer.writerow([oid, lc.entry, lc.exit, lc.lifetime,
                                 lc.mod_count, gap, lc.terminal.value])
    print(f"{len(events)} events, {len(lifecycles)} orders "
          f"({meta.instrument} {meta.date_label})")
    return 0


def _cmd_simulate(args) -> int:
    if args.config:
        config = GeneratorConfig.from_json(args.config)
    else:
        config = GeneratorConfig()
    if args.seed is not None:
        config = GeneratorConfig(**{**_as_dict(config), "seed": args.seed})
    events, truth = generate_session(config)
    write_tick_file(args.out, events, Decimal(args.tick_size))
    if args.truth:
        with open(args.truth, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["oid", "population", "entry_ns", "planned_exit_ns",
                             "mod_count", "last_mod_gap_ns"])
            for oid in sorted(truth):
                po = truth[oid]
                exit_ns = "" if po.planned_exit is None else str(po.planned_exit)
                gap = ""
                if len(po.mod_times) >= 2:
                    gap = str(po.mod_times[-1] - po.mod_times[-2])
                writer.writerow([oid, po.population, po.entry, exit_ns,
                                 len(po.mod_times), gap])
    print(f"wrote {len(events)} events for seed {config.seed} to {args.out}")
    return 0


def _as_dict(config: GeneratorConfig) -> dict:
    from dataclasses import asdict

    return asdict(config)


def _cmd_filter(args) -> int:
    events, meta = _load_events(args)
    lifecycles = build_lifecycles(events, session_end=meta.session_end)
    spec = _filter_spec(args)
    exclusion = apply_filter(spec, lifecycles)
    if args.out:
        write_oid_list(args.out, exclusion)
    print(f"{spec.label}: excluded {len(exclusion.excluded)} of {len(lifecycles)} orders")
    return 0


def _cmd_signals(args) -> int:
    events, meta = _load_events(args)
    lifecycles = build_lifecycles(events, session_end=meta.session_end)
    spec = _filter_spec(args)
    stream = apply_exclusion(events, apply_filter(spec, lifecycles))
    from .signals import WindowGrid

    grid = WindowGrid.build(meta)
    signals = SignalEngine(stream).window_signals(grid)
    write_signal_csv(args.out, signals)
    defined = sum(1 for ws in signals if ws.obi is not None)
    print(f"{spec.label}: {len(signals)} windows ({defined} with activity) -> {args.out}")
    return 0


def _cmd_score(args) -> int:
    events, meta = _load_events(args)
    lifecycles = build_lifecycles(events, session_end=meta.session_end)
    spec = _filter_spec(args)
    stream = apply_exclusion(events, apply_filter(spec, lifecycles))
    from .signals import WindowGrid

    grid = WindowGrid.build(meta)
    engine = SignalEngine(stream)
    signals = engine.window_signals(grid)
    horizon = parse_duration(args.horizon)
    pairs = [
        (ws.obi, engine.window_return(ws.anchor, ws.anchor + horizon))
        for ws in signals
    ]
    xs = [p[0] for p in pairs if p[0] is not None and p[1] is not None]
    ys = [p[1] for p in pairs if p[0] is not None and p[1] is not None]
    score = pearson_score(xs, ys) if len(xs) >= 3 else None
    shown = "undefined" if score is None else f"{score:+.6f}"
    print(f"{spec.label}: pearson(imbalance, fwd return @{args.horizon}) = {shown} "
          f"over {len(xs)} windows")
    return 0


def _cmd_hawkes(args) -> int:
    from .hawkes import build_marked_stream, fit_hawkes, write_kernel_json
    from .regimes import build_scheme
    from .signals import WindowGrid

    events, meta = _load_events(args)
    lifecycles = build_lifecycles(events, session_end=meta.session_end)
    spec = _filter_spec(args)
    stream = apply_exclusion(events, apply_filter(spec, lifecycles))
    grid = WindowGrid.build(meta)
    signals = SignalEngine(stream).window_signals(grid)
    rets = [ws.ret for ws in signals if ws.ret is not None]
    scheme = build_scheme(rets)
    marked = build_marked_stream(signals, scheme, meta.session_start,
                                 meta.session_end, variant=args.variant)
    est = fit_hawkes(marked)
    write_kernel_json(args.out, est, label=f"{meta.date_label}_{spec.label}")
    print(f"{spec.label}: {len(marked.times)} marked events, "
          f"loglik {est.loglik:.2f}, spectral radius {est.spectral_radius:.4f}, "
          f"{'converged' if est.converged else 'not converged'}")
    return 0


def _cmd_run(args) -> int:
    config = RunConfig.from_json(args.config)
    manifest, code = run_pipeline(config, args.out, jobs=args.jobs)
    scores = load_scores(args.out)
    paths = render_report(scores, args.out)
    print(f"run complete: {len(manifest['cells'])} cells, "
          f"{len(manifest['failed_cells'])} failed, {len(paths)} report files")
    return code


def _cmd_report(args) -> int:
    scores = load_scores(args.run_dir)
    paths = render_report(scores, args.run_dir)
    print(f"rendered {len(paths)} report files under {args.run_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lobsift",
        description="Structural order-flow filters and imbalance scoring",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    io_common = argparse.ArgumentParser(add_help=False)
    io_common.add_argument("tickfile", help="delimited tick file")
    io_common.add_argument("--date", help="trading date, YYYYMMDD")
    io_common.add_argument("--instrument", default="UNKNOWN")
    io_common.add_argument("--tick-size", default=str(DEFAULT_TICK_SIZE))
    io_common.add_argument("--start", default="09:20", help="session open HH:MM")
    io_common.add_argument("--end", default="15:25", help="session close HH:MM")
    io_common.add_argument("--lenient", action="store_true",
                           help="collect malformed lines instead of failing")

    filter_common = argparse.ArgumentParser(add_help=False)
    filter_common.add_argument("--filter", default="uf",
                               choices=[k.value for k in FilterKind])
    filter_common.add_argument("--threshold",
                               help="duration like 500ms, or a count for mf")

    p = sub.add_parser("ingest", parents=[io_common],
                       help="parse a tick file and summarize order lifecycles")
    p.add_argument("--out", help="write a lifecycle CSV here")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("simulate", help="generate a synthetic session")
    p.add_argument("--config", help="generator config JSON")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", required=True, help="tick file to write")
    p.add_argument("--truth", help="also write per-order ground truth CSV")
    p.add_argument("--tick-size", default=str(DEFAULT_TICK_SIZE))
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("filter", parents=[io_common, filter_common],
                       help="compute one exclusion set")
    p.add_argument("--out", help="write excluded order ids here")
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("signals", parents=[io_common, filter_common],
                       help="windowed signals for one filter cell")
    p.add_argument("--out", required=True, help="signal CSV to write")
    p.set_defaults(func=_cmd_signals)

    p = sub.add_parser("score", parents=[io_common, filter_common],
                       help="quick correlation check for one cell")
    p.add_argument("--horizon", default="1s", help="forward return horizon")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("hawkes", parents=[io_common, filter_common],
                       help="fit the marked excitation model for one cell")
    p.add_argument("--variant", default="book", choices=("book", "trade"))
    p.add_argument("--out", required=True, help="kernel JSON to write")
    p.set_defaults(func=_cmd_hawkes)

    p = sub.add_parser("run", help="full filter-grid pipeline")
    p.add_argument("--config", required=True, help="run config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("report", help="re-render tables and figures for a run")
    p.add_argument("run_dir", help="directory holding scores.json")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except LobsiftError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
