"""Structural order-flow filtration and imbalance-signal scoring.

The package splits into a small event model (events, ingest), the filter
layer (filters, book), windowed signal recomputation (signals), and three
scoring layers of increasing structure: plain and prewhitened correlation
(scoring), discretized regime association (regimes, scoring), and a marked
self-exciting point-process fit (hawkes).  synth generates sessions with
planted noise populations, and pipeline/report/cli wire everything into a
reproducible run.
"""

from .durations import NS_PER_MS, NS_PER_S, NS_PER_US, format_duration, parse_duration
from .errors import (
    ConfigError,
    LobsiftError,
    ParseError,
    StreamOrderError,
    StreamStructureError,
)
from .events import (
    BookSnapshot,
    Event,
    EventType,
    OrderLifecycle,
    Side,
    Terminal,
    build_lifecycles,
)
from .ingest import SessionMeta, parse_tick_file, write_tick_file
from .filters import (
    ExclusionSet,
    FilterKind,
    FilterSpec,
    apply_filter,
    lifetime_filter,
    modcount_filter,
    modtime_filter,
)
from .book import BookReplay, FilteredStream, apply_exclusion, reconstruct_book
from .signals import SignalEngine, WindowGrid, WindowSignal, compute_signals
from .regimes import (
    RegimeScheme,
    RegimeVectors,
    build_regime_vectors,
    build_scheme,
    calibrate_return_edges,
    discretize_obi,
    discretize_return,
    stack_regime_vectors,
)
from .scoring import (
    ScoreReport,
    alignment_mask,
    ar_residualize,
    lagged_pearson,
    masked_regime_correlation,
    pearson_score,
    regime_r2,
)
from .hawkes import (
    KernelEstimate,
    MarkedEventStream,
    build_marked_stream,
    excitation_mask,
    excitation_score,
    fit_hawkes,
    loglik,
    simulate_hawkes,
)
from .synth import GeneratorConfig, PlantedOrder, generate_session
from .pipeline import RunConfig, run_pipeline
from .report import render_report

__version__ = "0.1.0"

__all__ = [
    "NS_PER_US", "NS_PER_MS", "NS_PER_S",
    "parse_duration", "format_duration",
    "LobsiftError", "ParseError", "ConfigError",
    "StreamOrderError", "StreamStructureError",
    "Event", "EventType", "Side", "Terminal", "BookSnapshot",
    "OrderLifecycle", "build_lifecycles",
    "SessionMeta", "parse_tick_file", "write_tick_file",
    "FilterKind", "FilterSpec", "ExclusionSet", "apply_filter",
    "lifetime_filter", "modcount_filter", "modtime_filter",
    "FilteredStream", "apply_exclusion", "BookReplay", "reconstruct_book",
    "SignalEngine", "WindowGrid", "WindowSignal", "compute_signals",
    "RegimeScheme", "RegimeVectors", "calibrate_return_edges", "build_scheme",
    "discretize_obi", "discretize_return", "build_regime_vectors",
    "stack_regime_vectors",
    "pearson_score", "lagged_pearson", "ar_residualize",
    "alignment_mask", "masked_regime_correlation", "regime_r2", "ScoreReport",
    "MarkedEventStream", "build_marked_stream", "loglik", "fit_hawkes",
    "KernelEstimate", "excitation_mask", "excitation_score", "simulate_hawkes",
    "GeneratorConfig", "PlantedOrder", "generate_session",
    "RunConfig", "run_pipeline", "render_report",
]
