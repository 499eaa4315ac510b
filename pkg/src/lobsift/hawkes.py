"""Mutually exciting point processes over regime-labeled events.

The third diagnostic layer turns the discretized series into a marked point
process: every intra-window imbalance sub-sample becomes an event on the
dimension of its imbalance cell, and every window return becomes an event on
the dimension of its return cell (offset past the imbalance cells).  With
nine imbalance and four return cells that gives a 13-dimensional stream.

Intensities follow the linear self-exciting form with a fixed bank of
exponential decays ``beta_k``::

    lambda_i(t) = mu_i + sum_{t_n < t} sum_k a[i, d_n, k] exp(-beta_k (t - t_n))

Only the baselines ``mu`` and the nonnegative amplitudes ``a`` are fitted;
the decay bank stays fixed, which keeps the log-likelihood concave and the
maximization a plain projected gradient ascent.  The kernel mass matrix
``Phi[i, j] = sum_k a[i, j, k] / beta_k`` summarizes how much each source
dimension ``j`` excites each target ``i``; the block of it that maps
imbalance cells into return cells, contracted against a nonnegative
alignment mask, is the excitation score.

Same-timestamp events are ordered by stream position and earlier events
excite later ones at full kernel weight; the log-likelihood, its oracle in
the tests, and the thinning simulator all share that convention.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .durations import NS_PER_S
from .regimes import RegimeScheme, bin_direction, discretize_obi, discretize_return
from .signals import WindowSignal

log = logging.getLogger(__name__)

DEFAULT_DECAYS = (0.1, 1.0, 10.0)
FIT_TOL = 1e-8
FIT_MAX_ITER = 2000


@dataclass(frozen=True)
class MarkedEventStream:
    """Time-ordered event times (seconds) with integer dimension marks."""

    times: np.ndarray
    dims: np.ndarray
    n_dims: int
    horizon: float

    def __post_init__(self) -> None:
        if self.times.ndim != 1 or self.dims.shape != self.times.shape:
            raise ValueError("times and dims must be aligned vectors")
        if self.times.size and np.any(np.diff(self.times) < 0):
            raise ValueError("event times must be nondecreasing")
        if self.times.size and (self.times[0] < 0 or self.times[-1] > self.horizon):
            raise ValueError("event times must lie within [0, horizon]")
        if self.dims.size and (self.dims.min() < 0 or self.dims.max() >= self.n_dims):
            raise ValueError("dimension marks out of range")
        self.times.setflags(write=False)
        self.dims.setflags(write=False)

    def __len__(self) -> int:
        return int(self.times.size)

    def counts(self) -> np.ndarray:
        return np.bincount(self.dims, minlength=self.n_dims)


def build_marked_stream(
    signals: Sequence[WindowSignal],
    scheme: RegimeScheme,
    session_start: int,
    session_end: int,
    variant: str = "book",
    include: Optional[Sequence[bool]] = None,
    returns: Optional[Sequence[Optional[float]]] = None,
) -> MarkedEventStream:
    """Assemble the regime-marked stream from window signals.

    Only windows flagged in ``include`` (default: all windows with both a
    return and at least one sub-sample) contribute.  Imbalance sub-samples
    are stamped at their sub-grid times, return events at their anchors.
    ``returns`` overrides each window's own backward return, letting the
    caller pair the imbalance path with forward returns instead; None or
    NaN entries silence the whole window, same as the default rule.
    """
    if variant not in ("book", "trade"):
        raise ValueError(f"unknown variant {variant!r}")
    if include is not None and len(include) != len(signals):
        raise ValueError("include mask must align with the window list")
    if returns is not None and len(returns) != len(signals):
        raise ValueError("returns override must align with the window list")

    times: list[float] = []
    dims: list[int] = []
    for k, ws in enumerate(signals):
        samples = ws.obi_samples if variant == "book" else ws.trade_obi_samples
        if returns is not None:
            ret = returns[k]
            if ret is not None and not np.isfinite(ret):
                ret = None
        else:
            ret = ws.ret
        if include is None:
            use = ret is not None and bool(samples)
        else:
            use = bool(include[k])
        if not use:
            continue
        for ts, value in samples:
            times.append((ts - session_start) / NS_PER_S)
            dims.append(discretize_obi(value, scheme))
        if ret is not None:
            times.append((ws.anchor - session_start) / NS_PER_S)
            dims.append(scheme.obi_bins + discretize_return(ret, scheme))

    t_arr = np.asarray(times, dtype=float)
    d_arr = np.asarray(dims, dtype=np.int64)
    order = np.argsort(t_arr, kind="stable")
    horizon = (session_end - session_start) / NS_PER_S
    return MarkedEventStream(
        times=t_arr[order],
        dims=d_arr[order],
        n_dims=scheme.obi_bins + scheme.ret_bins,
        horizon=horizon,
    )


# -- likelihood machinery ---------------------------------------------------


def _excitation_states(
    times: np.ndarray, dims: np.ndarray, n_dims: int, decays: np.ndarray
) -> np.ndarray:
    """S[n, j, k] = sum over earlier events m on dim j of exp(-beta_k dt)."""
    n = len(times)
    states = np.zeros((n, n_dims, len(decays)))
    current = np.zeros((n_dims, len(decays)))
    for idx in range(n):
        if idx:
            dt = times[idx] - times[idx - 1]
            if dt > 0:
                current *= np.exp(-decays * dt)
        states[idx] = current
        current[dims[idx]] += 1.0
    return states


def _integral_weights(
    times: np.ndarray, dims: np.ndarray, n_dims: int, decays: np.ndarray, horizon: float
) -> np.ndarray:
    """tail[j, k] = sum over events on dim j of (1 - exp(-beta_k (T - t))) / beta_k."""
    tail = np.zeros((n_dims, len(decays)))
    contrib = (1.0 - np.exp(-decays[None, :] * (horizon - times)[:, None])) / decays
    np.add.at(tail, dims, contrib)
    return tail


class _FitWorkspace:
    """Parameter-independent precomputations shared by every iteration."""

    def __init__(self, stream: MarkedEventStream, decays: np.ndarray):
        self.decays = decays
        self.horizon = stream.horizon
        self.n_dims = stream.n_dims
        states = _excitation_states(stream.times, stream.dims, stream.n_dims, decays)
        self.tail = _integral_weights(
            stream.times, stream.dims, stream.n_dims, decays, stream.horizon
        )
        self.groups = [np.flatnonzero(stream.dims == i) for i in range(stream.n_dims)]
        self.states_by_dim = [states[g] for g in self.groups]

    def objective(
        self, mu: np.ndarray, amps: np.ndarray, want_grad: bool
    ) -> tuple[float, Optional[np.ndarray], Optional[np.ndarray]]:
        ll = -self.horizon * float(mu.sum()) - float((amps * self.tail[None]).sum())
        grad_mu = np.full(self.n_dims, -self.horizon) if want_grad else None
        grad_a = np.tile(-self.tail, (self.n_dims, 1, 1)) if want_grad else None
        for i in range(self.n_dims):
            s_i = self.states_by_dim[i]
            if not s_i.size:
                continue
            lam = mu[i] + np.tensordot(s_i, amps[i], axes=([1, 2], [0, 1]))
            if np.any(lam <= 0.0):
                return -np.inf, None, None
            ll += float(np.log(lam).sum())
            if want_grad:
                inv = 1.0 / lam
                grad_mu[i] += float(inv.sum())
                grad_a[i] += np.tensordot(inv, s_i, axes=(0, 0))
        return ll, grad_mu, grad_a


def loglik(
    mu: Sequence[float],
    amplitudes: np.ndarray,
    decays: Sequence[float],
    stream: MarkedEventStream,
) -> float:
    """Exact log-likelihood via the per-decay recursion (linear in events).

    Raises ValueError if any event sees a nonpositive intensity, which
    nonnegative parameters rule out except in degenerate hand-built cases.
    """
    mu_arr = np.asarray(mu, dtype=float)
    amps = np.asarray(amplitudes, dtype=float)
    dec = np.asarray(decays, dtype=float)
    if mu_arr.shape != (stream.n_dims,):
        raise ValueError(f"mu must have shape ({stream.n_dims},)")
    if amps.shape != (stream.n_dims, stream.n_dims, dec.size):
        raise ValueError("amplitudes must have shape (n_dims, n_dims, n_decays)")
    if np.any(dec <= 0):
        raise ValueError("decay rates must be positive")
    if np.any(mu_arr < 0) or np.any(amps < 0):
        raise ValueError("baselines and amplitudes must be nonnegative")
    ws = _FitWorkspace(stream, dec)
    value, _, _ = ws.objective(mu_arr, amps, want_grad=False)
    if value == -np.inf:
        raise ValueError("nonpositive intensity at an event")
    return value


@dataclass
class KernelEstimate:
    """Fitted baselines and amplitudes for a fixed decay bank."""

    mu: np.ndarray
    amplitudes: np.ndarray
    decays: np.ndarray
    converged: bool
    iterations: int
    loglik: float
    active: np.ndarray

    @property
    def norm_matrix(self) -> np.ndarray:
        """Kernel mass Phi[target, source] = sum_k a[t, s, k] / beta_k."""
        return np.einsum("ijk,k->ij", self.amplitudes, 1.0 / self.decays)

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.norm_matrix))))


def fit_hawkes(
    stream: MarkedEventStream,
    decays: Sequence[float] = DEFAULT_DECAYS,
    max_iter: int = FIT_MAX_ITER,
    tol: float = FIT_TOL,
) -> KernelEstimate:
    """Maximize the log-likelihood over baselines and nonnegative amplitudes.

    Projected gradient ascent with a backtracking step: propose
    ``clip(theta + step * grad, 0)``, halve the step until the likelihood
    improves, and stop once the relative improvement drops below ``tol`` (or
    after ``max_iter`` iterations, in which case ``converged`` is False).
    Dimensions without events are held at zero baseline and zero amplitude
    in both directions; their rows of the mass matrix read as exactly no
    excitation.

    The objective is concave (intensities are affine in the parameters), so
    the ascent has no local optima to fall into.
    """
    if len(stream) == 0:
        raise ValueError("cannot fit an empty stream")
    if stream.horizon <= 0:
        raise ValueError("horizon must be positive")
    dec = np.asarray(decays, dtype=float)
    if dec.ndim != 1 or dec.size == 0 or np.any(dec <= 0):
        raise ValueError("decays must be a nonempty vector of positive rates")

    ws = _FitWorkspace(stream, dec)
    counts = stream.counts().astype(float)
    active = counts > 0
    d = stream.n_dims

    # Start from the Poisson fit with a small excitation seed.
    mu = np.where(active, counts / stream.horizon, 0.0)
    amps = np.zeros((d, d, dec.size))
    seed_mass = 0.1 / max(1, int(active.sum())) / dec.size
    amps[np.ix_(active, active)] = seed_mass * dec  # mass seed_mass per (i, j, k)

    def project(m: np.ndarray, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        m = np.maximum(m, 0.0)
        a = np.maximum(a, 0.0)
        m[~active] = 0.0
        a[~active, :, :] = 0.0
        a[:, ~active, :] = 0.0
        return m, a

    value, grad_mu, grad_a = ws.objective(mu, amps, want_grad=True)
    if value == -np.inf:
        raise ValueError("initial parameters give nonpositive intensity")

    grad_norm = float(np.sqrt((grad_mu**2).sum() + (grad_a**2).sum()))
    param_norm = float(np.sqrt((mu**2).sum() + (amps**2).sum()))
    step = 0.1 * (param_norm + 1e-12) / (grad_norm + 1e-12)

    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        improved = False
        for _ in range(60):
            cand_mu, cand_a = project(mu + step * grad_mu, amps + step * grad_a)
            cand_value, cand_gmu, cand_ga = ws.objective(cand_mu, cand_a, want_grad=True)
            if cand_value > value:
                improved = True
                break
            step *= 0.5
        if not improved:
            converged = True  # no ascent direction left at any usable step
            break
        gain = cand_value - value
        mu, amps = cand_mu, cand_a
        grad_mu, grad_a = cand_gmu, cand_ga
        value = cand_value
        step *= 1.2
        if gain <= tol * max(1.0, abs(value)):
            converged = True
            break

    return KernelEstimate(
        mu=mu,
        amplitudes=amps,
        decays=dec,
        converged=converged,
        iterations=iterations,
        loglik=value,
        active=active,
    )


# -- excitation scoring -----------------------------------------------------


@dataclass(frozen=True)
class ExcitationMask:
    """Nonnegative weights over (return cell, imbalance cell) pairs."""

    values: np.ndarray
    sigma: float
    orientation: str

    def __post_init__(self) -> None:
        self.values.setflags(write=False)


def excitation_mask(
    obi_bins: int = 9,
    ret_bins: int = 4,
    sigma: float = 0.5,
    orientation: str = "opposed",
) -> ExcitationMask:
    """Severity-matched weights on directionally consistent cell pairs.

    Entry ``[j, i]`` weighs excitation flowing from imbalance cell ``i`` into
    return cell ``j``: a Gaussian in the severity mismatch on consistent
    pairs, zero elsewhere (including the neutral imbalance cell).  With the
    default ``opposed`` orientation, consistency means opposite signs, which
    matches a sell-minus-buy imbalance against signed returns.
    """
    if orientation not in ("opposed", "aligned"):
        raise ValueError(f"unknown orientation {orientation!r}")
    flip = -1.0 if orientation == "opposed" else 1.0
    values = np.zeros((ret_bins, obi_bins))
    for j in range(ret_bins):
        v = bin_direction(j, ret_bins)
        if v == 0.0:
            continue
        for i in range(obi_bins):
            u = bin_direction(i, obi_bins)
            if u == 0.0 or np.sign(u * flip) != np.sign(v):
                continue
            values[j, i] = np.exp(-((abs(u) - abs(v)) ** 2) / (2.0 * sigma**2))
    return ExcitationMask(values=values, sigma=sigma, orientation=orientation)


def excitation_score(
    estimate: KernelEstimate, mask: ExcitationMask, obi_bins: int = 9
) -> float:
    """Entrywise l1 norm of the imbalance-to-return mass block under the mask.

    Only cross-group excitation counts: the block has return cells as
    targets and imbalance cells as sources, so within-group feedback never
    enters the score.
    """
    phi = estimate.norm_matrix
    block = phi[obi_bins:, :obi_bins]
    if block.shape != mask.values.shape:
        raise ValueError(
            f"mask shape {mask.values.shape} does not match block {block.shape}"
        )
    return float(np.abs(block * mask.values).sum())


def write_kernel_json(
    path: Union[str, Path], estimate: KernelEstimate, label: str = ""
) -> None:
    payload = {
        "label": label,
        "mu": estimate.mu.tolist(),
        "decays": estimate.decays.tolist(),
        "amplitudes": estimate.amplitudes.tolist(),
        "norm_matrix": estimate.norm_matrix.tolist(),
        "converged": bool(estimate.converged),
        "iterations": int(estimate.iterations),
        "loglik": float(estimate.loglik),
        "spectral_radius": float(estimate.spectral_radius),
        "active_dims": estimate.active.astype(bool).tolist(),
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


# -- simulation -------------------------------------------------------------


def simulate_hawkes(
    mu: Sequence[float],
    amplitudes: np.ndarray,
    decays: Sequence[float],
    horizon: float,
    seed: int,
    n_dims: Optional[int] = None,
) -> MarkedEventStream:
    """Exact thinning sampler for the exponential-kernel process.

    Between events every intensity decays, so the current total intensity
    bounds the future one; candidate times are drawn from that bound and
    accepted with the decayed-to-candidate intensity ratio.  Requires a
    subcritical kernel (spectral radius of the mass matrix below one).
    """
    mu_arr = np.asarray(mu, dtype=float)
    amps = np.asarray(amplitudes, dtype=float)
    dec = np.asarray(decays, dtype=float)
    d = mu_arr.size if n_dims is None else n_dims
    if amps.shape != (d, d, dec.size):
        raise ValueError("amplitudes must have shape (n_dims, n_dims, n_decays)")
    if np.any(mu_arr < 0) or np.any(amps < 0) or np.any(dec <= 0):
        raise ValueError("parameters must be nonnegative with positive decays")
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    mass = np.einsum("ijk,k->ij", amps, 1.0 / dec)
    radius = float(np.max(np.abs(np.linalg.eigvals(mass)))) if d else 0.0
    if radius >= 1.0:
        raise ValueError(f"supercritical kernel (spectral radius {radius:.3f})")

    rng = np.random.default_rng(seed)
    state = np.zeros((d, dec.size))
    t = 0.0
    times: list[float] = []
    dims: list[int] = []
    while True:
        lam = mu_arr + np.einsum("ijk,jk->i", amps, state)
        bound = float(lam.sum())
        if bound <= 0.0:
            break
        wait = rng.exponential(1.0 / bound)
        if t + wait > horizon:
            break
        t += wait
        state *= np.exp(-dec * wait)
        lam = mu_arr + np.einsum("ijk,jk->i", amps, state)
        u = rng.uniform(0.0, bound)
        cum = np.cumsum(lam)
        if u < cum[-1]:
            dim = int(np.searchsorted(cum, u, side="right"))
            times.append(t)
            dims.append(dim)
            state[dim] += 1.0

    return MarkedEventStream(
        times=np.asarray(times, dtype=float),
        dims=np.asarray(dims, dtype=np.int64),
        n_dims=d,
        horizon=horizon,
    )
