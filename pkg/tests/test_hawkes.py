import json

import numpy as np
import pytest

from lobsift.hawkes import (
    KernelEstimate,
    MarkedEventStream,
    build_marked_stream,
    excitation_mask,
    excitation_score,
    fit_hawkes,
    loglik,
    simulate_hawkes,
    write_kernel_json,
)
from lobsift.hawkes import _FitWorkspace
from lobsift.regimes import RegimeScheme
from lobsift.signals import WindowSignal

S = 1_000_000_000


def direct_loglik(mu, amps, decays, stream):
    """Quadratic-time likelihood straight from the definition."""
    t, d = stream.times, stream.dims
    horizon = stream.horizon
    n_dims = stream.n_dims
    dec = np.asarray(decays, dtype=float)
    ll = 0.0
    for n in range(len(t)):
        lam = mu[d[n]]
        for m in range(n):
            lam += float(amps[d[n], d[m]] @ np.exp(-dec * (t[n] - t[m])))
        ll += np.log(lam)
    ll -= horizon * float(np.sum(mu))
    for m in range(len(t)):
        survive = (1.0 - np.exp(-dec * (horizon - t[m]))) / dec
        for i in range(n_dims):
            ll -= float(amps[i, d[m]] @ survive)
    return ll


def random_marked_stream(rng, n_events=150, n_dims=3, horizon=50.0):
    times = np.sort(rng.uniform(0, horizon, n_events))
    dims = rng.integers(0, n_dims, n_events)
    return MarkedEventStream(times=times, dims=dims, n_dims=n_dims, horizon=horizon)


def random_params(rng, n_dims, n_decays):
    mu = rng.uniform(0.2, 1.0, n_dims)
    amps = rng.uniform(0.0, 0.3, (n_dims, n_dims, n_decays))
    return mu, amps


def scheme():
    return RegimeScheme(obi_bins=9, ret_bins=4, ret_edges=(-0.001, 0.0, 0.001))


class TestMarkedStream:
    def test_validation(self):
        with pytest.raises(ValueError, match="nondecreasing"):
            MarkedEventStream(np.array([2.0, 1.0]), np.array([0, 0]), 2, 10.0)
        with pytest.raises(ValueError, match="within"):
            MarkedEventStream(np.array([5.0, 11.0]), np.array([0, 0]), 2, 10.0)
        with pytest.raises(ValueError, match="marks"):
            MarkedEventStream(np.array([1.0, 2.0]), np.array([0, 2]), 2, 10.0)

    def test_counts(self):
        stream = MarkedEventStream(
            np.array([1.0, 2.0, 3.0]), np.array([0, 2, 0]), 4, 10.0
        )
        assert stream.counts().tolist() == [2, 0, 1, 0]
        assert len(stream) == 3


class TestBuildMarkedStream:
    def window(self, anchor, samples, ret):
        return WindowSignal(
            anchor=anchor, n_buy=1, n_sell=1, obi=0.0, trade_obi=0.0,
            ret=ret, fwd_ret=None,
            obi_samples=tuple(samples),
            trade_obi_samples=tuple((t, -v) for t, v in samples),
        )

    def test_dimension_layout(self):
        ws = self.window(10 * S, [(9 * S, -1.0), (10 * S, 1.0)], ret=0.01)
        stream = build_marked_stream([ws], scheme(), 0, 20 * S)
        assert stream.n_dims == 13
        assert stream.times.tolist() == [9.0, 10.0, 10.0]
        # cells: -1 -> 0, +1 -> 8, return 0.01 -> cell 3 offset by nine
        assert stream.dims.tolist() == [0, 8, 9 + 3]

    def test_anchor_tie_keeps_sample_before_return(self):
        # both land at t=10s; stream order must put the imbalance mark first
        ws = self.window(10 * S, [(10 * S, 0.5)], ret=-0.01)
        stream = build_marked_stream([ws], scheme(), 0, 20 * S)
        assert stream.dims.tolist()[0] < 9 <= stream.dims.tolist()[1]

    def test_windows_without_return_are_silent(self):
        ws = self.window(10 * S, [(9 * S, 0.0)], ret=None)
        stream = build_marked_stream([ws], scheme(), 0, 20 * S)
        assert len(stream) == 0

    def test_include_mask_overrides(self):
        wins = [
            self.window(10 * S, [(9 * S, 0.0)], ret=0.01),
            self.window(25 * S, [(24 * S, 0.0)], ret=0.01),
        ]
        stream = build_marked_stream(wins, scheme(), 0, 30 * S, include=[False, True])
        assert stream.times.min() >= 24.0

    def test_returns_override_silences_nan(self):
        wins = [
            self.window(10 * S, [(9 * S, 0.0)], ret=0.01),
            self.window(25 * S, [(24 * S, 0.0)], ret=0.01),
        ]
        stream = build_marked_stream(
            wins, scheme(), 0, 30 * S, returns=[float("nan"), -0.05]
        )
        assert len(stream) == 2   # one sample + one return, window one only
        assert stream.dims.tolist()[1] == 9 + 0   # deep down cell from override

    def test_trade_variant_uses_mirrored_samples(self):
        ws = self.window(10 * S, [(9 * S, 1.0)], ret=0.01)
        book = build_marked_stream([ws], scheme(), 0, 20 * S, variant="book")
        trade = build_marked_stream([ws], scheme(), 0, 20 * S, variant="trade")
        assert book.dims.tolist()[0] == 8
        assert trade.dims.tolist()[0] == 0


class TestLoglik:
    def test_matches_direct_oracle(self, rng):
        for trial in range(10):
            stream = random_marked_stream(rng, n_events=120, n_dims=3)
            mu, amps = random_params(rng, 3, 2)
            decays = np.array([0.5, 3.0])
            fast = loglik(mu, amps, decays, stream)
            slow = direct_loglik(mu, amps, decays, stream)
            assert fast == pytest.approx(slow, abs=1e-10)

    def test_oracle_with_simultaneous_events(self, rng):
        times = np.array([1.0, 1.0, 1.0, 4.0, 4.0])
        dims = np.array([0, 1, 0, 1, 0])
        stream = MarkedEventStream(times, dims, 2, 10.0)
        mu, amps = random_params(rng, 2, 2)
        decays = np.array([1.0, 5.0])
        assert loglik(mu, amps, decays, stream) == pytest.approx(
            direct_loglik(mu, amps, decays, stream), abs=1e-10
        )

    def test_poisson_reduction(self, rng):
        stream = random_marked_stream(rng, n_events=200, n_dims=3)
        mu = np.array([0.7, 1.3, 0.4])
        amps = np.zeros((3, 3, 1))
        counts = stream.counts()
        expected = float(
            np.sum(counts * np.log(mu)) - stream.horizon * mu.sum()
        )
        assert loglik(mu, amps, [1.0], stream) == pytest.approx(expected, abs=1e-10)

    def test_parameter_validation(self, rng):
        stream = random_marked_stream(rng, n_events=10, n_dims=2)
        with pytest.raises(ValueError, match="shape"):
            loglik([1.0], np.zeros((2, 2, 1)), [1.0], stream)
        with pytest.raises(ValueError, match="nonnegative"):
            loglik([1.0, -0.5], np.zeros((2, 2, 1)), [1.0], stream)
        with pytest.raises(ValueError, match="positive"):
            loglik([1.0, 1.0], np.zeros((2, 2, 1)), [-1.0], stream)

    def test_gradient_matches_finite_differences(self, rng):
        stream = random_marked_stream(rng, n_events=60, n_dims=2)
        decays = np.array([0.8, 4.0])
        mu, amps = random_params(rng, 2, 2)
        ws = _FitWorkspace(stream, decays)
        value, grad_mu, grad_a = ws.objective(mu, amps, want_grad=True)
        eps = 1e-6
        for i in range(2):
            bumped = mu.copy()
            bumped[i] += eps
            up, _, _ = ws.objective(bumped, amps, want_grad=False)
            assert grad_mu[i] == pytest.approx((up - value) / eps, rel=1e-4)
        for idx in [(0, 1, 0), (1, 0, 1), (1, 1, 1)]:
            bumped = amps.copy()
            bumped[idx] += eps
            up, _, _ = ws.objective(mu, bumped, want_grad=False)
            assert grad_a[idx] == pytest.approx((up - value) / eps, rel=1e-4)


class TestSimulate:
    def test_deterministic(self):
        mu = [0.5]
        amps = np.full((1, 1, 1), 0.4)
        a = simulate_hawkes(mu, amps, [1.0], horizon=500.0, seed=42)
        b = simulate_hawkes(mu, amps, [1.0], horizon=500.0, seed=42)
        assert np.array_equal(a.times, b.times)
        assert np.array_equal(a.dims, b.dims)
        c = simulate_hawkes(mu, amps, [1.0], horizon=500.0, seed=43)
        assert not np.array_equal(a.times, c.times)

    def test_supercritical_rejected(self):
        amps = np.full((1, 1, 1), 1.0)   # mass 1.0 at decay 1.0
        with pytest.raises(ValueError, match="supercritical"):
            simulate_hawkes([0.5], amps, [1.0], horizon=10.0, seed=0)

    def test_stationary_rate(self):
        # mean rate of a univariate process is mu / (1 - mass)
        mu, mass = 1.0, 0.5
        amps = np.full((1, 1, 1), mass * 2.0)
        stream = simulate_hawkes([mu], amps, [2.0], horizon=3000.0, seed=7)
        rate = len(stream) / stream.horizon
        assert rate == pytest.approx(mu / (1 - mass), rel=0.1)

    def test_zero_rate_process_is_empty(self):
        stream = simulate_hawkes([0.0], np.zeros((1, 1, 1)), [1.0], horizon=10.0, seed=0)
        assert len(stream) == 0


class TestFit:
    def test_recovers_univariate_mass(self):
        amps = np.full((1, 1, 1), 0.4)
        stream = simulate_hawkes([0.5], amps, [1.0], horizon=6000.0, seed=11)
        est = fit_hawkes(stream, decays=[1.0])
        mass = float(est.norm_matrix[0, 0])
        assert mass == pytest.approx(0.4, rel=0.2)
        assert est.mu[0] == pytest.approx(0.5, rel=0.2)

    def test_poisson_data_fits_near_zero_mass(self):
        stream = simulate_hawkes([1.0], np.zeros((1, 1, 1)), [1.0],
                                 horizon=3000.0, seed=3)
        est = fit_hawkes(stream, decays=[0.1, 1.0, 10.0])
        assert float(est.norm_matrix[0, 0]) < 0.1
        assert est.mu[0] == pytest.approx(1.0, rel=0.15)

    def test_likelihood_never_decreases_from_start(self, rng):
        stream = random_marked_stream(rng, n_events=200, n_dims=2)
        est = fit_hawkes(stream, decays=[1.0], max_iter=50)
        counts = stream.counts().astype(float)
        poisson_ll = loglik(counts / stream.horizon,
                            np.zeros((2, 2, 1)), [1.0], stream)
        assert est.loglik >= poisson_ll - 1e-6

    def test_inactive_dimensions_stay_zero(self, rng):
        times = np.sort(rng.uniform(0, 50.0, 80))
        stream = MarkedEventStream(times, np.zeros(80, dtype=np.int64), 3, 50.0)
        est = fit_hawkes(stream, decays=[1.0], max_iter=200)
        assert est.active.tolist() == [True, False, False]
        assert np.all(est.mu[1:] == 0.0)
        assert np.all(est.amplitudes[1:, :, :] == 0.0)
        assert np.all(est.amplitudes[:, 1:, :] == 0.0)

    def test_empty_stream_rejected(self):
        stream = MarkedEventStream(np.array([]), np.array([], dtype=np.int64), 2, 10.0)
        with pytest.raises(ValueError, match="empty"):
            fit_hawkes(stream)


class TestKernelEstimate:
    def make(self):
        amps = np.zeros((2, 2, 2))
        amps[0, 1, 0] = 0.3   # decay 0.5 -> mass 0.6
        amps[1, 0, 1] = 0.8   # decay 4.0 -> mass 0.2
        return KernelEstimate(
            mu=np.array([0.1, 0.2]), amplitudes=amps,
            decays=np.array([0.5, 4.0]), converged=True, iterations=5,
            loglik=-10.0, active=np.array([True, True]),
        )

    def test_norm_matrix_hand_values(self):
        phi = self.make().norm_matrix
        assert phi[0, 1] == pytest.approx(0.6)
        assert phi[1, 0] == pytest.approx(0.2)
        assert phi[0, 0] == phi[1, 1] == 0.0

    def test_spectral_radius_hand_value(self):
        # off-diagonal [[0, .6], [.2, 0]]: eigenvalues +-sqrt(0.12)
        assert self.make().spectral_radius == pytest.approx(np.sqrt(0.12))


class TestExcitationScore:
    def test_mask_frozen_values(self):
        mask = excitation_mask(obi_bins=9, ret_bins=4, sigma=0.5)
        v = mask.values
        assert v.shape == (4, 9)
        assert v[0, 8] == pytest.approx(1.0)      # deep down return <- sell-heavy
        assert v[3, 0] == pytest.approx(1.0)      # deep up return <- buy-heavy
        assert v[0, 0] == 0.0                     # inconsistent direction
        assert np.all(v[:, 4] == 0.0)             # neutral imbalance cell
        assert v[0, 5] == pytest.approx(np.exp(-((1 - 0.25) ** 2) / 0.5))

    def test_mask_nonnegative(self):
        for orientation in ("opposed", "aligned"):
            assert excitation_mask(orientation=orientation).values.min() >= 0.0

    def test_aligned_orientation_flips_consistency(self):
        opposed = excitation_mask(obi_bins=3, ret_bins=2, orientation="opposed")
        aligned = excitation_mask(obi_bins=3, ret_bins=2, orientation="aligned")
        assert np.allclose(opposed.values, aligned.values[:, ::-1])

    def test_score_hand_value(self):
        obi_bins, ret_bins = 3, 2
        d = obi_bins + ret_bins
        amps = np.zeros((d, d, 1))
        amps[3, 0, 0] = 2.0   # down return excited by buy-heavy cell: mass 2
        amps[4, 2, 0] = 3.0   # up return excited by sell-heavy cell: mass 3
        amps[0, 0, 0] = 0.1   # within-group feedback must not count
        est = KernelEstimate(
            mu=np.zeros(d), amplitudes=amps, decays=np.array([1.0]),
            converged=True, iterations=1, loglik=0.0,
            active=np.ones(d, dtype=bool),
        )
        mask = excitation_mask(obi_bins=obi_bins, ret_bins=ret_bins, sigma=0.5)
        # aligned orientation pays exactly those two cells at weight one
        aligned = excitation_mask(obi_bins=obi_bins, ret_bins=ret_bins,
                                  orientation="aligned")
        assert excitation_score(est, aligned, obi_bins=obi_bins) == pytest.approx(5.0)
        assert excitation_score(est, mask, obi_bins=obi_bins) == pytest.approx(0.0)

    def test_shape_mismatch_rejected(self):
        est = KernelEstimate(
            mu=np.zeros(5), amplitudes=np.zeros((5, 5, 1)),
            decays=np.array([1.0]), converged=True, iterations=1,
            loglik=0.0, active=np.ones(5, dtype=bool),
        )
        with pytest.raises(ValueError, match="mask shape"):
            excitation_score(est, excitation_mask(obi_bins=9, ret_bins=4), obi_bins=3)


def test_kernel_json_round_trip(tmp_path):
    amps = np.full((1, 1, 1), 0.4)
    stream = simulate_hawkes([0.5], amps, [1.0], horizon=800.0, seed=5)
    est = fit_hawkes(stream, decays=[1.0], max_iter=300)
    path = tmp_path / "kernel.json"
    write_kernel_json(path, est, label="UF")
    payload = json.loads(path.read_text())
    assert payload["label"] == "UF"
    assert payload["decays"] == [1.0]
    assert np.asarray(payload["norm_matrix"]).shape == (1, 1)
    assert payload["spectral_radius"] == pytest.approx(est.spectral_radius)
    assert isinstance(payload["converged"], bool)
