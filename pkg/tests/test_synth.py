import numpy as np
import pytest

from qjump import (
    BeatParams,
    DetectorResponse,
    MonitorParams,
    SynthConfig,
    WindowOverflow,
    expected_curve,
    gaussian_response,
    sample_events,
    true_coincidence_density,
)

from conftest import make_synth


def delta_response(bin_width=10e-12):
    return DetectorResponse(
        bin_width=bin_width, offsets=np.array([0.0]), weights=np.array([1.0])
    )


class TestConfigValidation:
    def test_rejects_bad_counts(self):
        with pytest.raises(ValueError):
            make_synth(n_pairs=0)

    def test_rejects_delay_outside_window(self):
        with pytest.raises(ValueError):
            SynthConfig(
                monitor=MonitorParams(alpha=0.0, tau=7e-9),
                dt0=70e-9,
                n_pairs=100,
                background_rate=0.0,
                window=(0.0, 64e-9),
                bin_width=10e-12,
                seed=0,
            )

    def test_rejects_full_beat_modulation(self):
        with pytest.raises(ValueError):
            BeatParams(amplitude=1.0, frequency=1e8)


class TestDensity:
    def test_vanishes_before_the_jump(self):
        c = make_synth()
        assert true_coincidence_density(1e-9, c) == 0.0
        assert true_coincidence_density(13e-9, c) < 1e-12

    def test_normalized_over_window(self):
        c = make_synth()
        grid = np.linspace(*c.window, 20001)
        total = np.trapezoid(true_coincidence_density(grid, c), grid)
        assert total == pytest.approx(1.0, rel=1e-6)

    def test_zero_beat_amplitude_matches_plain_curve(self):
        plain = make_synth()
        with_beat = make_synth(beat=BeatParams(amplitude=0.0, frequency=1e8, phase=0.3))
        grid = np.linspace(10e-9, 60e-9, 512)
        assert true_coincidence_density(grid, with_beat) == pytest.approx(
            true_coincidence_density(grid, plain), rel=1e-12
        )

    def test_beat_modulation_depth_in_flat_decay_limit(self):
        # with tau far beyond the window the decay is flat, so the density
        # oscillates between (1-a) and (1+a) times the mean
        c = make_synth(alpha=0.0, tau=1.0, beat=BeatParams(amplitude=0.3, frequency=1e8))
        period = 1.0 / 1e8
        grid = c.dt0 + 2e-9 + np.linspace(0.0, period, 4001)
        vals = true_coincidence_density(grid, c)
        assert vals.max() / vals.min() == pytest.approx(1.3 / 0.7, rel=1e-3)


class TestSampleEvents:
    def test_deterministic_for_identical_config(self, response_50ps):
        c = make_synth(seed=42, n_pairs=200_000)
        h1 = sample_events(c, response_50ps)
        h2 = sample_events(c, response_50ps)
        assert np.array_equal(h1.counts, h2.counts)
        assert h1.t_start == h2.t_start

    def test_different_seeds_differ(self, response_50ps):
        c1 = make_synth(seed=1, n_pairs=50_000)
        c2 = make_synth(seed=2, n_pairs=50_000)
        assert not np.array_equal(sample_events(c1, response_50ps).counts,
                                  sample_events(c2, response_50ps).counts)

    def test_event_conservation_without_background(self):
        c = make_synth(alpha=0.0, tau=3e-9, n_pairs=100_000, background=0.0,
                       window=(0.0, 80e-9))
        h = sample_events(c, delta_response())
        assert h.total == c.n_pairs

    def test_ideal_step_and_detector_leave_pre_jump_bins_empty(self):
        c = make_synth(alpha=0.0, tau=3e-9, n_pairs=100_000, background=0.0,
                       window=(0.0, 80e-9))
        h = sample_events(c, delta_response())
        before = h.centers < c.dt0 - h.bin_width
        assert h.counts[before].sum() == 0

    def test_background_adds_poisson_counts(self):
        c0 = make_synth(n_pairs=1000, background=0.0)
        cb = make_synth(n_pairs=1000, background=20.0)
        h0 = sample_events(c0, delta_response())
        hb = sample_events(cb, delta_response())
        extra = hb.total - h0.total
        mean_bg = 20.0 * h0.counts.size
        assert abs(extra - mean_bg) < 5 * np.sqrt(mean_bg)

    def test_window_overflow_detected(self, response_50ps):
        # delays pile against the window edge, so the jitter pushes a large
        # fraction of the events out
        c = make_synth(alpha=0.0, tau=7e-9, n_pairs=10_000, background=0.0,
                       window=(0.0, 16e-9), dt0=15.95e-9)
        with pytest.raises(WindowOverflow):
            sample_events(c, response_50ps)

    def test_mismatched_response_pitch_rejected(self):
        c = make_synth(n_pairs=1000)
        with pytest.raises(ValueError):
            sample_events(c, gaussian_response(50e-12, 20e-12))

    def test_chunk_boundary_sizes_run(self, response_50ps):
        c = make_synth(n_pairs=(1 << 17) + 7, background=0.0)
        h = sample_events(c, response_50ps)
        assert h.total <= c.n_pairs

    def test_schedule_independent_chunk_streams(self, response_50ps):
        # each event chunk draws from its own derived stream, so binning the
        # chunks in any order reproduces the single-pass histogram
        import qjump.synth as synth_mod

        n_pairs = (1 << 17) * 2 + 123
        c = make_synth(n_pairs=n_pairs, background=0.0)
        single = sample_events(c, response_50ps)
        grid = synth_mod._sampling_grid(c)
        density = synth_mod._shape(grid, c)
        cdf = np.concatenate(
            [[0.0], np.cumsum(0.5 * (density[1:] + density[:-1]) * np.diff(grid))]
        )
        cdf /= cdf[-1]
        jitter_cdf = np.cumsum(response_50ps.weights)
        jitter_cdf[-1] = 1.0
        chunks = list(enumerate(range(0, n_pairs, synth_mod._CHUNK)))
        merged = np.zeros(c.n_bins, dtype=np.int64)
        for index, start in reversed(chunks):
            n = min(synth_mod._CHUNK, n_pairs - start)
            delays = np.interp(
                np.random.default_rng([c.seed, index]).random(n), cdf, grid
            )
            idx = np.searchsorted(
                jitter_cdf, np.random.default_rng([c.seed, index, 1]).random(n), side="right"
            )
            events = delays + response_50ps.offsets[np.minimum(idx, jitter_cdf.size - 1)]
            bins = np.floor((events - c.window[0]) / c.bin_width).astype(np.int64)
            keep = (bins >= 0) & (bins < c.n_bins)
            merged += np.bincount(bins[keep], minlength=c.n_bins)
        assert np.array_equal(merged, single.counts)

    def test_leading_edge_width_matches_jitter_quantiles(self, response_50ps):
        # step source through a 50 ps FWHM response: the 10-90 rise of the
        # binned leading edge spans the response CDF quantile distance,
        # widened slightly by the bin box (variance bin_width^2 / 12)
        c = make_synth(alpha=0.0, tau=7e-9, n_pairs=10**6, background=0.0)
        h = sample_events(c, response_50ps)
        sigma = 50e-12 / (2.0 * np.sqrt(2.0 * np.log(2.0)))
        sigma_eff = np.sqrt(sigma**2 + h.bin_width**2 / 12.0)
        expected_rise = 2.0 * 1.2815515655446004 * sigma_eff  # 54.9 ps
        centers = h.centers
        # undo the decay so the region past the edge is genuinely flat
        counts = h.counts * np.exp((centers - c.dt0) / c.monitor.tau)
        plateau = counts[(centers > c.dt0 + 0.3e-9) & (centers < c.dt0 + 1e-9)].mean()

        def first_crossing(level):
            i = int(np.argmax(counts >= level))
            frac = (level - counts[i - 1]) / (counts[i] - counts[i - 1])
            return centers[i - 1] + frac * h.bin_width

        rise = first_crossing(0.9 * plateau) - first_crossing(0.1 * plateau)
        assert rise == pytest.approx(expected_rise, rel=0.05)


class TestStatisticalConsistency:
    def test_mean_histogram_matches_quadrature_expectation(self, response_50ps):
        n_seeds = 200
        c0 = make_synth(n_pairs=20_000, background=2.0, window=(8e-9, 40e-9))
        expected = expected_curve(c0, response_50ps)
        acc = np.zeros_like(expected)
        for seed in range(n_seeds):
            c = make_synth(n_pairs=20_000, background=2.0, window=(8e-9, 40e-9), seed=seed)
            acc += sample_events(c, response_50ps).counts
        mean = acc / n_seeds
        se = np.sqrt(np.maximum(expected, 1e-9) / n_seeds)
        pulls = np.abs(mean - expected) / se
        assert np.mean(pulls < 4.0) >= 0.99

    def test_doubling_pairs_halves_relative_variance(self, response_50ps):
        # fluctuation of the counts inside a fixed sub-window is Poisson, so
        # the relative variance scales inversely with the pair number
        def rel_var(n_pairs):
            totals = []
            for seed in range(50):
                c = make_synth(n_pairs=n_pairs, background=0.0, seed=seed)
                h = sample_events(c, response_50ps)
                sub = (h.centers > 20e-9) & (h.centers < 30e-9)
                totals.append(h.counts[sub].sum())
            totals = np.array(totals, dtype=float)
            return totals.var(ddof=1) / totals.mean() ** 2

        ratio = rel_var(100_000) / rel_var(50_000)
        assert ratio == pytest.approx(0.5, abs=0.25)
