"""Seeded Monte Carlo generation of synthetic coincidence histograms.

Events are drawn from the monitor-shaped delay density (optionally
modulated by a phenomenological beat), smeared by a per-pair jitter draw
from the detector response, and binned together with a flat Poisson
accidental floor.  Everything is reproducible from the configured seed:
event chunks and the background use independent derived streams, so the
histogram is identical no matter how the chunks are scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import WindowOverflow
from .instrument import DetectorResponse, Histogram, MonitorParams, monitor

# inverse-CDF sampling resolution; well below any detector jitter of interest
_SAMPLING_GRID_STEP = 1e-12

_CHUNK = 1 << 17
_BACKGROUND_STREAM = 1 << 62


@dataclass(frozen=True)
class BeatParams:
    """Phenomenological modulation of the decay: amplitude, frequency (Hz), phase (rad)."""

    amplitude: float
    frequency: float
    phase: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.amplitude < 1.0):
            raise ValueError(f"beat amplitude must be in [0, 1), got {self.amplitude}")
        if not math.isfinite(self.frequency) or not math.isfinite(self.phase):
            raise ValueError("beat frequency and phase must be finite")


@dataclass(frozen=True)
class SynthConfig:
    """Full recipe for one synthetic histogram."""

    monitor: MonitorParams
    dt0: float
    n_pairs: int
    background_rate: float
    window: tuple[float, float]
    bin_width: float
    seed: int
    beat: BeatParams | None = None

    def __post_init__(self):
        if self.n_pairs <= 0:
            raise ValueError(f"n_pairs must be positive, got {self.n_pairs}")
        if self.bin_width <= 0.0:
            raise ValueError(f"bin_width must be positive, got {self.bin_width}")
        if self.background_rate < 0.0:
            raise ValueError("background_rate must be >= 0")
        t_min, t_max = self.window
        if not t_min < self.dt0 < t_max:
            raise ValueError(
                f"window {self.window} must bracket the delay dt0={self.dt0}"
            )

    @property
    def n_bins(self) -> int:
        t_min, t_max = self.window
        return max(2, int(round((t_max - t_min) / self.bin_width)))

    def bin_centers(self) -> np.ndarray:
        t_min = self.window[0]
        return t_min + self.bin_width * (0.5 + np.arange(self.n_bins))


def _shape(dt: np.ndarray, c: SynthConfig) -> np.ndarray:
    rel = dt - c.dt0
    vals = monitor(rel, c.monitor)
    if c.beat is not None:
        vals = vals * (
            1.0
            + c.beat.amplitude
            * np.cos(2.0 * math.pi * c.beat.frequency * rel + c.beat.phase)
        )
    return vals


def _sampling_grid(c: SynthConfig) -> np.ndarray:
    t_min, t_max = c.window
    n = int(math.ceil((t_max - t_min) / _SAMPLING_GRID_STEP)) + 1
    return np.linspace(t_min, t_max, n)


def true_coincidence_density(dt, c: SynthConfig):
    """Normalized delay density over the configured window.

    Proportional to the (optionally beat-modulated) monitor curve; the
    normalization integral is evaluated on the internal sampling grid.
    """
    grid = _sampling_grid(c)
    norm = np.trapezoid(_shape(grid, c), grid)
    dt_arr = np.asarray(dt, dtype=float)
    out = _shape(dt_arr, c) / norm
    if np.isscalar(dt) or dt_arr.ndim == 0:
        return float(out)
    return out


def _draw_delays(c: SynthConfig) -> np.ndarray:
    """Inverse-CDF draws of the true delays, chunked over derived RNG streams."""
    grid = _sampling_grid(c)
    density = _shape(grid, c)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (density[1:] + density[:-1]) * np.diff(grid))])
    cdf /= cdf[-1]
    delays = np.empty(c.n_pairs)
    for chunk_index, start in enumerate(range(0, c.n_pairs, _CHUNK)):
        n = min(_CHUNK, c.n_pairs - start)
        rng = np.random.default_rng([c.seed, chunk_index])
        u = rng.random(n)
        delays[start : start + n] = np.interp(u, cdf, grid)
    return delays


def _draw_jitter(c: SynthConfig, g: DetectorResponse) -> np.ndarray:
    cdf = np.cumsum(g.weights)
    cdf[-1] = 1.0
    jitter = np.empty(c.n_pairs)
    for chunk_index, start in enumerate(range(0, c.n_pairs, _CHUNK)):
        n = min(_CHUNK, c.n_pairs - start)
        rng = np.random.default_rng([c.seed, chunk_index, 1])
        idx = np.searchsorted(cdf, rng.random(n), side="right")
        jitter[start : start + n] = g.offsets[np.minimum(idx, g.offsets.size - 1)]
    return jitter


def sample_events(c: SynthConfig, g: DetectorResponse) -> Histogram:
    """Draw, jitter, and bin one synthetic coincidence histogram.

    The per-pair jitter is a single draw from the two-detector response.
    Accidentals are Poisson per bin with the configured mean.  Events that
    leave the window are dropped; more than 1% of them raises
    WindowOverflow because the window is then too tight for the physics.
    """
    if not math.isclose(g.bin_width, c.bin_width, rel_tol=1e-9):
        raise ValueError(
            f"response bin width {g.bin_width!r} does not match config bin width {c.bin_width!r}"
        )
    events = _draw_delays(c) + _draw_jitter(c, g)
    t_min, _ = c.window
    n_bins = c.n_bins
    idx = np.floor((events - t_min) / c.bin_width).astype(np.int64)
    inside = (idx >= 0) & (idx < n_bins)
    n_out = int(np.count_nonzero(~inside))
    if n_out > 0.01 * c.n_pairs:
        raise WindowOverflow(
            f"{n_out} of {c.n_pairs} jittered events fall outside the window"
        )
    counts = np.bincount(idx[inside], minlength=n_bins)
    if c.background_rate > 0.0:
        rng = np.random.default_rng([c.seed, _BACKGROUND_STREAM])
        counts = counts + rng.poisson(c.background_rate, n_bins)
    return Histogram(
        bin_width=c.bin_width,
        t_start=t_min + 0.5 * c.bin_width,
        counts=counts,
    )


def expected_curve(c: SynthConfig, g: DetectorResponse) -> np.ndarray:
    """Expected counts per bin, integrated exactly over each bin.

    Quadrature twin of the sampler: the jittered delay density is the true
    density convolved with the discrete response, integrated bin by bin on
    the internal fine grid.  Used to validate the generator statistically.
    """
    grid = _sampling_grid(c)
    density = true_coincidence_density(grid, c)
    smeared = np.zeros_like(density)
    step = grid[1] - grid[0]
    for w, off in zip(g.weights, g.offsets):
        shift = int(round(off / step))
        if shift == 0:
            smeared += w * density
        elif shift > 0:
            smeared[shift:] += w * density[:-shift]
        else:
            smeared[:shift] += w * density[-shift:]
    edges = c.window[0] + c.bin_width * np.arange(c.n_bins + 1)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (smeared[1:] + smeared[:-1]) * step)])
    cdf_at = np.interp(edges, grid, cdf)
    return c.n_pairs * np.diff(cdf_at) + c.background_rate
