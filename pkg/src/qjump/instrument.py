"""Detector response handling, the jump monitor curve, and grid convolution.

Histograms live on uniform bin-center grids.  A detector response is a
normalized weight distribution on the same bin pitch; convolving a sampled
model with it predicts what the two-detector system actually records.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.signal import fftconvolve

from .errors import EmptyHistogram, GridMismatch

# beyond this argument the logistic saturates exactly in float64
_SIGMOID_CUT = 745.0
# largest argument exp() accepts without overflow
_EXP_CLIP = 709.0

# direct summation up to this response support, transforms above
_DIRECT_SUPPORT_LIMIT = 512


@dataclass(frozen=True)
class MonitorParams:
    """Jump timescale ``alpha`` and decay constant ``tau``, both in seconds."""

    alpha: float
    tau: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.tau)):
            raise ValueError("monitor parameters must be finite")
        if self.alpha < 0.0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.tau <= 0.0:
            raise ValueError(f"tau must be > 0, got {self.tau}")


def sigmoid(x):
    """Logistic function 1 / (1 + exp(-x)), exact 0/1 outside float range."""
    x_arr = np.asarray(x, dtype=float)
    clipped = np.clip(x_arr, -_EXP_CLIP, _EXP_CLIP)
    out = 1.0 / (1.0 + np.exp(-clipped))
    out = np.where(x_arr > _SIGMOID_CUT, 1.0, out)
    out = np.where(x_arr < -_SIGMOID_CUT, 0.0, out)
    if np.isscalar(x) or x_arr.ndim == 0:
        return float(out)
    return out


def _log_sigmoid(x: np.ndarray) -> np.ndarray:
    # -softplus(-x), stable for large |x|
    return np.where(x >= 0.0, -np.log1p(np.exp(-np.abs(x))), x - np.log1p(np.exp(-np.abs(x))))


def monitor(dt, m: MonitorParams):
    """Sigmoid-gated exponential: sigmoid(dt/alpha) * exp(-dt/tau).

    alpha = 0 degenerates to a step at dt = 0 (value 1/2 at the step).
    Evaluated in log space so the gate and the exponential never overflow
    against each other.
    """
    dt_arr = np.asarray(dt, dtype=float)
    if m.alpha == 0.0:
        out = np.where(
            dt_arr < 0.0,
            0.0,
            np.where(dt_arr == 0.0, 0.5, np.exp(-dt_arr / m.tau)),
        )
    else:
        out = np.exp(_log_sigmoid(dt_arr / m.alpha) - dt_arr / m.tau)
    if np.isscalar(dt) or dt_arr.ndim == 0:
        return float(out)
    return out


def rise_time_10_90(alpha: float) -> float:
    """10%-90% traversal time of the sigmoid edge: 2 ln(9) * alpha."""
    if alpha < 0.0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    return 2.0 * math.log(9.0) * alpha


def rise_time_numeric(m: MonitorParams) -> float:
    """10%-90% rise found by root search on the full monitor curve.

    Validation twin of ``rise_time_10_90``; agrees to better than 0.1% once
    tau exceeds ~100 alpha.
    """
    if m.alpha == 0.0:
        return 0.0
    lo, hi = -60.0 * m.alpha, 60.0 * m.alpha
    ts = np.linspace(lo, hi, 4001)
    vals = monitor(ts, m)
    peak = float(vals.max())
    t_peak = float(ts[np.argmax(vals)])

    def crossing(level):
        f = lambda t: monitor(t, m) - level * peak
        return brentq(f, lo, t_peak, xtol=1e-6 * m.alpha)

    return crossing(0.9) - crossing(0.1)


@dataclass(frozen=True)
class Histogram:
    """Uniformly binned coincidence counts.

    ``t_start`` is the center of the first bin (s); ``counts`` holds
    non-negative integers.
    """

    bin_width: float
    t_start: float
    counts: np.ndarray

    def __post_init__(self):
        if self.bin_width <= 0.0:
            raise ValueError(f"bin_width must be positive, got {self.bin_width}")
        counts = np.asarray(self.counts)
        if counts.ndim != 1 or counts.size < 2:
            raise ValueError("counts must be a 1-d array with at least two bins")
        if not np.issubdtype(counts.dtype, np.integer):
            as_int = counts.astype(np.int64)
            if np.any(as_int != counts):
                raise ValueError("counts must be integers")
            counts = as_int
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        counts = np.ascontiguousarray(counts, dtype=np.int64)
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def centers(self) -> np.ndarray:
        return self.t_start + self.bin_width * np.arange(self.counts.size)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class DetectorResponse:
    """Normalized detector impulse response on a uniform offset grid.

    ``offsets`` are bin centers relative to the response centroid (s) and
    share the pitch of the histograms the response will be convolved with;
    ``weights`` are non-negative and sum to one.
    """

    bin_width: float
    offsets: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        offsets = np.asarray(self.offsets, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if self.bin_width <= 0.0:
            raise ValueError(f"bin_width must be positive, got {self.bin_width}")
        if offsets.ndim != 1 or offsets.shape != weights.shape or offsets.size == 0:
            raise ValueError("offsets and weights must be matching 1-d arrays")
        if offsets.size > 1:
            steps = np.diff(offsets)
            if not np.allclose(steps, self.bin_width, rtol=1e-9, atol=1e-15 * self.bin_width):
                raise ValueError("offsets must be uniformly spaced by bin_width")
        if np.any(weights < 0.0):
            raise ValueError("weights must be non-negative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {weights.sum()!r}")
        offsets.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "weights", weights)

    @property
    def centroid_residual(self) -> float:
        """Sub-bin part of the offsets relative to the bin lattice (s).

        Discrete convolution rounds offsets to whole bins; the constant
        remainder shows up as a shift of the fitted delay, nothing else.
        """
        shift = self.offsets[0] / self.bin_width
        return (shift - round(shift)) * self.bin_width

    def bin_shifts(self) -> np.ndarray:
        """Offsets rounded to integer multiples of the bin width."""
        base = round(self.offsets[0] / self.bin_width)
        return base + np.arange(self.offsets.size)

    def std(self) -> float:
        mean = float(np.dot(self.weights, self.offsets))
        return math.sqrt(float(np.dot(self.weights, (self.offsets - mean) ** 2)))

    def fwhm(self) -> float:
        """Full width at half maximum via linear interpolation of the weights."""
        w = self.weights
        if w.size == 1:
            return 0.0
        i_max = int(np.argmax(w))
        half = 0.5 * w[i_max]

        def cross(idx_range):
            prev = None
            for i in idx_range:
                if prev is not None and (w[prev] - half) * (w[i] - half) <= 0.0 and w[prev] != w[i]:
                    frac = (half - w[prev]) / (w[i] - w[prev])
                    return self.offsets[prev] + frac * (self.offsets[i] - self.offsets[prev])
                prev = i
            return None

        left = cross(range(i_max, -1, -1))
        right = cross(range(i_max, w.size))
        if left is None or right is None:
            return 0.0
        return float(right - left)


def normalize_response(
    raw: Histogram,
    *,
    subtract_floor: bool = True,
    floor_window: float = 2e-9,
) -> DetectorResponse:
    """Turn a calibration histogram into a normalized detector response.

    An accidental floor (the median of bins farther than ``floor_window``
    from the peak) is optionally removed with negatives clamped to zero,
    the weights are normalized, and the offsets are re-centered on the
    weighted centroid; any absolute shift is absorbed downstream by the
    fitted delay parameter.
    """
    counts = raw.counts.astype(float)
    if counts.sum() <= 0.0:
        raise EmptyHistogram("calibration histogram has no counts")
    if subtract_floor:
        centers = raw.centers
        peak_t = centers[int(np.argmax(counts))]
        outside = np.abs(centers - peak_t) > floor_window
        if np.any(outside):
            counts = np.clip(counts - np.median(counts[outside]), 0.0, None)
    total = counts.sum()
    if total <= 0.0:
        raise EmptyHistogram("no counts left after floor subtraction")
    weights = counts / total
    centroid = float(np.dot(weights, raw.centers))
    offsets = raw.centers - centroid
    # trim zero-weight wings so the convolution support stays tight
    nonzero = np.nonzero(weights)[0]
    lo, hi = nonzero[0], nonzero[-1] + 1
    weights = weights[lo:hi]
    offsets = offsets[lo:hi]
    weights = weights / weights.sum()
    return DetectorResponse(bin_width=raw.bin_width, offsets=offsets, weights=weights)


def gaussian_response(
    fwhm: float,
    bin_width: float,
    *,
    support_sigmas: float = 6.0,
) -> DetectorResponse:
    """Synthetic Gaussian response, handy for tests and simulated runs."""
    if fwhm < 0.0 or bin_width <= 0.0:
        raise ValueError("fwhm must be >= 0 and bin_width > 0")
    if fwhm == 0.0:
        return DetectorResponse(bin_width=bin_width, offsets=np.array([0.0]), weights=np.array([1.0]))
    sigma = fwhm / (2.0 * math.sqrt(2.0 * math.log(2.0)))
    n = max(1, int(math.ceil(support_sigmas * sigma / bin_width)))
    offsets = bin_width * np.arange(-n, n + 1)
    weights = np.exp(-0.5 * (offsets / sigma) ** 2)
    weights = weights / weights.sum()
    return DetectorResponse(bin_width=bin_width, offsets=offsets, weights=weights)


def convolution_pads(g: DetectorResponse) -> tuple[int, int]:
    """Bins of grid extension (left, right) that exact convolution needs."""
    shifts = g.bin_shifts()
    return int(max(shifts.max(), 0)), int(max(-shifts.min(), 0))


def extend_centers(centers: np.ndarray, bin_width: float, g: DetectorResponse) -> np.ndarray:
    """Bin centers padded by the response support on both ends."""
    pad_left, pad_right = convolution_pads(g)
    left = centers[0] - bin_width * np.arange(pad_left, 0, -1)
    right = centers[-1] + bin_width * np.arange(1, pad_right + 1)
    return np.concatenate([left, centers, right])


def convolve(
    model_values,
    g: DetectorResponse,
    *,
    bin_width: float | None = None,
    method: str = "auto",
) -> np.ndarray:
    """Discrete convolution of a sampled model with the detector response.

    ``model_values`` must be sampled on the histogram grid extended by the
    response support on both ends (see ``extend_centers``); the result is
    restricted to the original grid.  ``method`` is "auto", "direct" or
    "fft"; auto switches to transforms for wide responses.
    """
    values = np.asarray(model_values, dtype=float)
    if values.ndim != 1:
        raise GridMismatch("model values must be one-dimensional")
    if bin_width is not None and not math.isclose(bin_width, g.bin_width, rel_tol=1e-9):
        raise GridMismatch(
            f"model bin width {bin_width!r} does not match response bin width {g.bin_width!r}"
        )
    pad_left, pad_right = convolution_pads(g)
    n_out = values.size - pad_left - pad_right
    if n_out < 1:
        raise GridMismatch(
            f"model grid too short: {values.size} samples cannot cover "
            f"a response support of {pad_left}+{pad_right} bins"
        )
    shifts = g.bin_shifts()
    if method == "auto":
        method = "direct" if shifts.size <= _DIRECT_SUPPORT_LIMIT else "fft"
    if method == "direct":
        out = np.zeros(n_out)
        for w, s in zip(g.weights, shifts):
            start = pad_left - s
            out += w * values[start : start + n_out]
        return out
    if method == "fft":
        full = fftconvolve(values, g.weights)
        start = pad_left - int(shifts.min())
        return full[start : start + n_out]
    raise ValueError(f"unknown convolution method {method!r}")
