"""Weighted least-squares fit of the convolved jump model to a histogram.

The observed histogram is modeled as

    Y(t) = A * (monitor(t - dt0) convolved with detector response) + Y0

with the five parameters A, Y0, dt0, alpha, tau, any subset of which can be
held fixed.  The minimizer is a damped Gauss-Newton (Levenberg-Marquardt)
loop with forward-difference Jacobians and box bounds by projection; the
covariance comes from the undamped normal matrix at the optimum, scaled by
the reduced chi-square.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatch, NoConvergence, SingularNormalMatrix
from .instrument import (
    DetectorResponse,
    Histogram,
    MonitorParams,
    convolve,
    extend_centers,
    monitor,
    rise_time_10_90,
)

PARAM_NAMES = ("A", "Y0", "dt0", "alpha", "tau")

DEFAULT_BOUNDS = {
    "A": (0.0, math.inf),
    "Y0": (0.0, math.inf),
    "dt0": (-math.inf, math.inf),
    "alpha": (0.0, math.inf),
    "tau": (1e-15, math.inf),
}

_REL_STEP = 1e-6
_GTOL = 1e-6  # cosine between Jacobian columns and the weighted residual
_XTOL = 1e-10
_FTOL = 1e-12  # single-step relative reduction at the float floor
_FTOL_FLAT = 1e-9  # "flat" threshold for the patience rule
_PATIENCE = 8  # consecutive flat accepted steps that count as converged
_MAX_ITER = 200
_COND_LIMIT = 1e12

# below this fraction of a bin the edge cannot be resolved on the grid and
# the sampled model stops being differentiable; the solver keeps free alpha
# at or above it (fixing alpha, e.g. at exactly 0, bypasses the solver)
ALPHA_RESOLUTION_FRACTION = 0.05


def model_curve(params, g: DetectorResponse, grid, *, oversample: int = 1) -> np.ndarray:
    """Expected counts per bin for a full parameter set.

    ``grid`` holds the bin centers; the monitor is evaluated on the grid
    extended by the response support, convolved, scaled and offset.  With
    ``oversample > 1`` each bin value is a midpoint average over that many
    sub-samples, i.e. the model is integrated over the bin instead of
    point-sampled at its center.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise GridMismatch("grid must hold at least two bin centers")
    steps = np.diff(grid)
    bin_width = float(steps[0])
    if not np.allclose(steps, bin_width, rtol=1e-9, atol=0.0):
        raise GridMismatch("grid must be uniform")
    if not math.isclose(bin_width, g.bin_width, rel_tol=1e-9):
        raise GridMismatch(
            f"grid bin width {bin_width!r} does not match response bin width {g.bin_width!r}"
        )
    if oversample < 1:
        raise ValueError("oversample must be a positive integer")
    m = MonitorParams(alpha=params["alpha"], tau=params["tau"])
    ext = extend_centers(grid, bin_width, g)
    if oversample == 1:
        vals = monitor(ext - params["dt0"], m)
    elif m.alpha == 0.0:
        # exact bin average of the step-gated exponential; unlike any finite
        # subsampling it stays smooth in dt0, which keeps the delay
        # identifiable when the step is fixed ideal
        vals = _step_bin_average(ext - params["dt0"], bin_width, m.tau)
    else:
        sub = (np.arange(oversample) + 0.5) / oversample - 0.5
        fine = ext[:, None] + bin_width * sub[None, :]
        vals = monitor(fine - params["dt0"], m).mean(axis=1)
    return params["A"] * convolve(vals, g, bin_width=bin_width) + params["Y0"]


def _step_bin_average(rel_centers: np.ndarray, bin_width: float, tau: float) -> np.ndarray:
    """Mean of step(t) * exp(-t/tau) over each bin, computed in closed form."""
    a = rel_centers - 0.5 * bin_width
    b = rel_centers + 0.5 * bin_width
    out = np.zeros_like(rel_centers)
    full = a >= 0.0
    out[full] = (tau / bin_width) * np.exp(-a[full] / tau) * (-np.expm1(-bin_width / tau))
    part = (a < 0.0) & (b > 0.0)
    out[part] = -(tau / bin_width) * np.expm1(-b[part] / tau)
    return out


@dataclass(frozen=True)
class FitSpec:
    """Which parameters float, where they start, and how bins are weighted."""

    free: tuple[str, ...]
    initial: dict[str, float]
    fixed: dict[str, float] = field(default_factory=dict)
    bounds: dict[str, tuple[float, float]] = field(default_factory=dict)
    weight_mode: str = "poisson"
    fit_window: tuple[float, float] | None = None
    # bin-integrated model by default: center sampling leaves a bin-width
    # box variance in the data that the edge parameters would soak up
    oversample: int = 4

    def __post_init__(self):
        free = tuple(self.free)
        object.__setattr__(self, "free", free)
        seen = set(free) | set(self.fixed)
        if set(free) & set(self.fixed):
            raise ValueError(f"parameters both free and fixed: {set(free) & set(self.fixed)}")
        if seen != set(PARAM_NAMES):
            raise ValueError(
                f"every parameter must appear exactly once; free={free}, fixed={tuple(self.fixed)}"
            )
        if set(self.initial) != set(free):
            raise ValueError("initial guesses must cover exactly the free parameters")
        if self.weight_mode not in ("poisson", "uniform"):
            raise ValueError(f"unknown weight_mode {self.weight_mode!r}")
        if self.oversample < 1:
            raise ValueError("oversample must be >= 1")
        for name, guess in self.initial.items():
            lo, hi = self.bound(name)
            if not lo <= guess <= hi:
                raise ValueError(f"initial guess {name}={guess} outside bounds ({lo}, {hi})")

    def bound(self, name: str) -> tuple[float, float]:
        return self.bounds.get(name, DEFAULT_BOUNDS[name])

    def full_params(self, free_values) -> dict[str, float]:
        params = dict(self.fixed)
        params.update(zip(self.free, free_values))
        return params


@dataclass(frozen=True)
class FitResult:
    """Estimates, covariance over the free parameters, and fit diagnostics."""

    estimates: dict[str, float]
    free: tuple[str, ...]
    covariance: np.ndarray
    rise_time: float
    rise_time_err: float
    chi2: float
    dof: int
    n_iter: int
    converged: bool
    cost_history: tuple[float, ...]

    @property
    def errors(self) -> dict[str, float]:
        return {
            name: float(math.sqrt(max(self.covariance[i, i], 0.0)))
            for i, name in enumerate(self.free)
        }

    @property
    def reduced_chi2(self) -> float:
        return self.chi2 / self.dof if self.dof > 0 else math.nan


def _param_scale(name: str, value: float, bin_width: float) -> float:
    if name in ("A", "Y0"):
        return max(abs(value), 1.0)
    if name == "dt0":
        return max(abs(value), bin_width)
    if name == "alpha":
        return max(abs(value), 5e-2 * bin_width)
    return max(abs(value), 1e-2 * bin_width)  # tau


def _step_floor(name: str, bin_width: float) -> float:
    # alpha sensitivity is quadratic near zero and the probe sigmoid must
    # still reach the nearest bin centers, so its difference step gets a
    # floor of a twentieth of a bin; the others are fine at the relative
    # step against their natural scale
    if name == "alpha":
        return 5e-2 * bin_width
    if name in ("dt0", "tau"):
        return _REL_STEP * bin_width
    return _REL_STEP  # A, Y0 count scales


def _jacobian(model_fn, p: np.ndarray, m0: np.ndarray, steps: np.ndarray, bounds) -> np.ndarray:
    jac = np.empty((m0.size, p.size))
    for i in range(p.size):
        h = steps[i]
        trial = p.copy()
        if trial[i] + h > bounds[i][1]:
            h = -h  # step inward at an upper bound
        trial[i] += h
        jac[:, i] = (model_fn(trial) - m0) / h
    return jac


def _solve_damped(normal: np.ndarray, grad: np.ndarray, lam: float) -> np.ndarray | None:
    damped = normal + lam * np.diag(np.diag(normal))
    try:
        return np.linalg.solve(damped, grad)
    except np.linalg.LinAlgError:
        return None


def _projected_gradient(grad, p, lo, hi):
    """Zero the components that point out of the feasible box.

    grad here is J^T W r = -grad(cost)/2, so the downhill direction is
    +grad; at an active bound that direction may be infeasible and must not
    block convergence.
    """
    pg = grad.copy()
    pg[(p <= lo) & (grad < 0.0)] = 0.0
    pg[(p >= hi) & (grad > 0.0)] = 0.0
    return pg


def _levenberg_marquardt(model_fn, y, w, p0, bounds, scales, floors):
    """Minimize sum(w * (y - model)^2) over a box; returns the trail of accepted costs."""
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    p = np.clip(np.asarray(p0, dtype=float), lo, hi)
    m = model_fn(p)
    r = y - m
    cost = float(np.dot(w, r * r))
    history = [cost]
    lam = 1e-3
    converged = False
    accepted = False
    n_flat = 0
    n_iter = 0
    for n_iter in range(1, _MAX_ITER + 1):
        steps = np.maximum(_REL_STEP * np.abs(p), floors)
        jac = _jacobian(model_fn, p, m, steps, bounds)
        grad = jac.T @ (w * r)
        normal = (jac * w[:, None]).T @ jac
        pg = _projected_gradient(grad, p, lo, hi)
        # dimensionless gradient test: cosine between each column and the
        # weighted residual, insensitive to parameter units
        col_norms = np.sqrt(np.maximum(np.diag(normal) * cost, 1e-300))
        if float(np.max(np.abs(pg) / col_norms)) <= _GTOL:
            converged = True
            break
        accepted = False
        for _ in range(60):
            delta = _solve_damped(normal, grad, lam)
            if delta is None:
                lam *= 10.0
                continue
            trial = np.clip(p + delta, lo, hi)
            if np.array_equal(trial, p):
                lam *= 10.0
                continue
            m_trial = model_fn(trial)
            r_trial = y - m_trial
            cost_trial = float(np.dot(w, r_trial * r_trial))
            if cost_trial < cost:
                step_small = np.max(np.abs(trial - p) / np.maximum(np.abs(p), scales)) < _XTOL
                cost_small = (cost - cost_trial) <= _FTOL * cost
                n_flat = n_flat + 1 if (cost - cost_trial) <= _FTOL_FLAT * cost else 0
                p, m, r, cost = trial, m_trial, r_trial, cost_trial
                history.append(cost)
                lam = max(lam / 3.0, 1e-12)
                accepted = True
                if step_small or cost_small or n_flat >= _PATIENCE:
                    converged = True  # objective is flat at this precision
                break
            lam *= 10.0
        if not accepted:
            # no downhill step at any damping: a numerical local minimum
            converged = True
        if converged:
            break
    if not converged:
        raise NoConvergence(f"no convergence after {_MAX_ITER} iterations (cost {cost:.6g})")
    # covariance from the undamped normal matrix at the optimum
    steps = np.maximum(_REL_STEP * np.abs(p), floors)
    jac = _jacobian(model_fn, p, m, steps, bounds)
    normal = (jac * w[:, None]).T @ jac
    return p, cost, normal, n_iter, converged, history


def window_mask(hist: Histogram, fit_window: tuple[float, float] | None) -> np.ndarray:
    """Boolean mask of the bins inside the fit window."""
    centers = hist.centers
    if fit_window is None:
        return np.ones(centers.size, dtype=bool)
    t_lo, t_hi = fit_window
    half = 0.5 * hist.bin_width
    if t_lo >= t_hi:
        raise ValueError("fit_window must satisfy t_lo < t_hi")
    if t_lo < centers[0] - half or t_hi > centers[-1] + half:
        raise ValueError("fit_window must lie within the histogram support")
    return (centers >= t_lo) & (centers <= t_hi)


def fit(hist: Histogram, g: DetectorResponse, spec: FitSpec) -> FitResult:
    """Fit the convolved jump model to a coincidence histogram.

    When alpha floats, its search range is floored at
    ``ALPHA_RESOLUTION_FRACTION`` of a bin: smaller values are
    indistinguishable from an ideal step at this binning, and the sampled
    model would lose differentiability there.  An estimate sitting on that
    floor together with its (large) uncertainty is how "consistent with
    zero" is reported.
    """
    centers = hist.centers
    mask = window_mask(hist, spec.fit_window)
    t = centers[mask]
    y = hist.counts[mask].astype(float)
    n_free = len(spec.free)
    if t.size < n_free + 10:
        raise ValueError(
            f"need at least {n_free + 10} bins in the fit window, got {t.size}"
        )
    if spec.weight_mode == "poisson":
        w = 1.0 / np.maximum(y, 1.0)
    else:
        w = np.ones_like(y)

    def model_fn(free_values):
        return model_curve(spec.full_params(free_values), g, t, oversample=spec.oversample)

    p0 = np.array([spec.initial[name] for name in spec.free])
    bounds = []
    for name in spec.free:
        b_lo, b_hi = spec.bound(name)
        if name == "alpha":
            b_lo = max(b_lo, ALPHA_RESOLUTION_FRACTION * hist.bin_width)
        bounds.append((b_lo, b_hi))
    scales = np.array(
        [_param_scale(name, p0[i], hist.bin_width) for i, name in enumerate(spec.free)]
    )
    floors = np.array([_step_floor(name, hist.bin_width) for name in spec.free])
    p_opt, cost, normal, n_iter, converged, history = _levenberg_marquardt(
        model_fn, y, w, p0, bounds, scales, floors
    )
    dof = t.size - n_free
    # condition and invert the correlation-scaled normal matrix so raw
    # parameter units play no role; only genuine degeneracy trips the check
    diag = np.diag(normal)
    if np.any(diag <= 0.0) or not np.all(np.isfinite(diag)):
        raise SingularNormalMatrix(
            "normal matrix has a vanishing diagonal; a parameter has no "
            "effect on the model at the optimum"
        )
    d = np.sqrt(diag)
    corr = normal / np.outer(d, d)
    cond = np.linalg.cond(corr)
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise SingularNormalMatrix(
            f"normal matrix condition number {cond:.3e}; "
            "a parameter is unidentifiable on this data"
        )
    covariance = np.linalg.inv(corr) / np.outer(d, d) * (cost / dof)
    covariance = 0.5 * (covariance + covariance.T)
    estimates = spec.full_params(p_opt)
    alpha_hat = estimates["alpha"]
    if "alpha" in spec.free:
        i_alpha = spec.free.index("alpha")
        alpha_err = math.sqrt(max(covariance[i_alpha, i_alpha], 0.0))
    else:
        alpha_err = 0.0
    return FitResult(
        estimates={name: float(estimates[name]) for name in PARAM_NAMES},
        free=spec.free,
        covariance=covariance,
        rise_time=rise_time_10_90(alpha_hat),
        rise_time_err=rise_time_10_90(alpha_err) if alpha_err > 0.0 else 0.0,
        chi2=cost,
        dof=dof,
        n_iter=n_iter,
        converged=converged,
        cost_history=tuple(history),
    )


@dataclass(frozen=True)
class BootstrapResult:
    """Empirical parameter spreads from Poisson resampling."""

    spreads: dict[str, float]
    n_resamples: int
    n_failed: int
    samples: np.ndarray  # (n_ok, n_free)


def bootstrap_uncertainty(
    hist: Histogram,
    g: DetectorResponse,
    spec: FitSpec,
    n_resamples: int,
    seed: int,
) -> BootstrapResult:
    """Refit Poisson-resampled histograms and report empirical spreads.

    Each resample draws every bin from Poisson(observed count) on its own
    derived stream, then refits starting from the base fit's estimates.
    Individual resample failures are tolerated up to 5%.
    """
    if n_resamples < 100:
        raise ValueError("n_resamples must be at least 100")
    base = fit(hist, g, spec)
    restart = FitSpec(
        free=spec.free,
        initial={name: base.estimates[name] for name in spec.free},
        fixed=spec.fixed,
        bounds=spec.bounds,
        weight_mode=spec.weight_mode,
        fit_window=spec.fit_window,
        oversample=spec.oversample,
    )
    rows = []
    n_failed = 0
    for i in range(n_resamples):
        rng = np.random.default_rng([seed, i])
        counts = rng.poisson(hist.counts)
        resampled = Histogram(bin_width=hist.bin_width, t_start=hist.t_start, counts=counts)
        try:
            res = fit(resampled, g, restart)
        except (NoConvergence, SingularNormalMatrix):
            n_failed += 1
            continue
        rows.append([res.estimates[name] for name in spec.free])
    if n_failed > 0.05 * n_resamples:
        raise NoConvergence(
            f"{n_failed}/{n_resamples} bootstrap resamples failed to fit"
        )
    samples = np.array(rows)
    spreads = {
        name: float(samples[:, i].std(ddof=1)) for i, name in enumerate(spec.free)
    }
    return BootstrapResult(
        spreads=spreads,
        n_resamples=n_resamples,
        n_failed=n_failed,
        samples=samples,
    )


def _smooth(values: np.ndarray, width: int) -> np.ndarray:
    kernel = np.ones(width) / width
    return np.convolve(values, kernel, mode="same")


def initial_guesses(hist: Histogram, *, smooth_bins: int = 5) -> dict[str, float]:
    """Data-driven starting values for all five parameters.

    Floor from the pre-rise median, delay from the half-excess crossing of
    the smoothed counts, amplitude from the peak excess, alpha from the bin
    width, tau from a log-linear fit of the decay tail.
    """
    counts = hist.counts.astype(float)
    centers = hist.centers
    sm = _smooth(counts, smooth_bins)
    y0_rough = float(np.median(sm[: max(3, counts.size // 10)]))
    peak = float(sm.max())
    threshold = y0_rough + 0.5 * (peak - y0_rough)
    above = np.nonzero(sm > threshold)[0]
    i0 = int(above[0]) if above.size else int(np.argmax(sm))
    dt0 = float(centers[i0])
    pre = counts[centers < dt0 - 5.0 * hist.bin_width]
    y0 = float(np.median(pre)) if pre.size >= 3 else y0_rough
    amp = max(peak - y0, 1.0)
    tau = tail_decay_estimate(hist, dt0=dt0, floor=y0)
    return {"A": amp, "Y0": y0, "dt0": dt0, "alpha": hist.bin_width, "tau": tau}


def tail_decay_estimate(
    hist: Histogram,
    *,
    dt0: float,
    floor: float,
    tail_start: float | None = None,
) -> float:
    """Decay constant from a log-linear fit of the background-subtracted tail.

    The tail starts ``tail_start`` after the delay (default 50 bins, i.e.
    well clear of the edge and of any jitter smearing).
    """
    if tail_start is None:
        tail_start = 50.0 * hist.bin_width
    centers = hist.centers
    excess = hist.counts.astype(float) - floor
    usable = (centers > dt0 + tail_start) & (excess > np.maximum(5.0, 3.0 * math.sqrt(max(floor, 1.0))))
    if np.count_nonzero(usable) < 5:
        return 0.1 * (centers[-1] - centers[0])
    t = centers[usable]
    ln_y = np.log(excess[usable])
    slope, _ = np.polyfit(t, ln_y, 1)
    if slope >= 0.0:
        return 0.1 * (centers[-1] - centers[0])
    return float(-1.0 / slope)
