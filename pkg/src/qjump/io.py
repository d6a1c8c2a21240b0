"""File formats: histogram/response CSV, fit report JSON, seed derivation.

Histogram CSV: header ``bin_center_ps,counts``, one row per bin, centers
strictly increasing on a uniform grid, counts non-negative integers.
Normalized response CSV: header ``offset_ps,weight``.  Times inside the
package are seconds; only the files speak picoseconds.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .fitting import FitResult, FitSpec
from .instrument import DetectorResponse, Histogram, normalize_response

PS = 1e-12

HISTOGRAM_HEADER = ["bin_center_ps", "counts"]
RESPONSE_HEADER = ["offset_ps", "weight"]
RESIDUALS_HEADER = ["bin_center_ps", "observed", "fitted", "residual"]


def _read_rows(path) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            rows = [row for row in reader if row]
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise ConfigError(f"{path} is empty")
    return [c.strip() for c in rows[0]], rows[1:]


def read_histogram(path) -> Histogram:
    header, rows = _read_rows(path)
    if header != HISTOGRAM_HEADER:
        raise ConfigError(
            f"{path}: expected header {','.join(HISTOGRAM_HEADER)!r}, got {','.join(header)!r}"
        )
    if len(rows) < 2:
        raise ConfigError(f"{path}: need at least two bins")
    try:
        centers = np.array([float(r[0]) for r in rows]) * PS
        counts = np.array([int(r[1]) for r in rows], dtype=np.int64)
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"{path}: malformed row: {exc}") from exc
    steps = np.diff(centers)
    if np.any(steps <= 0.0):
        raise ConfigError(f"{path}: bin centers must be strictly increasing")
    if not np.allclose(steps, steps[0], rtol=1e-6, atol=0.0):
        raise ConfigError(f"{path}: bin centers must be uniformly spaced")
    if np.any(counts < 0):
        raise ConfigError(f"{path}: counts must be non-negative")
    return Histogram(bin_width=float(steps.mean()), t_start=float(centers[0]), counts=counts)


def write_histogram(path, hist: Histogram) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTOGRAM_HEADER)
        for center, count in zip(hist.centers, hist.counts):
            writer.writerow([f"{center / PS:.6f}", int(count)])


def read_response(path, **normalize_kwargs) -> DetectorResponse:
    """Load a detector response from either file flavor.

    A ``offset_ps,weight`` file is taken as already normalized; a raw
    ``bin_center_ps,counts`` calibration histogram is normalized on the fly.
    """
    header, rows = _read_rows(path)
    if header == HISTOGRAM_HEADER:
        return normalize_response(read_histogram(path), **normalize_kwargs)
    if header != RESPONSE_HEADER:
        raise ConfigError(
            f"{path}: expected header {','.join(RESPONSE_HEADER)!r} or "
            f"{','.join(HISTOGRAM_HEADER)!r}, got {','.join(header)!r}"
        )
    try:
        offsets = np.array([float(r[0]) for r in rows]) * PS
        weights = np.array([float(r[1]) for r in rows])
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"{path}: malformed row: {exc}") from exc
    if offsets.size == 0:
        raise ConfigError(f"{path}: empty response")
    if np.any(weights < 0.0) or abs(weights.sum() - 1.0) > 1e-9:
        raise ConfigError(f"{path}: weights must be non-negative and sum to 1")
    weights = weights / weights.sum()
    if offsets.size > 1:
        steps = np.diff(offsets)
        bin_width = float(steps.mean())
    else:
        bin_width = 1.0 * PS  # single delta bin; pitch is irrelevant
    return DetectorResponse(bin_width=bin_width, offsets=offsets, weights=weights)


def write_response(path, g: DetectorResponse) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESPONSE_HEADER)
        for offset, weight in zip(g.offsets, g.weights):
            writer.writerow([f"{offset / PS:.6f}", f"{weight:.12e}"])


def write_residuals(path, hist: Histogram, fitted: np.ndarray, mask: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESIDUALS_HEADER)
        centers = hist.centers[mask]
        observed = hist.counts[mask]
        for center, obs, model in zip(centers, observed, fitted):
            writer.writerow(
                [
                    f"{center / PS:.6f}",
                    int(obs),
                    f"{model:.6f}",
                    f"{obs - model:.6f}",
                ]
            )


def write_curves(path, grid: np.ndarray, columns: dict[str, np.ndarray]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dt_ps", *columns])
        for i, dt in enumerate(grid):
            writer.writerow([f"{dt / PS:.6f}", *(f"{vals[i]:.9e}" for vals in columns.values())])


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def derive_seed(seed: int, label: str) -> int:
    """Stable per-subsystem stream seed from the single run seed."""
    digest = hashlib.sha256(f"{seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def fit_report(
    result: FitResult,
    spec: FitSpec,
    *,
    digests: dict[str, str],
    n_bins: int,
    bootstrap_spreads: dict[str, float] | None = None,
    bootstrap_failed: int | None = None,
) -> dict:
    """JSON-ready fit report; times are reported in picoseconds."""

    def in_ps(name: str, value: float) -> float:
        return value / PS if name in ("dt0", "alpha", "tau") else value

    estimates = {name: in_ps(name, value) for name, value in result.estimates.items()}
    errors = {name: in_ps(name, value) for name, value in result.errors.items()}
    scale = np.array([1.0 / PS if n in ("dt0", "alpha", "tau") else 1.0 for n in result.free])
    covariance = result.covariance * np.outer(scale, scale)
    report = {
        "model": "A * convolve(sigmoid((t-dt0)/alpha) * exp(-(t-dt0)/tau), response) + Y0",
        "estimates": estimates,
        "errors": errors,
        "free": list(result.free),
        "fixed": {k: in_ps(k, v) for k, v in spec.fixed.items()},
        "covariance": [[float(x) for x in row] for row in covariance],
        "covariance_units": "counts and ps",
        "rise_time_ps": result.rise_time / PS,
        "rise_time_err_ps": result.rise_time_err / PS,
        "chi2": result.chi2,
        "dof": result.dof,
        "reduced_chi2": result.reduced_chi2,
        "n_iter": result.n_iter,
        "converged": result.converged,
        "weight_mode": spec.weight_mode,
        "oversample": spec.oversample,
        "fit_window_ps": None
        if spec.fit_window is None
        else [spec.fit_window[0] / PS, spec.fit_window[1] / PS],
        "n_bins": n_bins,
        "inputs": digests,
    }
    if bootstrap_spreads is not None:
        report["bootstrap_spreads"] = {
            name: in_ps(name, value) for name, value in bootstrap_spreads.items()
        }
        report["bootstrap_failed"] = bootstrap_failed
    return report


def write_report(path, report: dict) -> None:
    with open(path, "w") as fh:
        json.dump(_round_floats(report), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _round_floats(obj):
    """Clamp float noise below output precision so reports stay byte-stable."""
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return repr(obj)
        return float(f"{obj:.12g}")
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj
