"""Batch command-line interface.

Subcommands: ``simulate`` (model curves), ``calibrate`` (normalize a
measured detector response), ``generate`` (synthetic coincidence data),
``fit`` (jump-timescale fit with JSON report, residual CSV and figure).
Exit codes: 0 success, 2 configuration or input error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io
from .cascade import pair_correlation, steady_state
from .config import RunConfig, load_config, parse_time
from .errors import (
    AdiabaticityViolation,
    ConfigError,
    EmptyHistogram,
    NonFiniteInput,
    QJumpError,
)
from .fitting import (
    FitSpec,
    bootstrap_uncertainty,
    fit,
    initial_guesses,
    model_curve,
    tail_decay_estimate,
    window_mask,
)
from .instrument import gaussian_response, monitor, normalize_response
from .synth import sample_events

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

# errors that mean "your inputs are wrong" rather than "the computation failed"
_INPUT_ERRORS = (
    ConfigError,
    EmptyHistogram,
    NonFiniteInput,
    AdiabaticityViolation,
    ValueError,
    OSError,
)


def _load_response(token: str, bin_width: float, cfg: RunConfig):
    """A response CSV path, or 'gaussian:<fwhm with unit>' built on the fly."""
    if token.startswith("gaussian:"):
        fwhm = parse_time(token.split(":", 1)[1], key="gaussian response fwhm")
        return gaussian_response(fwhm, bin_width), None
    g = io.read_response(
        token,
        subtract_floor=cfg.calibrate_subtract_floor,
        floor_window=cfg.calibrate_floor_window,
    )
    return g, io.sha256_file(token)


def _figure_path(out_path: str) -> Path:
    return Path(out_path).with_suffix(".png")


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    p = cfg.require_cascade()
    m = cfg.require_monitor()
    if cfg.simulate_grid is None:
        raise ConfigError("simulate needs a [simulate] section with t_min, t_max, step")
    t_min, t_max, step = cfg.simulate_grid
    n = int(np.floor((t_max - t_min) / step)) + 1
    grid = t_min + step * np.arange(n)
    curve = pair_correlation(p, grid, conditional=args.conditional)
    columns = {
        "pair_correlation": curve.values,
        "monitor": np.asarray(monitor(grid, m)),
    }
    io.write_curves(args.output, grid, columns)
    if not args.no_figure:
        from . import plots

        plots.save_curves_figure(_figure_path(args.output), grid, columns)
    rho22 = steady_state(p).population(2)
    print(f"steady-state upper population: {rho22:.6g}")
    print(f"conditional decay rate: {p.conditional_decay_rate:.6g} 1/s")
    print(f"wrote {args.output}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = load_config(args.config) if args.config else _default_config()
    raw = io.read_histogram(args.response_csv)
    g = normalize_response(
        raw,
        subtract_floor=cfg.calibrate_subtract_floor,
        floor_window=cfg.calibrate_floor_window,
    )
    io.write_response(args.output, g)
    if not args.no_figure:
        from . import plots

        plots.save_response_figure(_figure_path(args.output), g)
    weights_raw = raw.counts / raw.counts.sum()
    centroid = float(np.dot(weights_raw, raw.centers))
    print(f"centroid: {centroid / 1e-12:.2f} ps (removed; offsets are centroid-relative)")
    print(f"fwhm: {g.fwhm() / 1e-12:.2f} ps")
    print(f"support: {g.offsets.size} bins of {g.bin_width / 1e-12:.2f} ps")
    print(f"wrote {args.output}")
    return EXIT_OK


def cmd_generate(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.seed
    synth = cfg.synth_config(io.derive_seed(seed, "generate"))
    g, _ = _load_response(args.response, synth.bin_width, cfg)
    hist = sample_events(synth, g)
    io.write_histogram(args.output, hist)
    if not args.no_figure:
        from . import plots

        plots.save_histogram_figure(_figure_path(args.output), hist, title="synthetic coincidences")
    print(f"events binned: {hist.total} over {hist.counts.size} bins")
    print(f"wrote {args.output}")
    return EXIT_OK


def _build_fit_spec(cfg: RunConfig, hist, oversample_override: int | None) -> FitSpec:
    settings = cfg.fit_settings
    auto = initial_guesses(hist)
    fixed = dict(settings.fixed)
    if "tau" not in settings.free and "tau" not in fixed:
        # the stated default: hold tau at a tail-only decay estimate
        fixed["tau"] = tail_decay_estimate(hist, dt0=auto["dt0"], floor=auto["Y0"])
    for name in ("A", "Y0", "dt0", "alpha"):
        if name not in settings.free and name not in fixed:
            raise ConfigError(
                f"[fit] parameter {name} is not free; give it a fixed value in the config"
            )
    initial = {}
    for name in settings.free:
        if name in settings.initial:
            initial[name] = settings.initial[name]
        else:
            initial[name] = auto[name]
    return FitSpec(
        free=settings.free,
        initial=initial,
        fixed=fixed,
        weight_mode=settings.weight_mode,
        fit_window=settings.window,
        oversample=oversample_override if oversample_override else settings.oversample,
    )


def cmd_fit(args) -> int:
    cfg = load_config(args.config)
    hist = io.read_histogram(args.data_csv)
    g, response_digest = _load_response(args.response, hist.bin_width, cfg)
    spec = _build_fit_spec(cfg, hist, args.oversample)

    result = fit(hist, g, spec)
    bootstrap_spreads = None
    bootstrap_failed = None
    if cfg.fit_settings.bootstrap_resamples:
        seed = args.seed if args.seed is not None else cfg.seed
        boot = bootstrap_uncertainty(
            hist, g, spec, cfg.fit_settings.bootstrap_resamples, io.derive_seed(seed, "bootstrap")
        )
        bootstrap_spreads = boot.spreads
        bootstrap_failed = boot.n_failed

    mask = window_mask(hist, spec.fit_window)
    fitted = model_curve(result.estimates, g, hist.centers[mask], oversample=spec.oversample)
    digests = {"data_sha256": io.sha256_file(args.data_csv)}
    if response_digest is not None:
        digests["response_sha256"] = response_digest
    report = io.fit_report(
        result,
        spec,
        digests=digests,
        n_bins=int(mask.sum()),
        bootstrap_spreads=bootstrap_spreads,
        bootstrap_failed=bootstrap_failed,
    )
    io.write_report(args.output, report)
    residual_path = args.residuals or str(Path(args.output).with_suffix("")) + "_residuals.csv"
    io.write_residuals(residual_path, hist, fitted, mask)
    if not args.no_figure:
        from . import plots

        plots.save_fit_figure(
            _figure_path(args.output),
            hist,
            mask,
            fitted,
            rise_time_ps=report["rise_time_ps"],
            rise_time_err_ps=report["rise_time_err_ps"],
        )
    alpha_ps = result.estimates["alpha"] / 1e-12
    err_ps = result.errors.get("alpha", 0.0) / 1e-12
    print(f"alpha: {alpha_ps:.3g} ± {err_ps:.3g} ps")
    print(f"rise time (10-90): {report['rise_time_ps']:.3g} ± {report['rise_time_err_ps']:.3g} ps")
    print(f"chi2/dof: {result.reduced_chi2:.4f} ({result.chi2:.1f}/{result.dof})")
    print(f"wrote {args.output} and {residual_path}")
    return EXIT_OK


def _default_config() -> RunConfig:
    from .config import FitSettings

    return RunConfig(
        seed=1,
        cascade=None,
        monitor=None,
        synth_settings=None,
        fit_settings=FitSettings(
            free=("A", "Y0", "dt0", "alpha"),
            fixed={},
            weight_mode="poisson",
            oversample=4,
            window=None,
            initial={},
            bootstrap_resamples=0,
        ),
        simulate_grid=None,
        calibrate_floor_window=2e-9,
        calibrate_subtract_floor=True,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qjump",
        description="cascade photon-pair simulation and jump-timescale fitting",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="write pair-correlation and monitor curves")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("-o", "--output", required=True)
    p_sim.add_argument(
        "--conditional",
        choices=("analytic", "numeric"),
        default="analytic",
        help="closed-form conditional decay, or full driven evolution",
    )
    p_sim.add_argument("--no-figure", action="store_true")
    p_sim.set_defaults(func=cmd_simulate)

    p_cal = sub.add_parser("calibrate", help="normalize a measured detector response")
    p_cal.add_argument("response_csv")
    p_cal.add_argument("-o", "--output", required=True)
    p_cal.add_argument("--config")
    p_cal.add_argument("--no-figure", action="store_true")
    p_cal.set_defaults(func=cmd_calibrate)

    p_gen = sub.add_parser("generate", help="generate a synthetic coincidence histogram")
    p_gen.add_argument("response", help="response CSV, or gaussian:<fwhm> (e.g. gaussian:50ps)")
    p_gen.add_argument("-o", "--output", required=True)
    p_gen.add_argument("--config", required=True)
    p_gen.add_argument("--seed", type=int)
    p_gen.add_argument("--no-figure", action="store_true")
    p_gen.set_defaults(func=cmd_generate)

    p_fit = sub.add_parser("fit", help="fit the convolved jump model to a histogram")
    p_fit.add_argument("data_csv")
    p_fit.add_argument("response", help="response CSV, or gaussian:<fwhm>")
    p_fit.add_argument("--config", required=True)
    p_fit.add_argument("-o", "--output", required=True)
    p_fit.add_argument("--residuals")
    p_fit.add_argument("--seed", type=int)
    p_fit.add_argument("--oversample", type=int)
    p_fit.add_argument("--no-figure", action="store_true")
    p_fit.set_defaults(func=cmd_fit)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except QJumpError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
