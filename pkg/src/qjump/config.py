"""Sectioned key-value run configuration.

Every time-valued key must carry an explicit unit suffix (ps, ns, us, ms,
s); bare numbers for times are rejected because the quantities here span
four orders of magnitude and silent unit mistakes are the main failure
mode.  Angular frequencies and rates are plain numbers in rad/s and 1/s;
beat frequencies are plain Hz.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass

from .cascade import BarePumpParams, CascadeParams, effective_params
from .errors import ConfigError, QJumpError
from .fitting import PARAM_NAMES
from .instrument import MonitorParams
from .synth import BeatParams, SynthConfig

# factors to picoseconds are exact in binary, so equivalent values written
# in different units parse to bit-identical seconds
_TIME_UNITS_PS = {
    "ps": 1.0,
    "ns": 1e3,
    "us": 1e6,
    "ms": 1e9,
    "s": 1e12,
}

_TIME_RE = re.compile(r"^\s*([-+]?[0-9.]+(?:[eE][-+]?[0-9]+)?)\s*([a-zA-Z]+)\s*$")


def parse_time(text: str, *, key: str = "") -> float:
    """'14 ns' -> 1.4e-8; a bare number or unknown unit raises ConfigError."""
    match = _TIME_RE.match(text)
    if not match:
        raise ConfigError(
            f"time value {text!r}{f' for {key}' if key else ''} must be "
            f"'<number> <unit>' with unit one of {sorted(_TIME_UNITS_PS)}"
        )
    number, unit = match.groups()
    if unit not in _TIME_UNITS_PS:
        raise ConfigError(
            f"unknown time unit {unit!r} in {text!r} (use {sorted(_TIME_UNITS_PS)})"
        )
    try:
        value = float(number)
    except ValueError as exc:
        raise ConfigError(f"bad number in time value {text!r}") from exc
    return (value * _TIME_UNITS_PS[unit]) * 1e-12


@dataclass(frozen=True)
class FitSettings:
    """Raw [fit] section; turned into a FitSpec once the data is known."""

    free: tuple[str, ...]
    fixed: dict[str, float]
    weight_mode: str
    oversample: int
    window: tuple[float, float] | None
    initial: dict[str, float]
    bootstrap_resamples: int


@dataclass(frozen=True)
class RunConfig:
    seed: int
    cascade: CascadeParams | None
    monitor: MonitorParams | None
    synth_settings: dict | None
    fit_settings: FitSettings
    simulate_grid: tuple[float, float, float] | None
    calibrate_floor_window: float
    calibrate_subtract_floor: bool

    def require_cascade(self) -> CascadeParams:
        if self.cascade is None:
            raise ConfigError("this command needs a [cascade] or [pump] section")
        return self.cascade

    def require_monitor(self) -> MonitorParams:
        if self.monitor is None:
            raise ConfigError("this command needs a [monitor] section")
        return self.monitor

    def synth_config(self, seed: int) -> SynthConfig:
        if self.synth_settings is None or self.monitor is None:
            raise ConfigError("this command needs [synth] and [monitor] sections")
        s = self.synth_settings
        beat = None
        if s["beat_amplitude"] is not None:
            beat = BeatParams(
                amplitude=s["beat_amplitude"],
                frequency=s["beat_frequency"],
                phase=s["beat_phase"],
            )
        try:
            return SynthConfig(
                monitor=self.monitor,
                dt0=s["dt0"],
                n_pairs=s["n_pairs"],
                background_rate=s["background_rate"],
                window=(s["window_start"], s["window_end"]),
                bin_width=s["bin_width"],
                seed=seed,
                beat=beat,
            )
        except ValueError as exc:
            raise ConfigError(f"invalid [synth] section: {exc}") from exc


class _Section:
    """Typed accessors over one configparser section."""

    def __init__(self, name: str, proxy):
        self.name = name
        self.proxy = proxy

    def has(self, key: str) -> bool:
        return key in self.proxy

    def time(self, key: str, default: float | None = None) -> float | None:
        if key not in self.proxy:
            return default
        return parse_time(self.proxy[key], key=f"[{self.name}] {key}")

    def number(self, key: str, default: float | None = None) -> float | None:
        if key not in self.proxy:
            return default
        text = self.proxy[key]
        try:
            return float(text)
        except ValueError as exc:
            raise ConfigError(f"[{self.name}] {key} = {text!r} is not a number") from exc

    def integer(self, key: str, default: int | None = None) -> int | None:
        if key not in self.proxy:
            return default
        text = self.proxy[key]
        try:
            return int(text)
        except ValueError as exc:
            raise ConfigError(f"[{self.name}] {key} = {text!r} is not an integer") from exc

    def boolean(self, key: str, default: bool) -> bool:
        if key not in self.proxy:
            return default
        text = self.proxy[key].strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"[{self.name}] {key} = {self.proxy[key]!r} is not a boolean")

    def text(self, key: str, default: str | None = None) -> str | None:
        return self.proxy.get(key, default)


def _build_cascade(parser) -> CascadeParams | None:
    has_cascade = parser.has_section("cascade")
    has_pump = parser.has_section("pump")
    if has_cascade and has_pump:
        raise ConfigError("give either a [cascade] or a [pump] section, not both")
    try:
        if has_cascade:
            sec = _Section("cascade", parser["cascade"])
            return CascadeParams(
                delta_eff=_required(sec, "delta_eff"),
                omega_eff=_required(sec, "omega_eff"),
                gamma23=_required(sec, "gamma23"),
                gamma30=_required(sec, "gamma30"),
                e2=sec.number("e2", 0.0),
                e3=sec.number("e3", 0.0),
            )
        if has_pump:
            sec = _Section("pump", parser["pump"])
            bare = BarePumpParams(
                omega01=_required(sec, "omega01"),
                omega12=_required(sec, "omega12"),
                delta1=_required(sec, "delta1"),
                delta2=_required(sec, "delta2"),
            )
            return effective_params(
                bare,
                gamma23=_required(sec, "gamma23"),
                gamma30=_required(sec, "gamma30"),
                e2=sec.number("e2", 0.0),
                e3=sec.number("e3", 0.0),
                adiabaticity_factor=sec.number("adiabaticity_factor", 5.0),
            )
    except QJumpError:
        raise
    except ValueError as exc:
        raise ConfigError(f"invalid cascade parameters: {exc}") from exc
    return None


def _required(sec: _Section, key: str) -> float:
    value = sec.number(key)
    if value is None:
        raise ConfigError(f"[{sec.name}] is missing required key {key!r}")
    return value


def _build_fit(parser) -> FitSettings:
    if not parser.has_section("fit"):
        return FitSettings(
            free=("A", "Y0", "dt0", "alpha"),
            fixed={},
            weight_mode="poisson",
            oversample=4,
            window=None,
            initial={},
            bootstrap_resamples=0,
        )
    sec = _Section("fit", parser["fit"])
    free_text = sec.text("free", "A, Y0, dt0, alpha")
    free = tuple(name.strip() for name in free_text.split(",") if name.strip())
    for name in free:
        if name not in PARAM_NAMES:
            raise ConfigError(f"[fit] free parameter {name!r} is not one of {PARAM_NAMES}")
    weight_mode = sec.text("weight_mode", "poisson")
    if weight_mode not in ("poisson", "uniform"):
        raise ConfigError(f"[fit] weight_mode must be poisson or uniform, got {weight_mode!r}")
    lo = sec.time("window_start")
    hi = sec.time("window_end")
    if (lo is None) != (hi is None):
        raise ConfigError("[fit] window_start and window_end must be given together")
    initial = {}
    fixed = {}
    for name in PARAM_NAMES:
        is_time = name in ("dt0", "alpha", "tau")
        key = f"{name}_init"
        if sec.has(key):
            initial[name] = sec.time(key) if is_time else sec.number(key)
        if sec.has(name):
            if name in free:
                raise ConfigError(f"[fit] {name} is free; use {key} for its starting value")
            fixed[name] = sec.time(name) if is_time else sec.number(name)
    oversample = sec.integer("oversample", 4)
    if oversample < 1:
        raise ConfigError("[fit] oversample must be >= 1")
    n_boot = sec.integer("bootstrap_resamples", 0)
    if n_boot < 0:
        raise ConfigError("[fit] bootstrap_resamples must be >= 0")
    return FitSettings(
        free=free,
        fixed=fixed,
        weight_mode=weight_mode,
        oversample=oversample,
        window=None if lo is None else (lo, hi),
        initial=initial,
        bootstrap_resamples=n_boot,
    )


def load_config(path) -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc

    seed = 1
    if parser.has_section("run"):
        seed = _Section("run", parser["run"]).integer("seed", 1)

    monitor = None
    if parser.has_section("monitor"):
        sec = _Section("monitor", parser["monitor"])
        alpha = sec.time("alpha")
        tau = sec.time("tau")
        if alpha is None or tau is None:
            raise ConfigError("[monitor] needs both alpha and tau (with units)")
        try:
            monitor = MonitorParams(alpha=alpha, tau=tau)
        except ValueError as exc:
            raise ConfigError(f"invalid [monitor] section: {exc}") from exc

    synth_settings = None
    if parser.has_section("synth"):
        sec = _Section("synth", parser["synth"])
        for key in ("dt0", "window_start", "window_end", "bin_width"):
            if not sec.has(key):
                raise ConfigError(f"[synth] is missing required key {key!r}")
        n_pairs = sec.integer("n_pairs")
        if n_pairs is None:
            raise ConfigError("[synth] is missing required key 'n_pairs'")
        synth_settings = {
            "dt0": sec.time("dt0"),
            "n_pairs": n_pairs,
            "background_rate": sec.number("background_rate", 0.0),
            "window_start": sec.time("window_start"),
            "window_end": sec.time("window_end"),
            "bin_width": sec.time("bin_width"),
            "beat_amplitude": sec.number("beat_amplitude"),
            "beat_frequency": sec.number("beat_frequency"),
            "beat_phase": sec.number("beat_phase", 0.0),
        }
        if (synth_settings["beat_amplitude"] is None) != (
            synth_settings["beat_frequency"] is None
        ):
            raise ConfigError("[synth] beat_amplitude and beat_frequency go together")

    simulate_grid = None
    if parser.has_section("simulate"):
        sec = _Section("simulate", parser["simulate"])
        t_min = sec.time("t_min")
        t_max = sec.time("t_max")
        step = sec.time("step")
        if t_min is None or t_max is None or step is None:
            raise ConfigError("[simulate] needs t_min, t_max and step (with units)")
        if not (step > 0.0 and t_max > t_min):
            raise ConfigError("[simulate] needs step > 0 and t_max > t_min")
        if not math.isfinite(t_min + t_max + step):
            raise ConfigError("[simulate] grid values must be finite")
        simulate_grid = (t_min, t_max, step)

    floor_window = 2e-9
    subtract_floor = True
    if parser.has_section("calibrate"):
        sec = _Section("calibrate", parser["calibrate"])
        floor_window = sec.time("floor_window", 2e-9)
        subtract_floor = sec.boolean("subtract_floor", True)

    return RunConfig(
        seed=seed,
        cascade=_build_cascade(parser),
        monitor=monitor,
        synth_settings=synth_settings,
        fit_settings=_build_fit(parser),
        simulate_grid=simulate_grid,
        calibrate_floor_window=floor_window,
        calibrate_subtract_floor=subtract_floor,
    )
