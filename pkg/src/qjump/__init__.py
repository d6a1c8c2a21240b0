"""Cascade photon-pair simulator and jump-timescale fitter."""

from .cascade import (
    BarePumpParams,
    CascadeParams,
    CorrelationCurve,
    DensityMatrix,
    conditional_pop33,
    conditional_pop33_numeric,
    effective_params,
    evolve,
    lindblad_rhs,
    pair_correlation,
    steady_state,
)
from .errors import (
    AdiabaticityViolation,
    ConfigError,
    DegenerateGenerator,
    EmptyHistogram,
    GridMismatch,
    IntegrationDivergence,
    NoConvergence,
    NonFiniteInput,
    QJumpError,
    SingularNormalMatrix,
    WindowOverflow,
)
from .fitting import (
    BootstrapResult,
    FitResult,
    FitSpec,
    bootstrap_uncertainty,
    fit,
    initial_guesses,
    model_curve,
    tail_decay_estimate,
)
from .instrument import (
    DetectorResponse,
    Histogram,
    MonitorParams,
    convolve,
    extend_centers,
    gaussian_response,
    monitor,
    normalize_response,
    rise_time_10_90,
    rise_time_numeric,
    sigmoid,
)
from .synth import (
    BeatParams,
    SynthConfig,
    expected_curve,
    sample_events,
    true_coincidence_density,
)

__version__ = "0.1.0"

__all__ = [
    "AdiabaticityViolation",
    "BarePumpParams",
    "BeatParams",
    "BootstrapResult",
    "CascadeParams",
    "ConfigError",
    "CorrelationCurve",
    "DegenerateGenerator",
    "DensityMatrix",
    "DetectorResponse",
    "EmptyHistogram",
    "FitResult",
    "FitSpec",
    "GridMismatch",
    "Histogram",
    "IntegrationDivergence",
    "MonitorParams",
    "NoConvergence",
    "NonFiniteInput",
    "QJumpError",
    "SingularNormalMatrix",
    "SynthConfig",
    "WindowOverflow",
    "bootstrap_uncertainty",
    "conditional_pop33",
    "conditional_pop33_numeric",
    "convolve",
    "effective_params",
    "evolve",
    "expected_curve",
    "extend_centers",
    "fit",
    "gaussian_response",
    "initial_guesses",
    "lindblad_rhs",
    "model_curve",
    "monitor",
    "normalize_response",
    "pair_correlation",
    "rise_time_10_90",
    "rise_time_numeric",
    "sample_events",
    "sigmoid",
    "steady_state",
    "tail_decay_estimate",
    "true_coincidence_density",
]
