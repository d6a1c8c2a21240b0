"""Effective three-level cascade dynamics.

The emitter is modeled in the basis {|0>, |2>, |3>} (ground, upper, and
intermediate level of the cascade; the far-detuned pump level is
adiabatically eliminated).  A coherent two-photon drive couples |0> and |2>,
spontaneous emission takes |2> -> |3> -> |0>.  The coincidence observable
factorizes into the steady-state population of |2> times the population of
|3> conditioned on the first emission, which makes the two-time pair
correlation a product of a scalar and a conditional decay curve.

Rate convention
---------------
``gamma23`` and ``gamma30`` are population decay rates (1/s) of |2> and |3>.
The dissipator is written in the ``2 L rho L+ - {L+L, rho}`` form, so the
internal channel coefficients are half the population rates:

* channel |2> -> |3>: ``gamma23 / 2``
* channel |3> -> |0>: ``(gamma30 + gamma23 / 2) / 2``

The second coefficient is deliberately calibrated so that the conditional
population of |3> decays as ``exp(-(gamma30 + gamma23/2) * dt)``, the
closed form used throughout the fit layer (``conditional_pop33``).  This is
the single place where the convention is fixed; everything else, including
the numerical integrator and the steady-state solver, inherits it through
``lindblad_rhs``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (
    AdiabaticityViolation,
    DegenerateGenerator,
    IntegrationDivergence,
    NonFiniteInput,
)

HBAR = 1.054571817e-34  # J s

# basis ordering: index 0 = |0>, index 1 = |2>, index 2 = |3>
LEVELS = (0, 2, 3)
_IDX = {0: 0, 2: 1, 3: 2}

# integrator tolerances; tight enough that step-halving changes nothing
# above 1e-8 and the analytic/numeric agreement holds at 1e-6
_RTOL = 1e-10
_ATOL = 1e-12

_HERMITICITY_TOL = 1e-12
_TRACE_TOL = 1e-9
_DIAG_TOL = 1e-9
_DRIFT_TOL = 1e-6


def _require_finite(**fields):
    for name, value in fields.items():
        if not math.isfinite(value):
            raise NonFiniteInput(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class BarePumpParams:
    """Bare two-step pump: Rabi frequencies and detunings, all in rad/s."""

    omega01: float
    omega12: float
    delta1: float
    delta2: float

    def __post_init__(self):
        _require_finite(
            omega01=self.omega01,
            omega12=self.omega12,
            delta1=self.delta1,
            delta2=self.delta2,
        )
        if self.delta1 == 0.0:
            raise AdiabaticityViolation("delta1 must be nonzero")


@dataclass(frozen=True)
class CascadeParams:
    """Effective cascade parameters.

    delta_eff, omega_eff are angular frequencies (rad/s); gamma23, gamma30
    are population decay rates (1/s); e2, e3 are level energies (J) that
    only contribute global coherence phases.
    """

    delta_eff: float
    omega_eff: float
    gamma23: float
    gamma30: float
    e2: float = 0.0
    e3: float = 0.0

    def __post_init__(self):
        _require_finite(
            delta_eff=self.delta_eff,
            omega_eff=self.omega_eff,
            gamma23=self.gamma23,
            gamma30=self.gamma30,
            e2=self.e2,
            e3=self.e3,
        )
        if self.gamma23 <= 0.0:
            raise ValueError(f"gamma23 must be positive, got {self.gamma23}")
        if self.gamma30 <= 0.0:
            raise ValueError(f"gamma30 must be positive, got {self.gamma30}")

    @property
    def conditional_decay_rate(self):
        """Decay rate of the conditional |3> population (1/s)."""
        return self.gamma30 + 0.5 * self.gamma23


def effective_params(
    bare: BarePumpParams,
    *,
    gamma23: float,
    gamma30: float,
    e2: float = 0.0,
    e3: float = 0.0,
    adiabaticity_factor: float = 5.0,
) -> CascadeParams:
    """Map bare pump parameters onto the effective two-level drive.

    The eliminated intermediate level shifts the two-photon detuning by the
    differential light shift and produces the effective Rabi frequency
    ``-omega01 * omega12 / (2 * delta1)``.  Elimination requires
    ``|delta1| >= adiabaticity_factor * max(|omega01|, |omega12|)``.
    """
    _require_finite(adiabaticity_factor=adiabaticity_factor)
    threshold = adiabaticity_factor * max(abs(bare.omega01), abs(bare.omega12))
    if abs(bare.delta1) < threshold:
        raise AdiabaticityViolation(
            f"|delta1|={abs(bare.delta1):.3e} below adiabaticity threshold "
            f"{threshold:.3e} (factor {adiabaticity_factor})"
        )
    delta_eff = (
        bare.delta2
        + bare.omega01**2 / (4.0 * bare.delta1)
        - bare.omega12**2 / (4.0 * bare.delta1)
    )
    omega_eff = -bare.omega01 * bare.omega12 / (2.0 * bare.delta1)
    return CascadeParams(
        delta_eff=delta_eff,
        omega_eff=omega_eff,
        gamma23=gamma23,
        gamma30=gamma30,
        e2=e2,
        e3=e3,
    )


class DensityMatrix:
    """Validated 3x3 Hermitian unit-trace state over {|0>, |2>, |3>}."""

    __slots__ = ("matrix",)

    def __init__(self, matrix):
        m = np.array(matrix, dtype=complex)
        if m.shape != (3, 3):
            raise ValueError(f"expected a 3x3 matrix, got shape {m.shape}")
        if not np.all(np.isfinite(m.view(float))):
            raise NonFiniteInput("density matrix contains non-finite entries")
        if np.max(np.abs(m - m.conj().T)) > _HERMITICITY_TOL:
            raise ValueError("density matrix is not Hermitian within 1e-12")
        if abs(m.trace().real - 1.0) > _TRACE_TOL or abs(m.trace().imag) > _TRACE_TOL:
            raise ValueError(f"density matrix trace {m.trace()} is not 1 within 1e-9")
        diag = np.diag(m)
        if np.max(np.abs(diag.imag)) > _DIAG_TOL:
            raise ValueError("diagonal entries must be real")
        if np.min(diag.real) < -_DIAG_TOL or np.max(diag.real) > 1.0 + _DIAG_TOL:
            raise ValueError("diagonal entries must lie in [0, 1]")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def __setattr__(self, name, value):
        raise AttributeError("DensityMatrix is immutable")

    @classmethod
    def pure(cls, level: int) -> "DensityMatrix":
        """Projector onto one of the physical levels 0, 2 or 3."""
        if level not in _IDX:
            raise ValueError(f"level must be one of {LEVELS}, got {level}")
        m = np.zeros((3, 3), dtype=complex)
        m[_IDX[level], _IDX[level]] = 1.0
        return cls(m)

    def population(self, level: int) -> float:
        if level not in _IDX:
            raise ValueError(f"level must be one of {LEVELS}, got {level}")
        return float(self.matrix[_IDX[level], _IDX[level]].real)

    def __repr__(self):
        pops = ", ".join(f"p{lv}={self.population(lv):.6g}" for lv in LEVELS)
        return f"DensityMatrix({pops})"


def _hamiltonian(p: CascadeParams) -> np.ndarray:
    """Effective Hamiltonian divided by hbar (rad/s)."""
    h = np.zeros((3, 3), dtype=complex)
    h[1, 1] = p.delta_eff + p.e2 / HBAR
    h[2, 2] = p.e3 / HBAR
    h[0, 1] = h[1, 0] = 0.5 * p.omega_eff
    return h


def _channels(p: CascadeParams):
    """Jump operators and their half-rate coefficients.

    See the module docstring: the |3> -> |0> coefficient is calibrated to
    reproduce the conditional decay rate gamma30 + gamma23/2.
    """
    l23 = np.zeros((3, 3), dtype=complex)
    l23[2, 1] = 1.0  # |3><2|
    l30 = np.zeros((3, 3), dtype=complex)
    l30[0, 2] = 1.0  # |0><3|
    return ((0.5 * p.gamma23, l23), (0.5 * p.conditional_decay_rate, l30))


def _rhs_matrix(rho: np.ndarray, p: CascadeParams) -> np.ndarray:
    h = _hamiltonian(p)
    out = -1j * (h @ rho - rho @ h)
    for k, op in _channels(p):
        proj = op.conj().T @ op
        out += k * (2.0 * (op @ rho @ op.conj().T) - proj @ rho - rho @ proj)
    return out


def lindblad_rhs(rho, p: CascadeParams) -> np.ndarray:
    """Time derivative of the state under the cascade master equation.

    Accepts a DensityMatrix or a raw 3x3 array; returns a traceless
    Hermitian 3x3 array (a derivative, not a state).
    """
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    if m.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {m.shape}")
    return _rhs_matrix(m, p)


def _check_evolved(m: np.ndarray) -> np.ndarray:
    """Re-assert hermiticity and trace after integration."""
    drift = abs(m.trace().real - 1.0) + abs(m.trace().imag)
    if drift > _DRIFT_TOL:
        raise IntegrationDivergence(f"trace drifted by {drift:.3e} during evolution")
    sym = 0.5 * (m + m.conj().T)
    if np.max(np.abs(sym - m)) > 1e-8:
        raise IntegrationDivergence("hermiticity lost during evolution")
    return sym


def evolve(
    rho0: DensityMatrix,
    p: CascadeParams,
    t_span: float,
    dt_max: float | None = None,
) -> DensityMatrix:
    """Propagate a state for ``t_span`` seconds with an adaptive RK scheme."""
    if t_span < 0.0:
        raise ValueError("t_span must be non-negative")
    if dt_max is not None and dt_max <= 0.0:
        raise ValueError("dt_max must be positive")
    if t_span == 0.0:
        return rho0

    def rhs(_t, y):
        return _rhs_matrix(y.reshape(3, 3), p).ravel()

    sol = solve_ivp(
        rhs,
        (0.0, t_span),
        rho0.matrix.ravel(),
        method="DOP853",
        rtol=_RTOL,
        atol=_ATOL,
        max_step=dt_max if dt_max is not None else np.inf,
    )
    if not sol.success:
        raise IntegrationDivergence(f"integrator failed: {sol.message}")
    return DensityMatrix(_check_evolved(sol.y[:, -1].reshape(3, 3)))


def evolve_populations(
    rho0: DensityMatrix,
    p: CascadeParams,
    times,
) -> np.ndarray:
    """Populations (columns |0>, |2>, |3>) at the requested times (sorted, >= 0)."""
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        return np.zeros((0, 3))
    if np.any(times < 0.0) or np.any(np.diff(times) < 0.0):
        raise ValueError("times must be sorted and non-negative")
    unique, inverse = np.unique(times, return_inverse=True)

    def rhs(_t, y):
        return _rhs_matrix(y.reshape(3, 3), p).ravel()

    t_end = float(unique[-1])
    if t_end == 0.0:
        return np.tile(np.diag(rho0.matrix).real, (times.size, 1))
    sol = solve_ivp(
        rhs,
        (0.0, t_end),
        rho0.matrix.ravel(),
        method="DOP853",
        rtol=_RTOL,
        atol=_ATOL,
        t_eval=unique,
    )
    if not sol.success:
        raise IntegrationDivergence(f"integrator failed: {sol.message}")
    states = sol.y.T.reshape(-1, 3, 3)
    pops = np.stack(
        [states[:, 0, 0].real, states[:, 1, 1].real, states[:, 2, 2].real], axis=1
    )
    return pops[inverse]


def conditional_pop33(dt, p: CascadeParams):
    """Population of |3> a time ``dt`` after the first cascade emission.

    Zero for dt < 0 (the second photon cannot precede the first), an
    exponential with rate ``gamma30 + gamma23/2`` for dt >= 0.  Scalar in,
    scalar out; arrays are mapped elementwise.
    """
    rate = p.conditional_decay_rate
    dt_arr = np.asarray(dt, dtype=float)
    out = np.where(dt_arr < 0.0, 0.0, np.exp(-rate * np.maximum(dt_arr, 0.0)))
    if np.isscalar(dt) or dt_arr.ndim == 0:
        return float(out)
    return out


def conditional_pop33_numeric(
    p: CascadeParams,
    dts,
    include_drive: bool = False,
) -> np.ndarray:
    """Conditional |3> population from direct integration of the master equation.

    With ``include_drive=False`` the coherent drive is switched off during
    the conditional evolution, which is the regime in which the closed form
    ``conditional_pop33`` is exact.  With ``include_drive=True`` the full
    generator is used and the curve picks up re-excitation corrections.
    """
    dts = np.asarray(dts, dtype=float)
    out = np.zeros(dts.shape, dtype=float)
    pos = dts >= 0.0
    if not np.any(pos):
        return out
    p_cond = (
        p
        if include_drive
        else CascadeParams(
            delta_eff=p.delta_eff,
            omega_eff=0.0,
            gamma23=p.gamma23,
            gamma30=p.gamma30,
            e2=p.e2,
            e3=p.e3,
        )
    )
    t_pos = dts[pos]
    order = np.argsort(t_pos)
    pops = evolve_populations(DensityMatrix.pure(3), p_cond, t_pos[order])
    restored = np.empty_like(t_pos)
    restored[order] = pops[:, 2]
    out[pos] = restored
    return out


def _liouvillian(p: CascadeParams) -> np.ndarray:
    """Vectorized generator M with M @ rho.ravel() == lindblad_rhs(rho).ravel()."""
    eye = np.eye(3, dtype=complex)
    h = _hamiltonian(p)
    m = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for k, op in _channels(p):
        proj = op.conj().T @ op
        m += k * (
            2.0 * np.kron(op, op.conj())
            - np.kron(proj, eye)
            - np.kron(eye, proj.T)
        )
    return m


def steady_state(p: CascadeParams) -> DensityMatrix:
    """Unique stationary state from the null space of the vectorized generator."""
    m = _liouvillian(p)
    _, svals, vh = np.linalg.svd(m)
    scale = svals[0] if svals[0] > 0.0 else 1.0
    if svals[-2] < 1e-10 * scale:
        raise DegenerateGenerator(
            f"generator null space is not one-dimensional "
            f"(singular values {svals[-2]:.3e}, {svals[-1]:.3e})"
        )
    rho = vh[-1].conj().reshape(3, 3)
    rho = 0.5 * (rho + rho.conj().T)
    tr = rho.trace().real
    if abs(tr) < 1e-12:
        raise DegenerateGenerator("null vector is traceless; no stationary state")
    rho = rho / tr
    eigs = np.linalg.eigvalsh(rho)
    if eigs.min() < -_DIAG_TOL:
        raise DegenerateGenerator(f"stationary state not positive (min eig {eigs.min():.3e})")
    # clip rounding-level negatives so the validated constructor accepts it
    rho = np.where(np.abs(rho) < 1e-15, 0.0, rho)
    return DensityMatrix(rho)


@dataclass(frozen=True)
class CorrelationCurve:
    """Pair-detection probability versus detection-time difference."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or grid.size < 2:
            raise ValueError("grid must be a 1-d array with at least two points")
        steps = np.diff(grid)
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise ValueError("grid must be uniformly spaced")
        if values.shape != grid.shape:
            raise ValueError("values must match grid shape")
        if np.any(values < 0.0):
            raise ValueError("correlation values must be non-negative")
        if np.any(values[grid < 0.0] != 0.0):
            raise ValueError("correlation must vanish for negative time differences")
        grid.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)


def pair_correlation(p: CascadeParams, grid, conditional: str = "analytic") -> CorrelationCurve:
    """Two-time pair correlation on a uniform time-difference grid.

    The curve is the steady-state population of |2> times the conditional
    |3> population.  ``conditional="analytic"`` uses the closed-form decay;
    ``"numeric"`` integrates the full driven master equation instead, which
    exposes the re-excitation corrections the closed form neglects.
    """
    grid = np.asarray(grid, dtype=float)
    rho22_ss = steady_state(p).population(2)
    if conditional == "analytic":
        cond = conditional_pop33(grid, p)
    elif conditional == "numeric":
        cond = conditional_pop33_numeric(p, grid, include_drive=True)
    else:
        raise ValueError(f"unknown conditional mode {conditional!r}")
    values = rho22_ss * np.asarray(cond, dtype=float)
    # clip integrator-level noise so the non-negativity invariant holds
    values[np.abs(values) < 1e-300] = 0.0
    np.clip(values, 0.0, None, out=values)
    return CorrelationCurve(grid=grid, values=values)
