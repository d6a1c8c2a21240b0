import numpy as np
import pytest

from qjump import CascadeParams, MonitorParams, SynthConfig, gaussian_response


@pytest.fixture
def cascade_params():
    """Weakly driven cascade with a 27 ns lower-transition lifetime."""
    return CascadeParams(
        delta_eff=2 * np.pi * 9e6,
        omega_eff=2 * np.pi * 3.75e6,
        gamma23=4.2e6,
        gamma30=1.0 / 27e-9,
    )


@pytest.fixture
def response_50ps():
    return gaussian_response(50e-12, 10e-12)


def make_synth(seed=1, alpha=4.7e-12, tau=7e-9, n_pairs=10**6, background=10.0,
               window=(0.0, 64e-9), bin_width=10e-12, beat=None, dt0=14e-9):
    return SynthConfig(
        monitor=MonitorParams(alpha=alpha, tau=tau),
        dt0=dt0,
        n_pairs=n_pairs,
        background_rate=background,
        window=window,
        bin_width=bin_width,
        seed=seed,
        beat=beat,
    )


def random_density_matrix(rng):
    """Random valid state: normalized M M^dagger."""
    m = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    rho = m @ m.conj().T
    return rho / rho.trace().real
