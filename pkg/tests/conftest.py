import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

PAULI_2X2 = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def kron_dense(letters):
    """Dense matrix of a Pauli string given per site (site 0 first), little-endian ordering."""
    out = np.eye(1, dtype=complex)
    for letter in letters:
        out = np.kron(PAULI_2X2[letter], out)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


FIG7_N = 6
FIG7_STATES = 200


@pytest.fixture(scope="session")
def fig7_setup():
    """Uniform XXZ chain with all three fields, its zeroth-order ansatz and constraint spec."""
    from floquetlearn.ansatz import xxz_ansatz
    from floquetlearn.fhl import ConstraintSpec, TimePolicy
    from floquetlearn.models import XXZParams

    p = XXZParams.uniform(FIG7_N, 0.9, 1.5, 0.5, 0.65, 0.3, 0.45)
    a = xxz_ansatz(FIG7_N, 0, y_field=True)
    spec = ConstraintSpec(FIG7_STATES, TimePolicy("fixed_cycles", (1,)))
    return p, a, spec


@pytest.fixture(scope="session")
def fig7_baselines(fig7_setup):
    """Two independent 10^4-sample Haar baselines on the same states."""
    from floquetlearn.rmt import rmt_baseline_mc

    _, a, spec = fig7_setup
    states = spec.states(FIG7_N)
    return tuple(rmt_baseline_mc(a, states, n_haar_samples=10_000, master_seed=s) for s in (0, 1))
