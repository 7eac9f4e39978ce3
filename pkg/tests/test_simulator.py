import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given
from hypothesis import strategies as st

from floquetlearn.magnus import fragment_unitary
from floquetlearn.models import XXZParams, build_xxz_block
from floquetlearn.pauli import PauliOperator, PauliString, sigma_minus, to_dense
from floquetlearn.simulator import (
    DensityMatrix,
    LindbladGateSpec,
    NoiseModel,
    StateVector,
    amplitude_damping_reference,
    apply_lindblad_block,
    apply_pauli_rotation,
    apply_trotter_block,
    block_unitary,
    derive_rng,
    expectation,
    neel_state,
    random_product_states,
    sample_expectations,
    stroboscopic_record,
    trace_distance,
)


def test_block_matches_fragment_product():
    p = XXZParams.disordered(4, seed=3, tau=0.13)
    block, frags = build_xxz_block(p)
    assert np.allclose(block_unitary(block, 4), fragment_unitary(frags, 0.13), atol=1e-12)


@given(st.integers(0, 15), st.integers(0, 15), st.floats(-3, 3, allow_nan=False))
def test_pauli_rotation_matches_expm(x, z, theta):
    p = PauliString(4, x, z)
    psi = random_product_states(4, 1, 7)[0]
    out = apply_pauli_rotation(psi, p, theta)
    ref = sla.expm(-1j * theta * to_dense(PauliOperator.from_string(p))) @ psi.amplitudes
    assert np.allclose(out.amplitudes, ref, atol=1e-12)


def test_state_vector_validates_norm():
    with pytest.raises(ValueError):
        StateVector(np.array([1.0, 1.0]), 1)


def test_density_matrix_validates():
    with pytest.raises(ValueError):
        DensityMatrix(np.diag([1.2, -0.2]), 1)
    with pytest.raises(ValueError):
        DensityMatrix(np.diag([0.5, 0.4]), 1)


def test_neel_state_expectations():
    psi = neel_state(4)
    for j in range(4):
        z = expectation(psi, PauliOperator.from_sites(4, {j: "Z"}))
        assert z == pytest.approx(1.0 if j % 2 == 0 else -1.0)


@pytest.mark.parametrize("gamma,t", [(0.3, 0.5), (1.0, 2.0), (0.05, 7.0)])
def test_amplitude_damping_matches_closed_form(gamma, t):
    rho0 = DensityMatrix.from_state(random_product_states(1, 1, 11)[0])
    gate = LindbladGateSpec(PauliOperator.zero(1), ((sigma_minus(1, 0), gamma),), t)
    out = apply_lindblad_block(rho0, [gate])
    ref = amplitude_damping_reference(rho0.matrix, gamma, t)
    assert np.abs(out.matrix - ref).max() < 1e-6


def test_lindblad_without_jumps_is_unitary():
    p = XXZParams.disordered(3, seed=4, tau=0.2)
    block, frags = build_xxz_block(p)
    lblock = [LindbladGateSpec(h, (), 0.2) for h in frags]
    psi = random_product_states(3, 1, 2)[0]
    rho = apply_lindblad_block(DensityMatrix.from_state(psi), lblock)
    ref = DensityMatrix.from_state(apply_trotter_block(psi, block))
    assert trace_distance(rho.matrix, ref.matrix) < 1e-10


def test_stream_independence():
    a = derive_rng(5, 1, 2).standard_normal(4)
    assert np.array_equal(a, derive_rng(5, 1, 2).standard_normal(4))
    assert not np.array_equal(a, derive_rng(5, 2, 1).standard_normal(4))
    assert not np.array_equal(a, derive_rng(6, 1, 2).standard_normal(4))


def test_record_noise_does_not_depend_on_other_observables():
    psi = random_product_states(3, 1, 0)[0]
    block, _ = build_xxz_block(XXZParams.disordered(3, seed=1))
    obs = [PauliOperator.from_label(l, 3) for l in ("X1", "Z2", "Y3")]
    noise = NoiseModel.shots(100, master_seed=9)
    full = stroboscopic_record(psi, block, 3, obs, noise, stream=(4,))
    part = stroboscopic_record(psi, block, 3, obs[1:2], noise, stream=(4,))
    assert np.array_equal(full[:, 1], part[:, 0])


@pytest.mark.parametrize("mode", ["binomial", "gaussian"])
def test_shot_noise_statistics(mode):
    n_s = 400
    exact = np.full(20000, 0.3)
    op = PauliOperator.from_label("Z1", 1)
    est = sample_expectations(exact, op, NoiseModel.shots(n_s, mode=mode), derive_rng(0, 1))
    sd = math.sqrt((1 - 0.09) / n_s)
    assert abs(est.mean() - 0.3) < 5 * sd / math.sqrt(exact.size)
    assert est.std() == pytest.approx(sd, rel=0.03)


def test_binomial_composite_rejected():
    op = PauliOperator.from_label("Z1", 2) + PauliOperator.from_label("X2", 2)
    with pytest.raises(ValueError):
        sample_expectations(np.zeros(2), op, NoiseModel.shots(10), derive_rng(0))


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel(100, "none")
    with pytest.raises(ValueError):
        NoiseModel(math.inf, "binomial")
    with pytest.raises(ValueError):
        NoiseModel(2.5, "gaussian")
    assert NoiseModel.shots(10000).epsilon == pytest.approx(0.01)


def test_lindblad_rate_validation():
    with pytest.raises(ValueError):
        LindbladGateSpec(PauliOperator.zero(1), ((sigma_minus(1, 0), -0.1),), 1.0)


def test_random_product_states_are_uniform_on_the_sphere():
    n_samples = 4000
    states = random_product_states(2, n_samples, 3)
    for site in range(2):
        for letter in "XYZ":
            op = PauliOperator.from_sites(2, {site: letter})
            vals = np.array([expectation(s, op) for s in states])
            # uniform Bloch vectors: each component has mean 0 and variance 1/3
            assert abs(vals.mean()) <= 3 * math.sqrt(1 / 3 / n_samples)


def _dense_block(frags, tau):
    u = np.eye(1 << frags.n_qubits, dtype=complex)
    for h in frags:
        u = sla.expm(-1j * tau * to_dense(h)) @ u
    return u


def test_xxz_block_matches_dense_simulation():
    n = 4
    block, frags = build_xxz_block(XXZParams.disordered(n, seed=3))
    psi = random_product_states(n, 1, 8)[0]
    out = apply_trotter_block(psi, block)
    z1 = to_dense(PauliOperator.from_label("Z1", n))
    ref = _dense_block(frags, 0.1) @ psi.amplitudes
    assert expectation(out, PauliOperator.from_label("Z1", n)) == pytest.approx(
        float(np.real(ref.conj() @ z1 @ ref)), abs=1e-10)


def test_expectation_matches_dense(rng):
    n = 3
    amps = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    psi = StateVector(amps / np.linalg.norm(amps), n)
    op = PauliOperator.from_label("X1Y3", n, 0.7) + PauliOperator.from_label("Z2", n, -0.4)
    dense = to_dense(op)
    assert expectation(psi, op) == pytest.approx(float(np.real(psi.amplitudes.conj() @ dense @ psi.amplitudes)),
                                                 abs=1e-12)


def test_shot_noise_width_at_zero_mean():
    z1 = PauliOperator.from_label("Z1", 1)
    draws = sample_expectations(np.zeros(1000), z1, NoiseModel.shots(10_000), derive_rng(0, 5))
    assert draws.std(ddof=1) == pytest.approx(0.01, rel=0.15)


def test_record_rows_compose_block_applications():
    n = 4
    block, _ = build_xxz_block(XXZParams.disordered(n, seed=2))
    psi = random_product_states(n, 1, 6)[0]
    obs = [PauliOperator.from_label("Z1", n), PauliOperator.from_label("X2X3", n)]
    rec = stroboscopic_record(psi, block, 5, obs, NoiseModel())
    state = psi
    for _ in range(5):
        state = apply_trotter_block(state, block)
    assert np.allclose(rec[-1], [expectation(state, a) for a in obs], atol=1e-12)
