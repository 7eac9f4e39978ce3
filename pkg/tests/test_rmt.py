import numpy as np
import pytest

from floquetlearn.ansatz import AnsatzSet, xxz_ansatz
from floquetlearn.fhl import ConstraintSpec, TimePolicy
from floquetlearn.models import XXZParams, xxz_builder
from floquetlearn.pauli import PauliOperator
from floquetlearn.rmt import (
    haar_unitary,
    rmt_baseline_mc,
    rmt_convergence_scan,
    rmt_deviations,
    squared_constraint,
)
from floquetlearn.simulator import DensityMatrix, StateVector, derive_rng, random_product_states


def test_haar_moments():
    d = 4
    samples = [haar_unitary(d, derive_rng(0, 7, s)) for s in range(4000)]
    u00 = np.array([u[0, 0] for u in samples])
    assert np.allclose(samples[0].conj().T @ samples[0], np.eye(d), atol=1e-12)
    # CUE: E|u|^2 = 1/d, E|u|^4 = 2/(d(d+1))
    assert np.mean(np.abs(u00) ** 2) == pytest.approx(1 / d, rel=0.05)
    assert np.mean(np.abs(u00) ** 4) == pytest.approx(2 / (d * (d + 1)), rel=0.1)
    assert abs(np.mean(u00)) < 0.03


def test_single_qubit_baseline_is_analytic():
    a = AnsatzSet.from_patterns(1, ["X", "Y", "Z"])
    base = rmt_baseline_mc(a, [StateVector.basis(1, 0)], n_haar_samples=4000, master_seed=2)
    # Haar-rotated Bloch vector n: Q = E[(e_z - n)(e_z - n)^T] = e_z e_z^T + I/3
    expected = np.diag([1 / 3, 1 / 3, 4 / 3])
    assert np.all(np.abs(base.q_rmt - expected) < 5 * base.stderr + 1e-12)
    assert base.lambda_rmt == pytest.approx(np.sqrt(1 / 3), rel=0.05)


def test_squared_constraint_is_symmetric_psd(rng):
    m = rng.standard_normal((30, 7))
    q = squared_constraint(m)
    assert np.allclose(q, q.T)
    assert np.linalg.eigvalsh(q)[0] > -1e-12
    assert np.allclose(q, m.T @ m / 30)


def test_maximally_mixed_state_gives_zero_baseline():
    a = xxz_ansatz(2, 0)
    mixed = DensityMatrix(np.eye(4) / 4, 2)
    base = rmt_baseline_mc(a, [mixed] * 3, n_haar_samples=100)
    assert np.allclose(base.q_rmt, 0.0)
    assert base.lambda_rmt < 1e-12
    with pytest.raises(ValueError):
        rmt_deviations(base.q_rmt, 0.1, base)


def test_independent_baselines_agree_within_errors():
    a = xxz_ansatz(3, 0)
    states = random_product_states(3, 20, 4)
    b1 = rmt_baseline_mc(a, states, n_haar_samples=800, master_seed=1)
    b2 = rmt_baseline_mc(a, states, n_haar_samples=800, master_seed=2)
    z = np.abs(b1.q_rmt - b2.q_rmt) / np.sqrt(b1.stderr**2 + b2.stderr**2 + 1e-300)
    assert np.mean(z > 3) <= 0.01
    assert z.max() <= 4.5
    assert b1.lambda_rmt == pytest.approx(b2.lambda_rmt, rel=0.05)


def test_baseline_guards():
    a = xxz_ansatz(3, 0)
    states = random_product_states(3, 2, 0)
    with pytest.raises(ValueError):
        rmt_baseline_mc(a, states, n_haar_samples=10)
    with pytest.raises(ValueError):
        rmt_baseline_mc(a, states, n_qubits=4)
    with pytest.raises(ValueError):
        rmt_baseline_mc(a, [], n_haar_samples=100)


def test_large_tau_approaches_baseline():
    p = XXZParams.uniform(4, 0.9, 1.5, 0.5, 0.65, 0.3, 0.45)
    a = xxz_ansatz(4, 0, y_field=True)
    spec = ConstraintSpec(60, TimePolicy("fixed_cycles", (1,)))
    base = rmt_baseline_mc(a, spec.states(4), n_haar_samples=1000)
    small = rmt_convergence_scan(xxz_builder(p), a, spec, 0.05, [50, 100, 200], base)
    large = rmt_convergence_scan(xxz_builder(p), a, spec, 1.2, [50, 100, 200], base)
    assert large.tail_mean()[0] < small.tail_mean()[0]
    assert large.tail_mean()[1] < small.tail_mean()[1]
    assert len(large.rows()) == 3


def test_fig7_baselines_are_self_consistent(fig7_baselines):
    b1, b2 = fig7_baselines
    z = np.abs(b1.q_rmt - b2.q_rmt) / np.sqrt(b1.stderr**2 + b2.stderr**2 + 1e-300)
    # with a few hundred entries some land beyond 3 sigma by chance
    assert np.mean(z > 3) <= 0.01
    assert z.max() <= 4.5


def test_fig7_lambda_is_stable_in_sample_count(fig7_baselines):
    b1, b2 = fig7_baselines
    pooled = np.linalg.eigvalsh(0.5 * (b1.q_rmt + b2.q_rmt))[0]
    assert b1.lambda_rmt == pytest.approx(np.sqrt(max(pooled, 0.0)), rel=0.05)
