import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from floquetlearn.ansatz import AnsatzSet, xxz_ansatz
from floquetlearn.fhl import (
    ConstraintSpec,
    InsensitiveProbeError,
    NoThresholdError,
    ScaleProbe,
    TimePolicy,
    UnderdeterminedError,
    adaptive_extend,
    aligned_distance,
    build_constraint_matrix,
    detect_threshold,
    exact_coefficients,
    noise_threshold,
    null_directions,
    pattern_batches,
    reconstruct,
    reconstruct_scale,
    residual_norm,
    tau_scan,
    unit,
)
from floquetlearn.models import XXZParams, build_xxz_block, xxz_builder
from floquetlearn.pauli import PauliOperator
from floquetlearn.quadrature import integrate, newton_cotes_weights
from floquetlearn.simulator import GateSpec, NoiseModel, StateVector, neel_state, random_product_states

SINGULAR_VALUES = np.logspace(0, -10, 8)


def _svd_fixture():
    rng = np.random.default_rng(42)
    u, _ = np.linalg.qr(rng.standard_normal((12, 8)))
    v, _ = np.linalg.qr(rng.standard_normal((8, 8)))
    return u @ np.diag(SINGULAR_VALUES) @ v.T


def test_reconstruct_against_high_precision_svd():
    m = _svd_fixture()
    with mpmath.workdps(40):
        _, s, vt = mpmath.svd_r(mpmath.matrix(m.tolist()))
        order = sorted(range(8), key=lambda i: s[i])
        ref_val = float(s[order[0]])
        ref_vec = np.array([float(vt[order[0], j]) for j in range(8)])
    res = reconstruct(m)
    assert res.lambda1 == pytest.approx(ref_val, rel=1e-4)
    assert aligned_distance(res.c_rec, ref_vec) < 1e-6
    assert res.lambda2 == pytest.approx(SINGULAR_VALUES[-2], rel=1e-6)
    assert not res.degenerate


def test_noise_threshold_value():
    assert noise_threshold(330, 47, 1e4) == pytest.approx(0.16852, abs=1e-4)
    with pytest.raises(ValueError):
        noise_threshold(330, 47, math.inf)
    with pytest.raises(UnderdeterminedError):
        noise_threshold(10, 47, 100)


@given(st.integers(2, 8), st.integers(1, 6), st.integers(0, 2**31))
def test_residual_norm_matches_numpy(rows, cols, seed):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((rows, cols))
    c = rng.standard_normal(cols)
    assert residual_norm(m, c) == pytest.approx(np.linalg.norm(m @ c), rel=1e-12, abs=1e-300)


@given(st.integers(1, 40), st.sampled_from([2, 4]))
def test_quadrature_exact_on_low_degree_polynomials(n, order):
    h = 0.37
    x = np.arange(n + 1) * h
    degree = 1 if order == 2 or n == 1 else 3
    coeffs = np.arange(1.0, degree + 2)
    f = sum(c * x**k for k, c in enumerate(coeffs))
    exact = sum(c * x[-1] ** (k + 1) / (k + 1) for k, c in enumerate(coeffs))
    assert integrate(f, h, order) == pytest.approx(exact, rel=1e-12)
    assert newton_cotes_weights(n, h, order).sum() == pytest.approx(n * h)


def test_time_policies():
    assert TimePolicy("fixed_total_time", 1.0, 2).step_counts(0.1) == [5, 10]
    assert TimePolicy("inverse_tau", 1.0, 1).step_counts(0.1) == [100]
    assert TimePolicy("fixed_cycles", (3, 7)).step_counts(0.5) == [3, 7]
    assert TimePolicy("final_times", (0.3,)).step_counts(0.1) == [3]
    with pytest.raises(ValueError):
        TimePolicy("sometimes")


def test_underdetermined_raises():
    p = XXZParams.disordered(3, seed=0)
    block, _ = build_xxz_block(p)
    spec = ConstraintSpec(1, TimePolicy("fixed_cycles", (1, 2)))
    with pytest.raises(UnderdeterminedError):
        build_constraint_matrix(block, xxz_ansatz(3, 1), spec, 0.1)


def test_exact_generator_is_recovered_for_a_single_gate():
    h = XXZParams.disordered(3, seed=5).hamiltonian()
    a = AnsatzSet.from_operator(h)
    spec = ConstraintSpec(10, TimePolicy("fixed_total_time", 2.0, 3))
    res = reconstruct(build_constraint_matrix([GateSpec(h, 0.1)], a, spec, 0.1).matrix)
    assert aligned_distance(res.c_rec, a.coefficients(h)) < 1e-10
    assert res.lambda1 < 1e-10


def test_first_order_ansatz_tracks_the_circuit():
    p = XXZParams.disordered(4, seed=1)
    a = xxz_ansatz(4, 1)
    spec = ConstraintSpec(20, TimePolicy("fixed_total_time", 4.0, 3))
    scan = tau_scan(xxz_builder(p), a, spec, [0.01, 0.02, 0.04])
    assert scan.slope("lambda1") == pytest.approx(2.0, abs=0.3)
    # distance to the order-1 truncation is set by the omitted tau^2 terms
    assert scan.slope("distance") == pytest.approx(2.0, abs=0.3)
    assert scan.distances.max() < 1e-2


def test_scale_of_a_single_gate_is_the_coefficient_norm():
    h = XXZParams.disordered(3, seed=2).hamiltonian()
    a = AnsatzSet.from_operator(h)
    c = a.coefficients(h)
    probe = ScaleProbe(neel_state(3), PauliOperator.from_label("Z1", 3), 50)
    alpha = reconstruct_scale([GateSpec(h, 0.02)], unit(c), a, probe, 0.02)
    assert alpha == pytest.approx(np.linalg.norm(c), rel=1e-6)


def test_insensitive_probe_raises():
    h = PauliOperator.from_label("Z1Z2", 2, 0.8) + PauliOperator.from_label("Z1", 2, 0.3)
    a = AnsatzSet.from_operator(h)
    probe = ScaleProbe(StateVector.basis(2, 1), PauliOperator.from_label("Z1", 2), 10)
    with pytest.raises(InsensitiveProbeError):
        reconstruct_scale([GateSpec(h, 0.1)], unit(a.coefficients(h)), a, probe, 0.1)


def test_detect_threshold_synthetic():
    taus = np.logspace(-2, 0, 12)
    values = taus**2
    with pytest.raises(NoThresholdError):
        detect_threshold(taus, values)
    jumped = np.where(taus > 0.3, 10 * taus**2, taus**2)
    lo, hi = detect_threshold(taus, jumped)
    assert lo < 0.3 < hi
    with pytest.raises(ValueError):
        detect_threshold(taus[:5], values[:5])


def test_null_directions_span_the_kernel():
    rng = np.random.default_rng(3)
    kernel = np.linalg.qr(rng.standard_normal((6, 2)))[0]
    m = rng.standard_normal((20, 6))
    m = m - (m @ kernel) @ kernel.T
    dirs = null_directions(m, 2)
    assert np.allclose(dirs @ dirs.T, np.eye(2), atol=1e-12)
    proj = kernel @ kernel.T
    assert np.allclose(proj @ dirs.T, dirs.T, atol=1e-10)


def test_conserved_directions_are_excluded():
    m = np.diag([0.0, 1e-3, 1.0])
    res = reconstruct(np.vstack([m, m]), conserved=[np.array([1.0, 0, 0])])
    assert aligned_distance(res.c_rec, np.array([0, 1.0, 0])) < 1e-12


def test_complete_ansatz_needs_no_adaptive_steps():
    p = XXZParams.disordered(3, seed=0)
    spec = ConstraintSpec(20, TimePolicy("fixed_total_time", 4.0, 3), NoiseModel.shots(10_000, master_seed=1))
    base = xxz_ansatz(3, 1)
    result = adaptive_extend(xxz_builder(p), base, pattern_batches(3, [["XZ", "ZX"]]), spec,
                             np.logspace(-3, -2, 4))
    assert not result.unresolved
    assert len(result.audit) == 1 and result.audit[0].added is None
    assert len(result.ansatz) == len(base)


def test_exact_coefficients_projects_conserved():
    p = XXZParams.disordered(3, seed=0)
    _, frags = build_xxz_block(p)
    a = xxz_ansatz(3, 0)
    q = np.zeros(len(a))
    q[0] = 1.0
    c = exact_coefficients(frags, a, 0.1, conserved=[q])
    assert c[0] == pytest.approx(0.0, abs=1e-15)


def test_constraint_matrix_matches_dense_simulation():
    import scipy.linalg as sla

    from floquetlearn.pauli import to_dense

    n, tau = 4, 0.05
    block, frags = xxz_builder(XXZParams.disordered(n, seed=7))(tau)
    a = xxz_ansatz(n, 0)
    spec = ConstraintSpec(6, TimePolicy("fixed_total_time", 1.0, 3))
    data = build_constraint_matrix(block, a, spec, tau)
    u = np.eye(1 << n, dtype=complex)
    for h in frags:
        u = sla.expm(-1j * tau * to_dense(h)) @ u
    hs = [to_dense(op) for op in a.operators]
    rows = []
    for s in spec.states(n):
        for k in spec.time_policy.step_counts(tau):
            psi_t = np.linalg.matrix_power(u, k) @ s.amplitudes
            rows.append([np.real(s.amplitudes.conj() @ h @ s.amplitudes - psi_t.conj() @ h @ psi_t) for h in hs])
    assert np.abs(data.matrix - np.array(rows)).max() < 1e-10


def test_rotation_error_raises_the_distance_floor():
    from floquetlearn.fhl import NoInteriorMinimumError, optimal_tau
    from floquetlearn.models import ErrorInjection

    n = 4
    p = XXZParams.uniform(n, 1.0, 1.0, 0.7, 0.75)
    a = AnsatzSet.from_patterns(n, ["X", "XX", "YY", "ZZ"])
    target = a.coefficients(p.hamiltonian())
    spec = ConstraintSpec(20, TimePolicy())
    grid = np.logspace(-2, 0, 15)
    minima = []
    for d in (0.01, 0.02, 0.05):
        e = ErrorInjection(rotation_offsets=ErrorInjection.draw_rotation_offsets(n, d, 0))
        try:
            out = optimal_tau(xxz_builder(p, e), target, a, spec, grid)
        except NoInteriorMinimumError as exc:
            out = exc.curve
        minima.append(out.distances.min())
    assert minima[0] < minima[1] < minima[2]
