import math
import warnings

import numpy as np
import pytest

from floquetlearn.fll import (
    MAX_FLL_QUBITS,
    LindbladAnsatz,
    LiouvillianConstraint,
    LiouvillianSystem,
    UnderdeterminedError,
    ansatz_superoperator,
    build_liouvillian_system,
    column_operators,
    floquet_liouvillian_dense,
    ll_noise_bound,
    single_site_constraints,
    solve_liouvillian,
)
from floquetlearn.models import xxz_jump_set
from floquetlearn.pauli import PauliOperator, sigma_minus, to_dense
from floquetlearn.simulator import DensityMatrix, LindbladGateSpec, NoiseModel, random_product_states

N = 2


def _hamiltonian():
    return (PauliOperator.from_label("X1X2", N, 0.8) + PauliOperator.from_label("Z1", N, 0.3)
            + PauliOperator.from_label("Y2", N, -0.5))


def _jumps():
    return [sigma_minus(N, 0), PauliOperator.from_label("Z1Z2", N), sigma_minus(N, 1)]


def _ansatz(mode="diagonal"):
    h = _hamiltonian()
    terms = tuple((p.label, PauliOperator.from_string(p)) for p in h)
    jumps = tuple((f"L{k}", op) for k, op in enumerate(_jumps()))
    return LindbladAnsatz(terms, jumps, mode)


def _dense_generator(h, jumps, kos):
    """``L(rho)`` on a dense matrix, written out term by term."""
    hd = to_dense(h)
    mats = [to_dense(op) for op in jumps]

    def apply(rho):
        out = -1j * (hd @ rho - rho @ hd)
        for i, li in enumerate(mats):
            for j, lj in enumerate(mats):
                ljd = lj.conj().T
                out = out + kos[i, j] * (li @ rho @ ljd - 0.5 * (ljd @ li @ rho + rho @ ljd @ li))
        return out
    return apply


@pytest.mark.parametrize("mode", ["diagonal", "full_kossakowski"])
def test_columns_reproduce_the_generator_action(mode, rng):
    a = _ansatz(mode)
    c_h = rng.normal(size=a.n_hamiltonian)
    c_d = rng.normal(size=a.n_dissipator)
    kos = a.kossakowski(c_d)
    assert np.allclose(kos, kos.conj().T)
    h = sum((op * c for c, (_, op) in zip(c_h, a.hamiltonian_terms)), PauliOperator.zero(N))
    gen = _dense_generator(h, [op for _, op in a.jump_terms], kos)
    rho = DensityMatrix.from_state(random_product_states(N, 1, 3)[0]).matrix
    for label in ("X1", "Y2", "Z1Z2", "X1Y2"):
        obs = PauliOperator.from_label(label, N)
        lhs = np.trace(to_dense(obs) @ gen(rho)).real
        cols = column_operators(a, obs)
        rhs = sum(c * np.trace(to_dense(op) @ rho).real for c, op in zip(np.concatenate([c_h, c_d]), cols))
        assert lhs == pytest.approx(rhs, abs=1e-12)
    sup = ansatz_superoperator(a, c_h, c_d)
    assert np.allclose(sup @ rho.reshape(-1), gen(rho).reshape(-1), atol=1e-12)


def test_single_gate_block_is_recovered():
    a = _ansatz()
    rates = [0.05, 0.02, 0.03]
    tau = 0.01
    block = [LindbladGateSpec(_hamiltonian(), tuple(zip(_jumps(), rates)), tau)]
    cons = single_site_constraints(N, 6, 40, seed=2)
    system = build_liouvillian_system(block, a, cons, tau, quadrature_order=4)
    res = solve_liouvillian(system, a)
    exact_h = np.array([_hamiltonian().coefficient(op.strings()[0]).real for _, op in a.hamiltonian_terms])
    assert np.allclose(res.c_h, exact_h, atol=1e-6)
    assert np.allclose(res.c_d, rates, atol=1e-6)
    assert not res.rank_deficient
    ref = floquet_liouvillian_dense(block, N, tau)
    assert np.allclose(ansatz_superoperator(a, res.c_h, res.c_d), ref, atol=1e-5)


def test_noisy_system_is_reproducible():
    a = _ansatz()
    block = [LindbladGateSpec(_hamiltonian(), tuple((op, 0.02) for op in _jumps()), 0.05)]
    cons = single_site_constraints(N, 4, 10, seed=1)
    noise = NoiseModel.shots(500, master_seed=3)
    s1 = build_liouvillian_system(block, a, cons, 0.05, noise)
    s2 = build_liouvillian_system(block, a, cons, 0.05, noise)
    assert np.array_equal(s1.g, s2.g) and np.array_equal(s1.b, s2.b)
    s3 = build_liouvillian_system(block, a, cons, 0.05, noise, realization=1)
    assert not np.array_equal(s1.b, s3.b)


def test_underdetermined_and_size_guards():
    a = _ansatz()
    block = [LindbladGateSpec(_hamiltonian(), (), 0.1)]
    with pytest.raises(UnderdeterminedError):
        build_liouvillian_system(block, a, single_site_constraints(N, 1, 5, 0), 0.1)
    big = MAX_FLL_QUBITS + 1
    wide = LindbladAnsatz((("Z1", PauliOperator.from_label("Z1", big)),))
    with pytest.raises(ValueError):
        build_liouvillian_system([], wide, [], 0.1, check_count=False)


def test_negative_rates_warn():
    g_h = np.zeros((4, 0))
    g_d = np.eye(4)[:, :1]
    system = LiouvillianSystem(g_h, g_d, np.array([-1.0, 0, 0, 0]), np.ones(4, int))
    with pytest.warns(RuntimeWarning):
        res = solve_liouvillian(system)
    assert res.c_d[0] == pytest.approx(-1.0)


def test_positive_rates_do_not_warn():
    system = LiouvillianSystem(np.zeros((3, 0)), np.ones((3, 1)), np.full(3, 0.2), np.ones(3, int))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        solve_liouvillian(system)


def test_noise_bound_arithmetic():
    val = ll_noise_bound(100, 10, 400, 20, 0.1, 2.0)
    assert val == pytest.approx(math.sqrt(90 * (1 + 4 * 20 * 0.01 * 4)) / 20)
    with pytest.raises(ValueError):
        ll_noise_bound(100, 10, math.inf, 20, 0.1, 2.0)


def test_ansatz_validation_and_labels():
    a = _ansatz("full_kossakowski")
    assert a.n_dissipator == 9
    assert len(a.dissipator_labels()) == 9
    assert a.without_dissipators().n_unknowns == a.n_hamiltonian
    with pytest.raises(ValueError):
        LindbladAnsatz((("x", PauliOperator.from_label("X1", 1)),), (("x", sigma_minus(1, 0)),))
    with pytest.raises(ValueError):
        LindbladAnsatz((), (), "sparse")


def test_xxz_jump_set_has_expected_operators():
    jumps = xxz_jump_set(3, 0.1, 0.2, 0.3)
    assert [r for _, r in jumps] == [0.1] * 3 + [0.2] * 2 + [0.3]


def test_noise_plateau_stays_below_bound():
    from floquetlearn.ansatz import xxz_ansatz
    from floquetlearn.fll import delta_tau_scan
    from floquetlearn.models import XXZParams, xxz_lindblad_builder
    from floquetlearn.scenarios import lindblad_ansatz_for

    n, n_shots = 3, 1000
    jumps = xxz_jump_set(n, 0.0125, 0.025, 0.05)
    full = lindblad_ansatz_for(jumps, xxz_ansatz(n, 0))
    builder = xxz_lindblad_builder(XXZParams.uniform(n, 2.0, 2.0, 0.5, 1.0), jumps)
    grid = np.logspace(-3, -1, 6)[:3]
    deltas, bounds = [], []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for r in range(20):
            scan = delta_tau_scan(builder, full, lambda tau: single_site_constraints(n, 20, round(2 / tau), 0),
                                  grid, NoiseModel.shots(n_shots, master_seed=0), realization=r)
            deltas.append(scan.deltas)
            # the bound grows with n tau^2, so each tau is compared with its own value
            bounds.append([ll_noise_bound(pt.n_con, full.n_unknowns, n_shots, pt.n_steps, pt.tau,
                                          float(np.linalg.norm(pt.result.coefficients))) for pt in scan.points])
    assert np.all(np.mean(deltas, axis=0) <= np.mean(bounds, axis=0))
