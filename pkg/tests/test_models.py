import numpy as np
import pytest

from floquetlearn.ansatz import AnsatzSet, cluster_ansatz, schwinger_ansatz, xxz_ansatz
from floquetlearn.magnus import fragment_unitary, omega0, omega1, operator_distance
from floquetlearn.models import (
    ClusterParams,
    ErrorInjection,
    SchwingerParams,
    XXZParams,
    build_cluster_block,
    build_schwinger_block,
    build_xxz_block,
    build_xxz_lindblad_block,
    cluster_target,
    quarter_rotate,
    xxz_jump_set,
)
from floquetlearn.pauli import PauliOperator, to_dense
from floquetlearn.simulator import block_unitary

# J = w = m = 1 on six sites, worked out by hand from the lattice Hamiltonian
SCHWINGER_6 = {
    "X1X2": 0.5, "X2X3": 0.5, "X3X4": 0.5, "X4X5": 0.5, "X5X6": 0.5,
    "Y1Y2": 0.5, "Y2Y3": 0.5, "Y3Y4": 0.5, "Y4Y5": 0.5, "Y5Y6": 0.5,
    "Z1": -2.0, "Z2": -0.5, "Z3": -1.5, "Z4": 0.0, "Z5": -1.0, "Z6": 0.5,
    "Z1Z2": 2.0, "Z1Z3": 1.5, "Z2Z3": 1.5, "Z1Z4": 1.0, "Z2Z4": 1.0, "Z3Z4": 1.0,
    "Z1Z5": 0.5, "Z2Z5": 0.5, "Z3Z5": 0.5, "Z4Z5": 0.5,
}


@pytest.mark.parametrize("axis", ["X", "Y", "Z"])
def test_quarter_rotation_matches_dense(axis, rng):
    n = 2
    op = PauliOperator.zero(n)
    for x in "IXYZ":
        for y in "IXYZ":
            sites = {j: l for j, l in enumerate(x + y) if l != "I"}
            if sites:
                op = op + PauliOperator.from_sites(n, sites, rng.normal())
    gen = sum((to_dense(PauliOperator.from_sites(n, {j: axis})) for j in range(n)), np.zeros((4, 4)))
    import scipy.linalg as sla
    r = sla.expm(-1j * np.pi / 4 * gen)
    assert np.allclose(to_dense(quarter_rotate(op, axis)), r @ to_dense(op) @ r.conj().T)


def test_xxz_order_zero_is_target_hamiltonian():
    p = XXZParams.disordered(5, seed=3)
    _, frags = build_xxz_block(p)
    assert operator_distance(omega0(frags), p.hamiltonian()) < 1e-12


def test_xxz_block_with_y_field():
    p = XXZParams.uniform(4, 0.9, 1.5, 0.5, 0.65, 0.3, 0.45, tau=0.07)
    block, frags = build_xxz_block(p)
    assert np.allclose(block_unitary(block, 4), fragment_unitary(frags, 0.07), atol=1e-12)
    assert operator_distance(omega0(frags), p.hamiltonian()) < 1e-12


def test_rotation_offsets_change_the_block():
    p = XXZParams.disordered(3, seed=0)
    e = ErrorInjection(rotation_offsets=ErrorInjection.draw_rotation_offsets(3, 0.02, seed=1))
    u0 = block_unitary(build_xxz_block(p)[0], 3)
    u1 = block_unitary(build_xxz_block(p, e)[0], 3)
    assert 1e-4 < np.linalg.norm(u1 - u0, 2) < 0.2


def test_alpha_deviation_enters_every_entangler():
    p = XXZParams.uniform(3, 1, 1, 0.75, 0.5)
    e = ErrorInjection(resource_deviation=ErrorInjection.alpha_deviation(3, 0.1))
    _, frags = build_xxz_block(p, e)
    h0 = omega0(frags)
    # XX layer contributes +a J^x; the ZZ layer maps Z X -> -X Z, contributing -a J^z
    assert h0.coefficient(PauliOperator.from_label("X1Z2", 3).strings()[0]).real == pytest.approx(0.1 - 0.075)
    # the YY layer maps X Z -> Y Z
    assert h0.coefficient(PauliOperator.from_label("Y1Z2", 3).strings()[0]).real == pytest.approx(0.1)
    with pytest.raises(ValueError):
        ErrorInjection(resource_deviation=(PauliOperator.from_label("X1X3", 3),))


def test_schwinger_hamiltonian_coefficients():
    h = SchwingerParams(6).hamiltonian()
    ref = PauliOperator.zero(6)
    for label, c in SCHWINGER_6.items():
        if c:
            ref = ref + PauliOperator.from_label(label, 6, c)
    assert h.allclose(ref, atol=1e-14)
    _, frags = build_schwinger_block(SchwingerParams(6))
    assert omega0(frags).allclose(h, atol=1e-14)


def test_schwinger_needs_even_chain():
    with pytest.raises(ValueError):
        SchwingerParams(5)


def test_balanced_cluster_sequence():
    block, frags = build_cluster_block(ClusterParams(5, 1.0, 1.0, 0.1))
    assert omega0(frags).norm() < 1e-14
    assert operator_distance(omega1(frags), cluster_target(5)) < 1e-12
    assert np.allclose(block_unitary(block, 5), fragment_unitary(frags, 0.1), atol=1e-12)


def test_unbalanced_cluster_leaves_zeroth_order():
    _, frags = build_cluster_block(ClusterParams(5, 1.0, 0.9, 0.1))
    assert omega0(frags).norm() > 0.05
    assert ClusterParams(5, 1.0, 0.9).delta_j == pytest.approx(0.1)


def test_jump_set_and_lindblad_block():
    jumps = xxz_jump_set(4, 0.1, 0.2, 0.3)
    assert len(jumps) == 4 + 3 + 2
    block = build_xxz_lindblad_block(XXZParams.uniform(4, 1, 1, 1, 1), jumps)
    assert all(len(g.jumps) == 9 for g in block)
    with pytest.raises(ValueError):
        build_xxz_lindblad_block(XXZParams.uniform(4, 1, 1, 1, 1), [(jumps[0][0], -1.0)])


@pytest.mark.parametrize("build,size", [
    (lambda: xxz_ansatz(6, 0), 27),
    (lambda: xxz_ansatz(6, 1), 77),
    (lambda: schwinger_ansatz(6, 0), 31),
    (lambda: schwinger_ansatz(6, 1), 89),
    (lambda: cluster_ansatz(6), 10),
])
def test_ansatz_sizes(build, size):
    assert len(build()) == size


def test_ansatz_covers_first_order_support():
    p = XXZParams.disordered(5, seed=1)
    _, frags = build_xxz_block(p)
    a = xxz_ansatz(5, 1)
    h = omega0(frags) + omega1(frags) * 0.1
    assert operator_distance(a.operator(a.coefficients(h)), h) < 1e-12


def test_ansatz_validation():
    x = PauliOperator.from_label("X1", 2)
    with pytest.raises(ValueError):
        AnsatzSet((("a", x), ("a", x)))
    with pytest.raises(ValueError):
        AnsatzSet((("a", x * 1j),))
    with pytest.raises(KeyError):
        xxz_ansatz(3, 0).indices(["Q1"])
    with pytest.raises(ValueError):
        xxz_ansatz(3, 2)


def test_cluster_mismatch_enters_zeroth_order_linearly():
    n = 5
    coeffs = []
    for dj in (0.1, 0.05):
        _, frags = build_cluster_block(ClusterParams(n, 1.0, 1.0 - dj, 0.1))
        a = cluster_ansatz(n, (0,))
        coeffs.append(a.coefficients(omega0(frags)))
    assert np.abs(coeffs[0]).max() > 0.05
    assert np.allclose(coeffs[0], 2 * coeffs[1], atol=1e-12)
