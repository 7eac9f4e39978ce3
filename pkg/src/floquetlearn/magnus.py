"""Low-order Magnus terms of a product of exponentials, plus dense oracles.

A fragment sequence ``[H_1, ..., H_L]`` stands for the one-period unitary

    U_tau = exp(-i H_L tau) ... exp(-i H_2 tau) exp(-i H_1 tau)

(``H_1`` acts first). The effective generator is written as
``H_F(tau) = sum_k Omega_k tau^k``; the functions here return ``Omega_k``
with the powers of ``tau`` already stripped.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .pauli import PauliOperator, commutator, pauli_decompose, pauli_sum, to_dense

BRANCH_TOL = 1e-9
UNITARY_TOL = 1e-10
MAX_LOG_QUBITS = 12
MAX_BOUND_QUBITS = 8


class BranchAmbiguityError(ArithmeticError):
    """An eigenphase of U sits on the branch cut of the logarithm."""


@dataclass(frozen=True)
class FragmentSequence:
    fragments: tuple[PauliOperator, ...]
    n_qubits: int = field(default=0)

    def __post_init__(self):
        frags = tuple(self.fragments)
        if not frags:
            raise ValueError("fragment sequence is empty")
        n = frags[0].n_qubits
        for k, f in enumerate(frags):
            if f.n_qubits != n:
                raise ValueError(f"fragment {k} acts on {f.n_qubits} qubits, expected {n}")
            if not f.is_hermitian():
                raise ValueError(f"fragment {k} is not Hermitian")
        object.__setattr__(self, "fragments", frags)
        object.__setattr__(self, "n_qubits", n)

    def __len__(self):
        return len(self.fragments)

    def __iter__(self):
        return iter(self.fragments)


def _as_seq(seq) -> FragmentSequence:
    return seq if isinstance(seq, FragmentSequence) else FragmentSequence(tuple(seq))


def omega0(seq) -> PauliOperator:
    seq = _as_seq(seq)
    return pauli_sum(seq.n_qubits, seq.fragments)


def omega1(seq) -> PauliOperator:
    """``-(i/2) sum_{i<j} [H_j, H_i]``."""
    seq = _as_seq(seq)
    h = seq.fragments
    acc = PauliOperator.zero(seq.n_qubits)
    prefix = PauliOperator.zero(seq.n_qubits)
    for j in range(len(h)):
        if j:
            acc = acc + commutator(h[j], prefix)
        prefix = prefix + h[j]
    return (acc * (-0.5j)).real()


def omega2(seq) -> PauliOperator:
    """Second-order term of the product formula.

    ``(1/12) sum_{i<j} [S_j - H_j, [H_j, H_i]] - (1/4) sum_{i<l<j} [H_j, [H_l, H_i]]``
    with ``S_j = sum_{l<j} H_l``.
    """
    seq = _as_seq(seq)
    h = seq.fragments
    n = seq.n_qubits
    zero = PauliOperator.zero(n)
    first = zero
    second = zero
    prefix = zero  # S_j = sum_{l<j} H_l
    nested = zero  # sum_{i<l<j} [H_l, H_i]
    for j in range(len(h)):
        if j:
            hj = h[j]
            cj = commutator(hj, prefix)  # sum_{i<j} [H_j, H_i]
            first = first + commutator(prefix - hj, cj)
            second = second + commutator(hj, nested)
            nested = nested + cj
        prefix = prefix + h[j]
    return (first * (1 / 12) - second * 0.25).real()


def magnus_terms(seq, order: int) -> list[PauliOperator]:
    if order not in (0, 1, 2):
        raise ValueError(f"Magnus order must be 0, 1 or 2, got {order}")
    funcs = (omega0, omega1, omega2)
    return [funcs[k](seq) for k in range(order + 1)]


def magnus_truncation(seq, tau: float, order: int) -> PauliOperator:
    """``sum_{k <= order} Omega_k tau^k``."""
    seq = _as_seq(seq)
    out = PauliOperator.zero(seq.n_qubits)
    for k, om in enumerate(magnus_terms(seq, order)):
        out = out + om * tau**k
    return out


def fragment_unitary(seq, tau: float) -> np.ndarray:
    """Dense ``U_tau`` built from the fragments by exact matrix exponentials."""
    seq = _as_seq(seq)
    d = 1 << seq.n_qubits
    u = np.eye(d, dtype=complex)
    for frag in seq.fragments:
        u = sla.expm(-1j * tau * to_dense(frag)) @ u
    return u


def floquet_log_dense(u: np.ndarray, tau: float) -> np.ndarray:
    """Dense ``H_F = (i / tau) log U`` with eigenphases in (-pi, pi]."""
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    u = np.asarray(u, dtype=complex)
    d = u.shape[0]
    if d > 1 << MAX_LOG_QUBITS:
        raise ValueError(f"matrix logarithm limited to {MAX_LOG_QUBITS} qubits")
    dev = np.linalg.norm(u.conj().T @ u - np.eye(d))
    if dev > UNITARY_TOL:
        raise ValueError(f"input is not unitary: ||U^dag U - I||_F = {dev:.3e}")
    # complex Schur form of a normal matrix is diagonal, with unitary Z
    t, z = sla.schur(u, output="complex")
    phases = np.angle(np.diag(t))
    if np.any(np.pi - np.abs(phases) < BRANCH_TOL):
        raise BranchAmbiguityError(
            "branch ambiguity: an eigenphase of U is within 1e-9 of +-pi; reduce tau"
        )
    h = -(z * (phases / tau)) @ z.conj().T
    return 0.5 * (h + h.conj().T)


def floquet_via_log(u: np.ndarray, tau: float) -> PauliOperator:
    h = floquet_log_dense(u, tau)
    return pauli_decompose(h).real()


def _spectral_norm(m: np.ndarray) -> float:
    if not m.any():
        return 0.0
    return float(np.linalg.norm(m, 2))


def trotter_bound(seq, t: float, n: int) -> float:
    """First-order product-formula error bound for ``U_{t/n}^n`` against ``exp(-iHt)``."""
    seq = _as_seq(seq)
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if seq.n_qubits > MAX_BOUND_QUBITS:
        raise ValueError(f"trotter_bound limited to {MAX_BOUND_QUBITS} qubits, got {seq.n_qubits}")
    tau = t / n
    dense = [to_dense(h) for h in seq.fragments]
    comm = 0.0
    for j in range(len(dense)):
        for k in range(j + 1, len(dense)):
            comm += _spectral_norm(dense[j] @ dense[k] - dense[k] @ dense[j])
    total = sum(_spectral_norm(h) for h in dense)
    return t**2 / (2 * n) * comm * float(np.exp(abs(tau) * total))


def unitary_distance(seq, t: float, n: int) -> float:
    """Dense spectral-norm distance ``||U_{t/n}^n - exp(-i Omega_0 t)||``."""
    seq = _as_seq(seq)
    u = np.linalg.matrix_power(fragment_unitary(seq, t / n), n)
    exact = sla.expm(-1j * t * to_dense(omega0(seq)))
    return _spectral_norm(u - exact)


def operator_distance(a: PauliOperator, b: PauliOperator) -> float:
    """Frobenius distance normalized by ``2^{N/2}`` (coefficient-vector distance)."""
    return (a - b).norm()


def fit_loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.log(np.asarray(x, dtype=float))
    y = np.log(np.asarray(y, dtype=float))
    if len(x) < 2:
        raise ValueError("need at least two points for a slope fit")
    return float(np.polyfit(x, y, 1)[0])
