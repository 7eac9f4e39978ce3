"""Random-matrix reference values for the constraint matrix.

Beyond the Trotter threshold the cycle unitary behaves like a draw from the
circular unitary ensemble. The squared constraint matrix ``Q = M^T M / N_con``
and its smallest eigenvalue then approach their ensemble averages, which are
estimated here by Monte-Carlo Haar sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ansatz import AnsatzSet
from .fhl import ConstraintSpec, TimePolicy, build_constraint_matrix, reconstruct
from .pauli import PauliString
from .simulator import (
    DensityMatrix,
    StateVector,
    block_unitary,
    derive_rng,
    string_expectations,
    string_expectations_dm,
)

MAX_HAAR_QUBITS = 10
MIN_HAAR_SAMPLES = 100
STREAM_HAAR = 31
TAIL_FRACTION = 0.25
ZERO_TOL = 1e-12


def squared_constraint(m: np.ndarray, n_con: int | None = None) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    n_con = m.shape[0] if n_con is None else n_con
    q = m.T @ m / n_con
    return 0.5 * (q + q.T)


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """CUE sample: QR of a complex Ginibre matrix with the phases of ``diag(R)`` divided out."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / math.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))[None, :]


@dataclass
class RmtBaseline:
    q_rmt: np.ndarray
    lambda_rmt: float
    n_haar_samples: int
    stderr: np.ndarray

    @property
    def mc_stderr(self) -> float:
        """Largest per-entry standard error."""
        return float(self.stderr.max())


def _term_matrix(ansatz: AnsatzSet) -> tuple[list[PauliString], np.ndarray]:
    return ansatz._basis()


def _state_expectations(states, unitary, strings, mat) -> np.ndarray:
    """``<h_j>`` in each (optionally rotated) initial state; shape ``(n_states, n_ansatz)``."""
    if all(isinstance(s, StateVector) for s in states):
        psi = np.stack([s.amplitudes for s in states], axis=1)
        if unitary is not None:
            psi = unitary @ psi
        return (mat.T @ string_expectations(psi, strings)).T
    rhos = np.stack([(s if isinstance(s, DensityMatrix) else DensityMatrix.from_state(s)).matrix for s in states])
    if unitary is not None:
        rhos = unitary[None] @ rhos @ unitary.conj().T[None]
    return (mat.T @ string_expectations_dm(rhos, strings)).T


def rmt_baseline_mc(ansatz: AnsatzSet, initial_states: Sequence[StateVector | DensityMatrix],
                    n_haar_samples: int = 10_000, n_qubits: int | None = None,
                    master_seed: int = 0) -> RmtBaseline:
    """Average ``Q`` over Haar-random cycle unitaries, one constraint row per initial state."""
    n = ansatz.n_qubits if n_qubits is None else n_qubits
    if n != ansatz.n_qubits:
        raise ValueError(f"ansatz acts on {ansatz.n_qubits} qubits, got n_qubits={n}")
    if n > MAX_HAAR_QUBITS:
        raise ValueError(f"dense Haar sampling limited to {MAX_HAAR_QUBITS} qubits, got {n}")
    if n_haar_samples < MIN_HAAR_SAMPLES:
        raise ValueError(f"need at least {MIN_HAAR_SAMPLES} Haar samples, got {n_haar_samples}")
    if not initial_states:
        raise ValueError("no initial states")
    strings, mat = _term_matrix(ansatz)
    e0 = _state_expectations(initial_states, None, strings, mat)
    n_con = len(initial_states)
    k = len(ansatz)
    total = np.zeros((k, k))
    total_sq = np.zeros((k, k))
    for s in range(n_haar_samples):
        u = haar_unitary(1 << n, derive_rng(master_seed, STREAM_HAAR, s))
        m = e0 - _state_expectations(initial_states, u, strings, mat)
        q = squared_constraint(m, n_con)
        total += q
        total_sq += q * q
    mean = total / n_haar_samples
    var = np.maximum(total_sq / n_haar_samples - mean**2, 0.0)
    stderr = np.sqrt(var / (n_haar_samples - 1))
    lam = math.sqrt(max(float(np.linalg.eigvalsh(mean)[0]), 0.0))
    return RmtBaseline(mean, lam, n_haar_samples, stderr)


def rmt_deviations(q: np.ndarray, lambda1_normalized: float, baseline: RmtBaseline) -> tuple[float, float]:
    """Relative deviations of ``lambda_1 / sqrt(N_con)`` and of ``Q`` (Frobenius) from the ensemble values."""
    if baseline.lambda_rmt <= ZERO_TOL:
        raise ValueError("RMT baseline has lambda_rmt = 0; relative deviation undefined")
    q_norm = np.linalg.norm(baseline.q_rmt)
    if q_norm <= ZERO_TOL:
        raise ValueError("RMT baseline Q vanishes; relative deviation undefined")
    d_lam = abs(baseline.lambda_rmt - lambda1_normalized) / baseline.lambda_rmt
    d_q = float(np.linalg.norm(baseline.q_rmt - q) / q_norm)
    return float(d_lam), d_q


@dataclass
class RmtCurve:
    tau: float
    n: np.ndarray
    delta_lambda: np.ndarray
    delta_q: np.ndarray
    lambda_rmt: float
    mc_stderr: float

    def tail_mean(self) -> tuple[float, float]:
        k = max(1, int(math.ceil(TAIL_FRACTION * self.n.size)))
        return float(self.delta_lambda[-k:].mean()), float(self.delta_q[-k:].mean())

    def rows(self) -> list[dict]:
        return [
            dict(tau=self.tau, n=int(n), delta_rmt_lambda=float(dl), delta_rmt_Q=float(dq),
                 lambda_rmt=self.lambda_rmt, mc_stderr=self.mc_stderr)
            for n, dl, dq in zip(self.n, self.delta_lambda, self.delta_q)
        ]


def rmt_convergence_scan(builder, ansatz: AnsatzSet, spec: ConstraintSpec, tau: float,
                         n_range: Sequence[int], baseline: RmtBaseline) -> RmtCurve:
    """Deviations after ``n`` cycles for each ``n``; every run uses a single final time per state."""
    n_range = np.asarray(sorted(set(int(v) for v in n_range)))
    if n_range.size == 0 or n_range[0] < 1:
        raise ValueError("n_range must hold positive cycle counts")
    block, _ = builder(tau)
    u = block_unitary(block, ansatz.n_qubits)
    d_lam, d_q = [], []
    for n in n_range:
        s = ConstraintSpec(spec.n_states, TimePolicy("fixed_cycles", (int(n),)), spec.noise,
                           spec.state_seed, spec.realization, spec.noisy_initial)
        data = build_constraint_matrix(block, ansatz, s, tau, unitary=u)
        res = reconstruct(data.matrix)
        dl, dq = rmt_deviations(squared_constraint(data.matrix), res.lambda1_normalized, baseline)
        d_lam.append(dl)
        d_q.append(dq)
    return RmtCurve(float(tau), n_range, np.array(d_lam), np.array(d_q), baseline.lambda_rmt, baseline.mc_stderr)


def tail_mean_curve(builder, ansatz: AnsatzSet, spec: ConstraintSpec, taus: Sequence[float],
                    n_range: Sequence[int], baseline: RmtBaseline) -> tuple[np.ndarray, list[RmtCurve]]:
    curves = [rmt_convergence_scan(builder, ansatz, spec, float(t), n_range, baseline) for t in taus]
    return np.array([c.tail_mean()[0] for c in curves]), curves
