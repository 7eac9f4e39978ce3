"""Dense statevector and density-matrix simulation of Trotter blocks.

Gates are ``exp(-i * duration * generator)``. Generators that are single Pauli
strings, or sums of mutually commuting strings, are applied through sparse
Pauli rotations; anything else falls back to a dense exponential.

Dissipative blocks use the row-major vectorization ``vec(A rho B) =
(A kron B^T) vec(rho)`` and dense exponentials of the Lindblad superoperator.

Noise streams are counter-based: ``derive_rng(master_seed, *keys)`` always
returns the same Philox stream for the same keys, so noisy values do not
depend on evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .pauli import PauliOperator, PauliString, string_action, to_dense

NORM_TOL = 1e-10
TRACE_TOL = 1e-9
HERM_TOL = 1e-10
POSITIVITY_TOL = -1e-8
MAX_STATE_QUBITS = 12
MAX_LINDBLAD_QUBITS = 6


# ---------------------------------------------------------------- randomness

def derive_rng(master_seed: int, *keys: int) -> np.random.Generator:
    """Independent counter-based stream for a tuple of integer keys."""
    entropy = [int(master_seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


# ---------------------------------------------------------------- types

@dataclass
class StateVector:
    amplitudes: np.ndarray
    n_qubits: int

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (1 << self.n_qubits,):
            raise ValueError(
                f"amplitude vector has shape {self.amplitudes.shape}, expected ({1 << self.n_qubits},)"
            )
        check_norm(self.amplitudes)

    @classmethod
    def basis(cls, n_qubits: int, index: int = 0) -> StateVector:
        amps = np.zeros(1 << n_qubits, dtype=complex)
        amps[index] = 1.0
        return cls(amps, n_qubits)

    @classmethod
    def from_bits(cls, bits: Sequence[int]) -> StateVector:
        """Product state with site ``j`` in ``|bits[j]>``."""
        index = sum(int(b) << j for j, b in enumerate(bits))
        return cls.basis(len(bits), index)

    def copy(self) -> StateVector:
        return StateVector(self.amplitudes.copy(), self.n_qubits)


@dataclass
class DensityMatrix:
    matrix: np.ndarray
    n_qubits: int

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        d = 1 << self.n_qubits
        if self.matrix.shape != (d, d):
            raise ValueError(f"density matrix has shape {self.matrix.shape}, expected ({d}, {d})")
        check_density(self.matrix)

    @classmethod
    def from_state(cls, state: StateVector) -> DensityMatrix:
        a = state.amplitudes
        return cls(np.outer(a, a.conj()), state.n_qubits)


@dataclass(frozen=True)
class GateSpec:
    generator: PauliOperator
    duration: float

    def __post_init__(self):
        if not self.generator.is_hermitian():
            raise ValueError("gate generator must be Hermitian")


@dataclass(frozen=True)
class LindbladGateSpec:
    hamiltonian: PauliOperator
    jumps: tuple[tuple[PauliOperator, float], ...] = ()
    duration: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "jumps", tuple((op, float(r)) for op, r in self.jumps))
        if not self.hamiltonian.is_hermitian():
            raise ValueError("Lindblad gate Hamiltonian must be Hermitian")
        for op, rate in self.jumps:
            if rate < 0:
                raise ValueError(f"jump rate must be nonnegative, got {rate}")
            if op.n_qubits != self.hamiltonian.n_qubits:
                raise ValueError("jump operator size differs from Hamiltonian size")
        if self.duration <= 0:
            raise ValueError(f"Lindblad gate duration must be positive, got {self.duration}")


NOISE_MODES = ("binomial", "gaussian", "none")


@dataclass(frozen=True)
class NoiseModel:
    n_shots: float = math.inf
    mode: str = "none"
    master_seed: int = 0

    def __post_init__(self):
        if self.mode not in NOISE_MODES:
            raise ValueError(f"noise mode must be one of {NOISE_MODES}, got {self.mode!r}")
        if (self.mode == "none") != math.isinf(self.n_shots):
            raise ValueError("noise mode 'none' requires n_shots=inf and vice versa")
        if not math.isinf(self.n_shots) and (self.n_shots < 1 or int(self.n_shots) != self.n_shots):
            raise ValueError(f"n_shots must be a positive integer or inf, got {self.n_shots}")

    @classmethod
    def exact(cls, master_seed: int = 0) -> NoiseModel:
        return cls(math.inf, "none", master_seed)

    @classmethod
    def shots(cls, n_shots: int, master_seed: int = 0, mode: str = "binomial") -> NoiseModel:
        return cls(int(n_shots), mode, master_seed)

    @property
    def is_exact(self) -> bool:
        return self.mode == "none"

    @property
    def epsilon(self) -> float:
        return 0.0 if self.is_exact else self.n_shots ** -0.5


# ---------------------------------------------------------------- checks

def check_norm(amps: np.ndarray) -> None:
    dev = abs(np.linalg.norm(amps) - 1.0)
    if dev > NORM_TOL:
        raise ValueError(f"state norm drifted by {dev:.3e} (tolerance {NORM_TOL})")


def check_density(m: np.ndarray) -> None:
    herm = np.linalg.norm(m - m.conj().T)
    if herm > HERM_TOL:
        raise ValueError(f"density matrix not Hermitian (deviation {herm:.3e})")
    tr = np.trace(m).real
    if abs(tr - 1.0) > TRACE_TOL:
        raise ValueError(f"density matrix trace drifted to {tr:.12f}")
    lo = np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0]
    if lo < POSITIVITY_TOL:
        raise ValueError(f"density matrix not positive: smallest eigenvalue {lo:.3e}")


# ---------------------------------------------------------------- states

def prepare_random_product_state(n_qubits: int, rng: np.random.Generator) -> StateVector:
    """Product of independent Haar-random single-qubit states."""
    amps = np.ones(1, dtype=complex)
    for _ in range(n_qubits):
        v = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        v /= np.linalg.norm(v)
        # site j is bit j, so later sites are the more significant factor
        amps = np.kron(v, amps)
    return StateVector(amps, n_qubits)


def random_product_states(n_qubits: int, count: int, master_seed: int, stream: int = 0) -> list[StateVector]:
    """``count`` product states, state ``i`` drawn from the stream ``(seed, stream, i)``."""
    return [prepare_random_product_state(n_qubits, derive_rng(master_seed, stream, i)) for i in range(count)]


def neel_state(n_qubits: int) -> StateVector:
    return StateVector.from_bits([j % 2 for j in range(n_qubits)])


# ---------------------------------------------------------------- unitary gates

@lru_cache(maxsize=8192)
def _cached_action(p: PauliString) -> tuple[np.ndarray, np.ndarray]:
    perm, phase = string_action(p)
    perm.setflags(write=False)
    phase.setflags(write=False)
    return perm, phase


def _rotate(arr: np.ndarray, p: PauliString, theta: float) -> np.ndarray:
    """``exp(-i theta P)`` applied along axis 0 of ``arr``."""
    if p.x_mask == 0 and p.z_mask == 0:
        return arr * np.exp(-1j * theta)
    perm, phase = _cached_action(p)
    pa = arr[perm] * (phase if arr.ndim == 1 else phase[:, None])
    return math.cos(theta) * arr - 1j * math.sin(theta) * pa


def apply_pauli_rotation(state: StateVector, p: PauliString, theta: float) -> StateVector:
    if p.n_qubits != state.n_qubits:
        raise ValueError("rotation string size differs from state size")
    return StateVector(_rotate(state.amplitudes, p, theta), state.n_qubits)


@lru_cache(maxsize=1024)
def _dense_gate(generator: PauliOperator, duration: float) -> np.ndarray:
    if generator.n_qubits > MAX_STATE_QUBITS:
        raise ValueError(f"dense gate exponential limited to {MAX_STATE_QUBITS} qubits")
    return sla.expm(-1j * duration * to_dense(generator))


def _apply_gate(arr: np.ndarray, gate: GateSpec) -> np.ndarray:
    gen = gate.generator
    if gen.is_zero() or gate.duration == 0:
        return arr
    if gen.strings_commute():
        for p, c in gen.items():
            arr = _rotate(arr, p, c.real * gate.duration)
        return arr
    return _dense_gate(gen, float(gate.duration)) @ arr


def _check_block(block: Sequence[GateSpec], n_qubits: int) -> None:
    if n_qubits > MAX_STATE_QUBITS:
        raise ValueError(f"state simulation limited to {MAX_STATE_QUBITS} qubits, got {n_qubits}")
    for k, g in enumerate(block):
        if g.generator.n_qubits != n_qubits:
            raise ValueError(f"gate {k} acts on {g.generator.n_qubits} qubits, state has {n_qubits}")


def apply_trotter_block(state: StateVector, block: Sequence[GateSpec]) -> StateVector:
    _check_block(block, state.n_qubits)
    arr = state.amplitudes
    for gate in block:
        arr = _apply_gate(arr, gate)
    return StateVector(arr, state.n_qubits)


def block_unitary(block: Sequence[GateSpec], n_qubits: int) -> np.ndarray:
    """Dense unitary of one block, built by pushing the identity through the gates."""
    _check_block(block, n_qubits)
    arr = np.eye(1 << n_qubits, dtype=complex)
    for gate in block:
        arr = _apply_gate(arr, gate)
    return arr


# ---------------------------------------------------------------- expectations

def string_expectations(psi: np.ndarray, strings: Sequence[PauliString]) -> np.ndarray:
    """``<psi_k|P_s|psi_k>`` for columns ``psi[:, k]``; returns shape ``(len(strings), k)``."""
    psi = psi if psi.ndim == 2 else psi[:, None]
    out = np.empty((len(strings), psi.shape[1]))
    conj = psi.conj()
    for s, p in enumerate(strings):
        perm, phase = _cached_action(p)
        out[s] = np.einsum("ck,ck->k", conj, phase[:, None] * psi[perm]).real
    return out


def string_expectations_dm(rho: np.ndarray, strings: Sequence[PauliString]) -> np.ndarray:
    """``tr(rho P_s)``; ``rho`` may carry leading batch axes."""
    d = rho.shape[-1]
    cols = np.arange(d)
    out = np.empty((len(strings),) + rho.shape[:-2])
    for s, p in enumerate(strings):
        # tr(rho P) = sum_c rho[c, c ^ x] * phase(c)
        out[s] = np.einsum("...c,c->...", rho[..., cols, cols ^ p.x_mask], _phase_at(p)).real
    return out


@lru_cache(maxsize=8192)
def _phase_at(p: PauliString) -> np.ndarray:
    d = 1 << p.n_qubits
    cols = np.arange(d, dtype=np.int64)
    signs = 1 - 2 * (np.bitwise_count(cols & p.z_mask) & 1).astype(np.int64)
    out = (1, 1j, -1, -1j)[p.y_count % 4] * signs.astype(complex)
    out.setflags(write=False)
    return out


def operator_expectations(values: np.ndarray, op: PauliOperator, index: dict[PauliString, int]) -> np.ndarray:
    """Combine per-string expectation rows into ``<op>``."""
    out = np.zeros(values.shape[1:])
    for p, c in op.items():
        out = out + c.real * values[index[p]]
    return out


def expectation(state: StateVector | DensityMatrix, a: PauliOperator) -> float:
    if not a.is_hermitian():
        raise ValueError("expectation requires a Hermitian observable")
    strings = a.strings()
    if isinstance(state, StateVector):
        vals = string_expectations(state.amplitudes, strings)[:, 0]
    elif isinstance(state, DensityMatrix):
        vals = string_expectations_dm(state.matrix, strings)
    else:
        raise TypeError(f"unsupported state type {type(state).__name__}")
    return float(sum(c.real * v for (p, c), v in zip(a.items(), vals)))


# ---------------------------------------------------------------- measurement noise

def sample_expectation(exact: float, a: PauliOperator, noise: NoiseModel, rng: np.random.Generator) -> float:
    return float(sample_expectations(np.array([exact]), a, noise, rng)[0])


def sample_expectations(
    exact: np.ndarray, a: PauliOperator, noise: NoiseModel, rng: np.random.Generator
) -> np.ndarray:
    """Noisy estimates of ``<a>`` for an array of exact values (one draw each)."""
    exact = np.asarray(exact, dtype=float)
    if noise.is_exact:
        return exact.copy()
    n_s = int(noise.n_shots)
    single = len(a) == 1 and a.strings()[0].weight > 0
    if single:
        c = next(iter(a.items()))[1].real
        x = np.clip(exact / c, -1.0, 1.0)
        if noise.mode == "binomial":
            k = rng.binomial(n_s, (1.0 + x) / 2.0)
            return c * (2.0 * k / n_s - 1.0)
        sd = np.sqrt(np.maximum(1.0 - x**2, 0.0) / n_s)
        return c * np.clip(x + sd * rng.standard_normal(x.shape), -1.0, 1.0)
    if noise.mode == "binomial":
        raise ValueError(
            "binomial sampling needs a single Pauli string; use mode='gaussian' for composite observables"
        )
    # each string measured separately with n_s shots; worst-case per-string variance 1/n_s
    var = sum(abs(c) ** 2 for p, c in a.items() if p.weight > 0) / n_s
    return exact + math.sqrt(var) * rng.standard_normal(exact.shape)


def term_key(op: PauliOperator) -> tuple[int, ...]:
    """Stable integer key of an observable, independent of where it sits in a list."""
    if len(op) == 1:
        p = op.strings()[0]
        return (p.x_mask, p.z_mask)
    return (1 << 62, int.from_bytes(op.to_text().encode(), "little"))


def sample_table(
    exact: np.ndarray,
    ops: Sequence[PauliOperator],
    noise: NoiseModel,
    row_keys: Sequence[Sequence[int]],
) -> np.ndarray:
    """Noisy copy of ``exact[r, c]`` (observable ``ops[c]``), one stream per entry.

    Entry ``(r, c)`` draws from ``(master_seed, *row_keys[r], *term_key(ops[c]))``,
    so its value does not depend on which other rows or columns are sampled.
    Composite observables fall back to gaussian sampling when binomial is requested.
    """
    exact = np.asarray(exact, dtype=float)
    if noise.is_exact:
        return exact.copy()
    if exact.shape != (len(row_keys), len(ops)):
        raise ValueError(f"table shape {exact.shape} does not match {len(row_keys)} rows x {len(ops)} columns")
    out = np.empty_like(exact)
    col_keys = [term_key(op) for op in ops]
    col_noise = []
    for op in ops:
        single = len(op) == 1 and op.strings()[0].weight > 0
        if noise.mode == "binomial" and not single:
            col_noise.append(NoiseModel(noise.n_shots, "gaussian", noise.master_seed))
        else:
            col_noise.append(noise)
    for r, rk in enumerate(row_keys):
        for c, op in enumerate(ops):
            rng = derive_rng(noise.master_seed, *rk, *col_keys[c])
            out[r, c] = sample_expectations(exact[r, c:c + 1], op, col_noise[c], rng)[0]
    return out


def stroboscopic_record(
    state0: StateVector | DensityMatrix,
    block,
    n_steps: int,
    observables: Sequence[PauliOperator],
    noise: NoiseModel,
    stream: Sequence[int] = (),
) -> np.ndarray:
    """Expectations after ``0..n_steps`` block applications; shape ``(n_steps + 1, len(observables))``.

    Entry ``(t, a)`` draws its noise from the stream ``(master_seed, *stream, t, *term_key(a))``.
    """
    if n_steps < 0:
        raise ValueError(f"n_steps must be nonnegative, got {n_steps}")
    for a in observables:
        if not a.is_hermitian():
            raise ValueError("observables must be Hermitian")
    strings = sorted({p for a in observables for p in a}, key=PauliString.sort_key)
    index = {p: i for i, p in enumerate(strings)}
    rows = np.empty((n_steps + 1, len(observables)))
    state = state0
    for t in range(n_steps + 1):
        if t:
            state = (
                apply_trotter_block(state, block)
                if isinstance(state, StateVector)
                else apply_lindblad_block(state, block)
            )
        if isinstance(state, StateVector):
            vals = string_expectations(state.amplitudes, strings)
        else:
            vals = string_expectations_dm(state.matrix, strings)[:, None]
        rows[t] = [operator_expectations(vals, a, index)[0] for a in observables]
    keys = [tuple(stream) + (t,) for t in range(n_steps + 1)]
    return sample_table(rows, observables, noise, keys)


# ---------------------------------------------------------------- dissipative gates

def _check_lindblad_size(n_qubits: int) -> None:
    if n_qubits > MAX_LINDBLAD_QUBITS:
        raise ValueError(f"superoperator simulation limited to {MAX_LINDBLAD_QUBITS} qubits, got {n_qubits}")


def lindblad_superoperator(h: PauliOperator, jumps: Sequence[tuple[PauliOperator, float]]) -> np.ndarray:
    """Row-major vectorized ``L(rho) = -i[H, rho] + sum_k g_k (L rho L^+ - {L^+ L, rho}/2)``."""
    n = h.n_qubits
    _check_lindblad_size(n)
    d = 1 << n
    eye = np.eye(d)
    hd = to_dense(h)
    s = -1j * (np.kron(hd, eye) - np.kron(eye, hd.T))
    for op, rate in jumps:
        if rate == 0:
            continue
        ld = to_dense(op)
        ldl = ld.conj().T @ ld
        s = s + rate * (np.kron(ld, ld.conj()) - 0.5 * np.kron(ldl, eye) - 0.5 * np.kron(eye, ldl.T))
    return s


@lru_cache(maxsize=256)
def _lindblad_propagator(gate: LindbladGateSpec) -> np.ndarray:
    return sla.expm(gate.duration * lindblad_superoperator(gate.hamiltonian, gate.jumps))


def lindblad_block_propagator(block: Sequence[LindbladGateSpec], n_qubits: int) -> np.ndarray:
    """Superoperator of one block, gates applied in listed order."""
    _check_lindblad_size(n_qubits)
    d2 = 1 << (2 * n_qubits)
    out = np.eye(d2, dtype=complex)
    for k, gate in enumerate(block):
        if gate.hamiltonian.n_qubits != n_qubits:
            raise ValueError(f"gate {k} acts on {gate.hamiltonian.n_qubits} qubits, state has {n_qubits}")
        out = _lindblad_propagator(gate) @ out
    return out


def apply_lindblad_block(rho: DensityMatrix, block: Sequence[LindbladGateSpec]) -> DensityMatrix:
    n = rho.n_qubits
    d = 1 << n
    prop = lindblad_block_propagator(block, n)
    out = (prop @ rho.matrix.reshape(-1)).reshape(d, d)
    return DensityMatrix(out, n)


def amplitude_damping_reference(rho: np.ndarray, gamma: float, t: float) -> np.ndarray:
    """Closed-form single-qubit decay ``|1> -> |0>`` at rate ``gamma`` for time ``t``."""
    p = math.exp(-gamma * t)
    out = np.empty((2, 2), dtype=complex)
    out[1, 1] = rho[1, 1] * p
    out[0, 0] = rho[0, 0] + rho[1, 1] * (1 - p)
    out[0, 1] = rho[0, 1] * math.sqrt(p)
    out[1, 0] = rho[1, 0] * math.sqrt(p)
    return out


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.linalg.eigvalsh(a - b)).sum())
