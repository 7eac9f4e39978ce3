"""Floquet Liouvillian learning from Ehrenfest constraints on dissipative data.

For an observable ``A``, an initial state and ``n`` cycles, the generator of one
dissipative block must satisfy

    <A>_{n tau} - <A>_0 = int_0^{n tau} tr(A L_F rho(t)) dt,

which is linear in the Hamiltonian coefficients ``c_H`` and the dissipator
coefficients ``c_D``. Stacking many such relations gives ``G c = b``.

Dissipator convention: coefficient ``K[l, m]`` multiplies
``l_l rho l_m^+ - {l_m^+ l_l, rho} / 2``; its column holds the integral of
``(1/2) <[l_m^+, A] l_l + l_m^+ [A, l_l]>``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla

from .pauli import PauliOperator, PauliString, commutator, to_dense
from .quadrature import integrate
from .simulator import (
    DensityMatrix,
    LindbladGateSpec,
    NoiseModel,
    derive_rng,
    lindblad_block_propagator,
    lindblad_superoperator,
    random_product_states,
    sample_expectations,
    sample_table,
    string_expectations_dm,
    term_key,
)

log = logging.getLogger(__name__)

MAX_FLL_QUBITS = 5
RANK_TOL = 1e-10
STREAM_FLL = 21
STREAM_FLL_STATES = 22
STREAM_FLL_ENDPOINT = 23
DISSIPATOR_MODES = ("diagonal", "full_kossakowski")


class UnderdeterminedError(ValueError):
    pass


@dataclass(frozen=True)
class LindbladAnsatz:
    hamiltonian_terms: tuple[tuple[str, PauliOperator], ...]
    jump_terms: tuple[tuple[str, PauliOperator], ...] = ()
    dissipator_mode: str = "diagonal"

    def __post_init__(self):
        object.__setattr__(self, "hamiltonian_terms", tuple(self.hamiltonian_terms))
        object.__setattr__(self, "jump_terms", tuple(self.jump_terms))
        if self.dissipator_mode not in DISSIPATOR_MODES:
            raise ValueError(f"dissipator_mode must be one of {DISSIPATOR_MODES}, got {self.dissipator_mode!r}")
        labels = [l for l, _ in self.hamiltonian_terms] + [l for l, _ in self.jump_terms]
        if len(set(labels)) != len(labels):
            raise ValueError("ansatz labels must be unique")
        for l, h in self.hamiltonian_terms:
            if not h.is_hermitian():
                raise ValueError(f"Hamiltonian term {l} is not Hermitian")
        if not labels:
            raise ValueError("empty Liouvillian ansatz")

    @property
    def n_qubits(self) -> int:
        first = self.hamiltonian_terms or self.jump_terms
        return first[0][1].n_qubits

    @property
    def n_hamiltonian(self) -> int:
        return len(self.hamiltonian_terms)

    @property
    def n_jumps(self) -> int:
        return len(self.jump_terms)

    @property
    def n_dissipator(self) -> int:
        """Number of real dissipator unknowns."""
        k = self.n_jumps
        return k if self.dissipator_mode == "diagonal" else k * k

    @property
    def n_unknowns(self) -> int:
        return self.n_hamiltonian + self.n_dissipator

    def without_dissipators(self) -> LindbladAnsatz:
        return LindbladAnsatz(self.hamiltonian_terms, (), self.dissipator_mode)

    def dissipator_labels(self) -> list[str]:
        names = [l for l, _ in self.jump_terms]
        if self.dissipator_mode == "diagonal":
            return names
        out = [f"K[{a},{a}]" for a in names]
        for i in range(len(names)):
            for j in range(i + 1, len(names)):
                out += [f"ReK[{names[i]},{names[j]}]", f"ImK[{names[i]},{names[j]}]"]
        return out

    def kossakowski(self, c_d: np.ndarray) -> np.ndarray:
        """Hermitian coefficient matrix from the real dissipator unknowns."""
        k = self.n_jumps
        c_d = np.asarray(c_d, dtype=float)
        if self.dissipator_mode == "diagonal":
            return np.diag(c_d).astype(complex)
        mat = np.diag(c_d[:k]).astype(complex)
        pos = k
        for i in range(k):
            for j in range(i + 1, k):
                mat[i, j] = c_d[pos] + 1j * c_d[pos + 1]
                mat[j, i] = c_d[pos] - 1j * c_d[pos + 1]
                pos += 2
        return mat


def _dissipator_integrand(a: PauliOperator, l_in: PauliOperator, l_out: PauliOperator) -> PauliOperator:
    """``(1/2)([l_out^+, A] l_in + l_out^+ [A, l_in])``."""
    ld = l_out.adjoint()
    return (commutator(ld, a) * l_in + ld * commutator(a, l_in)) * 0.5


def column_operators(ansatz: LindbladAnsatz, a: PauliOperator) -> list[PauliOperator]:
    """Hermitian operators whose time integrals form the row of ``G`` for observable ``a``."""
    cols = [(commutator(a, h) * (-1j)).real() for _, h in ansatz.hamiltonian_terms]
    jumps = [op for _, op in ansatz.jump_terms]
    k = len(jumps)
    for i in range(k):
        cols.append(_dissipator_integrand(a, jumps[i], jumps[i]).real())
    if ansatz.dissipator_mode == "full_kossakowski":
        for i in range(k):
            for j in range(i + 1, k):
                g = _dissipator_integrand(a, jumps[i], jumps[j])  # coefficient K[i, j]
                cols.append((g + g.adjoint()).real())
                cols.append(((g - g.adjoint()) * 1j).real())
    return cols


@dataclass(frozen=True)
class LiouvillianConstraint:
    state: DensityMatrix
    observable: PauliOperator
    n_steps: int
    tag: tuple[int, ...] = ()


def single_site_constraints(n_qubits: int, n_states: int, n_steps: int, seed: int) -> list[LiouvillianConstraint]:
    """Every single-site Pauli for each of ``n_states`` random product states."""
    states = random_product_states(n_qubits, n_states, seed, STREAM_FLL_STATES)
    out = []
    for i, s in enumerate(states):
        rho = DensityMatrix.from_state(s)
        for j in range(n_qubits):
            for k, letter in enumerate("XYZ"):
                a = PauliOperator.from_string(PauliString.from_sites(n_qubits, {j: letter}))
                out.append(LiouvillianConstraint(rho, a, n_steps, (i, j, k)))
    return out


def _sample_series(exact: np.ndarray, op: PauliOperator, noise: NoiseModel, key: tuple[int, ...]) -> np.ndarray:
    """One stream per (constraint, integrand) pair; successive draws cover the time samples."""
    mode = noise.mode
    if mode == "binomial" and not (len(op) == 1 and op.strings()[0].weight > 0):
        mode = "gaussian"
    rng = derive_rng(noise.master_seed, *key, *term_key(op))
    return sample_expectations(exact, op, NoiseModel(noise.n_shots, mode, noise.master_seed), rng)


@dataclass
class LiouvillianSystem:
    g_h: np.ndarray
    g_d: np.ndarray
    b: np.ndarray
    n_steps: np.ndarray

    @property
    def g(self) -> np.ndarray:
        return np.hstack([self.g_h, self.g_d])

    @property
    def n_con(self) -> int:
        return self.b.size


def _tau_key(tau: float) -> int:
    return int(np.float64(tau).view(np.uint64))


def build_liouvillian_system(block: Sequence[LindbladGateSpec], ansatz: LindbladAnsatz,
                             constraints: Sequence[LiouvillianConstraint], tau: float,
                             noise: NoiseModel = NoiseModel(), quadrature_order: int = 2,
                             realization: int = 0, check_count: bool = True) -> LiouvillianSystem:
    """Assemble ``(G_H, G_D, b)``; each integrand sample and each ``b`` entry gets its own noise stream."""
    n = ansatz.n_qubits
    if n > MAX_FLL_QUBITS:
        raise ValueError(f"Liouvillian learning limited to {MAX_FLL_QUBITS} qubits, got {n}")
    if check_count and len(constraints) <= ansatz.n_unknowns:
        raise UnderdeterminedError(
            f"underdetermined: {len(constraints)} constraints for {ansatz.n_unknowns} unknowns"
        )
    d = 1 << n
    prop = lindblad_block_propagator(block, n)
    n_unknown = ansatz.n_unknowns
    g = np.zeros((len(constraints), n_unknown))
    b = np.zeros(len(constraints))
    steps = np.array([c.n_steps for c in constraints])
    tk = _tau_key(tau)
    # group constraints by initial state so each trajectory is evolved once
    traj: dict[int, list[np.ndarray]] = {}
    for row, con in enumerate(constraints):
        if con.n_steps < 0:
            raise ValueError("n_steps must be nonnegative")
        key = id(con.state)
        hist = traj.setdefault(key, [con.state.matrix])
        while len(hist) <= con.n_steps:
            hist.append((prop @ hist[-1].reshape(-1)).reshape(d, d))
        rhos = np.array(hist[: con.n_steps + 1])
        cols = column_operators(ansatz, con.observable)
        strings = sorted({p for op in cols + [con.observable] for p in op}, key=PauliString.sort_key)
        index = {p: i for i, p in enumerate(strings)}
        vals = string_expectations_dm(rhos, strings) if strings else np.zeros((0, len(rhos)))

        def combine(op: PauliOperator) -> np.ndarray:
            out = np.zeros(len(rhos))
            for p, c in op.items():
                out = out + c.real * vals[index[p]]
            return out

        table = np.column_stack([combine(op) for op in cols]) if cols else np.zeros((len(rhos), 0))
        if not noise.is_exact:
            for j, op in enumerate(cols):
                if not op.is_zero():
                    table[:, j] = _sample_series(table[:, j], op, noise, (STREAM_FLL, realization, tk, row))
        if con.n_steps > 0:
            g[row] = integrate(table, tau, quadrature_order, axis=0)
        a_vals = combine(con.observable)
        a_end = sample_table(a_vals[-1:, None], [con.observable], noise, [(STREAM_FLL_ENDPOINT, realization, tk, row)])
        b[row] = a_end[0, 0] - a_vals[0]
    nh = ansatz.n_hamiltonian
    return LiouvillianSystem(g[:, :nh], g[:, nh:], b, steps)


@dataclass
class LiouvillianReconstruction:
    c_h: np.ndarray
    c_d: np.ndarray
    delta: float
    residuals: np.ndarray
    rank_deficient: bool
    kossakowski: np.ndarray | None = None

    @property
    def coefficients(self) -> np.ndarray:
        return np.concatenate([self.c_h, self.c_d])


def solve_liouvillian(system: LiouvillianSystem, ansatz: LindbladAnsatz | None = None) -> LiouvillianReconstruction:
    """Unconstrained least squares; negative rates are kept and reported."""
    g = system.g
    if g.shape[0] <= g.shape[1]:
        raise UnderdeterminedError(f"underdetermined: {g.shape[0]} rows for {g.shape[1]} unknowns")
    sol, _, rank, sv = np.linalg.lstsq(g, system.b, rcond=RANK_TOL)
    deficient = bool(rank < g.shape[1])
    if deficient:
        log.warning("Liouvillian system is rank deficient (rank %d of %d); minimum-norm solution", rank, g.shape[1])
    nh = system.g_h.shape[1]
    res = g @ sol - system.b
    c_d = sol[nh:]
    if ansatz is None or ansatz.dissipator_mode == "diagonal":
        if np.any(c_d < 0):
            warnings.warn("negative learned dissipation rates: the ansatz may be misspecified", RuntimeWarning)
    kos = ansatz.kossakowski(c_d) if ansatz is not None and ansatz.n_jumps else None
    return LiouvillianReconstruction(sol[:nh], c_d, float(np.linalg.norm(res)), res, deficient, kos)


def ll_noise_bound(n_con: int, n_unknowns: int, n_shots: float, n_steps: int, tau: float,
                   c_norm_estimate: float) -> float:
    """Noise floor of the residual; ``c_norm_estimate`` stands in for the unknown exact coefficient norm."""
    if math.isinf(n_shots) or n_shots <= 0:
        raise ValueError("noise bound needs a finite positive number of shots")
    if n_con < n_unknowns:
        raise UnderdeterminedError(f"underdetermined: {n_con} constraints for {n_unknowns} unknowns")
    eps = n_shots ** -0.5
    return eps * math.sqrt((n_con - n_unknowns) * (1.0 + 4.0 * n_steps * tau * tau * c_norm_estimate**2))


# ---------------------------------------------------------------- dense references

def ansatz_superoperator(ansatz: LindbladAnsatz, c_h: np.ndarray, c_d: np.ndarray) -> np.ndarray:
    n = ansatz.n_qubits
    h = PauliOperator.zero(n)
    for c, (_, op) in zip(c_h, ansatz.hamiltonian_terms):
        h = h + op * float(c)
    s = lindblad_superoperator(h, [])
    if ansatz.n_jumps:
        kos = ansatz.kossakowski(c_d)
        d = 1 << n
        eye = np.eye(d)
        mats = [to_dense(op) for _, op in ansatz.jump_terms]
        for i, li in enumerate(mats):
            for j, lj in enumerate(mats):
                if kos[i, j] == 0:
                    continue
                ljl = lj.conj().T @ li
                s = s + kos[i, j] * (np.kron(li, lj.conj()) - 0.5 * np.kron(ljl, eye) - 0.5 * np.kron(eye, ljl.T))
    return s


def floquet_liouvillian_dense(block: Sequence[LindbladGateSpec], n_qubits: int, tau: float) -> np.ndarray:
    """Principal logarithm of the block propagator divided by ``tau``."""
    return sla.logm(lindblad_block_propagator(block, n_qubits)) / tau


def superoperator_distance(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b))


# ---------------------------------------------------------------- tau scans

@dataclass
class DeltaPoint:
    tau: float
    result: LiouvillianReconstruction
    n_con: int
    n_steps: int


@dataclass
class DeltaScan:
    points: list[DeltaPoint]
    ansatz: LindbladAnsatz

    @property
    def taus(self) -> np.ndarray:
        return np.array([p.tau for p in self.points])

    @property
    def deltas(self) -> np.ndarray:
        return np.array([p.result.delta for p in self.points])

    def slope(self, window: tuple[float, float] | None = None) -> float:
        t, y = self.taus, self.deltas
        mask = np.ones(t.size, bool) if window is None else (t >= window[0]) & (t <= window[1])
        if mask.sum() < 2:
            raise ValueError("slope window holds fewer than two grid points")
        return float(np.polyfit(np.log(t[mask]), np.log(y[mask]), 1)[0])

    def plateau(self, k: int = 3) -> float:
        return float(np.median(self.deltas[np.argsort(self.taus)[:k]]))


def delta_tau_scan(builder: Callable[[float], Sequence[LindbladGateSpec]], ansatz: LindbladAnsatz,
                   constraint_factory: Callable[[float], Sequence[LiouvillianConstraint]],
                   tau_grid: Sequence[float], noise: NoiseModel = NoiseModel(), quadrature_order: int = 2,
                   realization: int = 0) -> DeltaScan:
    """One least-squares solve per tau; ``constraint_factory(tau)`` fixes the evolution lengths."""
    grid = np.asarray(tau_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("tau_grid must be strictly positive and strictly ascending")
    points = []
    for tau in grid:
        cons = constraint_factory(float(tau))
        system = build_liouvillian_system(builder(float(tau)), ansatz, cons, float(tau), noise,
                                          quadrature_order, realization)
        res = solve_liouvillian(system, ansatz)
        log.info("tau=%.4g delta=%.3e", tau, res.delta)
        points.append(DeltaPoint(float(tau), res, system.n_con, int(system.n_steps.max())))
    return DeltaScan(points, ansatz)
