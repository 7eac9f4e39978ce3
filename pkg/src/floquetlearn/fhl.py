"""Floquet Hamiltonian learning from quench data.

Each constraint is a pair (initial product state, number of Trotter cycles n).
Row ``i`` of the constraint matrix holds ``<h_j>_0 - <h_j>_{n tau}`` for every
ansatz term ``h_j``; any generator ``sum_j c_j h_j`` that is conserved by the
Trotter block gives ``M c = 0``, so the learned coefficients are the right
singular vector of the smallest singular value.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .ansatz import AnsatzSet
from .magnus import magnus_truncation
from .pauli import PauliOperator, PauliString, commutator
from .quadrature import integrate
from .simulator import (
    NoiseModel,
    StateVector,
    block_unitary,
    random_product_states,
    sample_table,
    string_expectations,
)

log = logging.getLogger(__name__)

STREAM_STATES = 11
STREAM_CONSTRAINTS = 12
STREAM_SCALE = 13
DEGENERACY_TOL = 1e-12
PLATEAU_POINTS = 3


class UnderdeterminedError(ValueError):
    pass


class InsensitiveProbeError(ValueError):
    pass


class NoThresholdError(ValueError):
    pass


class NoInteriorMinimumError(ValueError):
    def __init__(self, msg, curve=None):
        super().__init__(msg)
        self.curve = curve


def tau_key(tau: float) -> int:
    """Integer key of a float (its IEEE bit pattern) for stream derivation."""
    return int(np.float64(tau).view(np.uint64))


# ---------------------------------------------------------------- constraint setup

TIME_POLICIES = ("fixed_total_time", "inverse_tau", "fixed_cycles", "final_times")


@dataclass(frozen=True)
class TimePolicy:
    """How final times depend on tau.

    ``fixed_total_time``: ``n_times`` equally spaced final times up to ``value``.
    ``inverse_tau``: the same with total time ``value / tau``.
    ``fixed_cycles``: ``value`` is an explicit list of cycle counts.
    ``final_times``: ``value`` is an explicit list of final times.
    """

    kind: str = "fixed_total_time"
    value: float | tuple = 16.0
    n_times: int = 6

    def __post_init__(self):
        if self.kind not in TIME_POLICIES:
            raise ValueError(f"time policy must be one of {TIME_POLICIES}, got {self.kind!r}")
        if self.kind in ("fixed_cycles", "final_times"):
            vals = tuple(self.value) if np.ndim(self.value) else (self.value,)
            if not vals or any(v <= 0 for v in vals):
                raise ValueError(f"{self.kind} values must be positive")
            object.__setattr__(self, "value", vals)
        else:
            if float(self.value) <= 0 or self.n_times < 1:
                raise ValueError("total time and n_times must be positive")

    def step_counts(self, tau: float) -> list[int]:
        if tau <= 0:
            raise ValueError(f"tau must be positive, got {tau}")
        if self.kind == "fixed_cycles":
            return [int(v) for v in self.value]
        if self.kind == "final_times":
            times = list(self.value)
        else:
            total = float(self.value) if self.kind == "fixed_total_time" else float(self.value) / tau
            times = [total * (k + 1) / self.n_times for k in range(self.n_times)]
        return [max(1, int(round(t / tau))) for t in times]


@dataclass(frozen=True)
class ConstraintSpec:
    """Initial states, evolution lengths and measurement noise of one experiment.

    Initial-state expectations are computed exactly from the known product
    states unless ``noisy_initial`` is set; evolved expectations carry noise.
    """

    n_states: int
    time_policy: TimePolicy = TimePolicy()
    noise: NoiseModel = NoiseModel()
    state_seed: int = 0
    realization: int = 0
    noisy_initial: bool = False

    def __post_init__(self):
        if self.n_states < 1:
            raise ValueError(f"n_states must be positive, got {self.n_states}")

    def n_con(self, tau: float) -> int:
        return self.n_states * len(self.time_policy.step_counts(tau))

    def states(self, n_qubits: int) -> list[StateVector]:
        return random_product_states(n_qubits, self.n_states, self.state_seed, STREAM_STATES)


@dataclass
class ConstraintData:
    matrix: np.ndarray
    tau: float
    step_counts: list[int]
    n_states: int

    @property
    def n_con(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_ansatz(self) -> int:
        return self.matrix.shape[1]


def _term_matrix(ansatz: AnsatzSet) -> tuple[list[PauliString], np.ndarray]:
    return ansatz._basis()


def term_expectations(psi: np.ndarray, ansatz: AnsatzSet) -> np.ndarray:
    """``<h_j>`` for columns of ``psi``; shape ``(n_states, n_ansatz)``."""
    strings, mat = _term_matrix(ansatz)
    return (mat.T @ string_expectations(psi, strings)).T


def _psi0(spec: ConstraintSpec, n_qubits: int) -> np.ndarray:
    return np.stack([s.amplitudes for s in spec.states(n_qubits)], axis=1)


def build_constraint_matrix(block, ansatz: AnsatzSet, spec: ConstraintSpec, tau: float,
                            unitary: np.ndarray | None = None) -> ConstraintData:
    """Rows ordered state-major: row ``i * K + k`` is state ``i`` after ``step_counts[k]`` cycles."""
    n = ansatz.n_qubits
    steps = spec.time_policy.step_counts(tau)
    if any(s < 1 for s in steps):
        raise ValueError("step counts must be >= 1")
    n_con = spec.n_states * len(steps)
    if n_con <= len(ansatz):
        raise UnderdeterminedError(
            f"underdetermined: {n_con} constraints for {len(ansatz)} ansatz terms; add states or final times"
        )
    u = block_unitary(block, n) if unitary is None else unitary
    psi0 = _psi0(spec, n)
    e0 = term_expectations(psi0, ansatz)
    ops = ansatz.operators
    if spec.noisy_initial:
        keys0 = [(STREAM_CONSTRAINTS, spec.realization, tau_key(tau), i, 0) for i in range(spec.n_states)]
        e0 = sample_table(e0, ops, spec.noise, keys0)
    m = np.empty((spec.n_states, len(steps), len(ansatz)))
    for k, s in enumerate(steps):
        psi = np.linalg.matrix_power(u, s) @ psi0
        et = term_expectations(psi, ansatz)
        keys = [(STREAM_CONSTRAINTS, spec.realization, tau_key(tau), i, s) for i in range(spec.n_states)]
        et = sample_table(et, ops, spec.noise, keys)
        m[:, k, :] = e0 - et
    return ConstraintData(m.reshape(n_con, len(ansatz)), tau, steps, spec.n_states)


# ---------------------------------------------------------------- reconstruction

def _two_product(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Error-free products ``a * b = p + e`` (Dekker/Veltkamp splitting)."""
    p = a * b
    split = 134217729.0  # 2**27 + 1
    ca = split * a
    ah = ca - (ca - a)
    al = a - ah
    cb = split * b
    bh = cb - (cb - b)
    bl = b - bh
    e = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    return p, e


def residual_norm(m: np.ndarray, c: np.ndarray) -> float:
    """``||M c||`` with each row dot product accumulated exactly before rounding."""
    p, e = _two_product(m, c[None, :])
    rows = [math.fsum(np.concatenate((p[i], e[i]))) for i in range(m.shape[0])]
    return math.sqrt(math.fsum(r * r for r in rows))


def _fix_sign(v: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(v)))
    return -v if v[k] < 0 else v


@dataclass
class ReconstructionResult:
    c_rec: np.ndarray
    lambda1: float
    lambda2: float
    n_con: int
    degenerate: bool = False
    alt_vectors: np.ndarray | None = None
    alpha: float | None = None

    @property
    def spectral_gap(self) -> float:
        return self.lambda2 - self.lambda1

    @property
    def lambda1_normalized(self) -> float:
        return self.lambda1 / math.sqrt(self.n_con)

    @property
    def n_ansatz(self) -> int:
        return self.c_rec.size


def _complement_basis(n: int, conserved: Sequence[np.ndarray]) -> np.ndarray:
    q = np.array(conserved, dtype=float).reshape(len(conserved), n).T
    u, s, _ = np.linalg.svd(q, full_matrices=True)
    rank = int(np.sum(s > 1e-12 * s[0]))
    return u[:, rank:]


def reconstruct(m: np.ndarray, conserved: Sequence[np.ndarray] | None = None) -> ReconstructionResult:
    """Smallest right singular pair of ``M``.

    ``conserved`` lists coefficient vectors of operators known to commute with
    the block (e.g. symmetry generators); the search is restricted to their
    orthogonal complement so they cannot masquerade as the generator.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise ValueError("constraint matrix must be 2-D")
    n_con, n_a = m.shape
    if n_con < n_a:
        raise UnderdeterminedError(f"underdetermined: {n_con} rows for {n_a} columns")
    basis = _complement_basis(n_a, conserved) if conserved else None
    mw = m if basis is None else m @ basis
    _, s, vt = np.linalg.svd(mw, full_matrices=False)
    vecs = vt if basis is None else (basis @ vt.T).T
    c1 = _fix_sign(vecs[-1])
    lam1 = residual_norm(m, c1)
    if len(s) > 1:
        c2 = _fix_sign(vecs[-2])
        lam2 = max(residual_norm(m, c2), lam1)
    else:
        c2, lam2 = None, math.inf
    degenerate = c2 is not None and (lam2 - lam1) < DEGENERACY_TOL * lam2
    return ReconstructionResult(
        c_rec=c1,
        lambda1=lam1,
        lambda2=lam2,
        n_con=n_con,
        degenerate=bool(degenerate),
        alt_vectors=np.stack([c1, c2]) if degenerate else None,
    )


def unit(v: np.ndarray) -> np.ndarray:
    nrm = np.linalg.norm(v)
    if nrm == 0:
        raise ValueError("cannot normalize the zero vector")
    return v / nrm


def aligned_distance(c_rec: np.ndarray, c_ex: np.ndarray) -> float:
    """``min(||c_rec - c_ex||, ||c_rec + c_ex||)`` for unit vectors (the sign of a null vector is free)."""
    a, b = unit(c_rec), unit(c_ex)
    return float(min(np.linalg.norm(a - b), np.linalg.norm(a + b)))


def project_out(v: np.ndarray, conserved: Sequence[np.ndarray] | None) -> np.ndarray:
    if not conserved:
        return v
    basis = _complement_basis(v.size, conserved)
    return basis @ (basis.T @ v)


def exact_coefficients(fragments, ansatz: AnsatzSet, tau: float, order: int | None = None,
                       conserved: Sequence[np.ndarray] | None = None) -> np.ndarray:
    """Magnus-truncated generator expressed in the ansatz (not normalized)."""
    k = ansatz.max_order if order is None else order
    return project_out(ansatz.coefficients(magnus_truncation(fragments, tau, k)), conserved)


# ---------------------------------------------------------------- tau scans

@dataclass
class ScanPoint:
    tau: float
    result: ReconstructionResult
    c_exact: np.ndarray
    param_distance: float
    step_counts: list[int]

    @property
    def lambda1(self) -> float:
        return self.result.lambda1

    @property
    def lambda1_normalized(self) -> float:
        return self.result.lambda1_normalized


@dataclass
class TauScan:
    points: list[ScanPoint]
    ansatz: AnsatzSet
    spec: ConstraintSpec

    @property
    def taus(self) -> np.ndarray:
        return np.array([p.tau for p in self.points])

    @property
    def lambda1(self) -> np.ndarray:
        return np.array([p.lambda1 for p in self.points])

    @property
    def lambda1_normalized(self) -> np.ndarray:
        return np.array([p.lambda1_normalized for p in self.points])

    @property
    def distances(self) -> np.ndarray:
        return np.array([p.param_distance for p in self.points])

    def slope(self, which: str = "lambda1", window: tuple[float, float] | None = None) -> float:
        taus = self.taus
        y = self.lambda1 if which == "lambda1" else self.distances
        mask = np.ones(taus.size, bool) if window is None else (taus >= window[0]) & (taus <= window[1])
        if mask.sum() < 2:
            raise ValueError(f"slope window {window} holds fewer than two grid points")
        return float(np.polyfit(np.log(taus[mask]), np.log(y[mask]), 1)[0])

    def plateau(self) -> float:
        """Median of lambda1 over the three smallest tau values."""
        order = np.argsort(self.taus)[:PLATEAU_POINTS]
        return float(np.median(self.lambda1[order]))


def _check_grid(tau_grid: Sequence[float]) -> np.ndarray:
    g = np.asarray(tau_grid, dtype=float)
    if g.ndim != 1 or g.size == 0 or np.any(g <= 0) or np.any(np.diff(g) <= 0):
        raise ValueError("tau_grid must be strictly positive and strictly ascending")
    return g


def scan_point(builder, ansatz: AnsatzSet, spec: ConstraintSpec, tau: float,
               conserved: Sequence[np.ndarray] | None = None, exact_order: int | None = None) -> ScanPoint:
    block, fragments = builder(tau)
    data = build_constraint_matrix(block, ansatz, spec, tau)
    res = reconstruct(data.matrix, conserved)
    c_ex = exact_coefficients(fragments, ansatz, tau, exact_order, conserved)
    return ScanPoint(tau, res, unit(c_ex), aligned_distance(res.c_rec, c_ex), data.step_counts)


def tau_scan(builder, ansatz: AnsatzSet, spec: ConstraintSpec, tau_grid: Sequence[float],
             conserved: Sequence[np.ndarray] | None = None, exact_order: int | None = None) -> TauScan:
    """One reconstruction per tau; ``builder(tau)`` returns ``(block, fragments)``."""
    grid = _check_grid(tau_grid)
    points = []
    for tau in grid:
        pt = scan_point(builder, ansatz, spec, float(tau), conserved, exact_order)
        log.info("tau=%.4g lambda1=%.3e distance=%.3e", tau, pt.lambda1, pt.param_distance)
        points.append(pt)
    return TauScan(points, ansatz, spec)


def noise_threshold(n_con: int, n_ansatz: int, n_shots: float) -> float:
    """Expected small-tau floor of lambda1 for ``n_shots`` measurements per entry."""
    if math.isinf(n_shots):
        raise ValueError("noise threshold undefined for infinite shots")
    if n_shots <= 0:
        raise ValueError(f"n_shots must be positive, got {n_shots}")
    if n_con < n_ansatz:
        raise UnderdeterminedError(f"underdetermined: {n_con} constraints for {n_ansatz} terms")
    return math.sqrt((n_con - n_ansatz + 1) / n_shots)


# ---------------------------------------------------------------- threshold detection

def detect_threshold(taus: Sequence[float], values: Sequence[float], fit_points: int | None = None,
                     factor: float = 5.0) -> tuple[float, float]:
    """Bracket ``(tau_prev, tau_star)`` where ``values`` first exceed the small-tau power law by ``factor``.

    The power law is fitted on the first ``fit_points`` grid points (default: a
    third of the grid, at least three).
    """
    taus = np.asarray(taus, dtype=float)
    values = np.asarray(values, dtype=float)
    if taus.size < 8:
        raise ValueError(f"threshold detection needs at least 8 grid points, got {taus.size}")
    k = fit_points or max(3, taus.size // 3)
    slope, icpt = np.polyfit(np.log(taus[:k]), np.log(values[:k]), 1)
    pred = np.exp(icpt) * taus**slope
    for i in range(k, taus.size):
        if values[i] >= factor * pred[i]:
            return float(taus[i - 1]), float(taus[i])
    raise NoThresholdError("no threshold in range: the curve follows its small-tau power law")


def extrapolation_ratio(taus: Sequence[float], values: Sequence[float], at: float,
                        fit_points: int | None = None) -> float:
    """``value(at) / powerlaw(at)`` with the same fit as :func:`detect_threshold`."""
    taus = np.asarray(taus, dtype=float)
    values = np.asarray(values, dtype=float)
    k = fit_points or max(3, taus.size // 3)
    slope, icpt = np.polyfit(np.log(taus[:k]), np.log(values[:k]), 1)
    i = int(np.argmin(np.abs(taus - at)))
    return float(values[i] / (np.exp(icpt) * taus[i] ** slope))


# ---------------------------------------------------------------- overall scale

@dataclass(frozen=True)
class ScaleProbe:
    state: StateVector
    observable: PauliOperator
    n_steps: int


def ehrenfest_integrals(block, probe: ScaleProbe, operators: Sequence[PauliOperator], tau: float,
                        noise: NoiseModel = NoiseModel(), quadrature_order: int = 4,
                        stream: Sequence[int] = ()) -> tuple[float, np.ndarray]:
    """``(<A>_{n tau} - <A>_0, [int_0^{n tau} <-i[A, h]>_t dt for h in operators])``."""
    n = probe.observable.n_qubits
    a = probe.observable
    if probe.n_steps < 1:
        raise ValueError("scale probe needs at least one Trotter cycle")
    comms = [commutator(a, h) * (-1j) for h in operators]
    comms = [c.real() for c in comms]
    observables = [a] + comms
    nonzero = [i for i, op in enumerate(observables) if not op.is_zero()]
    strings = sorted({p for i in nonzero for p in observables[i]}, key=PauliString.sort_key)
    index = {p: k for k, p in enumerate(strings)}
    u = block_unitary(block, n)
    psi = probe.state.amplitudes.copy()
    table = np.zeros((probe.n_steps + 1, len(observables)))
    for t in range(probe.n_steps + 1):
        if t:
            psi = u @ psi
        vals = string_expectations(psi, strings)[:, 0]
        for i in nonzero:
            table[t, i] = sum(c.real * vals[index[p]] for p, c in observables[i].items())
    keys = [tuple(stream) + (STREAM_SCALE, tau_key(tau), t) for t in range(probe.n_steps + 1)]
    cols = [observables[i] for i in nonzero]
    table[:, nonzero] = sample_table(table[:, nonzero], cols, noise, keys)
    delta = table[-1, 0] - table[0, 0]
    integrals = integrate(table[:, 1:], tau, quadrature_order, axis=0)
    return float(delta), np.atleast_1d(integrals)


def reconstruct_scale(block, c_rec: np.ndarray, ansatz: AnsatzSet, probe: ScaleProbe, tau: float,
                      noise: NoiseModel = NoiseModel(), quadrature_order: int = 4,
                      tol: float = 1e-8) -> float:
    """Overall factor ``alpha`` such that ``alpha * c_rec`` reproduces the probe's time trace."""
    delta, integrals = ehrenfest_integrals(block, probe, ansatz.operators, tau, noise, quadrature_order)
    den = float(np.dot(c_rec, integrals))
    if abs(den) < tol:
        raise InsensitiveProbeError(
            f"insensitive probe: denominator {den:.2e} below {tol:g}; choose an observable that "
            "does not commute with the reconstructed generator"
        )
    return delta / den


def fit_generator_components(block, directions: Sequence[np.ndarray], ansatz: AnsatzSet,
                             probes: Sequence[ScaleProbe], tau: float, noise: NoiseModel = NoiseModel(),
                             quadrature_order: int = 4) -> np.ndarray:
    """Least-squares weights ``w`` with ``sum_k w_k d_k`` matching several probe time traces.

    With ``directions = [c_rec, q_1, ...]`` this fixes the overall scale together
    with the components along conserved directions ``q_i`` that the constraint
    matrix cannot see.
    """
    rows, rhs = [], []
    for k, probe in enumerate(probes):
        delta, integrals = ehrenfest_integrals(block, probe, ansatz.operators, tau, noise,
                                               quadrature_order, stream=(k,))
        rows.append([float(np.dot(d, integrals)) for d in directions])
        rhs.append(delta)
    sol, *_ = np.linalg.lstsq(np.array(rows), np.array(rhs), rcond=None)
    return sol


# ---------------------------------------------------------------- adaptive ansatz

@dataclass
class AdaptiveStep:
    ansatz_size: int
    added: str | None
    plateau: float
    threshold: float
    curve: np.ndarray  # rows (tau, lambda1)


@dataclass
class AdaptiveResult:
    ansatz: AnsatzSet
    audit: list[AdaptiveStep]
    unresolved: bool
    final_scan: TauScan


def adaptive_extend(builder, base_ansatz: AnsatzSet, candidate_pool: Mapping[str, AnsatzSet],
                    spec: ConstraintSpec, tau_grid: Sequence[float], max_iterations: int | None = None,
                    threshold: float | None = None) -> AdaptiveResult:
    """Grow the ansatz one candidate batch at a time until the small-tau plateau reaches the noise floor.

    Each iteration adds the batch whose inclusion gives the smallest lambda1 at
    the smallest tau. ``threshold`` defaults to the finite-shot noise floor.
    """
    grid = _check_grid(tau_grid)
    if threshold is None and spec.noise.is_exact:
        raise ValueError("adaptive_extend needs finite shots or an explicit threshold")
    ansatz = base_ansatz
    pool = dict(candidate_pool)
    audit: list[AdaptiveStep] = []
    limit = len(pool) if max_iterations is None else max_iterations
    while True:
        scan = tau_scan(builder, ansatz, spec, grid)
        n_con = scan.points[0].result.n_con
        thr = threshold if threshold is not None else noise_threshold(n_con, len(ansatz), spec.noise.n_shots)
        plateau = scan.plateau()
        curve = np.column_stack([scan.taus, scan.lambda1])
        audit.append(AdaptiveStep(len(ansatz), None, plateau, thr, curve))
        if plateau <= thr:
            return AdaptiveResult(ansatz, audit, False, scan)
        if not pool or len(audit) > limit:
            return AdaptiveResult(ansatz, audit, True, scan)
        tau0 = float(grid[0])
        block, _ = builder(tau0)
        union = ansatz.union(*pool.values())
        m_all = build_constraint_matrix(block, union, spec, tau0).matrix
        best_name, best_val = None, math.inf
        for name in sorted(pool):
            trial = ansatz | pool[name]
            cols = union.indices(trial.labels)
            val = reconstruct(m_all[:, cols]).lambda1
            if val < best_val:
                best_name, best_val = name, val
        ansatz = ansatz | pool.pop(best_name)
        audit[-1].added = best_name
        log.info("adaptive step: added %s (lambda1 at tau=%.3g -> %.3e)", best_name, tau0, best_val)


def pattern_batches(n_qubits: int, patterns: Sequence[Sequence[str]], tag="extra") -> dict[str, AnsatzSet]:
    """Candidate batches, each the union of all placements of a group of patterns."""
    out = {}
    for group in patterns:
        name = "+".join(group)
        out[name] = AnsatzSet.from_patterns(n_qubits, list(group), tag)
    return out


# ---------------------------------------------------------------- optimal Trotter step

@dataclass
class OptimalTau:
    tau_opt: float
    taus: np.ndarray
    distances: np.ndarray
    lambda1: np.ndarray


def optimal_tau(builder, target_coeffs: np.ndarray, ansatz: AnsatzSet, spec: ConstraintSpec,
                tau_grid: Sequence[float]) -> OptimalTau:
    """Grid point minimizing ``||c_targ - c_rec||`` (both normalized); ties go to the smaller tau."""
    grid = _check_grid(tau_grid)
    target = unit(np.asarray(target_coeffs, dtype=float))
    dist, lam = [], []
    for tau in grid:
        block, _ = builder(float(tau))
        res = reconstruct(build_constraint_matrix(block, ansatz, spec, float(tau)).matrix)
        dist.append(aligned_distance(res.c_rec, target))
        lam.append(res.lambda1)
    dist = np.array(dist)
    i = int(np.flatnonzero(dist == dist.min())[0])
    out = OptimalTau(float(grid[i]), grid, dist, np.array(lam))
    if i == 0 or i == grid.size - 1:
        raise NoInteriorMinimumError(
            f"no interior minimum: distance is smallest at the grid edge tau={grid[i]:.4g}", out
        )
    return out


# ---------------------------------------------------------------- gate design

@dataclass
class GateDesignStep:
    tau: float
    j_b: float
    delta_j: float
    lambda1: float
    lambda1_normalized: float
    c0_norm: float


@dataclass
class GateDesignResult:
    j_b: float
    audit: list[GateDesignStep]
    threshold: float
    converged: bool

    @property
    def n_evaluations(self) -> int:
        return len(self.audit)


def _golden_section(f, a: float, b: float, n_eval: int, stop) -> None:
    inv_phi = (math.sqrt(5) - 1) / 2
    x1 = b - inv_phi * (b - a)
    x2 = a + inv_phi * (b - a)
    f1, f2 = f(x1), f(x2)
    used = 2
    while used < n_eval and not stop():
        if f1 < f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - inv_phi * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + inv_phi * (b - a)
            f2 = f(x2)
        used += 1


def gate_design_loop(builder_for: Callable[[float], Callable], j_forward: float, j_b0: float,
                     ansatz_a1: AnsatzSet, ansatz_a0: AnsatzSet, spec: ConstraintSpec,
                     tau_schedule: Sequence[float], budget: int = 60, bracket_scale: float = 1.5,
                     threshold: float | None = None) -> GateDesignResult:
    """Tune the backward coupling ``J_b`` so that lambda1 of the first-order ansatz reaches the noise floor.

    ``builder_for(j_b)`` returns a tau-builder. The search runs a golden-section
    stage per entry of ``tau_schedule`` (descending), each on the bracket
    ``best +- bracket_scale * tau`` around the best point so far: with total
    times growing like ``1/tau`` the basin of the cost narrows with ``tau``, so
    coarse steps locate it and fine steps resolve it. The last entry is the
    fixed small step at which termination is judged. Every evaluation also
    records the norm of the zeroth-order coefficients reconstructed with ``A0 | A1``.
    """
    taus = [float(t) for t in tau_schedule]
    if not taus or any(t <= 0 for t in taus):
        raise ValueError("tau_schedule must contain positive steps")
    if budget < 1:
        raise ValueError("optimizer budget must be positive")
    full = ansatz_a0 | ansatz_a1
    idx0 = [i for i, t in enumerate(full.order_tags) if t == 0]
    tau_fin = taus[-1]
    n_con = spec.n_con(tau_fin)
    thr = threshold if threshold is not None else noise_threshold(n_con, len(ansatz_a1), spec.noise.n_shots)
    audit: list[GateDesignStep] = []
    cache: dict[tuple[float, float], float] = {}
    best = {"jb": float(j_b0), "val": math.inf}

    def evaluate(jb: float, tau: float) -> float:
        key = (tau, jb)
        if key in cache:
            return cache[key]
        if len(audit) >= budget:
            return math.inf
        block, _ = builder_for(jb)(tau)
        res = reconstruct(build_constraint_matrix(block, ansatz_a1, spec, tau).matrix)
        full_res = reconstruct(build_constraint_matrix(block, full, spec, tau).matrix)
        audit.append(GateDesignStep(tau, jb, abs(jb - j_forward), res.lambda1, res.lambda1_normalized,
                                    float(np.linalg.norm(full_res.c_rec[idx0]))))
        cache[key] = res.lambda1
        log.debug("gate design: tau=%.4g J_b=%.6f lambda1=%.3e", tau, jb, res.lambda1)
        return res.lambda1

    def done() -> bool:
        return any(s.tau == tau_fin and s.lambda1 <= thr for s in audit) or len(audit) >= budget

    per_stage = max(3, budget // len(taus))
    evaluate(best["jb"], tau_fin)
    for k, tau in enumerate(taus):
        if done():
            break
        start = evaluate(best["jb"], tau)
        stage_best = (start, best["jb"])
        if done():
            break
        half = bracket_scale * tau
        _golden_section(lambda x: evaluate(x, tau), best["jb"] - half, best["jb"] + half,
                        per_stage if k < len(taus) - 1 else budget, done)
        for s in audit:
            if s.tau == tau and s.lambda1 < stage_best[0]:
                stage_best = (s.lambda1, s.j_b)
        best["jb"] = stage_best[1]
        if done():
            break
    final = [s for s in audit if s.tau == tau_fin]
    if not final:
        evaluate(best["jb"], tau_fin)
        final = [s for s in audit if s.tau == tau_fin]
    best_step = min(final, key=lambda s: s.lambda1)
    converged = best_step.lambda1 <= thr
    if not converged:
        log.warning("gate design: budget of %d evaluations exhausted above the noise floor", budget)
    return GateDesignResult(best_step.j_b, audit, thr, converged)


def null_directions(m: np.ndarray, k: int, conserved: Sequence[np.ndarray] | None = None) -> np.ndarray:
    """The ``k`` right singular vectors of ``M`` with the smallest singular values, shape ``(k, N_A)``.

    Used when the generator is only pinned down up to a few near-degenerate
    directions (for instance a target made of commuting parts); the weights are
    then fixed with :func:`fit_generator_components`.
    """
    m = np.asarray(m, dtype=float)
    if not 1 <= k <= m.shape[1]:
        raise ValueError(f"k must be between 1 and {m.shape[1]}, got {k}")
    basis = _complement_basis(m.shape[1], conserved) if conserved else None
    mw = m if basis is None else m @ basis
    _, _, vt = np.linalg.svd(mw, full_matrices=False)
    vecs = vt[::-1][:k]
    if basis is not None:
        vecs = (basis @ vecs.T).T
    return np.array([_fix_sign(v) for v in vecs])
