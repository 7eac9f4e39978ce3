"""Trotter-block builders for the spin models used in the learning experiments.

Each builder returns ``(block, fragments)``: ``block`` is the gate list that a
device would run (including basis-change rotations), and ``fragments`` is the
sequence of effective layer generators ``H_j`` such that the nominal block
equals ``prod_j exp(-i H_j tau)`` with the first fragment applied first.
With rotation errors switched on the block no longer factorizes this way and
``fragments`` describes the error-free layers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .magnus import FragmentSequence
from .pauli import PauliOperator, PauliString, pattern_string, sigma_minus
from .simulator import GateSpec, LindbladGateSpec, derive_rng

Builder = Callable[[float], tuple[list, FragmentSequence]]

QUARTER = math.pi / 4

# single-site conjugation R P R^dag under R = exp(-i pi/4 sigma^axis): letter -> (sign, letter)
_CLIFFORD = {
    "Z": {"X": (1, "Y"), "Y": (-1, "X"), "Z": (1, "Z")},
    "Y": {"X": (-1, "Z"), "Y": (1, "Y"), "Z": (1, "X")},
    "X": {"X": (1, "X"), "Y": (1, "Z"), "Z": (-1, "Y")},
}


def quarter_rotate(op: PauliOperator, axis: str, sites: Sequence[int] | None = None) -> PauliOperator:
    """``R op R^dag`` with ``R = prod_{j in sites} exp(-i (pi/4) sigma^axis_j)``."""
    n = op.n_qubits
    sites = set(range(n) if sites is None else sites)
    table = _CLIFFORD[axis]
    terms = {}
    for p, c in op.items():
        sign = 1
        letters = {}
        for j in p.support:
            s, letter = table[p.letter(j)] if j in sites else (1, p.letter(j))
            sign *= s
            letters[j] = letter
        terms[PauliString.from_sites(n, letters)] = sign * c
    return PauliOperator(n, terms)


def site_sum(n_qubits: int, letter: str, coeffs) -> PauliOperator:
    coeffs = np.broadcast_to(np.asarray(coeffs, dtype=float), (n_qubits,))
    return PauliOperator(
        n_qubits, {PauliString.from_sites(n_qubits, {j: letter}): coeffs[j] for j in range(n_qubits)}
    )


def bond_sum(n_qubits: int, pattern: str, coeffs, bonds: Sequence[int] | None = None) -> PauliOperator:
    """``sum_j c_j P_j`` with ``pattern`` placed on sites ``j, j+1, ...``."""
    width = len(pattern)
    starts = list(range(n_qubits - width + 1)) if bonds is None else list(bonds)
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.ndim == 0:
        coeffs = np.full(n_qubits - width + 1, float(coeffs))
    return PauliOperator(n_qubits, {pattern_string(n_qubits, pattern, j): coeffs[j] for j in starts})


def _rotation_layer(n: int, axis: str, angles) -> GateSpec:
    return GateSpec(site_sum(n, axis, angles), 1.0)


# ---------------------------------------------------------------- XXZ chain

@dataclass(frozen=True)
class XXZParams:
    n_qubits: int
    jx: np.ndarray
    jy: np.ndarray
    jz: np.ndarray
    bx: np.ndarray
    by: np.ndarray | None = None
    bz: np.ndarray | None = None
    tau: float = 0.1

    def __post_init__(self):
        n = self.n_qubits
        if n < 2:
            raise ValueError(f"XXZ chain needs at least 2 sites, got {n}")
        for name, length in (("jx", n - 1), ("jy", n - 1), ("jz", n - 1), ("bx", n), ("by", n), ("bz", n)):
            val = getattr(self, name)
            if val is None:
                val = np.zeros(length)
            arr = np.asarray(val, dtype=float)
            if arr.ndim == 0:
                arr = np.full(length, float(arr))
            if arr.shape != (length,):
                raise ValueError(f"XXZParams.{name} has length {arr.size}, expected {length}")
            object.__setattr__(self, name, arr)

    @classmethod
    def uniform(cls, n_qubits: int, jx: float, jy: float, jz: float, bx: float, by: float = 0.0,
                bz: float = 0.0, tau: float = 0.1) -> XXZParams:
        return cls(n_qubits, jx, jy, jz, bx, by, bz, tau)

    @classmethod
    def disordered(cls, n_qubits: int, seed: int, tau: float = 0.1, jxy: float = 1.0, jxy_spread: float = 0.15,
                   jz: float = 0.7, jz_spread: float = 0.25, bx_spread: float = 0.75) -> XXZParams:
        """Random couplings ``J^{x,y} = jxy + U[-s, s]``, ``J^z = jz + U[-s', s']``, ``B^x = U[-b, b]``."""
        rng = derive_rng(seed, 0xC0)
        m = n_qubits - 1
        return cls(
            n_qubits,
            jxy + rng.uniform(-jxy_spread, jxy_spread, m),
            jxy + rng.uniform(-jxy_spread, jxy_spread, m),
            jz + rng.uniform(-jz_spread, jz_spread, m),
            rng.uniform(-bx_spread, bx_spread, n_qubits),
            tau=tau,
        )

    def hamiltonian(self) -> PauliOperator:
        n = self.n_qubits
        return (
            bond_sum(n, "XX", self.jx) + bond_sum(n, "YY", self.jy) + bond_sum(n, "ZZ", self.jz)
            + site_sum(n, "X", self.bx) + site_sum(n, "Y", self.by) + site_sum(n, "Z", self.bz)
        )


@dataclass(frozen=True)
class ErrorInjection:
    """Static control errors of the XXZ circuit.

    ``resource_deviation[j]`` is added to ``X_j X_{j+1}`` inside every XX-type
    entangling exponential. ``rotation_offsets[j]`` is added to the angle of
    every single-qubit rotation on site ``j``.
    """

    resource_deviation: tuple[PauliOperator, ...] | None = None
    rotation_offsets: np.ndarray | None = None

    def __post_init__(self):
        if self.resource_deviation is not None:
            object.__setattr__(self, "resource_deviation", tuple(self.resource_deviation))
            for j, v in enumerate(self.resource_deviation):
                if not v.is_hermitian():
                    raise ValueError(f"resource deviation on bond {j} is not Hermitian")
                if not set(v.support) <= {j, j + 1}:
                    raise ValueError(f"resource deviation on bond {j} acts outside sites {j}, {j + 1}")
        if self.rotation_offsets is not None:
            object.__setattr__(self, "rotation_offsets", np.asarray(self.rotation_offsets, dtype=float))

    @staticmethod
    def draw_rotation_offsets(n_qubits: int, delta: float, seed: int) -> np.ndarray:
        """Per-site offsets ``delta * u_j`` with ``u_j ~ U[-1, 1]`` fixed by ``seed``."""
        if delta < 0:
            raise ValueError(f"rotation error strength must be nonnegative, got {delta}")
        return delta * derive_rng(seed, 0xD0).uniform(-1.0, 1.0, n_qubits)

    @staticmethod
    def alpha_deviation(n_qubits: int, alpha) -> tuple[PauliOperator, ...]:
        """``V_{j,j+1} = a_j (X_j Z_{j+1} + Z_j X_{j+1}) + a_j^2 Z_j Z_{j+1}``."""
        alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (n_qubits - 1,))
        out = []
        for j, a in enumerate(alpha):
            out.append(PauliOperator(n_qubits, {
                pattern_string(n_qubits, "XZ", j): a,
                pattern_string(n_qubits, "ZX", j): a,
                pattern_string(n_qubits, "ZZ", j): a * a,
            }))
        return tuple(out)


def _xx_resource(p: XXZParams, couplings: np.ndarray, e: ErrorInjection) -> PauliOperator:
    n = p.n_qubits
    op = bond_sum(n, "XX", couplings)
    if e.resource_deviation is not None:
        if len(e.resource_deviation) != n - 1:
            raise ValueError(f"resource_deviation needs {n - 1} bonds, got {len(e.resource_deviation)}")
        for j, v in enumerate(e.resource_deviation):
            op = op + v * couplings[j]
    return op


def build_xxz_block(p: XXZParams, e: ErrorInjection | None = None) -> tuple[list[GateSpec], FragmentSequence]:
    """Field layer, then XX, YY and ZZ layers, each entangler built from the XX resource."""
    e = e or ErrorInjection()
    n, tau = p.n_qubits, p.tau
    off = np.zeros(n) if e.rotation_offsets is None else e.rotation_offsets
    if off.shape != (n,):
        raise ValueError(f"rotation_offsets has length {off.size}, expected {n}")
    block: list[GateSpec] = []
    fragments: list[PauliOperator] = []

    for axis, field_ in (("Z", p.bz), ("Y", p.by), ("X", p.bx)):
        if axis != "X" and not field_.any():
            continue
        block.append(_rotation_layer(n, axis, field_ * tau + off))
        fragments.append(site_sum(n, axis, field_))

    xx = _xx_resource(p, p.jx, e)
    block.append(GateSpec(xx, tau))
    fragments.append(xx)

    for axis, coup in (("Z", p.jy), ("Y", p.jz)):
        res = _xx_resource(p, coup, e)
        block.append(_rotation_layer(n, axis, -QUARTER + off))
        block.append(GateSpec(res, tau))
        block.append(_rotation_layer(n, axis, QUARTER + off))
        fragments.append(quarter_rotate(res, axis))

    return block, FragmentSequence(tuple(fragments))


def xxz_builder(p: XXZParams, e: ErrorInjection | None = None) -> Builder:
    return lambda tau: build_xxz_block(replace(p, tau=tau), e)


def xxz_jump_set(n_qubits: int, gamma_minus: float, gamma_zz: float, gamma_xxx: float) -> list[tuple[PauliOperator, float]]:
    """Decay on every site, ZZ dephasing on every bond, XXX on every interior triple."""
    jumps = [(sigma_minus(n_qubits, j), gamma_minus) for j in range(n_qubits)]
    jumps += [(PauliOperator.from_string(pattern_string(n_qubits, "ZZ", j)), gamma_zz) for j in range(n_qubits - 1)]
    jumps += [(PauliOperator.from_string(pattern_string(n_qubits, "XXX", j)), gamma_xxx) for j in range(n_qubits - 2)]
    return [(op, r) for op, r in jumps if r != 0] or []


def build_xxz_lindblad_block(p: XXZParams, jumps_per_gate: Sequence[tuple[PauliOperator, float]]) -> list[LindbladGateSpec]:
    """One dissipative gate per XXZ layer; every gate carries the whole jump set."""
    for op, rate in jumps_per_gate:
        if rate < 0:
            raise ValueError(f"jump rate must be nonnegative, got {rate}")
    _, frags = build_xxz_block(p)
    jumps = tuple((op, float(r)) for op, r in jumps_per_gate)
    return [LindbladGateSpec(h, jumps, p.tau) for h in frags]


def xxz_lindblad_builder(p: XXZParams, jumps_per_gate) -> Callable[[float], list[LindbladGateSpec]]:
    return lambda tau: build_xxz_lindblad_block(replace(p, tau=tau), jumps_per_gate)


# ---------------------------------------------------------------- Schwinger model

@dataclass(frozen=True)
class SchwingerParams:
    n_qubits: int
    J: float = 1.0
    w: float = 1.0
    m: float = 1.0
    tau: float = 0.1

    def __post_init__(self):
        if self.n_qubits < 2 or self.n_qubits % 2:
            raise ValueError(f"Schwinger chain needs an even number of sites, got {self.n_qubits}")

    def zz_coupling(self, i: int, j: int) -> float:
        """Long-range ZZ coupling for 1-indexed sites ``i < j < N``."""
        return 0.5 * self.J * (self.n_qubits - j)

    def parts(self) -> tuple[PauliOperator, PauliOperator, PauliOperator, PauliOperator]:
        """``(H_zz, hopping on odd bonds, hopping on even bonds, H_z)``; bonds are 1-indexed."""
        n = self.n_qubits
        zz = {}
        for i in range(1, n - 1):
            for j in range(i + 1, n):
                zz[PauliString.from_sites(n, {i - 1: "Z", j - 1: "Z"})] = self.zz_coupling(i, j)
        h_zz = PauliOperator(n, zz)
        h_odd = bond_sum(n, "XX", 0.5 * self.w, range(0, n - 1, 2)) + bond_sum(n, "YY", 0.5 * self.w, range(0, n - 1, 2))
        h_even = bond_sum(n, "XX", 0.5 * self.w, range(1, n - 1, 2)) + bond_sum(n, "YY", 0.5 * self.w, range(1, n - 1, 2))
        hz = np.array([0.5 * self.m * (-1) ** j for j in range(1, n + 1)])
        for j in range(1, n):
            if j % 2:
                hz[:j] -= 0.5 * self.J
        return h_zz, h_odd, h_even, site_sum(n, "Z", hz)

    def hamiltonian(self) -> PauliOperator:
        a, b, c, d = self.parts()
        return a + b + c + d


def build_schwinger_block(p: SchwingerParams) -> tuple[list[GateSpec], FragmentSequence]:
    """ZZ layer, hopping on odd then even bonds, then the longitudinal fields."""
    parts = p.parts()
    block = [GateSpec(h, p.tau) for h in parts if not h.is_zero()]
    return block, FragmentSequence(tuple(h for h in parts if not h.is_zero()))


def schwinger_builder(p: SchwingerParams) -> Builder:
    return lambda tau: build_schwinger_block(replace(p, tau=tau))


# ---------------------------------------------------------------- cluster model

@dataclass(frozen=True)
class ClusterParams:
    """Forward coupling ``J``; backward coupling ``J_b`` (scalar or one value per backward gate)."""

    n_qubits: int
    J: float = 1.0
    J_b: float | tuple[float, float, float, float] = 1.0
    tau: float = 0.1

    def __post_init__(self):
        if self.n_qubits < 3:
            raise ValueError(f"cluster chain needs at least 3 sites, got {self.n_qubits}")
        jb = np.atleast_1d(np.asarray(self.J_b, dtype=float))
        if jb.size not in (1, 4):
            raise ValueError("J_b must be a scalar or have one entry per backward gate (4)")

    def backward(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.J_b, dtype=float), (4,)).copy()

    @property
    def delta_j(self) -> float:
        return float(np.max(np.abs(self.backward() - self.J)))


def _yx_layer(n: int, coupling: float, tau: float, bonds: Sequence[int]) -> tuple[list[GateSpec], PauliOperator]:
    """``exp(-i tau c sum_b Y_b X_{b+1})`` built as R_z(pi/4) XX R_z(-pi/4) on the bond's first site."""
    first = list(bonds)
    xx = bond_sum(n, "XX", coupling, first)
    rz = PauliOperator(n, {PauliString.from_sites(n, {b: "Z"}): 1.0 for b in first})
    gates = [GateSpec(rz, -QUARTER), GateSpec(xx, tau), GateSpec(rz, QUARTER)]
    return gates, quarter_rotate(xx, "Z", first)


def build_cluster_block(p: ClusterParams) -> tuple[list[GateSpec], FragmentSequence]:
    """Backward YX and XX evolutions with ``J_b``, then forward YX and XX with ``J``."""
    n, tau, J = p.n_qubits, p.tau, p.J
    odd = range(0, n - 1, 2)   # bonds (1,2), (3,4), ... in 1-indexed sites
    even = range(1, n - 1, 2)
    jb = p.backward()
    block: list[GateSpec] = []
    frags: list[PauliOperator] = []

    def yx(coupling, bonds):
        gates, frag = _yx_layer(n, coupling, tau, bonds)
        block.extend(gates)
        frags.append(frag)

    def xx(coupling):
        op = bond_sum(n, "XX", coupling)
        block.append(GateSpec(op, tau))
        frags.append(op)

    yx(-jb[0] / 2, odd)
    yx(-jb[1], even)
    yx(-jb[2] / 2, odd)
    xx(-jb[3])
    yx(J / 2, odd)
    yx(J, even)
    yx(J / 2, odd)
    xx(J)
    return block, FragmentSequence(tuple(f for f in frags if not f.is_zero()))


def cluster_builder(p: ClusterParams) -> Builder:
    return lambda tau: build_cluster_block(replace(p, tau=tau))


def cluster_target(n_qubits: int, J: float = 1.0) -> PauliOperator:
    """Leading generator ``2J (sum X Z X + sum_{j<N} Z_j)`` of the balanced sequence."""
    return bond_sum(n_qubits, "XZX", 2 * J) + site_sum(n_qubits, "Z", [2 * J] * (n_qubits - 1) + [0.0])
