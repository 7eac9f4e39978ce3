"""Pauli strings and weighted sums of Pauli strings.

An N-qubit Pauli string is stored as a pair of bit masks ``(x_mask, z_mask)``;
bit ``j`` of each mask refers to site ``j`` (0-indexed):

    (x, z) = (0, 0) -> I,  (1, 0) -> X,  (0, 1) -> Z,  (1, 1) -> Y

so that ``P = i^{|x & z|} X^x Z^z``. Dense matrices use the little-endian
convention: site ``j`` is bit ``j`` of the computational-basis index, i.e. the
dense matrix is ``kron(P_{N-1}, ..., P_1, P_0)``.

Text labels are 1-indexed with identity sites omitted (``"X1Z2"``); the
identity string is ``"ID"``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from numbers import Number
from typing import Iterable, Mapping

import numpy as np

PRUNE_TOL = 1e-12
MAX_DENSE_QUBITS = 14

_IPOW = (1, 1j, -1, -1j)
_LABEL_RE = re.compile(r"([XYZ])(\d+)")


def _popcount(v: int) -> int:
    return bin(v).count("1")


@dataclass(frozen=True, slots=True)
class PauliString:
    n_qubits: int
    x_mask: int = 0
    z_mask: int = 0

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError(f"n_qubits must be positive, got {self.n_qubits}")
        full = (1 << self.n_qubits) - 1
        if self.x_mask & ~full or self.z_mask & ~full or self.x_mask < 0 or self.z_mask < 0:
            raise ValueError("mask has bits outside the register")

    @classmethod
    def identity(cls, n_qubits: int) -> PauliString:
        return cls(n_qubits)

    @classmethod
    def from_sites(cls, n_qubits: int, sites: Mapping[int, str]) -> PauliString:
        """Build a string from ``{site: letter}`` with 0-indexed sites."""
        x = z = 0
        for site, letter in sites.items():
            if not 0 <= site < n_qubits:
                raise ValueError(f"site {site} outside register of {n_qubits} qubits")
            letter = letter.upper()
            if letter in ("X", "Y"):
                x |= 1 << site
            if letter in ("Z", "Y"):
                z |= 1 << site
            if letter not in ("I", "X", "Y", "Z"):
                raise ValueError(f"unknown Pauli letter {letter!r}")
        return cls(n_qubits, x, z)

    @classmethod
    def from_label(cls, label: str, n_qubits: int) -> PauliString:
        label = label.strip()
        if label == "ID":
            return cls(n_qubits)
        parts = _LABEL_RE.findall(label)
        if not parts or "".join(f"{a}{b}" for a, b in parts) != label:
            raise ValueError(f"malformed Pauli label {label!r}")
        sites = {}
        for letter, num in parts:
            site = int(num) - 1
            if site in sites:
                raise ValueError(f"site {num} repeated in label {label!r}")
            sites[site] = letter
        return cls.from_sites(n_qubits, sites)

    def letter(self, site: int) -> str:
        x = (self.x_mask >> site) & 1
        z = (self.z_mask >> site) & 1
        return "IXZY"[x | (z << 1)]

    @property
    def label(self) -> str:
        if self.x_mask == 0 and self.z_mask == 0:
            return "ID"
        return "".join(
            f"{self.letter(j)}{j + 1}" for j in range(self.n_qubits) if self.letter(j) != "I"
        )

    @property
    def support(self) -> tuple[int, ...]:
        m = self.x_mask | self.z_mask
        return tuple(j for j in range(self.n_qubits) if (m >> j) & 1)

    @property
    def weight(self) -> int:
        return _popcount(self.x_mask | self.z_mask)

    @property
    def y_count(self) -> int:
        return _popcount(self.x_mask & self.z_mask)

    def commutes_with(self, other: PauliString) -> bool:
        return (
            _popcount(self.x_mask & other.z_mask) + _popcount(self.z_mask & other.x_mask)
        ) % 2 == 0

    def sort_key(self) -> tuple[int, int]:
        return (self.z_mask, self.x_mask)

    def __repr__(self) -> str:
        return f"PauliString({self.label}, n={self.n_qubits})"


def multiply(p: PauliString, q: PauliString) -> tuple[complex, PauliString]:
    """Return ``(phase, r)`` with ``phase * r == p @ q`` and phase a power of i."""
    if p.n_qubits != q.n_qubits:
        raise ValueError(f"size mismatch: {p.n_qubits} vs {q.n_qubits} qubits")
    x = p.x_mask ^ q.x_mask
    z = p.z_mask ^ q.z_mask
    k = (
        _popcount(p.x_mask & p.z_mask)
        + _popcount(q.x_mask & q.z_mask)
        + 2 * _popcount(p.z_mask & q.x_mask)
        - _popcount(x & z)
    ) % 4
    return _IPOW[k], PauliString(p.n_qubits, x, z)


def _phase_power(p: PauliString, q: PauliString) -> int:
    x = p.x_mask ^ q.x_mask
    z = p.z_mask ^ q.z_mask
    return (
        _popcount(p.x_mask & p.z_mask)
        + _popcount(q.x_mask & q.z_mask)
        + 2 * _popcount(p.z_mask & q.x_mask)
        - _popcount(x & z)
    ) % 4


class PauliOperator:
    """Immutable weighted sum of Pauli strings on a fixed register."""

    __slots__ = ("n_qubits", "_terms")

    def __init__(self, n_qubits: int, terms: Mapping[PauliString, complex] | None = None):
        if n_qubits < 1:
            raise ValueError(f"n_qubits must be positive, got {n_qubits}")
        self.n_qubits = n_qubits
        clean = {}
        for p, c in (terms or {}).items():
            if p.n_qubits != n_qubits:
                raise ValueError(f"size mismatch: term on {p.n_qubits} qubits in {n_qubits}-qubit operator")
            c = complex(c)
            if abs(c) >= PRUNE_TOL:
                clean[p] = c
        self._terms = dict(sorted(clean.items(), key=lambda kv: kv[0].sort_key()))

    # construction helpers
    @classmethod
    def zero(cls, n_qubits: int) -> PauliOperator:
        return cls(n_qubits)

    @classmethod
    def identity(cls, n_qubits: int, coeff: complex = 1.0) -> PauliOperator:
        return cls(n_qubits, {PauliString(n_qubits): coeff})

    @classmethod
    def from_string(cls, p: PauliString, coeff: complex = 1.0) -> PauliOperator:
        return cls(p.n_qubits, {p: coeff})

    @classmethod
    def from_label(cls, label: str, n_qubits: int, coeff: complex = 1.0) -> PauliOperator:
        return cls(n_qubits, {PauliString.from_label(label, n_qubits): coeff})

    @classmethod
    def from_sites(cls, n_qubits: int, sites: Mapping[int, str], coeff: complex = 1.0) -> PauliOperator:
        return cls(n_qubits, {PauliString.from_sites(n_qubits, sites): coeff})

    @classmethod
    def from_terms(cls, n_qubits: int, pairs: Iterable[tuple[PauliString, complex]]) -> PauliOperator:
        acc: dict[PauliString, complex] = {}
        for p, c in pairs:
            acc[p] = acc.get(p, 0.0) + c
        return cls(n_qubits, acc)

    # mapping-like access
    @property
    def terms(self) -> dict[PauliString, complex]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def strings(self) -> list[PauliString]:
        return list(self._terms)

    def coefficient(self, p: PauliString) -> complex:
        return self._terms.get(p, 0.0)

    def __len__(self) -> int:
        return len(self._terms)

    def __iter__(self):
        return iter(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    # predicates and norms
    def is_hermitian(self, tol: float = PRUNE_TOL) -> bool:
        return all(abs(c.imag) <= tol for c in self._terms.values())

    @property
    def support(self) -> tuple[int, ...]:
        sites = set()
        for p in self._terms:
            sites.update(p.support)
        return tuple(sorted(sites))

    def norm(self) -> float:
        """Euclidean norm of the coefficient vector (= ||A||_F / 2^{N/2})."""
        return float(np.sqrt(sum(abs(c) ** 2 for c in self._terms.values())))

    def strings_commute(self) -> bool:
        ps = list(self._terms)
        return all(ps[i].commutes_with(ps[j]) for i in range(len(ps)) for j in range(i + 1, len(ps)))

    # arithmetic
    def _check(self, other: PauliOperator) -> None:
        if other.n_qubits != self.n_qubits:
            raise ValueError(f"size mismatch: {self.n_qubits} vs {other.n_qubits} qubits")

    def __add__(self, other):
        if isinstance(other, Number):
            other = PauliOperator.identity(self.n_qubits, other)
        if not isinstance(other, PauliOperator):
            return NotImplemented
        self._check(other)
        acc = dict(self._terms)
        for p, c in other._terms.items():
            acc[p] = acc.get(p, 0.0) + c
        return PauliOperator(self.n_qubits, acc)

    __radd__ = __add__

    def __neg__(self):
        return PauliOperator(self.n_qubits, {p: -c for p, c in self._terms.items()})

    def __sub__(self, other):
        if isinstance(other, Number):
            other = PauliOperator.identity(self.n_qubits, other)
        if not isinstance(other, PauliOperator):
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Number):
            return PauliOperator(self.n_qubits, {p: c * other for p, c in self._terms.items()})
        if not isinstance(other, PauliOperator):
            return NotImplemented
        self._check(other)
        acc: dict[PauliString, complex] = {}
        for p, a in self._terms.items():
            for q, b in other._terms.items():
                k = _phase_power(p, q)
                r = PauliString(self.n_qubits, p.x_mask ^ q.x_mask, p.z_mask ^ q.z_mask)
                acc[r] = acc.get(r, 0.0) + _IPOW[k] * a * b
        return PauliOperator(self.n_qubits, acc)

    def __rmul__(self, other):
        if isinstance(other, Number):
            return self * other
        return NotImplemented

    def __truediv__(self, other):
        if isinstance(other, Number):
            return self * (1.0 / other)
        return NotImplemented

    __matmul__ = __mul__

    def adjoint(self) -> PauliOperator:
        return PauliOperator(self.n_qubits, {p: c.conjugate() for p, c in self._terms.items()})

    def real(self) -> PauliOperator:
        """Drop imaginary parts of coefficients (Hermitian part in the Pauli basis)."""
        return PauliOperator(self.n_qubits, {p: c.real for p, c in self._terms.items()})

    # comparison
    def __eq__(self, other):
        if not isinstance(other, PauliOperator):
            return NotImplemented
        return self.n_qubits == other.n_qubits and self._terms == other._terms

    def __hash__(self):
        return hash((self.n_qubits, tuple(self._terms.items())))

    def allclose(self, other: PauliOperator, atol: float = 1e-12) -> bool:
        self._check(other)
        keys = set(self._terms) | set(other._terms)
        return all(abs(self.coefficient(p) - other.coefficient(p)) <= atol for p in keys)

    def __repr__(self):
        if not self._terms:
            return f"PauliOperator(0, n={self.n_qubits})"
        body = " + ".join(f"({c:.6g})*{p.label}" for p, c in list(self._terms.items())[:8])
        more = " + ..." if len(self._terms) > 8 else ""
        return f"PauliOperator({body}{more}, n={self.n_qubits})"

    # serialization
    def to_text(self) -> str:
        lines = [f"{c.real:.17g} {c.imag:.17g} {p.label}" for p, c in self._terms.items()]
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_text(cls, text: str, n_qubits: int) -> PauliOperator:
        pairs = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            if len(fields) != 3:
                raise ValueError(f"line {lineno}: expected '<re> <im> <label>', got {line!r}")
            pairs.append((PauliString.from_label(fields[2], n_qubits), complex(float(fields[0]), float(fields[1]))))
        return cls.from_terms(n_qubits, pairs)

    def to_dense(self) -> np.ndarray:
        return to_dense(self)


def commutator(a: PauliOperator, b: PauliOperator) -> PauliOperator:
    """``[A, B] = AB - BA``; only anticommuting string pairs contribute."""
    if a.n_qubits != b.n_qubits:
        raise ValueError(f"size mismatch: {a.n_qubits} vs {b.n_qubits} qubits")
    acc: dict[PauliString, complex] = {}
    for p, ca in a.items():
        for q, cb in b.items():
            if p.commutes_with(q):
                continue
            k = _phase_power(p, q)
            r = PauliString(a.n_qubits, p.x_mask ^ q.x_mask, p.z_mask ^ q.z_mask)
            # pq = -qp, so [p, q] = 2 pq
            acc[r] = acc.get(r, 0.0) + 2 * _IPOW[k] * ca * cb
    return PauliOperator(a.n_qubits, acc)


def string_action(p: PauliString) -> tuple[np.ndarray, np.ndarray]:
    """Sparse action of ``p`` on basis vectors: ``(P psi)[c] = phase[c] * psi[perm[c]]``."""
    d = 1 << p.n_qubits
    idx = np.arange(d, dtype=np.int64)
    perm = idx ^ p.x_mask
    signs = 1 - 2 * (np.bitwise_count(perm & p.z_mask) & 1).astype(np.int64)
    phase = _IPOW[p.y_count % 4] * signs.astype(complex)
    return perm, phase


def to_dense(a: PauliOperator) -> np.ndarray:
    n = a.n_qubits
    if n > MAX_DENSE_QUBITS:
        raise ValueError(f"dense conversion limited to {MAX_DENSE_QUBITS} qubits, got {n}")
    d = 1 << n
    out = np.zeros((d, d), dtype=complex)
    cols = np.arange(d, dtype=np.int64)
    for p, c in a.items():
        # P|col> = i^y (-1)^{|z & col|} |col ^ x>
        signs = 1 - 2 * (np.bitwise_count(cols & p.z_mask) & 1).astype(np.int64)
        out[cols ^ p.x_mask, cols] += c * _IPOW[p.y_count % 4] * signs
    return out


def _walsh_hadamard(v: np.ndarray, n: int) -> np.ndarray:
    """Unnormalized WHT along the last axis: ``W[..., z] = sum_c (-1)^{|z&c|} v[..., c]``."""
    lead = v.shape[:-1]
    w = v.reshape(lead + (2,) * n).copy()
    for ax in range(len(lead), len(lead) + n):
        a = np.take(w, 0, axis=ax)
        b = np.take(w, 1, axis=ax)
        w = np.stack((a + b, a - b), axis=ax)
    return w.reshape(lead + (1 << n,))


def pauli_decompose(m: np.ndarray, n_qubits: int | None = None) -> PauliOperator:
    """Coefficients ``c_P = tr(P M) / 2^N`` of a dense ``2^N x 2^N`` matrix."""
    m = np.asarray(m, dtype=complex)
    d = m.shape[0]
    if m.ndim != 2 or m.shape[1] != d or d < 2 or d & (d - 1):
        raise ValueError(f"matrix dimension must be a power of two, got shape {m.shape}")
    n = d.bit_length() - 1
    if n_qubits is not None and n_qubits != n:
        raise ValueError(f"matrix of dimension {d} does not act on {n_qubits} qubits")
    cols = np.arange(d, dtype=np.int64)
    terms = {}
    chunk = max(1, (1 << 20) // d)
    for x0 in range(0, d, chunk):
        xs = np.arange(x0, min(d, x0 + chunk), dtype=np.int64)
        # tr(P M) = i^y sum_c (-1)^{|z & c|} M[c, c ^ x]
        v = m[cols[None, :], cols[None, :] ^ xs[:, None]]
        w = _walsh_hadamard(v, n) / d
        for row, x in enumerate(xs):
            for z in np.nonzero(np.abs(w[row]) >= PRUNE_TOL)[0]:
                z = int(z)
                y = _popcount(int(x) & z)
                terms[PauliString(n, int(x), z)] = _IPOW[y % 4] * w[row, z]
    return PauliOperator(n, terms)


def pauli_sum(n_qubits: int, ops: Iterable[PauliOperator]) -> PauliOperator:
    acc: dict[PauliString, complex] = {}
    for op in ops:
        if op.n_qubits != n_qubits:
            raise ValueError("size mismatch in pauli_sum")
        for p, c in op.items():
            acc[p] = acc.get(p, 0.0) + c
    return PauliOperator(n_qubits, acc)


def pattern_string(n_qubits: int, pattern: str, start: int) -> PauliString:
    """Place ``pattern`` (e.g. ``"XZX"``) on consecutive sites starting at ``start``."""
    return PauliString.from_sites(n_qubits, {start + k: ch for k, ch in enumerate(pattern) if ch != "I"})


def sigma_minus(n_qubits: int, site: int) -> PauliOperator:
    """Lowering operator ``|0><1| = (X + iY)/2`` on ``site`` (``|1>`` is the excited state)."""
    return PauliOperator.from_sites(n_qubits, {site: "X"}, 0.5) + PauliOperator.from_sites(
        n_qubits, {site: "Y"}, 0.5j
    )
