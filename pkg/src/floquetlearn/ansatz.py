"""Labeled sets of candidate operators for the learning engines."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .pauli import PauliOperator, PauliString, pattern_string

# Magnus-order patterns of the XXZ circuit (field layer first).
XXZ_ORDER0 = ("Z", "ZZ", "XX", "YY", "X")
XXZ_ORDER1 = ("Y", "ZY", "YZ", "XY", "YX", "XZY", "YZX", "XYZ", "YXZ", "ZXY", "ZYX")
CLUSTER_ORDER0 = ("XX", "YX")
CLUSTER_ORDER1 = ("XZX", "Z")


@dataclass(frozen=True)
class AnsatzSet:
    terms: tuple[tuple[str, PauliOperator], ...]
    order_tags: tuple = ()

    def __post_init__(self):
        terms = tuple((str(l), op) for l, op in self.terms)
        tags = tuple(self.order_tags) if self.order_tags else (0,) * len(terms)
        if len(tags) != len(terms):
            raise ValueError(f"{len(tags)} order tags for {len(terms)} terms")
        labels = [l for l, _ in terms]
        if len(set(labels)) != len(labels):
            dup = sorted({l for l in labels if labels.count(l) > 1})
            raise ValueError(f"duplicate ansatz labels: {dup[:5]}")
        if terms:
            n = terms[0][1].n_qubits
            for l, op in terms:
                if op.n_qubits != n:
                    raise ValueError(f"ansatz term {l} acts on {op.n_qubits} qubits, expected {n}")
                if not op.is_hermitian():
                    raise ValueError(f"ansatz term {l} is not Hermitian")
                if op.is_zero():
                    raise ValueError(f"ansatz term {l} is the zero operator")
        for t in tags:
            if t not in (0, 1, 2, "extra"):
                raise ValueError(f"order tag must be 0, 1, 2 or 'extra', got {t!r}")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "order_tags", tags)

    # construction
    @classmethod
    def from_strings(cls, strings: Iterable[PauliString], tag=0) -> AnsatzSet:
        strings = list(strings)
        return cls(tuple((p.label, PauliOperator.from_string(p)) for p in strings), (tag,) * len(strings))

    @classmethod
    def from_patterns(cls, n_qubits: int, patterns: Sequence[str], tag=0) -> AnsatzSet:
        """Every placement of each contiguous pattern, pattern-major order."""
        strings = []
        for pat in patterns:
            for j in range(n_qubits - len(pat) + 1):
                strings.append(pattern_string(n_qubits, pat, j))
        return cls.from_strings(strings, tag)

    @classmethod
    def from_operator(cls, op: PauliOperator, tag=0) -> AnsatzSet:
        return cls.from_strings([p for p in op if p.weight > 0], tag)

    def union(self, *others: AnsatzSet) -> AnsatzSet:
        """Concatenate, skipping terms whose label is already present."""
        terms = list(self.terms)
        tags = list(self.order_tags)
        seen = set(self.labels)
        for other in others:
            for (l, op), t in zip(other.terms, other.order_tags):
                if l not in seen:
                    terms.append((l, op))
                    tags.append(t)
                    seen.add(l)
        return AnsatzSet(tuple(terms), tuple(tags))

    def __or__(self, other: AnsatzSet) -> AnsatzSet:
        return self.union(other)

    def subset(self, labels: Iterable[str]) -> AnsatzSet:
        idx = self.indices(labels)
        return AnsatzSet(tuple(self.terms[i] for i in idx), tuple(self.order_tags[i] for i in idx))

    # access
    def __len__(self) -> int:
        return len(self.terms)

    @property
    def n_qubits(self) -> int:
        return self.terms[0][1].n_qubits

    @property
    def labels(self) -> list[str]:
        return [l for l, _ in self.terms]

    @property
    def operators(self) -> list[PauliOperator]:
        return [op for _, op in self.terms]

    @property
    def max_order(self) -> int:
        numeric = [t for t in self.order_tags if t != "extra"]
        return max(numeric) if numeric else 0

    def indices(self, labels: Iterable[str]) -> list[int]:
        pos = {l: i for i, l in enumerate(self.labels)}
        missing = [l for l in labels if l not in pos]
        if missing:
            raise KeyError(f"labels not in ansatz: {missing[:5]}")
        return [pos[l] for l in labels]

    def pattern_indices(self, pattern: str) -> list[int]:
        """Indices of single-string terms whose letters (left to right) spell ``pattern``."""
        out = []
        for i, op in enumerate(self.operators):
            if len(op) != 1:
                continue
            p = op.strings()[0]
            if "".join(p.letter(j) for j in p.support) == pattern:
                out.append(i)
        return out

    # coefficient vectors
    def _basis(self) -> tuple[list[PauliString], np.ndarray]:
        strings = sorted({p for op in self.operators for p in op}, key=PauliString.sort_key)
        index = {p: k for k, p in enumerate(strings)}
        mat = np.zeros((len(strings), len(self)))
        for j, op in enumerate(self.operators):
            for p, c in op.items():
                mat[index[p], j] = c.real
        return strings, mat

    def coefficients(self, op: PauliOperator) -> np.ndarray:
        """Least-squares coefficients of ``op`` in the span of the terms (Pauli inner product)."""
        strings, mat = self._basis()
        target = np.array([op.coefficient(p).real for p in strings])
        sol, *_ = np.linalg.lstsq(mat, target, rcond=None)
        return sol

    def operator(self, coeffs: Sequence[float]) -> PauliOperator:
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (len(self),):
            raise ValueError(f"coefficient vector has shape {coeffs.shape}, expected ({len(self)},)")
        out = PauliOperator.zero(self.n_qubits)
        for c, op in zip(coeffs, self.operators):
            out = out + op * c
        return out


def xxz_ansatz(n_qubits: int, order: int, y_field: bool = False) -> AnsatzSet:
    """Site/bond-resolved ansatz for the XXZ circuit up to Magnus order 0 or 1.

    ``y_field`` adds single-site ``Y`` at order 0, needed when the circuit has a
    ``B^y`` layer; without it ``Y`` only appears as a first-order term.
    """
    if order not in (0, 1):
        raise ValueError(f"XXZ ansatz order must be 0 or 1, got {order}")
    a = AnsatzSet.from_patterns(n_qubits, XXZ_ORDER0, 0)
    if y_field:
        a = a | AnsatzSet.from_patterns(n_qubits, ("Y",), 0)
    if order == 1:
        a = a | AnsatzSet.from_patterns(n_qubits, XXZ_ORDER1, 1)
    return a


def cluster_ansatz(n_qubits: int, orders: Sequence[int] = (1,)) -> AnsatzSet:
    parts = []
    if 0 in orders:
        parts.append(AnsatzSet.from_patterns(n_qubits, CLUSTER_ORDER0, 0))
    if 1 in orders:
        parts.append(AnsatzSet.from_patterns(n_qubits, CLUSTER_ORDER1, 1))
    if not parts:
        raise ValueError("cluster ansatz needs order 0 and/or 1")
    return parts[0].union(*parts[1:])


def schwinger_ansatz(n_qubits: int, order: int) -> AnsatzSet:
    """All fields, all ZZ pairs and hopping bonds; order 1 adds the hopping-commutator strings.

    Order 1 covers ``XY``/``YX`` and ``XZY``/``YZX`` on neighbouring sites and a
    ``Z`` on any site outside an ``XY``/``YX`` bond.
    """
    if order not in (0, 1):
        raise ValueError(f"Schwinger ansatz order must be 0 or 1, got {order}")
    n = n_qubits
    s0 = [PauliString.from_sites(n, {j: "Z"}) for j in range(n)]
    s0 += [PauliString.from_sites(n, {i: "Z", j: "Z"}) for i in range(n) for j in range(i + 1, n)]
    s0 += [pattern_string(n, pat, j) for pat in ("XX", "YY") for j in range(n - 1)]
    a = AnsatzSet.from_strings(s0, 0)
    if order == 1:
        s1 = [pattern_string(n, pat, j) for pat in ("XY", "YX") for j in range(n - 1)]
        s1 += [pattern_string(n, pat, j) for pat in ("XZY", "YZX") for j in range(n - 2)]
        for pat in ("XY", "YX"):
            for j in range(n - 1):
                for k in range(n):
                    if k not in (j, j + 1):
                        sites = {j: pat[0], j + 1: pat[1], k: "Z"}
                        s1.append(PauliString.from_sites(n, sites))
        a = a | AnsatzSet.from_strings(s1, 1)
    return a
