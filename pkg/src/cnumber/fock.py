"""Truncated multi-mode bosonic Fock spaces and ladder operators.

Each mode k carries its own occupation cap n_max(k).  Basis states are
ordered lexicographically with the zero mode (k = 0) as the slowest-varying
index, so that a state vector reshaped to ``(cap_0 + 1, dim_rest)`` splits
exactly into (zero-mode factor) x (remaining modes).

Ladder matrices follow the truncation convention that the raising operator
annihilates the cap state; normal-ordered products of them are then the
exact compression of the untruncated operator onto the capped space.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

DEFAULT_DIM_LIMIT = 20000


class SizingError(ValueError):
    """Requested truncation exceeds the configured dimension limit."""


@dataclass(frozen=True, order=True)
class ModeId:
    """A single-particle mode: integer label plus momentum vector.

    ``label`` is the integer lattice vector n with k = 2*pi*n/L; keeping the
    integer form makes momentum arithmetic exact.
    """

    index: int
    label: tuple[int, ...]
    momentum: tuple[float, ...] = field(compare=False, hash=False)

    @property
    def is_zero(self) -> bool:
        return all(n == 0 for n in self.label)


def make_modes(labels: Iterable[Sequence[int]], box_length: float) -> tuple[ModeId, ...]:
    labels = [tuple(int(n) for n in lab) for lab in labels]
    if len(set(labels)) != len(labels):
        raise ValueError(f"duplicate mode labels in {labels}")
    scale = 2.0 * np.pi / box_length
    return tuple(
        ModeId(i, lab, tuple(scale * n for n in lab)) for i, lab in enumerate(labels)
    )


class FockBasis:
    """Occupation-number basis with per-mode caps.

    ``states[i]`` is the occupation vector in the order of ``modes``; the
    enumeration order puts the zero mode (if present) first in the
    lexicographic key.
    """

    def __init__(self, modes: Sequence[ModeId], caps: Sequence[int],
                 dim_limit: int = DEFAULT_DIM_LIMIT):
        modes = tuple(modes)
        caps = tuple(int(c) for c in caps)
        if len(modes) != len(caps):
            raise ValueError("one cap per mode required")
        if len({m.label for m in modes}) != len(modes):
            raise ValueError("mode momenta must be distinct")
        if sum(m.is_zero for m in modes) > 1:
            raise ValueError("at most one zero mode")
        if any(c < 1 for c in caps):
            raise ValueError(f"caps must be >= 1, got {caps}")
        dim = int(np.prod([c + 1 for c in caps], dtype=object)) if caps else 1
        if dim > dim_limit:
            prod = " * ".join(str(c + 1) for c in caps)
            raise SizingError(f"basis dimension {prod} = {dim} exceeds limit {dim_limit}")

        self.modes = modes
        self.caps = caps
        self.dim = dim
        # slowest-varying first: zero mode, then the others in given order
        order = sorted(range(len(modes)), key=lambda i: (not modes[i].is_zero, i))
        self._order = tuple(order)
        radices = [caps[i] + 1 for i in order]
        strides = np.ones(len(order), dtype=np.int64)
        for j in range(len(order) - 2, -1, -1):
            strides[j] = strides[j + 1] * radices[j + 1]
        self._strides = np.empty(len(modes), dtype=np.int64)
        self._strides[list(order)] = strides

        ranked = np.array(list(itertools.product(*[range(r) for r in radices])),
                          dtype=np.int64).reshape(dim, len(modes))
        states = np.empty_like(ranked)
        states[:, list(order)] = ranked
        states.setflags(write=False)
        self.states = states
        self._pos = {m: i for i, m in enumerate(modes)}

    def __repr__(self) -> str:
        labels = [m.label for m in self.modes]
        return f"FockBasis(modes={labels}, caps={self.caps}, dim={self.dim})"

    def position(self, mode: ModeId | int) -> int:
        if isinstance(mode, ModeId):
            try:
                return self._pos[mode]
            except KeyError:
                raise KeyError(f"mode {mode.label} not in basis") from None
        for m, i in self._pos.items():
            if m.index == mode:
                return i
        raise KeyError(f"mode index {mode} not in basis")

    def index_of(self, occupation: Sequence[int]) -> int:
        occ = np.asarray(occupation, dtype=np.int64)
        if occ.shape != (len(self.modes),) or np.any(occ < 0) or np.any(occ > self.caps):
            raise KeyError(f"occupation {tuple(occupation)} outside basis")
        return int(occ @ self._strides)

    def indices_of(self, occupations: np.ndarray) -> np.ndarray:
        return occupations @ self._strides

    @property
    def zero_mode(self) -> ModeId | None:
        for m in self.modes:
            if m.is_zero:
                return m
        return None

    def without(self, removed: Iterable[ModeId]) -> FockBasis:
        """Basis on the remaining modes, caps unchanged."""
        removed = set(removed)
        for m in removed:
            self.position(m)
        keep = [i for i, m in enumerate(self.modes) if m not in removed]
        return FockBasis([self.modes[i] for i in keep], [self.caps[i] for i in keep])

    def key(self) -> tuple:
        return (tuple(m.label for m in self.modes), self.caps)


def build_basis(modes: Sequence[ModeId], caps: Sequence[int],
                dim_limit: int = DEFAULT_DIM_LIMIT) -> FockBasis:
    return FockBasis(modes, caps, dim_limit)


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Sparse operator on a FockBasis."""

    basis: FockBasis
    entries: sp.csr_matrix
    hermitian: bool = False

    def __post_init__(self):
        if self.entries.shape != (self.basis.dim, self.basis.dim):
            raise ValueError(
                f"matrix shape {self.entries.shape} does not match basis dim {self.basis.dim}"
            )

    def _check(self, other: OperatorMatrix) -> None:
        if other.basis.key() != self.basis.key():
            raise ValueError("operators act on different bases")

    def __add__(self, other: OperatorMatrix) -> OperatorMatrix:
        self._check(other)
        return OperatorMatrix(self.basis, (self.entries + other.entries).tocsr(),
                              self.hermitian and other.hermitian)

    def __sub__(self, other: OperatorMatrix) -> OperatorMatrix:
        self._check(other)
        return OperatorMatrix(self.basis, (self.entries - other.entries).tocsr(),
                              self.hermitian and other.hermitian)

    def __matmul__(self, other: OperatorMatrix) -> OperatorMatrix:
        self._check(other)
        return OperatorMatrix(self.basis, (self.entries @ other.entries).tocsr())

    def scale(self, c: complex) -> OperatorMatrix:
        herm = self.hermitian and complex(c).imag == 0.0
        return OperatorMatrix(self.basis, (self.entries * c).tocsr(), herm)

    def dagger(self) -> OperatorMatrix:
        return OperatorMatrix(self.basis, self.entries.conj().T.tocsr(), self.hermitian)

    def toarray(self) -> np.ndarray:
        return self.entries.toarray()

    def is_hermitian(self, rtol: float = 1e-12) -> bool:
        diff = abs(self.entries - self.entries.conj().T)
        scale = max(abs(self.entries).max() if self.entries.nnz else 0.0, 1.0)
        return (diff.max() if diff.nnz else 0.0) <= rtol * scale


def _ladder_entries(basis: FockBasis, pos: int) -> sp.csr_matrix:
    occ = basis.states[:, pos]
    src = np.nonzero(occ > 0)[0]
    lowered = basis.states[src].copy()
    lowered[:, pos] -= 1
    dst = basis.indices_of(lowered)
    vals = np.sqrt(occ[src].astype(float))
    return sp.csr_matrix((vals, (dst, src)), shape=(basis.dim, basis.dim))


def ladder_matrix(basis: FockBasis, mode: ModeId | int, kind: str) -> OperatorMatrix:
    """Annihilation (``kind='lower'``) or creation (``'raise'``) operator.

    The raising operator is the transpose of the lowering one, which makes
    it annihilate the cap state.
    """
    pos = basis.position(mode)
    low = _ladder_entries(basis, pos)
    if kind == "lower":
        return OperatorMatrix(basis, low)
    if kind == "raise":
        return OperatorMatrix(basis, low.T.tocsr())
    raise ValueError(f"kind must be 'raise' or 'lower', got {kind!r}")


def number_matrix(basis: FockBasis, mode: ModeId | int) -> OperatorMatrix:
    pos = basis.position(mode)
    diag = basis.states[:, pos].astype(float)
    return OperatorMatrix(basis, sp.diags(diag, format="csr"), hermitian=True)


def total_number_matrix(basis: FockBasis, modes: Iterable[ModeId] | None = None) -> OperatorMatrix:
    modes = basis.modes if modes is None else tuple(modes)
    diag = np.zeros(basis.dim)
    for m in modes:
        diag += basis.states[:, basis.position(m)]
    return OperatorMatrix(basis, sp.diags(diag, format="csr"), hermitian=True)
