"""Bose-gas Hamiltonians on a finite mode set and their c-number reductions.

The Hamiltonian is kept as a list of normal-ordered monomials
(:class:`Term`).  Matrices on a :class:`FockBasis` are products of truncated
ladder matrices; reductions replace the substituted modes' factors with
their lower or upper symbols and leave a polynomial-in-z combination of
operators on the remaining modes (:class:`Reduction`).
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .fock import FockBasis, ModeId, OperatorMatrix, ladder_matrix, make_modes
from .symbols import symbol


class ModelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Finite-mode Bose gas in a periodic box of side ``box_length``.

    ``nu`` maps integer momentum-transfer labels to Fourier coefficients of
    the pair potential; ``dispersion`` maps mode labels to single-particle
    energies and defaults to k^2.
    """

    dimension: int
    box_length: float
    modes: tuple[ModeId, ...]
    nu: Mapping[tuple[int, ...], complex]
    phi: float
    dispersion: Mapping[tuple[int, ...], float] | None = None
    energies: dict = field(init=False, repr=False)

    def __post_init__(self):
        if self.box_length <= 0:
            raise ModelError("box length must be positive")
        for m in self.modes:
            if len(m.label) != self.dimension:
                raise ModelError(f"mode {m.label} is not {self.dimension}-dimensional")
        for p, v in self.nu.items():
            neg = tuple(-x for x in p)
            if neg in self.nu and abs(self.nu[neg] - np.conj(v)) > 1e-12 * max(1.0, abs(v)):
                raise ModelError(f"nu{neg} != conj(nu{p}): potential not real")
        numax = max((abs(v) for v in self.nu.values()), default=0.0)
        if numax > self.phi * (1 + 1e-12):
            raise ModelError(f"declared phi={self.phi} below max|nu|={numax}")
        if self.dispersion is None:
            en = {m.label: float(sum(k * k for k in m.momentum)) for m in self.modes}
        else:
            en = {m.label: float(self.dispersion[m.label]) for m in self.modes}
        object.__setattr__(self, "energies", en)

    @property
    def volume(self) -> float:
        return float(self.box_length ** self.dimension)

    @property
    def zero_mode(self) -> ModeId | None:
        for m in self.modes:
            if m.is_zero:
                return m
        return None

    def energy(self, mode: ModeId) -> float:
        return self.energies[mode.label]

    def key(self) -> str:
        payload = {
            "d": self.dimension,
            "L": repr(float(self.box_length)),
            "modes": [list(m.label) for m in self.modes],
            "nu": sorted([list(p), repr(complex(v))] for p, v in self.nu.items()),
            "eps": sorted([list(k), repr(v)] for k, v in self.energies.items()),
        }
        return hashlib.sha256(json.dumps(payload).encode()).hexdigest()[:16]


def gaussian_nu(labels: Sequence[Sequence[int]], box_length: float, g: float,
                sigma: float) -> dict[tuple[int, ...], float]:
    """nu(p) = g exp(-(p sigma)^2) on every transfer connecting the labels."""
    labels = [tuple(x) for x in labels]
    table = {}
    for a, b in itertools.product(labels, repeat=2):
        p = tuple(x - y for x, y in zip(a, b))
        k2 = sum((2 * np.pi * x / box_length) ** 2 for x in p)
        table[p] = float(g * np.exp(-k2 * sigma**2))
    return table


def make_model(box_length: float = 4.0, labels=((-1,), (0,), (1,)), g: float = 1.0,
               sigma: float = 0.5, phi: float | None = None,
               nu: Mapping | None = None) -> ModelSpec:
    labels = [tuple(x) for x in labels]
    modes = make_modes(labels, box_length)
    if nu is None:
        nu = gaussian_nu(labels, box_length, g, sigma)
    if phi is None:
        phi = max((abs(v) for v in nu.values()), default=0.0)
    return ModelSpec(len(labels[0]), float(box_length), modes, dict(nu), float(phi))


def default_model() -> ModelSpec:
    """d=1, modes {-2pi/L, 0, 2pi/L}, L=4, Gaussian nu with g=1, sigma=0.5."""
    return make_model()


@dataclass(frozen=True)
class EnsembleParams:
    beta: float
    mu: float
    lam: float = 0.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        lam = complex(self.lam)
        if lam.imag != 0.0:
            raise ValueError("gauge-breaking field must be real")
        object.__setattr__(self, "lam", float(lam.real))

    def shifted(self, dmu: float) -> EnsembleParams:
        return EnsembleParams(self.beta, self.mu + dmu, self.lam)


@dataclass(frozen=True)
class SubstitutionPlan:
    modes: tuple[ModeId, ...]
    values: tuple[complex, ...] = ()

    def __post_init__(self):
        if len(set(self.modes)) != len(self.modes):
            raise ValueError("substituted modes must be distinct")
        if self.values and len(self.values) != len(self.modes):
            raise ValueError("one value per substituted mode")

    def at(self, *values: complex) -> SubstitutionPlan:
        return SubstitutionPlan(self.modes, tuple(complex(v) for v in values))


def zero_mode_plan(spec: ModelSpec, z: complex = 0.0) -> SubstitutionPlan:
    if spec.zero_mode is None:
        raise ModelError("model has no zero mode")
    return SubstitutionPlan((spec.zero_mode,), (complex(z),))


@dataclass(frozen=True)
class Term:
    """coef * prod a*_{raises} * prod a_{lowers}; entries are mode positions."""

    coef: complex
    raises: tuple[int, ...]
    lowers: tuple[int, ...]


def _collect(terms) -> list[Term]:
    acc: dict[tuple, complex] = {}
    for c, r, l in terms:
        key = (tuple(sorted(r)), tuple(sorted(l)))
        acc[key] = acc.get(key, 0.0) + c
    return [Term(complex(c), r, l) for (r, l), c in sorted(acc.items()) if c != 0]


def hamiltonian_terms(spec: ModelSpec) -> list[Term]:
    """Kinetic plus pair-interaction monomials, closed on the retained modes."""
    pos = {m.label: i for i, m in enumerate(spec.modes)}
    out = [(spec.energy(m), (i,), (i,)) for i, m in enumerate(spec.modes)]
    labels = [m.label for m in spec.modes]
    pref = 1.0 / (2.0 * spec.volume)
    for k, q in itertools.product(labels, repeat=2):
        for kp in labels:
            p = tuple(a - b for a, b in zip(kp, k))
            qp = tuple(a - b for a, b in zip(q, p))
            if qp not in pos:
                continue
            if p not in spec.nu:
                raise ModelError(f"nu{p} missing: needed to connect modes {k}, {q}")
            v = spec.nu[p]
            if v != 0:
                out.append((pref * v, (pos[kp], pos[qp]), (pos[k], pos[q])))
    return _collect(out)


def ensemble_terms(spec: ModelSpec, params: EnsembleParams) -> list[Term]:
    """Monomials of H_{mu,lambda} = H - mu N + sqrt(V) lam (a0 + a0*)."""
    out = [(t.coef, t.raises, t.lowers) for t in hamiltonian_terms(spec)]
    out += [(-params.mu, (i,), (i,)) for i in range(len(spec.modes))]
    if params.lam != 0.0:
        if spec.zero_mode is None:
            raise ModelError("gauge-breaking term needs a zero mode")
        i0 = spec.modes.index(spec.zero_mode)
        amp = np.sqrt(spec.volume) * params.lam
        out += [(amp, (), (i0,)), (amp, (i0,), ())]
    return _collect(out)


@lru_cache(maxsize=64)
def _ladders(basis: FockBasis):
    return ([ladder_matrix(basis, m, "raise").entries for m in basis.modes],
            [ladder_matrix(basis, m, "lower").entries for m in basis.modes])


def monomial_matrix(basis: FockBasis, raises: Sequence[int], lowers: Sequence[int]) -> sp.csr_matrix:
    """Product of truncated ladder matrices; positions index basis.modes."""
    up, down = _ladders(basis)
    out = sp.identity(basis.dim, format="csr", dtype=float)
    for i in raises:
        out = out @ up[i]
    for i in lowers:
        out = out @ down[i]
    return out.tocsr()


def assemble(terms: Sequence[Term], spec: ModelSpec, basis: FockBasis) -> OperatorMatrix:
    _check_basis(spec, basis)
    # spec positions -> basis positions
    remap = [basis.position(m) for m in spec.modes]
    mat = sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
    for t in terms:
        mat = mat + t.coef * monomial_matrix(
            basis, [remap[i] for i in t.raises], [remap[i] for i in t.lowers])
    if np.all(mat.data.imag == 0):
        mat = mat.real.tocsr()
    mat.sum_duplicates()
    mat.eliminate_zeros()
    return OperatorMatrix(basis, mat, hermitian=True)


def _check_basis(spec: ModelSpec, basis: FockBasis) -> None:
    if {m.label for m in basis.modes} != {m.label for m in spec.modes}:
        raise ModelError("basis modes differ from model modes")


def build_hamiltonian(spec: ModelSpec, basis: FockBasis) -> OperatorMatrix:
    return assemble(hamiltonian_terms(spec), spec, basis)


def grand_shift(H: OperatorMatrix, params: EnsembleParams, basis: FockBasis) -> OperatorMatrix:
    if H.basis.key() != basis.key():
        raise ValueError("H was built on a different basis")
    n = basis.states.sum(axis=1).astype(float)
    return OperatorMatrix(basis, (H.entries - params.mu * sp.diags(n)).tocsr(), H.hermitian)


def gauge_break(H_mu: OperatorMatrix, params: EnsembleParams, spec: ModelSpec,
                basis: FockBasis) -> OperatorMatrix:
    if not isinstance(params.lam, float):
        raise ValueError("gauge-breaking field must be real")
    if params.lam == 0.0:
        return H_mu
    zero = spec.zero_mode
    if zero is None:
        raise ModelError("gauge-breaking term needs a zero mode")
    low = ladder_matrix(basis, basis.modes[[m.label for m in basis.modes].index(zero.label)],
                        "lower").entries
    amp = np.sqrt(spec.volume) * params.lam
    return OperatorMatrix(basis, (H_mu.entries + amp * (low + low.T)).tocsr(), H_mu.hermitian)


def full_hamiltonian(spec: ModelSpec, params: EnsembleParams, basis: FockBasis) -> OperatorMatrix:
    """H_{mu,lambda} on the full basis."""
    H = build_hamiltonian(spec, basis)
    return gauge_break(grand_shift(H, params, basis), params, spec, basis)


class Reduction:
    """H_{mu,lambda} with the plan's modes replaced by symbols.

    Represents sum_j f_j(z) A_j where A_j are fixed operators on the reduced
    basis and f_j polynomials in the substituted amplitudes.
    """

    def __init__(self, spec: ModelSpec, params: EnsembleParams,
                 plan_modes: Sequence[ModeId], reduced_basis: FockBasis, variant: str):
        plan_modes = tuple(plan_modes)
        labels = [m.label for m in spec.modes]
        for m in plan_modes:
            if m.label not in labels:
                raise ModelError(f"plan substitutes mode {m.label} absent from model")
        rest = [m for m in spec.modes if m not in plan_modes]
        if {m.label for m in reduced_basis.modes} != {m.label for m in rest}:
            raise ModelError("reduced basis must omit exactly the substituted modes")
        self.spec, self.params, self.variant = spec, params, variant
        self.plan_modes = plan_modes
        self.basis = reduced_basis
        sub_pos = [labels.index(m.label) for m in plan_modes]
        rest_pos = {labels.index(m.label): reduced_basis.position(m) for m in rest}

        groups: dict[tuple, dict[tuple, complex]] = {}
        for t in ensemble_terms(spec, params):
            powers = [(t.raises.count(s), t.lowers.count(s)) for s in sub_pos]
            rkey = (tuple(sorted(rest_pos[i] for i in t.raises if i in rest_pos)),
                    tuple(sorted(rest_pos[i] for i in t.lowers if i in rest_pos)))
            poly = {(): 1}
            for (m, n) in powers:
                sym = symbol(m, n, variant)
                poly = {k + (key,): c * cs for k, c in poly.items() for key, cs in sym.terms.items()}
            acc = groups.setdefault(rkey, {})
            for k, c in poly.items():
                acc[k] = acc.get(k, 0) + t.coef * complex(c)
        self.keys = sorted(groups)
        self.polys = [{k: c for k, c in sorted(groups[r].items()) if c != 0} for r in self.keys]
        self.matrices = [monomial_matrix(reduced_basis, r, l) for r, l in self.keys]

    def coefficients(self, z) -> np.ndarray:
        """f_j(z) for nodes z of shape (N, m) (or (N,) for one mode): (N, J)."""
        z = np.asarray(z, dtype=complex)
        if z.ndim == 1:
            z = z[:, None]
        zc = np.conj(z)
        out = np.zeros((z.shape[0], len(self.keys)), dtype=complex)
        for j, poly in enumerate(self.polys):
            for exps, c in poly.items():
                val = np.full(z.shape[0], c, dtype=complex)
                for s, (i, k) in enumerate(exps):
                    if i:
                        val = val * zc[:, s] ** i
                    if k:
                        val = val * z[:, s] ** k
                out[:, j] += val
        return out

    def dense_stack(self) -> np.ndarray:
        return np.stack([m.toarray() for m in self.matrices]) if self.matrices else \
            np.zeros((0, self.basis.dim, self.basis.dim))

    def matrix(self, z) -> OperatorMatrix:
        f = self.coefficients(np.atleast_1d(np.asarray(z, dtype=complex))[None, :])[0]
        mat = sp.csr_matrix((self.basis.dim, self.basis.dim), dtype=complex)
        for c, a in zip(f, self.matrices):
            mat = mat + c * a
        return OperatorMatrix(self.basis, mat.tocsr(), hermitian=True)

    def key(self) -> str:
        h = hashlib.sha256()
        h.update(self.spec.key().encode())
        h.update(repr((self.params, [m.label for m in self.plan_modes],
                       self.basis.key(), self.variant)).encode())
        return h.hexdigest()[:16]


def _plan_values(plan: SubstitutionPlan) -> tuple[complex, ...]:
    if not plan.values:
        raise ValueError("plan carries no substitution values")
    return plan.values


def reduce_lower(spec: ModelSpec, params: EnsembleParams, plan: SubstitutionPlan,
                 reduced_basis: FockBasis) -> OperatorMatrix:
    """H'_mu(z): lower symbols substituted for the plan's modes."""
    return Reduction(spec, params, plan.modes, reduced_basis, "lower").matrix(_plan_values(plan))


def reduce_upper(spec: ModelSpec, params: EnsembleParams, plan: SubstitutionPlan,
                 reduced_basis: FockBasis) -> OperatorMatrix:
    """H''_mu(z): upper symbols substituted for the plan's modes."""
    return Reduction(spec, params, plan.modes, reduced_basis, "upper").matrix(_plan_values(plan))


def delta_closed_form(spec: ModelSpec, params: EnsembleParams, z: complex,
                      reduced_basis: FockBasis) -> OperatorMatrix:
    """Upper-minus-lower correction for the zero-mode plan, written out directly.

    mu + [(2 - 4|z|^2) nu(0) - sum_{k!=0} n_k (2 nu(0) + nu(k) + nu(-k))] / 2V
    """
    zero = spec.zero_mode
    d = spec.dimension
    nu0 = spec.nu.get((0,) * d, 0.0)
    diag = np.full(reduced_basis.dim, params.mu + (2 - 4 * abs(z) ** 2) * nu0 / (2 * spec.volume),
                   dtype=complex)
    for m in reduced_basis.modes:
        if m == zero:
            raise ModelError("reduced basis still contains the zero mode")
        neg = tuple(-x for x in m.label)
        w = 2 * nu0 + spec.nu.get(m.label, 0.0) + spec.nu.get(neg, 0.0)
        diag -= reduced_basis.states[:, reduced_basis.position(m)] * w / (2 * spec.volume)
    return OperatorMatrix(reduced_basis, sp.diags(diag, format="csr"), hermitian=True)


def delta_bound(plan: SubstitutionPlan, params: EnsembleParams, spec: ModelSpec,
                n_prime_value: float) -> float:
    """Certificate for |upper - lower| of the reduced Hamiltonian on a state.

    For the zero mode this is 2 phi (N' + 1/2) / V + |mu|; each further
    substituted mode k adds its own copy with |mu| -> |mu - eps(k)|.
    """
    if n_prime_value < 0:
        raise ValueError("N' must be non-negative")
    per_mode = 2 * spec.phi * (n_prime_value + 0.5) / spec.volume
    return float(sum(per_mode + abs(params.mu - spec.energy(m)) for m in plan.modes))
