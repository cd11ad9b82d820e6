"""Spectra, partition functions, peak search and coherent-state weights.

All partition functions are carried as logarithms.  Eigenproblems are
solved block by block: the connected components of an operator's sparsity
pattern are found once and equal-size blocks are diagonalized as a batch.
Number and momentum conservation make these blocks small.
"""

from __future__ import annotations

import hashlib
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize_scalar
from scipy.sparse.csgraph import connected_components
from scipy.special import logsumexp

from .coherent import QuadratureGrid, coherent_coeffs, zmax_radius_sq
from .fock import FockBasis, OperatorMatrix
from .model import (EnsembleParams, ModelSpec, Reduction, full_hamiltonian)

CACHE_ENV = "CNUMBER_CACHE_DIR"
COVERAGE_TOL = 1e-6
POPULATION_FLOOR = 1e-24
NODE_CHUNK = 8192


class CoverageError(RuntimeError):
    """Quadrature disc or search interval does not contain the thermal support."""


class NumericalConsistencyError(RuntimeError):
    pass


# -- caching -----------------------------------------------------------------

class SpectrumCache:
    """In-memory store with optional on-disk mirror (one .npz per key).

    Writers hold the lock; readers of a completed entry do not.
    """

    def __init__(self, directory: str | os.PathLike | None = None):
        self.directory = Path(directory) if directory else None
        self._mem: dict[str, dict[str, np.ndarray]] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get(self, key: str) -> dict[str, np.ndarray] | None:
        entry = self._mem.get(key)
        if entry is None and self.directory is not None:
            path = self.directory / f"{key}.npz"
            if path.exists():
                with np.load(path) as f:
                    entry = {k: f[k] for k in f.files}
                with self._lock:
                    self._mem[key] = entry
        with self._lock:
            if entry is None:
                self.misses += 1
            else:
                self.hits += 1
        return entry

    def put(self, key: str, entry: dict[str, np.ndarray]) -> None:
        with self._lock:
            self._mem[key] = entry
            if self.directory is not None:
                self.directory.mkdir(parents=True, exist_ok=True)
                tmp = self.directory / f"{key}.tmp.npz"
                np.savez(tmp, **entry)
                tmp.replace(self.directory / f"{key}.npz")

    def clear_memory(self) -> None:
        with self._lock:
            self._mem.clear()

    def stats(self) -> dict[str, int]:
        return {"hits": self.hits, "misses": self.misses}


_cache = SpectrumCache(os.environ.get(CACHE_ENV))
_jobs = 1


def get_cache() -> SpectrumCache:
    return _cache


def set_cache(cache: SpectrumCache) -> SpectrumCache:
    global _cache
    old, _cache = _cache, cache
    return old


def set_jobs(n: int) -> None:
    global _jobs
    _jobs = max(1, int(n))


def _hash_arrays(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str(a.dtype).encode())
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()[:24]


def operator_hash(mat: sp.spmatrix) -> str:
    m = sp.csr_matrix(mat)
    m.sort_indices()
    return _hash_arrays(m.indptr, m.indices, m.data)


# -- block eigensolver -------------------------------------------------------

def block_partition(pattern: sp.spmatrix) -> list[np.ndarray]:
    """Index sets of the connected components of a symmetric pattern."""
    n = pattern.shape[0]
    if n == 0:
        return []
    _, labels = connected_components(sp.csr_matrix(pattern != 0), directed=False)
    order = np.argsort(labels, kind="stable")
    cuts = np.flatnonzero(np.diff(labels[order])) + 1
    blocks = np.split(order, cuts)
    return sorted(blocks, key=lambda b: b[0])


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Eigen-decomposition stored per block of a block-diagonal operator."""

    dim: int
    blocks: tuple[np.ndarray, ...]
    values: tuple[np.ndarray, ...]
    vectors: tuple[np.ndarray, ...] | None

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.sort(np.concatenate(self.values)) if self.values else np.zeros(0)

    @property
    def eigenvectors(self) -> np.ndarray:
        """Dense unitary with columns ordered by ascending eigenvalue."""
        if self.vectors is None:
            raise ValueError("spectrum computed without eigenvectors")
        vals = np.concatenate(self.values)
        dtype = np.result_type(*self.vectors)
        U = np.zeros((self.dim, self.dim), dtype=dtype)
        col = 0
        for idx, vec in zip(self.blocks, self.vectors):
            U[np.ix_(idx, np.arange(col, col + len(idx)))] = vec
            col += len(idx)
        return U[:, np.argsort(vals, kind="stable")]


def _batched(mats: list[np.ndarray], vectors: bool):
    stack = np.stack(mats)
    if vectors:
        w, v = np.linalg.eigh(stack)
        return list(w), list(v)
    return list(np.linalg.eigvalsh(stack)), None


def spectrum(H: OperatorMatrix, vectors: bool = True, use_cache: bool = True) -> Spectrum:
    """Full eigen-decomposition of a Hermitian operator."""
    if not H.is_hermitian():
        raise ValueError("spectrum() needs a Hermitian operator")
    mat = H.entries.tocsr()
    key = "spec-" + operator_hash(mat) + ("-v" if vectors else "")
    if use_cache:
        hit = _cache.get(key)
        if hit is not None:
            return _unpack_spectrum(hit, H.basis.dim, vectors)
    blocks = block_partition(mat)
    by_size: dict[int, list[int]] = {}
    for i, b in enumerate(blocks):
        by_size.setdefault(len(b), []).append(i)
    vals: list = [None] * len(blocks)
    vecs: list = [None] * len(blocks)
    for size, members in sorted(by_size.items()):
        for start in range(0, len(members), NODE_CHUNK):
            part = members[start:start + NODE_CHUNK]
            dense = [mat[blocks[i]][:, blocks[i]].toarray() for i in part]
            w, v = _batched(dense, vectors)
            for j, i in enumerate(part):
                vals[i] = w[j]
                if vectors:
                    vecs[i] = v[j]
    spec = Spectrum(H.basis.dim, tuple(blocks), tuple(vals), tuple(vecs) if vectors else None)
    if use_cache:
        _cache.put(key, _pack_spectrum(spec))
    return spec


def _pack_spectrum(s: Spectrum) -> dict[str, np.ndarray]:
    out = {"sizes": np.array([len(b) for b in s.blocks], dtype=np.int64),
           "idx": np.concatenate(s.blocks) if s.blocks else np.zeros(0, np.int64),
           "val": np.concatenate(s.values) if s.values else np.zeros(0)}
    if s.vectors is not None:
        out["vec"] = np.concatenate([v.ravel() for v in s.vectors]) if s.vectors else np.zeros(0)
    return out


def _unpack_spectrum(e: dict[str, np.ndarray], dim: int, vectors: bool) -> Spectrum:
    sizes = e["sizes"]
    cuts = np.cumsum(sizes)[:-1]
    blocks = tuple(np.split(e["idx"], cuts))
    values = tuple(np.split(e["val"], cuts))
    vecs = None
    if vectors:
        flat = np.split(e["vec"], np.cumsum(sizes**2)[:-1])
        vecs = tuple(f.reshape(s, s) for f, s in zip(flat, sizes))
    return Spectrum(dim, blocks, values, vecs)


# -- partition values --------------------------------------------------------

@dataclass(frozen=True)
class PartitionValue:
    log_value: float
    beta: float
    volume: float
    variant: str

    @property
    def pressure(self) -> float:
        return self.log_value / (self.beta * self.volume)


@dataclass(eq=False)
class FullSystem:
    """H_{mu,lambda} on the full basis with its spectrum."""

    spec: ModelSpec
    params: EnsembleParams
    basis: FockBasis
    H: OperatorMatrix = field(init=False)
    spectrum: Spectrum = field(init=False)

    def __post_init__(self):
        self.H = full_hamiltonian(self.spec, self.params, self.basis)
        self.spectrum = spectrum(self.H, vectors=True)

    @property
    def log_xi(self) -> float:
        return float(logsumexp(-self.params.beta * np.concatenate(self.spectrum.values)))

    def boltzmann(self) -> list[np.ndarray]:
        lx = self.log_xi
        return [np.exp(-self.params.beta * v - lx) for v in self.spectrum.values]

    def expectation(self, op: OperatorMatrix) -> complex:
        """Thermal average Tr(rho op)."""
        mat = op.entries.tocsr()
        total = 0.0 + 0.0j
        for idx, vec, w in zip(self.spectrum.blocks, self.spectrum.vectors, self.boltzmann()):
            sub = mat[idx][:, idx].toarray()
            total += np.einsum("j,ij,ij->", w, vec.conj(), sub @ vec)
        return complex(total)

    def zero_mode_density(self) -> np.ndarray:
        """Reduced density matrix of the zero mode, rho_0 = Tr_rest rho."""
        zero = self.basis.zero_mode
        if zero is None:
            raise ValueError("model has no zero mode")
        cap0 = self.basis.caps[self.basis.position(zero)]
        dim_rest = self.basis.dim // (cap0 + 1)
        rho = np.zeros((cap0 + 1, cap0 + 1), dtype=complex)
        for idx, vec, w in zip(self.spectrum.blocks, self.spectrum.vectors, self.boltzmann()):
            keep = w > 1e-300
            if not np.any(keep):
                continue
            x = vec[:, keep] * np.sqrt(w[keep])
            a, r = np.divmod(idx, dim_rest)
            ur, rpos = np.unique(r, return_inverse=True)
            z = np.zeros((cap0 + 1, len(ur), x.shape[1]), dtype=x.dtype)
            z[a, rpos] = x
            rho += np.einsum("arj,brj->ab", z, z.conj())
        return 0.5 * (rho + rho.conj().T)

    def cap_tail(self) -> float:
        """Estimated log-mass lost above the zero-mode cap.

        Geometric continuation of the top two zero-mode level populations.
        """
        pop = np.real(np.diag(self.zero_mode_density()))
        if len(pop) < 2:
            return float("inf")
        top, prev = max(pop[-1], 0.0), max(pop[-2], 0.0)
        if top == 0.0:
            return 0.0
        r = top / prev if prev > 0 else 1.0
        if r >= 1.0:
            # populations at eigenvector roundoff (~eps^2) carry no trend
            if top < POPULATION_FLOOR:
                return float(len(pop) * POPULATION_FLOOR)
            return float("inf")
        return float(np.log1p(top * r / (1.0 - r)))


def full_system(spec: ModelSpec, params: EnsembleParams, basis: FockBasis) -> FullSystem:
    return FullSystem(spec, params, basis)


def xi_full(spec: ModelSpec, params: EnsembleParams, basis: FockBasis) -> PartitionValue:
    if not params.beta > 0:
        raise ValueError("beta must be positive")
    H = full_hamiltonian(spec, params, basis)
    vals = spectrum(H, vectors=False).eigenvalues
    return PartitionValue(float(logsumexp(-params.beta * vals)), params.beta, spec.volume, "full")


# -- substituted systems -----------------------------------------------------

class SubstitutedSystem:
    """Per-node spectra of H'(z) or H''(z) on the reduced basis."""

    def __init__(self, spec: ModelSpec, params: EnsembleParams, basis: FockBasis,
                 variant: str, plan_modes: Sequence | None = None):
        if plan_modes is None:
            if spec.zero_mode is None:
                raise ValueError("model has no zero mode")
            plan_modes = (spec.zero_mode,)
        self.spec, self.params, self.variant = spec, params, variant
        self.plan_modes = tuple(plan_modes)
        self.full_basis = basis
        self.basis = basis.without(self.plan_modes)
        self.caps = [basis.caps[basis.position(m)] for m in self.plan_modes]
        self.reduction = Reduction(spec, params, self.plan_modes, self.basis, variant)
        mats = self.reduction.matrices
        pattern = sum((abs(m) for m in mats), sp.csr_matrix((self.basis.dim, self.basis.dim)))
        self.blocks = block_partition(pattern)
        self._stack = self.reduction.dense_stack()
        self._key = self.reduction.key()

    @property
    def real_coefficients(self) -> bool:
        return all(np.imag(c) == 0 for p in self.reduction.polys for c in p.values())

    @property
    def gauge_invariant(self) -> bool:
        return len(self.plan_modes) == 1 and self.params.lam == 0.0

    def _solve_chunk(self, z: np.ndarray) -> np.ndarray:
        coef = self.reduction.coefficients(z)
        out = np.empty((len(z), self.basis.dim))
        col = 0
        real = np.all(coef.imag == 0)
        for idx in self.blocks:
            sub = self._stack[:, idx][:, :, idx]
            if real:
                mats = np.einsum("nj,jab->nab", coef.real, sub.real)
            else:
                mats = np.einsum("nj,jab->nab", coef, sub)
            out[:, col:col + len(idx)] = np.linalg.eigvalsh(mats)
            col += len(idx)
        return out

    def node_energies(self, nodes: np.ndarray) -> np.ndarray:
        """Eigenvalues (unsorted across blocks) of the reduced operator per node."""
        nodes = np.asarray(nodes, dtype=complex)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        key = f"node-{self._key}-{_hash_arrays(nodes)}"
        hit = _cache.get(key)
        if hit is not None:
            return hit["E"]
        chunks = [nodes[i:i + NODE_CHUNK] for i in range(0, len(nodes), NODE_CHUNK)]
        if _jobs > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(_jobs) as pool:
                parts = list(pool.map(self._solve_chunk, chunks))
        else:
            parts = [self._solve_chunk(c) for c in chunks]
        E = np.concatenate(parts) if parts else np.zeros((0, self.basis.dim))
        _cache.put(key, {"E": E})
        return E

    def log_traces(self, nodes: np.ndarray) -> np.ndarray:
        """log Tr exp(-beta H(z)) at each node."""
        return logsumexp(-self.params.beta * self.node_energies(nodes), axis=1)


@dataclass(frozen=True)
class NodeSet:
    """Integration nodes (N, m), weights, and the outer-ring mask per mode."""

    nodes: np.ndarray
    weights: np.ndarray
    outer: np.ndarray


def _single_nodes(grid: QuadratureGrid, mode: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if mode == "radial":
        z, w = grid.radial()
        ring = np.arange(grid.n_radial)
    elif mode == "folded":
        z, w = grid.conjugate_folded()
        ring = np.repeat(np.arange(grid.n_radial), len(z) // grid.n_radial)
    else:
        z, w = grid.nodes, grid.weights
        ring = np.repeat(np.arange(grid.n_radial), grid.n_angular)
    outer = ring == ring.max()
    return z, w, outer


def integration_nodes(system: SubstitutedSystem,
                      grids: QuadratureGrid | Sequence[QuadratureGrid]) -> NodeSet:
    """Nodes for integrating over the substituted amplitudes.

    A single gauge-invariant zero-mode integrand is integrated on the radial
    profile, a conjugation-symmetric one on the upper half disc.
    """
    grids = [grids] if isinstance(grids, QuadratureGrid) else list(grids)
    if len(grids) != len(system.plan_modes):
        raise ValueError("one grid per substituted mode")
    if len(grids) == 1:
        mode = "full"
        if system.gauge_invariant:
            mode = "radial"
        elif system.real_coefficients:
            mode = "folded"
        z, w, outer = _single_nodes(grids[0], mode)
        return NodeSet(z[:, None], w, outer[:, None])
    parts = [_single_nodes(g, "full") for g in grids]
    mesh = np.meshgrid(*[np.arange(len(p[0])) for p in parts], indexing="ij")
    flat = [m.ravel() for m in mesh]
    nodes = np.stack([p[0][i] for p, i in zip(parts, flat)], axis=1)
    weights = np.prod([p[1][i] for p, i in zip(parts, flat)], axis=0)
    outer = np.stack([p[2][i] for p, i in zip(parts, flat)], axis=1)
    return NodeSet(nodes, weights, outer)


@dataclass(frozen=True)
class Integral:
    value: PartitionValue
    boundary_fraction: float
    log_traces: np.ndarray = field(repr=False)
    nodes: NodeSet = field(repr=False)


def integrate(system: SubstitutedSystem, grids, check_coverage: bool = True) -> Integral:
    ns = integration_nodes(system, grids)
    lt = system.log_traces(ns.nodes)
    logw = np.log(ns.weights)
    total = float(logsumexp(lt + logw))
    edge = np.any(ns.outer, axis=1)
    frac = float(np.exp(logsumexp(lt[edge] + logw[edge]) - total)) if np.any(edge) else 0.0
    if check_coverage and frac > COVERAGE_TOL:
        raise CoverageError(
            f"outer quadrature ring holds {frac:.3g} of the integral; enlarge Z_max")
    pv = PartitionValue(total, system.params.beta, system.spec.volume, system.variant)
    return Integral(pv, frac, lt, ns)


def xi_substituted(spec: ModelSpec, params: EnsembleParams, basis: FockBasis,
                   grid, variant: str, plan_modes=None) -> PartitionValue:
    """log of the integral over z of Tr exp(-beta H'(z)) (or H'')."""
    system = SubstitutedSystem(spec, params, basis, variant, plan_modes)
    return integrate(system, grid).value


# -- disc radius -------------------------------------------------------------

def support_edge(spec: ModelSpec, params: EnsembleParams, log_drop: float = 23.0,
                 mode=None) -> float:
    """|z|^2 beyond which the scalar Boltzmann factor of a substituted mode
    (zero mode by default) has dropped by exp(-log_drop) from its maximum
    (mean-field, real axis)."""
    nu0 = float(np.real(spec.nu.get((0,) * spec.dimension, 0.0)))
    V = spec.volume
    mode = spec.zero_mode if mode is None else mode
    e0 = spec.energy(mode) if mode is not None else 0.0
    b = np.sqrt(V) * params.lam if mode is not None and mode.is_zero else 0.0

    def energy(x):
        return nu0 * x**4 / (2 * V) + (e0 - params.mu) * x**2 + 2 * b * x

    if nu0 <= 0 and e0 - params.mu <= 0:
        return float("inf")
    x = np.concatenate([-np.geomspace(1e-3, 1e5, 4000)[::-1], [0.0], np.geomspace(1e-3, 1e5, 4000)])
    e = params.beta * energy(x)
    ok = e - e.min() <= log_drop
    return float(np.max(x[ok] ** 2))


def default_radius_sq(spec: ModelSpec, params: EnsembleParams, cap0: int) -> float:
    return zmax_radius_sq(cap0, support_edge(spec, params))


# -- peak of the integrand ---------------------------------------------------

@dataclass(frozen=True)
class PeakResult:
    z_max: complex
    value: PartitionValue
    scan: tuple[np.ndarray, np.ndarray] = field(repr=False)


def p_max(spec: ModelSpec, params: EnsembleParams, basis: FockBasis, variant: str = "lower",
          radius: float | None = None, n_scan: int = 241, xtol: float = 1e-6) -> PeakResult:
    """Maximize log Tr exp(-beta H(z)) over z.

    Real axis [-R, R] when lam != 0, the ray [0, R] when lam == 0 (the
    integrand then depends on |z| only).
    """
    system = SubstitutedSystem(spec, params, basis, variant)
    if radius is None:
        cap0 = basis.caps[basis.position(spec.zero_mode)]
        radius = float(np.sqrt(default_radius_sq(spec, params, cap0)))
    lo = 0.0 if params.lam == 0.0 else -radius
    xs = np.linspace(lo, radius, n_scan)
    f = system.log_traces(xs.astype(complex))
    best = np.flatnonzero(f >= f.max() - 1e-14 * max(1.0, abs(f.max())))
    nonneg = best[xs[best] >= 0]
    i = int(nonneg[0] if len(nonneg) else best[-1])
    if i == len(xs) - 1 or (params.lam != 0.0 and i == 0):
        raise CoverageError(f"integrand maximum at search boundary x={xs[i]:.4g}")

    def neg(x):
        return -float(system.log_traces(np.array([x], dtype=complex))[0])

    a, b = xs[max(i - 1, 0)], xs[min(i + 1, len(xs) - 1)]
    res = minimize_scalar(neg, bounds=(a, b), method="bounded", options={"xatol": xtol})
    x_best, f_best = (res.x, -res.fun) if -res.fun > f[i] else (xs[i], f[i])
    pv = PartitionValue(float(f_best), params.beta, spec.volume, "peak")
    return PeakResult(complex(x_best), pv, (xs, f))


# -- weights and condensate observables --------------------------------------

@dataclass(frozen=True, eq=False)
class WeightField:
    grid: QuadratureGrid
    values: np.ndarray
    norm: float
    source: str
    mean: complex
    second: float
    fourth: float

    @property
    def variance(self) -> float:
        return float(self.second - abs(self.mean) ** 2)

    def scaled(self, volume: float) -> tuple[complex, float]:
        """Mean and variance in zeta = z / sqrt(V)."""
        return self.mean / np.sqrt(volume), self.variance / volume


def _moments(grid: QuadratureGrid, W: np.ndarray) -> tuple[complex, float, float]:
    z, w = grid.nodes, grid.weights
    a2 = np.abs(z) ** 2
    return complex(np.sum(w * z * W)), float(np.sum(w * a2 * W)), float(np.sum(w * a2**2 * W))


def weight(spec: ModelSpec, params: EnsembleParams, basis: FockBasis, grid: QuadratureGrid,
           source: str = "full", system: FullSystem | None = None) -> WeightField:
    """Normalized weight W(z) on the grid nodes.

    ``full``: <z| Tr_rest rho |z> from the exact Gibbs state.
    ``upper``: Tr exp(-beta H''(z)) normalized over the grid.
    """
    if source == "full":
        system = system or full_system(spec, params, basis)
        rho0 = system.zero_mode_density()
        c = coherent_coeffs(grid.nodes, rho0.shape[0] - 1)
        raw = np.real(np.einsum("na,ab,nb->n", c.conj(), rho0, c))
    elif source == "upper":
        sub = SubstitutedSystem(spec, params, basis, "upper")
        lt = sub.log_traces(grid.nodes)
        raw = np.exp(lt - lt.max())
    else:
        raise ValueError(f"unknown weight source {source!r}")
    if np.min(raw) < -1e-12 * max(1.0, np.max(raw)):
        raise NumericalConsistencyError(f"negative weight {np.min(raw):.3g}")
    norm = float(np.sum(grid.weights * raw))
    W = raw / norm
    mean, second, fourth = _moments(grid, W)
    if source == "full":
        norm_report = norm
    else:
        norm_report = 1.0
    return WeightField(grid, W, norm_report, source, mean, second, fourth)


@dataclass(frozen=True)
class CondensateStats:
    n0_direct: float
    a0_direct: complex
    n0_weight: float
    a0_weight: complex
    z_max: complex
    rho_upper: float


def direct_zero_mode(system: FullSystem) -> tuple[float, complex]:
    rho0 = system.zero_mode_density()
    n = np.arange(rho0.shape[0])
    n0 = float(np.real(np.sum(n * np.diag(rho0))))
    # <a> = Tr(rho a), a|n> = sqrt(n)|n-1>
    a0 = complex(np.sum(np.sqrt(n[1:]) * np.diag(rho0, k=1)))
    return n0, a0


def weight_zero_mode(system: FullSystem, grid: QuadratureGrid) -> tuple[float, complex]:
    """Integrals of (|z|^2 - 1) and z against the unnormalized weight."""
    rho0 = system.zero_mode_density()
    c = coherent_coeffs(grid.nodes, rho0.shape[0] - 1)
    raw = np.real(np.einsum("na,ab,nb->n", c.conj(), rho0, c))
    z, w = grid.nodes, grid.weights
    return float(np.sum(w * (np.abs(z) ** 2 - 1) * raw)), complex(np.sum(w * z * raw))


@dataclass(frozen=True)
class DensityEstimate:
    value: float
    value_half_step: float
    step: float
    fd_error: float


def density_upper_estimate(spec: ModelSpec, params: EnsembleParams, basis: FockBasis,
                           grid: QuadratureGrid, step: float | None = None) -> DensityEstimate:
    """rho'' = (beta V)^-1 d log Xi'' / d mu by centered differences at h and h/2."""
    h = 1e-4 * max(1.0, abs(params.mu)) if step is None else float(step)
    if not h > 1e-10 * max(1.0, abs(params.mu)):
        raise ValueError(f"finite-difference step {h} underflows")

    def logxi(mu):
        return integrate(SubstitutedSystem(spec, params.shifted(mu - params.mu), basis, "upper"),
                         grid).value.log_value

    def deriv(s):
        return (logxi(params.mu + s) - logxi(params.mu - s)) / (2 * s)

    scale = params.beta * spec.volume
    d1, d2 = deriv(h) / scale, deriv(h / 2) / scale
    return DensityEstimate(d2, d1, h, abs(d1 - d2) * 4.0 / 3.0)


def density_upper(spec: ModelSpec, params: EnsembleParams, basis: FockBasis,
                  grid: QuadratureGrid, step: float | None = None) -> float:
    return density_upper_estimate(spec, params, basis, grid, step).value


def condensate_stats(spec: ModelSpec, params: EnsembleParams, basis: FockBasis,
                     grid: QuadratureGrid, system: FullSystem | None = None,
                     with_density: bool = True) -> CondensateStats:
    system = system or full_system(spec, params, basis)
    n0, a0 = direct_zero_mode(system)
    n0w, a0w = weight_zero_mode(system, grid)
    peak = p_max(spec, params, basis, "lower", radius=grid.radius)
    rho = density_upper(spec, params, basis, grid) if with_density else float("nan")
    return CondensateStats(n0, a0, n0w, a0w, peak.z_max, rho)


def number_expectation(system: FullSystem) -> float:
    """<N> in the full ensemble."""
    n = system.basis.states.sum(axis=1).astype(float)
    total = 0.0
    for idx, vec, w in zip(system.spectrum.blocks, system.spectrum.vectors, system.boltzmann()):
        total += float(np.einsum("j,ij,i->", w, np.abs(vec) ** 2, n[idx]))
    return total


__all__ = [
    "CoverageError", "NumericalConsistencyError", "SpectrumCache", "Spectrum", "PartitionValue",
    "FullSystem", "SubstitutedSystem", "WeightField", "CondensateStats", "DensityEstimate",
    "PeakResult", "spectrum", "xi_full", "xi_substituted", "p_max", "weight",
    "condensate_stats", "density_upper", "density_upper_estimate",
]
