"""Coherent-state vectors and the disc quadrature for d^2z = dx dy / pi."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammainc, gammaln

from .fock import FockBasis


@dataclass(frozen=True)
class CoherentVector:
    z: complex
    cap: int
    coeffs: np.ndarray
    tail_mass: float


def coherent_coeffs(z, cap: int) -> np.ndarray:
    """Rows c_n(z) = exp(-|z|^2/2) z^n / sqrt(n!), n = 0..cap, for each z.

    Evaluated in the log domain so large |z| or cap do not overflow.
    """
    if cap < 0:
        raise ValueError("cap must be >= 0")
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    n = np.arange(cap + 1)
    r = np.abs(z)[:, None]
    theta = np.angle(z)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        logr = np.log(r)
        logmag = -0.5 * r**2 + n * logr - 0.5 * gammaln(n + 1)
    # 0 * log(0) -> 0 for the vacuum component
    logmag[:, 0] = -0.5 * r[:, 0] ** 2
    return np.exp(logmag + 1j * n * theta)


def coherent_vector(z: complex, cap: int) -> CoherentVector:
    c = coherent_coeffs(z, cap)[0]
    tail = float(coherent_tail(z, cap))
    return CoherentVector(complex(z), cap, c, tail)


def coherent_tail(z, cap: int) -> np.ndarray:
    """Probability mass of |z> above the cap, 1 - sum_{n<=cap} |c_n|^2.

    The occupation of |z> is Poisson(|z|^2), so this is P(cap+1, |z|^2).
    """
    return gammainc(cap + 1, np.abs(np.asarray(z)) ** 2)


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Tensor rule on the disc |z|^2 <= radius_sq.

    Gauss-Legendre in t = |z|^2 on [0, radius_sq] times the uniform
    trapezoid rule in angle.  Weights sum to radius_sq, the d^2z-area of
    the disc.
    """

    radius_sq: float
    n_radial: int
    n_angular: int
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    t_nodes: np.ndarray = field(repr=False)
    t_weights: np.ndarray = field(repr=False)

    @property
    def radius(self) -> float:
        return float(np.sqrt(self.radius_sq))

    @property
    def scheme(self) -> dict:
        return {"radial": "gauss-legendre in |z|^2", "angular": "trapezoid",
                "n_radial": self.n_radial, "n_angular": self.n_angular,
                "radius_sq": self.radius_sq}

    def key(self) -> str:
        h = hashlib.sha256()
        h.update(np.asarray([self.radius_sq, self.n_radial, self.n_angular]).tobytes())
        return h.hexdigest()[:16]

    def radial(self) -> tuple[np.ndarray, np.ndarray]:
        """Nodes on the positive real axis with angle-integrated weights.

        Exact for integrands that depend on |z| only.
        """
        return np.sqrt(self.t_nodes).astype(complex), self.t_weights.copy()

    def conjugate_folded(self) -> tuple[np.ndarray, np.ndarray]:
        """Nodes with 0 <= arg z <= pi, weights doubled for their mirror images.

        Exact for integrands with f(conj z) = f(z).
        """
        m = self.n_angular
        j = np.arange(m // 2 + 1)
        mult = np.where((j == 0) | (2 * j == m), 1.0, 2.0)
        theta = 2 * np.pi * j / m
        r = np.sqrt(self.t_nodes)
        nodes = (r[:, None] * np.exp(1j * theta)[None, :]).ravel()
        weights = (self.t_weights[:, None] * (mult / m)[None, :]).ravel()
        return nodes, weights

    def coarsened(self) -> QuadratureGrid:
        """Same disc, half the radial nodes; used for rule-error estimates."""
        return disc_grid(self.radius_sq, max(self.n_radial // 2, 2), self.n_angular)

    def refined(self) -> QuadratureGrid:
        """Same disc, 1.5x the nodes in each direction; the difference from
        this rule estimates the error of the base rule."""
        return disc_grid(self.radius_sq, self.n_radial + (self.n_radial + 1) // 2,
                         self.n_angular + (self.n_angular + 1) // 2)


def disc_grid(radius_sq: float, n_radial: int = 48, n_angular: int = 32) -> QuadratureGrid:
    if radius_sq <= 0 or n_radial < 1 or n_angular < 1:
        raise ValueError("grid needs positive radius and node counts")
    x, w = np.polynomial.legendre.leggauss(n_radial)
    t = 0.5 * radius_sq * (x + 1.0)
    tw = 0.5 * radius_sq * w
    theta = 2 * np.pi * np.arange(n_angular) / n_angular
    nodes = (np.sqrt(t)[:, None] * np.exp(1j * theta)[None, :]).ravel()
    weights = np.repeat(tw / n_angular, n_angular)
    return QuadratureGrid(float(radius_sq), n_radial, n_angular, nodes, weights, t, tw)


def zmax_radius_sq(cap: int, n0_estimate: float = 0.0, sigmas: float = 12.0) -> float:
    """Disc radius rule: max(n0 estimate, cap/2) + sigmas * sqrt(cap)."""
    return max(float(n0_estimate), cap / 2.0) + sigmas * np.sqrt(cap)


def projector_integral(cap: int, nodes: np.ndarray, weights: np.ndarray,
                       symbol_values: np.ndarray | None = None) -> np.ndarray:
    """sum_i w_i u(z_i) |z_i><z_i| compressed to occupations <= cap."""
    c = coherent_coeffs(nodes, cap)
    w = weights if symbol_values is None else weights * symbol_values
    return (c.T * w) @ c.conj()


def identity_residual(cap: int, grid: QuadratureGrid) -> float:
    """Operator-norm distance of the quadrature resolution of identity from 1."""
    m = projector_integral(cap, grid.nodes, grid.weights)
    dev = m - np.eye(cap + 1)
    return float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (dev + dev.conj().T)))))


def split_zero_mode(basis: FockBasis, reduced_basis: FockBasis) -> int:
    """Check basis = (zero mode) x reduced_basis; return the zero-mode cap."""
    zero = basis.zero_mode
    if zero is None:
        raise ValueError("basis has no zero mode to project on")
    cap0 = basis.caps[basis.position(zero)]
    expected = basis.without([zero])
    if expected.key() != reduced_basis.key() or (cap0 + 1) * reduced_basis.dim != basis.dim:
        raise ValueError("reduced basis does not factor the full basis")
    return cap0


def partial_project(full_vector: np.ndarray, z: complex, basis: FockBasis,
                    reduced_basis: FockBasis) -> np.ndarray:
    """Partial inner product <z|Phi>, a vector on the reduced basis."""
    cap0 = split_zero_mode(basis, reduced_basis)
    phi = np.asarray(full_vector).reshape(cap0 + 1, reduced_basis.dim)
    return coherent_coeffs(z, cap0)[0].conj() @ phi
