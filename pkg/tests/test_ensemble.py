import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given
from hypothesis import strategies as st

from cnumber.coherent import disc_grid
from cnumber.ensemble import (CoverageError, SpectrumCache, SubstitutedSystem, block_partition,
                              density_upper_estimate, direct_zero_mode, full_system, integrate,
                              number_expectation, p_max, set_cache, spectrum, support_edge,
                              weight, weight_zero_mode, xi_full, xi_substituted)
from cnumber.fock import OperatorMatrix
from cnumber.model import EnsembleParams, full_hamiltonian, make_model
from cnumber.verify import free_log_partition, instance


def dense_log_xi(H, beta):
    return math.log(np.trace(sla.expm(-beta * H.toarray())).real)


@pytest.mark.parametrize("beta,mu,lam", [(0.5, -1.0, 0.0), (1.0, -0.5, 0.1), (2.0, 0.3, -0.2)])
def test_xi_full_matches_dense_expm(small_inst, beta, mu, lam):
    m = small_inst
    assert m.basis.dim <= 200
    p = EnsembleParams(beta, mu, lam)
    ref = dense_log_xi(full_hamiltonian(m.spec, p, m.basis), beta)
    got = xi_full(m.spec, p, m.basis).log_value
    assert got == pytest.approx(ref, rel=1e-10)


def test_block_solver_matches_dense(small_inst):
    m = small_inst
    H = full_hamiltonian(m.spec, EnsembleParams(1.0, -0.5, 0.1), m.basis)
    s = spectrum(H)
    assert np.allclose(s.eigenvalues, np.linalg.eigvalsh(H.toarray()), atol=1e-11)
    U = s.eigenvectors
    assert np.allclose(U.conj().T @ H.toarray() @ U, np.diag(s.eigenvalues), atol=1e-10)


def test_blocks_follow_conservation(default_inst):
    m = default_inst
    H = full_hamiltonian(m.spec, EnsembleParams(1.0, -0.5), m.basis)
    blocks = block_partition(H.entries)
    assert sum(len(b) for b in blocks) == m.basis.dim
    n = m.basis.states.sum(axis=1)
    assert all(len(set(n[b])) == 1 for b in blocks)


def test_spectrum_rejects_nonhermitian(small_inst):
    import scipy.sparse as sp
    b = small_inst.basis
    A = OperatorMatrix(b, sp.csr_matrix(np.triu(np.ones((b.dim, b.dim)))), hermitian=False)
    with pytest.raises(ValueError):
        spectrum(A)


def test_cache_soundness(tmp_path, small_inst):
    m = small_inst
    p = EnsembleParams(1.0, -0.5, 0.1)
    H = full_hamiltonian(m.spec, p, m.basis)
    ref = spectrum(H, use_cache=False).eigenvalues
    disk = SpectrumCache(tmp_path)
    old = set_cache(disk)
    try:
        spectrum(H)
        disk.clear_memory()
        again = spectrum(H).eigenvalues
        assert disk.stats()["hits"] == 1
    finally:
        set_cache(old)
    assert np.max(np.abs(again - ref)) <= 1e-12


def test_free_closed_forms(free_single):
    m = free_single
    p = EnsembleParams(1.0, -1.0)
    ref = free_log_partition(m.spec, p)
    grid = disc_grid(60.0)
    assert xi_full(m.spec, p, m.basis).log_value == pytest.approx(ref["log_xi"], abs=1e-12)
    lo = xi_substituted(m.spec, p, m.basis, grid, "lower").log_value
    up = xi_substituted(m.spec, p, m.basis, grid, "upper").log_value
    assert lo == pytest.approx(ref["log_xi_lower"], abs=1e-12)
    assert up == pytest.approx(ref["log_xi_upper"], abs=1e-12)
    assert lo <= ref["log_xi"] <= up


def test_free_field_displacement():
    s = make_model(4.0, ((-1,), (0,), (1,)), g=0.0, phi=0.0)
    m = instance(s, (12, 60, 12))
    p = EnsembleParams(1.0, -0.5, 0.1)
    ref = free_log_partition(s, p)
    assert xi_full(s, p, m.basis).log_value == pytest.approx(ref["log_xi"], abs=1e-10)
    peak = p_max(s, p, m.basis, "lower")
    assert peak.value.log_value == pytest.approx(ref["log_peak"], abs=1e-10)
    assert peak.z_max.real == pytest.approx(-2 * 0.1 / 0.5, abs=1e-5)


@given(st.floats(0.3, 2.0), st.floats(-1.5, -0.2))
def test_log_xi_convex_in_mu(beta, mu):
    s = make_model(4.0, ((-1,), (0,), (1,)))
    from cnumber.fock import build_basis
    b = build_basis(s.modes, (2, 5, 2))
    h = 0.05
    f = [xi_full(s, EnsembleParams(beta, mu + k * h), b).log_value for k in (-1, 0, 1)]
    assert f[0] + f[2] - 2 * f[1] >= -1e-12


def test_number_is_mu_derivative(small_inst):
    m = small_inst
    p = EnsembleParams(1.0, -0.5, 0.1)
    h = 1e-5
    d = (xi_full(m.spec, p.shifted(h), m.basis).log_value
         - xi_full(m.spec, p.shifted(-h), m.basis).log_value) / (2 * h)
    assert number_expectation(full_system(m.spec, p, m.basis)) == pytest.approx(d, rel=1e-7)


def test_gauge_invariant_integrand_is_radial(default_inst):
    m = default_inst
    sys_ = SubstitutedSystem(m.spec, EnsembleParams(1.0, -0.5), m.basis, "upper")
    assert sys_.gauge_invariant
    r = np.array([0.3, 1.0, 2.2])
    vals = [sys_.log_traces(r * np.exp(1j * th)) for th in (0.0, 0.7, 2.0, 4.0)]
    assert np.allclose(vals, vals[0], atol=1e-11)


def test_reduced_integration_modes_agree(default_inst):
    """Radial / folded rules reproduce the full-disc value."""
    m = default_inst
    for lam in (0.0, 0.1):
        p = EnsembleParams(1.0, -0.5, lam)
        grid = disc_grid(60.0, 48, 32)
        sys_ = SubstitutedSystem(m.spec, p, m.basis, "lower")
        fast = integrate(sys_, grid).value.log_value
        from cnumber.ensemble import NodeSet
        lt = sys_.log_traces(grid.nodes)
        full = float(np.log(np.sum(grid.weights * np.exp(lt))))
        assert fast == pytest.approx(full, abs=1e-12)


def test_real_axis_max_matches_grid(default_inst):
    m = default_inst
    p = EnsembleParams(1.0, -0.5, 0.1)
    peak = p_max(m.spec, p, m.basis, "lower", radius=6.0)
    grid = disc_grid(36.0, 96, 64)
    lt = SubstitutedSystem(m.spec, p, m.basis, "lower").log_traces(grid.nodes)
    assert peak.value.log_value >= lt.max() - 1e-12
    assert abs(peak.z_max.imag) == 0.0 and peak.z_max.real < 0


def test_coverage_error_on_small_disc(default_inst):
    m = default_inst
    p = EnsembleParams(1.0, -0.5)
    with pytest.raises(CoverageError):
        xi_substituted(m.spec, p, m.basis, disc_grid(1.0), "upper")
    with pytest.raises(CoverageError):
        p_max(m.spec, EnsembleParams(1.0, -0.5, 0.5), m.basis, radius=0.2)


def test_weights_and_zero_mode(small_inst):
    m = small_inst
    p = EnsembleParams(1.0, -0.5, 0.1)
    grid = disc_grid(40.0, 48, 32)
    sys_ = full_system(m.spec, p, m.basis)
    wf = weight(m.spec, p, m.basis, grid, "full", system=sys_)
    assert wf.norm == pytest.approx(1.0, abs=1e-10)
    assert np.sum(grid.weights * wf.values) == pytest.approx(1.0)
    n0, a0 = direct_zero_mode(sys_)
    n0w, a0w = weight_zero_mode(sys_, grid)
    # <n0> = int (|z|^2 - 1) W and <a0> = int z W
    assert n0w == pytest.approx(n0, abs=1e-9)
    assert a0w == pytest.approx(a0, abs=1e-9)
    assert n0 >= abs(a0) ** 2
    wu = weight(m.spec, p, m.basis, grid, "upper")
    assert np.all(wu.values >= 0) and wu.variance > 0
    with pytest.raises(ValueError):
        weight(m.spec, p, m.basis, grid, "middle")


def test_parity_symmetry_of_weights(small_inst):
    m = small_inst
    grid = disc_grid(40.0, 32, 16)
    wp = weight(m.spec, EnsembleParams(1.0, -0.5, 0.2), m.basis, grid, "full")
    wm = weight(m.spec, EnsembleParams(1.0, -0.5, -0.2), m.basis, grid, "full")
    # nodes rotated by pi sit n_angular/2 positions further along each ring
    rolled = np.roll(wm.values.reshape(32, 16), 8, axis=1).ravel()
    assert np.allclose(wp.values, rolled, atol=1e-12)
    assert wp.mean == pytest.approx(-wm.mean, abs=1e-12)


def test_density_estimate_against_quadrature_mean(default_inst):
    m = default_inst
    p = EnsembleParams(1.0, -0.5)
    grid = disc_grid(74.0)
    d = density_upper_estimate(m.spec, p, m.basis, grid)
    assert d.fd_error < 1e-6
    assert d.value > 0


def test_support_edge_grows_with_field():
    s = make_model()
    a = support_edge(s, EnsembleParams(1.0, -0.5, 0.0))
    b = support_edge(s, EnsembleParams(1.0, -0.5, 0.4))
    assert b > a > 0
