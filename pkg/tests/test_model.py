import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cnumber.coherent import coherent_coeffs
from cnumber.fock import build_basis, ladder_matrix, total_number_matrix
from cnumber.model import (EnsembleParams, ModelError, ModelSpec, Reduction, build_hamiltonian,
                           default_model, delta_bound, delta_closed_form, full_hamiltonian,
                           gaussian_nu, hamiltonian_terms, make_model, reduce_lower,
                           reduce_upper, zero_mode_plan)
from cnumber.fock import make_modes


def z_set(n=20, r2max=10.0):
    """Deterministic spread of points with |z|^2 <= r2max."""
    k = np.arange(n)
    r = np.sqrt(r2max * (k + 0.5) / n)
    return r * np.exp(2j * np.pi * 0.618034 * k)


def test_default_model_nu_values():
    s = default_model()
    assert s.volume == 4.0 and s.phi == 1.0
    assert s.nu[(0,)] == 1.0
    assert s.nu[(1,)] == pytest.approx(np.exp(-(np.pi / 4) ** 2))
    assert s.nu[(2,)] == pytest.approx(np.exp(-(np.pi / 2) ** 2))
    assert s.energy(s.modes[2]) == pytest.approx((np.pi / 2) ** 2)


def test_phi_below_max_nu_rejected():
    with pytest.raises(ModelError, match="phi"):
        make_model(phi=0.5)


def test_nonreal_potential_rejected_naming_pair():
    nu = {(0,): 1.0, (1,): 0.5 + 0.1j, (-1,): 0.5 + 0.1j, (2,): 0.0, (-2,): 0.0}
    with pytest.raises(ModelError, match=r"\(-1,\).*\(1,\)|\(1,\).*\(-1,\)"):
        make_model(nu=nu, phi=1.0)


def test_missing_transfer_rejected():
    s = make_model(nu={(0,): 1.0}, phi=1.0)
    with pytest.raises(ModelError):
        hamiltonian_terms(s)


def test_params_validation():
    with pytest.raises(ValueError):
        EnsembleParams(0.0, -1.0)
    with pytest.raises(ValueError):
        EnsembleParams(1.0, -1.0, 0.1j)
    assert EnsembleParams(1.0, -1.0).shifted(0.5).mu == -0.5


def test_hamiltonian_hermitian_and_conserving(small_inst):
    m = small_inst
    H = build_hamiltonian(m.spec, m.basis)
    assert H.is_hermitian()
    N = total_number_matrix(m.basis).toarray()
    Hd = H.toarray()
    assert np.allclose(Hd @ N, N @ Hd)
    P = np.diag(m.basis.states @ np.array([md.label[0] for md in m.spec.modes]))
    assert np.allclose(Hd @ P, P @ Hd)


def test_parity_maps_lambda_to_minus_lambda(small_inst):
    m = small_inst
    Hp = full_hamiltonian(m.spec, EnsembleParams(1.0, -0.5, 0.2), m.basis).toarray()
    Hm = full_hamiltonian(m.spec, EnsembleParams(1.0, -0.5, -0.2), m.basis).toarray()
    U = np.diag((-1.0) ** m.basis.states.sum(axis=1))
    assert np.allclose(U @ Hp @ U, Hm)


def test_delta_identity(default_inst):
    s, b = default_inst.spec, default_inst.basis
    rest = b.without([s.zero_mode])
    p = EnsembleParams(1.0, -0.7, 0.1)
    plan = zero_mode_plan(s)
    for z in z_set():
        d = (reduce_upper(s, p, plan.at(z), rest) - reduce_lower(s, p, plan.at(z), rest)).toarray()
        ref = delta_closed_form(s, p, z, rest).toarray()
        assert np.max(np.abs(d - ref)) <= 1e-12 * np.max(np.abs(ref))


def test_delta_bound_every_state(default_inst):
    s, b = default_inst.spec, default_inst.basis
    rest = b.without([s.zero_mode])
    p = EnsembleParams(1.0, -0.7)
    plan = zero_mode_plan(s)
    nrest = rest.states.sum(axis=1)
    for z in z_set():
        diag = np.real(np.diag(delta_closed_form(s, p, z, rest).toarray()))
        bound = np.array([delta_bound(plan, p, s, abs(z) ** 2 + n) for n in nrest])
        assert np.all(np.abs(diag) <= bound)


def test_lower_symbol_is_coherent_expectation():
    """H'(z) = <z|H|z> over the zero mode, checked with a large zero-mode cap."""
    s = make_model()
    big = build_basis(s.modes, (2, 40, 2))
    rest = big.without([s.zero_mode])
    p = EnsembleParams(1.0, -0.3, 0.15)
    H = full_hamiltonian(s, p, big).toarray().reshape(41, rest.dim, 41, rest.dim)
    for z in (0.4 + 0.3j, -1.2, 0.9j):
        c = coherent_coeffs(z, 40)[0]
        partial = np.einsum("a,aibj,b->ij", c.conj(), H, c)
        ref = reduce_lower(s, p, zero_mode_plan(s, z), rest).toarray()
        assert np.allclose(partial, ref, atol=1e-10)


@given(st.floats(-2, 0), st.complex_numbers(max_magnitude=3, allow_nan=False))
def test_free_mode_symbols(mu, z):
    s = make_model(4.0, ((0,),), g=0.0, phi=0.0)
    rest = build_basis(s.modes, (3,)).without([s.zero_mode])
    p = EnsembleParams(1.0, mu)
    lo = reduce_lower(s, p, zero_mode_plan(s, z), rest).toarray()
    up = reduce_upper(s, p, zero_mode_plan(s, z), rest).toarray()
    assert lo[0, 0] == pytest.approx(-mu * abs(z) ** 2, abs=1e-12)
    assert up[0, 0] == pytest.approx(-mu * (abs(z) ** 2 - 1), abs=1e-12)


def test_reduction_matrix_hermitian(default_inst):
    s, b = default_inst.spec, default_inst.basis
    rest = b.without([s.zero_mode])
    for variant in ("lower", "upper"):
        r = Reduction(s, EnsembleParams(1.0, -0.5, 0.1), (s.zero_mode,), rest, variant)
        assert r.matrix(1.0 - 2.0j).is_hermitian()
        assert r.key() != Reduction(s, EnsembleParams(1.0, -0.5, 0.2), (s.zero_mode,), rest,
                                    variant).key()


def test_reduction_rejects_mismatched_basis(default_inst):
    s, b = default_inst.spec, default_inst.basis
    with pytest.raises(ModelError):
        Reduction(s, EnsembleParams(1.0, -0.5), (s.zero_mode,), b, "lower")


def test_gaussian_nu_symmetric():
    nu = gaussian_nu([(-1,), (0,), (1,)], 8.0, 2.0, 0.3)
    for p, v in nu.items():
        assert nu[tuple(-x for x in p)] == v
    assert nu[(0,)] == 2.0
