import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cnumber.fock import (FockBasis, SizingError, build_basis, ladder_matrix, make_modes,
                          number_matrix, total_number_matrix)

MODES = make_modes([(-1,), (0,), (1,)], 4.0)


def test_dimension_and_zero_mode_slowest():
    b = build_basis(MODES, (2, 3, 1))
    assert b.dim == 3 * 4 * 2
    z = b.position(b.zero_mode)
    # zero-mode occupation is the slowest-varying index
    assert np.all(np.diff(b.states[:, z]) >= 0)
    assert b.states[0].tolist() == [0, 0, 0]


def test_sizing_error_names_product():
    with pytest.raises(SizingError, match=r"11 \* 25 \* 11 = 3025"):
        build_basis(MODES, (10, 24, 10), dim_limit=1000)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        build_basis(MODES, (1, 1))
    with pytest.raises(ValueError):
        build_basis(MODES, (0, 1, 1))
    with pytest.raises(ValueError):
        make_modes([(0,), (0,)], 4.0)


def test_momentum_from_label():
    assert MODES[2].momentum == pytest.approx((2 * np.pi / 4.0,))
    assert MODES[1].is_zero and not MODES[0].is_zero


@given(st.lists(st.integers(1, 4), min_size=1, max_size=3))
def test_index_roundtrip(caps):
    modes = make_modes([(i,) for i in range(len(caps))], 3.0)
    b = FockBasis(modes, caps)
    idx = np.array([b.index_of(s) for s in b.states])
    assert np.array_equal(idx, np.arange(b.dim))
    assert np.array_equal(b.indices_of(b.states), np.arange(b.dim))


@given(st.integers(1, 6), st.integers(1, 6))
def test_canonical_commutator_below_cap(c0, c1):
    modes = make_modes([(0,), (1,)], 2.0)
    b = FockBasis(modes, (c0, c1))
    for m in modes:
        a = ladder_matrix(b, m, "lower").toarray()
        ad = ladder_matrix(b, m, "raise").toarray()
        comm = a @ ad - ad @ a
        n = b.states[:, b.position(m)]
        below = n < b.caps[b.position(m)]
        assert np.allclose(np.diag(comm)[below], 1.0)
        assert np.allclose(comm - np.diag(np.diag(comm)), 0.0)
        assert np.allclose(ad, a.T)


def test_number_operators():
    b = build_basis(MODES, (2, 3, 2))
    for m in MODES:
        a = ladder_matrix(b, m, "lower")
        n = number_matrix(b, m)
        assert np.allclose((a.dagger() @ a).toarray(), n.toarray())
        assert n.is_hermitian()
    tot = total_number_matrix(b).toarray()
    assert np.allclose(np.diag(tot), b.states.sum(axis=1))


def test_without_keeps_caps():
    b = build_basis(MODES, (2, 5, 3))
    r = b.without([b.zero_mode])
    assert r.caps == (2, 3) and r.zero_mode is None
    assert r.dim * 6 == b.dim
