"""Basis enumeration and operator construction."""

import math

import numpy as np
import pytest
import scipy.sparse as sp

from bosonspec.errors import ConfigError, DimensionLimitError
from bosonspec.fock import (FockBasis, ModelParams, adjoint, bec_state,
                            bond_jump, hamiltonian, hop_operator,
                            jump_operators, site_operator, total_number)


def dense(a):
    return np.asarray(a.todense())


def test_single_site_enumeration():
    b = FockBasis.single_site(5)
    assert b.dim == 5
    assert b.states == ((0,), (1,), (2,), (3,), (4,))


def test_fixed_n_dimension_and_order():
    b = FockBasis.chain_fixed_n(2, 2)
    assert b.dim == 3
    assert set(b.states) == {(2, 0), (1, 1), (0, 2)}
    assert list(b.states) == sorted(b.states)

    b = FockBasis.chain_fixed_n(6, 3)
    assert b.dim == math.comb(6 + 3 - 1, 3) == 56
    assert list(b.states) == sorted(b.states)
    assert all(sum(occ) == 3 for occ in b.states)


def test_truncated_enumeration():
    b = FockBasis.chain_truncated(3, 4)
    assert b.dim == 64
    assert list(b.states) == sorted(b.states)
    assert all(max(occ) < 4 for occ in b.states)


def test_index_roundtrip():
    b = FockBasis.chain_fixed_n(4, 2)
    for i, occ in enumerate(b.states):
        assert b.index_of(occ) == i


def test_dimension_limit_refused():
    with pytest.raises(DimensionLimitError):
        FockBasis.chain_truncated(10, 10)
    with pytest.raises(DimensionLimitError):
        FockBasis.chain_fixed_n(30, 20)


def test_commutator_below_cutoff():
    d = 7
    b = FockBasis.single_site(d)
    lo = dense(site_operator(b, 0, "annihilate"))
    hi = dense(site_operator(b, 0, "create"))
    comm = lo @ hi - hi @ lo
    # canonical commutation holds strictly below the cutoff edge
    assert np.allclose(comm[:d - 1, :d - 1], np.eye(d - 1))


def test_create_is_adjoint_of_annihilate():
    b = FockBasis.single_site(6)
    lo = site_operator(b, 0, "annihilate")
    hi = site_operator(b, 0, "create")
    assert (abs(adjoint(lo) - hi)).max() == 0

    bn = FockBasis.chain_fixed_n(3, 2)
    lo = site_operator(bn, 1, "annihilate")   # maps N=2 -> N=1
    hi_back = site_operator(bn.sibling(1), 1, "create")  # maps N=1 -> N=2
    assert (abs(adjoint(lo) - hi_back)).max() == 0


def test_adjoint_involution_and_duplicate_merge():
    rng = np.random.default_rng(7)
    m = sp.csr_matrix(rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5)))
    again = adjoint(adjoint(m))
    assert (abs(again - m)).max() < 1e-15
    dup = sp.coo_matrix(([1.0, 2.0], ([0, 0], [1, 1])), shape=(2, 2))
    merged = adjoint(adjoint(sp.csr_matrix(dup)))
    assert merged[0, 1] == 3.0


def test_hop_matrix_element():
    b = FockBasis.chain_fixed_n(2, 1)
    hop = dense(hop_operator(b, 0, 1))   # b_1^dag b_2 with 1-based site labels
    src = b.index_of((0, 1))
    dst = b.index_of((1, 0))
    assert hop[dst, src] == pytest.approx(1.0)
    assert np.count_nonzero(hop) == 1


def test_hop_amplitudes_bose_factors():
    b = FockBasis.chain_fixed_n(2, 3)
    hop = dense(hop_operator(b, 0, 1))
    src = b.index_of((1, 2))
    dst = b.index_of((2, 1))
    assert hop[dst, src] == pytest.approx(math.sqrt(2 * 2))


def test_hamiltonian_single_site_diagonal():
    b = FockBasis.single_site(3)
    p = ModelParams(J=0.0, U=1.0, mu=0.5, L=1)
    h = dense(hamiltonian(b, p))
    assert np.allclose(np.diag(h), [0.0, -0.5, 1.0 - 1.0])
    assert np.allclose(h, np.diag(np.diag(h)))


def test_hamiltonian_two_site_periodic_doubling():
    # L=2 periodic chains count the single bond twice
    b = FockBasis.chain_fixed_n(2, 1)
    p = ModelParams(J=1.0, L=2, N=1)
    h = dense(hamiltonian(b, p))
    eigs = np.sort(np.linalg.eigvalsh(h))
    assert np.allclose(eigs, [-2.0, 2.0])


def test_hamiltonian_ring_dispersion():
    b = FockBasis.chain_fixed_n(3, 1)
    p = ModelParams(J=1.0, L=3, N=1)
    h = dense(hamiltonian(b, p))
    eigs = np.sort(np.linalg.eigvalsh(h))
    expect = np.sort([-2.0 * np.cos(2 * np.pi * m / 3) for m in range(3)])
    assert np.allclose(eigs, expect)


def test_hamiltonian_interaction_element():
    b = FockBasis.single_site(4)
    p = ModelParams(J=0.0, U=2.0, L=1)
    h = dense(hamiltonian(b, p))
    assert h[2, 2] == pytest.approx(2.0)    # U/2 * n(n-1) at n=2
    assert h[3, 3] == pytest.approx(6.0)


def test_hamiltonian_hermitian():
    b = FockBasis.chain_fixed_n(4, 2)
    p = ModelParams(J=1.0, U=2.0, mu=0.3, L=4, N=2)
    h = dense(hamiltonian(b, p))
    assert np.max(np.abs(h - h.conj().T)) < 1e-14


def test_bond_jump_annihilates_condensate():
    b = FockBasis.chain_fixed_n(4, 2)
    phi = bec_state(b)
    assert np.linalg.norm(phi) == pytest.approx(1.0)
    for j in range(4):
        L = bond_jump(b, j, kappa=2.0)
        assert np.linalg.norm(L @ phi) < 1e-13


def test_model1_jumps_commute_with_total_number():
    b = FockBasis.chain_fixed_n(3, 2)
    p = ModelParams(J=1.0, U=2.0, kappa=1.0, gamma=0.5, L=3, N=2)
    n_tot = dense(total_number(b))
    for op in jump_operators(b, p, model=1):
        comm = dense(op) @ n_tot - n_tot @ dense(op)
        assert np.max(np.abs(comm)) < 1e-12
    h = dense(hamiltonian(b, p))
    assert np.max(np.abs(h @ n_tot - n_tot @ h)) < 1e-12


def test_model1_jump_count_and_order():
    b = FockBasis.chain_fixed_n(3, 2)
    p = ModelParams(kappa=1.0, gamma=0.5, L=3, N=2)
    ops = jump_operators(b, p, model=1)
    assert len(ops) == 6
    # first the bonds, then the dephasing channels
    n0 = dense(site_operator(b, 0, "number"))
    assert np.allclose(dense(ops[3]), math.sqrt(0.5) * n0)


def test_model2_requires_truncated_basis():
    b = FockBasis.chain_fixed_n(3, 2)
    p = ModelParams(kappa=1.0, r_p=0.5, r_l=1.0, r_t=0.2, L=3, N=None)
    with pytest.raises(ConfigError):
        jump_operators(b, p, model=2)


def test_model2_jump_set():
    b = FockBasis.chain_truncated(2, 4)
    p = ModelParams(kappa=1.0, r_p=0.5, r_l=1.0, r_t=0.2, L=2)
    ops = jump_operators(b, p, model=2)
    assert len(ops) == 2 + 2 * 3


def test_params_validation():
    with pytest.raises(ConfigError):
        ModelParams(r_p=1.0).validate(1)
    with pytest.raises(ConfigError):
        ModelParams(gamma=1.0, r_t=1.0).validate(2)
    with pytest.raises(ConfigError):
        ModelParams(r_t=0.0).validate(2)
    with pytest.raises(ConfigError):
        ModelParams(kappa=-1.0).validate(1)
    ModelParams(kappa=1.0, gamma=1.0, N=4, L=8).validate(1)
    ModelParams(kappa=1.0, r_p=1.0, r_l=0.5, r_t=0.3).validate(2)


def test_nbar():
    assert ModelParams(N=3, L=6).nbar == pytest.approx(0.5)
    assert ModelParams().nbar is None


def test_bec_amplitude_value():
    b = FockBasis.chain_fixed_n(2, 2)
    phi = bec_state(b)
    # amplitude on (1,1) is sqrt(2!/1!/1!)/2 = sqrt(2)/2
    assert abs(phi[b.index_of((1, 1))]) == pytest.approx(math.sqrt(2) / 2)
