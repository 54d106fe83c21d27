import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_dm, random_state
from kickreset.core import ModelParams, basis_state, build_couplings, x_polarized
from kickreset.evolution import (SX, apply_cycle, apply_cycle_dm, apply_cycle_restricted, apply_xx_chain,
                                 build_phase_tables, dense_cycle_unitary, dense_hamiltonians, fht, pauli_on,
                                 tables_for)


def _up_to_phase(a, b):
    ph = np.vdot(b, a)
    ph /= abs(ph)
    return np.max(np.abs(a - ph * b))


@pytest.mark.parametrize("alpha", [0, 0.5, 2])
@pytest.mark.parametrize("h", [0.3, 0.9])
def test_cycle_matches_dense(alpha, h, rng):
    P = ModelParams(L=6, alpha=alpha, h=h)
    psi = random_state(6, rng)
    U = dense_cycle_unitary(P)
    assert _up_to_phase(apply_cycle(psi, tables_for(P)), U @ psi) < 1e-10


def test_fht_involution(rng):
    psi = random_state(12, rng)
    assert np.max(np.abs(fht(fht(psi)) - psi)) < 1e-12


def test_fht_is_hadamard(rng):
    Hd = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    R = Hd
    for _ in range(3):
        R = np.kron(R, Hd)
    psi = random_state(4, rng)
    assert np.allclose(fht(psi), R @ psi, atol=1e-13)


def test_x_basis_energies_are_ising_diagonal():
    P = ModelParams(L=5, alpha=1.0)
    tab = build_phase_tables(build_couplings(P), P)
    HI, HT = dense_hamiltonians(P)
    Hd = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    R = Hd
    for _ in range(4):
        R = np.kron(R, Hd)
    assert np.allclose(np.diag(R @ HI @ R).real, tab.ising_energies, atol=1e-12)
    assert np.allclose(np.diag(HT).real, tab.field_phases, atol=1e-12)


@given(st.integers(2, 10), st.floats(0, 3), st.floats(-2, 2))
def test_norm_preserved(L, alpha, h):
    P = ModelParams(L=L, alpha=alpha, h=h)
    tab = tables_for(P)
    psi = x_polarized(L)
    for _ in range(100):
        psi = apply_cycle(psi, tab)
    assert abs(np.vdot(psi, psi).real - 1) < 1e-10


def test_cycle_dm_matches_dense(rng):
    P = ModelParams(L=4, alpha=0.5, h=0.7)
    rho = random_dm(4, rng)
    U = dense_cycle_unitary(P)
    assert np.allclose(apply_cycle_dm(rho, tables_for(P)), U @ rho @ U.conj().T, atol=1e-12)


def test_xx_chain_dense():
    L = 4
    psi = basis_state(L, 0)
    from scipy.linalg import expm

    ref = psi.astype(complex)
    for i in range(1, L):
        G = pauli_on(SX, 0, L) @ pauli_on(SX, i, L)
        ref = expm(0.25j * np.pi * G) @ ref
    assert np.allclose(apply_xx_chain(psi), ref, atol=1e-13)


def test_restricted_cycle_dense(rng):
    P = ModelParams(L=5, alpha=2.0, h=0.9)
    psi = random_state(5, rng)
    Usub = dense_cycle_unitary(P.with_(L=4))
    # system = sites 1..4, site 0 is the lowest bit
    U = np.kron(Usub, np.eye(2))
    assert _up_to_phase(apply_cycle_restricted(psi, P), U @ psi) < 1e-10
