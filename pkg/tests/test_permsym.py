import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from conftest import random_dm
from kickreset.core import ModelParams
from kickreset.evolution import apply_cycle_dm, tables_for
from kickreset.measurement import average_reset_channel
from kickreset.permsym import (PermCycle, apply_collective, apply_reset_perm, basis_size, dense_collective,
                               dense_to_perm, enumerate_basis, evolve_interaction_perm, init_perm, perm_observables,
                               perm_to_dense, run_permsym, trace_perm)


def _oracle_ops(L):
    """Collective sigma^x and sigma^z sums built from bit flips and bit values."""
    n = 1 << L
    idx = np.arange(n)
    X = np.zeros((n, n))
    Z = np.zeros(n)
    for i in range(L):
        X[idx ^ (1 << i), idx] += 1
        Z += 2 * ((idx >> i) & 1) - 1
    return X, np.diag(Z)


def _oracle_superop(L, h, p, J=1.0, T=1.0):
    X, Z = _oracle_ops(L)
    HI = -J / (L - 1) * (X @ X - L * np.eye(1 << L))
    U = expm(-0.5j * T * h * Z) @ expm(-0.5j * T * HI)
    S = np.kron(U, U.conj())
    down, up = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    kraus = [math.sqrt(p) * np.outer(down, down), math.sqrt(p) * np.outer(down, up), math.sqrt(1 - p) * np.eye(2)]
    for i in range(L):
        site = sum(np.kron(_on_site(K, i, L), _on_site(K, i, L).conj()) for K in kraus)
        S = site @ S
    return S


def _on_site(K, i, L):
    # bit i is the i-th factor from the right
    return np.kron(np.kron(np.eye(1 << (L - 1 - i)), K), np.eye(1 << i))


def test_basis_size():
    for L in (1, 2, 5, 30):
        assert basis_size(L) == math.comb(L + 3, 3) == enumerate_basis(L).size


@given(st.integers(1, 40))
def test_rank_is_bijection(L):
    b = enumerate_basis(L)
    assert np.array_equal(b.rank(b.n1, b.n2, b.n3), np.arange(b.size))
    assert np.all(b.n.sum(axis=1) == L)


@pytest.mark.parametrize("op", ["X_l", "X_r", "Z_l", "Z_r", "O"])
def test_collective_matches_dense(op, rng):
    L = 3
    rho = random_dm(L, rng)
    v = dense_to_perm(rho + rho.T)  # symmetrize within the sector
    sym = perm_to_dense(v)
    Ddense = dense_collective(L, op) @ sym.reshape(-1)
    assert np.allclose(perm_to_dense(apply_collective(op, v)).reshape(-1), Ddense, atol=1e-12)


@pytest.mark.parametrize("L", [2, 3, 4])
@pytest.mark.parametrize("method", ["krylov", "sectors"])
@pytest.mark.parametrize("reset_method", ["closed_form", "expm"])
def test_cycles_match_dense_oracle(L, method, reset_method):
    h, p = 0.9, 0.3
    S = _oracle_superop(L, h, p)
    cyc = PermCycle(L, h=h, p=p, method=method, reset_method=reset_method)
    v = init_perm("x_polarized", L)
    r = perm_to_dense(v).reshape(-1)
    for _ in range(20):
        v = cyc(v)
        r = S @ r
        assert np.max(np.abs(perm_to_dense(v).reshape(-1) - r)) < 1e-8


@pytest.mark.parametrize("p", [0.0, 0.2, 0.7, 1.0])
def test_reset_closed_form_vs_generator(p):
    L = 5
    v = init_perm("x_polarized", L)
    v = evolve_interaction_perm(v, 1.0, 1.0)
    a = apply_reset_perm(v, p)
    if p < 1:
        assert np.allclose(a, apply_reset_perm(v, p, "expm"), atol=1e-11)
    else:
        assert np.allclose(a, init_perm("all_down", L), atol=1e-12)


def test_interaction_methods_agree():
    L = 12
    v = init_perm("x_polarized", L)
    a = evolve_interaction_perm(v, 1.0, 1.0, method="krylov")
    b = evolve_interaction_perm(v, 1.0, 1.0, method="sectors")
    assert np.max(np.abs(a - b)) < 1e-9


def test_matches_state_vector_dm_route():
    L = 4
    P = ModelParams(L=L, alpha=0.0, h=0.9, p=0.25)
    tab = tables_for(P)
    v = init_perm("x_polarized", L)
    rho = perm_to_dense(v)
    cyc = PermCycle(L, h=0.9, p=0.25, method="sectors")
    for _ in range(5):
        v = cyc(v)
        rho = average_reset_channel(apply_cycle_dm(rho, tab), 0.25)
    assert np.allclose(perm_to_dense(v), rho, atol=1e-10)


def test_initial_states():
    L = 6
    assert trace_perm(init_perm("x_polarized", L)) == pytest.approx(1)
    assert trace_perm(init_perm("all_down", L)) == pytest.approx(1)
    assert trace_perm(init_perm("identity", L)) == pytest.approx(2**L)
    assert trace_perm(init_perm("mixed", L)) == pytest.approx(1)
    o = perm_observables(init_perm("x_polarized", L))
    assert o["X"] == pytest.approx(1) and o["X2"] == pytest.approx(1) and o["binder"] == pytest.approx(2 / 3)
    o = perm_observables(init_perm("all_down", L))
    assert o["binder"] == pytest.approx(2 / (3 * L))
    with pytest.raises(ValueError):
        init_perm("nope", L)


def test_trivial_limits():
    s, v = run_permsym(6, 0.9, 1.0, 3, method="sectors")
    assert np.allclose(v, init_perm("all_down", 6), atol=1e-12)
    s, v = run_permsym(6, 0.9, 0.0, 10, method="sectors")
    assert trace_perm(v) == pytest.approx(1, abs=1e-10)


def test_backends_agree():
    a, _ = run_permsym(10, 0.9, 0.4, 15, method="sectors")
    b, _ = run_permsym(10, 0.9, 0.4, 15, method="blocks")
    for key in ("X", "X2", "binder"):
        assert np.allclose(a.column(key), b.column(key), atol=1e-10)
