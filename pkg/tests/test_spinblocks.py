import numpy as np
import pytest
from hypothesis import given, strategies as st

from kickreset.permsym import run_permsym
from kickreset.spinblocks import (BlocksCycle, block_labels, blocks_init, blocks_observables, blocks_reset,
                                  blocks_reset_reference, multiplicity)


@given(st.integers(1, 60))
def test_dimension_count(L):
    assert sum(multiplicity(L, j) * (j + 1) for j in block_labels(L)) == 2**L


def test_identity_trace():
    assert blocks_init("identity", 9).trace() == pytest.approx(2**9)
    assert blocks_init("mixed", 9).trace() == pytest.approx(1)
    assert blocks_init("mixed", 9).purity() == pytest.approx(2.0**-9)
    assert blocks_init("x_polarized", 9).purity() == pytest.approx(1)


@pytest.mark.parametrize("p", [0.05, 0.37, 0.95, 1.0])
@pytest.mark.parametrize("L", [5, 12, 33])
def test_fast_reset_matches_reference(L, p):
    st_ = BlocksCycle(L, h=0.9, p=0.0)(blocks_init("x_polarized", L))
    a = blocks_reset(st_, p)
    b = blocks_reset_reference(st_, p)
    for j in a.blocks:
        assert np.max(np.abs(a.blocks[j] - b.blocks[j])) < 1e-12


@given(st.integers(2, 40), st.floats(0, 1), st.floats(-2, 2))
def test_cycle_preserves_trace_and_hermiticity(L, p, h):
    cyc = BlocksCycle(L, h=h, p=p)
    s = blocks_init("x_polarized", L)
    for _ in range(5):
        s = cyc(s)
    assert abs(s.trace() - 1) < 1e-11
    for b in s.blocks.values():
        assert np.allclose(b, b.conj().T, atol=1e-12)
        assert np.linalg.eigvalsh(b).min() > -1e-11


def test_full_reset_is_all_down():
    s = blocks_reset(blocks_init("x_polarized", 10), 1.0)
    o = blocks_observables(s)
    assert o["X"] == pytest.approx(0, abs=1e-12)
    assert o["binder"] == pytest.approx(2 / 30)
    assert s.purity() == pytest.approx(1)


def test_matches_four_index_backend():
    a, _ = run_permsym(12, 0.9, 0.55, 25, method="sectors")
    b, _ = run_permsym(12, 0.9, 0.55, 25, method="blocks")
    assert np.allclose(a.column("binder"), b.column("binder"), atol=4e-12)
    assert np.allclose(a.column("X2"), b.column("X2"), atol=4e-12)


def test_large_L_stays_normalized():
    _, s = run_permsym(96, 0.9, 0.6, 40, method="blocks")
    assert abs(s.trace() - 1) < 1e-11
