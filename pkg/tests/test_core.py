import numpy as np
import pytest
from hypothesis import given, strategies as st

from kickreset.core import (InvalidSizeError, ModelParams, OutcomeRecord, build_couplings, kac_normalization,
                            popcount, popcount_table, rng_stream, x_polarized, check_state)


def test_kac_examples():
    assert kac_normalization(5, 0) == pytest.approx(8.0, abs=1e-12)
    assert kac_normalization(4, 1) == pytest.approx(11 / 3, abs=1e-12)
    assert kac_normalization(6, 100) == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(InvalidSizeError):
        kac_normalization(1, 0)


def test_coupling_examples():
    J = build_couplings(ModelParams(L=5, alpha=0))
    off = ~np.eye(5, dtype=bool)
    assert np.allclose(J[off], 0.25) and np.all(np.diag(J) == 0)
    J = build_couplings(ModelParams(L=4, alpha=1))
    assert J[0, 1] == pytest.approx(4 / 11, abs=1e-12)
    assert J[0, 2] == pytest.approx(3 / 11, abs=1e-12)


@pytest.mark.parametrize("alpha", [0, 0.5, 1, 2, 4])
@pytest.mark.parametrize("L", [2, 3, 7, 16, 33, 64])
def test_coupling_invariants(L, alpha):
    J = build_couplings(ModelParams(L=L, alpha=alpha, J=1.3))
    assert np.allclose(J, J.T, atol=0)
    assert np.allclose(J.sum(axis=1), 1.3, atol=1e-12)
    for r in range(1, L):
        row = np.array([J[i, (i + r) % L] for i in range(L)])
        assert np.allclose(row, row[0], atol=1e-14)
        assert J[0, r] == pytest.approx(J[0, L - r], abs=1e-14)


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(L=0)
    with pytest.raises(ValueError):
        ModelParams(L=4, p=1.5)
    with pytest.raises(ValueError):
        ModelParams(L=4, T=0)
    p = ModelParams(L=4)
    assert (p.J, p.T) == (1.0, 1.0)
    assert p.with_(p=0.3).p == 0.3


def test_rng_streams():
    a = rng_stream(7, 0).random(100)
    assert np.array_equal(a, rng_stream(7, 0).random(100))
    assert not np.array_equal(a, rng_stream(7, 1).random(100))
    u = rng_stream(7, 2).random(100_000)
    # binomial bound on the mean of uniforms
    assert abs(u.mean() - 0.5) < 3 * np.sqrt(1 / 12 / u.size)


@given(st.integers(1, 13), st.integers(1, 6), st.integers(0, 2**31))
def test_outcome_record_roundtrip(L, n_cycles, seed):
    r = np.random.default_rng(seed)
    rec = OutcomeRecord(L)
    for _ in range(n_cycles):
        rec.append(r.integers(0, 3, L))
    back = OutcomeRecord.from_bytes(rec.to_bytes(), L)
    assert np.array_equal(back.as_array(), rec.as_array())


def test_outcome_record_rejects():
    rec = OutcomeRecord(3)
    with pytest.raises(ValueError):
        rec.append([0, 1])
    with pytest.raises(ValueError):
        rec.append([0, 1, 3])


def test_popcount():
    x = np.arange(1 << 10)
    assert np.array_equal(popcount(x), popcount_table(10))
    assert popcount_table(3).tolist() == [0, 1, 1, 2, 1, 2, 2, 3]


def test_x_polarized_normalized():
    assert check_state(x_polarized(9)) == 9
