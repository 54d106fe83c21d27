"""Floquet evolution of the kicked long-range Ising chain.

One cycle is U = exp(-i H_T T/2) exp(-i H_I T/2) with
H_I = -sum_{i != j} J_ij sx_i sx_j and H_T = h sum_i sz_i.  H_I is diagonal
in the X basis and H_T in the Z basis, so a cycle costs two Hadamard
transforms and two diagonal multiplications.  Global phases are dropped.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels as K
from .core import InvalidSizeError, ModelParams, ResourceError, build_couplings, popcount_table

DM_CAP = 12


def fht(state: np.ndarray) -> np.ndarray:
    """Apply R = H^{(x)L} (normalized Hadamard on every qubit) to a copy.

    Works on a vector or on the rows of a 2-d array; R is an involution so
    it maps Z-basis amplitudes to X-basis amplitudes and back.
    """
    a = np.array(state, dtype=np.complex128, order="C", copy=True)
    n = a.shape[-1]
    if n < 1 or n & (n - 1):
        raise ValueError(f"length {n} is not a power of two")
    if a.ndim == 1:
        K.fht_inplace(a)
    else:
        flat = a.reshape(-1, n)
        K.fht_rows(flat)
    return a


@dataclass(frozen=True)
class PhaseTables:
    """Diagonals of H_I (X basis) and H_T (Z basis) plus the cycle phases."""

    ising_energies: np.ndarray
    field_phases: np.ndarray
    ising_ph: np.ndarray
    field_ph: np.ndarray

    @property
    def L(self) -> int:
        return self.ising_energies.shape[0].bit_length() - 1


def build_phase_tables(couplings: np.ndarray, params: ModelParams) -> PhaseTables:
    couplings = np.ascontiguousarray(couplings, dtype=float)
    L = couplings.shape[0]
    E = K.gray_code_energies(couplings)
    F = params.h * (2.0 * popcount_table(L) - L)
    n = 1 << L
    ising_ph = np.exp(-0.5j * params.T * E) / n
    field_ph = np.exp(-0.5j * params.T * F)
    for arr in (E, F, ising_ph, field_ph):
        arr.setflags(write=False)
    return PhaseTables(E, F, ising_ph, field_ph)


@lru_cache(maxsize=32)
def _tables_cached(L, alpha, J, T, h):
    params = ModelParams(L=L, alpha=alpha, J=J, T=T, h=h)
    return build_phase_tables(build_couplings(params), params)


def tables_for(params: ModelParams, L: int | None = None) -> PhaseTables:
    """Phase tables for ``params`` (optionally for a chain of ``L`` sites)."""
    L = params.L if L is None else L
    return _tables_cached(L, float(params.alpha), float(params.J), float(params.T), float(params.h))


def apply_cycle_inplace(psi: np.ndarray, tables: PhaseTables) -> np.ndarray:
    K.cycle_inplace(psi, tables.ising_ph, tables.field_ph)
    return psi


def apply_cycle(state: np.ndarray, tables: PhaseTables, params: ModelParams | None = None) -> np.ndarray:
    """U |psi> for a Z-basis state (returns a new array)."""
    psi = np.array(state, dtype=np.complex128, copy=True)
    if psi.shape[-1] != tables.ising_ph.shape[0]:
        raise ValueError("state and phase tables have different sizes")
    if psi.ndim == 1:
        K.cycle_inplace(psi, tables.ising_ph, tables.field_ph)
    else:
        K.cycle_rows(psi.reshape(-1, psi.shape[-1]), tables.ising_ph, tables.field_ph)
    return psi


def apply_cycle_dm(rho: np.ndarray, tables: PhaseTables, params: ModelParams | None = None,
                   cap: int = DM_CAP) -> np.ndarray:
    """U rho U^dagger, applying the state kernel to columns then to rows."""
    n = rho.shape[0]
    L = n.bit_length() - 1
    if L > cap:
        raise ResourceError(f"density matrix evolution capped at L={cap}, got L={L}")
    C = _cycle_columns(rho, tables)
    # U rho U^dagger = (U C^dagger)^dagger with C = U rho
    return _cycle_columns(C.conj().T, tables).conj().T


def _cycle_columns(M: np.ndarray, tables: PhaseTables) -> np.ndarray:
    X = np.array(M.T, dtype=np.complex128, order="C")
    K.cycle_rows(X, tables.ising_ph, tables.field_ph)
    return X.T


def apply_xx_chain(state: np.ndarray) -> np.ndarray:
    """prod_{i=2..L} exp(i pi/4 sx_1 sx_i), applied with i ascending."""
    psi = np.array(state, dtype=np.complex128, copy=True)
    L = psi.shape[0].bit_length() - 1
    for i in range(1, L):
        K.xx_gate(psi, 0, i)
    return psi


def restricted_params(params: ModelParams) -> ModelParams:
    """Parameters of the (L-1)-site system chain used by the reference-qubit probe."""
    return params.with_(L=params.L - 1)


def apply_cycle_restricted(state: np.ndarray, params: ModelParams,
                           tables: PhaseTables | None = None) -> np.ndarray:
    """Cycle of sites 2..L (fresh periodic Kac chain of L-1 sites); site 1 idle."""
    psi = np.asarray(state, dtype=np.complex128)
    L = psi.shape[0].bit_length() - 1
    if L < 3:
        raise InvalidSizeError(f"restricted evolution needs L >= 3, got {L}")
    if tables is None:
        tables = tables_for(params, L - 1)
    # index = 2*system + reference bit
    sub = np.ascontiguousarray(psi.reshape(-1, 2).T)
    K.cycle_rows(sub, tables.ising_ph, tables.field_ph)
    return np.ascontiguousarray(sub.T).reshape(-1)


# dense references, used only as test oracles ------------------------------

def pauli_on(op: np.ndarray, site: int, L: int) -> np.ndarray:
    """Dense 2^L matrix of a single-site operator (bit ``site`` of the index)."""
    left = np.eye(2 ** (L - 1 - site))
    right = np.eye(2**site)
    return np.kron(np.kron(left, op), right)


SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ = np.array([[-1, 0], [0, 1]], dtype=complex)  # index 0 = down


def dense_hamiltonians(params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    L = params.L
    Jij = build_couplings(params)
    sx = [pauli_on(SX, i, L) for i in range(L)]
    HI = np.zeros((2**L, 2**L), dtype=complex)
    for i in range(L):
        for j in range(L):
            if i != j:
                HI -= Jij[i, j] * sx[i] @ sx[j]
    HT = params.h * sum(pauli_on(SZ, i, L) for i in range(L))
    return HI, HT


def dense_cycle_unitary(params: ModelParams) -> np.ndarray:
    from scipy.linalg import expm

    HI, HT = dense_hamiltonians(params)
    return expm(-0.5j * params.T * HT) @ expm(-0.5j * params.T * HI)
