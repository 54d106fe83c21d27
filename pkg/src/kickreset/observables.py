"""Measured quantities for pure states and density matrices.

Natural logarithms throughout.  Site indices in masks are 0-based and match
the bit convention of :mod:`kickreset.core`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels as K
from .core import popcount_table
from .evolution import fht

EIG_FLOOR = 1e-14


class UndefinedCumulantError(ValueError):
    pass


class MaskError(ValueError):
    pass


@dataclass(frozen=True)
class MomentSet:
    """Collective moments x2 = <M^2>, x4 = <M^4> of M = sum_i sigma^x_i."""

    x2: float
    x4: float

    def __post_init__(self):
        if self.x2 < 0 or self.x4 < 0:
            raise ValueError("moments must be nonnegative")


def _n_sites(n: int) -> int:
    L = n.bit_length() - 1
    if n != 1 << L:
        raise ValueError(f"length {n} is not a power of two")
    return L


def x_basis_probabilities(state: np.ndarray) -> np.ndarray:
    a = fht(state)
    return a.real**2 + a.imag**2


def _x_histogram(state: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(M, weights) of M = sum_i sigma^x_i for a pure state."""
    a = fht(state)
    L = _n_sites(a.shape[0])
    w = np.empty(L + 1)
    K.popcount_histogram(a, popcount_table(L), w)
    return L - 2.0 * np.arange(L + 1), w


def moment_distribution(prob_x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distribution of M = L - 2k from X-basis probabilities binned by popcount k."""
    L = _n_sites(prob_x.shape[0])
    w = np.bincount(popcount_table(L), weights=prob_x, minlength=L + 1)
    M = L - 2.0 * np.arange(L + 1)
    return M, w


def collective_moments(state: np.ndarray, powers: Sequence[int] = (1, 2, 4)) -> dict[int, float]:
    M, w = _x_histogram(state)
    return {a: float(w @ M**a) for a in powers}


def collective_moments_dm(rho: np.ndarray, powers: Sequence[int] = (1, 2, 4)) -> dict[int, float]:
    """<M^a> = Tr(rho M^a) from the X-basis diagonal of rho."""
    # transforming rows twice gives R rho^T R, whose diagonal equals that of R rho R
    B = fht(fht(rho).T)
    M, w = moment_distribution(np.real(np.diagonal(B)))
    return {a: float(w @ M**a) for a in powers}


def magnetization_x(state: np.ndarray) -> float:
    """X = (1/L) sum_i <sigma^x_i>."""
    L = _n_sites(state.shape[0])
    return collective_moments(state, (1,))[1] / L


def correlator_x2(state: np.ndarray) -> float:
    """X^2 = (1/(L(L-1))) sum_{i != j} <sigma^x_i sigma^x_j>."""
    L = _n_sites(state.shape[0])
    if L < 2:
        raise ValueError("X^2 needs at least two sites")
    m2 = collective_moments(state, (2,))[2]
    return (m2 - L) / (L * (L - 1))


def x_observables(state: np.ndarray) -> tuple[float, float, float, float]:
    """(X, X^2, <M^2>, <M^4>) from a single transform."""
    L = _n_sites(state.shape[0])
    M, w = _x_histogram(state)
    m1, m2, m4 = (float(w @ M**a) for a in (1, 2, 4))
    x2 = (m2 - L) / (L * (L - 1)) if L > 1 else float("nan")
    return m1 / L, x2, m2, m4


def binder(moments: MomentSet) -> float:
    """B = 1 - x4 / (3 x2^2)."""
    if moments.x2 == 0:
        raise UndefinedCumulantError("Binder cumulant undefined for x2 = 0")
    return 1.0 - moments.x4 / (3.0 * moments.x2**2)


def _check_mask(mask, L) -> list[int]:
    mask = [int(i) for i in mask]
    if len(set(mask)) != len(mask):
        raise MaskError(f"repeated sites in mask {mask}")
    if any(i < 0 or i >= L for i in mask):
        raise MaskError(f"mask {mask} outside 0..{L - 1}")
    return mask


def _split(state: np.ndarray, mask) -> np.ndarray:
    """Reshape psi into a (2^|A|, 2^(L-|A|)) matrix; row bit k = site mask[k]."""
    L = _n_sites(state.shape[0])
    mask = _check_mask(mask, L)
    rest = [i for i in range(L) if i not in mask]
    t = np.asarray(state).reshape([2] * L)
    # tensor axis a holds site L-1-a
    order = [L - 1 - i for i in reversed(mask)] + [L - 1 - i for i in reversed(rest)]
    return np.transpose(t, order).reshape(1 << len(mask), -1)


def reduced_dm(state: np.ndarray, mask) -> np.ndarray:
    """rho_A = Tr_{not A} |psi><psi|; bit k of the rho_A index is site mask[k]."""
    L = _n_sites(state.shape[0])
    mask = _check_mask(mask, L)
    if len(mask) > L - 1:
        raise MaskError("mask must leave at least one site traced out")
    M = _split(state, mask)
    return M @ M.conj().T


def _entropy_from_probs(lam: np.ndarray, n: float) -> float:
    lam = lam[lam > EIG_FLOOR]
    lam = lam / lam.sum()
    if n == 1:
        return float(-np.sum(lam * np.log(lam)))
    if np.isinf(n):
        return float(-np.log(lam.max()))
    return float(np.log(np.sum(lam**n)) / (1.0 - n))


def entropy(rho: np.ndarray, n: float = 1) -> float:
    """Renyi entropy of order n of a density matrix (n = 1: von Neumann)."""
    lam = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    return max(_entropy_from_probs(lam, n), 0.0)


def entanglement_entropy(state: np.ndarray, mask, n: float = 1) -> float:
    """S_n(A) of a pure state from its Schmidt values."""
    L = _n_sites(state.shape[0])
    mask = _check_mask(mask, L)
    if not mask or len(mask) == L:
        return 0.0
    if len(mask) > L // 2:
        mask = [i for i in range(L) if i not in mask]
    sv = np.linalg.svd(_split(state, mask), compute_uv=False)
    return max(_entropy_from_probs(sv**2, n), 0.0)


def half_chain_entropy(state: np.ndarray, n: float = 1) -> float:
    L = _n_sites(state.shape[0])
    return entanglement_entropy(state, range(L // 2), n)


def adjacent_quarters(L: int, antipodal: bool = False) -> tuple[list[int], list[int]]:
    """A = first L//4 sites; B adjacent to A, or opposite on the ring."""
    q = L // 4
    if q < 1:
        raise MaskError(f"L={L} too small for quarter subsystems")
    A = list(range(q))
    B = list(range(L // 2, L // 2 + q)) if antipodal else list(range(q, 2 * q))
    return A, B


def qmi(state: np.ndarray, A=None, B=None, n: float = 1) -> float:
    """I(A:B) = S(A) + S(B) - S(AB)."""
    L = _n_sites(state.shape[0])
    if A is None or B is None:
        A, B = adjacent_quarters(L)
    A, B = _check_mask(A, L), _check_mask(B, L)
    if set(A) & set(B):
        raise MaskError("subsystems overlap")
    return (entanglement_entropy(state, A, n) + entanglement_entropy(state, B, n)
            - entanglement_entropy(state, A + B, n))


def participation_entropy(state: np.ndarray, q: float, basis: str = "Z") -> float:
    """S_q = ln(sum_beta |psi_beta|^(2q)) / (1 - q); Shannon entropy at q = 1."""
    if q <= 0:
        raise ValueError("q must be positive")
    if basis == "Z":
        a = np.asarray(state)
        w = a.real**2 + a.imag**2
    elif basis == "X":
        w = x_basis_probabilities(state)
    else:
        raise ValueError(f"basis must be 'Z' or 'X', got {basis!r}")
    w = w / w.sum()
    if q == 1:
        nz = w[w > 0]
        return float(-np.sum(nz * np.log(nz)))
    return float(np.log(np.sum(w**q)) / (1.0 - q))


def reference_qubit_entropy(state: np.ndarray) -> float:
    """Von Neumann entropy of site 0, bounded by ln 2."""
    L = _n_sites(state.shape[0])
    if L < 2:
        raise ValueError("reference-qubit entropy needs L >= 2")
    v = np.asarray(state).reshape(-1, 2)
    r00 = float(np.vdot(v[:, 0], v[:, 0]).real)
    r11 = float(np.vdot(v[:, 1], v[:, 1]).real)
    r01 = np.vdot(v[:, 1], v[:, 0])
    rho = np.array([[r00, r01], [np.conj(r01), r11]])
    return min(entropy(rho, 1), float(np.log(2.0)))


def dm_entropy_purity(rho: np.ndarray) -> tuple[float, float]:
    """(S_vN, Tr rho^2)."""
    lam = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    purity = float(np.sum(lam**2))
    return max(_entropy_from_probs(lam, 1), 0.0), purity
