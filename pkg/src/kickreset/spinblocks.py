"""Permutation-invariant states in the total-spin block representation.

A permutation-invariant operator on L spins decomposes as
rho = (+)_J rho_J (x) 1_{d_J}, with rho_J acting on the spin-J irrep in the
|J, M> basis and d_J = C(L, L/2-J) - C(L, L/2-J-1) its multiplicity.  The
stored blocks are sigma_J = d_J rho_J, so Tr rho = sum_J Tr sigma_J.

Collective unitaries act on every block as U_J sigma_J U_J^dagger.  The
product reset channel is written as

    Phi(rho) = sum_k C(L,k) (1-p)^(L-k) p^k  Sym[ |d><d|^(x)k (x) Tr_k rho ],

and evaluated by a Horner recursion of two CPTP maps: the partial trace of
one site and "append a down spin, then symmetrize".  Both maps are
contractive in trace norm, so round-off cannot be amplified; this matters
for large L where the normalized four-index basis is badly conditioned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit
from scipy.linalg import eigh_tridiagonal
from scipy.stats import binom

# binomial reset weights below this fraction of the largest are dropped
WEIGHT_CUTOFF = 1e-18


def multiplicity(m: int, j2: int) -> int:
    """d_J for m spins and 2J = j2."""
    k = (m - j2) // 2
    return math.comb(m, k) - (math.comb(m, k - 1) if k > 0 else 0)


def block_labels(m: int) -> list[int]:
    """2J values for m spins, largest first."""
    return list(range(m, -1, -2))


@lru_cache(maxsize=None)
def _x_eig(j2: int) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of 2 J_x in the |J, M> basis, M = -J + i."""
    n = j2 + 1
    if n == 1:
        return np.zeros(1), np.ones((1, 1))
    J = j2 / 2.0
    M = -J + np.arange(n - 1)
    off = np.sqrt((J - M) * (J + M + 1.0))
    return eigh_tridiagonal(np.zeros(n), off)


@dataclass
class SpinBlocks:
    L: int
    blocks: dict  # 2J -> complex (2J+1, 2J+1)

    def copy(self) -> "SpinBlocks":
        return SpinBlocks(self.L, {k: v.copy() for k, v in self.blocks.items()})

    def trace(self) -> complex:
        return complex(sum(np.trace(b) for b in self.blocks.values()))

    def purity(self) -> float:
        return float(sum(np.vdot(b, b).real / multiplicity(self.L, j2) for j2, b in self.blocks.items()))


def blocks_init(kind: str, L: int) -> SpinBlocks:
    blocks = {j2: np.zeros((j2 + 1, j2 + 1), dtype=np.complex128) for j2 in block_labels(L)}
    if kind == "x_polarized":
        lam, E = _x_eig(L)
        v = E[:, np.argmax(lam)]
        blocks[L] = np.outer(v, v).astype(np.complex128)
    elif kind == "all_down":
        blocks[L][0, 0] = 1.0
    elif kind in ("identity", "mixed"):
        scale = 1.0 if kind == "identity" else 2.0**-L
        for j2 in blocks:
            blocks[j2] = np.eye(j2 + 1, dtype=np.complex128) * (multiplicity(L, j2) * scale)
    else:
        raise ValueError(f"unknown initial state {kind!r}")
    return SpinBlocks(L, blocks)


def blocks_field(state: SpinBlocks, h: float, T: float) -> SpinBlocks:
    """exp(-i h T J_z) per block."""
    out = {}
    for j2, b in state.blocks.items():
        ph = np.exp(-1j * h * T * (np.arange(j2 + 1) - j2 / 2.0))
        out[j2] = ph[:, None] * b * ph.conj()[None, :]
    return SpinBlocks(state.L, out)


def blocks_interaction(state: SpinBlocks, J: float, T: float) -> SpinBlocks:
    """exp(i J/(L-1) (2 J_x)^2 T/2) per block (alpha = 0 Kac coupling)."""
    L = state.L
    if L < 2:
        raise ValueError("interaction needs L >= 2")
    tau = J / (L - 1) * T / 2.0
    out = {}
    for j2, b in state.blocks.items():
        lam, E = _x_eig(j2)
        ph = np.exp(1j * tau * lam**2)
        W = E.T @ b @ E
        W = ph[:, None] * W * ph.conj()[None, :]
        out[j2] = E @ W @ E.T
    return SpinBlocks(L, out)


def blocks_moments(state: SpinBlocks, powers=(0, 1, 2, 4)) -> dict[int, float]:
    """<(sum_i sigma^x_i)^a> = sum_J Tr(sigma_J (2 J_x)^a)."""
    acc = {a: 0.0 for a in powers}
    for j2, b in state.blocks.items():
        lam, E = _x_eig(j2)
        d = np.einsum("ij,ik,kj->j", E, b, E).real
        for a in powers:
            acc[a] += float(d @ lam**a)
    return acc


def blocks_observables(state: SpinBlocks) -> dict:
    L = state.L
    m = blocks_moments(state)
    m1, m2, m4 = m[1], m[2], m[4]
    x2 = (m2 - L) / (L * (L - 1)) if L > 1 else float("nan")
    B = 1.0 - m4 / (3.0 * m2**2) if m2 != 0 else float("nan")
    return {"X": m1 / L, "X2": x2, "m2": m2, "m4": m4, "binder": B}


# one-site maps ----------------------------------------------------------------

@lru_cache(maxsize=None)
def _ratio(m: int, j2: int, j2p: int) -> float:
    """d_J^(m) / d_J'^(m+1)."""
    return multiplicity(m, j2) / multiplicity(m + 1, j2p)


def trace_one_site(blocks: dict, m1: int) -> dict:
    """Partial trace of one site: blocks of m1 spins -> blocks of m1 - 1 spins."""
    m = m1 - 1
    out = {}
    for j2 in block_labels(m):
        n = j2 + 1
        res = np.zeros((n, n), dtype=np.complex128)
        up = blocks.get(j2 + 1)  # J' = J + 1/2, size n + 1
        if up is not None:
            r = _ratio(m, j2, j2 + 1)
            a = np.sqrt(np.arange(1, n + 1) / n)
            b = np.sqrt(np.arange(n, 0, -1) / n)
            res += r * (np.outer(a, a) * up[1:, 1:] + np.outer(b, b) * up[:n, :n])
        if j2 >= 1:
            dn = blocks.get(j2 - 1)  # J' = J - 1/2, size n - 1
            if dn is not None:
                r = _ratio(m, j2, j2 - 1)
                e = np.sqrt(np.arange(n - 1, 0, -1) / n)
                f = np.sqrt(np.arange(1, n) / n)
                res[: n - 1, : n - 1] += r * np.outer(e, e) * dn
                res[1:, 1:] += r * np.outer(f, f) * dn
        out[j2] = res
    return out


def append_down(blocks: dict, m: int) -> dict:
    """Sym_{m+1}[sigma (x) |d><d|]: blocks of m spins -> blocks of m + 1 spins."""
    out = {j2: np.zeros((j2 + 1, j2 + 1), dtype=np.complex128) for j2 in block_labels(m + 1)}
    for j2, s in blocks.items():
        n = j2 + 1
        c1 = np.sqrt(np.arange(n, 0, -1) / n)
        out[j2 + 1][:n, :n] += np.outer(c1, c1) * s
        if n >= 2:
            c2 = np.sqrt(np.arange(1, n) / n)
            out[j2 - 1] += np.outer(c2, c2) * s[1:, 1:]
    return out


@lru_cache(maxsize=None)
def _ratio_tables(L: int) -> tuple[np.ndarray, np.ndarray]:
    """r_up[m, b] = d(m, m-2b)/d(m+1, m-2b+1), r_dn[m, b] = d(m, m-2b)/d(m+1, m-2b-1)."""
    nb = L // 2 + 1
    r_up = np.zeros((L + 1, nb))
    r_dn = np.zeros((L + 1, nb))
    for m in range(L):
        for b, j2 in enumerate(block_labels(m)):
            r_up[m, b] = _ratio(m, j2, j2 + 1)
            if j2 >= 1:
                r_dn[m, b] = _ratio(m, j2, j2 - 1)
    return r_up, r_dn


def _layout(m: int) -> np.ndarray:
    """Offsets of the flattened blocks 2J = m - 2b of m spins (last entry = length)."""
    sizes = [(j2 + 1) ** 2 for j2 in block_labels(m)]
    return np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)


@njit(cache=True)
def _trace_kernel(A, offA, m1, r_up, r_dn, sq, out, offO):
    # flattened blocks of m1 spins -> blocks of m1 - 1 spins
    m = m1 - 1
    for b in range(m // 2 + 1):
        j2 = m - 2 * b
        n = j2 + 1
        o = offO[b]
        ou = offA[b]  # 2J' = j2 + 1, size n + 1
        ru = r_up[m, b] / n
        for i in range(n):
            for k in range(n):
                out[o + i * n + k] = ru * (sq[i + 1] * sq[k + 1] * A[ou + (i + 1) * (n + 1) + k + 1]
                                           + sq[n - i] * sq[n - k] * A[ou + i * (n + 1) + k])
        if j2 >= 1 and b + 1 <= m1 // 2:
            od = offA[b + 1]  # 2J' = j2 - 1, size n - 1
            rd = r_dn[m, b] / n
            for i in range(n - 1):
                for k in range(n - 1):
                    d = rd * A[od + i * (n - 1) + k]
                    out[o + i * n + k] += sq[n - 1 - i] * sq[n - 1 - k] * d
                    out[o + (i + 1) * n + k + 1] += sq[i + 1] * sq[k + 1] * d


@njit(cache=True)
def _append_kernel(G, offG, m, sq, wk, T, offT, out, offO):
    # out = Sym[G (x) |d><d|] + wk T, blocks of m spins -> m + 1 spins
    for b in range(len(offO) - 1):
        for x in range(offO[b], offO[b + 1]):
            out[x] = wk * T[offT[b] + x - offO[b]]
    for b in range(m // 2 + 1):
        j2 = m - 2 * b
        n = j2 + 1
        g = offG[b]
        o = offO[b]  # 2J = j2 + 1, size n + 1
        for i in range(n):
            for k in range(n):
                out[o + i * (n + 1) + k] += sq[n - i] * sq[n - k] / n * G[g + i * n + k]
        if n >= 2:
            o = offO[b + 1]  # 2J = j2 - 1, size n - 1
            for i in range(n - 1):
                for k in range(n - 1):
                    out[o + i * (n - 1) + k] += sq[i + 1] * sq[k + 1] / n * G[g + (i + 1) * n + k + 1]


class _Workspace:
    """Flat buffers for the reset recursion, reused across calls for one L."""

    def __init__(self, L: int):
        self.L = L
        self.off = [_layout(m) for m in range(L + 1)]
        self.base = np.concatenate([[0], np.cumsum([o[-1] for o in self.off])]).astype(np.int64)
        self.traced = np.zeros(int(self.base[-1]), dtype=np.complex128)
        self.G = [np.zeros(int(self.off[L][-1]), dtype=np.complex128) for _ in range(2)]
        self.sq = np.sqrt(np.arange(L + 2, dtype=float))
        self.r_up, self.r_dn = _ratio_tables(L)

    def level(self, m: int) -> np.ndarray:
        return self.traced[self.base[m]: self.base[m + 1]]


@lru_cache(maxsize=4)
def _workspace(L: int) -> _Workspace:
    return _Workspace(L)


def _flatten(blocks: dict, m: int, out: np.ndarray) -> None:
    off = _layout(m)
    for b, j2 in enumerate(block_labels(m)):
        blk = blocks.get(j2)
        out[off[b]: off[b + 1]] = 0.0 if blk is None else blk.reshape(-1)


def _unflatten(flat: np.ndarray, m: int) -> dict:
    off = _layout(m)
    return {j2: flat[off[b]: off[b + 1]].reshape(j2 + 1, j2 + 1).copy()
            for b, j2 in enumerate(block_labels(m))}


def _reset_weights(L: int, p: float) -> np.ndarray:
    """C(L, k) (1-p)^(L-k) p^k for k = 0..L."""
    return binom.pmf(np.arange(L + 1), L, p)


def blocks_reset(state: SpinBlocks, p: float) -> SpinBlocks:
    """Product reset channel with probability p on every site."""
    L = state.L
    if p == 0:
        return state.copy()
    w = _reset_weights(L, p)
    w[w < WEIGHT_CUTOFF * w.max()] = 0.0
    k_hi = int(np.nonzero(w)[0].max())
    ws = _workspace(L)
    # level m of the workspace holds Tr^(L-m) rho
    _flatten(state.blocks, L, ws.level(L))
    for k in range(1, k_hi + 1):
        m1 = L - k + 1
        _trace_kernel(ws.level(m1), ws.off[m1], m1, ws.r_up, ws.r_dn, ws.sq,
                      ws.level(m1 - 1), ws.off[m1 - 1])
    m0 = L - k_hi
    G = ws.G[0]
    G[: ws.off[m0][-1]] = w[k_hi] * ws.level(m0)
    for m in range(m0, L):
        out = ws.G[1] if G is ws.G[0] else ws.G[0]
        _append_kernel(G, ws.off[m], m, ws.sq, w[L - m - 1], ws.level(m + 1), ws.off[m + 1],
                       out, ws.off[m + 1])
        G = out
    return SpinBlocks(L, _unflatten(G, L))


def blocks_reset_reference(state: SpinBlocks, p: float) -> SpinBlocks:
    """Same channel through the dict-based maps (slow, used as a cross-check)."""
    L = state.L
    if p == 0:
        return state.copy()
    w = _reset_weights(L, p)
    traced = [state.blocks]
    for k in range(1, L + 1):
        traced.append(trace_one_site(traced[-1], L - k + 1))
    G = {0: w[L] * traced[L][0]}
    for m in range(1, L + 1):
        G = append_down(G, m - 1)
        wk = w[L - m]
        if wk:
            for j2, b in traced[L - m].items():
                G[j2] = G[j2] + wk * b
    return SpinBlocks(L, G)


@dataclass
class BlocksCycle:
    L: int
    J: float = 1.0
    T: float = 1.0
    h: float = 0.9
    p: float = 0.0

    def __call__(self, state: SpinBlocks) -> SpinBlocks:
        state = blocks_interaction(state, self.J, self.T)
        state = blocks_field(state, self.h, self.T)
        return blocks_reset(state, self.p)
