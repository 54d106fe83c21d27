"""Average-state evolution at alpha = 0 in the permutation-symmetric sector.

The density matrix is vectorized as |rho>> = sum_ab rho_ab |a>|b>, so each
site carries one of four ket/bra pairs, counted by

    n1: up-up, n2: up-down, n3: down-up, n4: down-down   (ket first).

The normalized basis state |n1, n2, n3, n4> is the equal-weight sum over the
distinct arrangements of those pairs divided by the square root of their
number (the multinomial coefficient).  The basis is ordered lexicographically
and indexed by a closed-form rank, so no lookup table is needed.

All evolution maps act as U (x) U^* (unitary parts) and as the per-site reset
channel (measurement part), in the order interaction, field, reset.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh_tridiagonal
from scipy.special import gammaln

from .core import popcount_table

MAX_L = 400
KRYLOV_TOL = 1e-10
KRYLOV_MAX_DIM = 40


class KrylovConvergenceError(ArithmeticError):
    pass


def basis_size(L: int) -> int:
    return math.comb(L + 3, 3)


def _c2(x):
    return x * (x - 1) // 2


def _c3(x):
    return x * (x - 1) * (x - 2) // 6


@dataclass(frozen=True)
class PermBasis:
    L: int
    n: np.ndarray  # (D, 4) int64

    @property
    def size(self) -> int:
        return self.n.shape[0]

    @property
    def n1(self):
        return self.n[:, 0]

    @property
    def n2(self):
        return self.n[:, 1]

    @property
    def n3(self):
        return self.n[:, 2]

    @property
    def n4(self):
        return self.n[:, 3]

    def rank(self, n1, n2, n3):
        """Lexicographic position of (n1, n2, n3, L - n1 - n2 - n3)."""
        n1, n2, n3 = (np.asarray(x, dtype=np.int64) for x in (n1, n2, n3))
        L = self.L
        R = L - n1
        return (_c3(L + 3) - _c3(L - n1 + 3)) + (_c2(R + 2) - _c2(R - n2 + 2)) + n3

    def index(self, quad) -> int:
        n1, n2, n3, n4 = (int(x) for x in quad)
        if min(n1, n2, n3, n4) < 0 or n1 + n2 + n3 + n4 != self.L:
            raise KeyError(f"{quad} is not a composition of L={self.L}")
        return int(self.rank(n1, n2, n3))

    def log_multinomial(self) -> np.ndarray:
        return gammaln(self.L + 1) - gammaln(self.n + 1).sum(axis=1)


@lru_cache(maxsize=8)
def enumerate_basis(L: int) -> PermBasis:
    """All compositions of L into four parts, in lexicographic order."""
    if L < 1:
        raise ValueError(f"L must be positive, got {L}")
    if L > MAX_L:
        raise ValueError(f"permutation-symmetric basis capped at L={MAX_L}")
    rows = []
    for n1 in range(L + 1):
        for n2 in range(L - n1 + 1):
            n3 = np.arange(L - n1 - n2 + 1)
            blk = np.empty((n3.size, 4), dtype=np.int64)
            blk[:, 0] = n1
            blk[:, 1] = n2
            blk[:, 2] = n3
            blk[:, 3] = L - n1 - n2 - n3
            rows.append(blk)
    n = np.concatenate(rows)
    n.setflags(write=False)
    return PermBasis(L, n)


# collective superoperators --------------------------------------------------

# (index lowered, index raised): sqrt(n_lo (n_hi + 1)) |.., n_lo - 1, .., n_hi + 1, ..>
_LADDERS = {
    "X_l": ((0, 2), (1, 3), (2, 0), (3, 1)),
    "X_r": ((0, 1), (1, 0), (2, 3), (3, 2)),
}


def _ladder_matrix(basis: PermBasis, moves) -> sp.csr_matrix:
    D = basis.size
    rows, cols, vals = [], [], []
    for lo, hi in moves:
        src = np.nonzero(basis.n[:, lo] > 0)[0]
        m = basis.n[src].copy()
        coef = np.sqrt(m[:, lo] * (m[:, hi] + 1.0))
        m[:, lo] -= 1
        m[:, hi] += 1
        rows.append(basis.rank(m[:, 0], m[:, 1], m[:, 2]))
        cols.append(src)
        vals.append(coef)
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(D, D))


@lru_cache(maxsize=16)
def collective_matrix(L: int, op: str) -> sp.csr_matrix:
    """Sparse matrix of Z_l, Z_r, X_l, X_r or O in the symmetric basis."""
    b = enumerate_basis(L)
    n1, n2, n3, n4 = b.n.T
    if op == "Z_l":
        M = sp.diags((n1 + n2 - n3 - n4).astype(float)).tocsr()
    elif op == "Z_r":
        M = sp.diags((n1 - n2 + n3 - n4).astype(float)).tocsr()
    elif op in _LADDERS:
        M = _ladder_matrix(b, _LADDERS[op])
    elif op == "O":
        M = (sp.diags((n4 - L).astype(float)) + _ladder_matrix(b, ((0, 3),))).tocsr()
    else:
        raise ValueError(f"unknown collective operator {op!r}")
    return M


def apply_collective(op: str, v: np.ndarray, L: int | None = None) -> np.ndarray:
    if L is None:
        L = _size_to_L(v.shape[0])
    return collective_matrix(L, op) @ v


@lru_cache(maxsize=None)
def _size_lookup():
    return {basis_size(L): L for L in range(1, MAX_L + 1)}


def _size_to_L(D: int) -> int:
    try:
        return _size_lookup()[D]
    except KeyError:
        raise ValueError(f"vector length {D} is not a basis size") from None


# state vectors ---------------------------------------------------------------

def init_perm(kind: str, L: int) -> np.ndarray:
    b = enumerate_basis(L)
    v = np.zeros(b.size, dtype=np.complex128)
    if kind == "x_polarized":
        v[:] = np.exp(0.5 * b.log_multinomial() - L * math.log(2.0))
    elif kind == "identity":
        n1 = np.arange(L + 1)
        logc = gammaln(L + 1) - gammaln(n1 + 1) - gammaln(L - n1 + 1)
        v[b.rank(n1, 0, 0)] = np.exp(0.5 * logc)
    elif kind == "mixed":
        v = init_perm("identity", L) * 2.0**-L
    elif kind == "all_down":
        v[b.index((0, 0, 0, L))] = 1.0
    else:
        raise ValueError(f"unknown initial state {kind!r}")
    return v


@lru_cache(maxsize=8)
def moment_covectors(L: int, max_power: int = 4) -> np.ndarray:
    """Rows u_a = (X_l^T)^a |1>> so that <(sum sigma^x)^a> = u_a . v."""
    X = collective_matrix(L, "X_l").T.tocsr()
    u = init_perm("identity", L).real
    out = [u]
    for _ in range(max_power):
        u = X @ u
        out.append(u)
    arr = np.array(out)
    arr.setflags(write=False)
    return arr


def trace_perm(v: np.ndarray) -> complex:
    L = _size_to_L(v.shape[0])
    return complex(moment_covectors(L)[0] @ v)


def perm_expectation(v: np.ndarray, a: int, imag_tol: float = 1e-9) -> float:
    """<(sum_i sigma^x_i)^a> = <<1| X_l^a |v>>."""
    L = _size_to_L(v.shape[0])
    if a < 0 or a > 4:
        raise ValueError("supported powers are 0..4")
    val = complex(moment_covectors(L)[a] @ v)
    if abs(val.imag) > imag_tol * max(1.0, abs(val.real)):
        raise ArithmeticError(f"expectation has imaginary part {val.imag:.3e}")
    return val.real


def perm_observables(v: np.ndarray) -> dict:
    """X, X^2 correlator, collective moments and Binder cumulant."""
    L = _size_to_L(v.shape[0])
    m1, m2, m4 = (perm_expectation(v, a) for a in (1, 2, 4))
    x2 = (m2 - L) / (L * (L - 1)) if L > 1 else float("nan")
    B = 1.0 - m4 / (3.0 * m2**2) if m2 != 0 else float("nan")
    return {"X": m1 / L, "X2": x2, "m2": m2, "m4": m4, "binder": B}


# evolution -----------------------------------------------------------------

def evolve_field_perm(v: np.ndarray, h: float, T: float) -> np.ndarray:
    """exp(-i h (Z_l - Z_r) T/2): phases exp(-i h T (n2 - n3))."""
    b = enumerate_basis(_size_to_L(v.shape[0]))
    return v * np.exp(-1j * h * T * (b.n2 - b.n3))


@lru_cache(maxsize=8)
def _interaction_generator(L: int) -> sp.csr_matrix:
    Xl = collective_matrix(L, "X_l")
    Xr = collective_matrix(L, "X_r")
    return (Xl @ Xl - Xr @ Xr).tocsr()


def _lanczos_step(G, v, tau, m_max, tol):
    """exp(i tau G) v for real symmetric G; returns (result, converged)."""
    beta = np.linalg.norm(v)
    if beta == 0:
        return v.copy(), True
    D = v.shape[0]
    m_max = min(m_max, D)
    V = np.empty((m_max + 1, D), dtype=np.complex128)
    V[0] = v / beta
    alpha = np.zeros(m_max)
    betas = np.zeros(m_max)
    for j in range(m_max):
        w = G @ V[j]
        alpha[j] = np.vdot(V[j], w).real
        w -= alpha[j] * V[j]
        if j > 0:
            w -= betas[j - 1] * V[j - 1]
        # full reorthogonalization
        w -= V[: j + 1].T @ (V[: j + 1].conj() @ w)
        bj = np.linalg.norm(w)
        betas[j] = bj
        k = j + 1
        if k >= 2 or bj < 1e-14:
            if k == 1:
                ev, U = np.array([alpha[0]]), np.ones((1, 1))
            else:
                ev, U = eigh_tridiagonal(alpha[:k], betas[: k - 1])
            y = U @ (np.exp(1j * tau * ev) * U[0])
            err = beta * bj * abs(y[-1])
            if bj < 1e-14 or err < tol * beta:
                return beta * (V[:k].T @ y), True
        V[j + 1] = w / bj
    return None, False


def _krylov_expm(G, v, tau, m_max=KRYLOV_MAX_DIM, tol=KRYLOV_TOL, max_splits=24):
    n_sub = 1
    for _ in range(max_splits):
        out = v
        ok = True
        for _ in range(n_sub):
            out, ok = _lanczos_step(G, out, tau / n_sub, m_max, tol / n_sub)
            if not ok:
                break
        if ok:
            return out
        n_sub *= 2
    raise KrylovConvergenceError(f"Krylov exponential did not converge with {n_sub} substeps")


@dataclass
class _Sector:
    idx: np.ndarray  # (a+1, b+1) basis indices
    Ea: np.ndarray
    Eb: np.ndarray
    lam: np.ndarray  # (a+1, b+1) eigenvalues of the collective sigma^x


@lru_cache(maxsize=None)
def _dicke_x(a: int) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of the tridiagonal sum of a sigma^x in the symmetric spin-a/2 space."""
    if a == 0:
        return np.zeros(1), np.ones((1, 1))
    k = np.arange(1, a + 1)
    off = np.sqrt(k * (a - k + 1.0))
    return eigh_tridiagonal(np.zeros(a + 1), off)


@lru_cache(maxsize=4)
def _sectors(L: int, side: str) -> list[_Sector]:
    b = enumerate_basis(L)
    out = []
    for a in range(L + 1):
        c = L - a
        k = np.arange(a + 1)[:, None]
        m = np.arange(c + 1)[None, :]
        if side == "l":
            # a = n1 + n3 (right spin up), c = n2 + n4
            idx = b.rank(k, m, a - k)
        else:
            # a = n1 + n2 (left spin up), c = n3 + n4
            idx = b.rank(k, a - k, m)
        la, Ea = _dicke_x(a)
        lb, Eb = _dicke_x(c)
        out.append(_Sector(np.asarray(idx), Ea, Eb, la[:, None] + lb[None, :]))
    return out


def _sector_exp_square(v, L, side, tau):
    out = np.empty_like(v)
    for s in _sectors(L, side):
        V = v[s.idx]
        W = s.Ea.T @ V @ s.Eb
        W *= np.exp(1j * tau * s.lam**2)
        out[s.idx] = s.Ea @ W @ s.Eb.T
    return out


def evolve_interaction_perm(v: np.ndarray, J: float, T: float, L: int | None = None,
                            method: str = "krylov") -> np.ndarray:
    """exp(i J_eff (X_l^2 - X_r^2) T/2) with J_eff = J/(L-1).

    ``method='krylov'`` uses Lanczos on the sparse generator; ``'sectors'``
    diagonalizes X_l and X_r exactly in their conserved sectors.
    """
    if L is None:
        L = _size_to_L(v.shape[0])
    if L < 2:
        raise ValueError("interaction needs L >= 2")
    tau = J / (L - 1) * T / 2.0
    v = np.asarray(v, dtype=np.complex128)
    if method == "krylov":
        return _krylov_expm(_interaction_generator(L), v, tau)
    if method == "sectors":
        return _sector_exp_square(_sector_exp_square(v, L, "l", tau), L, "r", -tau)
    raise ValueError(f"unknown method {method!r}")


@lru_cache(maxsize=64)
def _reset_blocks(L: int, p: float):
    """Closed-form transfer matrices of the per-site reset channel.

    For fixed (n2, n3) the channel only moves weight from n1 to n4; with
    s = n1 + n4 the coefficient of |n1 - k, n2, n3, n4 + k> in the image of
    |n1, n2, n3, n4> is

        (1-p)^(n1 - k + n2 + n3) p^k sqrt(C(n1, k) C(n4 + k, k)).
    """
    b = enumerate_basis(L)
    lq = math.log1p(-p) if p < 1 else -np.inf
    lp = math.log(p) if p > 0 else -np.inf
    mats = {}
    for s in range(L + 1):
        n1 = np.arange(s + 1)[None, :]  # source
        n1p = np.arange(s + 1)[:, None]  # target
        k = n1 - n1p
        valid = k >= 0
        kk = np.where(valid, k, 0)
        n4 = s - n1
        logc = (0.5 * (gammaln(n1 + 1) - gammaln(kk + 1) - gammaln(n1 - kk + 1))
                + 0.5 * (gammaln(n4 + kk + 1) - gammaln(kk + 1) - gammaln(n4 + 1)))
        with np.errstate(invalid="ignore"):
            lw = np.where(n1p > 0, n1p * lq, 0.0) + np.where(kk > 0, kk * lp, 0.0)
        M = np.where(valid, np.exp(logc + lw), 0.0)
        mats[s] = M
    blocks = []
    for n2 in range(L + 1):
        for n3 in range(L - n2 + 1):
            s = L - n2 - n3
            n1 = np.arange(s + 1)
            idx = b.rank(n1, n2, n3)
            w = n2 + n3
            scale = 1.0 if w == 0 else (0.0 if p == 1 else (1.0 - p) ** w)
            blocks.append((idx, s, scale))
    return mats, blocks


def apply_reset_perm(v: np.ndarray, p: float, method: str = "closed_form") -> np.ndarray:
    """exp(-ln(1-p) O) |v>>, the per-site reset channel lifted to the basis."""
    L = _size_to_L(v.shape[0])
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if p == 0:
        return np.array(v, dtype=np.complex128, copy=True)
    if method == "closed_form":
        mats, blocks = _reset_blocks(L, float(p))
        out = np.zeros_like(v, dtype=np.complex128)
        for idx, s, scale in blocks:
            if scale:
                out[idx] = scale * (mats[s] @ v[idx])
        return out
    if method == "expm":
        if p == 1:
            raise ValueError("the generator diverges at p = 1; use the closed form")
        gen = (-math.log1p(-p)) * collective_matrix(L, "O").tocsc()
        return expm_sparse(gen) @ v
    raise ValueError(f"unknown method {method!r}")


def expm_sparse(A: sp.spmatrix):
    import warnings

    from scipy.sparse.linalg import expm as sparse_expm

    with warnings.catch_warnings():
        # scipy's Pade step edits a csc matrix in place; harmless here
        warnings.simplefilter("ignore", sp.SparseEfficiencyWarning)
        return sparse_expm(A.tocsc())


@dataclass
class PermCycle:
    """One full cycle (interaction, field, reset) at fixed parameters."""

    L: int
    J: float = 1.0
    T: float = 1.0
    h: float = 0.9
    p: float = 0.0
    method: str = "krylov"
    reset_method: str = "closed_form"

    def __call__(self, v: np.ndarray) -> np.ndarray:
        v = evolve_interaction_perm(v, self.J, self.T, self.L, self.method)
        v = evolve_field_perm(v, self.h, self.T)
        return apply_reset_perm(v, self.p, self.reset_method)


@dataclass
class PermSeries:
    L: int
    rows: list = field(default_factory=list)

    def append(self, cycle, obs):
        self.rows.append({"cycle": cycle, **obs})

    def column(self, key) -> np.ndarray:
        return np.array([r[key] for r in self.rows])

    def to_csv(self, path) -> None:
        write_perm_csv(path, self.rows)


def run_permsym(L: int, h: float, p: float, n_cycles: int, J: float = 1.0, T: float = 1.0,
                init: str = "x_polarized", method: str = "blocks",
                reset_method: str = "closed_form"):
    """Evolve the average state for ``n_cycles``; observables recorded after each reset.

    ``method`` selects the backend: "blocks" (total-spin blocks, stable at any
    L) or "sectors"/"krylov" in the four-index basis.  The returned final
    state is a :class:`SpinBlocks` for "blocks" and a vector otherwise.
    """
    if method == "blocks":
        from .spinblocks import BlocksCycle, blocks_init, blocks_observables

        step, state, obs = BlocksCycle(L, J, T, h, p), blocks_init(init, L), blocks_observables
    else:
        step, state, obs = PermCycle(L, J, T, h, p, method, reset_method), init_perm(init, L), perm_observables
    series = PermSeries(L)
    series.append(0, obs(state))
    for n in range(1, n_cycles + 1):
        state = step(state)
        series.append(n, obs(state))
    return series, state


def write_perm_csv(path, rows) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["cycle", "X", "X2", "x4", "binder"])
        for r in rows:
            w.writerow([r["cycle"], repr(r["X"]), repr(r["X2"]), repr(r["m4"]), repr(r["binder"])])


# dense references (tiny L) ---------------------------------------------------

def pair_counts(L: int) -> np.ndarray:
    """(4^L, 4) pair-type counts of every (ket, bra) index pair, row-major."""
    pc = popcount_table(L)
    full = (1 << L) - 1
    ket = np.repeat(np.arange(1 << L), 1 << L)
    bra = np.tile(np.arange(1 << L), 1 << L)
    n1 = pc[ket & bra]
    n2 = pc[ket & (full ^ bra)]
    n3 = pc[(full ^ ket) & bra]
    return np.stack([n1, n2, n3, L - n1 - n2 - n3], axis=1)


def _embedding(L: int) -> tuple[np.ndarray, np.ndarray]:
    b = enumerate_basis(L)
    n = pair_counts(L)
    r = b.rank(n[:, 0], n[:, 1], n[:, 2])
    coef = np.exp(-0.5 * b.log_multinomial()[r])
    return r, coef


def perm_to_dense(v: np.ndarray) -> np.ndarray:
    """Reconstruct the 2^L x 2^L density matrix of a symmetric vector."""
    L = _size_to_L(v.shape[0])
    r, coef = _embedding(L)
    return (v[r] * coef).reshape(1 << L, 1 << L)


def dense_to_perm(rho: np.ndarray) -> np.ndarray:
    """Orthogonal projection of a dense matrix onto the symmetric basis."""
    L = rho.shape[0].bit_length() - 1
    r, coef = _embedding(L)
    out = np.zeros(basis_size(L), dtype=np.complex128)
    np.add.at(out, r, coef * rho.reshape(-1))
    return out


def dense_superoperator(L: int, J: float, T: float, h: float, p: float) -> np.ndarray:
    """4^L superoperator of one cycle on row-major vec(rho) (alpha = 0)."""
    from .core import ModelParams
    from .evolution import dense_cycle_unitary
    from .measurement import dense_kraus_layer

    U = dense_cycle_unitary(ModelParams(L=L, alpha=0.0, J=J, T=T, h=h))
    S_u = np.kron(U, U.conj())
    S_r = sum(np.kron(K, K.conj()) for _, K in dense_kraus_layer(p, L))
    return S_r @ S_u


def dense_collective(L: int, op: str) -> np.ndarray:
    """Dense 4^L superoperator counterpart of a collective operator."""
    from .evolution import SX, SZ, pauli_on

    I = np.eye(1 << L)
    if op in ("X_l", "X_r", "Z_l", "Z_r"):
        P = SX if op[0] == "X" else SZ
        S = sum(pauli_on(P, i, L) for i in range(L))
        return np.kron(S, I) if op.endswith("l") else np.kron(I, S)
    if op == "O":
        dd = np.zeros((4, 4))
        dd[0, 0] = 1.0  # (ket down, bra down) -> itself
        dd[0, 3] = 1.0  # (up, up) -> (down, down)
        single = dd - np.eye(4)
        tot = np.zeros((4**L, 4**L))
        for i in range(L):
            tot += _embed_pair_op(single, i, L)
        return tot
    raise ValueError(op)


def _embed_pair_op(op4: np.ndarray, site: int, L: int) -> np.ndarray:
    """Lift a 4x4 operator on the (ket bit, bra bit) pair of one site to 4^L."""
    n = 1 << L
    D = n * n
    out = np.zeros((D, D))
    ket = np.repeat(np.arange(n), n)
    bra = np.tile(np.arange(n), n)
    kb = (ket >> site) & 1
    bb = (bra >> site) & 1
    local = 2 * kb + bb
    for new in range(4):
        k2 = (ket & ~(1 << site)) | ((new >> 1) << site)
        b2 = (bra & ~(1 << site)) | ((new & 1) << site)
        tgt = k2 * n + b2
        out[tgt, np.arange(D)] += op4[new, local]
    return out

