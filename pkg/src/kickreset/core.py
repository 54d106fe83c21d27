"""Shared types, basis conventions and coupling construction.

Basis convention used everywhere in the package: bit ``i`` of a Z-basis index
encodes spin ``i`` (0-based), with 1 = up and 0 = down.  Index 0 is therefore
the all-down state.  In the X basis (after a Hadamard transform) bit 0 is the
+1 eigenstate of sigma^x and bit 1 the -1 eigenstate.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

ATOL = 1e-10


class InvalidSizeError(ValueError):
    """Raised when a system size is outside an operation's domain."""


class ResourceError(RuntimeError):
    """Raised when a request would exceed a configured size or memory cap."""


@dataclass(frozen=True)
class ModelParams:
    """Parameters of one experiment point.

    ``J`` and ``T`` default to 1, the units used throughout.
    """

    L: int
    alpha: float = 0.0
    J: float = 1.0
    T: float = 1.0
    h: float = 0.9
    p: float = 0.0
    master_seed: int = 0

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 1:
            raise ValueError(f"L must be a positive integer, got {self.L!r}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p!r}")
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T!r}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be nonnegative, got {self.alpha!r}")
        object.__setattr__(self, "L", int(self.L))
        object.__setattr__(self, "master_seed", int(self.master_seed) & (2**64 - 1))

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)


def kac_normalization(L: int, alpha: float) -> float:
    """Sum over r = 1..L-1 of r**-alpha + (L-r)**-alpha."""
    if L < 2:
        raise InvalidSizeError(f"Kac normalization needs L >= 2, got {L}")
    r = np.arange(1, L, dtype=float)
    return float(np.sum(r**-alpha + (L - r) ** -alpha))


def build_couplings(params: ModelParams) -> np.ndarray:
    """Periodic power-law couplings J_ij with Kac normalization.

    Every row sums to ``params.J``.
    """
    L, alpha = params.L, params.alpha
    if L < 2:
        raise InvalidSizeError(f"couplings need L >= 2, got {L}")
    norm = kac_normalization(L, alpha)
    i = np.arange(L)
    d = np.abs(i[:, None] - i[None, :])
    Jij = np.zeros((L, L))
    off = d > 0
    dd = d[off].astype(float)
    Jij[off] = params.J / norm * (dd**-alpha + (L - dd) ** -alpha)
    return Jij


def rng_stream(master_seed: int, trajectory_index: int) -> np.random.Generator:
    """Independent, reproducible generator for one trajectory.

    Streams are derived by seed-sequence spawning keyed on the trajectory
    index, so stream ``k`` never depends on how many others were drawn.
    """
    ss = np.random.SeedSequence(int(master_seed) & (2**64 - 1), spawn_key=(int(trajectory_index),))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass
class OutcomeRecord:
    """Per-cycle reset outcomes ``mu_i`` in {0, 1, 2} for each site.

    0: reset of a down spin, 1: reset of an up spin, 2: no reset.
    """

    L: int
    cycles: list[np.ndarray] = field(default_factory=list)

    def append(self, outcomes) -> None:
        outcomes = np.asarray(outcomes, dtype=np.uint8)
        if outcomes.shape != (self.L,):
            raise ValueError(f"expected {self.L} outcomes, got shape {outcomes.shape}")
        if outcomes.size and outcomes.max() > 2:
            raise ValueError("outcomes must be 0, 1 or 2")
        self.cycles.append(outcomes.copy())

    def __len__(self) -> int:
        return len(self.cycles)

    def as_array(self) -> np.ndarray:
        if not self.cycles:
            return np.zeros((0, self.L), dtype=np.uint8)
        return np.stack(self.cycles)

    @staticmethod
    def pack_cycle(outcomes: np.ndarray) -> bytes:
        """2 bits per site, site 0 in the low bits of the first byte."""
        mu = np.asarray(outcomes, dtype=np.uint8)
        pad = (-mu.size) % 4
        mu = np.concatenate([mu, np.zeros(pad, dtype=np.uint8)]).reshape(-1, 4)
        packed = mu[:, 0] | (mu[:, 1] << 2) | (mu[:, 2] << 4) | (mu[:, 3] << 6)
        return packed.astype(np.uint8).tobytes()

    @staticmethod
    def unpack_cycle(data: bytes, L: int) -> np.ndarray:
        b = np.frombuffer(data, dtype=np.uint8)
        mu = np.stack([(b >> s) & 3 for s in (0, 2, 4, 6)], axis=1).reshape(-1)
        return mu[:L].astype(np.uint8)

    def to_bytes(self) -> bytes:
        return b"".join(self.pack_cycle(c) for c in self.cycles)

    @classmethod
    def from_bytes(cls, data: bytes, L: int) -> "OutcomeRecord":
        width = (L + 3) // 4
        if len(data) % width:
            raise ValueError("byte string length is not a multiple of the cycle width")
        rec = cls(L)
        for k in range(0, len(data), width):
            rec.append(cls.unpack_cycle(data[k:k + width], L))
        return rec


def popcount(x: np.ndarray) -> np.ndarray:
    """Bit count of each entry of an unsigned integer array."""
    x = np.asarray(x, dtype=np.uint64)
    c = np.zeros(x.shape, dtype=np.int64)
    while np.any(x):
        c += (x & np.uint64(1)).astype(np.int64)
        x = x >> np.uint64(1)
    return c


_POPCOUNT_CACHE: dict[int, np.ndarray] = {}


def popcount_table(L: int) -> np.ndarray:
    """popcount of 0..2**L-1, cached per L."""
    tab = _POPCOUNT_CACHE.get(L)
    if tab is None:
        tab = np.zeros(1, dtype=np.int64)
        for _ in range(L):
            tab = np.concatenate([tab, tab + 1])
        tab.setflags(write=False)
        _POPCOUNT_CACHE[L] = tab
    return tab


def basis_state(L: int, index: int = 0) -> np.ndarray:
    psi = np.zeros(2**L, dtype=np.complex128)
    psi[index] = 1.0
    return psi


def x_polarized(L: int) -> np.ndarray:
    """|-> ... ->>, the +1 eigenstate of every sigma^x."""
    return np.full(2**L, 2.0 ** (-L / 2), dtype=np.complex128)


def check_state(psi: np.ndarray, atol: float = ATOL) -> int:
    n = psi.shape[-1]
    L = n.bit_length() - 1
    if n != 1 << L:
        raise ValueError(f"state length {n} is not a power of two")
    norm = np.vdot(psi, psi).real
    if abs(norm - 1.0) > atol:
        raise ValueError(f"state norm^2 = {norm!r} deviates from 1")
    return L


def check_density_matrix(rho: np.ndarray, atol: float = ATOL) -> int:
    n = rho.shape[0]
    L = n.bit_length() - 1
    if rho.shape != (n, n) or n != 1 << L:
        raise ValueError(f"density matrix shape {rho.shape} is not 2^L x 2^L")
    if np.max(np.abs(rho - rho.conj().T)) > atol:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > atol:
        raise ValueError("density matrix trace deviates from 1")
    if np.linalg.eigvalsh(rho).min() < -atol:
        raise ValueError("density matrix has a negative eigenvalue")
    return L
