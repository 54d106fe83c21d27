"""Reset measurements: sampled trajectories, average channel, conditioned states.

Per-site Kraus operators, down = index bit 0:

    K_0 = sqrt(p) |d><d|,   K_1 = sqrt(p) |d><u|,   K_2 = sqrt(1-p) 1.

Sites are processed in ascending order within a layer.
"""

from __future__ import annotations

import numpy as np

from . import _kernels as K


class DegenerateBranchError(FloatingPointError):
    """A sampled Kraus branch had (numerically) zero weight."""


def kraus_operators(p: float) -> list[np.ndarray]:
    """The single-site set [K_0, K_1, K_2] in the (down, up) basis."""
    sp, sq = np.sqrt(p), np.sqrt(1.0 - p)
    k0 = np.array([[sp, 0], [0, 0]], dtype=complex)
    k1 = np.array([[0, sp], [0, 0]], dtype=complex)
    k2 = sq * np.eye(2, dtype=complex)
    return [k0, k1, k2]


def sample_reset_layer_inplace(psi: np.ndarray, p: float, rng: np.random.Generator,
                               sites: range | None = None) -> np.ndarray:
    """Born-sample one reset layer on ``psi`` in place; returns outcomes."""
    L = psi.shape[0].bit_length() - 1
    first = 0 if sites is None else sites.start
    n_sites = L - first if sites is None else len(sites)
    u = rng.random(n_sites)
    out = np.empty(n_sites, dtype=np.uint8)
    bad = K.reset_layer(psi, float(p), u, out, first)
    if bad >= 0:
        raise DegenerateBranchError(f"vanishing branch weight at site {bad}")
    return out


def sample_reset_layer(state: np.ndarray, p: float, rng: np.random.Generator,
                       sites: range | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Return (post-measurement state, outcomes mu_i) for a normalized Z-basis state."""
    psi = np.array(state, dtype=np.complex128, copy=True)
    out = sample_reset_layer_inplace(psi, p, rng, sites)
    return psi, out


def _site_view(rho: np.ndarray, site: int) -> np.ndarray:
    """View rho as (hi, row bit, lo, hi, col bit, lo) for one site."""
    n = rho.shape[0]
    lo = 1 << site
    hi = n // (2 * lo)
    return rho.reshape(hi, 2, lo, hi, 2, lo)


def average_reset_channel(rho: np.ndarray, p: float, sites: range | None = None) -> np.ndarray:
    """rho -> p |d><d|_i (x) Tr_i rho + (1-p) rho, for every site in turn."""
    out = np.array(rho, dtype=np.complex128, copy=True)
    L = out.shape[0].bit_length() - 1
    for i in (range(L) if sites is None else sites):
        v = _site_view(out, i)
        traced = v[:, 0, :, :, 0, :] + v[:, 1, :, :, 1, :]
        v *= 1.0 - p
        v[:, 0, :, :, 0, :] += p * traced
    return out


def _block_traces(v: np.ndarray) -> tuple[float, float]:
    n_hi, _, n_lo = v.shape[:3]
    dd = v[:, 0, :, :, 0, :].reshape(n_hi * n_lo, n_hi * n_lo)
    uu = v[:, 1, :, :, 1, :].reshape(n_hi * n_lo, n_hi * n_lo)
    return float(np.trace(dd).real), float(np.trace(uu).real)


def reset_branch_probabilities(rho: np.ndarray, site: int, p: float) -> np.ndarray:
    """Tr[K_mu rho K_mu^dagger] for mu = 0, 1, 2 on one site."""
    pd, pu = _block_traces(_site_view(rho, site))
    tot = pd + pu
    return np.array([p * pd / tot, p * pu / tot, 1.0 - p])


def sample_reset_layer_dm(rho_c: np.ndarray, p: float, rng: np.random.Generator,
                          sites: range | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Conditioned-state update rho -> K rho K^dagger / Tr[K rho K^dagger] per site."""
    out = np.array(rho_c, dtype=np.complex128, copy=True)
    L = out.shape[0].bit_length() - 1
    site_list = list(range(L) if sites is None else sites)
    mu = np.full(len(site_list), 2, dtype=np.uint8)
    u = rng.random(len(site_list))
    for k, i in enumerate(site_list):
        if u[k] >= p:
            continue
        v = _site_view(out, i)
        pd, pu = _block_traces(v)
        tot = pd + pu
        if u[k] < p * pd / tot:
            w, m = pd, 0
        else:
            w, m = pu, 1
        if w < 1e-14 * tot:
            raise DegenerateBranchError(f"zero-probability branch sampled at site {i}")
        if m == 0:
            v[:, 1, :, :, :, :] = 0.0
            v[:, :, :, :, 1, :] = 0.0
        else:
            v[:, 0, :, :, 0, :] = v[:, 1, :, :, 1, :]
            v[:, 1, :, :, :, :] = 0.0
            v[:, :, :, :, 1, :] = 0.0
        out /= w
        mu[k] = m
    return out, mu


def dense_kraus_layer(p: float, L: int) -> list[tuple[tuple[int, ...], np.ndarray]]:
    """All 3^L products K_mu as dense matrices (test oracle, tiny L only)."""
    from itertools import product

    from .evolution import pauli_on

    ks = kraus_operators(p)
    ops = []
    for mu in product(range(3), repeat=L):
        M = np.eye(2**L, dtype=complex)
        for i, m in enumerate(mu):
            M = pauli_on(ks[m], i, L) @ M
        ops.append((mu, M))
    return ops
