"""Compiled state-vector kernels.

All kernels work in place on contiguous complex128 buffers and are
sequential, so results are bitwise reproducible.
"""

import numba
import numpy as np

_BLOCK = 4096

jit = numba.njit(cache=True, nogil=True)


@jit
def _butterflies(a, start, size):
    h = 1
    while h < size:
        for i in range(start, start + size, 2 * h):
            for j in range(i, i + h):
                x = a[j]
                y = a[j + h]
                a[j] = x + y
                a[j + h] = x - y
        h *= 2


@jit
def fht_raw(a):
    """Unnormalized Walsh-Hadamard transform along a 1-d buffer."""
    n = a.shape[0]
    block = min(n, _BLOCK)
    for s in range(0, n, block):
        _butterflies(a, s, block)
    h = block
    # remaining strides two at a time (radix 4)
    while 2 * h < n:
        for i in range(0, n, 4 * h):
            for j in range(i, i + h):
                a0 = a[j]
                a1 = a[j + h]
                a2 = a[j + 2 * h]
                a3 = a[j + 3 * h]
                b0 = a0 + a1
                b1 = a0 - a1
                b2 = a2 + a3
                b3 = a2 - a3
                a[j] = b0 + b2
                a[j + h] = b1 + b3
                a[j + 2 * h] = b0 - b2
                a[j + 3 * h] = b1 - b3
        h *= 4
    if h < n:
        for j in range(h):
            x = a[j]
            y = a[j + h]
            a[j] = x + y
            a[j + h] = x - y


@jit
def fht_inplace(a):
    fht_raw(a)
    s = 1.0 / np.sqrt(a.shape[0])
    for j in range(a.shape[0]):
        a[j] *= s


@jit
def fht_rows(A):
    for r in range(A.shape[0]):
        fht_inplace(A[r])


@jit
def gray_code_energies(Jij):
    """E(s) = -sum_{i != j} J_ij s_i s_j for every X-basis index.

    s_i = 1 - 2*bit_i.  Visits indices in Gray-code order, keeping the local
    fields sum_j J_kj s_j up to date, so the cost is O(L 2^L).
    """
    L = Jij.shape[0]
    n = 1 << L
    E = np.empty(n)
    s = np.ones(L)
    loc = np.zeros(L)
    for k in range(L):
        acc = 0.0
        for j in range(L):
            acc += Jij[k, j]
        loc[k] = acc
    e = 0.0
    for k in range(L):
        e -= loc[k]
    E[0] = e
    for k in range(1, n):
        j = 0
        while not (k >> j) & 1:
            j += 1
        sj = s[j]
        e += 4.0 * sj * loc[j]
        for m in range(L):
            loc[m] -= 2.0 * Jij[m, j] * sj
        s[j] = -sj
        E[k ^ (k >> 1)] = e
    return E


@jit
def cycle_inplace(psi, ising_ph, field_ph):
    """One Floquet cycle; ``ising_ph`` must carry the 1/2^L of both transforms."""
    fht_raw(psi)
    for j in range(psi.shape[0]):
        psi[j] *= ising_ph[j]
    fht_raw(psi)
    for j in range(psi.shape[0]):
        psi[j] *= field_ph[j]


@jit
def cycle_rows(A, ising_ph, field_ph):
    for r in range(A.shape[0]):
        cycle_inplace(A[r], ising_ph, field_ph)


@jit
def down_probability(psi, site):
    """Returns (P_down, P_up) of one site (unnormalized weights)."""
    mask = 1 << site
    n = psi.shape[0]
    pd = 0.0
    pu = 0.0
    for i in range(0, n, 2 * mask):
        for j in range(i, i + mask):
            a = psi[j]
            b = psi[j + mask]
            pd += a.real * a.real + a.imag * a.imag
            pu += b.real * b.real + b.imag * b.imag
    return pd, pu


@jit
def project_site(psi, site, outcome, norm):
    """Apply K_0 (outcome 0) or K_1 (outcome 1) on ``site`` and divide by ``norm``."""
    mask = 1 << site
    n = psi.shape[0]
    inv = 1.0 / norm
    for i in range(0, n, 2 * mask):
        for j in range(i, i + mask):
            if outcome == 0:
                psi[j] *= inv
            else:
                psi[j] = psi[j + mask] * inv
            psi[j + mask] = 0.0


@jit
def reset_layer(psi, p, u, out, first_site):
    """Born-sampled reset of sites first_site.. in ascending order.

    ``u`` holds one uniform per site.  mu = 2 when u >= p, otherwise
    mu = 0 when u < p * P_down and mu = 1 else, with P_down evaluated on the
    sequentially updated state.  Returns -1 on success or the offending site
    when the sampled branch has (numerically) vanishing weight.
    """
    L = u.shape[0]
    for k in range(L):
        out[k] = 2
        if u[k] >= p:
            continue
        site = first_site + k
        pd, pu = down_probability(psi, site)
        tot = pd + pu
        if u[k] < p * pd / tot:
            w = pd
            mu = 0
        else:
            w = pu
            mu = 1
        if w < 1e-14 * tot:
            return site
        project_site(psi, site, mu, np.sqrt(w))
        out[k] = mu
    return -1


@jit
def xx_gate(psi, i, j):
    """psi <- exp(i pi/4 sigma^x_i sigma^x_j) psi."""
    mask = (1 << i) | (1 << j)
    c = 1.0 / np.sqrt(2.0)
    n = psi.shape[0]
    for a in range(n):
        b = a ^ mask
        if a < b:
            x = psi[a]
            y = psi[b]
            psi[a] = c * (x + 1j * y)
            psi[b] = c * (y + 1j * x)


@jit
def popcount_histogram(a, pc, out):
    """out[k] = sum of |a_j|^2 over indices j with popcount k."""
    for k in range(out.shape[0]):
        out[k] = 0.0
    for j in range(a.shape[0]):
        v = a[j]
        out[pc[j]] += v.real * v.real + v.imag * v.imag
