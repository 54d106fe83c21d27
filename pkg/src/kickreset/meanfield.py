"""Single-site and two-site cluster mean-field dynamics.

Single-site: each spin obeys ds/dt = -B x s with B = 4 J s^x x (first half
period, s^x conserved so B is constant) and B = -2 h z (second half).  Both
halves are therefore exact rotations.  The reset map is
s^{x,y} -> (1-p) s^{x,y}, s^z -> (1-p) s^z - p.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ModelParams, kac_normalization


def _cycle_xyz(x, y, z, JT, hT):
    # interaction half: rotation about x by -2 J T s^x
    a = -JT * 2.0 * x
    ca, sa = math.cos(a), math.sin(a)
    y, z = ca * y - sa * z, sa * y + ca * z
    # field half: rotation about z by h T
    cb, sb = math.cos(hT), math.sin(hT)
    x, y = cb * x - sb * y, sb * x + cb * y
    return x, y, z


def mf_cycle(s, params: ModelParams) -> np.ndarray:
    """One unitary period of the single-site mean-field equations."""
    x, y, z = (float(v) for v in s)
    return np.array(_cycle_xyz(x, y, z, params.J * params.T, params.h * params.T))


def mf_reset(s, p: float) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    return np.array([(1 - p) * s[0], (1 - p) * s[1], (1 - p) * s[2] - p])


@dataclass(frozen=True)
class SteadyResult:
    s: np.ndarray
    converged: bool
    cycles: int

    def __iter__(self):
        return iter((self.s, self.converged))


def mf_steady(s0, params: ModelParams, max_cycles: int = 200_000, tol: float = 1e-12) -> SteadyResult:
    """Iterate reset(cycle(s)) until successive stroboscopic states agree within ``tol``."""
    x, y, z = (float(v) for v in s0)
    JT, hT, q, p = params.J * params.T, params.h * params.T, 1.0 - params.p, params.p
    for n in range(1, max_cycles + 1):
        nx, ny, nz = _cycle_xyz(x, y, z, JT, hT)
        nx, ny, nz = q * nx, q * ny, q * nz - p
        d = math.sqrt((nx - x) ** 2 + (ny - y) ** 2 + (nz - z) ** 2)
        x, y, z = nx, ny, nz
        if d < tol:
            return SteadyResult(np.array([x, y, z]), True, n)
    return SteadyResult(np.array([x, y, z]), False, max_cycles)


def mf_critical_p(h: float, J: float = 1.0, T: float = 1.0) -> float:
    """Onset of order: p = 1 - x, x the root in (0, 1] of x^2 - 2 c x + 1 = 0.

    c = cos(hT) + J T sin(hT).  The two roots multiply to 1, so a root in
    (0, 1] exists only for c >= 1; otherwise the chain is disordered for
    every p and 0 is returned.
    """
    c = math.cos(h * T) + J * T * math.sin(h * T)
    if c < 1.0:
        return 0.0
    x = c - math.sqrt(c * c - 1.0)
    return 1.0 - x


def mf_bifurcation_p(params: ModelParams, lo: float = 0.0, hi: float = 1.0, tol: float = 1e-4,
                     order_threshold: float = 1e-6, max_cycles: int = 500_000) -> float:
    """Locate the onset of |s^x| > 0 in the iterated map by bisection on p.

    Starts every run from s = x and classifies a point as ordered when the
    stroboscopic fixed point has |s^x| above ``order_threshold``.
    """
    def ordered(p):
        res = mf_steady([1.0, 0.0, 0.0], params.with_(p=p), max_cycles=max_cycles)
        return abs(res.s[0]) > order_threshold

    if not ordered(lo):
        return lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ordered(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def mf_purity(s, L: int) -> tuple[float, float]:
    """(P_0, P_0^L) with P_0 = (1 + |s|^2)/2 the purity per site."""
    s = np.asarray(s, dtype=float)
    P0 = 0.5 * (1.0 + float(s @ s))
    return P0, P0**L


def noise_shifted_pc(h: float, sigma: float, J: float = 1.0, T: float = 1.0, step: float = 1e-3) -> float:
    """p_c(h) + p_c''(h) sigma^2 / 2, second derivative by central differences."""
    pc = mf_critical_p(h, J, T)
    if sigma == 0:
        return pc
    d2 = (mf_critical_p(h + step, J, T) - 2.0 * pc + mf_critical_p(h - step, J, T)) / step**2
    return pc + 0.5 * d2 * sigma**2


def phase_map(h_values, p_values, params: ModelParams | None = None, s0=(1.0, 0.0, 0.0),
              max_cycles: int = 20_000, tol: float = 1e-10) -> list[dict]:
    """Steady |s^x| and P_0 over an (h, p) grid."""
    base = params if params is not None else ModelParams(L=1)
    rows = []
    for h in h_values:
        for p in p_values:
            res = mf_steady(s0, base.with_(h=float(h), p=float(p)), max_cycles=max_cycles, tol=tol)
            P0, _ = mf_purity(res.s, 1)
            rows.append({"h": float(h), "p": float(p), "abs_sx": abs(float(res.s[0])), "P0": P0})
    return rows


def write_phase_map(path, rows) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["h", "p", "abs_sx", "P0"])
        for r in rows:
            w.writerow([repr(r["h"]), repr(r["p"]), repr(r["abs_sx"]), repr(r["P0"])])


# two-site cluster ----------------------------------------------------------

_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SZ = np.array([[-1, 0], [0, 1]], dtype=complex)
_I2 = np.eye(2, dtype=complex)
# index = bit0 (site 1) + 2 * bit1 (site 2)
SX1 = np.kron(_I2, _SX)
SX2 = np.kron(_SX, _I2)
SZ1 = np.kron(_I2, _SZ)
SZ2 = np.kron(_SZ, _I2)
SXSX = SX1 @ SX2
SXSUM = SX1 + SX2
DOWN = np.array([[1, 0], [0, 0]], dtype=complex)


def cluster_sx(rho12: np.ndarray) -> float:
    return 0.5 * float(np.trace(rho12 @ SXSUM).real)


def _cluster_interaction(rho, J, inv_norm):
    sx = cluster_sx(rho)
    return -2.0 * J * (1.0 - inv_norm) * sx * SXSUM - 2.0 * J * inv_norm * SXSX


def _rhs(rho, J, inv_norm):
    H = _cluster_interaction(rho, J, inv_norm)
    return -1j * (H @ rho - rho @ H)


def cluster_reset(rho12: np.ndarray, p: float) -> np.ndarray:
    """Four-term product reset of the two cluster sites."""
    r = rho12.reshape(2, 2, 2, 2)  # (row s2, row s1, col s2, col s1)
    tr1 = np.einsum("aibi->ab", r)  # state of site 2
    tr2 = np.einsum("iaib->ab", r)  # state of site 1
    reset1 = np.kron(tr1, DOWN)
    reset2 = np.kron(DOWN, tr2)
    dd = np.kron(DOWN, DOWN)
    q = 1.0 - p
    return q * q * rho12 + p * q * reset1 + p * q * reset2 + p * p * dd


def cluster_mf_cycle(rho12: np.ndarray, params: ModelParams, n_steps: int = 1000,
                     inv_norm: float | None = None) -> np.ndarray:
    """One period of the cluster equations followed by the reset map.

    The interaction half is integrated with fixed-step RK4 (``n_steps`` steps
    over T/2, i.e. step T/2000 by default) with s^x re-evaluated at every
    stage.  The field half has a constant generator and is applied exactly.
    ``inv_norm`` overrides the nearest-neighbor weight 1/N (0 decouples the
    two sites).
    """
    J, T, h = params.J, params.T, params.h
    if inv_norm is None:
        inv_norm = 1.0 / kac_normalization(params.L, params.alpha)
    rho = np.array(rho12, dtype=complex)
    dt = 0.5 * T / n_steps
    for _ in range(n_steps):
        k1 = _rhs(rho, J, inv_norm)
        k2 = _rhs(rho + 0.5 * dt * k1, J, inv_norm)
        k3 = _rhs(rho + 0.5 * dt * k2, J, inv_norm)
        k4 = _rhs(rho + dt * k3, J, inv_norm)
        rho = rho + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    fz = np.diag(SZ1 + SZ2).real
    ph = np.exp(-0.5j * T * h * fz)
    rho = ph[:, None] * rho * ph.conj()[None, :]
    rho = cluster_reset(rho, params.p)
    return 0.5 * (rho + rho.conj().T)


# sigma^y with index 0 = down: <d|sy|u> = i
_SY = np.array([[0, 1j], [-1j, 0]])


def bloch_to_rho(s) -> np.ndarray:
    """Single-qubit density matrix for Bloch vector s (index 0 = down)."""
    x, y, z = (float(v) for v in s)
    return 0.5 * (np.eye(2) + x * _SX + y * _SY + z * _SZ)


def rho_to_bloch(rho: np.ndarray) -> np.ndarray:
    return np.array([np.trace(rho @ P).real for P in (_SX, _SY, _SZ)])
