"""Parameter scans shared by the scripts and the exit-criteria tests.

Each point gets its own master seed derived from (seed, L, p), so points can
be recomputed independently.
"""

from __future__ import annotations

import time

import numpy as np

from .analysis import make_snapshots, slope_bootstrap, steady_window, tau_bootstrap, twoNN
from .core import ModelParams, rng_stream, x_polarized
from .evolution import apply_cycle_inplace, tables_for
from .measurement import sample_reset_layer_inplace
from .observables import x_observables
from .trajectories import RunPlan, TrajectorySource, run_reference_qubit, run_trajectories, steady_plan, steady_values


def point_seed(seed: int, L: int, p: float, salt: int = 0) -> int:
    ss = np.random.SeedSequence([int(seed), int(L), int(round(1e6 * p)), int(salt)])
    return int(ss.generate_state(1, np.uint64)[0])


# steady-state trajectory averages --------------------------------------------------

def qmi_curve(L, ps, n_trajectories=500, alpha=2.0, h=0.9, seed=0, n_samples=5, stride=4, threads=1):
    """Steady mutual information of adjacent quarters: list of (p, mean, stderr)."""
    rows = []
    for p in ps:
        P = ModelParams(L=L, alpha=alpha, h=h, p=p, master_seed=point_seed(seed, L, p, 1))
        plan = steady_plan(P, n_trajectories, ("qmi",), n_samples, stride)
        m, e = steady_values(run_trajectories(plan, threads))["qmi"]
        rows.append((p, m, e))
    return rows


def half_chain_samples(L, p, n_trajectories=200, alpha=2.0, h=0.9, seed=0, n_samples=5, stride=4, threads=1):
    """Per-trajectory steady averages of the half-chain von Neumann entropy."""
    P = ModelParams(L=L, alpha=alpha, h=h, p=p, master_seed=point_seed(seed, L, p, 2))
    s = run_trajectories(steady_plan(P, n_trajectories, ("S_half",), n_samples, stride), threads)
    return s.get("S_half", "after").mean(axis=1)


def entanglement_slope(p, Ls=(8, 10, 12, 14, 16), n_trajectories=200, poly_order=1, seed=0, **kw):
    """(SlopeResult, bootstrap error of a_inf, per-size samples).

    Local slopes come from consecutive triples (L, L+2, L+4); the default
    linear extrapolation in 1/L is much less noise-sensitive than order 2
    when only three slopes exist.
    """
    samples = [half_chain_samples(L, p, n_trajectories, seed=seed, **kw) for L in Ls]
    res, err = slope_bootstrap(Ls, samples, poly_order=poly_order, seed=seed)
    return res, err, samples


# reference qubit --------------------------------------------------------------------

def tau_point(L, p, n_trajectories=500, n_cycles=3000, alpha=2.0, h=0.9, s0=0.15, prep="stochastic", seed=0,
              threads=1):
    """(tau, bootstrap error, series) of the trajectory-averaged S_R curve."""
    P = ModelParams(L=L, alpha=alpha, h=h, p=p, master_seed=point_seed(seed, L, p, 3))
    series = run_reference_qubit(RunPlan(P, n_trajectories, n_cycles, sample_phase="before"), prep, threads)
    tau, err = tau_bootstrap(series.get("S_R", "before"), s0, series.cycles, P.T, seed=seed)
    return tau, err, series


# snapshots ----------------------------------------------------------------------------

def snapshot_point(L, p, n=1000, m=10, alpha=0.5, h=0.9, seed=0):
    """Steady-state X-basis snapshot dataset; the source is burned in past t_steady."""
    P = ModelParams(L=L, alpha=alpha, h=h, p=p, master_seed=point_seed(seed, L, p, 4))
    src = TrajectorySource(P, 0)
    burn = int(np.ceil(steady_window(P)[0] / P.T))
    return make_snapshots(src, m, n, "X", rng_stream(P.master_seed, 1), burn_in=burn, params={"L": L, "p": p})


def id_point(L, p, n=1000, m=10, alpha=0.5, h=0.9, seed=0, metric="hamming"):
    return twoNN(snapshot_point(L, p, n, m, alpha, h, seed), metric)


# timing ---------------------------------------------------------------------------------

def cycle_time(L, repeats=5, inner=None, alpha=0.5, p=0.3):
    """Median seconds per full cycle (unitary, reset layer, X and X^2)."""
    P = ModelParams(L=L, alpha=alpha, p=p)
    tab = tables_for(P)
    rng = rng_stream(0, 0)
    psi = x_polarized(L)
    inner = inner or max(1, 2**20 // 2**L)

    def step():
        apply_cycle_inplace(psi, tab)
        sample_reset_layer_inplace(psi, p, rng)
        x_observables(psi)  # X and X^2 from one transform

    step()  # warm-up
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(inner):
            step()
        times.append((time.perf_counter() - t0) / inner)
    return float(np.median(times))


def scaling_exponent(Ls, times) -> float:
    """Slope of log t against log(L 2^L)."""
    Ls = np.asarray(Ls, dtype=float)
    return float(np.polyfit(np.log(Ls * 2.0**Ls), np.log(times), 1)[0])
