"""Trajectory ensembles, average and conditioned density matrices, reference-qubit runs.

Every trajectory draws from its own stream ``rng_stream(master_seed, index)``
and writes into its own row of the result arrays, so results do not depend on
the number of worker threads.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .core import ModelParams, OutcomeRecord, ResourceError, basis_state, rng_stream, x_polarized
from .evolution import DM_CAP, apply_cycle_dm, apply_cycle_inplace, apply_cycle_restricted, apply_xx_chain, tables_for
from .measurement import average_reset_channel, sample_reset_layer_dm, sample_reset_layer_inplace
from .observables import (adjacent_quarters, collective_moments_dm, dm_entropy_purity, half_chain_entropy,
                          participation_entropy, qmi, reference_qubit_entropy, x_observables, MomentSet, binder)

STATE_CAP = 24
PHASES = ("before", "after")
MOMENT_TAGS = ("X", "X2", "M2", "M4")
BASE_TAGS = frozenset(MOMENT_TAGS + ("S_half", "S2_half", "qmi"))


class InvalidPlanError(ValueError):
    pass


def _is_participation_tag(tag: str) -> bool:
    # P{basis}{q}, e.g. PZ2 or PX1
    if len(tag) < 3 or tag[0] != "P" or tag[1] not in "ZX":
        return False
    try:
        return float(tag[2:]) > 0
    except ValueError:
        return False


def _valid_tag(tag: str) -> bool:
    return tag in BASE_TAGS or _is_participation_tag(tag)


@dataclass(frozen=True)
class RunPlan:
    params: ModelParams
    n_trajectories: int = 500
    n_cycles: int = 100
    observables: frozenset = frozenset({"X", "X2"})
    sample_phase: str = "both"  # before | after | both
    init: str = "x_polarized"  # x_polarized | all_down (pure); mixed also allowed for density matrices
    steady: bool = False
    record_outcomes: bool = False
    state_cap: int = STATE_CAP
    dm_cap: int = DM_CAP
    record_cycles: tuple | None = None  # 1-based cycles to record; None records every cycle

    def __post_init__(self):
        object.__setattr__(self, "observables", frozenset(self.observables))
        if self.record_cycles is not None:
            rc = tuple(sorted({int(c) for c in self.record_cycles}))
            if not rc or rc[0] < 1 or rc[-1] > self.n_cycles:
                raise InvalidPlanError("record_cycles must be a non-empty subset of 1..n_cycles")
            object.__setattr__(self, "record_cycles", rc)
        if self.n_trajectories < 1:
            raise InvalidPlanError("n_trajectories must be >= 1")
        if self.n_cycles < 1:
            raise InvalidPlanError("n_cycles must be >= 1")
        if self.sample_phase not in ("before", "after", "both"):
            raise InvalidPlanError(f"sample_phase must be before, after or both, got {self.sample_phase!r}")
        bad = sorted(t for t in self.observables if not _valid_tag(t))
        if bad:
            raise InvalidPlanError(f"unknown observable tags {bad}")
        if self.init not in ("x_polarized", "all_down", "mixed"):
            raise InvalidPlanError(f"unknown initial state {self.init!r}")
        if self.steady:
            from .analysis import steady_window

            t_min, _ = steady_window(self.params)
            if self.n_cycles * self.params.T <= t_min:
                raise InvalidPlanError(
                    f"n_cycles*T = {self.n_cycles * self.params.T} does not exceed t_steady = {t_min}")

    @property
    def phases(self) -> tuple[str, ...]:
        return PHASES if self.sample_phase == "both" else (self.sample_phase,)

    @property
    def cycles(self) -> np.ndarray:
        if self.record_cycles is None:
            return np.arange(1, self.n_cycles + 1)
        return np.array(self.record_cycles)


@dataclass
class ObservableSeries:
    """values[(tag, phase)] has shape (n_trajectories, len(cycles))."""

    cycles: np.ndarray
    values: dict = field(default_factory=dict)
    T: float = 1.0
    outcomes: list | None = None

    @property
    def n_trajectories(self) -> int:
        return next(iter(self.values.values())).shape[0]

    def keys(self):
        return sorted(self.values)

    def get(self, tag: str, phase: str = "after") -> np.ndarray:
        return self.values[(tag, phase)]

    def mean(self, tag: str, phase: str = "after") -> np.ndarray:
        return self.get(tag, phase).mean(axis=0)

    def stderr(self, tag: str, phase: str = "after") -> np.ndarray:
        v = self.get(tag, phase)
        if v.shape[0] < 2:
            return np.full(v.shape[1], np.nan)
        return v.std(axis=0, ddof=1) / np.sqrt(v.shape[0])

    def window_mask(self, t_min: float, t_max: float) -> np.ndarray:
        t = self.cycles * self.T
        return (t > t_min) & (t <= t_max)

    def per_trajectory_average(self, tag: str, phase: str, t_min: float, t_max: float) -> np.ndarray:
        mask = self.window_mask(t_min, t_max)
        if not mask.any():
            raise ValueError(f"no samples in the window ({t_min}, {t_max}]")
        return self.get(tag, phase)[:, mask].mean(axis=1)

    def steady(self, tag: str, phase: str = "after", t_min: float = 0.0, t_max: float = np.inf) -> tuple[float, float]:
        """Window-averaged mean and its standard error over trajectories."""
        a = self.per_trajectory_average(tag, phase, t_min, t_max)
        err = a.std(ddof=1) / np.sqrt(a.size) if a.size > 1 else float("nan")
        return float(a.mean()), float(err)

    def steady_binder(self, phase: str = "after", t_min: float = 0.0, t_max: float = np.inf) -> float:
        m2 = self.per_trajectory_average("M2", phase, t_min, t_max).mean()
        m4 = self.per_trajectory_average("M4", phase, t_min, t_max).mean()
        return binder(MomentSet(float(m2), float(m4)))

    def rows(self):
        for (tag, phase) in self.keys():
            mu, se = self.mean(tag, phase), self.stderr(tag, phase)
            for c, m, s in zip(self.cycles, mu, se):
                yield {"cycle": int(c), "observable": tag, "phase": phase, "mean": float(m), "stderr": float(s)}

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["cycle", "observable", "phase", "mean", "stderr"])
            for r in self.rows():
                w.writerow([r["cycle"], r["observable"], r["phase"], repr(r["mean"]), repr(r["stderr"])])


# pure-state observables ------------------------------------------------------

def measure_state(psi: np.ndarray, tags, L: int) -> dict:
    out = {}
    if any(t in tags for t in MOMENT_TAGS):
        X, X2, m2, m4 = x_observables(psi)
        out.update(X=X, X2=X2, M2=m2, M4=m4)
    if "S_half" in tags:
        out["S_half"] = half_chain_entropy(psi, 1)
    if "S2_half" in tags:
        out["S2_half"] = half_chain_entropy(psi, 2)
    if "qmi" in tags:
        A, B = adjacent_quarters(L)
        out["qmi"] = qmi(psi, A, B)
    for t in tags:
        if _is_participation_tag(t):
            out[t] = participation_entropy(psi, float(t[2:]), t[1])
    return {t: out[t] for t in tags}


def initial_state(kind: str, L: int) -> np.ndarray:
    if kind == "x_polarized":
        return x_polarized(L)
    if kind == "all_down":
        return basis_state(L, 0)
    raise InvalidPlanError(f"initial state {kind!r} is not a pure state")


def _check_memory(L: int, cap: int, copies: int = 4) -> None:
    if L > cap:
        raise ResourceError(f"state-vector runs capped at L={cap}, got L={L}")
    need = copies * (1 << L) * 16
    try:
        avail = os.sysconf("SC_AVPHYS_PAGES") * os.sysconf("SC_PAGE_SIZE")
    except (ValueError, OSError, AttributeError):
        return
    if need > avail:
        raise ResourceError(f"L={L} needs ~{need / 2**30:.1f} GiB, only {avail / 2**30:.1f} GiB available")


def _run_parallel(fn, n: int, threads: int) -> None:
    if threads <= 1 or n < 2:
        for i in range(n):
            fn(i)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(fn, range(n)))


def run_trajectories(plan: RunPlan, threads: int = 1) -> ObservableSeries:
    """Sampled trajectories: U, record 'before', reset layer, record 'after'."""
    params = plan.params
    L = params.L
    _check_memory(L, plan.state_cap, copies=2 * max(threads, 1))
    tables = tables_for(params)
    tags = sorted(plan.observables)
    phases = plan.phases
    N, nc = plan.n_trajectories, plan.n_cycles
    cycles = plan.cycles
    slot = np.full(nc + 1, -1)
    slot[cycles] = np.arange(cycles.size)
    values = {(t, ph): np.empty((N, cycles.size)) for t in tags for ph in phases}
    records = [None] * N if plan.record_outcomes else None
    psi0 = initial_state(plan.init, L)

    def one(idx):
        rng = rng_stream(params.master_seed, idx)
        psi = psi0.copy()
        rec = OutcomeRecord(L) if records is not None else None
        for n in range(1, nc + 1):
            k = slot[n]
            apply_cycle_inplace(psi, tables)
            if k >= 0 and "before" in phases:
                for t, v in measure_state(psi, tags, L).items():
                    values[(t, "before")][idx, k] = v
            mu = sample_reset_layer_inplace(psi, params.p, rng)
            if rec is not None:
                rec.append(mu)
            if k >= 0 and "after" in phases:
                for t, v in measure_state(psi, tags, L).items():
                    values[(t, "after")][idx, k] = v
        if records is not None:
            records[idx] = rec

    _run_parallel(one, N, threads)
    return ObservableSeries(cycles, values, params.T, records)


def steady_plan(params: ModelParams, n_trajectories: int = 500, observables=("X", "X2"), n_samples: int = 5,
                stride: int = 4, sample_phase: str = "after", **kw) -> RunPlan:
    """Plan that runs just past t_steady and records ``n_samples`` cycles ``stride`` apart.

    The recorded cycles lie in the steady window (t_steady, 1000 T].
    """
    from .analysis import steady_window

    t_min, t_max = steady_window(params)
    first = int(np.floor(t_min / params.T)) + 1
    cycles = first + stride * np.arange(n_samples)
    if cycles[-1] * params.T > t_max:
        raise InvalidPlanError(f"{n_samples} samples with stride {stride} do not fit below t_max = {t_max}")
    return RunPlan(params, n_trajectories, int(cycles[-1]), frozenset(observables), sample_phase,
                   steady=True, record_cycles=tuple(int(c) for c in cycles), **kw)


def steady_values(series: ObservableSeries, phase: str = "after") -> dict:
    """tag -> (mean, stderr) of per-trajectory averages over all recorded cycles."""
    out = {}
    for tag, ph in series.keys():
        if ph != phase:
            continue
        a = series.get(tag, ph).mean(axis=1)
        out[tag] = (float(a.mean()), float(a.std(ddof=1) / np.sqrt(a.size)) if a.size > 1 else float("nan"))
    return out


class TrajectorySource:
    """A single trajectory advanced on demand (snapshot generation)."""

    def __init__(self, params: ModelParams, index: int = 0, init: str = "x_polarized"):
        self.params = params
        self.tables = tables_for(params)
        self.rng = rng_stream(params.master_seed, index)
        self.psi = initial_state(init, params.L)
        self.t = 0

    def advance(self, n_cycles: int) -> np.ndarray:
        for _ in range(n_cycles):
            apply_cycle_inplace(self.psi, self.tables)
            sample_reset_layer_inplace(self.psi, self.params.p, self.rng)
        self.t += n_cycles
        return self.psi


# density matrices -------------------------------------------------------------

def initial_dm(kind: str, L: int) -> np.ndarray:
    if kind == "mixed":
        return np.eye(1 << L, dtype=np.complex128) / (1 << L)
    psi = initial_state(kind, L)
    return np.outer(psi, psi.conj())


def _dm_observables(rho: np.ndarray, L: int) -> dict:
    m = collective_moments_dm(rho, (1, 2, 4))
    S, P = dm_entropy_purity(rho)
    x2 = (m[2] - L) / (L * (L - 1)) if L > 1 else float("nan")
    return {"X": m[1] / L, "X2": x2, "M2": m[2], "M4": m[4], "S_vN": S, "purity": P,
            "trace": float(np.trace(rho).real)}


def run_average_dm(plan: RunPlan, init: str = "mixed") -> tuple[ObservableSeries, np.ndarray]:
    """Average state under U then the reset channel; one row per observable.

    ``series.get("S_vN", "after")[0, 5L - 1]`` is the entropy at t = 5L.
    """
    params = plan.params
    L = params.L
    if L > plan.dm_cap:
        raise ResourceError(f"density-matrix runs capped at L={plan.dm_cap}, got L={L}")
    tables = tables_for(params)
    rho = initial_dm(init, L)
    rows = {ph: [] for ph in plan.phases}
    for _ in range(plan.n_cycles):
        rho = apply_cycle_dm(rho, tables, cap=plan.dm_cap)
        if "before" in rows:
            rows["before"].append(_dm_observables(rho, L))
        rho = average_reset_channel(rho, params.p)
        if "after" in rows:
            rows["after"].append(_dm_observables(rho, L))
    values = {}
    for ph, rs in rows.items():
        for t in rs[0]:
            values[(t, ph)] = np.array([[r[t] for r in rs]])
    return ObservableSeries(np.arange(1, plan.n_cycles + 1), values, params.T), rho


def entropy_at_5L(series: ObservableSeries, L: int, phase: str = "after") -> float:
    idx = np.nonzero(series.cycles == 5 * L)[0]
    if idx.size == 0:
        raise ValueError(f"series does not reach t = 5L = {5 * L}")
    return float(series.get("S_vN", phase)[0, idx[0]])


def run_conditioned_dm(plan: RunPlan, threads: int = 1) -> ObservableSeries:
    """Conditioned states from I/2^L; von Neumann entropy and purity around every reset layer."""
    params = plan.params
    L = params.L
    if L > plan.dm_cap:
        raise ResourceError(f"density-matrix runs capped at L={plan.dm_cap}, got L={L}")
    tables = tables_for(params)
    N, nc = plan.n_trajectories, plan.n_cycles
    values = {(t, ph): np.empty((N, nc)) for t in ("S_vN", "purity") for ph in PHASES}

    def one(idx):
        rng = rng_stream(params.master_seed, idx)
        rho = initial_dm("mixed", L)
        for n in range(nc):
            rho = apply_cycle_dm(rho, tables, cap=plan.dm_cap)
            values[("S_vN", "before")][idx, n], values[("purity", "before")][idx, n] = dm_entropy_purity(rho)
            rho, _ = sample_reset_layer_dm(rho, params.p, rng)
            values[("S_vN", "after")][idx, n], values[("purity", "after")][idx, n] = dm_entropy_purity(rho)

    _run_parallel(one, N, threads)
    return ObservableSeries(np.arange(1, nc + 1), values, params.T)


# reference qubit ----------------------------------------------------------------

PREP_P = 0.01


def prepare_reference_state(params: ModelParams, prep: str, rng: np.random.Generator,
                            init: str = "x_polarized") -> np.ndarray:
    """Entangle site 0 with the rest: 2L noisy cycles (p = 0.01) or the XX-gate chain."""
    L = params.L
    if prep == "xx_chain":
        return apply_xx_chain(basis_state(L, 0))
    if prep == "stochastic":
        tables = tables_for(params)
        psi = initial_state(init, L)
        for _ in range(2 * L):
            apply_cycle_inplace(psi, tables)
            sample_reset_layer_inplace(psi, PREP_P, rng)
        return psi
    raise InvalidPlanError(f"unknown preparation {prep!r}")


def run_reference_qubit(plan: RunPlan, prep: str = "stochastic", threads: int = 1) -> ObservableSeries:
    """S_R of site 0 at t = 0 and before every system-only reset layer.

    The system (sites 1..L-1) evolves as its own periodic chain; site 0 idles.
    """
    params = plan.params
    L = params.L
    if L < 3:
        raise InvalidPlanError("reference-qubit runs need L >= 3")
    _check_memory(L, plan.state_cap, copies=2 * max(threads, 1))
    sub_tables = tables_for(params, L - 1)
    N, nc = plan.n_trajectories, plan.n_cycles
    S = np.empty((N, nc + 1))
    system = range(1, L)

    def one(idx):
        rng = rng_stream(params.master_seed, idx)
        psi = prepare_reference_state(params, prep, rng, plan.init)
        S[idx, 0] = reference_qubit_entropy(psi)
        for n in range(1, nc + 1):
            psi = apply_cycle_restricted(psi, params, sub_tables)
            S[idx, n] = reference_qubit_entropy(psi)
            sample_reset_layer_inplace(psi, params.p, rng, system)

    _run_parallel(one, N, threads)
    return ObservableSeries(np.arange(nc + 1), {("S_R", "before"): S}, params.T)


# logs -------------------------------------------------------------------------

def _params_dict(params: ModelParams) -> dict:
    return asdict(params)


def write_outcomes(path, records: list, L: int) -> None:
    """Concatenated 2-bit packed cycles, trajectory after trajectory."""
    with Path(path).open("wb") as fh:
        for rec in records:
            fh.write(rec.to_bytes())


def read_outcomes(path, L: int, n_trajectories: int) -> list:
    data = Path(path).read_bytes()
    per = len(data) // n_trajectories
    return [OutcomeRecord.from_bytes(data[i * per:(i + 1) * per], L) for i in range(n_trajectories)]


def write_run_logs(outdir, plan: RunPlan, series: ObservableSeries, name: str = "trajectories") -> dict:
    """CSV series, optional binary outcomes and a JSON manifest in ``outdir``."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    series.write_csv(out / f"{name}.csv")
    files = [f"{name}.csv"]
    if series.outcomes is not None:
        write_outcomes(out / f"{name}_outcomes.bin", series.outcomes, plan.params.L)
        files.append(f"{name}_outcomes.bin")
    manifest = {
        "plan": {"params": _params_dict(plan.params), "n_trajectories": plan.n_trajectories,
                 "n_cycles": plan.n_cycles, "observables": sorted(plan.observables),
                 "sample_phase": plan.sample_phase, "init": plan.init},
        "master_seed": plan.params.master_seed,
        "code_version": __version__,
        "files": files,
    }
    (out / f"{name}_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    return manifest
