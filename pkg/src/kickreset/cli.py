"""Configuration-driven experiment runner.

    kickreset trajectory --config run.cfg --seed 3 --threads 2 --out results/

Every run writes one CSV per (L, h) with columns
``p, observable, mean, stderr, phase`` and a JSON manifest (config, seed,
code version, wall time, status).  The manifest is written even when the
run fails.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .config import KINDS, ConfigError, ExperimentConfig, config_dict, emit_config, parse_config
from .core import ModelParams


def _point_seed(master: int, *key: int) -> int:
    ss = np.random.SeedSequence(int(master) & (2**64 - 1), spawn_key=tuple(int(k) for k in key))
    a, b = ss.generate_state(2, np.uint32)
    return (int(a) << 32) | int(b)


def _params(cfg: ExperimentConfig, L: int, h: float, p: float, seed: int) -> ModelParams:
    return ModelParams(L=L, alpha=cfg["model.alpha"], J=cfg["model.J"], T=cfg["model.T"], h=h, p=p,
                       master_seed=seed)


def _plan(cfg, params, **kw):
    from .trajectories import RunPlan

    args = dict(params=params, n_trajectories=cfg["plan.trajectories"], n_cycles=cfg["plan.cycles"],
                observables=frozenset(cfg["plan.observables"]), sample_phase=cfg["plan.sample_phase"],
                init=cfg["plan.init"] if cfg["plan.init"] != "mixed" else "x_polarized")
    args.update(kw)
    return RunPlan(**args)


def _window(params, n_cycles):
    """Steady window when it exists within the run, else the final cycle only."""
    from .analysis import NoSteadyWindowError, steady_window

    top = n_cycles * params.T
    try:
        t_min, t_max = steady_window(params)
    except NoSteadyWindowError:
        return top - 0.5 * params.T, top
    if t_min >= min(t_max, top):
        return top - 0.5 * params.T, top
    return t_min, min(t_max, top)


def _series_rows(series, params, n_cycles):
    t_min, t_max = _window(params, n_cycles)
    rows = []
    phases = sorted({ph for _, ph in series.values})
    for tag, ph in series.keys():
        m, e = series.steady(tag, ph, t_min, t_max)
        rows.append((tag, m, e, ph))
    tags = {t for t, _ in series.values}
    if {"M2", "M4"} <= tags:
        for ph in phases:
            try:
                rows.append(("binder", series.steady_binder(ph, t_min, t_max), float("nan"), ph))
            except ValueError:
                rows.append(("binder", float("nan"), float("nan"), ph))
    return rows


# per-kind point evaluators: return rows (observable, mean, stderr, phase)

def _do_trajectory(cfg, params, threads):
    from .trajectories import run_trajectories

    series = run_trajectories(_plan(cfg, params), threads=threads)
    return _series_rows(series, params, cfg["plan.cycles"])


def _do_average_dm(cfg, params, threads):
    from .trajectories import entropy_at_5L, run_average_dm

    init = cfg["plan.init"] if cfg["plan.init"] != "x_polarized" else "mixed"
    series, _ = run_average_dm(_plan(cfg, params, n_trajectories=1), init=init)
    rows = [(t, m, float("nan"), ph) for t, m, _, ph in _series_rows(series, params, cfg["plan.cycles"])]
    phases = {ph for _, ph in series.values}
    for ph in sorted(phases):
        try:
            rows.append(("S_vN_5L", entropy_at_5L(series, params.L, ph), float("nan"), ph))
        except ValueError:
            pass
    return rows


def _do_conditioned_dm(cfg, params, threads):
    from .trajectories import run_conditioned_dm

    series = run_conditioned_dm(_plan(cfg, params), threads=threads)
    rows = []
    for tag, ph in series.keys():
        rows.append((tag, float(series.mean(tag, ph)[-1]), float(series.stderr(tag, ph)[-1]), ph))
    return rows


def _do_permsym(cfg, params, threads):
    from .permsym import run_permsym

    series, _ = run_permsym(params.L, params.h, params.p, cfg["plan.cycles"], params.J, params.T,
                            init=cfg["plan.init"], method=cfg["permsym.method"])
    last = series.rows[-1]
    return [(k, float(last[k]), 0.0, "after") for k in ("X", "X2", "m2", "m4", "binder")]


def _do_cluster_mf(cfg, params, threads):
    from .meanfield import bloch_to_rho, cluster_mf_cycle, cluster_sx

    one = bloch_to_rho([1.0, 0.0, 0.0])
    rho = np.kron(one, one)
    for _ in range(cfg["plan.cycles"]):
        rho = cluster_mf_cycle(rho, params, n_steps=cfg["cluster_mf.n_steps"])
    purity = float(np.trace(rho @ rho).real)
    return [("abs_sx", abs(cluster_sx(rho)), 0.0, "after"), ("purity", purity, 0.0, "after")]


def _do_ref_qubit(cfg, params, threads):
    from .analysis import NoCrossingError, tau_bootstrap
    from .trajectories import run_reference_qubit

    plan = _plan(cfg, params, sample_phase="before")
    series = run_reference_qubit(plan, cfg["ref_qubit.prep"], threads=threads)
    S = series.get("S_R", "before")
    rows = [("S_R", float(S[:, -1].mean()), float(S[:, -1].std(ddof=1) / np.sqrt(S.shape[0]))
             if S.shape[0] > 1 else float("nan"), "before")]
    try:
        tau, err = tau_bootstrap(S, cfg["ref_qubit.s0"], series.cycles, params.T, seed=params.master_seed & 0xFFFF)
    except NoCrossingError:
        tau, err = float("nan"), float("nan")
    rows.append(("tau", tau, err, "before"))
    return rows


def _do_snapshots(cfg, params, threads):
    from .analysis import make_snapshots, twoNN
    from .core import rng_stream
    from .trajectories import TrajectorySource

    src = TrajectorySource(params, 0, cfg["plan.init"] if cfg["plan.init"] != "mixed" else "x_polarized")
    gap = cfg["snapshots.gap"] or None
    burn = cfg["snapshots.burn_in"] or int(np.ceil(_window(params, 10**9)[0]))
    ds = make_snapshots(src, cfg["snapshots.m"], cfg["snapshots.n"], cfg["snapshots.basis"],
                        rng_stream(params.master_seed, 1), gap=gap, burn_in=burn)
    r = twoNN(ds, cfg["snapshots.metric"])
    return [("I_d", r.dimension, float("nan"), "after"), ("discarded", r.discarded_fraction, 0.0, "after")]


POINT_RUNNERS = {
    "trajectory": _do_trajectory,
    "average_dm": _do_average_dm,
    "conditioned_dm": _do_conditioned_dm,
    "permsym": _do_permsym,
    "cluster_mf": _do_cluster_mf,
    "ref_qubit": _do_ref_qubit,
    "snapshots": _do_snapshots,
}


def _write_point_csv(path: Path, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["p", "observable", "mean", "stderr", "phase"])
        for p, obs, m, e, ph in rows:
            w.writerow([repr(float(p)), obs, repr(float(m)), repr(float(e)), ph])


def _csv_name(L, h) -> str:
    return f"L{L}_h{h!r}.csv"


def _run_meanfield(cfg, out: Path) -> list[str]:
    from .meanfield import phase_map

    files = []
    base = ModelParams(L=1, alpha=cfg["model.alpha"], J=cfg["model.J"], T=cfg["model.T"])
    rows = phase_map(cfg["sweep.h"], cfg["sweep.p"], base, max_cycles=cfg["meanfield.max_cycles"])
    for h in cfg["sweep.h"]:
        sel = [r for r in rows if r["h"] == float(h)]
        csv_rows = []
        for r in sel:
            csv_rows.append((r["p"], "abs_sx", r["abs_sx"], 0.0, "after"))
            csv_rows.append((r["p"], "P0", r["P0"], 0.0, "after"))
        name = f"meanfield_h{float(h)!r}.csv"
        _write_point_csv(out / name, csv_rows)
        files.append(name)
    return files


def read_point_csv(path) -> list[dict]:
    with Path(path).open(encoding="utf-8") as fh:
        return [{"p": float(r["p"]), "observable": r["observable"], "mean": float(r["mean"]),
                 "stderr": float(r["stderr"]), "phase": r["phase"]} for r in csv.DictReader(fh)]


def _run_collapse(cfg, out: Path) -> list[str]:
    import re

    from .analysis import fss_collapse

    datasets = {}
    for path in cfg["collapse.inputs"]:
        m = re.search(r"L(\d+)_", Path(path).name)
        if not m:
            raise ConfigError(f"collapse.inputs: cannot read L from file name {path!r}")
        L = int(m.group(1))
        rows = [r for r in read_point_csv(path)
                if r["observable"] == cfg["collapse.observable"] and r["phase"] == cfg["collapse.phase"]]
        rows.sort(key=lambda r: r["p"])
        err = np.array([r["stderr"] for r in rows])
        ok = np.all(np.isfinite(err) & (err > 0))
        datasets[L] = (np.array([r["p"] for r in rows]), np.array([r["mean"] for r in rows]),
                       err if ok else None)
    res = fss_collapse(datasets, cfg["collapse.form"], cfg["collapse.p_c"], cfg["collapse.nu"],
                       cfg["collapse.expo"], n_bootstrap=cfg["collapse.bootstrap"], seed=cfg["run.seed"])
    res.write_json(out / "scaling.json")
    return ["scaling.json"]


def run(cfg: ExperimentConfig, out: str | Path | None = None, threads: int | None = None) -> dict:
    """Execute the sweep; returns the manifest (also written as manifest.json)."""
    out = Path(out if out is not None else cfg["run.out"])
    threads = cfg["run.threads"] if threads is None else threads
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    manifest = {"config": config_dict(cfg), "config_text": emit_config(cfg), "master_seed": cfg["run.seed"],
                "code_version": __version__, "status": "running", "files": []}
    try:
        if cfg.kind == "meanfield":
            manifest["files"] = _run_meanfield(cfg, out)
        elif cfg.kind == "collapse":
            manifest["files"] = _run_collapse(cfg, out)
        else:
            fn = POINT_RUNNERS[cfg.kind]
            for iL, L in enumerate(cfg["sweep.L"]):
                for ih, h in enumerate(cfg["sweep.h"]):
                    rows = []
                    for ip, p in enumerate(cfg["sweep.p"]):
                        seed = _point_seed(cfg["run.seed"], iL, ih, ip)
                        params = _params(cfg, L, h, p, seed)
                        for obs, m, e, ph in fn(cfg, params, threads):
                            rows.append((p, obs, m, e, ph))
                    name = _csv_name(L, float(h))
                    _write_point_csv(out / name, rows)
                    manifest["files"].append(name)
        manifest["status"] = "ok"
    except Exception as exc:  # the manifest records every failure
        manifest["status"] = "failed"
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        manifest["traceback"] = traceback.format_exc()
        raise
    finally:
        manifest["wall_time_s"] = time.perf_counter() - t0
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    return manifest


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="kickreset", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        sp = sub.add_parser(kind, help=f"run a {kind} experiment")
        sp.add_argument("--config", required=True, help="key = value config file")
        sp.add_argument("--seed", type=int, help="override run.seed")
        sp.add_argument("--threads", type=int, help="override run.threads")
        sp.add_argument("--out", help="override run.out")
    em = sub.add_parser("emit-config", help="print the canonical form of a config")
    em.add_argument("--config", required=True)
    args = ap.parse_args(argv)
    try:
        cfg = parse_config(Path(args.config).read_text(encoding="utf-8"))
        if args.kind == "emit-config":
            sys.stdout.write(emit_config(cfg))
            return 0
        if cfg.kind != args.kind:
            raise ConfigError(f"kind: config says {cfg.kind!r} but subcommand is {args.kind!r}")
        changes = {}
        if args.seed is not None:
            changes["run.seed"] = args.seed
        if args.out is not None:
            changes["run.out"] = args.out
        if args.threads is not None:
            changes["run.threads"] = args.threads
        if changes:
            cfg = cfg.updated(changes)
    except (ConfigError, OSError) as exc:
        print(f"kickreset: {exc}", file=sys.stderr)
        return 2
    try:
        run(cfg)
    except Exception as exc:
        print(f"kickreset: {cfg.kind} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
