import math

import numpy as np
import pytest

from kickreset.analysis import steady_window
from kickreset.core import ModelParams, ResourceError
from kickreset.observables import reduced_dm
from kickreset.trajectories import (InvalidPlanError, RunPlan, TrajectorySource, entropy_at_5L, read_outcomes,
                                    run_average_dm, run_conditioned_dm, run_reference_qubit, run_trajectories,
                                    write_run_logs)

LN2 = math.log(2)


def test_plan_validation():
    P = ModelParams(L=6, p=0.2)
    with pytest.raises(InvalidPlanError):
        RunPlan(P, n_cycles=40, steady=True)  # t_steady = 50
    RunPlan(P, n_cycles=60, steady=True)
    with pytest.raises(InvalidPlanError):
        RunPlan(P, observables={"bogus"})
    with pytest.raises(InvalidPlanError):
        RunPlan(P, sample_phase="during")
    assert RunPlan(P, observables={"PZ2", "PX1", "qmi"}).observables == frozenset({"PZ2", "PX1", "qmi"})


def test_memory_cap():
    with pytest.raises(ResourceError):
        run_trajectories(RunPlan(ModelParams(L=10), n_trajectories=1, n_cycles=1, state_cap=8))


def test_full_reset():
    P = ModelParams(L=6, alpha=0.5, p=1.0)
    s = run_trajectories(RunPlan(P, n_trajectories=5, n_cycles=4, observables={"X2", "X"}))
    # exact up to floating-point rounding of the reset state's norm
    assert np.all(np.abs(s.get("X2", "after")[:, 1:]) < 1e-14)
    assert np.allclose(s.get("X", "after"), 0, atol=1e-14)


def test_no_reset_is_unitary():
    P = ModelParams(L=5, alpha=0.5, p=0.0)
    s = run_trajectories(RunPlan(P, n_trajectories=3, n_cycles=6, record_outcomes=True))
    for rec in s.outcomes:
        assert np.all(rec.as_array() == 2)
    # identical trajectories without resets
    assert np.all(s.get("X2", "after") == s.get("X2", "after")[0])
    assert np.allclose(s.get("X2", "before"), s.get("X2", "after"))
    src = TrajectorySource(P)
    assert abs(np.linalg.norm(src.advance(50)) - 1) < 1e-12


def test_thread_count_does_not_change_results():
    P = ModelParams(L=7, alpha=0.5, p=0.3, master_seed=11)
    plan = RunPlan(P, n_trajectories=12, n_cycles=8, observables={"X", "X2", "S_half"}, record_outcomes=True)
    a = run_trajectories(plan, threads=1)
    b = run_trajectories(plan, threads=3)
    for k in a.values:
        assert np.array_equal(a.values[k], b.values[k])
    for ra, rb in zip(a.outcomes, b.outcomes):
        assert np.array_equal(ra.as_array(), rb.as_array())


def test_ensemble_matches_average_dm():
    P = ModelParams(L=6, alpha=0.5, h=0.9, p=0.2, master_seed=3)
    t0, t1 = steady_window(P)
    plan = RunPlan(P, n_trajectories=400, n_cycles=80, observables={"X2"}, sample_phase="after", steady=True)
    mean, err = run_trajectories(plan).steady("X2", "after", t0, t1)
    dm, rho = run_average_dm(plan, init="x_polarized")
    ref = dm.get("X2", "after")[0, -1]
    assert abs(mean - ref) < 3 * err


def test_average_dm_examples():
    P = ModelParams(L=8, alpha=0.5, p=0.3)
    s, rho = run_average_dm(RunPlan(P, n_cycles=100, sample_phase="after"))
    assert np.max(np.abs(s.get("trace", "after") - 1)) < 1e-10
    assert entropy_at_5L(s, 8) > 0
    s, rho = run_average_dm(RunPlan(ModelParams(L=5, p=1.0), n_cycles=3))
    assert abs(rho[0, 0] - 1) < 1e-12
    assert s.get("S_vN", "after")[0, -1] < 1e-8


def test_conditioned_dm_limits():
    s = run_conditioned_dm(RunPlan(ModelParams(L=5, alpha=0.5, p=0.0), n_trajectories=2, n_cycles=5))
    assert np.allclose(s.get("S_vN", "after"), 5 * LN2, atol=1e-9)
    s = run_conditioned_dm(RunPlan(ModelParams(L=5, alpha=0.5, p=1.0), n_trajectories=2, n_cycles=3))
    assert np.allclose(s.get("S_vN", "after"), 0, atol=1e-8)


def test_conditioned_entropy_does_not_grow_across_resets():
    P = ModelParams(L=6, alpha=0.5, p=0.15, master_seed=5)
    s = run_conditioned_dm(RunPlan(P, n_trajectories=80, n_cycles=12))
    d = s.get("S_vN", "after") - s.get("S_vN", "before")
    mu = d.mean(axis=0)
    se = d.std(axis=0, ddof=1) / np.sqrt(d.shape[0])
    assert np.all(mu <= 3 * se + 1e-12)
    # unitaries leave the entropy unchanged between layers
    assert np.allclose(s.get("S_vN", "before")[:, 1:], s.get("S_vN", "after")[:, :-1], atol=1e-8)


def test_reference_qubit_xx_chain():
    P = ModelParams(L=6, alpha=2.0, p=1.0)
    s = run_reference_qubit(RunPlan(P, n_trajectories=2, n_cycles=4), prep="xx_chain")
    S = s.get("S_R", "before")
    assert np.allclose(S[:, 0], LN2, atol=1e-12)
    assert np.all(S[:, 2:] < 1e-6)


def test_reference_qubit_stochastic_prep_entangles():
    P = ModelParams(L=6, alpha=2.0, p=0.0, master_seed=2)
    s = run_reference_qubit(RunPlan(P, n_trajectories=4, n_cycles=3), prep="stochastic")
    S = s.get("S_R", "before")
    assert np.all(S[:, 0] > 0.05)
    # without resets site 0 idles, so S_R is frozen
    assert np.allclose(S, S[:, :1], atol=1e-12)


def test_trajectory_projectors_average_to_channel():
    P = ModelParams(L=4, alpha=0.5, p=0.3, master_seed=9)
    n, N = 6, 600
    acc = np.zeros((16, 16), dtype=complex)
    acc2 = np.zeros((16, 16))
    for k in range(N):
        src = TrajectorySource(P, k)
        psi = src.advance(n)
        pr = np.outer(psi, psi.conj())
        acc += pr
        acc2 += np.abs(pr) ** 2
    mean = acc / N
    se = np.sqrt(np.maximum(acc2 / N - np.abs(mean) ** 2, 0) / N)
    _, rho = run_average_dm(RunPlan(P, n_cycles=n), init="x_polarized")
    assert np.all(np.abs(mean - rho) <= 4 * se + 1e-3)


def test_logs_roundtrip(tmp_path):
    P = ModelParams(L=5, alpha=0.5, p=0.4, master_seed=1)
    plan = RunPlan(P, n_trajectories=3, n_cycles=7, record_outcomes=True)
    s = run_trajectories(plan)
    man = write_run_logs(tmp_path, plan, s)
    assert man["master_seed"] == 1 and "trajectories_outcomes.bin" in man["files"]
    back = read_outcomes(tmp_path / "trajectories_outcomes.bin", 5, 3)
    for a, b in zip(s.outcomes, back):
        assert np.array_equal(a.as_array(), b.as_array())
    assert (tmp_path / "trajectories.csv").read_text().startswith("cycle,observable,phase,mean,stderr")


def test_record_cycles_subsample_full_series():
    P = ModelParams(L=6, alpha=2.0, p=0.3, master_seed=8)
    full = run_trajectories(RunPlan(P, n_trajectories=4, n_cycles=10, observables={"X2", "qmi"}))
    part = run_trajectories(RunPlan(P, n_trajectories=4, n_cycles=10, observables={"X2", "qmi"},
                                    record_cycles=(3, 7, 10)))
    assert list(part.cycles) == [3, 7, 10]
    for k in part.values:
        assert np.array_equal(part.values[k], full.values[k][:, [2, 6, 9]])
    with pytest.raises(InvalidPlanError):
        RunPlan(P, n_cycles=5, record_cycles=(6,))


def test_steady_plan():
    from kickreset.trajectories import steady_plan, steady_values

    P = ModelParams(L=6, alpha=2.0, p=0.25, master_seed=1)
    plan = steady_plan(P, 6, ("X2", "qmi"), n_samples=3, stride=2)
    assert plan.record_cycles == (41, 43, 45) and plan.n_cycles == 45
    s = run_trajectories(plan)
    vals = steady_values(s)
    assert set(vals) == {"X2", "qmi"}
    m, e = vals["qmi"]
    assert m == pytest.approx(s.get("qmi", "after").mean()) and e > 0
    with pytest.raises(InvalidPlanError):
        steady_plan(P, 2, n_samples=400, stride=4)
