import numpy as np

from kickreset.experiments import (cycle_time, entanglement_slope, point_seed, qmi_curve, scaling_exponent,
                                   snapshot_point, tau_point)


def test_point_seed_depends_on_every_argument():
    base = point_seed(0, 8, 0.1)
    assert base == point_seed(0, 8, 0.1)
    assert len({base, point_seed(1, 8, 0.1), point_seed(0, 10, 0.1), point_seed(0, 8, 0.2),
                point_seed(0, 8, 0.1, 1)}) == 5


def test_scaling_exponent_exact():
    Ls = np.arange(10, 21)
    assert abs(scaling_exponent(Ls, 3e-9 * Ls * 2.0**Ls) - 1) < 1e-12
    assert abs(scaling_exponent(Ls, (Ls * 2.0**Ls) ** 1.2) - 1.2) < 1e-12


def test_cycle_time_positive():
    assert 0 < cycle_time(8, repeats=2, inner=3) < 1


def test_qmi_curve_is_reproducible():
    a = qmi_curve(6, (0.3, 0.6), n_trajectories=8, n_samples=2, stride=2)
    b = qmi_curve(6, (0.3, 0.6), n_trajectories=8, n_samples=2, stride=2)
    assert a == b
    assert [r[0] for r in a] == [0.3, 0.6]
    assert all(r[1] >= -1e-12 and r[2] >= 0 for r in a)


def test_entanglement_slope_runs():
    res, err, samples = entanglement_slope(0.6, (4, 6, 8, 10), n_trajectories=6, n_samples=2, stride=2)
    assert len(samples) == 4 and all(s.shape == (6,) for s in samples)
    assert res.a_inf >= 0 and np.isfinite(err)


def test_tau_point_at_high_p():
    tau, err, series = tau_point(4, 0.7, n_trajectories=20, n_cycles=60)
    assert 0 < tau < 60 and err >= 0
    assert series.get("S_R", "before").shape == (20, series.cycles.size)


def test_snapshot_point_shape():
    ds = snapshot_point(4, 0.5, n=12, m=3)
    assert ds.records.shape == (12, 12) and ds.params == {"L": 4, "p": 0.5}
