import json

import numpy as np
import pytest

from kickreset.cli import main, read_point_csv, run
from kickreset.config import ConfigError, emit_config, parse_config
from kickreset.core import ModelParams, x_polarized
from kickreset.evolution import dense_cycle_unitary
from kickreset.meanfield import mf_critical_p
from kickreset.observables import correlator_x2

MINIMAL = "kind = trajectory\nsweep.L = 6\nsweep.h = 0.9\nsweep.p = 0.2\n"


def test_defaults_applied():
    cfg = parse_config(MINIMAL)
    assert cfg["model.J"] == 1.0 and cfg["model.T"] == 1.0
    assert cfg["plan.trajectories"] == 500 and cfg["plan.sample_phase"] == "both"
    assert cfg["sweep.L"] == (6,) and cfg["sweep.p"] == (0.2,)


@pytest.mark.parametrize("text,key", [
    (MINIMAL + "model.alpha_typo = 1\n", "model.alpha_typo"),
    (MINIMAL + "plan.cycles = many\n", "plan.cycles"),
    ("kind = trajectory\nsweep.L = 6\nsweep.p = \n", "sweep.p"),
    (MINIMAL.replace("0.2", "1.5"), "sweep.p"),
    (MINIMAL + "plan.sample_phase = during\n", "plan.sample_phase"),
    ("sweep.L = 6\n", "kind"),
])
def test_errors_name_the_key(text, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        parse_config(text)


def test_roundtrip():
    text = ("kind = trajectory\nsweep.L = 6, 8\nsweep.p = 0.1, 0.30000000000000004\nmodel.alpha = 0.5\n"
            "plan.observables = X, X2, S_half\n")
    cfg = parse_config(text)
    text = emit_config(cfg)
    assert parse_config(text) == cfg
    assert emit_config(parse_config(text)) == text


def _write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_byte_identical_runs(tmp_path):
    text = "kind = trajectory\nsweep.L = 6\nsweep.p = 0.2, 0.5\nplan.trajectories = 8\nplan.cycles = 12\n"
    cfg = _write(tmp_path, text)
    assert main(["trajectory", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "4"]) == 0
    assert main(["trajectory", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "4", "--threads", "2"]) == 0
    a = (tmp_path / "a" / "L6_h0.9.csv").read_bytes()
    assert a == (tmp_path / "b" / "L6_h0.9.csv").read_bytes()
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["status"] == "ok" and man["master_seed"] == 4 and "wall_time_s" in man
    assert main(["trajectory", "--config", cfg, "--out", str(tmp_path / "c"), "--seed", "5"]) == 0
    assert a != (tmp_path / "c" / "L6_h0.9.csv").read_bytes()


def test_trivial_p_values(tmp_path):
    text = ("kind = trajectory\nmodel.alpha = 0.5\nsweep.L = 6\nsweep.h = 0.9\nsweep.p = 0.0, 1.0\n"
            "plan.trajectories = 3\nplan.cycles = 1\n")
    cfg = parse_config(text)
    run(cfg, tmp_path)
    rows = read_point_csv(tmp_path / "L6_h0.9.csv")
    x2 = {(r["p"], r["phase"]): r["mean"] for r in rows if r["observable"] == "X2"}
    U = dense_cycle_unitary(ModelParams(L=6, alpha=0.5, h=0.9))
    ref = correlator_x2(U @ x_polarized(6))
    assert x2[(0.0, "after")] == pytest.approx(ref, abs=1e-12)
    assert x2[(0.0, "before")] == pytest.approx(ref, abs=1e-12)
    assert x2[(1.0, "before")] == pytest.approx(ref, abs=1e-12)
    assert abs(x2[(1.0, "after")]) < 1e-14


def test_meanfield_contour(tmp_path):
    hs = (0.3, 0.9, 1.5)
    ps = np.round(np.arange(0.30, 0.86, 0.01), 2)
    text = f"kind = meanfield\nsweep.h = {', '.join(map(str, hs))}\nsweep.p = {', '.join(map(str, ps))}\n"
    run(parse_config(text), tmp_path)
    for h in hs:
        rows = [r for r in read_point_csv(tmp_path / f"meanfield_h{h!r}.csv") if r["observable"] == "abs_sx"]
        rows.sort(key=lambda r: r["p"])
        edge = next(r["p"] for r in rows if r["mean"] < 0.01)
        assert abs(edge - mf_critical_p(h)) <= 0.011


def test_manifest_written_on_failure(tmp_path):
    text = "kind = trajectory\nsweep.L = 30\nsweep.p = 0.2\nplan.trajectories = 1\nplan.cycles = 1\n"
    cfg = _write(tmp_path, text)
    assert main(["trajectory", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["status"] == "failed" and "ResourceError" in man["error"]


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, MINIMAL + "bogus = 1\n")
    assert main(["trajectory", "--config", cfg]) == 2
    assert "bogus" in capsys.readouterr().err
    cfg = _write(tmp_path, MINIMAL, "ok.cfg")
    assert main(["permsym", "--config", cfg]) == 2


def test_emit_config(tmp_path, capsys):
    cfg = _write(tmp_path, MINIMAL)
    assert main(["emit-config", "--config", cfg]) == 0
    assert parse_config(capsys.readouterr().out) == parse_config(MINIMAL)


def test_permsym_and_collapse_pipeline(tmp_path):
    text = ("kind = permsym\nsweep.L = 8, 12, 16\nsweep.h = 0.9\nsweep.p = 0.4, 0.5, 0.6, 0.7, 0.8, 0.9\n"
            "plan.cycles = 60\n")
    run(parse_config(text), tmp_path)
    inputs = ", ".join(str(tmp_path / f"L{L}_h0.9.csv") for L in (8, 12, 16))
    ctext = (f"kind = collapse\ncollapse.inputs = {inputs}\ncollapse.bootstrap = 3\n"
             "collapse.p_c = 0.6\ncollapse.nu = 2.0\n")
    man = run(parse_config(ctext), tmp_path / "c")
    res = json.loads((tmp_path / "c" / "scaling.json").read_text())
    assert man["files"] == ["scaling.json"]
    assert np.isfinite(res["p_c"]) and res["nu"] > 0 and res["quality"] >= 0
