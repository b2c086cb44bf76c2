import csv
import io
import json

import numpy as np
import pytest

from finslerwalk import cli
from finslerwalk import config as cfgmod
from finslerwalk.errors import ConfigError


@pytest.fixture(autouse=True)
def pinned_clock(monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")


def write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def records(path):
    with open(path) as fh:
        body = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(io.StringIO("".join(body))))


def comments(path):
    with open(path) as fh:
        return [line[2:].rstrip("\n") for line in fh if line.startswith("#")]


def run(tmp_path, *argv, out="out"):
    out_dir = tmp_path / out
    rc = cli.main([*argv, "--out-dir", str(out_dir)])
    return rc, out_dir


KATOK = "[metric]\nname = katok\nr = {r}\n[walk]\nn = 100\nsteps = {steps}\npaths = {paths}\n"


def test_simulate_zero_steps_gives_one_record(tmp_path):
    ini = write(tmp_path, KATOK.format(r=0.5, steps=0, paths=1))
    rc, out = run(tmp_path, "simulate", "--config", ini)
    assert rc == 0
    rows = records(out / "paths.csv")
    assert len(rows) == 1
    assert float(rows[0]["x0"]) == 0.0 and float(rows[0]["x1"]) == 0.0 and float(rows[0]["t"]) == 0.0


def test_simulate_header(tmp_path):
    ini = write(tmp_path, KATOK.format(r=0.5, steps=2, paths=1))
    rc, out = run(tmp_path, "simulate", "--config", ini, "--seed", "9")
    head = comments(out / "paths.csv")
    assert head[0].startswith("finslerwalk ")
    assert "command: simulate" in head and "seed: 9" in head
    assert "timestamp: 2023-11-14T22:13:20+00:00" in head
    assert "config: name = katok" in head and "config: seed = 9" in head


def test_same_seed_same_bytes(tmp_path):
    ini = write(tmp_path, KATOK.format(r=0.5, steps=20, paths=3))
    run(tmp_path, "simulate", "--config", ini, "--seed", "4", "--svg", out="a")
    run(tmp_path, "simulate", "--config", ini, "--seed", "4", "--svg", out="b")
    run(tmp_path, "simulate", "--config", ini, "--seed", "5", out="c")
    a = (tmp_path / "a" / "paths.csv").read_bytes()
    assert a == (tmp_path / "b" / "paths.csv").read_bytes()
    assert (tmp_path / "a" / "paths.svg").read_bytes() == (tmp_path / "b" / "paths.svg").read_bytes()
    assert records(tmp_path / "a" / "paths.csv") != records(tmp_path / "c" / "paths.csv")


def test_wind_changes_the_path_but_not_the_noise(tmp_path):
    # same seed: the Katok disc is the round disc shifted by the wind, so the walks differ only through it
    windy = write(tmp_path, KATOK.format(r=0.5, steps=10, paths=1), "k.ini")
    still = write(tmp_path, KATOK.format(r=0.0, steps=10, paths=1), "s.ini")
    run(tmp_path, "simulate", "--config", windy, out="k")
    run(tmp_path, "simulate", "--config", still, out="s")
    k = np.array([[float(r["x0"]), float(r["x1"])] for r in records(tmp_path / "k" / "paths.csv")])
    s = np.array([[float(r["x0"]), float(r["x1"])] for r in records(tmp_path / "s" / "paths.csv")])
    assert k.shape == s.shape == (11, 2)
    assert not np.allclose(k, s)
    assert np.all(np.abs(k - s) < 0.2)


@pytest.mark.parametrize("kind", ["subordinated", "interpolated"])
def test_simulate_other_kinds(tmp_path, kind):
    ini = write(tmp_path, "[metric]\nname = sphere\n[walk]\nkind = %s\nn = 50\nhorizon = 0.1\nsteps = 5\npaths = 2\n" % kind)
    rc, out = run(tmp_path, "simulate", "--config", ini, "--svg")
    assert rc == 0
    rows = records(out / "paths.csv")
    assert {r["kind"] for r in rows} == {kind}
    assert {r["path_id"] for r in rows} == {"0", "1"}
    assert (out / "paths.svg").exists()


def test_generator_round_sphere_symbol(tmp_path):
    ini = write(tmp_path, "[metric]\nname = sphere\n[study]\nprobes = 0.0, 0.5; 1.0, -0.3\n")
    rc, out = run(tmp_path, "generator", "--config", ini)
    doc = json.loads((out / "generator.json").read_text())
    assert rc == 0 and len(doc["estimates"]) == 2
    for est in doc["estimates"]:
        th = est["point"][1]
        assert np.allclose(est["symbol"], np.diag([1 / np.cos(th) ** 2, 1.0]) / 8, atol=1e-10)
        assert np.allclose(est["extra"]["associated_metric"], np.diag([np.cos(th) ** 2, 1.0]) * 8, atol=1e-8)
        assert np.allclose(est["drift"], 0.0, atol=1e-6)


def test_generator_katok_drift_matches_closed_form(tmp_path):
    ini = write(tmp_path, "[metric]\nname = katok\nr = 0.5\n[study]\nprobes = 0.3, 0.2; 0.0, -0.7\n")
    rc, out = run(tmp_path, "generator", "--config", ini)
    for est in json.loads((out / "generator.json").read_text())["estimates"]:
        assert np.allclose(est["drift"], est["extra"]["katok_closed_form_drift"], atol=1e-6)


def test_generator_empty_probe_list(tmp_path):
    ini = write(tmp_path, "[metric]\nname = sphere\n[study]\nprobes =\n")
    rc, out = run(tmp_path, "generator", "--config", ini)
    assert rc == 0
    assert json.loads((out / "generator.json").read_text())["estimates"] == []


def test_converge_output(tmp_path):
    ini = write(tmp_path, "[metric]\nname = katok\nr = 0.5\n[study]\nns = 100, 400, 1600\n")
    rc, out = run(tmp_path, "converge", "--config", ini, "--svg")
    assert rc == 0
    rows = records(out / "convergence.csv")
    Ns = [float(r["N"]) for r in rows]
    assert Ns == [100.0, 400.0, 1600.0]
    foot = [c for c in comments(out / "convergence.csv") if c.startswith("slope:")]
    assert len(foot) == 1 and -1.0 < float(foot[0].split(":")[1]) < -0.3
    assert (out / "convergence.svg").exists()


def test_converge_rejects_non_geometric_ns(tmp_path, capsys):
    ini = write(tmp_path, "[metric]\nname = sphere\n[study]\nns = 100, 200, 1000\n")
    rc, _ = run(tmp_path, "converge", "--config", ini)
    assert rc == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "config" and err["line"] == 4


def test_exit_times_output(tmp_path):
    ini = write(tmp_path, "[metric]\nname = sphere\n[walk]\nn = 16\npaths = 2000\n[study]\ndeltas = 0.2, 0.4\ntimes = 0, 0.02, 0.05, 0.1\n")
    rc, out = run(tmp_path, "exit-times", "--config", ini, "--svg")
    assert rc == 0
    rows = records(out / "exit_times.csv")
    assert len(rows) == 8
    for delta in ("0.2", "0.4"):
        ps = [float(r["p"]) for r in rows if r["delta"] == delta]
        assert ps[0] == 0.0 and ps == sorted(ps) and all(0 <= p <= 1 for p in ps)
    assert sum(c.startswith("fit delta=") for c in comments(out / "exit_times.csv")) == 2
    assert (out / "exit_times.svg").exists()


def test_bad_config_reports_line(tmp_path, capsys):
    ini = write(tmp_path, "[metric]\nname = sphere\n[walk]\nn = 100\nbogus = 3\n")
    rc, out = run(tmp_path, "simulate", "--config", ini)
    assert rc == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "config" and err["line"] == 5 and "bogus" in err["message"]
    assert err["path"] == ini
    assert not (out / "paths.csv").exists()


def test_bad_value_and_unknown_section(tmp_path, capsys):
    assert run(tmp_path, "simulate", "--config", write(tmp_path, "[walk]\nn = zero\n"))[0] == 2
    assert json.loads(capsys.readouterr().err.strip())["line"] == 2
    assert run(tmp_path, "simulate", "--config", write(tmp_path, "[metric]\nname = sphere\n[plot]\nx = 1\n"))[0] == 2
    assert "plot" in json.loads(capsys.readouterr().err.strip())["message"]
    assert run(tmp_path, "simulate", "--config", write(tmp_path, "[metric]\nname = torus\n"))[0] == 2
    assert run(tmp_path, "simulate", "--config", str(tmp_path / "missing.ini"))[0] == 2


def test_katok_parameter_out_of_range(tmp_path, capsys):
    rc, _ = run(tmp_path, "generator", "--config", write(tmp_path, "[metric]\nname = katok\nr = 1.2\n"))
    assert rc == 2 and json.loads(capsys.readouterr().err.strip())["line"] == 3


def test_overrides(tmp_path):
    ini = write(tmp_path, KATOK.format(r=0.5, steps=3, paths=1))
    rc, out = run(tmp_path, "simulate", "--config", ini, "--set", "walk.paths=2", "--walk.steps=5", "--N", "50")
    rows = records(out / "paths.csv")
    assert rc == 0 and len(rows) == 12
    assert float(rows[1]["t"]) == pytest.approx(1 / 50)


def test_no_config_uses_defaults(tmp_path):
    rc, out = run(tmp_path, "simulate", "--walk.steps=4")
    assert rc == 0 and len(records(out / "paths.csv")) == 5


def test_config_round_trip():
    cfg = cfgmod.parse("[metric]\nname = katok\nr = 0.25\n[study]\nprobes = 0.1, 0.2\n")
    again = cfgmod.parse(cfg.to_ini())
    assert again.values == cfg.values
    assert cfg.line("metric.r") == 3 and cfg.line("walk.seed") is None


def test_config_override_errors():
    with pytest.raises(ConfigError):
        cfgmod.parse("", overrides=["walk.seed"])
    with pytest.raises(ConfigError):
        cfgmod.parse("", overrides=["nowhere.seed=1"])
    assert cfgmod.parse("", overrides=["walk.seed=7"])["walk.seed"] == 7


def test_probe_semantics():
    sphere = "[metric]\nname = sphere\n[study]\n"
    metric = cfgmod.build_metric(cfgmod.parse(sphere))
    assert len(cfgmod.probes(cfgmod.parse(sphere), metric)) == 3
    assert len(cfgmod.probes(cfgmod.parse(sphere + "probes = default\n"), metric)) == 3
    assert cfgmod.probes(cfgmod.parse(sphere + "probes =\n"), metric) == []
    with pytest.raises(ConfigError):
        cfgmod.probes(cfgmod.parse(sphere + "probes = 1, 2, 3\n"), metric)


def test_tables_hold_plain_numbers(tmp_path):
    ini = write(tmp_path, "[metric]\nname = katok\nr = 0.5\n[walk]\nn = 50\npaths = 200\n[study]\ntimes = 0, 0.02\n")
    rc, out = run(tmp_path, "exit-times", "--config", ini)
    assert rc == 0
    for row in records(out / "exit_times.csv"):
        for value in row.values():
            float(value)
