import json
import os
import subprocess
import sys

import pytest

from gridlearn.cli import main, resolve
from gridlearn.errors import GridLearnError
from gridlearn.io import read_graph, read_json


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def mesh_files(tmp_path, capsys):
    g, m = tmp_path / "mesh.mtx", tmp_path / "meas.csv"
    assert run(capsys, "gen-mesh", "--kind", "grid2d", "--dims", "16x16", "--out", g)[0] == 0
    assert run(capsys, "gen-measurements", "--graph", g, "--m", 50, "--seed", 0, "--out", m)[0] == 0
    return tmp_path, g, m


def test_learn_sgl_writes_graph_and_report(mesh_files, capsys):
    tmp, g, m = mesh_files
    out = tmp / "learned.mtx"
    code, stdout, _ = run(capsys, "learn-sgl", "--measurements", m, "--k", 5, "--r", 5, "--beta", 1e-3,
                          "--tol", 1e-12, "--out", out, "--trace", tmp / "trace.csv")
    assert code == 0 and "learned 256 nodes" in stdout
    learned = read_graph(out)
    assert learned.node_count == 256 and learned.is_connected()
    report = read_json(tmp / "learned.json")
    assert report["converged"] and report["iterations"] == len(report["s_max_trace"])
    assert (tmp / "trace.csv").read_text().startswith("index,s_max\n")


def test_metrics_mismatch_names_both_sizes(tmp_path, capsys):
    a, b = tmp_path / "a.mtx", tmp_path / "b.mtx"
    run(capsys, "gen-mesh", "--dims", "6x6", "--out", a)
    run(capsys, "gen-mesh", "--dims", "7x7", "--out", b)
    code, _, err = run(capsys, "metrics", "--reference", a, "--learned", b)
    assert code != 0
    assert "36" in err and "49" in err and "[metrics.compute_metrics]" in err


def pipeline(tmp, capsys):
    g, m, out = tmp / "g.mtx", tmp / "m.csv", tmp / "l.mtx"
    run(capsys, "gen-mesh", "--dims", "24x24", "--out", g)
    run(capsys, "gen-measurements", "--graph", g, "--m", 30, "--noise", 0.1, "--seed", 4, "--out", m)
    assert run(capsys, "learn-sfsgl", "--measurements", m, "--coarsest", 100, "--out", out)[0] == 0
    assert run(capsys, "metrics", "--reference", g, "--learned", out, "--out", tmp / "metrics.json")[0] == 0
    assert run(capsys, "layout", "--graph", out, "--out", tmp / "layout.csv")[0] == 0
    return [(tmp / name).read_bytes() for name in ("m.csv", "l.mtx", "metrics.json", "layout.csv")]


def test_pipeline_is_deterministic(tmp_path, capsys):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    assert pipeline(tmp_path / "a", capsys) == pipeline(tmp_path / "b", capsys)


def test_errors_name_the_operation(tmp_path, capsys):
    (tmp_path / "bad.mtx").write_text("not a matrix\n")
    code, _, err = run(capsys, "layout", "--graph", tmp_path / "bad.mtx")
    assert code == 2 and err.startswith("gridlearn layout: error [io.read_graph]")
    code, _, err = run(capsys, "gen-mesh", "--kind", "grid2d")
    assert code == 2 and "--dims" in err


def test_config_precedence(tmp_path, capsys):
    cfg = {"common": {"seed": 3}, "gen-mesh": {"dims": "5x5"}, "gen-measurements": {"m": 7}}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    opts = resolve("gen-measurements", {"graph": "g.mtx", "m": None, "seed": 9}, cfg)
    assert opts["m"] == 7 and opts["seed"] == 9 and opts["noise"] == 0.0
    assert resolve("gen-measurements", {"graph": "g.mtx"}, cfg)["seed"] == 3
    g = tmp_path / "g.mtx"
    assert run(capsys, "--config", tmp_path / "c.json", "gen-mesh", "--out", g)[0] == 0
    assert read_graph(g).node_count == 25
    assert run(capsys, "--config", tmp_path / "c.json", "gen-mesh", "--dims", "3x3", "--out", g)[0] == 0
    assert read_graph(g).node_count == 9
    with pytest.raises(GridLearnError, match="unknown option"):
        resolve("gen-mesh", {}, {"gen-mesh": {"dims": "2x2", "colour": 1}})


def test_verify_command(tmp_path, capsys):
    from gridlearn.io import write_problem
    from gridlearn.meshes import gen_mesh
    from gridlearn.verify import synthetic_problem

    write_problem(tmp_path / "p.json", synthetic_problem(gen_mesh("grid2d", (12, 12)), seed=1), "grid.mtx")
    code, stdout, _ = run(capsys, "verify", "--problem", tmp_path / "p.json", "--out", tmp_path / "w.csv")
    assert code == 0 and stdout.startswith("verified 100 nodes")
    rows = (tmp_path / "w.csv").read_text().splitlines()
    assert rows[0] == "node,worst_value" and len(rows) == 101
    assert read_json(tmp_path / "w.json")["queries"] == 100


def test_thread_cap_from_environment(tmp_path):
    env = dict(os.environ, RESNET_THREADS="1")
    cmd = [sys.executable, "-m", "gridlearn", "gen-mesh", "--dims", "4x4", "--out", str(tmp_path / "g.mtx")]
    done = subprocess.run(cmd, env=env, capture_output=True, text=True)
    assert done.returncode == 0, done.stderr
    env["RESNET_THREADS"] = "many"
    done = subprocess.run(cmd, env=env, capture_output=True, text=True)
    assert done.returncode == 2 and "RESNET_THREADS" in done.stderr
