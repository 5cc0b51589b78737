import json

import pytest

from riskmespp.cli import dispatch


def run(capsys, *argv):
    code = dispatch(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_help_exits_zero(capsys):
    assert run(capsys, "--help")[0] == 0
    assert run(capsys, "plan", "--help")[0] == 0


def test_usage_errors_are_json(capsys):
    code, _, err = run(capsys, "simulate", "--team", "345")
    assert code == 1
    assert json.loads(err.strip().splitlines()[-1])["kind"] == "usage"
    assert run(capsys, "frobnicate")[0] == 1
    assert run(capsys)[0] == 1


def test_io_error_exit_two(capsys, tmp_path):
    code, _, err = run(capsys, "estimate", "--env", str(tmp_path / "none.json"), "--scores", "x.csv")
    assert code == 2
    assert json.loads(err)["kind"] == "io"


def test_validation_error_exit_one(capsys, tmp_path):
    bad = tmp_path / "env.json"
    verts = [{"id": v, "neighborhood": "a", "truth_level": 1, "scene_images": []} for v in (1, 2)]
    bad.write_text(json.dumps({"vertices": verts, "edges": [[1, 2], [2, 2]]}))
    code, _, err = run(capsys, "gen-scenario", "--env", str(bad), "--type", "NFF")
    assert code == 1
    assert "self-loop" in json.loads(err)["error"]


def test_pipeline(capsys, tmp_path):
    env, scores, est = tmp_path / "env.json", tmp_path / "s.csv", tmp_path / "est.json"
    assert run(capsys, "gen-scenario", "--env", "school", "--type", "NCF", "--seed", "2", "--out", str(env))[0] == 0
    assert run(capsys, "synth-scores", "--env", str(env), "--seed", "1", "--out", str(scores))[0] == 0
    assert run(capsys, "estimate", "--env", str(env), "--scores", str(scores), "--out", str(est))[0] == 0
    data = json.loads(est.read_text())
    assert len(data["vertices"]) == 46 and 0 < data["bc"] <= 1

    belief = tmp_path / "b.json"
    belief.write_text(json.dumps({"vertices": {"20": 0.5, "30": 0.5}}))
    lp = tmp_path / "m.lp"
    code, out, _ = run(capsys, "plan", "--env", str(env), "--belief", str(belief), "--estimates", str(est),
                       "--team", "345", "--mode", "PB", "--horizon", "6", "--lp-out", str(lp))
    assert code == 0
    plan = json.loads(out)
    assert set(plan["paths"]) == {"1", "2", "3"} and all(len(p) == 7 for p in plan["paths"].values())
    assert lp.read_text().startswith("\\")

    code, out, _ = run(capsys, "simulate", "--env", str(env), "--scores", str(scores), "--team", "345",
                       "--mode", "PT", "--tau", "20", "--seed", "3")
    assert code == 0 and json.loads(out)["outcome"] in ("success", "abort", "cutoff")

    r1, r2 = tmp_path / "r1.csv", tmp_path / "r2.csv"
    for r in (r1, r2):
        assert run(capsys, "experiment", "--env", str(env), "--scores", str(scores), "--instances", "3",
                   "--configs", "ND,PT-PU-345", "--tau", "20", "--threads", "1", "--out", str(r))[0] == 0
    assert r1.read_bytes() == r2.read_bytes()
    assert r1.read_text().splitlines()[0].startswith("label,n_instances,success")


def test_experiment_needs_scores_for_pu(capsys, tmp_path):
    code, _, err = run(capsys, "experiment", "--env", "school", "--instances", "1", "--out", str(tmp_path / "r.csv"))
    assert code == 1 and "--scores" in json.loads(err.strip().splitlines()[-1])["error"]
