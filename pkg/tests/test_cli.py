import csv
import json

import numpy as np
import pytest

from sampdesign.cli import ExperimentConfig, design_seed, main, run_experiment


@pytest.fixture
def frame_files(tmp_path):
    r = np.random.default_rng(0)
    path = tmp_path / "frame.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "x", "y", "size", "yval", "stratum"])
        for k in range(12):
            w.writerow([f"u{k}", k % 4, k // 4, round(float(r.uniform(1, 5)), 3), 2.0 * k + 1, "ab"[k % 2]])
    schema = tmp_path / "schema.json"
    schema.write_text(json.dumps({"id": "id", "aux": ["size"], "coords": ["x", "y"], "stratum": "stratum"}))
    return str(path), str(schema), tmp_path


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_sample_then_estimate(frame_files, capsys):
    frame, schema, tmp = frame_files
    base = ["--frame", frame, "--schema", schema]
    code, _, err = run(["sample", *base, "--design", "srs", "--n", "4", "--seed", "7", "--out-dir", str(tmp)], capsys)
    assert code == 0 and "selected 4 of 12" in err
    rows = read_rows(tmp / "sample.csv")
    assert len(rows) == 4 and all(float(r["pi"]) == pytest.approx(1 / 3) for r in rows)
    code, out, _ = run(["estimate", *base, "--sample", str(tmp / "sample.csv"), "--y", "yval",
                        "--design", "srs", "--n", "4"], capsys)
    assert code == 0
    assert out.startswith("total_estimate:")
    report = json.loads(out[out.index("{"):])
    expected = sum(2.0 * int(r["unit_id"][1:]) + 1 for r in rows) * 3
    assert report["estimate"] == pytest.approx(expected)
    assert report["variance_method"] == "syg" and report["variance"] >= 0


def test_sample_is_deterministic(frame_files, capsys):
    frame, schema, tmp = frame_files
    argv = ["sample", "--frame", frame, "--schema", schema, "--design", "cube", "--n", "4",
            "--aux", "one,size", "--seed", "3", "--out", "-", "--out-dir", str(tmp)]
    _, a, _ = run(argv, capsys)
    _, b, _ = run(argv, capsys)
    assert a == b and a.startswith("unit_id,index,pi")
    bal = read_rows(tmp / "balance.csv")
    assert [r["variable"] for r in bal] == ["one", "size"]


def test_estimate_without_joint_notes_missing_variance(frame_files, capsys):
    frame, schema, tmp = frame_files
    base = ["--frame", frame, "--schema", schema]
    run(["sample", *base, "--design", "grts", "--n", "4", "--out-dir", str(tmp)], capsys)
    code, out, _ = run(["estimate", *base, "--sample", str(tmp / "sample.csv"), "--y", "yval"], capsys)
    assert code == 0
    report = json.loads(out[out.index("{"):])
    assert report["variance"] is None and "joint inclusion" in report["variance_note"]
    code, _, err = run(["estimate", *base, "--sample", str(tmp / "sample.csv"), "--y", "yval",
                        "--variance", "syg"], capsys)
    assert code == 2 and "joint inclusion" in err


def test_exit_codes(frame_files, capsys):
    frame, schema, tmp = frame_files
    assert run(["sample", "--grid", "5", "--design", "srs", "--n", "30"], capsys)[0] == 2
    assert run(["sample", "--frame", str(tmp / "missing.csv"), "--design", "srs", "--n", "2"], capsys)[0] == 2
    assert run(["sample", "--design", "srs", "--n", "2"], capsys)[0] == 2
    bad = tmp / "s.csv"
    bad.write_text("unit_id,index,pi\nu1,1,0.0\n")
    code, _, err = run(["estimate", "--frame", frame, "--schema", schema, "--sample", str(bad), "--y", "yval"], capsys)
    assert code == 3 and "coverage" in err


def test_diagnose_sample_and_design(frame_files, capsys):
    frame, schema, tmp = frame_files
    base = ["--frame", frame, "--schema", schema]
    run(["sample", *base, "--design", "local_pivotal", "--n", "3", "--out-dir", str(tmp)], capsys)
    code, out, _ = run(["diagnose", *base, "--sample", str(tmp / "sample.csv"), "--design", "local_pivotal",
                        "--n", "3", "--aux", "size"], capsys)
    assert code == 0
    rep = json.loads(out)
    assert rep["sample_size"] == 3 and rep["spatial_balance_index"] >= 0 and "size" in rep["balance"]
    code, out, _ = run(["diagnose", *base, "--design", "stratified", "--n", "4", "--replications", "2000"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["max_studentized_deviation"] < 4.5 and len(rep["pi_hat"]) == 12


def test_experiment_outputs(tmp_path, capsys):
    out = tmp_path / "exp"
    code, text, _ = run(["experiment", "--side", "8", "--n", "6", "--replications", "1", "--block", "4",
                         "--designs", "srs,stratified,local_cube", "--out-dir", str(out)], capsys)
    assert code == 0
    rows = read_rows(out / "balance_table.csv")
    assert [r["design"] for r in rows] == ["srs", "stratified", "local_cube"]
    assert all(r["sd_index"] == "" and r["replications"] == "1" for r in rows)
    for d in ("srs", "stratified", "local_cube"):
        assert (out / f"sample_{d}.svg").read_text().startswith("<svg")
        assert (out / f"voronoi_{d}.svg").exists()


def test_experiment_config_and_seeds(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"side": 8, "n": 5, "bogus": 1}))
    assert run(["experiment", "--config", str(cfg), "--out-dir", str(tmp_path)], capsys)[0] == 2
    with pytest.raises(Exception):
        ExperimentConfig(designs=("nope",))
    assert design_seed(1, "srs") != design_seed(1, "grts")
    small = ExperimentConfig(side=6, n=4, replications=5, designs=("srs", "grts"))
    alone = ExperimentConfig(side=6, n=4, replications=5, designs=("grts",))
    # adding a design does not change the others' results
    assert run_experiment(small, figures=False)[1] == run_experiment(alone, figures=False)[0]
