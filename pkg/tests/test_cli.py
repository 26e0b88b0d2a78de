import csv
import json

import numpy as np
import pytest

from odcp.cli import main, read_series_csv


def run(*argv):
    return main([str(a) for a in argv])


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def d1_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("d1")
    assert run("generate", "--preset", "d1", "--dim", 10, "--seg-len", 500, "--sym-kl", 0.5, "--seed", 1, "--output", d / "d1.csv") == 0
    assert run("detect", "--input", d / "d1.csv", "--mode", "compositional", "--alpha", 0.05, "--window", 200,
               "--batch", 50, "--subsets", 199, "--seed", 17, "--output", d / "out.jsonl") == 0
    return d


def test_generate_writes_series_and_truth(d1_files):
    x = read_series_csv(d1_files / "d1.csv")
    assert x.shape == (1000, 10)
    truth = json.loads((d1_files / "d1.truth.json").read_text())
    assert truth["change_points"] == [500]
    assert truth["spec"]["seed"] == 1
    assert len(truth["spec"]["segments"]) == 2


def test_generate_is_deterministic(d1_files, tmp_path):
    run("generate", "--preset", "d1", "--dim", 10, "--seg-len", 500, "--sym-kl", 0.5, "--seed", 1, "--output", tmp_path / "again.csv")
    assert (tmp_path / "again.csv").read_bytes() == (d1_files / "d1.csv").read_bytes()
    assert (tmp_path / "again.truth.json").read_bytes() == (d1_files / "d1.truth.json").read_bytes()


def test_detect_report_format(d1_files):
    lines = (d1_files / "out.jsonl").read_text().splitlines()
    assert lines
    for line in lines:
        rep = json.loads(line)
        assert {"global_index", "z_star", "p_value", "window_span"} <= set(rep)
        lo, hi = rep["window_span"]
        assert lo <= rep["global_index"] < hi


def test_manifest_written_and_reproducible(d1_files, tmp_path):
    man = json.loads((d1_files / "out.jsonl.manifest.json").read_text())
    assert man["seed"] == 17
    assert man["config"]["detector"]["replicates"] == 199
    assert man["config"]["detector"]["min_segment"] == 11
    assert man["version"]
    argv = man["command"][1:]
    out = tmp_path / "re.jsonl"
    argv[argv.index("--output") + 1] = str(out)
    assert main(argv) == 0
    assert out.read_text() == (d1_files / "out.jsonl").read_text()


def test_evaluate_and_sweep(d1_files, tmp_path):
    m = tmp_path / "m.csv"
    code = run("evaluate", "--detected", d1_files / "out.jsonl", "--truth", d1_files / "d1.truth.json",
               "--tolerance-pct", 4, "--sweep", 50, "--output", m)
    assert code == 0
    (row,) = _rows(m)
    assert row["tolerance_w"] == "20"
    assert float(row["recall"]) in (0.0, 1.0)
    curve = _rows(tmp_path / "m.sweep.csv")
    assert len(curve) == 51
    assert [int(r["w"]) for r in curve] == list(range(51))


def test_evaluate_empty_detections(tmp_path):
    (tmp_path / "empty.jsonl").write_text("")
    (tmp_path / "truth.json").write_text(json.dumps([300, 600]))
    m = tmp_path / "m.csv"
    assert run("evaluate", "--detected", tmp_path / "empty.jsonl", "--truth", tmp_path / "truth.json",
               "--tolerance-w", 12, "--output", m) == 0
    (row,) = _rows(m)
    assert row["precision"] == ""
    assert float(row["recall"]) == 0.0


def test_evaluate_missing_file(tmp_path, capsys):
    assert run("evaluate", "--detected", tmp_path / "nope.jsonl", "--truth", tmp_path / "t.json") == 2
    assert "not found" in capsys.readouterr().err


def test_malformed_row_names_row(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("0.2,0.3,0.5\na,b,c\n")
    assert run("detect", "--input", p) == 2
    assert "row 2" in capsys.readouterr().err


def test_ragged_row_rejected(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("p1,p2,p3\n0.2,0.3,0.5\n0.5,0.5\n")
    assert run("detect", "--input", p) == 2
    assert "row 3" in capsys.readouterr().err


def test_header_is_auto_detected(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("a,b\n0.5,0.5\n\n0.25,0.75\n")
    np.testing.assert_array_equal(read_series_csv(p), [[0.5, 0.5], [0.25, 0.75]])


def test_insufficient_data_is_runtime_failure(tmp_path, capsys):
    p = tmp_path / "short.csv"
    p.write_text("0.5,0.5\n0.4,0.6\n")
    assert run("detect", "--input", p) == 1
    assert "InsufficientDataError" in capsys.readouterr().err


def test_negative_composition_is_input_error(tmp_path):
    p = tmp_path / "neg.csv"
    p.write_text("\n".join(["-0.1,1.1"] + ["0.5,0.5"] * 30))
    assert run("detect", "--input", p) == 2


def test_bad_config_is_usage_error(d1_files):
    assert run("detect", "--input", d1_files / "d1.csv", "--window", 10) == 2


def test_unknown_preset_exits_2(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        run("generate", "--preset", "d9", "--output", tmp_path / "x.csv")
    assert exc.value.code == 2
    assert "sparse-var" in capsys.readouterr().err


def test_general_mode_maps_dimension(tmp_path):
    assert run("generate", "--preset", "g1", "--seed", 3, "--output", tmp_path / "g.csv") == 0
    assert run("detect", "--input", tmp_path / "g.csv", "--mode", "general", "--output", tmp_path / "g.jsonl") == 0
    man = json.loads((tmp_path / "g.jsonl.manifest.json").read_text())
    assert man["extra"]["dim"] == 10
    assert len(man["extra"]["standardization"]["mu"]) == 10
    reps = [json.loads(l) for l in (tmp_path / "g.jsonl").read_text().splitlines()]
    assert reps and all(len(r["left_alpha"]) == 11 for r in reps)


def test_detect_to_stdout(d1_files, capsys):
    assert run("detect", "--input", d1_files / "d1.csv", "--seed", 17) == 0
    assert capsys.readouterr().out == (d1_files / "out.jsonl").read_text()


def test_experiment_table_and_runs(tmp_path):
    out = tmp_path / "agg.csv"
    assert run("experiment", "--preset", "d1", "--runs", 1, "--seed", 100, "--output", out) == 0
    (row,) = _rows(out)
    assert set(row) >= {"type", "snr", "precision", "recall"}
    (single,) = _rows(tmp_path / "agg.runs.csv")
    assert single["seed"] == "100"
    assert row["recall"] == single["recall"]
    assert (row["precision"] or None) == (single["precision"] or None)
    again = tmp_path / "again.csv"
    run("experiment", "--preset", "d1", "--runs", 1, "--seed", 100, "--output", again)
    assert again.read_text() == out.read_text()


@pytest.mark.slow
@pytest.mark.parametrize(
    "name", ["d1", "d2", "d3", "d3-var", "d4", "d4-var", "g1", "g1-var", "sparse-mean", "sparse-var"]
)
def test_round_trip_every_preset(tmp_path, name):
    data = tmp_path / f"{name}.csv"
    assert run("generate", "--preset", name, "--seed", 4, "--output", data) == 0
    mode = "general" if name.startswith("g1") else "compositional"
    assert run("detect", "--input", data, "--mode", mode, "--seed", 4, "--output", tmp_path / "r.jsonl") == 0
    assert run("evaluate", "--detected", tmp_path / "r.jsonl", "--truth", tmp_path / f"{name}.truth.json",
               "--output", tmp_path / "m.csv") == 0
