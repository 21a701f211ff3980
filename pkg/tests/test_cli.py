import json

import pytest

from dfgprint.cli import derive_seed, load_config, main
from dfgprint.db import DbError, FingerprintDb
from dfgprint.graph import DataFlowGraph
from dfgprint.reports import MetricsReport, ReductionRow, render_metrics
from dfgprint.traceio import FingerprintRecord, read_fingerprint, write_fingerprint


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def fp_file(tmp_path, diamond):
    p = tmp_path / "diamond.fp"
    write_fingerprint(FingerprintRecord(diamond, "diamond", created=""), p)
    return p


def test_synth_ingest_simplify(tmp_path, capsys):
    trace, graph, fp = tmp_path / "m.trace", tmp_path / "m.graph", tmp_path / "m.fp"
    assert run(capsys, "synth", "miner-mixrounds", "-o", trace, "--rounds", 5)[0] == 0
    code, out, _ = run(capsys, "ingest", trace, "-o", graph, "--format", "json", "--dot", tmp_path / "m.dot")
    assert code == 0 and json.loads(out)["edges"] == 5 * 36
    assert (tmp_path / "m.dot").read_text().startswith("digraph")
    code, out, _ = run(capsys, "simplify", graph, "-o", fp, "--exact-p", "--format", "json")
    assert code == 0
    row = json.loads(out)[0]
    assert row["V_after"] < row["V"]
    rec = read_fingerprint(fp)
    assert rec.params["use_exact_p"] is True and rec.name == "m"


def test_exact_simplify_flag(tmp_path, capsys, fp_file):
    out = tmp_path / "x.fp"
    assert run(capsys, "simplify", fp_file, "-o", out, "--exact")[0] == 0
    assert len(read_fingerprint(out).graph) == 3


def test_db_and_score(tmp_path, capsys, fp_file):
    db = tmp_path / "db"
    assert run(capsys, "db", "add", db, fp_file)[0] == 0
    code, out, err = run(capsys, "db", "add", db, fp_file)
    assert code == 1 and "already" in err
    code, out, _ = run(capsys, "db", "list", db, "--format", "json")
    assert list(json.loads(out)) == ["diamond"]
    assert run(capsys, "db", "check", db)[1] == "ok\n"
    code, out, _ = run(capsys, "score", fp_file, "--db", db, "--format", "json")
    verdict = json.loads(out)
    assert code == 2 and verdict["max_score"] == 1.0 and verdict["verdict"] == "malicious"
    assert verdict["threshold"] == 0.65
    assert run(capsys, "db", "remove", db, "diamond")[0] == 0
    assert FingerprintDb(db).names() == []


def test_per_fingerprint_threshold(tmp_path, capsys, fp_file):
    db = tmp_path / "db"
    run(capsys, "db", "add", db, fp_file, "--threshold", "1.0", "--name", "strict")
    code, out, _ = run(capsys, "score", fp_file, "--db", db, "--format", "json")
    assert code == 2 and json.loads(out)["thresholds"] == {"strict": 1.0}


def test_score_benign_exit_code(tmp_path, capsys, fp_file):
    db = tmp_path / "db"
    run(capsys, "db", "add", db, fp_file)
    other = tmp_path / "o.fp"
    write_fingerprint(FingerprintRecord(DataFlowGraph({1: "mul", 2: "mul"}, [(1, 2)]), "o"), other)
    code, out, _ = run(capsys, "score", other, "--db", db)
    assert code == 0 and "benign" in out


def test_db_detects_tampering(tmp_path, fp_file):
    db = FingerprintDb.create(tmp_path / "db")
    db.add(read_fingerprint(fp_file))
    path = tmp_path / "db" / "diamond.fp"
    path.write_text(path.read_text() + " ")
    with pytest.raises(DbError):
        FingerprintDb(tmp_path / "db").load("diamond")
    assert FingerprintDb(tmp_path / "db").check()
    with pytest.raises(DbError):
        db.add(FingerprintRecord(read_fingerprint(fp_file).graph, "bad name"))


def test_matrix_single(capsys, fp_file):
    code, out, _ = run(capsys, "matrix", fp_file, "--format", "json")
    assert code == 0 and json.loads(out) == {"names": ["diamond"], "scores": [[1.0]]}


def _verdict(name, verdict):
    return {"sample": name, "verdict": verdict}


def test_eval_perfect_and_hand_checked(tmp_path, capsys):
    labels = tmp_path / "labels.txt"
    labels.write_text("a malicious\nb malicious\nc benign\nd benign\n")
    v = tmp_path / "v.json"
    v.write_text(json.dumps([_verdict("a", "malicious"), _verdict("b", "malicious"),
                             _verdict("c", "benign"), _verdict("d", "benign")]))
    code, out, _ = run(capsys, "eval", v, "--labels", labels, "--format", "json")
    m = json.loads(out)
    assert code == 0
    assert [m[k] for k in ("accuracy", "sensitivity", "specificity", "precision", "f1")] == [1.0] * 5
    v.write_text(json.dumps([_verdict("a", "malicious"), _verdict("b", "benign"),
                             _verdict("c", "malicious"), _verdict("d", "benign")]))
    m = json.loads(run(capsys, "eval", v, "--labels", labels, "--format", "json")[1])
    assert (m["tp"], m["fn"], m["fp"], m["tn"]) == (1, 1, 1, 1)
    assert m["accuracy"] == 0.5 and m["precision"] == 0.5 and m["f1"] == 0.5


def test_metrics_arithmetic():
    m = MetricsReport(tp=3, fp=1, tn=4, fn=2)
    assert m.accuracy == 0.7
    assert m.sensitivity == 0.6 and m.specificity == 0.8 and m.precision == 0.75
    assert m.f1 == pytest.approx(2 * 0.75 * 0.6 / 1.35)
    none = MetricsReport(tp=0, fp=0, tn=3, fn=2)
    assert none.precision is None and none.f1 is None
    assert "N/A" in render_metrics(none, "table")


def test_reduction_report(tmp_path, capsys, fp_file):
    small = tmp_path / "s.fp"
    run(capsys, "simplify", fp_file, "-o", small, "--exact-p")
    code, out, _ = run(capsys, "reduction", "--pair", fp_file, small, "--format", "json")
    row = json.loads(out)[0]
    assert row["dV"] == 1 - row["V_after"] / row["V"] == 0.25
    assert row["dE"] == 1 - 2 / 4
    assert ReductionRow("x", 0, 0, 0, 0).vertex_reduction is None


def test_quality_command(capsys):
    code, out, _ = run(capsys, "quality", "--samples", 20, "--seed", 1, "--format", "json")
    rep = json.loads(out)
    assert code == 0 and rep["samples"] == 20 and 0 <= rep["fixed_point_fraction"] <= 1


def test_config_file_and_override(tmp_path, capsys, fp_file):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# settings\nformat = json\nk = 20\nexact-p = true\n")
    assert load_config(cfg) == {"format": "json", "k": 20, "exact_p": True}
    code, out, _ = run(capsys, "matrix", fp_file, "--config", cfg)
    assert json.loads(out)["names"] == ["diamond"]
    code, out, _ = run(capsys, "matrix", fp_file, "--config", cfg, "--format", "table")
    assert out.startswith("h \\ g")
    cfg.write_text("bogus = 1\n")
    code, _, err = run(capsys, "matrix", fp_file, "--config", cfg)
    assert code == 1 and "unknown setting" in err


def test_errors_exit_1(tmp_path, capsys, fp_file):
    code, _, err = run(capsys, "score", tmp_path / "missing.fp", "--db", tmp_path)
    assert code == 1 and "error" in err
    bad = tmp_path / "bad.fp"
    bad.write_text(fp_file.read_text().replace("v1", "v7", 1))
    code, _, err = run(capsys, "matrix", bad)
    assert code == 1 and "version" in err
    code, _, err = run(capsys, "score", fp_file, "--db", tmp_path / "nodb")
    assert code == 1 and "index.json" in err


def test_derived_seeds_are_stable_and_distinct():
    assert derive_seed(1, "walk") == derive_seed(1, "walk")
    assert len({derive_seed(1, "walk"), derive_seed(1, "fragment"), derive_seed(2, "walk")}) == 3
