import json

import pytest

from cdtbound.bounds import run_pipeline
from cdtbound.cli import main
from cdtbound.instance_io import generate_instance, read_instance, read_report, write_instance, aggregate, read_summary
from cdtbound.model import CdtInstance, example1, lambda_hat
import numpy as np


@pytest.fixture
def ex1_file(tmp_path):
    p = tmp_path / "ex1.json"
    write_instance(example1(), p)
    return p


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_solve_twoopt(capsys, ex1_file):
    code, out, _ = run(capsys, "solve", ex1_file, "--bound", "twoopt")
    assert code == 0
    res = json.loads(out)
    assert set(res) == {"bound", "lb", "ub", "rel_gap", "lambda", "iterations", "time_ms", "solved"}
    assert res["solved"] is True
    assert abs(res["lb"] + 4) / 4 <= 1e-4


def test_solve_dual_matches_report(capsys, ex1_file):
    code, out, _ = run(capsys, "solve", ex1_file, "--bound", "dual")
    res = json.loads(out)
    assert code == 0 and res["solved"] is False
    assert res["lb"] == pytest.approx(-4.25, abs=1e-3)
    ref = run_pipeline(read_instance(ex1_file), ["dual"])
    assert res["lb"] == ref.reports["dual"].lb
    assert res["lambda"] == ref.reports["dual"].final_lambda
    assert res["ub"] == ref.ub


def test_solve_trace(capsys, ex1_file, tmp_path):
    trace = tmp_path / "t.csv"
    code, _, _ = run(capsys, "solve", ex1_file, "--bound", "oneopt", "--trace", trace)
    assert code == 0
    lines = trace.read_text().splitlines()
    assert lines[0] == "iter,lambda,lb,anchor1_0,anchor1_1"
    assert len(lines) >= 3


def test_solve_missing_file(capsys, tmp_path):
    code, out, err = run(capsys, "solve", tmp_path / "nope.json")
    assert code == 2 and out == "" and err


def test_solve_invalid_instance(capsys, tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"n": 2, "Q": [[1, 0], [0, 1]], "q": [0, 0], "A": [[1, 0], [0, -1]],
                             "a": [0, 0], "a0": 1}))
    code, out, _ = run(capsys, "solve", p)
    assert code == 2 and out == ""


def test_gen(capsys, tmp_path):
    code, out, _ = run(capsys, "gen", "--n", 5, "--count", 3, "--seed", 10, "--out", tmp_path / "a")
    assert code == 0
    files = sorted((tmp_path / "a").iterdir())
    assert [f.name for f in files] == ["cdt_n5_s10.json", "cdt_n5_s11.json", "cdt_n5_s12.json"]
    for f in files:
        read_instance(f)
    run(capsys, "gen", "--n", 5, "--count", 3, "--seed", 10, "--out", tmp_path / "b")
    for f in files:
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()
    code, _, _ = run(capsys, "gen", "--n", 1)
    assert code == 2


def test_check(capsys, ex1_file):
    code, out, _ = run(capsys, "check", ex1_file)
    assert code == 0
    fields = dict(line.split(None, 1) for line in out.splitlines())
    assert float(fields["ell_a"]) == 0.0 and float(fields["a0"]) == 2.0
    assert fields["verdict"] == "pass"
    assert float(fields["lambda_hat"]) == lambda_hat(example1())


def test_check_fails(capsys, tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"n": 2, "Q": [[1, 0], [0, 1]], "q": [0, 0], "A": [[1, 0], [0, -1]],
                             "a": [0, 0], "a0": 1}))
    code, _, err = run(capsys, "check", p)
    assert code == 2 and "fail" in err
    write_instance(CdtInstance(np.eye(2), np.zeros(2), np.eye(2), np.zeros(2), 1.0), p)
    txt = p.read_text().replace('"a0": 1', '"a0": -1')
    p.write_text(txt)
    code, out, _ = run(capsys, "check", p)
    assert code == 2 and "fail" in out


def test_bench(capsys, tmp_path, ex1_file):
    d = tmp_path / "one"
    d.mkdir()
    write_instance(example1(), d / "ex1.json")
    out = tmp_path / "r.csv"
    code, _, _ = run(capsys, "bench", d, "--out", out, "--jobs", 1)
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "instance,bound,lb,ub,rel_gap,lambda,iterations,time_ms,solved"
    assert len(lines) == 6


def test_bench_generated_aggregates(capsys, tmp_path):
    d = tmp_path / "gen"
    run(capsys, "gen", "--n", 3, "--count", 20, "--seed", 100, "--out", d)
    out = tmp_path / "r.csv"
    code, _, _ = run(capsys, "bench", d, "--out", out, "--jobs", 1, "--bound", "twocut", "--bound", "dual")
    assert code == 0
    recs = read_report(out)
    assert len(recs) == 40
    summary = read_summary(tmp_path / "r.summary.csv")
    # recompute by hand from the records
    for b in ("dual", "twocut"):
        rs = [r for r in recs if r.bound == b]
        pool = [r.rel_gap for r in rs if not r.solved] if b == "twocut" else [r.rel_gap for r in rs]
        avg = sum(pool) / len(pool) if pool else 0.0
        assert summary[b]["avg_gap"] == pytest.approx(avg, rel=1e-11, abs=1e-15)
        assert summary[b]["max_gap"] == max(r.rel_gap for r in rs)
        assert summary[b]["solved"] == sum(r.solved for r in rs)
    assert aggregate(recs)["dual"]["count"] == 20


def test_bench_unreadable(capsys, tmp_path):
    code, _, _ = run(capsys, "bench", tmp_path / "nope")
    assert code == 2
