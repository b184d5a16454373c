import csv
import io
import json
import math
import subprocess
import sys

import pytest

from coalpoint.cli import main
from coalpoint.experiments import SummaryReport


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_simulate_csv_and_json(capsys, tmp_path):
    dump = tmp_path / "sample.csv"
    code, out, _ = run(capsys, "simulate", "--model", "yule:a=1.0", "--n", "50", "--seed", "3", "--dump", str(dump))
    assert code == 0 and "k," in out
    assert dump.read_text().startswith("index,length")
    code, out, _ = run(capsys, "simulate", "--n", "50", "--seed", "3", "--format", "json")
    doc = json.loads(out)
    assert code == 0 and doc["n"] == 50 and doc["model"] == "yule:a=1.0"
    assert sum(int(k) * v for k, v in doc["alleles"].items()) == 50
    assert sum(doc["sites"].values()) == doc["S_n"]


def test_simulate_is_seeded(capsys):
    a = run(capsys, "simulate", "--n", "40", "--seed", "8")[1]
    b = run(capsys, "simulate", "--n", "40", "--seed", "8")[1]
    assert a == b


def test_predict_rows(capsys):
    code, out, _ = run(capsys, "predict", "--model", "critical:a=1.0", "--n", "10", "--k-max", "3")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert list(rows[0]) == ["formula_id", "k", "value", "error_bound"]
    by_id = {(r["formula_id"], r["k"]): float(r["value"]) for r in rows}
    assert by_id[("sites_rate", "")] == math.inf
    assert by_id[("brownian_growth", "")] == 1.0
    assert by_id[("site_spectrum_limit_critical", "3")] == pytest.approx(1 / 3, abs=1e-15)
    assert by_id[("allele_fraction_critical", "")] == pytest.approx(math.log(2), abs=1e-15)


def test_predict_json(capsys):
    code, out, _ = run(capsys, "predict", "--n", "5", "--format", "json")
    doc = json.loads(out)
    assert code == 0 and doc[0]["formula_id"].startswith("sites_rate")


def test_experiment_writes_report(capsys, tmp_path):
    path = tmp_path / "rep.json"
    code, _, _ = run(capsys, "experiment", "spectrum", "--n", "10", "--reps", "300", "--k-max", "2",
                     "--target", "exact", "--seed", "1", "--format", "json", "--out", str(path))
    rep = SummaryReport.from_json(path.read_text())
    assert code == rep.exit_code and rep.kind == "spectrum" and rep.seed == 1


def test_exit_code_one_on_statistical_failure(capsys):
    # a zero z threshold cannot be met by any noisy estimate
    code, _, err = run(capsys, "experiment", "spectrum", "--n", "10", "--reps", "50", "--k-max", "2",
                       "--target", "exact", "--seed", "1", "--z-max", "0")
    assert code == 1 and "FAIL" in err


@pytest.mark.parametrize("argv", [
    ["simulate", "--n", "10"],  # seed missing
    ["simulate", "--n", "10", "--seed", "1", "--model", "nope:a=1"],
    ["simulate", "--n", "10,20", "--seed", "1"],
    ["simulate", "--n", "10", "--seed", "1", "--model", "bd:b=1.0,d=2.0"],
    ["experiment", "clt", "--seed", "1", "--model", "critical:a=1.0", "--n", "20", "--reps", "3"],
    ["experiment", "spectrum", "--seed", "1", "--n", "10", "--reps", "1", "--target", "exact"],
    ["experiment", "clt", "--seed", "1", "--reps", "0"],
    ["predict", "--n", "abc"],
    ["bogus"],
])
def test_exit_code_two(capsys, argv):
    assert main(argv) == 2
    capsys.readouterr()


def test_oracle_check(capsys, tmp_path):
    code, out, _ = run(capsys, "oracle-check", "--seed", "4", "--instances", "40",
                       "--repro-path", str(tmp_path / "x.json"))
    assert code == 0 and "oracle_mismatches" in out


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "coalpoint", "predict", "--n", "5", "--k-max", "1"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("formula_id,k,value,error_bound")
