import csv
import io
import json
import re

import numpy as np
import pytest

from multivariance import data_path
from multivariance.cli import ingest_csv, main, parse_block_spec
from multivariance.errors import InputError

BERNSTEIN = str(data_path("bernstein_10000.csv"))
INDEPENDENT = str(data_path("independent_200.csv"))


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def error_of(err):
    return json.loads(err[err.index("{"):])["error"]


@pytest.fixture
def write_csv(tmp_path):
    def write(text, name="in.csv"):
        path = tmp_path / name
        path.write_text(text)
        return str(path)

    return write


def test_block_spec_widths():
    assert parse_block_spec("0-1;2;3", 4) == [[0, 1], [2], [3]]
    sample = ingest_csv(INDEPENDENT, "0-1;2;3")
    assert sample.widths == (2, 1, 1)
    assert sample.N == 200


def test_block_spec_reorders_columns(write_csv):
    path = write_csv("1,2,3\n4,5,6\n")
    sample = ingest_csv(path, "2;0-1")
    assert sample.widths == (1, 2)
    assert np.array_equal(sample.data, [[3, 1, 2], [6, 4, 5]])


@pytest.mark.parametrize("spec", ["0-1;1", "0;;1", "0-5", "2-1", "a"])
def test_bad_block_specs(spec):
    with pytest.raises(InputError):
        parse_block_spec(spec, 3)


def test_header_is_skipped(write_csv):
    sample = ingest_csv(write_csv("x,y\n1,2\n3,4\n5,6\n"))
    assert sample.N == 3 and sample.n == 2


def test_nan_is_located(capsys, write_csv):
    path = write_csv("x,y\n1,2\n3,nan\n")
    code, out, err = run_cli(capsys, "--input", path)
    assert code == 2 and out == ""
    e = error_of(err)
    assert e["code"] == "input_error"
    assert "line 3" in e["message"] and "column 1" in e["message"]


@pytest.mark.parametrize(
    "text, needle",
    [("1,2\n3\n", "line 2"), ("", "no data rows"), ("1,2\n3,abc\n", "non-numeric")],
)
def test_malformed_input(capsys, write_csv, text, needle):
    code, out, err = run_cli(capsys, "--input", write_csv(text))
    assert code == 2 and out == ""
    assert needle in error_of(err)["message"]


def test_overlapping_blocks(capsys):
    code, _, err = run_cli(capsys, "--input", INDEPENDENT, "--blocks", "0-1;1-2;3")
    assert code == 2
    assert "disjoint" in error_of(err)["message"]


def test_missing_file(capsys, tmp_path):
    code, _, err = run_cli(capsys, "--input", str(tmp_path / "nope.csv"))
    assert code == 2
    assert error_of(err)["code"] == "input_error"


@pytest.mark.parametrize("psi", ["stable:alpha=3", "nonsense", "euclid;euclid"])
def test_invalid_psi(capsys, psi):
    code, out, err = run_cli(capsys, "--input", INDEPENDENT, "--psi", psi)
    assert code == 2 and out == ""
    assert "error" in json.loads(err[err.index("{"):])


def test_compute_bernstein_fixture(capsys):
    code, out, _ = run_cli(capsys, "--command", "compute", "--input", BERNSTEIN)
    assert code == 0
    report = json.loads(out)
    assert report["N"] == 10_000 and report["n"] == 3
    assert report["normalized_m2"] == pytest.approx(1.0, abs=0.05)


def test_conservative_test_golden(capsys):
    argv = ["--input", INDEPENDENT, "--blocks", "0-1;2;3", "--command", "test", "--method", "conservative", "--alpha", "0.05"]
    code, out, _ = run_cli(capsys, *argv)
    assert code == 0
    golden = data_path("golden_test_conservative.json").read_text()
    assert out == golden
    report = json.loads(out)
    assert report["reject"] is False


def test_permutation_test_is_reproducible(capsys):
    argv = ["--input", INDEPENDENT, "--command", "test", "--method", "permutation", "--resamples", "99", "--seed", "4"]
    first = run_cli(capsys, *argv)
    second = run_cli(capsys, *argv)
    assert first == second
    report = json.loads(first[1])
    assert report["seed"] == 4 and report["resamples"] == 99
    assert 0.01 <= report["p_value"] <= 1.0


def test_montecarlo_on_file(capsys):
    code, out, _ = run_cli(
        capsys, "--input", BERNSTEIN, "--command", "test", "--method", "montecarlo", "--resamples", "19", "--seed", "1"
    )
    assert code == 0
    report = json.loads(out)
    assert report["method"] == "MonteCarlo" and report["reject"] is True


def test_conservative_rejects_unnormalized_statistic(capsys):
    code, _, err = run_cli(capsys, "--input", INDEPENDENT, "--command", "test", "--statistic", "m")
    assert code == 2


def test_single_block_reports_zero(capsys, write_csv):
    code, out, err = run_cli(capsys, "--input", write_csv("1\n2\n4\n"))
    assert code == 0
    report = json.loads(out)
    assert report["m2"] == 0.0
    assert report["warnings"]
    assert "warning" in err


def test_floats_have_seventeen_significant_digits(capsys):
    _, out, _ = run_cli(capsys, "--input", INDEPENDENT)
    value = re.search(r'"m2": ([0-9eE.+-]+)', out).group(1)
    digits = value.split("e")[0].replace(".", "").replace("-", "").lstrip("0")
    assert len(digits) == 17


def test_csv_format(capsys):
    _, out, _ = run_cli(capsys, "--input", INDEPENDENT, "--format", "csv")
    rows = dict(csv.reader(io.StringIO(out)))
    assert float(rows["N"]) == 200


def test_output_file(capsys, tmp_path):
    target = tmp_path / "report.json"
    code, out, _ = run_cli(capsys, "--input", INDEPENDENT, "--output", str(target))
    assert code == 0 and out == ""
    assert json.loads(target.read_text())["N"] == 200


def test_power_csv(capsys):
    argv = ["--command", "power", "--generator", "sinusoidal", "--param", "1,2", "--N", "20", "--replications", "10",
            "--test", "permutation", "--resamples", "19", "--seed", "3"]
    code, out, _ = run_cli(capsys, *argv)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["param"] for r in rows] == ["1", "2"]
    assert all(r["replications"] == "10" for r in rows)
    assert run_cli(capsys, *argv)[1] == out


def test_power_invalid_combination(capsys):
    code, _, err = run_cli(capsys, "--command", "power", "--generator", "sinusoidal", "--N", "20")
    assert code == 2
    assert error_of(err)["code"] == "config_error"


def test_bernstein_command(capsys):
    code, out, _ = run_cli(capsys, "--command", "bernstein", "--N", "2000", "--seed", "5")
    assert code == 0
    report = json.loads(out)
    assert report["analytic"]["m2"] == 0.125


def test_oracle_check(capsys):
    code, out, _ = run_cli(capsys, "--command", "oracle-check", "--replications", "20", "--seed", "2")
    assert code == 0
    report = json.loads(out)
    assert report["pass"] is True
    assert all(c["pass"] for c in report["checks"].values())
