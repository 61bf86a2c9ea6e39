import json
import subprocess
import sys

import numpy as np
import pytest

from gwtree import cli


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def table(text):
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    cols = lines[0].split(",")
    return cols, [ln.split(",") for ln in lines[1:]]


def test_critline(capsys):
    code, out, _ = run(["critline", "--p0", "0.4", "--p2", "0.3"], capsys)
    assert code == 0
    cols, rows = table(out)
    assert cols == ["p0", "p2", "beta_c", "b_c"]
    assert float(rows[0][2]) == pytest.approx(0.0293276, abs=1e-7)
    assert "# tool: " in out and "# config: " in out


def test_recurse_csv(capsys):
    code, out, _ = run(["recurse", "--p", "0.4,0.3,0.3", "--b", "1.2", "--x", "1", "--n", "20",
                        "--blocks", "leaves,energy"], capsys)
    assert code == 0
    cols, rows = table(out)
    assert cols[:3] == ["n", "u", "v"] and "meanN22" in cols
    assert len(rows) == 21
    # 17 significant digits round-trip the doubles
    v = float(rows[3][cols.index("u")])
    assert repr(v) == repr(float(format(v, ".17g")))


def test_recurse_log_matches_linear(capsys):
    _, lin, _ = run(["recurse", "--p", "0.4,0.3,0.3", "--b", "1.5", "--n", "10"], capsys)
    _, lg, _ = run(["recurse", "--p", "0.4,0.3,0.3", "--b", "1.5", "--n", "10", "--log"], capsys)
    c1, r1 = table(lin)
    c2, r2 = table(lg)
    i, j = c1.index("meanN"), c2.index("meanN")
    assert float(r1[-1][i]) == pytest.approx(float(r2[-1][j]), rel=1e-10)


def test_json_output_and_file(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(tmp_path))
    code, out, _ = run(["oracle", "--p", "0.4,0.3,0.3", "--b", "2", "--x", "2", "--n", "2",
                        "--format", "json", "--out", "obs.json"], capsys)
    assert code == 0 and out == ""
    doc = json.loads((tmp_path / "obs.json").read_text())
    row = dict(zip(doc["columns"], doc["rows"][0]))
    assert row["varN22"] == pytest.approx(3.7428736165627434, rel=1e-12)
    assert doc["config"]["n"] == 2


def test_config_file_and_override(tmp_path, capsys):
    cfgf = tmp_path / "c.json"
    cfgf.write_text(json.dumps({"p": [0.4, 0.3, 0.3], "b": 2, "x": 2, "n": 10}))
    code, out, _ = run(["recurse", "--config", str(cfgf), "--n", "3"], capsys)
    assert code == 0
    _, rows = table(out)
    assert len(rows) == 4
    code, out, _ = run(["recurse", "--config", str(cfgf), "--beta", "0"], capsys)
    assert code == 0 and '"beta": 0.0' in out and '"b":' not in out


@pytest.mark.parametrize("content, needle", [
    ('{"p": [0.4, 0.3, 0.3],', "line"),
    ('{"p": [0.4, 0.3, 0.3], "b": 2, "beta": 1, "n": 1}', "mutually exclusive"),
    ('{"p": [0.4, 0.3, 0.4], "n": 1}', "sum"),
    ('{"bogus": 1}', "unknown"),
])
def test_config_errors(tmp_path, capsys, content, needle):
    cfgf = tmp_path / "c.json"
    cfgf.write_text(content)
    code, _, err = run(["oracle", "--config", str(cfgf)], capsys)
    assert code == 1
    assert needle in err


def test_usage_errors(capsys):
    assert run(["recurse", "--p", "0.4,0.3,0.3", "--b", "2", "--beta", "1", "--n", "2"], capsys)[0] == 1
    assert run(["nonsense"], capsys)[0] == 1
    assert run(["recurse", "--frobnicate"], capsys)[0] == 1
    assert run(["recurse", "--p", "0.4,0.3,0.3"], capsys)[0] == 1


def test_numerical_failure_exit(capsys):
    code, _, err = run(["recurse", "--p", "0.1,0.3,0.6", "--b", "3", "--n", "100"], capsys)
    assert code == 2 and "log" in err
    code, _, _ = run(["scaling", "--p", "0.2,0.4,0.4", "--b", "1", "--nmax", "10000"], capsys)
    assert code == 2


def test_mcmc_outputs(capsys):
    argv = ["mcmc", "--p", "0.4,0.3,0.3", "--b", "2", "--x", "2", "--n", "1",
            "--steps", "2000", "--thin", "10", "--seed", "7"]
    code, out, _ = run(argv, capsys)
    assert code == 0
    cols, rows = table(out)
    assert cols == ["step", "observable", "value"]
    assert len(rows) == 4 * 200
    assert "# seed: 7" in out and "PCG64" in out
    _, out2, _ = run(argv, capsys)
    assert out2 == out
    code, js, _ = run(argv + ["--format", "json"], capsys)
    doc = json.loads(js)
    assert set(doc) >= {"estimates", "stderr", "acceptance", "seed"}


def test_oracle_suite(capsys):
    code, out, _ = run(["oracle", "--p", "0.4,0.3,0.3", "--b", "2", "--x", "2", "--n", "2",
                        "--suite", "fkg", "--trials", "30", "--seed", "1"], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["pass"] and doc["trials"] == 30 and "min_covariance" in doc


def test_scan(capsys):
    code, out, _ = run(["scan", "--p0-grid", "0.1:0.9:9", "--p2-grid", "0.1:0.9:9"], capsys)
    assert code == 0
    cols, rows = table(out)
    assert cols == ["p0", "p2", "beta_c", "b_c"] and rows
    assert "skipped" in out


def test_scaling_and_fit(tmp_path, capsys):
    f = tmp_path / "s.csv"
    code, _, _ = run(["scaling", "--p", "0.4,0.3,0.3", "--x", "1", "--nmax", "20000",
                      "--out", str(f)], capsys)
    assert code == 0
    text = f.read_text()
    assert "n,meanN,n2_times_meanN" in text and "exponent" in text
    code, out, _ = run(["fit", "--input", str(f), "--xcol", "n", "--ycol", "meanN",
                        "--model", "powerlaw"], capsys)
    assert code == 0
    cols, rows = table(out)
    assert float(rows[0][cols.index("exponent")]) == pytest.approx(-2.0, abs=0.15)


def test_rho_commands(capsys):
    code, out, _ = run(["rho", "--p1", "0.9", "--b", "1.1"], capsys)
    assert code == 0
    cols, rows = table(out)
    assert cols == ["b", "log_rho", "loglog_rho", "lower_bound", "upper_bound", "psi"]
    assert float(rows[0][2]) == pytest.approx(-30.0, abs=1.0)
    code, out, _ = run(["rho", "--p1", "0.9", "--b", "1.1", "--crossover", "--window", "50,1000",
                        "--format", "json"], capsys)
    doc = json.loads(out)
    assert doc["summary"]["gamma"] == pytest.approx(np.log(2), abs=0.01)
    code, out, _ = run(["rho", "--p1", "0.9", "--b-grid", "1.05:1.5:6"], capsys)
    assert code == 0 and "slope" in out


def test_check_battery(capsys):
    code, out, _ = run(["check"], capsys)
    assert code == 0
    assert out.count("PASS") == 4


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "gwtree", "critline", "--p0", "0.5", "--p2", "0.2",
                        "--format", "json"], capture_output=True, text=True, check=True)
    assert json.loads(r.stdout)["rows"][0][3] == pytest.approx(1.3214286, abs=1e-7)


def test_help_exit_zero(capsys):
    assert cli.main(["--help"]) == 0
