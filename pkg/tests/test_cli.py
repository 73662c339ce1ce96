import csv
import json
import subprocess
import sys

import pytest

from missmass.cli import main
from missmass.config import ConfigError, load_pac_config, load_pac_config_file, parse_grid, shipped_config

GOOD_CFG = """[distribution]
family = zipf
alpha = 0.5

[experiment]
estimator = good_turing
eps = 0.5
n_grid = 2^6, 2^7
reps = 100
seed = 3
"""


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_parse_grid():
    assert parse_grid("2^10, 2^11 4096") == [1024, 2048, 4096]


def test_load_config():
    cfg = load_pac_config(GOOD_CFG)
    assert cfg.n_grid == [64, 128] and cfg.reps == 100 and cfg.delta == 0.1 and cfg.seed == 3


@pytest.mark.parametrize(
    "text,line",
    [
        (GOOD_CFG.replace("reps = 100", "reps = 10"), 9),
        (GOOD_CFG.replace("alpha = 0.5", "alpha = 2"), 3),
        (GOOD_CFG.replace("eps = 0.5", "eps = lots"), 7),
        ("family = zipf\n", 1),
        (GOOD_CFG.replace("n_grid = 2^6, 2^7", "n_grid = 2^7, 2^6"), 8),
    ],
)
def test_config_errors_carry_line(text, line):
    with pytest.raises(ConfigError) as exc:
        load_pac_config(text, "x.cfg")
    assert exc.value.line == line
    assert f"x.cfg:{line}" in str(exc.value)


@pytest.mark.parametrize("name", ["geometric_goodturing.cfg", "zipf_goodturing.cfg", "geometric_plugin.cfg"])
def test_shipped_configs_load(name):
    assert shipped_config(name) is not None
    cfg = load_pac_config_file(name)
    assert cfg.reps >= 100 and cfg.n_grid[-1] == 2 ** 16


def test_sample_counts(tmp_path, capsys):
    code, out, _ = run(["sample", "--family", "geometric", "--alpha", "0.5", "--n", "1000", "--seed", "7"], capsys)
    assert code == 0
    rows = list(csv.DictReader(out.splitlines()))
    assert sum(int(r["count"]) for r in rows) == 1000


def test_sample_dithered(capsys):
    code, out, _ = run(["sample", "--family", "dithered", "--beta", "0.25", "--m", "1", "--theta", "+-+", "--n", "13"],
                       capsys)
    assert code == 0 and out.startswith("symbol,count")


def test_usage_errors(capsys):
    assert run(["sample", "--family", "geometric", "--n", "10"], capsys)[0] == 2
    assert run(["sample", "--family", "dithered", "--beta", "0.25", "--m", "1", "--theta", "x", "--n", "3"], capsys)[0] == 2
    with pytest.raises(SystemExit) as exc:
        main(["sample", "--family", "poisson", "--n", "3"])
    assert exc.value.code == 2


def test_manifest_and_byte_identical(tmp_path, capsys):
    argv = ["sample", "--family", "zipf", "--alpha", "0.5", "--n", "5000", "--seed", "11"]
    assert main(argv + ["--out", str(tmp_path / "a")]) == 0
    assert main(argv + ["--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    man = json.loads((tmp_path / "a.manifest.json").read_text())
    assert man["command"] == "sample" and man["seed"] == 11
    assert man["params"]["family"] == "zipf" and man["outputs"] == [str(tmp_path / "a.csv")]
    assert "version" in man and "wall_clock_s" in man


def test_seed_env(monkeypatch, capsys):
    argv = ["sample", "--family", "geometric", "--alpha", "0.5", "--n", "200"]
    monkeypatch.setenv("MISSMASS_SEED", "42")
    a = run(argv, capsys)[1]
    assert a == run(argv + ["--seed", "42"], capsys)[1]
    monkeypatch.setenv("MISSMASS_SEED", "nope")
    assert run(argv, capsys)[0] == 2


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_estimate_empirical_zero(tmp_path):
    code = main(["estimate", "--family", "zipf", "--alpha", "0.5", "--estimator", "empirical", "--n", "100",
                 "--reps", "5", "--out", str(tmp_path / "e")])
    assert code == 0
    rows = read_rows(tmp_path / "e.csv")
    assert len(rows) == 5 and all(float(r["ratio"]) == 0.0 for r in rows)


def test_estimate_plugin_concentrates(tmp_path):
    code = main(["estimate", "--family", "geometric", "--alpha", "0.5", "--estimator", "geometric_plugin",
                 "--n", "10000", "--reps", "50", "--out", str(tmp_path / "e")])
    ratios = sorted(float(r["ratio"]) for r in read_rows(tmp_path / "e.csv"))
    assert code == 0 and 0.7 < ratios[25] < 1.3


def test_estimate_identity_check(tmp_path):
    assert main(["estimate", "--family", "geometric", "--alpha", "0.5", "--estimator", "good_turing", "--n", "13",
                 "--reps", "2000", "--check-identity", "--out", str(tmp_path / "e")]) == 0
    report = json.loads((tmp_path / "e.json").read_text())
    assert abs(report["identity"]["z"]) < 4


def test_certify_exit_codes(tmp_path, capsys):
    code, out, _ = run(["certify", "--out", str(tmp_path / "c")], capsys)
    assert code == 0 and "PASS" in out
    assert json.loads((tmp_path / "c.json").read_text())["pass"] is True
    assert run(["certify", "--threshold", "1e-2"], capsys)[0] == 1
    assert run(["certify", "--C", "1"], capsys)[0] == 1


def test_coupling_demo(tmp_path, capsys):
    assert main(["coupling-demo", "--k", "1", "--reps", "200000", "--seed", "2", "--out", str(tmp_path / "d")]) == 0
    rep = json.loads((tmp_path / "d.json").read_text())
    assert rep["pivotal"] > 0 and list(rep["ratios"]) == ["1.4"] and rep["marginals_identical"]
    code, out, _ = run(["coupling-demo", "--k", "1", "--reps", "0"], capsys)
    assert code == 0 and json.loads(out)["pivotal"] == 0


def test_pac_curve_bad_config(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text(GOOD_CFG.replace("reps = 100", "reps = ten"))
    code, _, err = run(["pac-curve", str(bad)], capsys)
    assert code == 2 and "bad.cfg:9" in err


def test_pac_curve_small(tmp_path, capsys):
    cfg = tmp_path / "z.cfg"
    cfg.write_text(GOOD_CFG)
    assert main(["pac-curve", str(cfg), "--out", str(tmp_path / "z"), "--threads", "1"]) == 0
    payload = json.loads((tmp_path / "z.json").read_text())
    assert payload["verdict"] in ("consistent-with-PAC", "inconsistent", "inconclusive")
    assert len(payload["rows"]) == 2


@pytest.mark.slow
def test_shipped_curves(tmp_path):
    assert main(["pac-curve", "zipf_goodturing.cfg", "--out", str(tmp_path / "z"), "--threads", "1"]) == 0
    assert json.loads((tmp_path / "z.json").read_text())["verdict"] == "consistent-with-PAC"
    assert main(["pac-curve", "geometric_goodturing.cfg", "--out", str(tmp_path / "g"), "--threads", "1"]) == 0
    rows = json.loads((tmp_path / "g.json").read_text())["rows"]
    assert max(r["failure_freq"] for r in rows) > 0.2


def test_singletons(capsys):
    code, out, _ = run(["singletons", "--family", "zipf", "--alpha", "0.5", "--n-grid", "1,2^10"], capsys)
    rows = list(csv.DictReader(out.splitlines()))
    assert code == 0 and float(rows[0]["expected_singletons"]) == pytest.approx(1.0, abs=1e-9)


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "missmass", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "certify" in res.stdout
