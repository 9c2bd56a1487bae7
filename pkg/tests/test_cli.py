import json
import pytest

from moirewkb import acceptance, cli


def run(argv, tmp_path, monkeypatch, env=None):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv(cli.OUT_ENV, raising=False)
    for k, v in (env or {}).items():
        monkeypatch.setenv(k, v)
    return cli.main(argv)


BANDS = ["bands", "--model", "harper", "--limit", "chiral", "--L", "5", "--nk", "5"]


def test_bands_outputs_and_determinism(tmp_path, monkeypatch):
    names = ("bands.csv", "bands.json", "bands.svg")
    assert run(BANDS + ["--out", "a"], tmp_path, monkeypatch) == 0
    first = [(tmp_path / "a" / n).read_bytes() for n in names]
    assert run(BANDS + ["--out", "a"], tmp_path, monkeypatch) == 0
    assert first == [(tmp_path / "a" / n).read_bytes() for n in names]
    text = (tmp_path / "a" / "bands.csv").read_text()
    assert text.startswith("# config:")
    assert "# version:" in text
    doc = json.loads((tmp_path / "a" / "bands.json").read_text())
    assert doc["config"]["L"] == "5"


def test_config_file_and_flag_override(tmp_path, monkeypatch):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"model": "harper", "limit": "chiral", "L": "7", "nk": 3, "out": "fromfile"}))
    assert run(["bands", "--config", str(cfg), "--L", "5"], tmp_path, monkeypatch) == 0
    doc = json.loads((tmp_path / "fromfile" / "bands.json").read_text())
    assert doc["config"]["L"] == "5" and doc["config"]["nk"] == 3


def test_environment_sets_output_directory(tmp_path, monkeypatch):
    assert run(BANDS, tmp_path, monkeypatch, {cli.OUT_ENV: str(tmp_path / "env")}) == 0
    assert (tmp_path / "env" / "bands.csv").exists()
    assert run(BANDS + ["--out", "flag"], tmp_path, monkeypatch, {cli.OUT_ENV: str(tmp_path / "env2")}) == 0
    assert (tmp_path / "flag" / "bands.csv").exists() and not (tmp_path / "env2").exists()


@pytest.mark.parametrize("argv", [
    ["bands", "--model", "harper", "--L", "5", "--nk", "0"],
    ["bands", "--model", "harper", "--L", "5", "--h", "1/60"],
    ["bands", "--model", "harper"],
    ["bands", "--limit", "chiral", "--w0", "0.5", "--L", "5"],
    ["bands", "--L", "1/0"],
    ["nonsense"],
])
def test_configuration_errors_exit_1(argv, tmp_path, monkeypatch):
    assert run(argv, tmp_path, monkeypatch) == 1


def test_numerical_failure_exits_2(tmp_path, monkeypatch):
    argv = ["bs", "--limit", "antichiral", "--w0", "0.7", "--L", "4", "--levels", "40", "--taus", "12"]
    assert run(argv, tmp_path, monkeypatch) == 2


def test_verify_passing_suite(tmp_path, monkeypatch):
    assert run(["verify", "--suite", "1,2", "--out", "v"], tmp_path, monkeypatch) == 0
    doc = json.loads((tmp_path / "v" / "verify.json").read_text())
    assert doc["passed"] and [c["number"] for c in doc["criteria"]] == [1, 2]


def test_verify_failing_criterion_exits_3(tmp_path, monkeypatch):
    bad = lambda: [acceptance.Check("always above bound", 2.0, 1.0)]  # noqa: E731
    monkeypatch.setitem(acceptance.CRITERIA, 99, ("failing stand-in", bad, 1))
    assert run(["verify", "--suite", "99", "--out", "v"], tmp_path, monkeypatch) == 3
    assert run(["verify", "--suite", "100"], tmp_path, monkeypatch) == 1


def test_wells_and_contour(tmp_path, monkeypatch):
    assert run(["wells", "--model", "harper", "--w1", "1", "--out", "w"], tmp_path, monkeypatch) == 0
    doc = json.loads((tmp_path / "w" / "wells.json").read_text())
    assert doc["closed_curves"] == 1
    assert run(["contour", "--model", "harper", "--w1", "0.4", "--grid", "64", "--out", "c"],
               tmp_path, monkeypatch) == 0
    assert json.loads((tmp_path / "c" / "contour.json").read_text())["closed_curves"] == 2


def test_wkb_command(tmp_path, monkeypatch):
    assert run(["wkb", "--model", "lowenergy", "--n", "0", "--order", "1", "--out", "k"], tmp_path, monkeypatch) == 0
    doc = json.loads((tmp_path / "k" / "wkb.json").read_text())
    assert doc["residual_slope"] >= doc["residual_threshold"]


def test_defaulted_coupling_is_flagged(tmp_path, monkeypatch):
    assert run(BANDS[:-2] + ["--nk", "2", "--out", "d"], tmp_path, monkeypatch) == 0
    doc = json.loads((tmp_path / "d" / "bands.json").read_text())
    assert doc["config"]["options"]["w1_defaulted"] is True


def test_fraction_parsing():
    assert str(cli.parse_fraction("61/2")) == "61/2"
    with pytest.raises(cli.ConfigError):
        cli.parse_fraction("one third")
