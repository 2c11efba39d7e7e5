import json

import pytest

from gheat import cli
from gheat.report import read_csv


def write_config(tmp_path, **kw):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(kw))
    return p


def test_unknown_key_exits_2(tmp_path, capsys):
    cfg = write_config(tmp_path, command="fubini", volatility=3)
    assert cli.main(["--config", str(cfg)]) == 2
    assert "unknown config keys" in capsys.readouterr().err


@pytest.mark.parametrize(
    "bad",
    [
        {"sigma_lo": 2.0, "sigma_hi": 1.0},
        {"sigma_lo": "a"},
        {"M": 1},
        {"M": True},
        {"master_seed": -1},
        {"scenarios": ["const_hi", "nope"]},
        {"scenarios": []},
        {"grid": {"t_end": 1.0}},
        {"grid": {"t_end": -1.0, "x_lo": 0.0, "x_hi": 1.0, "nt": 4, "nx": 4}},
        {"command": "fubini", "preset": "polymer"},
        {"command": "launch"},
        {"quick": "yes"},
    ],
)
def test_invalid_configs(bad):
    with pytest.raises(cli.ConfigError):
        cli.ExperimentConfig.from_dict(bad)


def test_unreadable_config_exits_2(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    assert cli.main(["--config", str(p)]) == 2
    assert cli.main(["--config", str(tmp_path / "missing.json")]) == 2


def test_config_round_trip():
    cfg = cli.ExperimentConfig.from_dict({"command": "anderson", "sigma_lo": 0.25, "scenarios": ["const_lo"], "M": 10})
    assert cli.ExperimentConfig.from_dict(cfg.to_dict()) == cfg


def test_gnormal_oracle_classical(tmp_path):
    out = tmp_path / "o"
    cfg = write_config(tmp_path, command="gnormal-oracle", sigma_lo=1.0, sigma_hi=1.0, output_dir=str(out))
    assert cli.main(["--config", str(cfg), "--quick"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    sq = next(r for r in summary["oracle"] if r["payoff"] == "x^2")
    assert abs(sq["value"] - 1.0) <= 1e-3
    assert summary["config"]["sigma_lo"] == 1.0
    assert {r["payoff"] for r in read_csv(out / "oracle.csv")} >= {"x^2", "cos", "|x|"}


def test_fubini_zero_preset(tmp_path):
    out = tmp_path / "z"
    cfg = write_config(tmp_path, command="fubini", preset="zero", output_dir=str(out))
    assert cli.main(["--config", str(cfg), "--quick"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["checks"][0]["details"]["max_diff"] == 0.0
    assert summary["criteria"] == {"5": True}


def test_run_is_byte_reproducible(tmp_path):
    dirs = [tmp_path / "a", tmp_path / "b"]
    for d in dirs:
        assert cli.main(["verify-kernels", "--seed", "5", "--out", str(d)]) == 0
    for name in ("lemma_checks.csv", "kernels.csv"):
        assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes()
    summary = json.loads((dirs[0] / "summary.json").read_text())
    assert summary["seeds"] == {"master_seed": 5}
    assert set(summary["versions"]) == {"gheat", "numpy", "scipy", "python"}


def test_banner_for_heat_medium(tmp_path, capsys):
    out = tmp_path / "h"
    cfg = write_config(tmp_path, command="solve-nonlinear", preset="heat-medium", output_dir=str(out), M=4)
    assert cli.main(["--config", str(cfg)]) == 0
    assert "Neumann" in capsys.readouterr().err
    assert json.loads((out / "summary.json").read_text())["banners"]


def test_threads_from_environment(monkeypatch):
    monkeypatch.setenv("GHEAT_THREADS", "3")
    assert cli._threads(None) == 3
    assert cli._threads(2) == 2
    monkeypatch.setenv("GHEAT_THREADS", "many")
    with pytest.raises(cli.ConfigError):
        cli._threads(None)
    monkeypatch.delenv("GHEAT_THREADS")
    assert cli._threads(None) == 1


def test_failed_check_exits_1(tmp_path, monkeypatch, capsys):
    from gheat.suite import CheckResult

    monkeypatch.setitem(cli.CHECKS, "fubini", lambda opts: CheckResult("fubini", False, {}, {}))
    assert cli.main(["fubini", "--out", str(tmp_path)]) == 1
    assert "failed checks: fubini" in capsys.readouterr().err
