import csv
import json

import pytest

from otreg import cli
from otreg import experiments as ex
from otreg.experiments import DEFAULTS, ExperimentConfig


# ---------------------------------------------------------------------------
# config grammar


@pytest.mark.parametrize(
    "text,value",
    [
        ("3", 3),
        ("-2.5e-3", -2.5e-3),
        ("true", True),
        ("False", False),
        ('"sin"', "sin"),
        ("'a, b'", "a, b"),
        ("0.5, 0.1,0.05", (0.5, 0.1, 0.05)),
        ("0.1,", (0.1,)),
    ],
)
def test_parse_value(text, value):
    assert cli.parse_value(text) == value


@pytest.mark.parametrize("text", ["", "sin", "1..2", "1, x"])
def test_parse_value_rejects(text):
    with pytest.raises(cli.ConfigError):
        cli.parse_value(text)


def test_parse_config_comments_and_blanks():
    text = """
    # a comment
    points = 256   # trailing comment
    profile = "sin"

    eps_ladder = 0.5, 0.1
    """
    assert cli.parse_config(text) == {"points": 256, "profile": "sin", "eps_ladder": (0.5, 0.1)}


@pytest.mark.parametrize("text", ["a = 1\na = 2", "just words", "bad-key = 1", "x y = 1"])
def test_parse_config_errors(text):
    with pytest.raises(cli.ConfigError):
        cli.parse_config(text)


def test_build_config_precedence():
    cfg = cli.build_config("caffarelli_1d", {"seed": 3, "points": 256}, seed=None, tol=0.1)
    assert cfg.seed == 3 and cfg["points"] == 256 and cfg["tol"] == 0.1
    cfg = cli.build_config("caffarelli_1d", {"seed": 3}, seed=9, eps_ladder=(0.2,))
    assert cfg.seed == 9 and cfg["eps_ladder"] == (0.2,)


def test_build_config_errors():
    with pytest.raises(cli.ConfigError):
        cli.build_config("qpl", {}, eps_ladder=(0.1,))
    with pytest.raises(cli.ConfigError):
        cli.build_config("qpl", {"seed": 1.5})
    with pytest.raises(ValueError):
        cli.build_config("qpl", {"no_such_key": 1})
    with pytest.raises(ValueError):
        cli.build_config("qpl", {"tol": -1.0})
    with pytest.raises(ValueError):
        cli.build_config("caffarelli_1d", {"eps_ladder": (0.1, -0.1)})


def test_config_digest():
    a = ExperimentConfig("qpl", {"instances": 3}, seed=1)
    b = ExperimentConfig("qpl", {"instances": 3}, seed=1, out_dir="elsewhere")
    c = ExperimentConfig("qpl", {"instances": 4}, seed=1)
    assert a.digest() == b.digest() != c.digest()
    assert a.canonical()["params"]["tol"] == DEFAULTS["qpl"]["tol"]


def test_unknown_experiment_config():
    with pytest.raises(KeyError):
        ExperimentConfig("nope")


# ---------------------------------------------------------------------------
# command line


def read_summary(path):
    with open(path / "summary.csv", newline="") as fh:
        return list(csv.reader(fh))


def test_unknown_experiment_exits_2(capsys, tmp_path):
    assert cli.main(["bogus", "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "usage:" in err and "bogus" in err
    assert cli.run("bogus") == 2


def test_show_defaults(capsys):
    assert cli.main(["caffarelli_1d", "--show-defaults"]) == 0
    out = capsys.readouterr().out
    assert "eps_ladder = 0.5,0.1,0.05" in out
    parsed = cli.parse_config(out)
    assert cli.build_config("caffarelli_1d", parsed).params == DEFAULTS["caffarelli_1d"]


def test_caffarelli_defaults_exit_0(tmp_path):
    assert cli.main(["caffarelli_1d", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    names = [c["check"] for c in rep["checks"]]
    assert names == sorted(names)
    assert rep["passed"] and rep["config_hash"] == ExperimentConfig("caffarelli_1d").digest()
    for eps in ("0.5", "0.1", "0.05"):
        for check in ("sigma_bar", "map_quotient", "map_vs_entropic_gaussian"):
            c = next(c for c in rep["checks"] if c["check"] == f"eps={eps}/{check}")
            assert isinstance(c["slack"], float) and c["pass"]
    rows = read_summary(tmp_path)
    assert rows[0] == ["check", "pass", "slack", "tolerance", "witness"]
    assert len(rows) == len(names) + 1
    assert (tmp_path / "potentials_eps0.05.json").exists()


def test_qpl_seed_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["qpl", "--seed", "7", "--out", str(a)]) == 0
    assert cli.main(["qpl", "--seed", "7", "--out", str(b)]) == 0
    assert (a / "summary.csv").read_bytes() == (b / "summary.csv").read_bytes()
    ra, rb = (json.loads((p / "report.json").read_text()) for p in (a, b))
    assert ra == rb and ra["config"]["seed"] == 7


def test_different_seed_changes_the_numbers(tmp_path):
    conf = tmp_path / "small.cfg"
    conf.write_text("instances = 4\nclassical_seeds = 3\n")
    cli.main(["qpl", "--config", str(conf), "--seed", "7", "--out", str(tmp_path / "a")])
    cli.main(["qpl", "--config", str(conf), "--seed", "8", "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "summary.csv").read_bytes() != (tmp_path / "b" / "summary.csv").read_bytes()


def test_tight_tolerance_exits_1(tmp_path):
    args = ["caffarelli_1d", "--eps-ladder", "0.5", "--tol", "1e-12", "--out", str(tmp_path)]
    assert cli.main(args) == 1
    rows = read_summary(tmp_path)
    assert any(r[1] == "0" for r in rows[1:])


def test_config_file(tmp_path):
    conf = tmp_path / "c.cfg"
    conf.write_text("seed = 5\ninstances = 4\nclassical_seeds = 3\n")
    assert cli.main(["qpl", "--config", str(conf), "--out", str(tmp_path / "o")]) == 0
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["config"]["seed"] == 5 and rep["config"]["params"]["instances"] == 4


@pytest.mark.parametrize("text", ["tol = -1", "instances = 1\ninstances = 2", "colour = 3"])
def test_bad_config_exits_2(tmp_path, text, capsys):
    conf = tmp_path / "c.cfg"
    conf.write_text(text)
    assert cli.main(["qpl", "--config", str(conf), "--out", str(tmp_path / "o")]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_missing_config_exits_2(tmp_path):
    assert cli.main(["qpl", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_bad_ladder_is_a_usage_error(tmp_path):
    with pytest.raises(SystemExit) as e:
        cli.main(["caffarelli_1d", "--eps-ladder", "a,b", "--out", str(tmp_path)])
    assert e.value.code == 2


def test_solver_error_exits_2(monkeypatch, tmp_path, capsys):
    def broken(cfg, dump):
        raise FloatingPointError("overflow in kernel")

    monkeypatch.setitem(ex.EXPERIMENTS, "growth", broken)
    assert cli.main(["growth", "--out", str(tmp_path)]) == 2
    assert "overflow" in capsys.readouterr().err


@pytest.mark.parametrize("name", sorted(DEFAULTS))
def test_every_experiment_passes_at_defaults(name, tmp_path):
    assert cli.run(name, ExperimentConfig(name, out_dir=str(tmp_path))) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["experiment"] == name and rep["checks"]
    for c in rep["checks"]:
        assert set(c) >= {"check", "pass", "slack", "witness", "tolerances"}
