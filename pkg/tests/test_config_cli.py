import csv
import json
import subprocess
import sys
from importlib import resources

import pytest

from ccslab.cli import main
from ccslab.config import ConfigError, RunConfig, config_hash, load_config, parse_config

CONFIGS = resources.files("ccslab") / "configs"


def test_empty_config_is_default():
    assert parse_config("") == RunConfig()


def test_bundled_default_matches_library_defaults():
    assert load_config(CONFIGS / "default.ini") == RunConfig()


def test_snapshot_roundtrip():
    cfg = parse_config("[run]\nseed = 5\n[tcs]\nbandwidth = 0.75\n[roundtrip]\nstep_counts = 5, 20\n")
    assert cfg.pipeline.seed == 5 and cfg.pipeline.tcs.bandwidth == 0.75
    assert parse_config(cfg.to_text()) == cfg
    assert config_hash(parse_config(cfg.to_text())) == config_hash(cfg)


def test_hash_changes_with_content():
    assert config_hash(RunConfig()) != config_hash(parse_config("[ccs]\nlambda2 = 1.0\n"))


@pytest.mark.parametrize(
    "text,line",
    [
        ("[run]\nseed = 1\n[bogus]\nx = 1\n", 3),
        ("[run]\nseed = 1\nsed = 2\n", 3),
        ("[ccs]\nlambda2 = abc\n", 2),
        ("[run]\n\nnull_edit = maybe\n", 3),
        ("seed = 1\n", 1),
    ],
)
def test_errors_carry_line_numbers(text, line):
    with pytest.raises(ConfigError) as exc:
        parse_config(text, "x.ini")
    assert exc.value.line == line
    assert f"x.ini:{line}" in str(exc.value)


@pytest.mark.parametrize("text", ["[ccs]\nlambda2 = -1\n", "[tcs]\neta = 0\n", "[schedule]\nT = 0\n", "[prompt]\nembedder = clip\n"])
def test_range_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.ini")


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_cli_roundtrip(tmp_path, capsys):
    assert main(["roundtrip", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "roundtrip.csv")
    assert rows[0] == ["steps", "seed", "naive_mse", "exact_mse"]
    assert len(rows) == 61
    summary = _rows(tmp_path / "roundtrip_summary.csv")[1:]
    means = [float(r[1]) for r in summary]
    assert means == sorted(means, reverse=True)
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["config_hash"] == config_hash(RunConfig())
    assert "roundtrip.csv" in man["outputs"]


def test_cli_edit_and_rerun_from_snapshot(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["edit", "--out", str(a), "--seed", "3"]) == 0
    assert main(["edit", "--config", str(a / "config.ini"), "--out", str(b)]) == 0
    for name in ("frames_src.csv", "frames_ccs.csv", "frames_final.csv", "tcs_trace.csv", "report.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    report = (a / "report.txt").read_text()
    assert report.startswith("variant = full\n") and "# table: tcs_trace" in report
    assert len(_rows(a / "frames_final.csv")) == 17


def test_cli_null_edit_config(tmp_path, capsys):
    assert main(["edit", "--config", str(CONFIGS / "null_edit.ini"), "--out", str(tmp_path)]) == 0
    kv = dict(line.split(" = ") for line in (tmp_path / "report.txt").read_text().split("\n\n")[0].splitlines())
    assert float(kv["content_ccs"]) < 1e-12


def test_cli_ablate(tmp_path, capsys):
    assert main(["ablate", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "ablation.csv")
    assert [r[0] for r in rows[1:]] == ["full", "no-tcs", "no-ccs"]
    assert all(len(r) == len(rows[0]) for r in rows)
    assert main(["ablate", "--which", "no-tcs", "--out", str(tmp_path / "one")]) == 0
    assert len(_rows(tmp_path / "one" / "ablation.csv")) == 2


def test_cli_unknown_variant(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["ablate", "--which", "bogus"])
    assert exc.value.code != 0


def test_cli_missing_config(tmp_path, capsys):
    assert main(["edit", "--config", str(tmp_path / "missing.ini"), "--out", str(tmp_path)]) != 0
    assert "cannot read config" in capsys.readouterr().err


def test_cli_bad_config(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[run]\nseed = 1\nfoo = 2\n")
    assert main(["roundtrip", "--config", str(bad)]) == 2
    assert "bad.ini:3" in capsys.readouterr().err


def test_cli_bad_threads(capsys):
    assert main(["edit", "--threads", "0"]) == 2


def test_cli_accept_twice_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["accept", "--strict", "--out", str(a)]) == 0
    assert main(["accept", "--strict", "--config", str(a / "config.ini"), "--out", str(b)]) == 0
    assert (a / "acceptance.csv").read_bytes() == (b / "acceptance.csv").read_bytes()
    assert "10/10 criteria passed" in capsys.readouterr().out


def test_console_script_entry_point(tmp_path):
    out = subprocess.run(
        [sys.executable, "-m", "ccslab.cli", "ablate", "--which", "full", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert out.returncode == 0, out.stderr
