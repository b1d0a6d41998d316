import json
import math
import subprocess
import sys

import jsonschema
import pytest

import qucont.suite
from qucont.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_NUMERIC, EXIT_PASS, main
from qucont.config import (default_config, env_overrides, load_config, parse_length,
                           report_schema)
from qucont.errors import ConfigurationError, SpectralError

SMALL = {"grid": {"n": [41]}, "sampling": {"count": 8, "mode_cutoff": 6},
         "energy": {"samples": 2, "stepper_steps": 100}, "time": {"steps": 50},
         "horizon_scan": [0.1]}


def _write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def _report(out):
    return json.loads((out / "report.json").read_text())


def test_parse_length():
    assert parse_length("pi") == math.pi
    assert parse_length("2pi") == 2 * math.pi
    assert parse_length("-0.5*pi") == -0.5 * math.pi
    assert parse_length(3) == 3.0
    with pytest.raises(ConfigurationError):
        parse_length("e")


def test_default_config_is_valid():
    cfg = load_config()
    assert cfg.extents == [[0.0, math.pi]]
    assert cfg.horizon == 0.1 and cfg.seed == default_config()["sampling"]["seed"]


@pytest.mark.parametrize("bad", [
    {"time": {"horizon": -1}},
    {"time": {"steps": 0}},
    {"grid": {"n": [2]}},
    {"weight": {"form": "spline", "params": []}},
    {"grid": {"dim": 2}},
    {"grid": {"extents": [[1, 0]]}},
    {"unknown": 1},
    [1, 2],
])
def test_invalid_configs(tmp_path, bad):
    with pytest.raises(ConfigurationError):
        load_config(_write(tmp_path, bad))


def test_overrides_and_hash(tmp_path):
    a = load_config(seed=3, workers=2, out=str(tmp_path))
    b = load_config(seed=3)
    assert a.seed == 3 and a.workers == 2 and a["output"]["dir"] == str(tmp_path)
    assert a.digest() == b.digest()
    assert load_config(seed=4).digest() != b.digest()


def test_env_overrides():
    env = {"QUCONT_SEED": "11", "QUCONT_WORKERS": "2", "QUCONT_OUT": "/x"}
    assert env_overrides(env) == {"seed": 11, "workers": 2, "out": "/x"}
    with pytest.raises(ConfigurationError):
        env_overrides({"QUCONT_SEED": "abc"})


@pytest.mark.parametrize("sub", ["check-pseudoconvex", "simulate", "verify-energy",
                                 "verify-continuation", "observability-scan"])
def test_subcommands_pass(tmp_path, sub):
    out = tmp_path / "out"
    code = main([sub, "--config", _write(tmp_path, SMALL), "--out", str(out), "-q"])
    rep = _report(out)
    assert code == EXIT_PASS and rep["overall_pass"]
    jsonschema.validate(rep, report_schema())
    assert all(c["tag"] for c in rep["checks"])


def test_corrupted_config_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"time": {"horizon": ')
    assert main(["full-suite", "--config", str(path), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "configuration" and err["exit_code"] == 2
    assert (tmp_path / "o" / "error.json").exists()


def test_failed_check_exits_1(tmp_path):
    cfg = dict(SMALL, weight={"form": "scaled_sqdist", "params": [-1.0, 1.5]})
    out = tmp_path / "o"
    assert main(["check-pseudoconvex", "--config", _write(tmp_path, cfg), "--out", str(out), "-q"]) == EXIT_FAIL
    assert not _report(out)["overall_pass"]


def test_numerical_abort_exits_3(tmp_path, monkeypatch):
    def boom(op):
        raise SpectralError("eigensolver did not converge")
    monkeypatch.setattr(qucont.suite, "eigendecompose", boom)
    assert main(["simulate", "--config", _write(tmp_path, SMALL), "--out", str(tmp_path / "o")]) == EXIT_NUMERIC


def test_reproducible_modulo_timestamps(tmp_path):
    cfg = _write(tmp_path, SMALL)
    runs = []
    for k, workers in enumerate(("1", "3")):
        out = tmp_path / f"o{k}"
        assert main(["full-suite", "--config", cfg, "--out", str(out), "--workers", workers, "-q"]) == 0
        runs.append(_report(out))
    for r in runs:
        del r["meta"]["timestamps"]
    assert runs[0] == runs[1]
    assert (tmp_path / "o0" / "ratios_heat.csv").read_bytes() == (tmp_path / "o1" / "ratios_heat.csv").read_bytes()


def test_seed_changes_samples(tmp_path):
    cfg = _write(tmp_path, SMALL)
    main(["observability-scan", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "1", "-q"])
    main(["observability-scan", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "2", "-q"])
    assert (tmp_path / "a" / "ratios_heat.csv").read_text() != (tmp_path / "b" / "ratios_heat.csv").read_text()


def test_env_seed(tmp_path, monkeypatch):
    monkeypatch.setenv("QUCONT_SEED", "99")
    out = tmp_path / "o"
    main(["check-pseudoconvex", "--out", str(out), "-q"])
    assert _report(out)["meta"]["seed"] == 99


def test_field_dumps_2d(tmp_path):
    cfg = {"grid": {"dim": 2, "extents": [[0, 1], [0, 1]], "n": [9, 9]},
           "weight": {"form": "sqdist", "params": [-1.0, -1.0]},
           "metric": {"kind": "diag", "entries": [{"form": "sin", "params": [1, 0.5, 1, 0]}, 1]},
           "regions": {"interior": {"kind": "interior", "params": {"box": [[0, 0.3], [0, 1]]}}},
           "sampling": {"count": 4, "mode_cutoff": 4}, "energy": {"samples": 1},
           "time": {"horizon": 0.02, "steps": 20}, "horizon_scan": [0.02],
           "output": {"fields": True}}
    out = tmp_path / "o"
    assert main(["full-suite", "--config", _write(tmp_path, cfg), "--out", str(out), "-q"]) == 0
    for name in ("nodes.csv", "operator.csv", "spectrum.csv", "pseudoconvex.csv"):
        assert (out / name).exists()


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "qucont", "check-pseudoconvex", "--out", str(tmp_path), "-q"],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
