from __future__ import annotations

import csv
import json

import pytest

from lagmfg.cli import build_parser, fmt, main, resolve_config
from lagmfg.config import ExperimentConfig, apply_overrides


def test_json_round_trip(tmp_path):
    cfg = ExperimentConfig(game="rotation", params={"variant": "phi2_stable"}, grid=20, tol=1e-12)
    assert ExperimentConfig.from_json(cfg.to_json()) == cfg
    cfg.save(tmp_path / "c.json")
    assert ExperimentConfig.load(tmp_path / "c.json") == cfg


def test_unknown_key_rejected():
    with pytest.raises(ValueError, match="unknown config keys"):
        ExperimentConfig.from_dict({"gmae": "two_well"})


def test_env_and_pair_overrides():
    env = {"LAGMFG_TOL": "1e-6", "LAGMFG_PARAM_T": "2.5", "OTHER": "x"}
    cfg = apply_overrides(ExperimentConfig(), ["max_iter=7", "bump.radius=0.5", "kappa=3", "initial.kind=y1"], env)
    assert cfg.tol == 1e-6 and cfg.params == {"T": 2.5, "kappa": 3}
    assert cfg.max_iter == 7 and cfg.bump["radius"] == 0.5 and cfg.initial["kind"] == "y1"
    with pytest.raises(ValueError):
        apply_overrides(ExperimentConfig(), ["novalue"], {})


def test_precedence(tmp_path, monkeypatch):
    (tmp_path / "c.json").write_text(json.dumps({"seed": 1, "tol": 1e-3, "max_iter": 9}))
    monkeypatch.setenv("LAGMFG_SEED", "2")
    monkeypatch.setenv("LAGMFG_TOL", "1e-4")
    args = build_parser().parse_args(["fixed-point", "--config", str(tmp_path / "c.json"), "--seed", "3",
                                      "--param", "tol=1e-5"])
    cfg = resolve_config(args)
    assert cfg.max_iter == 9 and cfg.seed == 3 and cfg.tol == 1e-5


def test_fmt_round_trips_floats():
    for v in (0.1, 1 / 3, 1e-300, -2.5e17):
        assert float(fmt(v)) == v


def _read_csv(path):
    lines = path.read_text().splitlines()
    body = [ln for ln in lines if not ln.startswith("#")]
    header_cfg = json.loads("\n".join(ln[2:] for ln in lines if ln.startswith("#")))
    return header_cfg, list(csv.reader(body))


def test_rotation_stable_demo_artifacts(tmp_path, capsys):
    out = tmp_path / "rot"
    code = main(["demo", "rotation_stable", "--out", str(out)])
    assert code == 3
    cfg, rows = _read_csv(out / "residuals.csv")
    assert cfg["game"] == "rotation" and cfg["out"] == str(out)
    assert rows[0][0] == "iteration" and len(rows) == 201
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"]["max_iter"] == 200
    assert json.loads(capsys.readouterr().out.strip().splitlines()[-1])["outcome"] == "max_iter"


def test_rerun_is_bit_identical(tmp_path):
    out = tmp_path / "run"
    args = ["demo", "rotation_unstable", "--out", str(out)]
    assert main(args) == 3
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    assert main(args) == 3
    assert {p.name: p.read_bytes() for p in out.iterdir()} == first


@pytest.mark.parametrize("name", ["no_solution_kernel", "terminal_constraint"])
def test_certificate_demos_exit_zero(tmp_path, name):
    assert main(["demo", name, "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "certificate.json").read_text())["passed"] is True


def test_check_derivatives_exit_zero(tmp_path):
    assert main(["check-derivatives", "--out", str(tmp_path)]) == 0


def test_bad_inputs_exit_one(tmp_path, capsys):
    (tmp_path / "bad.json").write_text(json.dumps({"nonsense": 1}))
    assert main(["fixed-point", "--config", str(tmp_path / "bad.json"), "--out", str(tmp_path)]) == 1
    assert main(["fixed-point", "--game", "nope", "--out", str(tmp_path)]) == 1
    assert main(["fixed-point", "--config", str(tmp_path / "missing.json")]) == 1
    assert "error:" in capsys.readouterr().err
