"""End-to-end command tests through click's runner.

Exit codes are contractual: 0 success, 1 failed check, 2 divergence,
3 config/IO error, 4 non-stationary landscape endpoint. Runs here use short
horizons; the long-horizon defaults are covered by the acceptance tests.
"""

import json
import subprocess

import pytest
from click.testing import CliRunner

import linflow
from linflow.cli import build_config, config_hash, main

FAST_CHECKS = '--set=checks=["gradient-oracle","aw-crosscheck"]'


@pytest.fixture()
def runner():
    return CliRunner()


def _read_json(path):
    with open(path) as fh:
        return json.load(fh)


def test_entry_point_reports_version():
    out = subprocess.run(
        ["linflow", "--version"], capture_output=True, text=True, check=True
    )
    assert linflow.__version__ in out.stdout


def test_simulate_writes_artifacts_and_manifest(runner, tmp_path):
    out = tmp_path / "run"
    result = runner.invoke(
        main,
        ["simulate", "--steps", "400", "--set", "depth_list=[2,3]", "--out", str(out)],
    )
    assert result.exit_code == 0, result.output
    manifest = _read_json(out / "manifest.json")
    assert manifest["version"] == linflow.__version__
    assert sorted(manifest["files"]) == manifest["files"]
    assert set(manifest["files"]) == {
        "config.json",
        "trajectory_N2.csv",
        "trajectory_N3.csv",
    }
    # The recorded config re-derives the recorded hash.
    cfg = build_config(_read_json(out / "config.json"))
    assert config_hash(cfg) == manifest["config_hash"]
    assert len(manifest["config_hash"]) == 64


def test_simulate_runs_are_deterministic(runner, tmp_path):
    args = ["simulate", "--steps", "300", "--set", "depth_list=[3]"]
    a = tmp_path / "a"
    b = tmp_path / "b"
    r1 = runner.invoke(main, args + ["--out", str(a)])
    # Thread cap must not affect numerics, only scheduling.
    r2 = runner.invoke(main, args + ["--out", str(b)], env={"LINFLOW_THREADS": "1"})
    assert r1.exit_code == 0 and r2.exit_code == 0
    csv_a = (a / "trajectory_N3.csv").read_bytes()
    csv_b = (b / "trajectory_N3.csv").read_bytes()
    assert csv_a == csv_b


def test_simulate_factor_flow_labels_its_csv(runner, tmp_path):
    out = tmp_path / "factor"
    result = runner.invoke(
        main,
        ["simulate", "--flow", "factor", "--steps", "200", "--set", "depth_list=[2]",
         "--out", str(out)],
    )
    assert result.exit_code == 0, result.output
    head = (out / "trajectory_N2.csv").read_text().splitlines()[1]
    assert "kind=factor" in head


def test_seed_flag_lands_in_the_recorded_config(runner, tmp_path):
    out = tmp_path / "seeded"
    result = runner.invoke(
        main,
        ["simulate", "--seed", "7", "--steps", "200", "--set", "depth_list=[2]",
         "--out", str(out)],
    )
    assert result.exit_code == 0
    assert _read_json(out / "config.json")["instance"]["seed"] == 7


def test_config_file_merges_over_defaults(runner, tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"instance": {"init_scale": 1.5}, "depth_list": [2]}))
    out = tmp_path / "merged"
    result = runner.invoke(
        main,
        ["simulate", "--config", str(cfg_path), "--steps", "200", "--out", str(out)],
    )
    assert result.exit_code == 0
    doc = _read_json(out / "config.json")
    assert doc["instance"]["init_scale"] == 1.5
    assert doc["depth_list"] == [2]
    # Untouched keys keep their defaults.
    assert doc["instance"]["d_x"] == 5


def test_reproduce_fig1_short_horizon_warns_and_draws(runner, tmp_path):
    out = tmp_path / "fig"
    result = runner.invoke(
        main,
        ["reproduce-fig1", "--steps", "200", "--set", "depth_list=[2,3]",
         "--out", str(out)],
    )
    assert result.exit_code == 0, result.output
    svg = (out / "fig1.svg").read_text()
    assert svg.lstrip().startswith("<?xml")
    # 200 steps end long before the regime switch at scale 10.
    assert "horizon ends before the fast/slow regime" in result.stderr


def test_unknown_override_key_exits_3(runner):
    result = runner.invoke(main, ["simulate", "--set", "integrator.nope=1"])
    assert result.exit_code == 3
    assert "config error" in result.stderr


def test_malformed_override_exits_3(runner):
    result = runner.invoke(main, ["simulate", "--set", "integrator.dt"])
    assert result.exit_code == 3


def test_unreadable_config_exits_3(runner, tmp_path):
    result = runner.invoke(main, ["simulate", "--config", str(tmp_path / "absent.json")])
    assert result.exit_code == 3
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    result = runner.invoke(main, ["simulate", "--config", str(bad)])
    assert result.exit_code == 3
    assert "not valid JSON" in result.stderr


def test_unknown_config_key_in_file_exits_3(runner, tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"instanse": {"seed": 1}}))
    result = runner.invoke(main, ["simulate", "--config", str(cfg_path)])
    assert result.exit_code == 3
    assert "instanse" in result.stderr


def test_bad_thread_cap_exits_3(runner, tmp_path):
    result = runner.invoke(
        main,
        ["simulate", "--steps", "100", "--set", "depth_list=[2]",
         "--out", str(tmp_path / "x")],
        env={"LINFLOW_THREADS": "many"},
    )
    assert result.exit_code == 3


def test_unwritable_output_exits_3(runner, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    result = runner.invoke(
        main,
        ["simulate", "--steps", "100", "--set", "depth_list=[2]",
         "--out", str(blocker / "sub")],
    )
    assert result.exit_code == 3
    assert "io error" in result.stderr


def test_divergent_step_size_exits_2(runner, tmp_path):
    result = runner.invoke(
        main,
        ["simulate", "--set", "integrator.dt=0.5", "--steps", "50",
         "--set", "depth_list=[3]", "--out", str(tmp_path / "d")],
    )
    assert result.exit_code == 2
    assert "divergence" in result.stderr


def test_verify_prints_a_table_and_exits_0(runner, tmp_path):
    result = runner.invoke(
        main, ["verify", FAST_CHECKS, "--out", str(tmp_path / "v")]
    )
    assert result.exit_code == 0, result.output
    lines = [ln for ln in result.output.splitlines() if ln.strip()]
    assert len(lines) == 2
    for line in lines:
        assert line.startswith(("PASS  ", "FAIL  "))
    assert any("gradient-oracle" in ln for ln in lines)


def test_verify_unknown_check_exits_3(runner):
    result = runner.invoke(main, ["verify", '--set=checks=["nope"]'])
    assert result.exit_code == 3
    assert "unknown checks" in result.stderr


def test_verify_failing_check_exits_1(runner, tmp_path):
    # Seed 7's activation drifts past the conservation tolerance at the
    # reference scale, so the balance suite rejects it.
    result = runner.invoke(
        main,
        ["verify", "--seed", "7", '--set=checks=["balance"]',
         "--out", str(tmp_path / "f")],
    )
    assert result.exit_code == 1
    assert "failed checks: balance" in result.stderr


def test_landscape_probe_only_zero_depth2_is_a_strict_saddle(runner, tmp_path):
    out = tmp_path / "saddle"
    result = runner.invoke(
        main,
        ["landscape", "--probe-only", "--init", "zero", "--set", "depth_list=[2]",
         "--out", str(out)],
    )
    assert result.exit_code == 0, result.output
    report = _read_json(out / "stationarity.json")
    assert report["classification"] == "strict-saddle"
    assert report["probe_only"] is True
    assert report["init"] == "zero"
    assert report["chain"] == [5, 5, 1]
    assert report["spurious"] is True  # stuck far above the global minimum
    assert report["loss_gap"] > report["tolerance"]


def test_landscape_probe_only_generic_start_is_not_stationary(runner, tmp_path):
    out = tmp_path / "probe"
    result = runner.invoke(
        main, ["landscape", "--probe-only", "--out", str(out)]
    )
    assert result.exit_code == 0
    report = _read_json(out / "stationarity.json")
    assert report["classification"] == "not-stationary"
    assert report["spurious"] is True


def test_landscape_short_horizon_exits_4(runner, tmp_path):
    result = runner.invoke(
        main,
        ["landscape", "--set", "integrator.steps=500", "--set", "depth_list=[2]",
         "--out", str(tmp_path / "short")],
    )
    assert result.exit_code == 4
    assert "not stationary" in result.stderr
    # The report is still written for inspection.
    assert (tmp_path / "short" / "stationarity.json").exists()


def test_landscape_converged_single_layer_exits_0(runner, tmp_path):
    out = tmp_path / "flat"
    result = runner.invoke(
        main,
        ["landscape", "--set", "depth_list=[1]",
         "--set", "integrator.method=rk4",
         "--set", "integrator.dt=1e-5",
         "--set", "integrator.steps=40000",
         "--out", str(out)],
    )
    assert result.exit_code == 0, result.output
    report = _read_json(out / "stationarity.json")
    assert report["classification"] == "sosp-candidate"
    assert report["spurious"] is False
    assert report["chain"] == [5, 1]
