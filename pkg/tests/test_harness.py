"""Metrics pipeline, report emission, experiment wiring, CLI."""

import json
import random

import pytest

from edgesched.cli import main as cli_main
from edgesched.harness import (
    ExperimentConfig,
    ExperimentError,
    PolicyMetrics,
    compute_metrics,
    emit_report,
    run_experiment,
    smooth_ma,
)
from edgesched.profiles import LLM
from edgesched.sim.engine import ExecutionRecord


def record(task_id, latency, stutter=0, device=0):
    return ExecutionRecord(
        task_id=task_id,
        device_id=device,
        kind=LLM,
        arrival_time=0.0,
        dispatch_time=0.0,
        start_time=0.0,
        completion_time=latency,
        latency_ms=latency,
        service_ms=latency,
        n_in=256,
        n_out=32,
        stutter=stutter,
    )


# --- moving average -------------------------------------------------------------


def test_ma_constant_series_unchanged():
    assert smooth_ma([5.0] * 30) == [5.0] * 30


def test_ma_example_first_two():
    out = smooth_ma([0.0, 20.0])
    assert out[1] == 10.0


def test_ma_window_one_is_identity():
    series = [3.0, 1.0, 4.0, 1.0, 5.0]
    assert smooth_ma(series, window=1) == series


def test_ma_window_covers_last_twenty():
    series = [float(i) for i in range(40)]
    out = smooth_ma(series, window=20)
    assert out[39] == pytest.approx(sum(range(20, 40)) / 20)
    assert len(out) == len(series)


def test_ma_rejects_bad_window():
    with pytest.raises(ValueError):
        smooth_ma([1.0], window=0)


# --- metric arithmetic ------------------------------------------------------------


def test_vs_oracle_formula_simple():
    policy_records = [record(0, 100.0), record(1, 200.0)]
    oracle_records = [record(0, 80.0), record(1, 120.0)]
    metrics = compute_metrics({"x": policy_records, "oracle": oracle_records}, oracle_records)
    assert metrics["x"].avg_latency_ms == pytest.approx(150.0)
    assert metrics["x"].vs_oracle_pct == pytest.approx(50.0)
    assert metrics["oracle"].vs_oracle_pct == 0.0


def test_vs_oracle_reproduces_published_ratio():
    # avg 19475.24 over oracle 5018.93 rounds to +288.04%.
    policy_records = [record(0, 19475.24)]
    oracle_records = [record(0, 5018.93)]
    metrics = compute_metrics({"x": policy_records}, oracle_records)
    assert round(metrics["x"].vs_oracle_pct, 2) == 288.04


def test_stutter_rate_is_fraction_of_tasks():
    records = [record(0, 10.0, stutter=1), record(1, 10.0), record(2, 10.0, stutter=1), record(3, 10.0)]
    metrics = compute_metrics({"x": records}, records)
    assert metrics["x"].stutter_rate == pytest.approx(0.5)


def test_mismatched_task_coverage_is_an_error():
    with pytest.raises(ExperimentError, match="must match"):
        compute_metrics({"x": [record(0, 1.0)]}, [record(0, 1.0), record(1, 2.0)])


def test_metric_algebra_matches_independent_recomputation():
    rng = random.Random(2)
    oracle_records = [record(i, rng.uniform(50, 500)) for i in range(50)]
    policy_records = [record(i, rng.uniform(100, 2000)) for i in range(50)]
    metrics = compute_metrics({"p": policy_records}, oracle_records)
    avg = sum(r.latency_ms for r in policy_records) / 50
    oracle_avg = sum(r.latency_ms for r in oracle_records) / 50
    expected = (avg / oracle_avg - 1.0) * 100.0
    assert metrics["p"].vs_oracle_pct == pytest.approx(expected, rel=1e-9)


def test_trajectory_sampling_and_prefix():
    records = [record(i, float(i)) for i in range(30)]
    metrics = compute_metrics({"p": records}, records, prefix_end=10)
    ks = [k for k, _raw, _ma in metrics["p"].trajectory]
    assert ks == [10, 15, 20, 25]
    k, raw, ma = metrics["p"].trajectory[0]
    assert raw == 10.0
    assert ma == pytest.approx(sum(range(11)) / 11)


# --- experiment wiring --------------------------------------------------------------


def test_run_experiment_reports_requested_policies(tmp_path):
    config = ExperimentConfig(
        scenario="warmup",
        warmup_budget=0,
        horizon=20,
        policies=("e3", "oracle"),
        out_dir=tmp_path / "out",
    )
    result = run_experiment(config)
    assert set(result.report.policies) == {"e3", "oracle"}
    assert result.report.policies["oracle"].vs_oracle_pct == 0.0
    assert (tmp_path / "out" / "report.json").exists()


def test_oracle_run_implicit_when_not_requested():
    config = ExperimentConfig(scenario="warmup", horizon=10, policies=("round_robin",))
    result = run_experiment(config)
    assert set(result.report.policies) == {"round_robin"}
    assert result.report.policies["round_robin"].vs_oracle_pct != 0.0


def test_zero_horizon_empty_report(tmp_path):
    config = ExperimentConfig(scenario="warmup", horizon=0, out_dir=tmp_path / "out")
    result = run_experiment(config)
    assert result.report.policies == {}
    payload = json.loads((tmp_path / "out" / "report.json").read_text())
    assert payload["policies"] == {}
    assert not list((tmp_path / "out").glob("trajectory_*.csv"))


def test_all_policies_share_workload_and_plan(tmp_path):
    config = ExperimentConfig(scenario="churn", horizon=40)
    result = run_experiment(config)
    ids = {name: sorted(r.task_id for r in run.records) for name, run in result.runs.items()}
    reference = ids["oracle"]
    assert all(v == reference for v in ids.values())
    assert len(result.report.workload_sha256) == 64


def test_unknown_policy_and_scenario_rejected():
    with pytest.raises(ExperimentError, match="unknown policy"):
        ExperimentConfig(scenario="warmup", policies=("greedy",))
    with pytest.raises(ExperimentError, match="unknown scenario"):
        ExperimentConfig(scenario="bogus")


def test_emit_report_is_byte_stable(tmp_path):
    config = ExperimentConfig(scenario="warmup", warmup_budget=0, horizon=30)
    result = run_experiment(config)
    out = tmp_path / "out"
    emit_report(result, out)
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    emit_report(result, out)
    second = {p.name: p.read_bytes() for p in out.iterdir()}
    assert first == second
    assert "report.json" in first
    assert "events.log" in first
    assert "audit.log" in first


def test_emit_report_writes_one_trajectory_per_policy(tmp_path):
    config = ExperimentConfig(scenario="warmup", warmup_budget=0, horizon=30, out_dir=tmp_path)
    run_experiment(config)
    names = sorted(p.name for p in tmp_path.glob("trajectory_*.csv"))
    assert names == [
        "trajectory_e3.csv",
        "trajectory_fixed_heuristic.csv",
        "trajectory_oracle.csv",
        "trajectory_round_robin.csv",
    ]
    lines = (tmp_path / "trajectory_e3.csv").read_text().splitlines()
    assert lines[0] == "task_index,latency_ms,ma20_ms"
    assert lines[1].startswith("0,")


def test_semantic_audit_contains_risk_overrides(tmp_path):
    config = ExperimentConfig(scenario="semantic", horizon=300, policies=("e3",))
    result = run_experiment(config)
    risky = [e for e in result.audit.entries if e.tool == "set_device_risky"]
    assert len(risky) >= 5  # one per semantic window


def test_event_log_lines_have_expected_shape():
    config = ExperimentConfig(scenario="churn", horizon=40)
    result = run_experiment(config)
    assert result.event_log
    for line in result.event_log:
        parts = line.split()
        assert len(parts) == 5
        int(parts[0])
        float(parts[1])


# --- CLI --------------------------------------------------------------------------------


def test_cli_run_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "cli_out"
    code = cli_main(
        [
            "run",
            "--scenario",
            "warmup",
            "--warmup",
            "0",
            "--horizon",
            "20",
            "--policies",
            "e3,oracle",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    captured = capsys.readouterr()
    assert "oracle" in captured.out
    assert (out / "report.json").exists()


def test_cli_rejects_unknown_policy(tmp_path, capsys):
    code = cli_main(
        ["run", "--scenario", "warmup", "--horizon", "10", "--policies", "nope"]
    )
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_cli_config_file_with_flag_override(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(
        json.dumps(
            {
                "scenario": "warmup",
                "warmup": 0,
                "horizon": 50,
                "policies": "round_robin,oracle",
            }
        )
    )
    out = tmp_path / "out"
    code = cli_main(
        ["run", "--config", str(cfg), "--horizon", "10", "--out", str(out)]
    )
    assert code == 0
    payload = json.loads((out / "report.json").read_text())
    assert payload["horizon"] == 10  # flag overrides the config file
    assert set(payload["policies"]) == {"round_robin", "oracle"}


def test_cli_custom_plan_from_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(
        json.dumps(
            {
                "scenario": "semantic",
                "horizon": 30,
                "policies": "oracle",
                "plan": [
                    {"type": "semantic_onset", "at_task": 5, "device": 0, "label": "game", "factor": 2.0},
                    {"type": "semantic_offset", "at_task": 10, "device": 0, "label": "game"},
                ],
            }
        )
    )
    out = tmp_path / "out"
    code = cli_main(["run", "--config", str(cfg), "--out", str(out)])
    assert code == 0
    events = (out / "events.log").read_text().splitlines()
    assert any("semantic_onset" in line for line in events)
    assert len(events) == 2
