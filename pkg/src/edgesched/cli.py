"""Command-line front end for the experiment harness.

    edgesched run --scenario semantic --policies e3,oracle --out results/

Flags override a JSON config file field-by-field.  Exit code 0 on success,
nonzero with a one-line reason otherwise.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .harness import (
    POLICY_NAMES,
    SCENARIOS,
    ExperimentConfig,
    ExperimentError,
    run_experiment,
)
from .metacontrol import AdapterConfig
from .profiles import ProfileError
from .sim.truth import PlanError, plan_from_dicts


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edgesched")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment preset")
    run.add_argument("--config", type=Path, help="JSON config file; flags override it")
    run.add_argument("--scenario", choices=SCENARIOS)
    run.add_argument("--warmup", type=int, help="warmup budget W (warmup scenario)")
    run.add_argument(
        "--policies", help=f"comma-separated subset of {','.join(POLICY_NAMES)}"
    )
    run.add_argument("--profiles", type=Path, help="device profile JSONL path")
    run.add_argument("--out", type=Path, help="output directory for report artifacts")
    run.add_argument("--horizon", type=int)
    run.add_argument("--lambda", dest="lam", type=float, help="arrival rate, tasks/s")
    run.add_argument("--seed", type=int, help="reserved; the default stream is deterministic")
    run.add_argument("--jitter", type=float, help="service jitter amplitude override")
    run.add_argument(
        "--explore-weight", type=float, help="initial exploration bonus weight, ms"
    )
    run.add_argument("--risk-penalty", type=float, help="initial risk penalty, ms")
    run.add_argument("--trace-decisions", action="store_true")
    run.add_argument("--adapter-url", help="external controller endpoint URL")
    run.add_argument("--adapter-model", help="external controller model name")
    run.add_argument(
        "--adapter-key-env",
        default=None,
        help="environment variable holding the adapter API key",
    )
    run.add_argument("--adapter-timeout", type=float, default=None)
    run.add_argument("-v", "--verbose", action="store_true")
    return parser


def _load_config_file(path: Path) -> dict:
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ExperimentError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise ExperimentError(f"config {path} must hold a JSON object")
    return payload


def _merge(args: argparse.Namespace) -> ExperimentConfig:
    file_cfg = _load_config_file(args.config) if args.config else {}

    def pick(flag_value, key, default=None):
        if flag_value is not None:
            return flag_value
        return file_cfg.get(key, default)

    scenario = pick(args.scenario, "scenario")
    if scenario is None:
        raise ExperimentError("a scenario is required (--scenario or config file)")

    policies = pick(args.policies, "policies", ",".join(POLICY_NAMES))
    if isinstance(policies, str):
        policies = tuple(p.strip() for p in policies.split(",") if p.strip())
    else:
        policies = tuple(policies)

    plan = None
    if "plan" in file_cfg:
        plan = plan_from_dicts(file_cfg["plan"])

    adapter = None
    adapter_cfg = file_cfg.get("adapter", {})
    url = args.adapter_url or adapter_cfg.get("url")
    if url:
        adapter = AdapterConfig(
            enabled=True,
            url=url,
            model=args.adapter_model or adapter_cfg.get("model", ""),
            api_key_env=args.adapter_key_env
            or adapter_cfg.get("api_key_env", AdapterConfig.api_key_env),
            timeout_s=args.adapter_timeout or adapter_cfg.get("timeout_s", 10.0),
        )

    return ExperimentConfig(
        scenario=scenario,
        warmup_budget=int(pick(args.warmup, "warmup", 0)),
        horizon=int(pick(args.horizon, "horizon", 300)),
        lam=float(pick(args.lam, "lambda", 0.5)),
        policies=policies,
        profiles_path=pick(args.profiles, "profiles"),
        out_dir=pick(args.out, "out"),
        seed=int(pick(args.seed, "seed", 0)),
        prior_error=_parse_prior_error(file_cfg.get("prior_error")),
        service_jitter=pick(args.jitter, "service_jitter"),
        plan=plan,
        adapter=adapter,
        explore_weight_ms=pick(args.explore_weight, "explore_weight_ms"),
        risk_penalty_ms=pick(args.risk_penalty, "risk_penalty_ms"),
        trace_decisions=bool(args.trace_decisions or file_cfg.get("trace_decisions", False)),
    )


def _parse_prior_error(raw: dict | None) -> dict | None:
    if raw is None:
        return None
    parsed = {}
    for key, value in raw.items():
        parsed[int(key)] = tuple(value) if isinstance(value, list) else value
    return parsed


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = _merge(args)
        result = run_experiment(config)
    except (ExperimentError, ProfileError, PlanError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for name, pm in sorted(result.report.policies.items()):
        print(
            f"{name:16s} avg_latency={pm.avg_latency_ms:10.2f} ms  "
            f"vs_oracle={pm.vs_oracle_pct:+8.2f}%  stutter={pm.stutter_rate:6.2%}  "
            f"llm_calls={pm.llm_calls:3d}  tool_calls={pm.tool_calls:3d}"
        )
    if config.out_dir is not None:
        print(f"artifacts written to {config.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
