"""Slow-path, event-driven meta-control.

Triggers fire on exposed scenario annotations, residual alarms, and scheduled
warmup intervention points; repeated triggers are suppressed by signature
cooldowns and a minimum task gap for non-event invocations.  Every invocation
acts through a closed set of nine executable tools, each bounded, validated,
and recorded in an append-only audit log.  A deterministic scripted policy is
the default controller; an optional external chat-completions adapter can
drive the same tools and falls back to the scripted policy on any failure.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field

from .opm import DRIFT_WINDOW_MS, Opm
from .profiles import LLM, SDXL
from .router import (
    DEFAULT_EXPLORE_WEIGHT_MS,
    DEFAULT_RISK_PENALTY_MS,
    DEFAULT_RISK_TTL_TASKS,
    EXPLORE_RISK,
    ROUTER_CHOICES,
    SECT,
    RiskOverrideTable,
    RouterConfig,
)

logger = logging.getLogger(__name__)

TOOL_NAMES = (
    "get_system_status",
    "pull_observations",
    "compute_drift",
    "update_calibration",
    "switch_router",
    "set_router_params",
    "trigger_online_profile_update",
    "set_device_risky",
    "clear_device_risky",
)

MAX_TOOL_ROUNDS = 2
MIN_NONEVENT_GAP = 20
ANOMALY_COOLDOWN = 20
ALARM_MIN_SAMPLES = 3

REASONS = ("semantic_onset", "semantic_offset", "residual_alarm", "warmup_point", "churn_event")


def warmup_points(budget: int) -> frozenset[int]:
    """Scheduled intervention points {min(10, W), W}; empty when W == 0."""
    if budget <= 0:
        return frozenset()
    return frozenset({min(10, budget), budget})


def model_kind(model: str) -> str:
    """Map a model identifier from a tool argument onto a device kind."""
    lowered = model.lower()
    if lowered == "llm" or "llama" in lowered:
        return LLM
    if lowered == "sdxl" or "diffusion" in lowered or "sd-" in lowered:
        return SDXL
    raise ValueError(f"cannot infer task kind from model {model!r}")


@dataclass
class TriggerState:
    """Suppression bookkeeping for the event-driven controller."""

    warmup_points: frozenset[int] = frozenset()
    min_nonevent_gap: int = MIN_NONEVENT_GAP
    anomaly_cooldown: int = ANOMALY_COOLDOWN
    last_invocation_task: int = -(10**9)
    cooldowns: dict[tuple, int] = field(default_factory=dict)


@dataclass(frozen=True)
class AnnotationEvent:
    type: str
    device: int
    label: str | None = None


@dataclass(frozen=True)
class ResidualAlarm:
    device: int
    model: str
    ratio: float
    sample_count: int


@dataclass(frozen=True)
class WarmupTick:
    task_index: int


@dataclass(frozen=True)
class Invocation:
    """One meta-controller activation with a policy-visible context snapshot."""

    reason: str
    task_index: int
    device: int | None = None
    label: str | None = None
    model: str | None = None
    ratio: float | None = None
    sample_count: int | None = None
    context: dict = field(default_factory=dict)


def evaluate_triggers(event, state: TriggerState, now_task: int) -> Invocation | None:
    """Decide whether an observed event warrants a meta-control invocation.

    Semantic and churn annotations fire subject only to a per-signature
    cooldown; residual alarms additionally respect the minimum non-event gap;
    warmup points fire exactly once each.  Device departures are annotated
    but need no invocation (the feasible set and re-dispatch handle them);
    returns trigger an estimate refresh.
    """
    if isinstance(event, AnnotationEvent):
        if event.type in ("semantic_onset", "semantic_offset"):
            reason = event.type
            signature = (reason, event.device, event.label)
        elif event.type == "device_return":
            reason = "churn_event"
            signature = (reason, event.device, "return")
        else:
            return None
        if now_task < state.cooldowns.get(signature, -(10**9)):
            return None
        state.cooldowns[signature] = now_task + state.anomaly_cooldown
        state.last_invocation_task = now_task
        return Invocation(reason, now_task, device=event.device, label=event.label)

    if isinstance(event, ResidualAlarm):
        signature = ("residual_alarm", event.device, event.model)
        if now_task < state.cooldowns.get(signature, -(10**9)):
            return None
        if now_task - state.last_invocation_task < state.min_nonevent_gap:
            return None
        state.cooldowns[signature] = now_task + state.anomaly_cooldown
        state.last_invocation_task = now_task
        return Invocation(
            "residual_alarm",
            now_task,
            device=event.device,
            model=event.model,
            ratio=event.ratio,
            sample_count=event.sample_count,
        )

    if isinstance(event, WarmupTick):
        if event.task_index not in state.warmup_points:
            return None
        signature = ("warmup_point", event.task_index)
        if signature in state.cooldowns:
            return None
        state.cooldowns[signature] = 10**9
        state.last_invocation_task = now_task
        first = event.task_index == min(state.warmup_points) and len(state.warmup_points) > 1
        return Invocation(
            "warmup_point", now_task, label="first" if first else "last"
        )

    return None


@dataclass(frozen=True)
class ToolCall:
    tool: str
    arguments: dict


@dataclass(frozen=True)
class ToolResult:
    tool: str
    ok: bool
    payload: dict
    error: str | None = None


@dataclass(frozen=True)
class AuditEntry:
    """One meta-control action: what was asked, what happened, what changed."""

    task_index: int
    sim_time_ms: float
    reason: str
    tool: str
    arguments: dict
    result: dict | str
    state_delta: dict

    def to_dict(self) -> dict:
        return {
            "task_index": self.task_index,
            "sim_time_ms": self.sim_time_ms,
            "reason": self.reason,
            "tool": self.tool,
            "arguments": self.arguments,
            "result": self.result,
            "state_delta": self.state_delta,
        }


class AuditLog:
    """Append-only record of every tool execution (including rejections)."""

    def __init__(self) -> None:
        self.entries: list[AuditEntry] = []

    def append(self, entry: AuditEntry) -> None:
        self.entries.append(entry)

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(e.to_dict(), sort_keys=True) for e in self.entries)


class ToolExecutor:
    """Validates and executes tool calls against the live agent state.

    The executor can mutate only the explicit control surface: the model's
    calibration/refit entry points, the router config, and the risk mask.
    No tool can reach simulator ground truth.
    """

    def __init__(
        self,
        opm: Opm,
        config: RouterConfig,
        overrides: RiskOverrideTable,
        telemetry,
        audit: AuditLog,
    ) -> None:
        self.opm = opm
        self.config = config
        self.overrides = overrides
        self.telemetry = telemetry
        self.audit = audit
        self.tool_calls = 0
        self._reason = "unsolicited"
        self._task_index = -1
        self._rounds_used = 0

    def begin_invocation(self, invocation: Invocation) -> None:
        self._reason = invocation.reason
        self._task_index = invocation.task_index
        self._rounds_used = 0

    def execute_round(self, calls: list[ToolCall]) -> list[ToolResult]:
        """Execute one batch of calls; batches beyond the round cap are rejected."""
        if self._rounds_used >= MAX_TOOL_ROUNDS:
            results = []
            for call in calls:
                results.append(self._reject(call, "tool round cap exceeded"))
            return results
        self._rounds_used += 1
        return [self.execute_tool(call) for call in calls]

    def _now(self) -> float:
        return self.telemetry.now() if self.telemetry is not None else 0.0

    def _audit(self, call: ToolCall, result: dict | str, delta: dict) -> None:
        self.audit.append(
            AuditEntry(
                task_index=self._task_index,
                sim_time_ms=self._now(),
                reason=self._reason,
                tool=call.tool,
                arguments=dict(call.arguments),
                result=result,
                state_delta=delta,
            )
        )

    def _reject(self, call: ToolCall, message: str) -> ToolResult:
        self.tool_calls += 1
        self._audit(call, f"rejected: {message}", {})
        return ToolResult(call.tool, False, {}, message)

    def _known_devices(self) -> set[int]:
        return {device for device, _kind in self.opm.estimates}

    def execute_tool(self, call: ToolCall) -> ToolResult:
        if call.tool not in TOOL_NAMES:
            return self._reject(call, f"unknown tool {call.tool!r}")
        try:
            handler = getattr(self, f"_tool_{call.tool}")
            payload, delta = handler(**call.arguments)
        except (TypeError, ValueError, KeyError) as exc:
            return self._reject(call, str(exc))
        self.tool_calls += 1
        self._audit(call, payload, delta)
        return ToolResult(call.tool, True, payload)

    # -- sensing ---------------------------------------------------------------

    def _tool_get_system_status(self) -> tuple[dict, dict]:
        return self.telemetry.system_status(), {}

    def _tool_pull_observations(
        self, window_ms: float | None = None, limit: int = 50
    ) -> tuple[dict, dict]:
        if limit < 1:
            raise ValueError(f"limit must be >= 1, got {limit}")
        if window_ms is not None and window_ms <= 0:
            raise ValueError(f"window_ms must be > 0, got {window_ms}")
        rows = self.telemetry.observations(window_ms, limit)
        return {
            "observations": rows,
            "stutter_count": sum(r["stutter"] for r in rows),
        }, {}

    # -- diagnosis ---------------------------------------------------------------

    def _tool_compute_drift(
        self, device: int, model: str, window_ms: float = DRIFT_WINDOW_MS
    ) -> tuple[dict, dict]:
        kind = model_kind(model)
        ratio, count = self.opm.drift_ratio(device, kind, window_ms, self._now())
        return {"ratio": ratio, "sample_count": count}, {}

    # -- actuation ---------------------------------------------------------------

    def _tool_update_calibration(
        self, device: int, model: str, ratio: float
    ) -> tuple[dict, dict]:
        kind = model_kind(model)
        if not (ratio > 0) or ratio != ratio or ratio == float("inf"):
            raise ValueError(f"calibration ratio must be finite and > 0, got {ratio}")
        old, new = self.opm.apply_calibration(device, kind, ratio)
        return {"old_factor": old, "new_factor": new}, {
            "calibration_factor": {"device": device, "old": old, "new": new}
        }

    def _tool_switch_router(self, router: str) -> tuple[dict, dict]:
        if router not in ROUTER_CHOICES:
            raise ValueError(f"router must be one of {ROUTER_CHOICES}, got {router!r}")
        old = self.config.policy
        self.config.policy = router
        return {"router": router}, {"policy": {"old": old, "new": router}}

    def _tool_set_router_params(
        self,
        explore_weight_ms: float | None = None,
        risk_penalty_ms: float | None = None,
    ) -> tuple[dict, dict]:
        delta: dict = {}
        if explore_weight_ms is not None:
            if explore_weight_ms < 0:
                raise ValueError("explore_weight_ms must be >= 0")
            delta["explore_weight_ms"] = {
                "old": self.config.explore_weight_ms,
                "new": explore_weight_ms,
            }
            self.config.explore_weight_ms = explore_weight_ms
        if risk_penalty_ms is not None:
            if risk_penalty_ms < 0:
                raise ValueError("risk_penalty_ms must be >= 0")
            delta["risk_penalty_ms"] = {
                "old": self.config.risk_penalty_ms,
                "new": risk_penalty_ms,
            }
            self.config.risk_penalty_ms = risk_penalty_ms
        return self.config.to_dict(), delta

    def _tool_trigger_online_profile_update(
        self, window: int = 40, min_samples: int = 1
    ) -> tuple[dict, dict]:
        if window < 1:
            raise ValueError(f"window must be >= 1, got {window}")
        if min_samples < 1:
            raise ValueError(f"min_samples must be >= 1, got {min_samples}")
        statuses = self.opm.refit_all(min_samples, window, at_task=self._task_index)
        return {"refit": {str(d): s for d, s in statuses.items()}}, {
            "refit": {str(d): s for d, s in statuses.items()}
        }

    def _tool_set_device_risky(
        self, device: int, ttl: int = DEFAULT_RISK_TTL_TASKS
    ) -> tuple[dict, dict]:
        if device not in self._known_devices():
            raise ValueError(f"unknown device {device}")
        if ttl <= 0:
            raise ValueError(f"ttl must be > 0, got {ttl}")
        old_mask = sorted(o.device_id for o in self.overrides.active())
        self.overrides.set(device, ttl, origin=self._reason, at_task=self._task_index)
        new_mask = sorted(o.device_id for o in self.overrides.active())
        return {"device": device, "ttl": ttl}, {"risk_mask": {"old": old_mask, "new": new_mask}}

    def _tool_clear_device_risky(self, device: int) -> tuple[dict, dict]:
        if device not in self._known_devices():
            raise ValueError(f"unknown device {device}")
        old_mask = sorted(o.device_id for o in self.overrides.active())
        cleared = self.overrides.clear(device)
        new_mask = sorted(o.device_id for o in self.overrides.active())
        return {"device": device, "cleared": cleared}, {
            "risk_mask": {"old": old_mask, "new": new_mask}
        }


def scripted_policy(invocation: Invocation, executor: ToolExecutor) -> list[ToolCall]:
    """Deterministic reference controller: a fixed tool sequence per trigger."""
    made: list[ToolCall] = []

    def run(calls: list[ToolCall]) -> list[ToolResult]:
        made.extend(calls)
        return executor.execute_round(calls)

    reason = invocation.reason
    if reason == "semantic_onset":
        run(
            [
                ToolCall("get_system_status", {}),
                ToolCall(
                    "set_device_risky",
                    {"device": invocation.device, "ttl": DEFAULT_RISK_TTL_TASKS},
                ),
            ]
        )
    elif reason == "semantic_offset":
        run([ToolCall("clear_device_risky", {"device": invocation.device})])
    elif reason == "residual_alarm":
        results = run(
            [
                ToolCall(
                    "compute_drift",
                    {
                        "device": invocation.device,
                        "model": invocation.model,
                        "window_ms": DRIFT_WINDOW_MS,
                    },
                )
            ]
        )
        second: list[ToolCall] = []
        if results[0].ok:
            ratio = results[0].payload["ratio"]
            if ratio > 0 and ratio != float("inf"):
                second.append(
                    ToolCall(
                        "update_calibration",
                        {
                            "device": invocation.device,
                            "model": invocation.model,
                            "ratio": ratio,
                        },
                    )
                )
        second.append(
            ToolCall("trigger_online_profile_update", {"window": 40, "min_samples": 3})
        )
        run(second)
    elif reason == "warmup_point":
        if invocation.label == "first":
            run(
                [
                    ToolCall("switch_router", {"router": EXPLORE_RISK}),
                    ToolCall(
                        "set_router_params",
                        {
                            "explore_weight_ms": DEFAULT_EXPLORE_WEIGHT_MS,
                            "risk_penalty_ms": DEFAULT_RISK_PENALTY_MS,
                        },
                    ),
                ]
            )
        else:
            run(
                [
                    ToolCall(
                        "trigger_online_profile_update", {"window": 40, "min_samples": 1}
                    ),
                    ToolCall("switch_router", {"router": SECT}),
                ]
            )
    elif reason == "churn_event":
        run(
            [
                ToolCall("get_system_status", {}),
                ToolCall(
                    "trigger_online_profile_update", {"window": 40, "min_samples": 3}
                ),
            ]
        )
    return made


# --- optional external controller -------------------------------------------


@dataclass
class AdapterConfig:
    """External chat-completions endpoint settings; disabled by default."""

    enabled: bool = False
    url: str = ""
    model: str = ""
    api_key_env: str = "EDGESCHED_ADAPTER_API_KEY"
    timeout_s: float = 10.0


def _tool_catalog() -> list[dict]:
    descriptions = {
        "get_system_status": "Queue lengths, utilization, sim time, exposed semantic events.",
        "pull_observations": "Recent completed-task summaries and stutter count.",
        "compute_drift": "Observed-to-predicted service ratio and sample count for a device-model.",
        "update_calibration": "Apply a smoothed multiplicative calibration correction.",
        "switch_router": "Choose the fast-path scoring policy (sect or explore_risk).",
        "set_router_params": "Set exploration weight and risk penalty in milliseconds.",
        "trigger_online_profile_update": "Refit service-time estimates from recent completions.",
        "set_device_risky": "Apply a risk override with a task-count TTL.",
        "clear_device_risky": "Clear a device risk override.",
    }
    return [
        {
            "type": "function",
            "function": {
                "name": name,
                "description": descriptions[name],
                "parameters": {"type": "object"},
            },
        }
        for name in TOOL_NAMES
    ]


def _default_transport(payload: dict, config: AdapterConfig) -> dict:
    import requests

    headers = {"Content-Type": "application/json"}
    api_key = os.environ.get(config.api_key_env, "")
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    response = requests.post(
        config.url, json=payload, headers=headers, timeout=config.timeout_s
    )
    response.raise_for_status()
    return response.json()


def _parse_tool_calls(response: dict) -> list[ToolCall]:
    calls = []
    message = response["choices"][0]["message"]
    for item in message.get("tool_calls") or []:
        function = item["function"]
        arguments = function.get("arguments", {})
        if isinstance(arguments, str):
            arguments = json.loads(arguments) if arguments else {}
        calls.append(ToolCall(function["name"], arguments))
    return calls


def llm_adapter_invoke(
    invocation: Invocation,
    endpoint: AdapterConfig,
    executor: ToolExecutor,
    transport=None,
) -> list[ToolCall]:
    """Drive one invocation through an external controller endpoint.

    The exchange uses a chat-completions-style schema: message list plus tool
    catalog out, tool-call list back, at most two rounds.  Timeouts, transport
    errors, or an empty/unparseable first round fall back to the scripted
    policy; the fallback itself is audited.
    """
    transport = transport or _default_transport
    made: list[ToolCall] = []
    messages = [
        {
            "role": "system",
            "content": (
                "You manage an edge inference device pool through the provided tools. "
                "Respond only with tool calls; at most two rounds are executed."
            ),
        },
        {
            "role": "user",
            "content": json.dumps(
                {
                    "reason": invocation.reason,
                    "task_index": invocation.task_index,
                    "device": invocation.device,
                    "label": invocation.label,
                    "model": invocation.model,
                    "ratio": invocation.ratio,
                    "sample_count": invocation.sample_count,
                    "context": invocation.context,
                },
                sort_keys=True,
            ),
        },
    ]
    payload = {"model": endpoint.model, "messages": messages, "tools": _tool_catalog()}
    try:
        response = transport(payload, endpoint)
        calls = _parse_tool_calls(response)
    except Exception as exc:  # network, schema, or JSON failure
        logger.warning("adapter failed (%s); falling back to scripted policy", exc)
        executor._audit(
            ToolCall("adapter_fallback", {"error": str(exc)}),
            "adapter failure; scripted policy used",
            {},
        )
        return scripted_policy(invocation, executor)
    if not calls:
        executor._audit(
            ToolCall("adapter_fallback", {"error": "no tool calls returned"}),
            "adapter returned no tool calls; scripted policy used",
            {},
        )
        return scripted_policy(invocation, executor)

    for _round in range(MAX_TOOL_ROUNDS):
        results = executor.execute_round(calls)
        made.extend(calls)
        tool_messages = [
            {"role": "tool", "name": r.tool, "content": json.dumps(r.payload if r.ok else {"error": r.error}, sort_keys=True)}
            for r in results
        ]
        if _round + 1 >= MAX_TOOL_ROUNDS:
            break
        messages = messages + tool_messages
        payload = {"model": endpoint.model, "messages": messages, "tools": _tool_catalog()}
        try:
            response = transport(payload, endpoint)
            calls = _parse_tool_calls(response)
        except Exception as exc:
            logger.warning("adapter round 2 failed (%s); stopping after round 1", exc)
            break
        if not calls:
            break
    return made


class MetaController:
    """Event-driven controller orchestrating triggers, tools, and audit."""

    def __init__(
        self,
        opm: Opm,
        config: RouterConfig,
        overrides: RiskOverrideTable,
        warmup_budget: int = 0,
        audit: AuditLog | None = None,
        adapter: AdapterConfig | None = None,
        transport=None,
    ) -> None:
        self.opm = opm
        self.config = config
        self.overrides = overrides
        self.audit = audit or AuditLog()
        self.adapter = adapter
        self.transport = transport
        self.trigger_state = TriggerState(warmup_points(warmup_budget))
        self.executor: ToolExecutor | None = None
        self.invocations: list[Invocation] = []

    @property
    def llm_calls(self) -> int:
        return len(self.invocations)

    @property
    def tool_calls(self) -> int:
        return self.executor.tool_calls if self.executor is not None else 0

    def attach_telemetry(self, telemetry) -> None:
        self.executor = ToolExecutor(
            self.opm, self.config, self.overrides, telemetry, self.audit
        )

    def _context(self) -> dict:
        if self.executor is None or self.executor.telemetry is None:
            return {}
        return self.executor.telemetry.system_status()

    def _invoke(self, invocation: Invocation) -> None:
        if self.executor is None:
            raise RuntimeError("meta-controller has no telemetry attached")
        invocation = Invocation(
            reason=invocation.reason,
            task_index=invocation.task_index,
            device=invocation.device,
            label=invocation.label,
            model=invocation.model,
            ratio=invocation.ratio,
            sample_count=invocation.sample_count,
            context=self._context(),
        )
        self.invocations.append(invocation)
        self.executor.begin_invocation(invocation)
        if self.adapter is not None and self.adapter.enabled:
            llm_adapter_invoke(invocation, self.adapter, self.executor, self.transport)
        else:
            scripted_policy(invocation, self.executor)

    # -- engine-facing hooks -----------------------------------------------------

    def on_task_arrival(self, task_index: int, now: float) -> None:
        invocation = evaluate_triggers(
            WarmupTick(task_index), self.trigger_state, task_index
        )
        if invocation is not None:
            self._invoke(invocation)

    def on_annotation(self, annotation, now_task: int) -> None:
        invocation = evaluate_triggers(
            AnnotationEvent(annotation.type, annotation.device, annotation.label),
            self.trigger_state,
            now_task,
        )
        if invocation is not None:
            self._invoke(invocation)

    def on_feedback(self, record, now: float, now_task: int) -> None:
        ratio, count = self.opm.drift_ratio(
            record.device_id, record.kind, DRIFT_WINDOW_MS, now
        )
        if not self.opm.is_drift_alarm(ratio, count, ALARM_MIN_SAMPLES):
            return
        invocation = evaluate_triggers(
            ResidualAlarm(record.device_id, record.kind, ratio, count),
            self.trigger_state,
            now_task,
        )
        if invocation is not None:
            self._invoke(invocation)
