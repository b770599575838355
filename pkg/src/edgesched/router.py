"""Fast-path per-task dispatch.

The adaptive policy scores each feasible device as backlog + predicted
service - exploration bonus + risk penalty and takes the argmin, with hard
avoidance of risk-flagged devices whenever a safe alternative exists.  Static
reference policies (prior-driven heuristic, round robin) and the
full-information reference policy live here too.  Every selection runs in
O(number of devices) and scores each candidate at most once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .opm import Opm
from .profiles import LLM, DevicePrior
from .sim.engine import DeviceSnapshot, ObservableState, OracleAccess
from .sim.workload import TaskSpec

SECT = "sect"
EXPLORE_RISK = "explore_risk"
ROUTER_CHOICES = (SECT, EXPLORE_RISK)

DEFAULT_EXPLORE_WEIGHT_MS = 2000.0
DEFAULT_RISK_PENALTY_MS = 60000.0
DEFAULT_RISK_TTL_TASKS = 50


@dataclass
class RouterConfig:
    """Mutable fast-path configuration (the slow path adjusts it via tools)."""

    policy: str = SECT
    explore_weight_ms: float = DEFAULT_EXPLORE_WEIGHT_MS
    risk_penalty_ms: float = DEFAULT_RISK_PENALTY_MS

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.policy not in ROUTER_CHOICES:
            raise ValueError(f"policy must be one of {ROUTER_CHOICES}, got {self.policy!r}")
        if self.explore_weight_ms < 0:
            raise ValueError("explore_weight_ms must be >= 0")
        if self.risk_penalty_ms < 0:
            raise ValueError("risk_penalty_ms must be >= 0")

    def to_dict(self) -> dict:
        return {
            "policy": self.policy,
            "explore_weight_ms": self.explore_weight_ms,
            "risk_penalty_ms": self.risk_penalty_ms,
        }


@dataclass
class RiskOverride:
    device_id: int
    ttl_tasks: int
    origin_signature: str
    set_at: int


class RiskOverrideTable:
    """Device risk flags with a task-count time-to-live.

    The TTL is decremented once per dispatched task globally (first dispatch
    of each task), not per task routed to the flagged device.
    """

    def __init__(self) -> None:
        self._overrides: dict[int, RiskOverride] = {}

    def set(self, device: int, ttl: int, origin: str, at_task: int) -> RiskOverride:
        if ttl <= 0:
            raise ValueError(f"ttl must be > 0, got {ttl}")
        override = RiskOverride(device, ttl, origin, at_task)
        self._overrides[device] = override
        return override

    def clear(self, device: int) -> bool:
        return self._overrides.pop(device, None) is not None

    def decrement(self) -> None:
        expired = []
        for device, override in self._overrides.items():
            override.ttl_tasks -= 1
            if override.ttl_tasks <= 0:
                expired.append(device)
        for device in expired:
            del self._overrides[device]

    def is_risky(self, device: int) -> bool:
        return device in self._overrides

    def active(self) -> list[RiskOverride]:
        return [self._overrides[d] for d in sorted(self._overrides)]

    def to_dict(self) -> dict:
        return {
            str(o.device_id): {"ttl_tasks": o.ttl_tasks, "set_at": o.set_at}
            for o in self.active()
        }


Predictor = Callable[[int, TaskSpec], float]


def backlog_ms(snap: DeviceSnapshot, predict: Predictor, now: float) -> float:
    """Backlog in predicted milliseconds: queued work plus in-flight remainder.

    The in-flight remainder is the prediction minus elapsed service, floored
    at zero (the observer cannot know the task is running late).
    """
    total = 0.0
    for task in snap.queued:
        total += predict(snap.device_id, task)
    if snap.in_flight is not None:
        elapsed = now - snap.in_flight.start_time
        total += max(0.0, predict(snap.device_id, snap.in_flight.task) - elapsed)
    return total


@dataclass
class PolicyVisibleState:
    """Everything the adaptive fast path may consult for one decision."""

    obs: ObservableState
    opm: Opm
    overrides: RiskOverrideTable
    config: RouterConfig

    @property
    def now(self) -> float:
        return self.obs.now

    def candidates(self, kind: str) -> list[int]:
        return self.obs.available_devices(kind)

    def backlog(self, device: int) -> float:
        return backlog_ms(self.obs.snapshot_of(device), self.opm.predict, self.now)

    def to_dict(self) -> dict:
        return {
            "observable": self.obs.to_dict(),
            "risk_overrides": self.overrides.to_dict(),
            "router_config": self.config.to_dict(),
        }


def score(device: int, task: TaskSpec, state: PolicyVisibleState) -> float:
    """Backlog + prediction - exploration bonus + risk penalty, in ms.

    Plain mode disables the exploration term; explore mode weights the
    device's epistemic uncertainty by the configured bonus.  Scores may go
    negative; only the argmin matters.
    """
    config = state.config
    q = state.backlog(device)
    t_hat = state.opm.predict(device, task)
    c = config.explore_weight_ms if config.policy == EXPLORE_RISK else 0.0
    u = state.opm.uncertainty(device, task.kind)
    m = config.risk_penalty_ms if state.overrides.is_risky(device) else 0.0
    return q + t_hat - c * u + m


def select_e3(
    task: TaskSpec, state: PolicyVisibleState, trace: list | None = None
) -> int | None:
    """Adaptive selection with hard risk avoidance and route-anyway fallback."""
    candidates = state.candidates(task.kind)
    if not candidates:
        return None
    safe = [d for d in candidates if not state.overrides.is_risky(d)]
    pool = safe if safe else candidates
    scored = [(score(d, task, state), d) for d in pool]
    best_score, best = min(scored)
    if trace is not None:
        trace.append(
            {
                "task_id": task.task_id,
                "scores": [[d, s] for s, d in scored],
                "chosen": best,
            }
        )
    return best


def prior_predictor(priors: dict[int, DevicePrior]) -> Predictor:
    """Static service-time prediction straight from offline priors."""

    def predict(device: int, task: TaskSpec) -> float:
        prior = priors[device]
        if task.kind == LLM:
            return prior.alpha0 * task.n_in + prior.beta0 * task.n_out
        return prior.gamma0

    return predict


def select_baseline(
    kind: str,
    task: TaskSpec,
    obs: ObservableState,
    priors: dict[int, DevicePrior] | None = None,
    cursors: dict[str, int] | None = None,
) -> int | None:
    """Static reference selection.

    ``fixed_heuristic`` ranks by prior-priced backlog plus prior prediction
    and never updates; ``round_robin`` cycles a persistent per-kind cursor
    over the available devices.  Neither reads learned estimates or risk
    flags.
    """
    candidates = obs.available_devices(task.kind)
    if not candidates:
        return None
    if kind == "fixed_heuristic":
        if priors is None:
            raise ValueError("fixed_heuristic needs the prior table")
        predict = prior_predictor(priors)
        scored = [
            (backlog_ms(obs.snapshot_of(d), predict, obs.now) + predict(d, task), d)
            for d in candidates
        ]
        return min(scored)[1]
    if kind == "round_robin":
        if cursors is None:
            raise ValueError("round_robin needs a cursor table")
        cursor = cursors.get(task.kind, -1)
        later = [d for d in candidates if d > cursor]
        chosen = later[0] if later else candidates[0]
        cursors[task.kind] = chosen
        return chosen
    raise ValueError(f"unknown baseline {kind!r}; valid: ['fixed_heuristic', 'round_robin']")


def select_oracle(
    task: TaskSpec, access: OracleAccess, obs: ObservableState
) -> int | None:
    """Full-information greedy choice on true backlog and true service time.

    Degraded devices are excluded whenever a stable candidate exists,
    mirroring risk avoidance with perfect knowledge.
    """
    candidates = obs.available_devices(task.kind)
    if not candidates:
        return None
    stable = [d for d in candidates if not access.is_degraded(d)]
    pool = stable if stable else candidates
    scored = [
        (access.true_backlog_ms(d, obs.now) + access.true_service(d, task, obs.now), d)
        for d in pool
    ]
    return min(scored)[1]


# --- engine-facing policy objects -------------------------------------------


class FixedHeuristicPolicy:
    """Static heuristic driven only by offline priors; never adapts."""

    name = "fixed_heuristic"

    def __init__(self, priors: list[DevicePrior]) -> None:
        self._priors = {p.device_id: p for p in priors}

    def choose(self, task: TaskSpec, obs: ObservableState) -> int | None:
        return select_baseline("fixed_heuristic", task, obs, priors=self._priors)


class RoundRobinPolicy:
    """Topology-agnostic rotation over available devices, one cursor per kind."""

    name = "round_robin"

    def __init__(self) -> None:
        self._cursors: dict[str, int] = {}

    def choose(self, task: TaskSpec, obs: ObservableState) -> int | None:
        return select_baseline("round_robin", task, obs, cursors=self._cursors)


class OraclePolicy:
    """Reference upper bound: reads current ground truth, never the future."""

    name = "oracle"
    wants_oracle_access = True

    def __init__(self) -> None:
        self._access: OracleAccess | None = None

    def attach_oracle(self, access: OracleAccess) -> None:
        self._access = access

    def choose(self, task: TaskSpec, obs: ObservableState) -> int | None:
        if self._access is None:
            raise RuntimeError("oracle policy was never attached to a run")
        return select_oracle(task, self._access, obs)


class AdaptiveAgentPolicy:
    """The closed-loop agent: learned predictions, risk gating, meta-control.

    Owns the policy-side state (model, router config, risk overrides) and
    forwards engine callbacks to the meta-controller.  During the warmup
    budget the model refits every few tasks so exploration samples become
    usable estimates quickly.
    """

    name = "e3"

    WARMUP_REFIT_EVERY = 5

    def __init__(
        self,
        opm: Opm,
        config: RouterConfig | None = None,
        warmup_budget: int = 0,
        meta=None,
        trace: list | None = None,
        overrides: RiskOverrideTable | None = None,
    ) -> None:
        self.opm = opm
        self.config = config or RouterConfig()
        self.warmup_budget = warmup_budget
        self.meta = meta
        self.trace = trace
        self.overrides = overrides if overrides is not None else RiskOverrideTable()
        self._dispatched: set[int] = set()

    def attach_telemetry(self, telemetry) -> None:
        if self.meta is not None:
            self.meta.attach_telemetry(telemetry)

    def visible_state(self, obs: ObservableState) -> PolicyVisibleState:
        return PolicyVisibleState(obs, self.opm, self.overrides, self.config)

    def choose(self, task: TaskSpec, obs: ObservableState) -> int | None:
        return select_e3(task, self.visible_state(obs), self.trace)

    def on_task_arrival(self, task_index: int, now: float) -> None:
        if (
            0 < task_index < self.warmup_budget
            and task_index % self.WARMUP_REFIT_EVERY == 0
        ):
            self.opm.refit_all(min_samples=1, at_task=task_index)
        if self.meta is not None:
            self.meta.on_task_arrival(task_index, now)

    def on_dispatch(self, task: TaskSpec, device: int, now: float) -> None:
        if task.task_id in self._dispatched:
            return
        self._dispatched.add(task.task_id)
        self.overrides.decrement()

    def on_completion(self, record, now: float, now_task: int) -> None:
        self.opm.ingest_feedback(record, now)
        if self.meta is not None:
            self.meta.on_feedback(record, now, now_task)

    def on_annotation(self, annotation, now_task: int) -> None:
        if self.meta is not None:
            self.meta.on_annotation(annotation, now_task)
