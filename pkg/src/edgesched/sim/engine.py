"""Deterministic discrete-event engine with per-device FIFO single-server queues.

The engine is the only component that touches :class:`GroundTruthState`.
Policies see an :class:`ObservableState` snapshot (feasible devices, queue
contents, exposed event annotations) and receive :class:`ExecutionRecord`
feedback strictly at completion time.  Same-time events process in the fixed
order scenario-event < completion < arrival, so replays are byte-identical.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field
from collections import deque
from typing import Protocol

from ..profiles import LLM, SDXL
from .truth import (
    DeviceLeave,
    DeviceReturn,
    DriftRestore,
    DriftStep,
    GroundTruthState,
    ScenarioEvent,
    ScenarioPlan,
    SemanticOffset,
    SemanticOnset,
)
from .workload import TaskSpec

logger = logging.getLogger(__name__)

_PRIO_SCENARIO = 0
_PRIO_COMPLETION = 1
_PRIO_ARRIVAL = 2


class EngineError(RuntimeError):
    """Fatal contract violation inside a simulation run."""


@dataclass(frozen=True)
class ExecutionRecord:
    """Causal post-completion feedback for one task."""

    task_id: int
    device_id: int
    kind: str
    arrival_time: float
    dispatch_time: float
    start_time: float
    completion_time: float
    latency_ms: float
    service_ms: float
    n_in: int | None
    n_out: int | None
    stutter: int

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "device_id": self.device_id,
            "kind": self.kind,
            "arrival_time": self.arrival_time,
            "dispatch_time": self.dispatch_time,
            "start_time": self.start_time,
            "completion_time": self.completion_time,
            "latency_ms": self.latency_ms,
            "service_ms": self.service_ms,
            "n_in": self.n_in,
            "n_out": self.n_out,
            "stutter": self.stutter,
        }


@dataclass(frozen=True)
class EventAnnotation:
    """Policy-visible notice of a scenario event (never carries magnitudes)."""

    at_task: int
    time: float
    type: str
    device: int
    label: str | None = None

    def to_dict(self) -> dict:
        return {
            "at_task": self.at_task,
            "time": self.time,
            "type": self.type,
            "device": self.device,
            "label": self.label,
        }


@dataclass(frozen=True)
class InFlightView:
    """Observable slice of the task currently in service on a device."""

    task: TaskSpec
    start_time: float


@dataclass(frozen=True)
class DeviceSnapshot:
    device_id: int
    kind: str
    available: bool
    queued: tuple[TaskSpec, ...]
    in_flight: InFlightView | None

    def to_dict(self) -> dict:
        return {
            "device_id": self.device_id,
            "kind": self.kind,
            "available": self.available,
            "queued": [t.task_id for t in self.queued],
            "in_flight": None if self.in_flight is None else self.in_flight.task.task_id,
            "in_flight_start": None if self.in_flight is None else self.in_flight.start_time,
        }


@dataclass(frozen=True)
class ObservableState:
    """Everything a routing policy may legally see at a decision epoch."""

    now: float
    devices: tuple[DeviceSnapshot, ...]
    annotations: tuple[EventAnnotation, ...]

    def snapshot_of(self, device: int) -> DeviceSnapshot:
        for snap in self.devices:
            if snap.device_id == device:
                return snap
        raise KeyError(f"unknown device {device}")

    def available_devices(self, kind: str | None = None) -> list[int]:
        return [
            s.device_id
            for s in self.devices
            if s.available and (kind is None or s.kind == kind)
        ]

    def to_dict(self) -> dict:
        return {
            "now": self.now,
            "devices": [s.to_dict() for s in self.devices],
            "annotations": [a.to_dict() for a in self.annotations],
        }


class RoutingPolicy(Protocol):
    """Minimal surface the engine drives; optional callbacks default to no-ops."""

    name: str

    def choose(self, task: TaskSpec, obs: ObservableState) -> int | None: ...


class OracleAccess:
    """Ground-truth window handed only to the full-information reference policy."""

    def __init__(self, engine: "Engine") -> None:
        self._engine = engine

    def true_service(self, device: int, task: TaskSpec, now: float) -> float:
        return self._engine.truth.true_service_time(device, task, now)

    def true_backlog_ms(self, device: int, now: float) -> float:
        return self._engine.true_backlog_ms(device, now)

    def is_degraded(self, device: int) -> bool:
        return bool(self._engine.truth.stutter_indicator(device, now=0.0))


@dataclass
class _QueueEntry:
    task: TaskSpec
    dispatch_time: float
    stutter: int


@dataclass
class _InFlight:
    entry: _QueueEntry
    start_time: float
    completion_time: float


@dataclass
class _DeviceRuntime:
    device_id: int
    kind: str
    queue: deque = field(default_factory=deque)
    in_flight: _InFlight | None = None
    busy_ms: float = 0.0


@dataclass
class SimulationResult:
    records: list[ExecutionRecord]
    event_log: list[str]
    annotations: list[EventAnnotation]


class Telemetry:
    """Policy-visible status/observation facade (no ground-truth access)."""

    def __init__(self, engine: "Engine") -> None:
        self._engine = engine

    def now(self) -> float:
        return self._engine.now

    def system_status(self) -> dict:
        return self._engine.status_snapshot()

    def observations(self, window_ms: float | None = None, limit: int | None = None) -> list[dict]:
        return self._engine.observation_log(window_ms, limit)


class Engine:
    """One simulation run: plan + workload + routing policy."""

    def __init__(
        self,
        truth: GroundTruthState,
        plan: ScenarioPlan,
        workload: list[TaskSpec],
        policy,
        hooks: "object | None" = None,
        leak_check: bool = False,
    ) -> None:
        self.truth = truth
        self.plan = plan
        self.workload = workload
        self.policy = policy
        self.hooks = hooks
        self.leak_check = leak_check
        self.now = 0.0
        self.devices = {
            device_id: _DeviceRuntime(device_id, truth.kind_of(device_id))
            for device_id in truth.device_ids()
        }
        self.records: list[ExecutionRecord] = []
        self.annotations: list[EventAnnotation] = []
        self.event_log: list[str] = []
        self._observations: list[dict] = []
        self._pending: list[TaskSpec] = []
        self._heap: list[tuple[float, int, int, object]] = []
        self._seq = 0
        self._arrived_tasks = 0
        if getattr(policy, "wants_oracle_access", False):
            policy.attach_oracle(OracleAccess(self))
        if hasattr(policy, "attach_telemetry"):
            policy.attach_telemetry(Telemetry(self))

    # -- scheduling helpers --------------------------------------------------

    def _push(self, time: float, priority: int, payload: object) -> None:
        heapq.heappush(self._heap, (time, priority, self._seq, payload))
        self._seq += 1

    def _interarrival(self) -> float:
        if len(self.workload) >= 2:
            return self.workload[1].arrival_time - self.workload[0].arrival_time
        return 2000.0

    # -- policy-visible views ------------------------------------------------

    def observable_state(self) -> ObservableState:
        snaps = []
        for device_id in sorted(self.devices):
            dev = self.devices[device_id]
            in_flight = None
            if dev.in_flight is not None:
                in_flight = InFlightView(dev.in_flight.entry.task, dev.in_flight.start_time)
            snaps.append(
                DeviceSnapshot(
                    device_id=device_id,
                    kind=dev.kind,
                    available=self.truth.is_available(device_id),
                    queued=tuple(e.task for e in dev.queue),
                    in_flight=in_flight,
                )
            )
        obs = ObservableState(self.now, tuple(snaps), tuple(self.annotations))
        if self.leak_check:
            assert_no_ground_truth(obs.to_dict())
        return obs

    def status_snapshot(self) -> dict:
        per_device = {}
        for device_id in sorted(self.devices):
            dev = self.devices[device_id]
            busy = dev.busy_ms
            if dev.in_flight is not None:
                busy += self.now - dev.in_flight.start_time
            per_device[str(device_id)] = {
                "kind": dev.kind,
                "available": self.truth.is_available(device_id),
                "queue_len": len(dev.queue) + (1 if dev.in_flight is not None else 0),
                "utilization": busy / self.now if self.now > 0 else 0.0,
            }
        active = {}
        for ann in self.annotations:
            if ann.type == "semantic_onset":
                active[ann.device] = ann.label
            elif ann.type == "semantic_offset":
                active.pop(ann.device, None)
        return {
            "sim_time_ms": self.now,
            "devices": per_device,
            "active_semantic_events": {str(d): label for d, label in sorted(active.items())},
        }

    def observation_log(self, window_ms: float | None = None, limit: int | None = None) -> list[dict]:
        rows = self._observations
        if window_ms is not None:
            cutoff = self.now - window_ms
            rows = [r for r in rows if r["completion_time"] >= cutoff]
        if limit is not None:
            rows = rows[-limit:]
        return [dict(r) for r in rows]

    def true_backlog_ms(self, device: int, now: float) -> float:
        """Oracle-only: exact remaining work queued on a device."""
        dev = self.devices[device]
        backlog = 0.0
        if dev.in_flight is not None:
            backlog += dev.in_flight.completion_time - now
        for entry in dev.queue:
            backlog += self.truth.true_service_time(device, entry.task, now)
        return backlog

    # -- event handlers --------------------------------------------------------

    def _log_event(self, at_task: int, type_name: str, device: int, label: str | None) -> None:
        self.event_log.append(
            f"{at_task} {self.now:.0f} {type_name} {device} {label if label is not None else '-'}"
        )

    def _annotate(self, at_task: int, type_name: str, device: int, label: str | None) -> None:
        ann = EventAnnotation(at_task, self.now, type_name, device, label)
        self.annotations.append(ann)
        if hasattr(self.policy, "on_annotation"):
            self.policy.on_annotation(ann, at_task)
        if self.hooks is not None and hasattr(self.hooks, "on_event"):
            self.hooks.on_event(ann)

    def _apply_scenario(self, event: ScenarioEvent) -> None:
        self.truth.apply_event(event)
        if isinstance(event, SemanticOnset):
            self._log_event(event.at_task, "semantic_onset", event.device, event.label)
            self._annotate(event.at_task, "semantic_onset", event.device, event.label)
        elif isinstance(event, SemanticOffset):
            self._log_event(event.at_task, "semantic_offset", event.device, event.label)
            self._annotate(event.at_task, "semantic_offset", event.device, event.label)
        elif isinstance(event, DeviceLeave):
            self._log_event(event.at_task, "device_leave", event.device, None)
            self._annotate(event.at_task, "device_leave", event.device, None)
            self._redispatch_queue(event.device)
        elif isinstance(event, DeviceReturn):
            self._log_event(event.at_task, "device_return", event.device, None)
            self._annotate(event.at_task, "device_return", event.device, None)
            self._flush_pending()
        elif isinstance(event, DriftStep):
            # Hidden: logged in the run artifact but never annotated to policies.
            self._log_event(event.at_task, "drift_step", event.device, event.model)
        elif isinstance(event, DriftRestore):
            self._log_event(event.at_task, "drift_restore", event.device, event.model)

    def _redispatch_queue(self, device: int) -> None:
        dev = self.devices[device]
        orphans = [entry.task for entry in dev.queue]
        dev.queue.clear()
        for task in orphans:
            self._route(task)

    def _flush_pending(self) -> None:
        pending, self._pending = self._pending, []
        for task in pending:
            self._route(task)

    def _arrive(self, task: TaskSpec) -> None:
        self._arrived_tasks = max(self._arrived_tasks, task.task_id + 1)
        if hasattr(self.policy, "on_task_arrival"):
            self.policy.on_task_arrival(task.task_id, self.now)
        self._route(task)

    def _route(self, task: TaskSpec) -> None:
        obs = self.observable_state()
        device = self.policy.choose(task, obs)
        if device is None:
            if any(s.kind == task.kind and s.available for s in obs.devices):
                raise EngineError(
                    f"policy {self.policy.name} refused task {task.task_id} despite feasible devices"
                )
            self._pending.append(task)
            return
        if not self.truth.is_available(device):
            raise EngineError(
                f"policy {self.policy.name} routed task {task.task_id} to unavailable device {device}"
            )
        if self.truth.kind_of(device) != task.kind:
            raise EngineError(
                f"policy {self.policy.name} routed {task.kind} task {task.task_id} "
                f"to {self.truth.kind_of(device)} device {device}"
            )
        self._dispatch(task, device)

    def _dispatch(self, task: TaskSpec, device: int) -> None:
        stutter = self.truth.stutter_indicator(device, self.now)
        entry = _QueueEntry(task, dispatch_time=self.now, stutter=stutter)
        dev = self.devices[device]
        dev.queue.append(entry)
        if hasattr(self.policy, "on_dispatch"):
            self.policy.on_dispatch(task, device, self.now)
        if dev.in_flight is None:
            self._start_next(device)

    def _start_next(self, device: int) -> None:
        dev = self.devices[device]
        if dev.in_flight is not None or not dev.queue:
            return
        if not self.truth.is_available(device):
            return
        entry = dev.queue.popleft()
        service = self.truth.true_service_time(device, entry.task, self.now)
        dev.in_flight = _InFlight(entry, self.now, self.now + service)
        self._push(self.now + service, _PRIO_COMPLETION, device)

    def _complete(self, device: int) -> None:
        dev = self.devices[device]
        fl = dev.in_flight
        if fl is None:
            raise EngineError(f"completion event for idle device {device}")
        dev.in_flight = None
        dev.busy_ms += fl.completion_time - fl.start_time
        task = fl.entry.task
        record = ExecutionRecord(
            task_id=task.task_id,
            device_id=device,
            kind=task.kind,
            arrival_time=task.arrival_time,
            dispatch_time=fl.entry.dispatch_time,
            start_time=fl.start_time,
            completion_time=self.now,
            latency_ms=self.now - task.arrival_time,
            service_ms=self.now - fl.start_time,
            n_in=task.n_in,
            n_out=task.n_out,
            stutter=fl.entry.stutter,
        )
        self.records.append(record)
        self._observations.append(record.to_dict())
        if hasattr(self.policy, "on_completion"):
            self.policy.on_completion(record, self.now, self._arrived_tasks)
        if self.hooks is not None and hasattr(self.hooks, "on_record"):
            self.hooks.on_record(record, self.now)
        self._start_next(device)

    # -- main loop -------------------------------------------------------------

    def run(self) -> SimulationResult:
        interarrival = self._interarrival()
        for event in self.plan.events:
            self._push(event.at_task * interarrival, _PRIO_SCENARIO, event)
        for task in self.workload:
            self._push(task.arrival_time, _PRIO_ARRIVAL, task)
        while self._heap:
            time, priority, _seq, payload = heapq.heappop(self._heap)
            self.now = time
            if priority == _PRIO_SCENARIO:
                self._apply_scenario(payload)
            elif priority == _PRIO_COMPLETION:
                self._complete(payload)
            else:
                self._arrive(payload)
        if self._pending:
            raise EngineError(
                f"run ended with {len(self._pending)} task(s) stranded in the pending buffer"
            )
        return SimulationResult(self.records, self.event_log, self.annotations)


def run_scenario(
    plan: ScenarioPlan,
    workload: list[TaskSpec],
    policy,
    hooks: object | None = None,
    truth: GroundTruthState | None = None,
    leak_check: bool = False,
) -> SimulationResult:
    """Convenience wrapper: build an engine and run it to completion."""
    if truth is None:
        raise ValueError("run_scenario requires a GroundTruthState")
    return Engine(truth, plan, workload, policy, hooks, leak_check).run()


_FORBIDDEN_KEYS = {"alpha", "beta", "gamma", "z", "active_factors", "factor", "service_jitter"}


def assert_no_ground_truth(payload: object, path: str = "") -> None:
    """Structural non-leakage check: no hidden-state field names in a payload."""
    if isinstance(payload, dict):
        for key, value in payload.items():
            if isinstance(key, str) and key in _FORBIDDEN_KEYS:
                raise AssertionError(f"ground-truth field {key!r} leaked at {path or '<root>'}")
            assert_no_ground_truth(value, f"{path}.{key}" if path else str(key))
    elif isinstance(payload, (list, tuple)):
        for i, value in enumerate(payload):
            assert_no_ground_truth(value, f"{path}[{i}]")
