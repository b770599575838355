#!/usr/bin/env python3
"""Queueing fundamentals: the deterministic engine on a hand-checkable pool.

Two tasks arrive 10 ms apart at a single device that always takes 100 ms.
FIFO single-server semantics give completions at 100 and 200 ms, so the
second task waits 90 ms.  The same engine then runs a churn plan to show
re-dispatch and the pending buffer.
"""

from edgesched.profiles import LLM, DevicePrior
from edgesched.sim import (
    DeviceLeave,
    DeviceReturn,
    Engine,
    GroundTruthState,
    ScenarioPlan,
    TaskSpec,
)


class SendEverythingToZero:
    name = "to_zero"

    def choose(self, task, obs):
        avail = obs.available_devices(task.kind)
        return avail[0] if avail else None


def main():
    priors = [DevicePrior(0, LLM, alpha0=0.0, beta0=100.0)]  # 1 token -> 100 ms
    truth = GroundTruthState(priors)
    tasks = [TaskSpec(0, LLM, 0.0, 0, 1), TaskSpec(1, LLM, 10.0, 0, 1)]
    result = Engine(truth, ScenarioPlan(()), tasks, SendEverythingToZero()).run()

    print("single device, service 100 ms, arrivals at 0 and 10 ms:")
    for r in result.records:
        print(
            f"  task {r.task_id}: start={r.start_time:6.1f}  "
            f"completion={r.completion_time:6.1f}  latency={r.latency_ms:6.1f}"
        )
    assert result.records[1].latency_ms == 190.0

    # Churn: the only device leaves before task 1 arrives and returns at
    # task 3.  Task 1 and 2 sit in the pending buffer until the return.
    plan = ScenarioPlan((DeviceLeave(1, 0), DeviceReturn(3, 0)))
    tasks = [TaskSpec(i, LLM, i * 1000.0, 0, 1) for i in range(4)]
    result = Engine(GroundTruthState(priors), plan, tasks, SendEverythingToZero()).run()
    print("\nchurn plan (device leaves at task 1, returns at task 3):")
    for line in result.event_log:
        print("  event:", line)
    for r in sorted(result.records, key=lambda r: r.task_id):
        print(
            f"  task {r.task_id}: dispatched at {r.dispatch_time:7.1f} ms, "
            f"latency {r.latency_ms:7.1f} ms"
        )


if __name__ == "__main__":
    main()
