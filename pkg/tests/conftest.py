"""Shared fixtures and independent test oracles."""

from __future__ import annotations

import pytest

from edgesched.profiles import LLM, SDXL, DevicePrior
from edgesched.sim.truth import GroundTruthState
from edgesched.sim.workload import TaskSpec


@pytest.fixture
def fixture_priors() -> list[DevicePrior]:
    """The shipped 4-device pool: two LLM devices, two SDXL devices."""
    return [
        DevicePrior(0, LLM, alpha0=1.0, beta0=50.0),
        DevicePrior(1, LLM, alpha0=2.0, beta0=80.0),
        DevicePrior(2, SDXL, gamma0=4000.0),
        DevicePrior(3, SDXL, gamma0=7000.0),
    ]


def make_truth(priors, prior_error=None, jitter=0.0) -> GroundTruthState:
    return GroundTruthState(priors, prior_error=prior_error, service_jitter=jitter)


class TableTruth(GroundTruthState):
    """Ground truth whose service times come from an explicit (device, task) table."""

    def __init__(self, priors, table: dict[tuple[int, int], float]):
        super().__init__(priors)
        self._table = table

    def true_service_time(self, device, task, now):
        if not self.devices[device].available:
            raise RuntimeError("engine fault: unavailable device")
        return self._table[(device, task.task_id)]


class FixedAssignmentPolicy:
    """Scripted routing: task_id -> device, for queue-equivalence tests."""

    name = "fixed_assignment"

    def __init__(self, assignment: dict[int, int]):
        self._assignment = assignment

    def choose(self, task, obs):
        return self._assignment[task.task_id]


def brute_force_replay(
    tasks: list[TaskSpec],
    assignment: dict[int, int],
    service: dict[tuple[int, int], float],
) -> dict[int, tuple[float, float]]:
    """Independent chronological replay of FIFO single-server queues.

    Processes tasks in arrival order, tracking each device's next-free time:
    start = max(arrival, device free), completion = start + service.
    Returns task_id -> (start_time, completion_time).
    """
    free_at: dict[int, float] = {}
    out: dict[int, tuple[float, float]] = {}
    for task in sorted(tasks, key=lambda t: (t.arrival_time, t.task_id)):
        device = assignment[task.task_id]
        start = max(task.arrival_time, free_at.get(device, 0.0))
        completion = start + service[(device, task.task_id)]
        free_at[device] = completion
        out[task.task_id] = (start, completion)
    return out


def solve_lstsq_oracle(samples: list[tuple[int, int, float]]) -> tuple[float, float]:
    """Independent least-squares reference via numpy's SVD-based solver."""
    import numpy as np

    x = np.array([[s[0], s[1]] for s in samples], dtype=float)
    y = np.array([s[2] for s in samples], dtype=float)
    coef, *_ = np.linalg.lstsq(x, y, rcond=None)
    return float(coef[0]), float(coef[1])
