"""edgesched: closed-loop resource management sandbox for edge generative inference.

A deterministic discrete-event simulator over a heterogeneous device pool,
an online least-squares service-time model with drift detection and smoothed
calibration, a risk-aware fast-path router with static and full-information
reference policies, an event-driven tool-mediated meta-controller, and an
experiment harness that reproduces the warmup and dynamic-regime studies at
desk scale.
"""

from . import harness, metacontrol, opm, profiles, router, sim
from .harness import ExperimentConfig, run_experiment

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig",
    "run_experiment",
    "harness",
    "metacontrol",
    "opm",
    "profiles",
    "router",
    "sim",
]
