"""Agent-side online performance model.

Learns per-device service-time coefficients purely from completed-task
feedback: a windowed least-squares fit of the token-linear model for LLM
devices, a windowed mean for diffusion devices.  Also tracks epistemic
uncertainty (sample scarcity), an observed/predicted residual window for
drift detection, and a smoothed multiplicative calibration factor.

Nothing here ever sees simulator ground truth; every number derives from
ingested :class:`ExecutionRecord` feedback.  All mutations are appended to an
operation log so a run's estimate table can be reproduced bit-for-bit by
offline replay.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .profiles import LLM, SDXL, DevicePrior
from .sim.engine import ExecutionRecord

# Residual mismatch above this observed/predicted ratio counts as drift.
DRIFT_THRESHOLD = 1.3
DRIFT_WINDOW_MS = 60_000.0
CALIBRATION_SMOOTHING = 0.3
DEFAULT_WINDOW_CAPACITY = 40
RIDGE_DAMPING = 1e-6


class CausalityError(ValueError):
    """A record was offered to the model before its completion time."""


class UnknownDeviceError(KeyError):
    """Query for a device-kind the model was never seeded with."""


@dataclass
class OpmEstimate:
    """Learned state for one device-kind."""

    device_id: int
    kind: str
    alpha_hat: float = 0.0
    beta_hat: float = 0.0
    gamma_hat: float = 0.0
    calibration_factor: float = 1.0
    n: int = 0
    last_refit: int = -1

    def as_tuple(self) -> tuple:
        return (
            self.device_id,
            self.kind,
            self.alpha_hat,
            self.beta_hat,
            self.gamma_hat,
            self.calibration_factor,
            self.n,
            self.last_refit,
        )


@dataclass
class _Sample:
    service_ms: float
    n_in: int | None
    n_out: int | None
    completion_time: float


@dataclass
class _ResidualPair:
    predicted: float
    observed: float
    completion_time: float


def solve_token_coefficients(
    samples: list[tuple[int, int, float]], damping: float = RIDGE_DAMPING
) -> tuple[float, float]:
    """Least-squares (alpha, beta) for service = alpha*n_in + beta*n_out.

    Solves the 2x2 normal system directly; a singular system (collinear token
    features) falls back to ridge with the given damping.  Output is clipped
    to be non-negative.
    """
    sxx = sxy = syy = bx = by = 0.0
    for n_in, n_out, service in samples:
        sxx += n_in * n_in
        sxy += n_in * n_out
        syy += n_out * n_out
        bx += n_in * service
        by += n_out * service
    det = sxx * syy - sxy * sxy
    scale = sxx * syy
    if scale == 0.0 or det <= 1e-12 * scale:
        sxx += damping
        syy += damping
        det = sxx * syy - sxy * sxy
    if det == 0.0:
        return 0.0, 0.0
    alpha = (syy * bx - sxy * by) / det
    beta = (sxx * by - sxy * bx) / det
    return max(alpha, 0.0), max(beta, 0.0)


class Opm:
    """Online performance model over a fixed device pool."""

    def __init__(self, window_capacity: int = DEFAULT_WINDOW_CAPACITY) -> None:
        self.window_capacity = window_capacity
        self.estimates: dict[tuple[int, str], OpmEstimate] = {}
        self._windows: dict[tuple[int, str], deque[_Sample]] = {}
        self._residuals: dict[tuple[int, str], deque[_ResidualPair]] = {}
        self.oplog: list[tuple] = []

    # -- lifecycle -----------------------------------------------------------

    def seed(self, priors: list[DevicePrior]) -> None:
        """Initialize estimates from offline priors (calibration 1, n = 0)."""
        for prior in priors:
            key = (prior.device_id, prior.kind)
            if key in self.estimates:
                raise ValueError(f"duplicate prior for device {prior.device_id}")
            est = OpmEstimate(prior.device_id, prior.kind)
            if prior.kind == LLM:
                est.alpha_hat = prior.alpha0
                est.beta_hat = prior.beta0
            else:
                est.gamma_hat = prior.gamma0
            self.estimates[key] = est
            self._windows[key] = deque(maxlen=self.window_capacity)
            self._residuals[key] = deque(maxlen=256)
        self.oplog.append(("seed", tuple(sorted((p.device_id, p.kind, p.alpha0, p.beta0, p.gamma0) for p in priors))))

    def _estimate(self, device: int, kind: str) -> OpmEstimate:
        try:
            return self.estimates[(device, kind)]
        except KeyError:
            raise UnknownDeviceError(f"no estimate for device {device} kind {kind}") from None

    # -- feedback path --------------------------------------------------------

    def ingest_feedback(self, record: ExecutionRecord, now: float) -> None:
        """Append one completed-task record (causal: completion <= now)."""
        if record.completion_time > now:
            raise CausalityError(
                f"record for task {record.task_id} completes at {record.completion_time} > now {now}"
            )
        key = (record.device_id, record.kind)
        est = self._estimate(record.device_id, record.kind)
        predicted = self._raw_predict(est, record.n_in, record.n_out)
        self._windows[key].append(
            _Sample(record.service_ms, record.n_in, record.n_out, record.completion_time)
        )
        self._residuals[key].append(
            _ResidualPair(predicted, record.service_ms, record.completion_time)
        )
        est.n += 1
        self.oplog.append(("ingest", record.to_dict(), now))

    def window_size(self, device: int, kind: str) -> int:
        return len(self._windows[(device, kind)])

    # -- estimation -----------------------------------------------------------

    def refit(
        self,
        device: int,
        kind: str,
        min_samples: int = 1,
        window: int | None = None,
        at_task: int | None = None,
        _log: bool = True,
    ) -> str:
        """Refit one device-kind from its recent window.

        Returns "updated" or "insufficient".  A successful refit supersedes
        any drift calibration, so the calibration factor resets to 1.
        """
        if _log:
            self.oplog.append(("refit", device, kind, min_samples, window, at_task))
        est = self._estimate(device, kind)
        samples = list(self._windows[(device, kind)])
        if window is not None:
            samples = samples[-window:]
        if len(samples) < max(min_samples, 1):
            return "insufficient"
        if kind == LLM:
            alpha, beta = solve_token_coefficients(
                [(s.n_in, s.n_out, s.service_ms) for s in samples]
            )
            est.alpha_hat = alpha
            est.beta_hat = beta
        else:
            est.gamma_hat = sum(s.service_ms for s in samples) / len(samples)
        est.calibration_factor = 1.0
        if at_task is not None:
            est.last_refit = at_task
        return "updated"

    def refit_all(
        self, min_samples: int = 1, window: int | None = None, at_task: int | None = None
    ) -> dict[int, str]:
        """Refit every seeded device-kind; per-device status keyed by id."""
        self.oplog.append(("refit_all", min_samples, window, at_task))
        results = {}
        for device, kind in sorted(self.estimates):
            results[device] = self.refit(
                device, kind, min_samples, window, at_task, _log=False
            )
        return results

    def _raw_predict(self, est: OpmEstimate, n_in: int | None, n_out: int | None) -> float:
        if est.kind == LLM:
            return est.calibration_factor * (est.alpha_hat * n_in + est.beta_hat * n_out)
        return est.calibration_factor * est.gamma_hat

    def predict(self, device: int, task) -> float:
        """Calibrated service-time prediction for a task on a device."""
        est = self._estimate(device, task.kind)
        return self._raw_predict(est, task.n_in, task.n_out)

    def uncertainty(self, device: int, kind: str) -> float:
        """Epistemic uncertainty in [0, 1]: 1 at cold start, decays as 1/(1+n)."""
        est = self._estimate(device, kind)
        return 1.0 / (1.0 + est.n)

    # -- drift and calibration --------------------------------------------------

    def drift_ratio(
        self, device: int, kind: str, window_ms: float, now: float
    ) -> tuple[float, int]:
        """Observed/predicted ratio over residual pairs inside the time window.

        An empty window reports (1.0, 0): no evidence means no alarm.
        """
        if window_ms <= 0:
            raise ValueError(f"window_ms must be > 0, got {window_ms}")
        self._estimate(device, kind)
        cutoff = now - window_ms
        pairs = [
            p
            for p in self._residuals[(device, kind)]
            if cutoff <= p.completion_time <= now
        ]
        if not pairs:
            return 1.0, 0
        mean_obs = sum(p.observed for p in pairs) / len(pairs)
        mean_pred = sum(p.predicted for p in pairs) / len(pairs)
        if mean_pred <= 0.0:
            return (1.0 if mean_obs <= 0.0 else float("inf")), len(pairs)
        return mean_obs / mean_pred, len(pairs)

    def is_drift_alarm(self, ratio: float, sample_count: int, min_samples: int = 3) -> bool:
        """Alarm rule: strictly above threshold with enough evidence."""
        return ratio > DRIFT_THRESHOLD and sample_count >= min_samples

    def apply_calibration(
        self, device: int, kind: str, observed_ratio: float
    ) -> tuple[float, float]:
        """Exponentially smoothed multiplicative correction; returns (old, new)."""
        if observed_ratio <= 0:
            raise ValueError(f"observed_ratio must be > 0, got {observed_ratio}")
        est = self._estimate(device, kind)
        old = est.calibration_factor
        new = CALIBRATION_SMOOTHING * observed_ratio + (1 - CALIBRATION_SMOOTHING) * old
        est.calibration_factor = new
        self.oplog.append(("calibrate", device, kind, observed_ratio))
        return old, new

    # -- introspection ----------------------------------------------------------

    def snapshot_table(self) -> list[tuple]:
        """Bit-comparable estimate table, one tuple per device-kind."""
        return [self.estimates[key].as_tuple() for key in sorted(self.estimates)]

    def snapshot_text(self) -> str:
        """Human-readable one-line-per-device-kind estimate dump."""
        lines = []
        for key in sorted(self.estimates):
            est = self.estimates[key]
            if est.kind == LLM:
                coeffs = f"alpha_hat={est.alpha_hat:.6f} beta_hat={est.beta_hat:.6f}"
            else:
                coeffs = f"gamma_hat={est.gamma_hat:.6f}"
            lines.append(
                f"device={est.device_id} kind={est.kind} {coeffs} "
                f"calibration={est.calibration_factor:.6f} n={est.n}"
            )
        return "\n".join(lines)


def replay_oplog(oplog: list[tuple], window_capacity: int = DEFAULT_WINDOW_CAPACITY) -> Opm:
    """Rebuild an OPM from a recorded operation log.

    The estimate table after replay is bit-identical to the original run's:
    the model depends only on the ingested record sequence and the explicit
    refit/calibration operations, never on simulator internals.
    """
    opm = Opm(window_capacity)
    for op in oplog:
        tag = op[0]
        if tag == "seed":
            priors = [
                DevicePrior(device_id=d, kind=k, alpha0=a, beta0=b, gamma0=g)
                for d, k, a, b, g in op[1]
            ]
            opm.seed(priors)
        elif tag == "ingest":
            opm.ingest_feedback(ExecutionRecord(**op[1]), op[2])
        elif tag == "refit":
            _, device, kind, min_samples, window, at_task = op
            opm.refit(device, kind, min_samples, window, at_task)
        elif tag == "refit_all":
            _, min_samples, window, at_task = op
            opm.refit_all(min_samples, window, at_task)
        elif tag == "calibrate":
            _, device, kind, ratio = op
            opm.apply_calibration(device, kind, ratio)
        else:
            raise ValueError(f"unknown op {tag!r}")
    return opm
