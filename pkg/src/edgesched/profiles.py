"""Device profile ingestion: benchmark-derived JSONL records to routing priors.

Profiles are measured p99 latencies for two generative workloads (a llama-class
LLM and SDXL image generation) in SingleStream mode.  LLM measurements are
converted to per-token coefficients; diffusion measurements become a flat
per-image cost.  The resulting priors seed the online performance model and
are deliberately treated as imperfect.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

logger = logging.getLogger(__name__)

LLM = "LLM"
SDXL = "SDXL"

# Tokens assumed for the p99 TTFT measurement when deriving the per-input-token
# coefficient (matches the 1024x1024 / SingleStream profiling configuration).
TTFT_REFERENCE_TOKENS = 1024
SD_IMAGE_SIZE = 1024
SD_STEPS = 20

_LLM_MODEL_HINTS = ("llama", "llm")
_SD_MODEL_HINTS = ("diffusion", "sdxl", "sd-")


class ProfileError(ValueError):
    """Raised for unreadable, malformed, or invariant-violating profile data."""


@dataclass(frozen=True)
class RawProfileRecord:
    """One benchmark measurement row as read from the JSONL profile file."""

    device_name: str
    model_id: str
    scenario: str
    precision: str = ""
    ttft_ms_p99: float | None = None
    tpot_ms_p99: float | None = None
    latency_ms_p99: float | None = None
    image_size: int | None = None
    steps: int | None = None

    @property
    def kind(self) -> str:
        if self.ttft_ms_p99 is not None and self.tpot_ms_p99 is not None:
            return LLM
        return SDXL

    def validate(self) -> None:
        has_llm = self.ttft_ms_p99 is not None or self.tpot_ms_p99 is not None
        has_sd = self.latency_ms_p99 is not None
        if has_llm and has_sd:
            raise ProfileError(
                f"record for {self.device_name!r} mixes LLM and diffusion fields"
            )
        if has_llm:
            if self.ttft_ms_p99 is None or self.tpot_ms_p99 is None:
                raise ProfileError(
                    f"record for {self.device_name!r} needs both ttft_ms_p99 and tpot_ms_p99"
                )
            if not _looks_like(self.model_id, _LLM_MODEL_HINTS):
                raise ProfileError(
                    f"model_id {self.model_id!r} does not match LLM latency fields"
                )
        elif has_sd:
            if not _looks_like(self.model_id, _SD_MODEL_HINTS):
                raise ProfileError(
                    f"model_id {self.model_id!r} does not match diffusion latency fields"
                )
        else:
            raise ProfileError(
                f"record for {self.device_name!r} carries no latency measurement"
            )
        for field_name in ("ttft_ms_p99", "tpot_ms_p99", "latency_ms_p99", "image_size", "steps"):
            value = getattr(self, field_name)
            if value is not None and value <= 0:
                raise ProfileError(
                    f"field {field_name} must be strictly positive, got {value!r}"
                )


@dataclass(frozen=True)
class DevicePrior:
    """Offline prior for one device: exactly the coefficients its kind uses.

    LLM devices carry (alpha0, beta0) in ms/token; diffusion devices carry
    gamma0 in ms/image.  Values are non-negative by construction.
    """

    device_id: int
    kind: str
    alpha0: float | None = None
    beta0: float | None = None
    gamma0: float | None = None

    def __post_init__(self) -> None:
        for name in ("alpha0", "beta0", "gamma0"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ProfileError(f"{name} must be >= 0, got {value!r}")
        if self.kind == LLM and (self.alpha0 is None or self.beta0 is None):
            raise ProfileError("LLM prior requires alpha0 and beta0")
        if self.kind == SDXL and self.gamma0 is None:
            raise ProfileError("SDXL prior requires gamma0")


_RECORD_FIELDS = {
    "device_name",
    "model_id",
    "scenario",
    "precision",
    "ttft_ms_p99",
    "tpot_ms_p99",
    "latency_ms_p99",
    "image_size",
    "steps",
}


def _looks_like(model_id: str, hints: tuple[str, ...]) -> bool:
    lowered = model_id.lower()
    return any(h in lowered for h in hints)


def load_profiles(path: str | Path) -> list[RawProfileRecord]:
    """Read profile records from a JSONL file, in file order.

    Unknown fields are ignored.  Records whose scenario is not SingleStream
    are skipped with a warning (one log line per skip).  Malformed lines and
    invariant violations raise :class:`ProfileError` naming the line.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ProfileError(f"cannot read profile file {path}: {exc}") from exc

    records: list[RawProfileRecord] = []
    skipped = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProfileError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise ProfileError(f"{path}:{lineno}: expected a JSON object")
        known = {k: v for k, v in payload.items() if k in _RECORD_FIELDS}
        try:
            record = RawProfileRecord(**known)
            record.validate()
        except ProfileError as exc:
            raise ProfileError(f"{path}:{lineno}: {exc}") from exc
        except TypeError as exc:
            raise ProfileError(f"{path}:{lineno}: missing required field: {exc}") from exc
        if record.scenario != "SingleStream":
            skipped += 1
            logger.warning(
                "%s:%d: skipping non-SingleStream record (scenario=%r)",
                path,
                lineno,
                record.scenario,
            )
            continue
        records.append(record)
    if skipped:
        logger.warning("%s: skipped %d non-SingleStream record(s)", path, skipped)
    return records


def prior_from_llm(record: RawProfileRecord, device_id: int = 0) -> DevicePrior:
    """Convert an LLM measurement to per-token coefficients.

    alpha0 = ttft_ms_p99 / TTFT_REFERENCE_TOKENS, beta0 = tpot_ms_p99.
    """
    if record.kind != LLM:
        raise ProfileError(
            f"prior_from_llm needs an LLM record, got {record.model_id!r}"
        )
    return DevicePrior(
        device_id=device_id,
        kind=LLM,
        alpha0=record.ttft_ms_p99 / TTFT_REFERENCE_TOKENS,
        beta0=record.tpot_ms_p99,
    )


def prior_from_sd(record: RawProfileRecord, device_id: int = 0) -> DevicePrior:
    """Extract the flat per-image cost from a diffusion measurement.

    The record must match the profiling configuration (1024px, 20 steps).
    """
    if record.kind != SDXL:
        raise ProfileError(
            f"prior_from_sd needs a diffusion record, got {record.model_id!r}"
        )
    if record.image_size != SD_IMAGE_SIZE:
        raise ProfileError(
            f"image_size must be {SD_IMAGE_SIZE}, got {record.image_size!r}"
        )
    if record.steps != SD_STEPS:
        raise ProfileError(f"steps must be {SD_STEPS}, got {record.steps!r}")
    return DevicePrior(device_id=device_id, kind=SDXL, gamma0=record.latency_ms_p99)


def priors_from_records(records: list[RawProfileRecord]) -> list[DevicePrior]:
    """Build one prior per record, assigning device ids in file order."""
    priors = []
    for device_id, record in enumerate(records):
        if record.kind == LLM:
            priors.append(prior_from_llm(record, device_id))
        else:
            priors.append(prior_from_sd(record, device_id))
    return priors


def priors_to_json(priors: list[DevicePrior]) -> str:
    """Serialize a prior set; exact round-trip with :func:`priors_from_json`."""
    rows = []
    for p in priors:
        rows.append(
            {
                "device_id": p.device_id,
                "kind": p.kind,
                "alpha0": p.alpha0,
                "beta0": p.beta0,
                "gamma0": p.gamma0,
            }
        )
    return json.dumps(rows, sort_keys=True)


def priors_from_json(text: str) -> list[DevicePrior]:
    rows = json.loads(text)
    return [DevicePrior(**row) for row in rows]


def default_profiles_path() -> Path:
    """Path of the deterministic 4-device fixture shipped with the package."""
    return Path(resources.files("edgesched").joinpath("data/device_profiles.jsonl"))
