"""Polling-system description and validation of the standing assumptions.

A configuration is accepted when every queue is individually stable
(lam_i / mu_i < 1), the system as a whole is overloaded
(sum_i lam_i / mu_i > 1), and E B_i log B_i is finite for every queue.
All downstream analyses require a prior accept verdict.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

from .distributions import (
    GatingDistribution,
    ServiceDistribution,
    gating_from_dict,
    gating_to_dict,
    service_b_log_b_finite,
    service_from_dict,
    service_mean,
    service_to_dict,
)
from .errors import ConfigError


@dataclass(frozen=True)
class QueueSpec:
    arrival_rate: float
    service: ServiceDistribution
    gating: GatingDistribution

    def __post_init__(self):
        if not (self.arrival_rate > 0 and math.isfinite(self.arrival_rate)):
            raise ConfigError(f"arrival_rate must be finite positive, got {self.arrival_rate}")

    @property
    def service_rate(self) -> float:
        return 1.0 / service_mean(self.service)

    @property
    def load(self) -> float:
        return self.arrival_rate * service_mean(self.service)


@dataclass(frozen=True)
class ModelConfig:
    queues: tuple[QueueSpec, ...]
    base_seed: int

    def __post_init__(self):
        if len(self.queues) < 2:
            raise ConfigError(f"need at least 2 queues, got {len(self.queues)}")
        if not (0 <= int(self.base_seed) < 2 ** 64):
            raise ConfigError(f"base_seed must be an unsigned 64-bit integer, got {self.base_seed}")

    @property
    def n_queues(self) -> int:
        return len(self.queues)

    @property
    def arrival_rates(self) -> tuple[float, ...]:
        return tuple(q.arrival_rate for q in self.queues)

    @property
    def service_rates(self) -> tuple[float, ...]:
        return tuple(q.service_rate for q in self.queues)


@dataclass(frozen=True)
class ValidationReport:
    per_queue_load: tuple[float, ...]
    total_load: float
    b_log_b_finite: tuple[bool, ...]
    accepted: bool
    reasons: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "per_queue_load": list(self.per_queue_load),
            "total_load": self.total_load,
            "b_log_b_finite": list(self.b_log_b_finite),
            "verdict": "accept" if self.accepted else "reject",
            "reasons": list(self.reasons),
        }


def validate_config(cfg: ModelConfig) -> ValidationReport:
    """Deterministic, side-effect-free check of the standing assumptions."""
    loads = tuple(q.load for q in cfg.queues)
    total = sum(loads)
    finite = tuple(service_b_log_b_finite(q.service) for q in cfg.queues)
    reasons = []
    for i, rho_i in enumerate(loads):
        if rho_i >= 1:
            reasons.append(f"queue_load_geq_1:{i + 1}")
    if total <= 1:
        reasons.append("not_overloaded")
    for i, ok in enumerate(finite):
        if not ok:
            reasons.append(f"b_log_b_infinite:{i + 1}")
    return ValidationReport(
        per_queue_load=loads,
        total_load=total,
        b_log_b_finite=finite,
        accepted=not reasons,
        reasons=tuple(reasons),
    )


def require_validated(cfg: ModelConfig) -> None:
    """Raise unless cfg passes validation; downstream operations call this."""
    report = validate_config(cfg)
    if not report.accepted:
        raise ConfigError(f"configuration rejected: {', '.join(report.reasons)}")


def config_to_dict(cfg: ModelConfig) -> dict:
    return {
        "base_seed": int(cfg.base_seed),
        "queues": [
            {
                "arrival_rate": q.arrival_rate,
                "service": service_to_dict(q.service),
                "gating": gating_to_dict(q.gating),
            }
            for q in cfg.queues
        ],
    }


def config_from_dict(doc: dict) -> ModelConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")
    extra = set(doc) - {"base_seed", "queues"}
    if extra:
        raise ConfigError(f"unknown config fields {sorted(extra)}")
    if "queues" not in doc or "base_seed" not in doc:
        raise ConfigError("config needs fields 'queues' and 'base_seed'")
    try:
        seed = int(doc["base_seed"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad base_seed: {doc['base_seed']!r}") from exc
    queues = []
    for idx, qd in enumerate(doc["queues"]):
        if not isinstance(qd, dict):
            raise ConfigError(f"queue entry {idx} must be a mapping")
        qextra = set(qd) - {"arrival_rate", "service", "gating"}
        if qextra:
            raise ConfigError(f"queue entry {idx} has unknown fields {sorted(qextra)}")
        for field in ("arrival_rate", "service", "gating"):
            if field not in qd:
                raise ConfigError(f"queue entry {idx} is missing field '{field}'")
        try:
            rate = float(qd["arrival_rate"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"queue entry {idx}: bad arrival_rate") from exc
        queues.append(QueueSpec(rate, service_from_dict(qd["service"]), gating_from_dict(qd["gating"])))
    return ModelConfig(queues=tuple(queues), base_seed=seed)


def load_config(path: str) -> ModelConfig:
    """Parse the JSON config document (see README for the schema)."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return config_from_dict(doc)


def config_hash(cfg: ModelConfig) -> str:
    """Stable sha256 of the canonical config document."""
    canonical = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
