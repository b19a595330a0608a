"""Service-time and gating-index distribution families.

Service families carry exact closed-form means; gating families expose the
probability generating function E r^X on [0, 1) with the convention
r^inf = 0 and r^0 = 1.  Sampling delegates to the kernel draw routines so a
scalar draw consumes the generator exactly like the simulator does.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as k
from .errors import ConfigError, DomainError

INF = math.inf


@dataclass(frozen=True)
class Deterministic:
    value: float

    def __post_init__(self):
        if not (self.value > 0 and math.isfinite(self.value)):
            raise ConfigError(f"deterministic service value must be finite positive, got {self.value}")


@dataclass(frozen=True)
class Exponential:
    rate: float

    def __post_init__(self):
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise ConfigError(f"exponential rate must be finite positive, got {self.rate}")


@dataclass(frozen=True)
class LogNormal:
    location: float
    scale: float

    def __post_init__(self):
        if not math.isfinite(self.location):
            raise ConfigError(f"lognormal location must be finite, got {self.location}")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ConfigError(f"lognormal scale must be finite positive, got {self.scale}")


@dataclass(frozen=True)
class Pareto:
    shape: float
    minimum: float

    def __post_init__(self):
        if not (self.shape > 1 and math.isfinite(self.shape)):
            raise ConfigError(f"pareto shape must exceed 1 for a finite mean, got {self.shape}")
        if not (self.minimum > 0 and math.isfinite(self.minimum)):
            raise ConfigError(f"pareto minimum must be finite positive, got {self.minimum}")


ServiceDistribution = Deterministic | Exponential | LogNormal | Pareto


@dataclass(frozen=True)
class DeterministicGating:
    k: float  # non-negative integer or math.inf

    def __post_init__(self):
        if self.k == INF:
            return
        if self.k < 0 or self.k != int(self.k):
            raise ConfigError(f"gating index must be a non-negative integer or inf, got {self.k}")


@dataclass(frozen=True)
class GeometricGating:
    """Geometric gating index on support {1, 2, ...}: P(X=k) = p(1-p)^(k-1)."""

    p: float

    def __post_init__(self):
        if not (0 < self.p <= 1):
            raise ConfigError(f"geometric success probability must lie in (0, 1], got {self.p}")


@dataclass(frozen=True)
class PmfGating:
    """Finite pmf over Z+ plus optionally inf; entries ((k, prob), ...)."""

    entries: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.entries:
            raise ConfigError("pmf gating needs at least one entry")
        total = 0.0
        seen = set()
        for kk, prob in self.entries:
            if kk != INF and (kk < 0 or kk != int(kk)):
                raise ConfigError(f"pmf support values must be non-negative integers or inf, got {kk}")
            if kk in seen:
                raise ConfigError(f"duplicate pmf support value {kk}")
            seen.add(kk)
            if prob < 0:
                raise ConfigError(f"pmf probabilities must be non-negative, got {prob}")
            total += prob
        if abs(total - 1.0) > 1e-12:
            raise ConfigError(f"pmf probabilities must sum to 1 within 1e-12, got {total}")


GatingDistribution = DeterministicGating | GeometricGating | PmfGating


def service_mean(d: ServiceDistribution) -> float:
    """Exact E B per family."""
    if isinstance(d, Deterministic):
        return d.value
    if isinstance(d, Exponential):
        return 1.0 / d.rate
    if isinstance(d, LogNormal):
        return math.exp(d.location + 0.5 * d.scale ** 2)
    if isinstance(d, Pareto):
        return d.shape * d.minimum / (d.shape - 1.0)
    raise ConfigError(f"unknown service distribution {d!r}")


def service_b_log_b_finite(d: ServiceDistribution) -> bool:
    """Whether E B log B is finite, decided symbolically per family.

    Deterministic, exponential and lognormal always qualify; a Pareto
    qualifies iff shape > 1, which its constructor already enforces.
    """
    if isinstance(d, (Deterministic, Exponential, LogNormal)):
        return True
    if isinstance(d, Pareto):
        return d.shape > 1
    raise ConfigError(f"unknown service distribution {d!r}")


def gating_pgf_at(g: GatingDistribution, r: float) -> float:
    """E r^X for r in [0, 1), with r^inf = 0 and r^0 = 1."""
    if not (0 <= r < 1):
        raise DomainError(f"pgf argument must lie in [0, 1), got {r}")
    if isinstance(g, DeterministicGating):
        if g.k == INF:
            return 0.0
        return r ** g.k
    if isinstance(g, GeometricGating):
        return g.p * r / (1.0 - (1.0 - g.p) * r)
    if isinstance(g, PmfGating):
        return sum(prob * (0.0 if kk == INF else r ** kk) for kk, prob in g.entries)
    raise ConfigError(f"unknown gating distribution {g!r}")


def _service_codes(d: ServiceDistribution) -> tuple[int, float, float]:
    if isinstance(d, Deterministic):
        return k.SVC_DETERMINISTIC, d.value, 0.0
    if isinstance(d, Exponential):
        return k.SVC_EXPONENTIAL, 1.0 / d.rate, 0.0
    if isinstance(d, LogNormal):
        return k.SVC_LOGNORMAL, d.location, d.scale
    return k.SVC_PARETO, d.shape, d.minimum


def _gating_codes(g: GatingDistribution) -> tuple[int, float, list[int], list[float]]:
    """(kind, scalar parameter, pmf values, pmf cumulative probabilities)."""
    if isinstance(g, DeterministicGating):
        kk = k.GATE_INF if g.k == INF else int(g.k)
        return k.GATE_DETERMINISTIC, float(kk), [], []
    if isinstance(g, GeometricGating):
        return k.GATE_GEOMETRIC, g.p, [], []
    vals = [k.GATE_INF if kk == INF else int(kk) for kk, _ in g.entries]
    cum = np.cumsum([prob for _, prob in g.entries])
    cum[-1] = 1.0
    return k.GATE_PMF, 0.0, vals, list(cum)


def _singleton_model(d: ServiceDistribution | None, g: GatingDistribution | None):
    svc_kind, svc_a, svc_b = _service_codes(d) if d is not None else (k.SVC_DETERMINISTIC, 1.0, 0.0)
    gate_kind, gate_a, pvals, pcum = _gating_codes(g) if g is not None else (k.GATE_DETERMINISTIC, -1.0, [], [])
    return (
        np.array([svc_kind], dtype=np.int64),
        np.array([svc_a], dtype=np.float64),
        np.array([svc_b], dtype=np.float64),
        np.array([gate_kind], dtype=np.int64),
        np.array([gate_a], dtype=np.float64),
        np.array(pvals, dtype=np.int64),
        np.array(pcum, dtype=np.float64),
        np.zeros(1, dtype=np.int64),
        np.array([len(pvals)], dtype=np.int64),
    )


def sample_service(d: ServiceDistribution, rng: np.random.Generator) -> float:
    """One draw of the service time, consuming the stream like the simulator."""
    svc_kind, svc_a, svc_b, *_ = _singleton_model(d, None)
    return float(k.draw_service(svc_kind, svc_a, svc_b, 0, rng))


def sample_gating(g: GatingDistribution, rng: np.random.Generator) -> float:
    """One draw of the gating index; math.inf encodes an unbounded gate budget."""
    _, _, _, gate_kind, gate_a, pvals, pcum, poff, plen = _singleton_model(None, g)
    val = int(k.draw_gate(gate_kind, gate_a, pvals, pcum, poff, plen, 0, rng))
    return INF if val == k.GATE_INF else float(val)


def sample_exponential(rate: float, rng: np.random.Generator) -> float:
    if not (rate > 0):
        raise DomainError(f"exponential rate must be positive, got {rate}")
    return float(rng.exponential(1.0 / rate))


_SERVICE_KINDS = {
    "deterministic": (Deterministic, ("value",)),
    "exponential": (Exponential, ("rate",)),
    "lognormal": (LogNormal, ("location", "scale")),
    "pareto": (Pareto, ("shape", "minimum")),
}


def service_from_dict(spec: dict) -> ServiceDistribution:
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(f"service spec must be a mapping with a 'kind' field, got {spec!r}")
    kind = spec["kind"]
    if kind not in _SERVICE_KINDS:
        raise ConfigError(f"unknown service kind {kind!r}")
    cls, fields = _SERVICE_KINDS[kind]
    missing = [f for f in fields if f not in spec]
    if missing:
        raise ConfigError(f"service kind {kind!r} is missing parameters {missing}")
    extra = set(spec) - {"kind", *fields}
    if extra:
        raise ConfigError(f"service kind {kind!r} has unknown parameters {sorted(extra)}")
    try:
        return cls(**{f: float(spec[f]) for f in fields})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad service parameters for kind {kind!r}: {exc}") from exc


def service_to_dict(d: ServiceDistribution) -> dict:
    if isinstance(d, Deterministic):
        return {"kind": "deterministic", "value": d.value}
    if isinstance(d, Exponential):
        return {"kind": "exponential", "rate": d.rate}
    if isinstance(d, LogNormal):
        return {"kind": "lognormal", "location": d.location, "scale": d.scale}
    return {"kind": "pareto", "shape": d.shape, "minimum": d.minimum}


def _parse_k(value) -> float:
    if isinstance(value, str):
        if value.lower() in ("inf", "infinity"):
            return INF
        raise ConfigError(f"gating index must be an integer or 'inf', got {value!r}")
    if value == INF:
        return INF
    try:
        return float(int(value))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"gating index must be an integer or 'inf', got {value!r}") from exc


def gating_from_dict(spec: dict) -> GatingDistribution:
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(f"gating spec must be a mapping with a 'kind' field, got {spec!r}")
    kind = spec["kind"]
    if kind == "deterministic":
        if "k" not in spec:
            raise ConfigError("deterministic gating needs field 'k'")
        return DeterministicGating(_parse_k(spec["k"]))
    if kind == "geometric":
        if "p" not in spec:
            raise ConfigError("geometric gating needs field 'p'")
        return GeometricGating(float(spec["p"]))
    if kind == "pmf":
        if "entries" not in spec:
            raise ConfigError("pmf gating needs field 'entries'")
        try:
            entries = tuple((_parse_k(kk), float(prob)) for kk, prob in spec["entries"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad pmf entries: {exc}") from exc
        return PmfGating(entries)
    raise ConfigError(f"unknown gating kind {kind!r}")


def gating_to_dict(g: GatingDistribution) -> dict:
    if isinstance(g, DeterministicGating):
        return {"kind": "deterministic", "k": "inf" if g.k == INF else int(g.k)}
    if isinstance(g, GeometricGating):
        return {"kind": "geometric", "p": g.p}
    return {"kind": "pmf", "entries": [["inf" if kk == INF else int(kk), prob] for kk, prob in g.entries]}
