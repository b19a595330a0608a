"""Fluid-limit constants and the deterministic self-similar trajectory.

The scaled queue-length process converges to xi * qbar(. / xi) where qbar is
a deterministic, continuous, piecewise-linear, rho-self-similar function
determined by the constants (alpha, b_bar, a_bar) computed here, and xi is a
random factor in [1, rho).  Both published forms of qbar are implemented and
must agree; their consistency is part of the test surface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .branching import SpectralData, VisitMeans
from .config import ModelConfig, require_validated
from .errors import ConsistencyError, DomainError

K_CLAMP = 1024
_LOG_GUARD = 700.0  # exp(700) is near the float64 overflow edge


@dataclass(frozen=True)
class FluidConstants:
    alpha: float
    b_bar: np.ndarray  # (I+1,), b_bar[0] = 1, strictly increasing, b_bar[I] = rho
    a_bar: np.ndarray  # (I+1, I)
    b: np.ndarray  # alpha * b_bar
    a: np.ndarray  # alpha * a_bar
    rho: float
    lam: np.ndarray  # per-queue arrival rates (segment slopes)
    mu: np.ndarray  # per-queue service rates

    @property
    def n_queues(self) -> int:
        return self.a_bar.shape[1]

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "b_bar": self.b_bar.tolist(),
            "a_bar": self.a_bar.tolist(),
            "b": self.b.tolist(),
            "a": self.a.tolist(),
            "rho": self.rho,
        }


def fluid_constants(vm: VisitMeans, spectral: SpectralData, cfg: ModelConfig) -> FluidConstants:
    """Simultaneous recursion for (b_bar, diag a_bar), then the full a_bar rows.

    alpha = (sum_i v_i/mu_i) / (sum_i lam_i/mu_i - 1); b_bar_1 = 1;
    a_bar_{i,i} = v_i/alpha + lam_i (b_bar_i - 1); b_bar_{i+1} = b_bar_i +
    a_bar_{i,i} gamma_i; full rows via a_bar_{i+1} = a_bar_i + d*lam - d*mu_i e_i.
    """
    require_validated(cfg)
    nq = cfg.n_queues
    lam = np.array(cfg.arrival_rates)
    mu = np.array(cfg.service_rates)
    v = spectral.v
    rho = spectral.rho
    alpha = float((v / mu).sum() / ((lam / mu).sum() - 1.0))
    if alpha <= 0:
        raise ConsistencyError(f"alpha = {alpha} must be positive")
    b_bar = np.zeros(nq + 1)
    b_bar[0] = 1.0
    a_diag = np.zeros(nq)
    for i in range(nq):
        a_diag[i] = v[i] / alpha + lam[i] * (b_bar[i] - b_bar[0])
        b_bar[i + 1] = b_bar[i] + a_diag[i] * vm.gamma[i]
        if b_bar[i + 1] <= b_bar[i]:
            raise ConsistencyError(
                f"fluid switching constants must increase strictly; b_bar[{i + 1}] = {b_bar[i + 1]}"
                f" does not exceed b_bar[{i}] = {b_bar[i]}")
    a_bar = np.zeros((nq + 1, nq))
    a_bar[0] = v / alpha
    for i in range(nq):
        d = b_bar[i + 1] - b_bar[i]
        a_bar[i + 1] = a_bar[i] + d * lam
        a_bar[i + 1, i] -= d * mu[i]
    return FluidConstants(alpha=alpha, b_bar=b_bar, a_bar=a_bar,
                          b=alpha * b_bar, a=alpha * a_bar, rho=rho, lam=lam, mu=mu)


def a_bar_offspring_form(vm: VisitMeans, spectral: SpectralData, cfg: ModelConfig) -> np.ndarray:
    """Independent route to a_bar via the visit-offspring recursion
    a_{i+1} = a_i - a_{i,i} e_i + a_{i,i} mcheck_i (scaled by 1/alpha)."""
    require_validated(cfg)
    nq = cfg.n_queues
    lam = np.array(cfg.arrival_rates)
    mu = np.array(cfg.service_rates)
    alpha = float((spectral.v / mu).sum() / ((lam / mu).sum() - 1.0))
    a_bar = np.zeros((nq + 1, nq))
    a_bar[0] = spectral.v / alpha
    for i in range(nq):
        a_bar[i + 1] = a_bar[i] + a_bar[i, i] * vm.m_check[i]
        a_bar[i + 1, i] -= a_bar[i, i]
    return a_bar


def _locate_k(t: float, base: float, rho: float) -> tuple[int, bool]:
    """Largest integer k with rho^k * base <= t, clamped to |k| <= K_CLAMP.

    The log estimate is corrected by direct comparison so boundary points
    t = rho^k * base land in their own segment.  Returns (k, exact).
    """
    log_rho = math.log(rho)
    k = math.floor((math.log(t) - math.log(base)) / log_rho)
    while rho ** k * base > t:
        k -= 1
    while rho ** (k + 1) * base <= t:
        k += 1
    if abs(k) > K_CLAMP or abs(k + 1) * log_rho > _LOG_GUARD:
        return k, False
    return k, True


def eval_fluid_flagged(fc: FluidConstants, t: float) -> tuple[np.ndarray, bool]:
    """Coordinate form of qbar(t); flag False when t needed the asymptotic
    envelope t * a_bar_{i,i} / b_bar_i beyond the clamped segment range."""
    if t < 0:
        raise DomainError(f"fluid trajectory is defined for t >= 0, got {t}")
    nq = fc.n_queues
    out = np.zeros(nq)
    if t == 0.0:
        return out, True
    exact = True
    for i in range(nq):
        k, ok = _locate_k(t, fc.b_bar[i], fc.rho)
        if not ok:
            out[i] = t * fc.a_bar[i, i] / fc.b_bar[i]
            exact = False
            continue
        rk = fc.rho ** k
        if t < rk * fc.b_bar[i + 1]:
            # own visit: drains at lam_i - mu_i from height rho^k a_{i,i}
            out[i] = rk * fc.a_bar[i, i] + (fc.lam[i] - fc.mu[i]) * (t - rk * fc.b_bar[i])
        else:
            # away segment: fills at lam_i towards height rho^{k+1} a_{i,i}
            out[i] = fc.rho * rk * fc.a_bar[i, i] - fc.lam[i] * (fc.rho * rk * fc.b_bar[i] - t)
    return out, exact


def eval_fluid(fc: FluidConstants, t: float) -> np.ndarray:
    """qbar(t) via the per-coordinate two-segment form."""
    return eval_fluid_flagged(fc, t)[0]


def eval_fluid_alt(fc: FluidConstants, t: float) -> np.ndarray:
    """qbar(t) via the session-indexed form: on [rho^k b_i, rho^k b_{i+1})
    the full vector is rho^k a_i + (t - rho^k b_i)(lam - mu_i e_i)."""
    if t < 0:
        raise DomainError(f"fluid trajectory is defined for t >= 0, got {t}")
    nq = fc.n_queues
    if t == 0.0:
        return np.zeros(nq)
    k, ok = _locate_k(t, 1.0, fc.rho)
    if not ok:
        return np.array([t * fc.a_bar[i, i] / fc.b_bar[i] for i in range(nq)])
    rk = fc.rho ** k
    s = t / rk
    i = int(np.searchsorted(fc.b_bar, s, side="right")) - 1
    i = min(max(i, 0), nq - 1)
    dt = t - rk * fc.b_bar[i]
    out = rk * fc.a_bar[i] + dt * fc.lam
    out[i] -= dt * fc.mu[i]
    return out


def scaled_limit(fc: FluidConstants, xi: float, t: float) -> np.ndarray:
    """The random fluid limit xi * qbar(t / xi) for xi in [1, rho)."""
    if not (1.0 <= xi < fc.rho):
        raise DomainError(f"xi must lie in [1, rho) = [1, {fc.rho}), got {xi}")
    return xi * eval_fluid(fc, t / xi)


def parse_grid(spec: str) -> np.ndarray:
    """Grid spec 't0:T:points' (linear) or 't0:T:points:log'."""
    parts = spec.split(":")
    if len(parts) not in (3, 4):
        raise ValueError(f"grid spec must be 't0:T:points[:log]', got {spec!r}")
    t0, t1 = float(parts[0]), float(parts[1])
    n = int(parts[2])
    if n < 2 or t1 <= t0:
        raise ValueError(f"grid needs T > t0 and points >= 2, got {spec!r}")
    if len(parts) == 4:
        if parts[3] != "log":
            raise ValueError(f"unknown grid mode {parts[3]!r}")
        if t0 <= 0:
            raise ValueError("log grid needs t0 > 0")
        return np.exp(np.linspace(math.log(t0), math.log(t1), n))
    return np.linspace(t0, t1, n)


def write_fluid_csv(fc: FluidConstants, grid: np.ndarray, fh,
                    header_lines: list[str] | None = None) -> None:
    nq = fc.n_queues
    for line in header_lines or []:
        fh.write(f"# {line}\n")
    fh.write("t," + ",".join(f"qbar_{j + 1}" for j in range(nq)) + "\n")
    for t in grid:
        q = eval_fluid(fc, float(t))
        fh.write(f"{t:.17g}," + ",".join(f"{x:.17g}" for x in q) + "\n")
