"""Statistical verification that the simulated system approaches its random
fluid limit, plus busy-period moment checks for the queues in isolation.

The switching-instant ratios t_{i+1}/t_i and Q_i(t_i)/t_i have deterministic
targets because the random factor xi cancels; the xi law itself is checked by
a two-sample KS test between formula-sampled and simulation-extracted values;
trajectory convergence is measured as a sup-distance on a compact grid.

Although xi lives on the circle [1, rho) via a fractional part, the plain
(non-circular) KS statistic is the right comparison: both samples share the
same wraparound point, so probability mass parked on the wrong side of it is
a genuine distributional difference, not an artifact of the cut.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as k
from .branching import SpectralData
from .config import ModelConfig, require_validated
from .distributions import Deterministic, Exponential, LogNormal, Pareto
from .errors import ResourceLimitError
from .fluid import FluidConstants, eval_fluid
from .rng import rng_stream
from .simulator import DEFAULT_MAX_EVENTS, _run_batch, pack_model, run_trace

KS_C001 = math.sqrt(-0.5 * math.log(0.005))  # asymptotic 0.01-level coefficient


def f_xlogx(x):
    """f(x) = x log x on [1, inf), 0 on [0, 1]."""
    x = np.asarray(x, dtype=np.float64)
    out = np.where(x > 1.0, x * np.log(np.maximum(x, 1.0)), 0.0)
    return out if out.ndim else float(out)


def ks_two_sample(xs, ys) -> tuple[float, float]:
    """Classical two-sample KS statistic and the asymptotic 0.01-level
    critical value c(0.01) * sqrt((m+n)/(m n))."""
    xs = np.sort(np.asarray(xs, dtype=np.float64))
    ys = np.sort(np.asarray(ys, dtype=np.float64))
    if xs.size == 0 or ys.size == 0:
        raise ValueError("both samples must be nonempty")
    pooled = np.concatenate([xs, ys])
    cdf_x = np.searchsorted(xs, pooled, side="right") / xs.size
    cdf_y = np.searchsorted(ys, pooled, side="right") / ys.size
    stat = float(np.max(np.abs(cdf_x - cdf_y)))
    crit = KS_C001 * math.sqrt((xs.size + ys.size) / (xs.size * ys.size))
    return stat, crit


def eta_index(t_session: np.ndarray, threshold: float) -> int:
    """min{k : t^(k) >= threshold}; -1 when no recorded session qualifies."""
    idx = int(np.searchsorted(t_session, threshold, side="left"))
    return idx if idx < t_session.shape[0] else -1


def _map_replications(fn, reps: int, threads: int) -> list:
    """Evaluate fn(r) for r in range(reps), in index order regardless of the
    worker count (the per-replication streams make results order-free)."""
    if threads <= 1:
        return [fn(r) for r in range(reps)]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(reps)))


@dataclass(frozen=True)
class RatioEstimate:
    i: int  # queue index, 1-based
    n: int  # scale exponent
    kind: str  # "t_ratio" (t_{i+1}/t_i) or "q_ratio" (Q_i(t_i)/t_i)
    median: float
    iqr: float
    target: float
    samples: int

    def to_dict(self) -> dict:
        return {"i": self.i, "n": self.n, "kind": self.kind, "median": self.median,
                "iqr": self.iqr, "target": self.target, "samples": self.samples}


def switching_ratio_estimates(cfg: ModelConfig, fc: FluidConstants, n_values: list[int],
                              reps: int, *, seed_tag: str = "ratios",
                              threads: int = 1) -> tuple[list[RatioEstimate], int]:
    """Medians and IQRs of the switching-instant ratios at scales rho^n.

    Per replication the system runs until the first session starting at or
    after rho^max(n) completes; eta_n picks the comparison session for each n.
    Returns (estimates, dropped replications).
    """
    require_validated(cfg)
    nq = cfg.n_queues
    n_values = sorted(n_values)
    horizon = fc.rho ** n_values[-1]

    def one(r):
        try:
            trace = run_trace(cfg, seed_tag, t_stop=horizon, replication=r)
        except ResourceLimitError:
            return None
        rows = []
        for n in n_values:
            eta = eta_index(trace.t_session, fc.rho ** n)
            if eta < 0:
                return None
            rows.append((n, trace.visit_starts[eta], trace.q_at_visits[eta]))
        return rows

    t_ratio = {(n, i): [] for n in n_values for i in range(1, nq + 1)}
    q_ratio = {(n, i): [] for n in n_values for i in range(1, nq + 1)}
    dropped = 0
    for result in _map_replications(one, reps, threads):
        if result is None:
            dropped += 1
            continue
        for n, vs, qv in result:
            for i in range(1, nq + 1):
                t_ratio[(n, i)].append(vs[i] / vs[i - 1])
                q_ratio[(n, i)].append(qv[i - 1, i - 1] / vs[i - 1])
    out = []
    for n in n_values:
        for i in range(1, nq + 1):
            for kind, store, target in (
                ("t_ratio", t_ratio, fc.b_bar[i] / fc.b_bar[i - 1]),
                ("q_ratio", q_ratio, fc.a_bar[i - 1, i - 1] / fc.b_bar[i - 1]),
            ):
                vals = np.array(store[(n, i)])
                if vals.size == 0:
                    continue
                q25, q50, q75 = np.percentile(vals, [25, 50, 75])
                out.append(RatioEstimate(i=i, n=n, kind=kind, median=float(q50),
                                         iqr=float(q75 - q25), target=float(target),
                                         samples=vals.size))
    return out, dropped


@dataclass(frozen=True)
class XiExtraction:
    xi: np.ndarray  # per surviving replication
    zeta: np.ndarray
    session_index: np.ndarray  # m used for each estimate
    n: int
    dropped: int


def extract_xi_empirical(cfg: ModelConfig, fc: FluidConstants, spectral: SpectralData,
                         reps: int, n: int = 10, *, seed_tag: str = "xi-empirical",
                         threads: int = 1) -> XiExtraction:
    """Simulation-side xi estimates.

    Per replication: run until the first session starting at or after rho^n
    completes, estimate zeta as (Q(t^(m)) . u) / rho^m at that session m, and
    fold with xi = rho^{frac(log_rho(alpha * zeta))}.  Replications whose last
    recorded session is empty are dropped (the estimate is undefined there).
    """
    require_validated(cfg)
    horizon = fc.rho ** n
    log_rho = math.log(fc.rho)

    def one(r):
        try:
            trace = run_trace(cfg, seed_tag, t_stop=horizon, replication=r)
        except ResourceLimitError:
            return None
        m = trace.n_sessions - 1
        zeta_hat = float(trace.q_at_session[m] @ spectral.u) / fc.rho ** m
        if zeta_hat <= 0.0:
            return None
        y = math.log(fc.alpha * zeta_hat) / log_rho
        xi_hat = fc.rho ** (y - math.floor(y))
        if not (1.0 <= xi_hat < fc.rho):
            xi_hat = min(max(xi_hat, 1.0), math.nextafter(fc.rho, 1.0))
        return xi_hat, zeta_hat, m

    xis, zetas, ms = [], [], []
    dropped = 0
    for result in _map_replications(one, reps, threads):
        if result is None:
            dropped += 1
            continue
        xis.append(result[0])
        zetas.append(result[1])
        ms.append(result[2])
    return XiExtraction(xi=np.array(xis), zeta=np.array(zetas),
                        session_index=np.array(ms, dtype=np.int64), n=n, dropped=dropped)


@dataclass(frozen=True)
class TrajectoryDistance:
    n: int
    replication: int
    sup_distance: float
    xi_hat: float
    zeta_hat: float


def scaled_trajectory_distance(cfg: ModelConfig, fc: FluidConstants, spectral: SpectralData,
                               n: int, grid: np.ndarray, replication: int = 0, *,
                               seed_tag: str = "trajectory",
                               xi_override: float | None = None) -> TrajectoryDistance:
    """sup over the grid of |Q(rho^n t)/rho^n - xi qbar(t/xi)| for one path,
    using the path's own xi estimate (or xi_override for diagnostics)."""
    require_validated(cfg)
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0 or grid[0] <= 0:
        raise ValueError("grid must be nonempty with t0 > 0")
    scale = fc.rho ** n
    trace = run_trace(cfg, seed_tag, t_stop=scale * float(grid[-1]),
                      grid=scale * grid, replication=replication)
    m = trace.n_sessions - 1
    zeta_hat = float(trace.q_at_session[m] @ spectral.u) / fc.rho ** m
    if zeta_hat <= 0.0:
        return TrajectoryDistance(n=n, replication=replication, sup_distance=math.nan,
                                  xi_hat=math.nan, zeta_hat=zeta_hat)
    y = math.log(fc.alpha * zeta_hat) / math.log(fc.rho)
    xi_hat = fc.rho ** (y - math.floor(y))
    xi_used = xi_hat if xi_override is None else xi_override
    dist = 0.0
    for j, t in enumerate(grid):
        fluid_val = xi_used * eval_fluid(fc, float(t) / xi_used)
        emp = trace.grid_q[j] / scale
        dist = max(dist, float(np.max(np.abs(emp - fluid_val))))
    return TrajectoryDistance(n=n, replication=replication, sup_distance=dist,
                              xi_hat=xi_hat, zeta_hat=zeta_hat)


def trajectory_distances(cfg: ModelConfig, fc: FluidConstants, spectral: SpectralData,
                         n: int, grid: np.ndarray, reps: int, *,
                         seed_tag: str = "trajectory", threads: int = 1) -> tuple[np.ndarray, int]:
    """Sup distances over reps replications; NaN paths (extinct at the end of
    the horizon) are dropped."""
    results = _map_replications(
        lambda r: scaled_trajectory_distance(cfg, fc, spectral, n, grid, r, seed_tag=seed_tag),
        reps, threads)
    vals = [res.sup_distance for res in results if not math.isnan(res.sup_distance)]
    dropped = reps - len(vals)
    return np.array(vals), dropped


def visit_mean_target(lam: float, mu: float, kgate) -> float:
    """Mean duration of a visit with kgate+1 gates started from one customer:
    (1/mu)(1 - (lam/mu)^{kgate+1})/(1 - lam/mu); the full busy period
    1/(mu - lam) for kgate = inf."""
    if kgate == math.inf:
        return 1.0 / (mu - lam)
    r = lam / mu
    return (1.0 / mu) * (1.0 - r ** (kgate + 1)) / (1.0 - r)


@dataclass(frozen=True)
class BusyMomentReport:
    queue: int  # 1-based
    k: float  # gate index (visit has k+1 gates), math.inf = full busy period
    mean: float
    mean_se: float
    mean_target: float
    f_moment: float
    f_moment_se: float
    bound_c: float
    bound_value: float
    replications: int

    def to_dict(self) -> dict:
        return {"i": self.queue, "k": "inf" if self.k == math.inf else int(self.k),
                "mean": self.mean, "mean_se": self.mean_se, "mean_target": self.mean_target,
                "f_moment": self.f_moment, "f_moment_se": self.f_moment_se,
                "bound_c": self.bound_c, "bound": self.bound_value,
                "replications": self.replications}


def _sample_service_times(cfg: ModelConfig, i: int, nreps: int, rng: np.random.Generator) -> np.ndarray:
    d = cfg.queues[i].service
    if isinstance(d, Deterministic):
        return np.full(nreps, d.value)
    if isinstance(d, Exponential):
        return rng.exponential(1.0 / d.rate, nreps)
    if isinstance(d, LogNormal):
        return np.exp(d.location + d.scale * rng.standard_normal(nreps))
    assert isinstance(d, Pareto)
    return d.minimum * (1.0 - rng.random(nreps)) ** (-1.0 / d.shape)


def busy_period_moments(cfg: ModelConfig, i: int, kgate, reps: int, *,
                        seed_tag: str = "busy", threads: int = 1) -> BusyMomentReport:
    """MC moments of the gate-truncated busy period of queue i in isolation.

    kgate uses the exposed indexing where a visit has kgate+1 gates (kgate=0
    is a single-gate visit, kgate=inf the full busy period).  The f-moment
    bound constant c = E f(2B)/2 + E f(2 N_B)/(2(mu - lam)) is estimated from
    paired draws (B, N_B ~ Poisson(lam B)).
    """
    require_validated(cfg)
    lam = cfg.queues[i].arrival_rate
    mu = cfg.queues[i].service_rate
    model = pack_model(cfg).isolated(i)
    budget = k.GATE_INF if kgate == math.inf else int(kgate) + 1
    dur = np.zeros(reps, dtype=np.float64)
    tag = f"{seed_tag}:{i}:{kgate}"

    def worker(ci, start, stop):
        rng = rng_stream(cfg.base_seed, tag, ci)
        status = k.busy_visit_batch(*model.args(), i, budget, stop - start,
                                    DEFAULT_MAX_EVENTS, rng, dur[start:stop])
        if status != k.OK:
            raise ResourceLimitError("event budget exhausted in busy-period batch")

    _run_batch(worker, reps, threads)
    mean = float(dur.mean())
    mean_se = float(dur.std(ddof=1) / math.sqrt(reps))
    fvals = f_xlogx(dur)
    f_moment = float(fvals.mean())
    f_se = float(fvals.std(ddof=1) / math.sqrt(reps))
    rng_c = rng_stream(cfg.base_seed, f"{tag}:bound", 0)
    b_draws = _sample_service_times(cfg, i, reps, rng_c)
    n_draws = rng_c.poisson(lam * b_draws)
    c = float(f_xlogx(2.0 * b_draws).mean() / 2.0
              + f_xlogx(2.0 * n_draws).mean() / (2.0 * (mu - lam)))
    return BusyMomentReport(queue=i + 1, k=kgate, mean=mean, mean_se=mean_se,
                            mean_target=visit_mean_target(lam, mu, kgate),
                            f_moment=f_moment, f_moment_se=f_se, bound_c=c,
                            bound_value=c / (1.0 - lam / mu), replications=reps)
