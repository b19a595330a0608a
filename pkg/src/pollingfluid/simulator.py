"""Exact discrete-event simulation of the cyclic polling system.

The simulator decomposes time into sessions (one server cycle over queues
1..I, possibly preceded by an idle wait) and records the visit boundaries
t_i with the queue-length vectors at those instants.  Empty visits are
recorded as zero-length intervals without advancing the clock; when the
system empties, the server idles until the first arrival.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as k
from .config import ModelConfig, require_validated
from .distributions import _gating_codes, _service_codes
from .errors import ResourceLimitError
from .rng import CHUNK, chunk_bounds, rng_stream

DEFAULT_MAX_EVENTS = 500_000_000


@dataclass(frozen=True)
class ModelArrays:
    """Kernel-facing encoding of a validated ModelConfig."""

    lam: np.ndarray
    arr_scale: np.ndarray
    svc_kind: np.ndarray
    svc_a: np.ndarray
    svc_b: np.ndarray
    gate_kind: np.ndarray
    gate_a: np.ndarray
    pmf_vals: np.ndarray
    pmf_cum: np.ndarray
    pmf_off: np.ndarray
    pmf_len: np.ndarray

    def args(self) -> tuple:
        return (self.lam, self.arr_scale, self.svc_kind, self.svc_a, self.svc_b,
                self.gate_kind, self.gate_a, self.pmf_vals, self.pmf_cum,
                self.pmf_off, self.pmf_len)

    def isolated(self, i: int) -> "ModelArrays":
        """Copy with every queue but i silenced (M/G/1 in isolation)."""
        lam = self.lam.copy()
        scale = self.arr_scale.copy()
        for j in range(lam.shape[0]):
            if j != i:
                lam[j] = 0.0
                scale[j] = np.inf
        return ModelArrays(lam, scale, self.svc_kind, self.svc_a, self.svc_b,
                           self.gate_kind, self.gate_a, self.pmf_vals, self.pmf_cum,
                           self.pmf_off, self.pmf_len)


def pack_model(cfg: ModelConfig) -> ModelArrays:
    nq = cfg.n_queues
    lam = np.array([q.arrival_rate for q in cfg.queues], dtype=np.float64)
    arr_scale = 1.0 / lam
    svc_kind = np.empty(nq, dtype=np.int64)
    svc_a = np.empty(nq, dtype=np.float64)
    svc_b = np.empty(nq, dtype=np.float64)
    gate_kind = np.empty(nq, dtype=np.int64)
    gate_a = np.empty(nq, dtype=np.float64)
    pmf_vals: list[int] = []
    pmf_cum: list[float] = []
    pmf_off = np.zeros(nq, dtype=np.int64)
    pmf_len = np.zeros(nq, dtype=np.int64)
    for i, q in enumerate(cfg.queues):
        svc_kind[i], svc_a[i], svc_b[i] = _service_codes(q.service)
        kind, a, vals, cum = _gating_codes(q.gating)
        gate_kind[i] = kind
        gate_a[i] = a
        pmf_off[i] = len(pmf_vals)
        pmf_len[i] = len(vals)
        pmf_vals.extend(vals)
        pmf_cum.extend(cum)
    return ModelArrays(lam, arr_scale, svc_kind, svc_a, svc_b, gate_kind, gate_a,
                       np.array(pmf_vals, dtype=np.int64), np.array(pmf_cum, dtype=np.float64),
                       pmf_off, pmf_len)


@dataclass(frozen=True)
class SessionRecord:
    index: int
    t_session: float
    visit_starts: np.ndarray  # length I+1, slot I is the session end t^(n+1)
    q_at_session: np.ndarray  # Q(t^(n))
    q_at_visits: np.ndarray  # (I+1, I), rows Q(t_i^(n))


@dataclass(frozen=True)
class EventTrace:
    n_queues: int
    t_session: np.ndarray  # (n,)
    visit_starts: np.ndarray  # (n, I+1)
    q_at_session: np.ndarray  # (n, I)
    q_at_visits: np.ndarray  # (n, I+1, I)
    arrivals_count: np.ndarray
    departures_count: np.ndarray
    last_empty_session: int | None
    t_final: float
    events: int
    grid: np.ndarray | None = None
    grid_q: np.ndarray | None = None
    sessions: list[SessionRecord] = field(init=False)

    def __post_init__(self):
        records = [
            SessionRecord(n, float(self.t_session[n]), self.visit_starts[n],
                          self.q_at_session[n], self.q_at_visits[n])
            for n in range(self.t_session.shape[0])
        ]
        object.__setattr__(self, "sessions", records)

    @property
    def n_sessions(self) -> int:
        return self.t_session.shape[0]


def run_trace(cfg: ModelConfig, seed_tag: str, n_sessions: int = 0, *,
              replication: int = 0, t_stop: float | None = None,
              grid: np.ndarray | None = None,
              max_events: int = DEFAULT_MAX_EVENTS) -> EventTrace:
    """Simulate from the empty state at t=0.

    Runs for n_sessions sessions, or, when t_stop is given, until the first
    session starting at or after t_stop completes.  With a grid the
    piecewise-constant Q(t) is additionally evaluated at the grid times
    (right-continuously); the grid implies a time horizon of at least
    grid[-1], and a time horizon takes precedence over n_sessions.
    """
    require_validated(cfg)
    if grid is not None:
        grid = np.ascontiguousarray(grid, dtype=np.float64)
        if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) < 0):
            raise ValueError("grid must be a non-empty 1-d non-decreasing array of times")
        t_stop = max(t_stop if t_stop is not None else 0.0, float(grid[-1]))
    else:
        grid = np.empty(0, dtype=np.float64)
    if n_sessions <= 0 and t_stop is None:
        raise ValueError("need n_sessions >= 1, a t_stop horizon, or a grid")
    model = pack_model(cfg)
    nq = cfg.n_queues
    stop = -1.0 if t_stop is None else float(t_stop)
    cap = max(n_sessions, 256)
    while True:
        rng = rng_stream(cfg.base_seed, seed_tag, replication)
        t_sess = np.zeros(cap, dtype=np.float64)
        tvis = np.zeros((cap, nq + 1), dtype=np.float64)
        q_sess = np.zeros((cap, nq), dtype=np.int64)
        q_vis = np.zeros((cap, nq + 1, nq), dtype=np.int64)
        grid_q = np.zeros((grid.shape[0], nq), dtype=np.int64)
        n, nu, status, events, t_final, arr, dep = k.run_polling(
            *model.args(), n_sessions, stop, max_events, rng,
            t_sess, tvis, q_sess, q_vis, grid, grid_q)
        if status == k.SESSION_CAP_EXCEEDED:
            cap *= 2  # deterministic rerun from scratch with a fresh stream
            continue
        if status == k.EVENT_BUDGET_EXCEEDED:
            raise ResourceLimitError(
                f"event budget {max_events} exhausted after {n} sessions (t = {t_final:.6g})")
        return EventTrace(
            n_queues=nq,
            t_session=t_sess[:n].copy(),
            visit_starts=tvis[:n].copy(),
            q_at_session=q_sess[:n].copy(),
            q_at_visits=q_vis[:n].copy(),
            arrivals_count=arr,
            departures_count=dep,
            last_empty_session=None if nu < 0 else int(nu),
            t_final=float(t_final),
            events=int(events),
            grid=grid if grid.size else None,
            grid_q=grid_q if grid.size else None,
        )


def _run_batch(worker, total: int, threads: int) -> None:
    bounds = chunk_bounds(total)
    if threads <= 1 or len(bounds) == 1:
        for b in bounds:
            worker(*b)
        return
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(lambda b: worker(*b), bounds))


def sample_session_offspring(cfg: ModelConfig, i: int, rng: np.random.Generator) -> np.ndarray:
    """One draw of the session offspring L_i (state at session end from e_i)."""
    require_validated(cfg)
    model = pack_model(cfg)
    out = np.zeros((1, cfg.n_queues), dtype=np.int64)
    status = k.session_offspring_batch(*model.args(), i, 1, DEFAULT_MAX_EVENTS, rng, out)
    if status != k.OK:
        raise ResourceLimitError("event budget exhausted in session offspring draw")
    return out[0]


def sample_visit_offspring(cfg: ModelConfig, i: int, rng: np.random.Generator) -> tuple[float, np.ndarray]:
    """One draw of (V_i, Lcheck_i) for a visit to queue i from e_i."""
    require_validated(cfg)
    model = pack_model(cfg)
    dur = np.zeros(1, dtype=np.float64)
    out = np.zeros((1, cfg.n_queues), dtype=np.int64)
    status = k.visit_offspring_batch(*model.args(), i, 1, DEFAULT_MAX_EVENTS, rng, dur, out)
    if status != k.OK:
        raise ResourceLimitError("event budget exhausted in visit offspring draw")
    return float(dur[0]), out[0]


def batch_session_offspring(cfg: ModelConfig, i: int, nreps: int, *,
                            seed_tag: str = "session-offspring", threads: int = 1) -> np.ndarray:
    """(nreps, I) array of independent session offspring draws."""
    require_validated(cfg)
    model = pack_model(cfg)
    out = np.zeros((nreps, cfg.n_queues), dtype=np.int64)
    tag = f"{seed_tag}:{i}"

    def worker(ci, start, stop):
        rng = rng_stream(cfg.base_seed, tag, ci)
        status = k.session_offspring_batch(*model.args(), i, stop - start,
                                           DEFAULT_MAX_EVENTS, rng, out[start:stop])
        if status != k.OK:
            raise ResourceLimitError("event budget exhausted in session offspring batch")

    _run_batch(worker, nreps, threads)
    return out


def batch_visit_offspring(cfg: ModelConfig, i: int, nreps: int, *,
                          seed_tag: str = "visit-offspring", threads: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """(durations, offspring) arrays of independent visit draws."""
    require_validated(cfg)
    model = pack_model(cfg)
    dur = np.zeros(nreps, dtype=np.float64)
    out = np.zeros((nreps, cfg.n_queues), dtype=np.int64)
    tag = f"{seed_tag}:{i}"

    def worker(ci, start, stop):
        rng = rng_stream(cfg.base_seed, tag, ci)
        status = k.visit_offspring_batch(*model.args(), i, stop - start,
                                         DEFAULT_MAX_EVENTS, rng, dur[start:stop], out[start:stop])
        if status != k.OK:
            raise ResourceLimitError("event budget exhausted in visit offspring batch")

    _run_batch(worker, nreps, threads)
    return dur, out


def trace_rows(trace: EventTrace):
    """Trace CSV rows: (session, i, t_i, Q_1..Q_I), i = 1..I+1 per session."""
    for n in range(trace.n_sessions):
        for i in range(trace.n_queues + 1):
            yield (n, i + 1, trace.visit_starts[n, i], *trace.q_at_visits[n, i])


def write_trace_csv(trace: EventTrace, fh, header_lines: list[str] | None = None) -> None:
    nq = trace.n_queues
    for line in header_lines or []:
        fh.write(f"# {line}\n")
    fh.write("session,i,t_i," + ",".join(f"Q_{j + 1}" for j in range(nq)) + "\n")
    for row in trace_rows(trace):
        session, i, t_i, *qs = row
        fh.write(f"{session},{i},{t_i:.17g}," + ",".join(str(q) for q in qs) + "\n")


def write_trajectory_csv(grid: np.ndarray, grid_q: np.ndarray, fh,
                         header_lines: list[str] | None = None) -> None:
    nq = grid_q.shape[1]
    for line in header_lines or []:
        fh.write(f"# {line}\n")
    fh.write("t," + ",".join(f"Q_{j + 1}" for j in range(nq)) + "\n")
    for t, row in zip(grid, grid_q):
        fh.write(f"{t:.17g}," + ",".join(str(q) for q in row) + "\n")
