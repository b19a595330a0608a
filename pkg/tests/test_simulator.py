import math
import subprocess
import sys
from collections import deque

import numpy as np
import pytest

from pollingfluid.config import ModelConfig, QueueSpec
from pollingfluid.distributions import (
    INF,
    Deterministic,
    DeterministicGating,
    Exponential,
    GeometricGating,
    LogNormal,
    Pareto,
    PmfGating,
)
from pollingfluid.errors import ResourceLimitError
from pollingfluid.rng import rng_stream
from pollingfluid.simulator import (
    batch_session_offspring,
    batch_visit_offspring,
    run_trace,
    sample_session_offspring,
    sample_visit_offspring,
)

from conftest import exhaustive2, gated2, geometric2, heavy3, mean_se, mixed2


def shadow_run(cfg: ModelConfig, seed_tag: str, n_sessions: int = 0, replication: int = 0,
               grid: np.ndarray | None = None, t_stop: float | None = None):
    """Tagged-customer reference simulator.

    Mirrors the engine's draw order exactly (same generator, same calls), so
    its trace must equal run_trace's bitwise, while tracking customer
    identities to check FIFO service and gate-snapshot semantics.
    """
    rng = rng_stream(cfg.base_seed, seed_tag, replication)
    nq = cfg.n_queues
    lam = [q.arrival_rate for q in cfg.queues]
    queues: list[deque[int]] = [deque() for _ in range(nq)]
    last_served = [-1] * nq
    next_seq = [0] * nq
    fifo_ok = True
    gate_counts_ok = True
    events: list[tuple[float, int, int]] = []  # (time, queue, delta)
    t = 0.0
    next_arr = [t + rng.exponential(1 / lam[j]) if lam[j] > 0 else math.inf for j in range(nq)]

    def draw_service(i):
        d = cfg.queues[i].service
        if isinstance(d, Deterministic):
            return d.value
        if isinstance(d, Exponential):
            return rng.exponential(1 / d.rate)
        if isinstance(d, LogNormal):
            return math.exp(d.location + d.scale * rng.standard_normal())
        assert isinstance(d, Pareto)
        return d.minimum * (1.0 - rng.random()) ** (-1.0 / d.shape)

    def draw_gate(i):
        g = cfg.queues[i].gating
        if isinstance(g, DeterministicGating):
            return -1 if g.k == INF else int(g.k)
        if isinstance(g, GeometricGating):
            if g.p >= 1.0:
                return 1
            u = rng.random()
            return 1 + int(math.floor(math.log1p(-u) / math.log1p(-g.p)))
        assert isinstance(g, PmfGating)
        u = rng.random()
        acc = 0.0
        for kk, prob in g.entries:
            acc += prob
            if u < acc:
                return -1 if kk == INF else int(kk)
        kk = g.entries[-1][0]
        return -1 if kk == INF else int(kk)

    def apply_arrival(j, at):
        queues[j].append(next_seq[j])
        next_seq[j] += 1
        events.append((at, j, +1))
        next_arr[j] = at + rng.exponential(1 / lam[j])

    def advance_arrivals(t_target):
        while True:
            jmin, tmin = -1, t_target
            for j in range(nq):
                if next_arr[j] < tmin:
                    jmin, tmin = j, next_arr[j]
            if jmin < 0:
                return
            apply_arrival(jmin, tmin)

    if grid is not None:
        t_stop = max(t_stop if t_stop is not None else 0.0, float(grid[-1]))
    t_sess, tvis, q_sess, q_vis = [], [], [], []
    while True:
        if t_stop is None and len(t_sess) >= n_sessions:
            break
        t_sess.append(t)
        q_sess.append([len(q) for q in queues])
        tvis.append(np.zeros(nq + 1))
        q_vis.append(np.zeros((nq + 1, nq), dtype=np.int64))
        n = len(t_sess) - 1
        if sum(len(q) for q in queues) == 0:
            jmin = 0
            for j in range(1, nq):
                if next_arr[j] < next_arr[jmin]:
                    jmin = j
            t = next_arr[jmin]
            apply_arrival(jmin, t)
        for i in range(nq):
            tvis[n][i] = t
            q_vis[n][i] = [len(q) for q in queues]
            budget = draw_gate(i)
            if budget == 0:
                continue
            gates = 0
            while queues[i]:
                batch = list(queues[i])  # gate freezes exactly the present customers
                gates += 1
                if budget != -1 and gates > budget:
                    gate_counts_ok = False
                for cust in batch:
                    b = draw_service(i)
                    tc = t + b
                    advance_arrivals(tc)
                    t = tc
                    served = queues[i].popleft()
                    if served != cust or served <= last_served[i]:
                        fifo_ok = False
                    last_served[i] = served
                    events.append((t, i, -1))
                if budget != -1 and gates >= budget:
                    break
        tvis[n][nq] = t
        q_vis[n][nq] = [len(q) for q in queues]
        if t_stop is not None and t_sess[n] >= t_stop:
            break
    t_sess = np.array(t_sess)
    tvis = np.vstack(tvis)
    q_sess = np.array(q_sess, dtype=np.int64)
    q_vis = np.stack(q_vis)

    grid_q = None
    if grid is not None:
        times = np.array([e[0] for e in events])
        grid_q = np.zeros((grid.size, nq), dtype=np.int64)
        for gi, g in enumerate(grid):
            upto = np.searchsorted(times, g, side="right")
            state = np.zeros(nq, dtype=np.int64)
            for (_, j, d) in events[:upto]:
                state[j] += d
            grid_q[gi] = state
    return t_sess, tvis, q_sess, q_vis, fifo_ok, gate_counts_ok, grid_q


@pytest.mark.parametrize("cfg_fn", [gated2, exhaustive2, mixed2, geometric2, heavy3])
def test_shadow_reference_matches_engine_and_fifo_holds(cfg_fn):
    cfg = cfg_fn()
    trace = run_trace(cfg, "shadow", t_stop=50.0)
    t_sess, tvis, q_sess, q_vis, fifo_ok, gates_ok, _ = shadow_run(cfg, "shadow", t_stop=50.0)
    assert np.array_equal(trace.t_session, t_sess)
    assert np.array_equal(trace.visit_starts, tvis)
    assert np.array_equal(trace.q_at_session, q_sess)
    assert np.array_equal(trace.q_at_visits, q_vis)
    assert fifo_ok, "departures left a queue out of arrival order"
    assert gates_ok, "a visit exceeded its gating index"


def test_grid_mode_matches_shadow_reconstruction():
    cfg = gated2()
    grid = np.linspace(0.05, 12.0, 73)
    trace = run_trace(cfg, "shadow-grid", grid=grid)
    t_sess, tvis, q_sess, q_vis, fifo_ok, _, grid_q = shadow_run(cfg, "shadow-grid", grid=grid)
    assert np.array_equal(trace.grid_q, grid_q)
    assert np.array_equal(trace.visit_starts, tvis)
    assert fifo_ok


class TestSessionStructure:
    def test_first_session_idle_wait(self):
        cfg = gated2()
        waits = []
        for r in range(4000):
            tr = run_trace(cfg, "idle", n_sessions=1, replication=r)
            assert np.all(tr.q_at_session[0] == 0)
            assert tr.t_session[0] == 0.0
            waits.append(tr.visit_starts[0, 0])
        m, se = mean_se(waits)
        lam_tot = sum(cfg.arrival_rates)
        assert abs(m - 1 / lam_tot) < 4 * se

    def test_visits_before_first_arrival_queue_are_zero_length(self):
        cfg = gated2()
        for r in range(60):
            tr = run_trace(cfg, "zl", n_sessions=1, replication=r)
            vs = tr.visit_starts[0]
            j = int(np.argmax(tr.q_at_visits[0, 0] > 0))  # queue receiving the first arrival
            for i in range(j):
                assert vs[i + 1] == vs[i]

    def test_boundaries_monotone_and_sessions_contiguous(self):
        for cfg_fn in (gated2, exhaustive2, heavy3):
            tr = run_trace(cfg_fn(), "mono", t_stop=100.0)
            for n in range(tr.n_sessions):
                assert tr.t_session[n] <= tr.visit_starts[n, 0]
                assert np.all(np.diff(tr.visit_starts[n]) >= 0)
                if n + 1 < tr.n_sessions:
                    assert tr.visit_starts[n, -1] == tr.t_session[n + 1]
                if tr.q_at_session[n].sum() > 0:
                    assert tr.visit_starts[n, 0] == tr.t_session[n]

    def test_unvisited_coordinates_nondecreasing_within_session(self):
        tr = run_trace(geometric2(), "nondec", t_stop=150.0)
        nq = tr.n_queues
        for n in range(tr.n_sessions):
            for i in range(nq):
                for j in range(nq):
                    if j != i:
                        assert tr.q_at_visits[n, i + 1, j] >= tr.q_at_visits[n, i, j]

    def test_conservation_counters(self):
        tr = run_trace(gated2(), "cons", n_sessions=25)
        final_q = tr.q_at_visits[-1, -1]
        assert np.array_equal(final_q, tr.arrivals_count - tr.departures_count)
        assert np.all(tr.q_at_visits >= 0)

    def test_exhaustive_visit_empties_queue(self):
        tr = run_trace(exhaustive2(), "empty", t_stop=150.0)
        for i in range(tr.n_queues):
            assert np.all(tr.q_at_visits[:, i + 1, i] == 0)


class TestDegenerateGating:
    def test_gate_zero_queue_never_served(self):
        cfg = ModelConfig(
            queues=(
                QueueSpec(2.0, Exponential(3.0), DeterministicGating(0)),
                QueueSpec(2.0, Exponential(3.0), DeterministicGating(1)),
            ),
            base_seed=9,
        )
        tr = run_trace(cfg, "g0", n_sessions=150)
        assert tr.departures_count[0] == 0
        assert np.all(tr.visit_starts[:, 1] == tr.visit_starts[:, 0])

    def test_gate_zero_everywhere_session_offspring_is_identity(self):
        cfg = ModelConfig(
            queues=(
                QueueSpec(2.0, Exponential(3.0), DeterministicGating(0)),
                QueueSpec(2.0, Exponential(3.0), DeterministicGating(0)),
            ),
            base_seed=9,
        )
        for i in range(2):
            for r in range(50):
                out = sample_session_offspring(cfg, i, rng_stream(9, "e", r))
                assert np.array_equal(out, np.eye(2, dtype=np.int64)[i])

    def test_gate_zero_visit_offspring(self):
        cfg = ModelConfig(
            queues=(
                QueueSpec(2.0, Exponential(3.0), DeterministicGating(0)),
                QueueSpec(2.0, Exponential(3.0), DeterministicGating(1)),
            ),
            base_seed=9,
        )
        dur, off = sample_visit_offspring(cfg, 0, rng_stream(9, "v", 0))
        assert dur == 0.0
        assert np.array_equal(off, [1, 0])


class TestOffspringLaws:
    def test_exhaustive_last_coordinate_always_zero(self):
        cfg = exhaustive2()
        draws = batch_session_offspring(cfg, 0, 10_000)
        assert np.all(draws[:, 1] == 0)

    def test_gated_session_offspring_mean(self):
        draws = batch_session_offspring(gated2(), 0, 100_000)
        for j, target in enumerate((10 / 9, 4 / 9)):
            m, se = mean_se(draws[:, j])
            assert abs(m - target) < 4 * se

    def test_exhaustive_visit_duration_mean(self):
        dur, _ = batch_visit_offspring(exhaustive2(), 0, 100_000)
        m, se = mean_se(dur)
        assert abs(m - 1.0) < 4 * se  # 1/(mu - lam)

    def test_gated_visit_duration_mean(self):
        dur, _ = batch_visit_offspring(gated2(), 0, 100_000)
        m, se = mean_se(dur)
        assert abs(m - 1 / 3) < 4 * se  # one gate serves one customer


class TestOverloadDrift:
    def test_workload_accumulation_rate(self):
        # arrived workload estimated from arrival counters alone: an
        # accumulator independent of the departure bookkeeping
        cfg = exhaustive2()
        tr = run_trace(cfg, "drift", t_stop=3000.0)
        T = tr.t_final
        workload = sum(tr.arrivals_count[i] / cfg.service_rates[i] for i in range(2))
        assert abs((workload - T) / T - 1 / 3) < 0.05


class TestDeterminism:
    def test_identical_runs_bitwise(self):
        a = run_trace(gated2(), "det", n_sessions=25)
        b = run_trace(gated2(), "det", n_sessions=25)
        assert np.array_equal(a.visit_starts, b.visit_starts)
        assert np.array_equal(a.q_at_visits, b.q_at_visits)

    def test_replications_differ(self):
        a = run_trace(gated2(), "det", n_sessions=10, replication=0)
        b = run_trace(gated2(), "det", n_sessions=10, replication=1)
        assert not np.array_equal(a.visit_starts, b.visit_starts)

    def test_threads_do_not_change_batch_results(self):
        a = batch_session_offspring(gated2(), 0, 5000, threads=1)
        b = batch_session_offspring(gated2(), 0, 5000, threads=4)
        assert np.array_equal(a, b)


def test_event_budget_raises_resource_error():
    with pytest.raises(ResourceLimitError):
        run_trace(gated2(), "budget", n_sessions=40, max_events=200)


def test_session_cap_status_reported_by_kernel():
    # run_trace grows its buffers on this status; the kernel must flag it
    import pollingfluid._kernels as k
    from pollingfluid.simulator import pack_model

    cfg = gated2()
    model = pack_model(cfg)
    nq = cfg.n_queues
    cap = 3
    rng = rng_stream(cfg.base_seed, "cap", 0)
    out = k.run_polling(*model.args(), 10, -1.0, 10_000_000, rng,
                        np.zeros(cap), np.zeros((cap, nq + 1)),
                        np.zeros((cap, nq), dtype=np.int64),
                        np.zeros((cap, nq + 1, nq), dtype=np.int64),
                        np.empty(0), np.empty((0, nq), dtype=np.int64))
    assert out[0] == cap
    assert out[2] == k.SESSION_CAP_EXCEEDED


_PARITY_DRIVER = """
import hashlib
import numpy as np
import pollingfluid._kernels as k
from pollingfluid.simulator import run_trace, batch_session_offspring
from pollingfluid.branching import visit_means, session_mean_matrix, perron, batch_zeta
from pollingfluid.config import ModelConfig, QueueSpec
from pollingfluid.distributions import Exponential, GeometricGating

cfg = ModelConfig(queues=(QueueSpec(2.0, Exponential(3.0), GeometricGating(0.4)),
                          QueueSpec(1.8, Exponential(2.5), GeometricGating(0.7))),
                  base_seed=4)
tr = run_trace(cfg, "parity", n_sessions=25)
off = batch_session_offspring(cfg, 0, 2000)
sp = perron(session_mean_matrix(visit_means(cfg)).M)
z = batch_zeta(cfg, 0, 8, sp, 100)
h = hashlib.sha256()
for arr in (tr.visit_starts, tr.q_at_visits, off, z):
    h.update(np.ascontiguousarray(arr).tobytes())
print(k.NUMBA_ENABLED, h.hexdigest())
"""


def test_numba_and_pure_python_paths_bitwise_identical():
    outputs = {}
    for flag in ("1", "0"):
        proc = subprocess.run([sys.executable, "-c", _PARITY_DRIVER],
                              env={"PATH": "/usr/bin:/bin", "POLLINGFLUID_NUMBA": flag,
                                   "HOME": "/root"},
                              capture_output=True, text=True, timeout=600)
        assert proc.returncode == 0, proc.stderr
        enabled, digest = proc.stdout.split()
        outputs[flag] = digest
        assert (enabled == "True") == (flag == "1")
    assert outputs["1"] == outputs["0"]
