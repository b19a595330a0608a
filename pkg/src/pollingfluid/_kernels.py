"""Event-driven polling-system kernels.

Every hot loop in the package lives here as a plain Python function over
primitive numpy arrays plus a ``numpy.random.Generator``.  When numba is
available (and not disabled via the ``POLLINGFLUID_NUMBA`` environment
variable) the functions are compiled with ``@njit(cache=True, nogil=True)``;
otherwise the same source runs uncompiled.  Numba's Generator implementation
mirrors numpy's bit-for-bit, so both paths produce identical draw sequences
and therefore identical outputs.

Set ``POLLINGFLUID_NUMBA=0`` to force the pure-numpy path, ``1`` to require
numba (ImportError if missing); default is auto-detect.

Model encoding (shared by all kernels), one entry per queue:
    lam        float64[I]  arrival rates
    arr_scale  float64[I]  1/lam (np.inf if lam == 0, used for isolation runs)
    svc_kind   int64[I]    0=deterministic 1=exponential 2=lognormal 3=pareto
    svc_a/b    float64[I]  family parameters (see pack in simulator module)
    gate_kind  int64[I]    0=deterministic 1=geometric 2=pmf
    gate_a     float64[I]  deterministic: k (GATE_INF for infinity); geometric: p
    pmf_vals   int64[:]    concatenated pmf supports (GATE_INF for infinity)
    pmf_cum    float64[:]  concatenated cumulative probabilities
    pmf_off    int64[I]    per-queue offset into pmf_vals/pmf_cum
    pmf_len    int64[I]    per-queue entry count

Scratch integer state ``st`` (int64[3]) threaded through the simulation:
    st[0] grid cursor, st[1] events processed, st[2] abort flag (event budget).

Tie rule: a service completion at time t is applied before any arrival with
timestamp exactly t (arrivals strictly earlier than the next event time are
applied first, later ones stay pending).  Recorded states are therefore
right-continuous in the event order.
"""

import math
import os

import numpy as np

GATE_INF = -1

SVC_DETERMINISTIC = 0
SVC_EXPONENTIAL = 1
SVC_LOGNORMAL = 2
SVC_PARETO = 3

GATE_DETERMINISTIC = 0
GATE_GEOMETRIC = 1
GATE_PMF = 2

# run status codes
OK = 0
SESSION_CAP_EXCEEDED = 1
EVENT_BUDGET_EXCEEDED = 2

# mtbp classification codes
EXTINCT = 0
SURVIVED = 1
AMBIGUOUS = 2


def _numba_requested() -> str:
    return os.environ.get("POLLINGFLUID_NUMBA", "auto").strip().lower()


_flag = _numba_requested()
if _flag in ("0", "off", "false", "no"):
    NUMBA_ENABLED = False
elif _flag in ("1", "on", "true", "yes"):
    from numba import njit  # hard requirement when forced on

    NUMBA_ENABLED = True
else:
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False

if NUMBA_ENABLED:
    def _jit(fn):
        return njit(cache=True, nogil=True)(fn)
else:
    def _jit(fn):
        return fn


@_jit
def draw_service(svc_kind, svc_a, svc_b, i, rng):
    kind = svc_kind[i]
    if kind == SVC_DETERMINISTIC:
        return svc_a[i]
    if kind == SVC_EXPONENTIAL:
        return rng.exponential(svc_a[i])  # svc_a holds the scale 1/rate
    if kind == SVC_LOGNORMAL:
        return math.exp(svc_a[i] + svc_b[i] * rng.standard_normal())
    # pareto: svc_a = shape, svc_b = minimum
    u = rng.random()
    return svc_b[i] * (1.0 - u) ** (-1.0 / svc_a[i])


@_jit
def draw_gate(gate_kind, gate_a, pmf_vals, pmf_cum, pmf_off, pmf_len, i, rng):
    kind = gate_kind[i]
    if kind == GATE_DETERMINISTIC:
        return np.int64(gate_a[i])
    if kind == GATE_GEOMETRIC:
        p = gate_a[i]
        if p >= 1.0:
            return np.int64(1)
        u = rng.random()
        return np.int64(1) + np.int64(math.floor(math.log1p(-u) / math.log1p(-p)))
    u = rng.random()
    off = pmf_off[i]
    n = pmf_len[i]
    for j in range(n):
        if u < pmf_cum[off + j]:
            return pmf_vals[off + j]
    return pmf_vals[off + n - 1]


@_jit
def _emit_grid(Q, grid, grid_q, t_limit, st):
    # records the current state for every pending grid point strictly below t_limit
    g = st[0]
    n = grid.shape[0]
    while g < n and grid[g] < t_limit:
        for j in range(Q.shape[0]):
            grid_q[g, j] = Q[j]
        g += 1
    st[0] = g


@_jit
def _advance_arrivals(arr_scale, Q, next_arr, arr_count, t_target, rng, grid, grid_q, st):
    # applies every arrival strictly before t_target in chronological order
    nq = Q.shape[0]
    while True:
        jmin = -1
        tmin = t_target
        for j in range(nq):
            if next_arr[j] < tmin:
                tmin = next_arr[j]
                jmin = j
        if jmin < 0:
            break
        _emit_grid(Q, grid, grid_q, tmin, st)
        Q[jmin] += 1
        arr_count[jmin] += 1
        next_arr[jmin] = tmin + rng.exponential(arr_scale[jmin])
        st[1] += 1
    _emit_grid(Q, grid, grid_q, t_target, st)


@_jit
def _serve_batches(arr_scale, svc_kind, svc_a, svc_b, i, budget,
                   Q, next_arr, arr_count, dep_count, t, rng,
                   grid, grid_q, st, max_events):
    """Gated serving loop at queue i with a fixed gate budget (GATE_INF = no limit).

    Returns the time the server leaves the queue.
    """
    if budget == 0:
        return t
    gates = 0
    while True:
        batch = Q[i]
        if batch == 0:
            break
        gates += 1
        for _ in range(batch):
            b = draw_service(svc_kind, svc_a, svc_b, i, rng)
            tc = t + b
            _advance_arrivals(arr_scale, Q, next_arr, arr_count, tc, rng, grid, grid_q, st)
            t = tc
            Q[i] -= 1
            dep_count[i] += 1
            st[1] += 1
            if st[1] >= max_events:
                st[2] = 1
                return t
        if budget != GATE_INF and gates >= budget:
            break
    return t


@_jit
def _visit(arr_scale, svc_kind, svc_a, svc_b, gate_kind, gate_a,
           pmf_vals, pmf_cum, pmf_off, pmf_len, i,
           Q, next_arr, arr_count, dep_count, t, rng,
           grid, grid_q, st, max_events):
    x = draw_gate(gate_kind, gate_a, pmf_vals, pmf_cum, pmf_off, pmf_len, i, rng)
    return _serve_batches(arr_scale, svc_kind, svc_a, svc_b, i, x,
                          Q, next_arr, arr_count, dep_count, t, rng,
                          grid, grid_q, st, max_events)


@_jit
def _session(lam, arr_scale, svc_kind, svc_a, svc_b, gate_kind, gate_a,
             pmf_vals, pmf_cum, pmf_off, pmf_len,
             Q, next_arr, arr_count, dep_count, t, rng,
             rec_tvis, rec_qvis, grid, grid_q, st, max_events):
    """One full session: optional idle wait, then visits to queues 1..I.

    rec_tvis (float64[I+1]) and rec_qvis (int64[I+1, I]) receive the visit
    boundaries t_i and the states Q(t_i); slot I holds the session end.
    """
    nq = Q.shape[0]
    total = 0
    for j in range(nq):
        total += Q[j]
    if total == 0:
        jmin = 0
        for j in range(1, nq):
            if next_arr[j] < next_arr[jmin]:
                jmin = j
        t_arr = next_arr[jmin]
        _emit_grid(Q, grid, grid_q, t_arr, st)
        t = t_arr
        Q[jmin] += 1
        arr_count[jmin] += 1
        next_arr[jmin] = t + rng.exponential(arr_scale[jmin])
        st[1] += 1
    for i in range(nq):
        rec_tvis[i] = t
        for j in range(nq):
            rec_qvis[i, j] = Q[j]
        t = _visit(arr_scale, svc_kind, svc_a, svc_b, gate_kind, gate_a,
                   pmf_vals, pmf_cum, pmf_off, pmf_len, i,
                   Q, next_arr, arr_count, dep_count, t, rng,
                   grid, grid_q, st, max_events)
        if st[2] != 0:
            return t
    rec_tvis[nq] = t
    for j in range(nq):
        rec_qvis[nq, j] = Q[j]
    return t


@_jit
def _fresh_clocks(lam, arr_scale, next_arr, t, rng):
    for j in range(lam.shape[0]):
        if lam[j] > 0.0:
            next_arr[j] = t + rng.exponential(arr_scale[j])
        else:
            next_arr[j] = np.inf


@_jit
def run_polling(lam, arr_scale, svc_kind, svc_a, svc_b, gate_kind, gate_a,
                pmf_vals, pmf_cum, pmf_off, pmf_len,
                n_sessions, t_stop, max_events, rng,
                t_sess, tvis, q_sess, q_vis, grid, grid_q):
    """Simulate from the empty state at t=0.

    Stops after n_sessions sessions, or (when t_stop >= 0) after completing
    the first session whose start time is >= t_stop.  Returns
    (sessions_done, nu, status, events, t_final, arrivals, departures) where
    nu is the largest session index that started with an empty system (-1 if
    none recorded).
    """
    nq = lam.shape[0]
    cap = t_sess.shape[0]
    Q = np.zeros(nq, dtype=np.int64)
    next_arr = np.empty(nq, dtype=np.float64)
    arr_count = np.zeros(nq, dtype=np.int64)
    dep_count = np.zeros(nq, dtype=np.int64)
    st = np.zeros(3, dtype=np.int64)
    t = 0.0
    _fresh_clocks(lam, arr_scale, next_arr, t, rng)
    nu = -1
    n = 0
    status = OK
    while True:
        if t_stop < 0.0 and n >= n_sessions:
            break
        if n >= cap:
            status = SESSION_CAP_EXCEEDED
            break
        t_sess[n] = t
        total = 0
        for j in range(nq):
            q_sess[n, j] = Q[j]
            total += Q[j]
        if total == 0:
            nu = n
        t = _session(lam, arr_scale, svc_kind, svc_a, svc_b, gate_kind, gate_a,
                     pmf_vals, pmf_cum, pmf_off, pmf_len,
                     Q, next_arr, arr_count, dep_count, t, rng,
                     tvis[n], q_vis[n], grid, grid_q, st, max_events)
        if st[2] != 0:
            status = EVENT_BUDGET_EXCEEDED
            break
        n += 1
        if t_stop >= 0.0 and t_sess[n - 1] >= t_stop:
            break
    # flush remaining grid points at or before the final time with the final state
    g = st[0]
    while g < grid.shape[0] and grid[g] <= t:
        for j in range(nq):
            grid_q[g, j] = Q[j]
        g += 1
    st[0] = g
    return n, nu, status, st[1], t, arr_count, dep_count


@_jit
def session_offspring_batch(lam, arr_scale, svc_kind, svc_a, svc_b, gate_kind, gate_a,
                            pmf_vals, pmf_cum, pmf_off, pmf_len,
                            i, nreps, max_events, rng, out):
    """nreps independent draws of the session offspring L_i, rows of out."""
    nq = lam.shape[0]
    Q = np.zeros(nq, dtype=np.int64)
    next_arr = np.empty(nq, dtype=np.float64)
    arr_count = np.zeros(nq, dtype=np.int64)
    dep_count = np.zeros(nq, dtype=np.int64)
    rec_tvis = np.empty(nq + 1, dtype=np.float64)
    rec_qvis = np.empty((nq + 1, nq), dtype=np.int64)
    grid = np.empty(0, dtype=np.float64)
    grid_q = np.empty((0, nq), dtype=np.int64)
    st = np.zeros(3, dtype=np.int64)
    for r in range(nreps):
        for j in range(nq):
            Q[j] = 0
        Q[i] = 1
        _fresh_clocks(lam, arr_scale, next_arr, 0.0, rng)
        st[0] = 0
        st[1] = 0
        st[2] = 0
        _session(lam, arr_scale, svc_kind, svc_a, svc_b, gate_kind, gate_a,
                 pmf_vals, pmf_cum, pmf_off, pmf_len,
                 Q, next_arr, arr_count, dep_count, 0.0, rng,
                 rec_tvis, rec_qvis, grid, grid_q, st, max_events)
        if st[2] != 0:
            return EVENT_BUDGET_EXCEEDED
        for j in range(nq):
            out[r, j] = Q[j]
    return OK


@_jit
def visit_offspring_batch(lam, arr_scale, svc_kind, svc_a, svc_b, gate_kind, gate_a,
                          pmf_vals, pmf_cum, pmf_off, pmf_len,
                          i, nreps, max_events, rng, out_dur, out):
    """nreps independent draws of (V_i, Lcheck_i)."""
    nq = lam.shape[0]
    Q = np.zeros(nq, dtype=np.int64)
    next_arr = np.empty(nq, dtype=np.float64)
    arr_count = np.zeros(nq, dtype=np.int64)
    dep_count = np.zeros(nq, dtype=np.int64)
    grid = np.empty(0, dtype=np.float64)
    grid_q = np.empty((0, nq), dtype=np.int64)
    st = np.zeros(3, dtype=np.int64)
    for r in range(nreps):
        for j in range(nq):
            Q[j] = 0
        Q[i] = 1
        _fresh_clocks(lam, arr_scale, next_arr, 0.0, rng)
        st[0] = 0
        st[1] = 0
        st[2] = 0
        t = _visit(arr_scale, svc_kind, svc_a, svc_b, gate_kind, gate_a,
                   pmf_vals, pmf_cum, pmf_off, pmf_len, i,
                   Q, next_arr, arr_count, dep_count, 0.0, rng,
                   grid, grid_q, st, max_events)
        if st[2] != 0:
            return EVENT_BUDGET_EXCEEDED
        out_dur[r] = t
        for j in range(nq):
            out[r, j] = Q[j]
    return OK


@_jit
def immigration_batch(lam, arr_scale, svc_kind, svc_a, svc_b, gate_kind, gate_a,
                      pmf_vals, pmf_cum, pmf_off, pmf_len,
                      nreps, max_events, rng, out, out_src):
    """nreps draws from the immigration law G: queue i w.p. lam_i/sum(lam), then L_i."""
    nq = lam.shape[0]
    lam_tot = 0.0
    for j in range(nq):
        lam_tot += lam[j]
    Q = np.zeros(nq, dtype=np.int64)
    next_arr = np.empty(nq, dtype=np.float64)
    arr_count = np.zeros(nq, dtype=np.int64)
    dep_count = np.zeros(nq, dtype=np.int64)
    rec_tvis = np.empty(nq + 1, dtype=np.float64)
    rec_qvis = np.empty((nq + 1, nq), dtype=np.int64)
    grid = np.empty(0, dtype=np.float64)
    grid_q = np.empty((0, nq), dtype=np.int64)
    st = np.zeros(3, dtype=np.int64)
    for r in range(nreps):
        u = rng.random() * lam_tot
        src = nq - 1
        acc = 0.0
        for j in range(nq):
            acc += lam[j]
            if u < acc:
                src = j
                break
        for j in range(nq):
            Q[j] = 0
        Q[src] = 1
        _fresh_clocks(lam, arr_scale, next_arr, 0.0, rng)
        st[0] = 0
        st[1] = 0
        st[2] = 0
        _session(lam, arr_scale, svc_kind, svc_a, svc_b, gate_kind, gate_a,
                 pmf_vals, pmf_cum, pmf_off, pmf_len,
                 Q, next_arr, arr_count, dep_count, 0.0, rng,
                 rec_tvis, rec_qvis, grid, grid_q, st, max_events)
        if st[2] != 0:
            return EVENT_BUDGET_EXCEEDED
        out_src[r] = src
        for j in range(nq):
            out[r, j] = Q[j]
    return OK


@_jit
def _mtbp_generation(lam, arr_scale, svc_kind, svc_a, svc_b, gate_kind, gate_a,
                     pmf_vals, pmf_cum, pmf_off, pmf_len,
                     Z, next_arr, arr_count, dep_count,
                     rec_tvis, rec_qvis, grid, grid_q, st, max_events, rng):
    # one generation of the no-immigration MTBP = one polling session from state Z
    _fresh_clocks(lam, arr_scale, next_arr, 0.0, rng)
    _session(lam, arr_scale, svc_kind, svc_a, svc_b, gate_kind, gate_a,
             pmf_vals, pmf_cum, pmf_off, pmf_len,
             Z, next_arr, arr_count, dep_count, 0.0, rng,
             rec_tvis, rec_qvis, grid, grid_q, st, max_events)


@_jit
def mtbp_classify(lam, arr_scale, svc_kind, svc_a, svc_b, gate_kind, gate_a,
                  pmf_vals, pmf_cum, pmf_off, pmf_len,
                  z0, gen_cap, pop_cap, max_events, rng):
    """Classify one no-immigration MTBP path started from z0.

    Returns (code, generations) with code EXTINCT / SURVIVED / AMBIGUOUS.
    """
    nq = lam.shape[0]
    Z = z0.copy()
    next_arr = np.empty(nq, dtype=np.float64)
    arr_count = np.zeros(nq, dtype=np.int64)
    dep_count = np.zeros(nq, dtype=np.int64)
    rec_tvis = np.empty(nq + 1, dtype=np.float64)
    rec_qvis = np.empty((nq + 1, nq), dtype=np.int64)
    grid = np.empty(0, dtype=np.float64)
    grid_q = np.empty((0, nq), dtype=np.int64)
    st = np.zeros(3, dtype=np.int64)
    g = 0
    while True:
        total = 0
        for j in range(nq):
            total += Z[j]
        if total == 0:
            return EXTINCT, g
        if total > pop_cap:
            return SURVIVED, g
        if g >= gen_cap:
            return AMBIGUOUS, g
        st[1] = 0
        st[2] = 0
        _mtbp_generation(lam, arr_scale, svc_kind, svc_a, svc_b, gate_kind, gate_a,
                         pmf_vals, pmf_cum, pmf_off, pmf_len,
                         Z, next_arr, arr_count, dep_count,
                         rec_tvis, rec_qvis, grid, grid_q, st, max_events, rng)
        if st[2] != 0:
            return AMBIGUOUS, g
        g += 1


@_jit
def zeta_batch(lam, arr_scale, svc_kind, svc_a, svc_b, gate_kind, gate_a,
               pmf_vals, pmf_cum, pmf_off, pmf_len,
               i, depth, u_right, rho, pop_cap, resolve, surv_pop, gen_cap,
               nreps, max_events, rng, out):
    """nreps draws of the depth-truncated Kesten-Stigum estimate for zeta_i.

    Each draw runs the no-immigration MTBP from e_i for `depth` generations and
    returns mult * (Z_depth . u) / rho^depth.  When the population exceeds
    pop_cap it is binomially thinned with the compensating multiplier, which
    keeps the estimate unbiased.  With resolve != 0, paths still alive but
    small after `depth` generations are run on (value-free) until they die out
    (-> 0) or exceed surv_pop, so the point mass at 0 matches the extinction
    probability instead of the truncated one.
    """
    nq = lam.shape[0]
    Z = np.zeros(nq, dtype=np.int64)
    next_arr = np.empty(nq, dtype=np.float64)
    arr_count = np.zeros(nq, dtype=np.int64)
    dep_count = np.zeros(nq, dtype=np.int64)
    rec_tvis = np.empty(nq + 1, dtype=np.float64)
    rec_qvis = np.empty((nq + 1, nq), dtype=np.int64)
    grid = np.empty(0, dtype=np.float64)
    grid_q = np.empty((0, nq), dtype=np.int64)
    st = np.zeros(3, dtype=np.int64)
    # explicit product: numba lowers float ** int to powi, whose rounding can
    # differ from libm pow by an ulp, breaking numba/python bit-parity
    denom = 1.0
    for _ in range(depth):
        denom *= rho
    for r in range(nreps):
        for j in range(nq):
            Z[j] = 0
        Z[i] = 1
        mult = 1.0
        alive = True
        for _ in range(depth):
            total = 0
            for j in range(nq):
                total += Z[j]
            if total == 0:
                alive = False
                break
            if total > pop_cap:
                keep = pop_cap / total
                for j in range(nq):
                    kept = 0
                    for _k in range(Z[j]):
                        if rng.random() < keep:
                            kept += 1
                    Z[j] = kept
                mult /= keep
            st[1] = 0
            st[2] = 0
            _mtbp_generation(lam, arr_scale, svc_kind, svc_a, svc_b, gate_kind, gate_a,
                             pmf_vals, pmf_cum, pmf_off, pmf_len,
                             Z, next_arr, arr_count, dep_count,
                             rec_tvis, rec_qvis, grid, grid_q, st, max_events, rng)
            if st[2] != 0:
                return EVENT_BUDGET_EXCEEDED
        val = 0.0
        if alive:
            acc = 0.0
            for j in range(nq):
                acc += Z[j] * u_right[j]
            val = mult * acc / denom
        if alive and resolve != 0 and val > 0.0:
            g = depth
            while True:
                total = 0
                for j in range(nq):
                    total += Z[j]
                if total == 0:
                    val = 0.0
                    break
                if total > surv_pop or g >= gen_cap:
                    break
                st[1] = 0
                st[2] = 0
                _mtbp_generation(lam, arr_scale, svc_kind, svc_a, svc_b, gate_kind, gate_a,
                                 pmf_vals, pmf_cum, pmf_off, pmf_len,
                                 Z, next_arr, arr_count, dep_count,
                                 rec_tvis, rec_qvis, grid, grid_q, st, max_events, rng)
                if st[2] != 0:
                    return EVENT_BUDGET_EXCEEDED
                g += 1
        out[r] = val
    return OK


@_jit
def xi_formula_batch(lam, arr_scale, svc_kind, svc_a, svc_b, gate_kind, gate_a,
                     pmf_vals, pmf_cum, pmf_off, pmf_len,
                     depth, u_right, rho, alpha, pop_cap, surv_pop, gen_cap,
                     nsamples, max_events, rng, out):
    """Rejection sampler for the scaling factor xi.

    Per accepted sample: draw an immigration batch k ~ G, give every batch
    member an independent (extinction-resolved) zeta draw, reject if the total
    S is zero, else xi = rho^{frac(log_rho(alpha * S))}.
    Returns (status, attempts); status OK or 3 when the rejection rate stays
    above 99.9% after many attempts (degenerate configuration).
    """
    nq = lam.shape[0]
    lam_tot = 0.0
    for j in range(nq):
        lam_tot += lam[j]
    kvec = np.zeros((1, nq), dtype=np.int64)
    src = np.zeros(1, dtype=np.int64)
    zeta_out = np.zeros(1, dtype=np.float64)
    log_rho = math.log(rho)
    accepted = 0
    attempts = 0
    while accepted < nsamples:
        attempts += 1
        if attempts >= 10000 and accepted * 1000 < attempts:
            return 3, attempts
        code = immigration_batch(lam, arr_scale, svc_kind, svc_a, svc_b, gate_kind, gate_a,
                                 pmf_vals, pmf_cum, pmf_off, pmf_len,
                                 1, max_events, rng, kvec, src)
        if code != OK:
            return code, attempts
        s_total = 0.0
        for j in range(nq):
            for _c in range(kvec[0, j]):
                code = zeta_batch(lam, arr_scale, svc_kind, svc_a, svc_b, gate_kind, gate_a,
                                  pmf_vals, pmf_cum, pmf_off, pmf_len,
                                  j, depth, u_right, rho, pop_cap, 1, surv_pop, gen_cap,
                                  1, max_events, rng, zeta_out)
                if code != OK:
                    return code, attempts
                s_total += zeta_out[0]
        if s_total <= 0.0:
            continue
        y = math.log(alpha * s_total) / log_rho
        frac = y - math.floor(y)
        xi = rho ** frac
        if xi >= rho:
            xi = 1.0
        if xi < 1.0:
            xi = 1.0
        out[accepted] = xi
        accepted += 1
    return OK, attempts


@_jit
def busy_visit_batch(lam, arr_scale, svc_kind, svc_a, svc_b, gate_kind, gate_a,
                     pmf_vals, pmf_cum, pmf_off, pmf_len,
                     i, budget, nreps, max_events, rng, out_dur):
    """nreps draws of the gate-truncated busy period at queue i in isolation.

    The caller passes model arrays in which every other queue has lam = 0.
    budget = number of gates (GATE_INF for the full busy period).
    """
    nq = lam.shape[0]
    Q = np.zeros(nq, dtype=np.int64)
    next_arr = np.empty(nq, dtype=np.float64)
    arr_count = np.zeros(nq, dtype=np.int64)
    dep_count = np.zeros(nq, dtype=np.int64)
    grid = np.empty(0, dtype=np.float64)
    grid_q = np.empty((0, nq), dtype=np.int64)
    st = np.zeros(3, dtype=np.int64)
    for r in range(nreps):
        for j in range(nq):
            Q[j] = 0
        Q[i] = 1
        _fresh_clocks(lam, arr_scale, next_arr, 0.0, rng)
        st[0] = 0
        st[1] = 0
        st[2] = 0
        t = _serve_batches(arr_scale, svc_kind, svc_a, svc_b, i, budget,
                           Q, next_arr, arr_count, dep_count, 0.0, rng,
                           grid, grid_q, st, max_events)
        if st[2] != 0:
            return EVENT_BUDGET_EXCEEDED
        out_dur[r] = t
    return OK
