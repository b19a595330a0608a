"""Embedded multitype branching process of the polling system.

Queue lengths at session starts form a supercritical MTBP with immigration at
the empty state.  This module computes its mean structure in closed form
(visit means, the session mean matrix), extracts the Perron-Frobenius data by
power iteration, estimates extinction probabilities by capped Monte Carlo,
and samples the Kesten-Stigum limit and the scaling factor xi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as k
from .config import ModelConfig, require_validated
from .distributions import gating_pgf_at
from .errors import DegenerateConfigError, ResourceLimitError, SpectralFailure, SupercriticalityError
from .rng import chunk_bounds, rng_stream
from .simulator import DEFAULT_MAX_EVENTS, ModelArrays, _run_batch, pack_model

DEFAULT_GEN_CAP = 200
DEFAULT_POP_CAP = 1_000_000
DEFAULT_ZETA_DEPTH = 12
SURVIVOR_POP = 1000


@dataclass(frozen=True)
class VisitMeans:
    m_check: np.ndarray  # (I, I), E Lcheck_{i,j}
    gamma: np.ndarray  # (I,), E V_i


@dataclass(frozen=True)
class SessionMeanMatrix:
    M: np.ndarray  # (I, I), E L_{i,j}


@dataclass(frozen=True)
class SpectralData:
    rho: float
    u: np.ndarray  # right eigenvector, v . u = 1
    v: np.ndarray  # left eigenvector, |v|_1 = 1
    reducible: bool  # some eigenvector coordinate is (numerically) zero


@dataclass(frozen=True)
class ExtinctionData:
    q: np.ndarray  # per-type extinction probability estimates
    q_se: np.ndarray
    q_G: float  # return-to-empty probability estimate
    q_G_se: float
    ambiguity_fraction: float
    replications: int
    caps_too_tight: bool  # ambiguity tally exceeded 1% of reps


@dataclass(frozen=True)
class BranchingData:
    visit_means: VisitMeans
    session_means: SessionMeanMatrix
    spectral: SpectralData
    extinction: ExtinctionData | None = None


def visit_means(cfg: ModelConfig) -> VisitMeans:
    """Closed-form visit means: m_ii = E (lam_i/mu_i)^{X_i},
    gamma_i = (1 - m_ii)/(mu_i - lam_i), m_ij = lam_j * gamma_i for j != i."""
    require_validated(cfg)
    nq = cfg.n_queues
    lam = np.array(cfg.arrival_rates)
    mu = np.array(cfg.service_rates)
    m_check = np.zeros((nq, nq))
    gamma = np.zeros(nq)
    for i, q in enumerate(cfg.queues):
        m_ii = gating_pgf_at(q.gating, lam[i] / mu[i])
        gamma[i] = (1.0 - m_ii) / (mu[i] - lam[i])
        m_check[i] = lam * gamma[i]
        m_check[i, i] = m_ii
    return VisitMeans(m_check=m_check, gamma=gamma)


def session_mean_matrix(vm: VisitMeans) -> SessionMeanMatrix:
    """Backward recursion from the last row: m_{I,j} = mcheck_{I,j} and
    m_{i,j} = mcheck_{i,j} [i >= j] + sum_{k>i} mcheck_{i,k} m_{k,j}."""
    mc = vm.m_check
    nq = mc.shape[0]
    M = np.zeros_like(mc)
    M[nq - 1] = mc[nq - 1]
    for i in range(nq - 2, -1, -1):
        for j in range(nq):
            direct = mc[i, j] if i >= j else 0.0
            M[i, j] = direct + mc[i, i + 1:] @ M[i + 1:, j]
    return SessionMeanMatrix(M=M)


_RAYLEIGH_TOL = 1e-13
_RESIDUAL_TOL = 1e-12
_MAX_ITERS = 100_000


def _power_iterate(A: np.ndarray, shift: float) -> tuple[float, np.ndarray] | None:
    """Dominant eigenpair of A via power iteration on A + shift*I."""
    n = A.shape[0]
    B = A + shift * np.eye(n)
    x = np.full(n, 1.0 / n)
    lam_prev = np.inf
    for _ in range(_MAX_ITERS):
        y = B @ x
        norm = y.sum()
        if norm <= 0:
            return None
        x = y / norm
        lam = x @ (A @ x) / (x @ x)
        if abs(lam - lam_prev) <= _RAYLEIGH_TOL * max(abs(lam), 1.0):
            resid = np.max(np.abs(A @ x - lam * x))
            if resid <= _RESIDUAL_TOL * max(abs(lam), 1.0) * np.max(np.abs(x)):
                return lam, x
        lam_prev = lam
    return None


def perron(M: np.ndarray) -> SpectralData:
    """Dominant eigenvalue with nonnegative left/right eigenvectors.

    Power iteration runs on the diagonally shifted matrix (same eigenvectors,
    spectrum moved off any periodic cycle), restarting with larger shifts if
    it stalls.  Normalisation: |v|_1 = 1 and v . u = 1.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("M must be a square matrix")
    if np.any(M < 0) or not np.all(np.isfinite(M)):
        raise ValueError("M must be nonnegative and finite")
    right = left = None
    for shift in (1.0, 2.0, 5.0):
        right = _power_iterate(M, shift)
        left = _power_iterate(M.T, shift)
        if right is not None and left is not None:
            break
    if right is None or left is None:
        raise SpectralFailure("power iteration did not converge to the dominant eigenpair")
    rho_r, u = right
    rho_l, v = left
    rho = 0.5 * (rho_r + rho_l)
    if rho <= 1.0 + 1e-12:
        raise SupercriticalityError(
            f"dominant eigenvalue rho = {rho:.12g} <= 1; embedded process is not supercritical")
    u = np.where(np.abs(u) < 1e-300, 0.0, u)
    v = np.where(np.abs(v) < 1e-300, 0.0, v)
    v = v / v.sum()
    u = u / (v @ u)
    reducible = bool(np.any(u <= 1e-12) or np.any(v <= 1e-12))
    return SpectralData(rho=float(rho), u=u, v=v, reducible=reducible)


def sample_immigration(cfg: ModelConfig, rng: np.random.Generator) -> np.ndarray:
    """One draw from the immigration law G: pick queue i with probability
    lam_i / sum(lam), then return one session offspring draw from e_i."""
    require_validated(cfg)
    model = pack_model(cfg)
    out = np.zeros((1, cfg.n_queues), dtype=np.int64)
    src = np.zeros(1, dtype=np.int64)
    status = k.immigration_batch(*model.args(), 1, DEFAULT_MAX_EVENTS, rng, out, src)
    if status != k.OK:
        raise ResourceLimitError("event budget exhausted in immigration draw")
    return out[0]


def batch_immigration(cfg: ModelConfig, nreps: int, *, seed_tag: str = "immigration",
                      threads: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """(draws, source queue indices) for nreps immigration draws."""
    require_validated(cfg)
    model = pack_model(cfg)
    out = np.zeros((nreps, cfg.n_queues), dtype=np.int64)
    src = np.zeros(nreps, dtype=np.int64)

    def worker(ci, start, stop):
        rng = rng_stream(cfg.base_seed, seed_tag, ci)
        status = k.immigration_batch(*model.args(), stop - start, DEFAULT_MAX_EVENTS,
                                     rng, out[start:stop], src[start:stop])
        if status != k.OK:
            raise ResourceLimitError("event budget exhausted in immigration batch")

    _run_batch(worker, nreps, threads)
    return out, src


def _classify_batch(model: ModelArrays, z0_rows: np.ndarray, gen_cap: int, pop_cap: int,
                    cfg: ModelConfig, seed_tag: str, threads: int) -> np.ndarray:
    codes = np.zeros(z0_rows.shape[0], dtype=np.int64)

    def worker(ci, start, stop):
        rng = rng_stream(cfg.base_seed, seed_tag, ci)
        for r in range(start, stop):
            code, _ = k.mtbp_classify(*model.args(), z0_rows[r], gen_cap, pop_cap,
                                      DEFAULT_MAX_EVENTS, rng)
            codes[r] = code

    _run_batch(worker, z0_rows.shape[0], threads)
    return codes


def extinction_probs(cfg: ModelConfig, reps: int = 2000, gen_cap: int = DEFAULT_GEN_CAP,
                     pop_cap: int = DEFAULT_POP_CAP, *, seed_tag: str = "extinction",
                     threads: int = 1) -> ExtinctionData:
    """Monte Carlo extinction probabilities of the no-immigration MTBP.

    A realisation is extinct when the population hits 0 within gen_cap
    generations and surviving when it exceeds pop_cap; realisations that
    exhaust gen_cap below pop_cap are counted extinct and reported in the
    ambiguity tally.  q_G uses the same procedure seeded from immigration
    draws.
    """
    require_validated(cfg)
    if reps < 1000:
        raise ValueError(f"extinction estimation needs reps >= 1000, got {reps}")
    # supercriticality guard: degenerate configs are refused upstream
    perron(session_mean_matrix(visit_means(cfg)).M)
    model = pack_model(cfg)
    nq = cfg.n_queues
    q = np.zeros(nq)
    q_se = np.zeros(nq)
    ambiguous = 0
    for i in range(nq):
        z0 = np.zeros((reps, nq), dtype=np.int64)
        z0[:, i] = 1
        codes = _classify_batch(model, z0, gen_cap, pop_cap, cfg, f"{seed_tag}:{i}", threads)
        extinct = np.count_nonzero(codes != k.SURVIVED)
        ambiguous += np.count_nonzero(codes == k.AMBIGUOUS)
        q[i] = extinct / reps
        q_se[i] = math.sqrt(max(q[i] * (1 - q[i]), 1e-12) / reps)
    z0, _ = batch_immigration(cfg, reps, seed_tag=f"{seed_tag}:G-seed", threads=threads)
    codes = _classify_batch(model, z0, gen_cap, pop_cap, cfg, f"{seed_tag}:G", threads)
    extinct = np.count_nonzero(codes != k.SURVIVED)
    ambiguous += np.count_nonzero(codes == k.AMBIGUOUS)
    q_G = extinct / reps
    q_G_se = math.sqrt(max(q_G * (1 - q_G), 1e-12) / reps)
    frac = ambiguous / ((nq + 1) * reps)
    return ExtinctionData(q=q, q_se=q_se, q_G=float(q_G), q_G_se=float(q_G_se),
                          ambiguity_fraction=float(frac), replications=reps,
                          caps_too_tight=frac > 0.01)


def sample_zeta(cfg: ModelConfig, i: int, depth: int, spectral: SpectralData,
                rng: np.random.Generator, *, pop_cap: int = DEFAULT_POP_CAP,
                resolve_extinction: bool = False, gen_cap: int = DEFAULT_GEN_CAP) -> float:
    """One draw approximating the Kesten-Stigum limit zeta_i.

    Runs the no-immigration MTBP from e_i for `depth` generations and returns
    (Z_depth . u) / rho^depth (0 on extinct paths).  Populations above pop_cap
    are binomially thinned with a compensating multiplier, keeping the
    martingale estimate unbiased.  With resolve_extinction, paths still alive
    but small at `depth` are run on until they die out or provably survive, so
    the atom at 0 matches the extinction probability rather than the
    depth-truncated one.
    """
    require_validated(cfg)
    model = pack_model(cfg)
    out = np.zeros(1, dtype=np.float64)
    status = k.zeta_batch(*model.args(), i, depth, spectral.u, spectral.rho, pop_cap,
                          1 if resolve_extinction else 0, SURVIVOR_POP, gen_cap,
                          1, DEFAULT_MAX_EVENTS, rng, out)
    if status != k.OK:
        raise ResourceLimitError("event budget exhausted in zeta draw")
    return float(out[0])


def batch_zeta(cfg: ModelConfig, i: int, depth: int, spectral: SpectralData, nreps: int, *,
               pop_cap: int = DEFAULT_POP_CAP, resolve_extinction: bool = False,
               gen_cap: int = DEFAULT_GEN_CAP, seed_tag: str = "zeta",
               threads: int = 1) -> np.ndarray:
    require_validated(cfg)
    model = pack_model(cfg)
    out = np.zeros(nreps, dtype=np.float64)
    tag = f"{seed_tag}:{i}:{depth}"
    resolve = 1 if resolve_extinction else 0

    def worker(ci, start, stop):
        rng = rng_stream(cfg.base_seed, tag, ci)
        status = k.zeta_batch(*model.args(), i, depth, spectral.u, spectral.rho, pop_cap,
                              resolve, SURVIVOR_POP, gen_cap, stop - start,
                              DEFAULT_MAX_EVENTS, rng, out[start:stop])
        if status != k.OK:
            raise ResourceLimitError("event budget exhausted in zeta batch")

    _run_batch(worker, nreps, threads)
    return out


def sample_xi(cfg: ModelConfig, spectral: SpectralData, alpha: float, n_samples: int,
              depth: int = DEFAULT_ZETA_DEPTH, *, pop_cap: int = DEFAULT_POP_CAP,
              gen_cap: int = DEFAULT_GEN_CAP, seed_tag: str = "xi-formula",
              threads: int = 1) -> np.ndarray:
    """n_samples draws of the scaling factor xi in [1, rho) by rejection.

    Each draw realises the mixture directly: an immigration batch k ~ G, one
    zeta draw per batch member (survivor thinning and the positive
    conditioning happen implicitly), rejection when every zeta is zero, then
    xi = rho^{frac(log_rho(alpha * S))} for the survivor sum S.
    """
    require_validated(cfg)
    model = pack_model(cfg)
    out = np.zeros(n_samples, dtype=np.float64)

    def worker(ci, start, stop):
        rng = rng_stream(cfg.base_seed, f"{seed_tag}:{depth}", ci)
        status, attempts = k.xi_formula_batch(*model.args(), depth, spectral.u, spectral.rho,
                                              alpha, pop_cap, SURVIVOR_POP, gen_cap,
                                              stop - start, DEFAULT_MAX_EVENTS, rng,
                                              out[start:stop])
        if status == 3:
            raise DegenerateConfigError(
                f"xi rejection rate above 99.9% after {attempts} attempts")
        if status != k.OK:
            raise ResourceLimitError("event budget exhausted in xi sampling")

    _run_batch(worker, n_samples, threads)
    return out


def analyze(cfg: ModelConfig, *, extinction_reps: int = 2000, gen_cap: int = DEFAULT_GEN_CAP,
            pop_cap: int = DEFAULT_POP_CAP, threads: int = 1,
            with_extinction: bool = True) -> BranchingData:
    vm = visit_means(cfg)
    sm = session_mean_matrix(vm)
    sp = perron(sm.M)
    ext = None
    if with_extinction:
        ext = extinction_probs(cfg, extinction_reps, gen_cap, pop_cap, threads=threads)
    return BranchingData(visit_means=vm, session_means=sm, spectral=sp, extinction=ext)


def analysis_report(data: BranchingData) -> dict:
    """JSON-ready report with the documented key set."""
    ext = data.extinction
    return {
        "m_check": data.visit_means.m_check.tolist(),
        "gamma": data.visit_means.gamma.tolist(),
        "M": data.session_means.M.tolist(),
        "rho": data.spectral.rho,
        "u": data.spectral.u.tolist(),
        "v": data.spectral.v.tolist(),
        "reducible": data.spectral.reducible,
        "q": ext.q.tolist() if ext else None,
        "q_se": ext.q_se.tolist() if ext else None,
        "q_G": ext.q_G if ext else None,
        "q_G_se": ext.q_G_se if ext else None,
        "ambiguity_fraction": ext.ambiguity_fraction if ext else None,
    }
