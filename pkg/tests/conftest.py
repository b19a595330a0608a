import math

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

ACCEPT_SEED = 4  # pinned; every MC test in the suite is seed-deterministic


def gated2(seed=ACCEPT_SEED) -> ModelConfig:
    """Symmetric 2-queue, lam=2, Exp(3) service, conventional gated."""
    q = QueueSpec(2.0, Exponential(3.0), DeterministicGating(1))
    return ModelConfig(queues=(q, q), base_seed=seed)


def exhaustive2(seed=ACCEPT_SEED) -> ModelConfig:
    q = QueueSpec(2.0, Exponential(3.0), DeterministicGating(INF))
    return ModelConfig(queues=(q, q), base_seed=seed)


def mixed2(seed=ACCEPT_SEED) -> ModelConfig:
    """Queue 1 exhaustive, queue 2 gated; known zero-pattern config."""
    return ModelConfig(
        queues=(
            QueueSpec(2.0, Exponential(3.0), DeterministicGating(INF)),
            QueueSpec(2.0, Exponential(3.0), DeterministicGating(1)),
        ),
        base_seed=seed,
    )


def geometric2(seed=ACCEPT_SEED) -> ModelConfig:
    return ModelConfig(
        queues=(
            QueueSpec(2.0, Exponential(3.0), GeometricGating(0.4)),
            QueueSpec(1.8, Exponential(2.5), GeometricGating(0.7)),
        ),
        base_seed=seed,
    )


def gated3(seed=ACCEPT_SEED) -> ModelConfig:
    return ModelConfig(
        queues=(
            QueueSpec(1.5, Exponential(3.0), DeterministicGating(1)),
            QueueSpec(1.2, Exponential(3.0), DeterministicGating(INF)),
            QueueSpec(0.9, Exponential(3.0), PmfGating(((1, 0.5), (2, 0.25), (INF, 0.25)))),
        ),
        base_seed=seed,
    )


def heavy3(seed=ACCEPT_SEED) -> ModelConfig:
    """Asymmetric I=3 with non-exponential service families."""
    return ModelConfig(
        queues=(
            QueueSpec(2.8, Exponential(4.0), GeometricGating(0.7)),
            QueueSpec(1.6, LogNormal(-1.5, 0.5), DeterministicGating(2)),
            QueueSpec(0.9, Pareto(2.5, 0.2), DeterministicGating(1)),
        ),
        base_seed=seed,
    )


def deterministic2(seed=ACCEPT_SEED) -> ModelConfig:
    return ModelConfig(
        queues=(
            QueueSpec(2.0, Deterministic(0.3), DeterministicGating(1)),
            QueueSpec(1.5, Deterministic(0.4), DeterministicGating(INF)),
        ),
        base_seed=seed,
    )


def battery() -> list[ModelConfig]:
    """Gated/exhaustive/geometric, symmetric/asymmetric, I in {2, 3}."""
    return [gated2(), exhaustive2(), mixed2(), geometric2(), gated3(), heavy3(), deterministic2()]


def mean_se(xs) -> tuple[float, float]:
    xs = np.asarray(xs, dtype=np.float64)
    return float(xs.mean()), float(xs.std(ddof=1) / math.sqrt(xs.size))


def binom_se(p_hat: float, n: int) -> float:
    return math.sqrt(max(p_hat * (1.0 - p_hat), 1e-12) / n)


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile (or load the disk cache of) every kernel once, so runtime
    assertions in the acceptance tests measure simulation, not JIT."""
    import pollingfluid._kernels as k
    import pollingfluid.branching as br
    from pollingfluid.convergence import busy_period_moments
    from pollingfluid.fluid import fluid_constants
    from pollingfluid.rng import rng_stream
    from pollingfluid.simulator import batch_visit_offspring, pack_model, run_trace

    cfg = gated2()
    run_trace(cfg, "warmup", n_sessions=3)
    batch_visit_offspring(cfg, 0, 4)
    vm = br.visit_means(cfg)
    sp = br.perron(br.session_mean_matrix(vm).M)
    br.batch_zeta(cfg, 0, 3, sp, 4)
    br.batch_immigration(cfg, 4)
    fc = fluid_constants(vm, sp, cfg)
    br.sample_xi(cfg, sp, fc.alpha, 2, depth=3)
    k.mtbp_classify(*pack_model(cfg).args(), np.array([1, 0], dtype=np.int64), 5, 100,
                    10_000_000, rng_stream(1, "warm", 0))
    busy_period_moments(cfg, 0, 0, 64)
