"""Shared fixtures: the built-in benchmark instance and a random-instance factory."""

import numpy as np
import pytest

from kfopt import NoiseSpec, ModelSpec, cost, load_instance, solve_riccati, validate


def make_instance(seed, *, max_state=4, max_obs=4, max_horizon=5):
    """Random valid (model, noise) pair, deterministic in seed.

    Mixes constant and time-varying schedules, zero and random PSD P0, and
    state matrices with spectral norm up to 1.1. Redraws until validation
    passes (non-generic draws like unobservable pairs are measure-zero but
    the retry keeps the factory total).
    """
    rng = np.random.default_rng(seed)
    for _ in range(100):
        N = int(rng.integers(2, max_state + 1))
        m = int(rng.integers(1, max_obs + 1))
        M = int(rng.integers(1, max_horizon + 1))
        A = rng.normal(size=(N, N))
        A *= rng.uniform(0.3, 1.1) / np.linalg.norm(A, 2)
        C = rng.normal(size=(m, N))
        steps = M + N

        def psd(d, floor=0.15):
            W = rng.normal(size=(d, d))
            return W @ W.T / d + floor * np.eye(d)

        if rng.random() < 0.5:
            Q = np.repeat(psd(N)[None], steps, axis=0)
        else:
            Q = np.array([psd(N) for _ in range(steps)])
        if rng.random() < 0.5:
            R = np.repeat(psd(m)[None], steps, axis=0)
        else:
            R = np.array([psd(m) for _ in range(steps)])
        P0 = np.zeros((N, N)) if rng.random() < 0.3 else psd(N, floor=0.0)
        model = ModelSpec(A=A, C=C, horizon=M)
        noise = NoiseSpec(Q=Q, R=R, P0=P0, x0_mean=rng.normal(size=N))
        if validate(model, noise).ok and np.linalg.cond(A) < 1e3:
            return model, noise
    raise RuntimeError(f"no valid instance found for seed {seed}")


def random_gains(model, seed, scale=0.1):
    """Gain schedule with entries ~ scale * N(0, 1), deterministic in seed."""
    rng = np.random.default_rng(seed)
    return scale * rng.normal(size=(model.horizon, model.state_dim, model.obs_dim))


def rel_gap(a, b):
    """Relative Frobenius disagreement between two stacked arrays."""
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / denom)


@pytest.fixture(scope="session")
def benchmark():
    return load_instance()


@pytest.fixture(scope="session")
def drift_instance():
    return load_instance(drift=True)


@pytest.fixture(scope="session")
def benchmark_riccati(benchmark):
    model, noise = benchmark
    return solve_riccati(model, noise)


@pytest.fixture(scope="session")
def benchmark_opt_cost(benchmark, benchmark_riccati):
    model, noise = benchmark
    return cost(model, noise, benchmark_riccati.gains)
