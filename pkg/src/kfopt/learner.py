"""Learning the gains: prediction residuals, gradient estimation, GD/SGD.

The estimator never sees the noise covariances. For each trajectory the
filter x_hat_{t+1} = A_t x_hat_t + K_t y_{t+1} runs on the observations, and
every stage is scored by its n-step-ahead prediction residuals

    e_{t+1}^n = y_{t+n+1} - C A^n x_hat_{t+1},     n = 1..N.

The batch mean of sum_{t,n} ||e||^2 estimates the cost (up to a constant
that does not depend on the gains), and

    grad_t ~= -(2/L) sum_l w_t(l) innov_t(l)^T

is its exact gradient, where innov_t = y_{t+1} - CA x_hat_t is the stage-t
innovation and w_t back-propagates all residuals the stage influences:

    w_t = r_t + A_{t+1}^T w_{t+1},   r_t = sum_n (C A^n)^T e_{t+1}^n.

In expectation this equals the exact gradient of f, which is what makes
plain SGD on observation batches converge to the Riccati gains.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .model import ModelSpec, NoiseSpec, ObservationBatch, validate
from .objective import closed_loop, cost, gradient
from .riccati import solve_riccati

__all__ = [
    "Prediction",
    "predict",
    "sample_cost",
    "GradientEstimate",
    "estimate_gradient",
    "RunTrace",
    "DivergenceError",
    "run_gd",
    "SGDConfig",
    "run_sgd",
]

# Runs abort once the tracked cost exceeds this multiple of its initial value.
DIVERGENCE_FACTOR = 10.0


@dataclass(frozen=True)
class Prediction:
    """Filter pass over one or more observation sequences.

    Arrays broadcast over any leading batch dimensions of the input:
    estimates[..., t] = x_hat_t (t = 0..M), innovations[..., t] =
    y_{t+1} - CA x_hat_t, residuals[..., t, n-1] = e_{t+1}^n.
    """

    estimates: np.ndarray     # (..., M+1, N)
    innovations: np.ndarray   # (..., M, m)
    residuals: np.ndarray     # (..., M, N, m)

    def residual_cost(self) -> float:
        """Mean over the batch of the summed squared residuals."""
        sq = np.einsum("...tnm,...tnm->...", self.residuals, self.residuals)
        return float(np.mean(sq))


def predict(
    model: ModelSpec, gains: np.ndarray, observations: np.ndarray, initial_estimate: np.ndarray
) -> Prediction:
    """Run the filter and all n-step predictions on observations.

    observations has shape (..., steps, m) with steps >= M + N;
    observations[..., k, :] is y_{k+1}. initial_estimate is x_hat_0 and must
    equal the mean used when the data was generated for the cost estimates
    to be meaningful.
    """
    gains = np.asarray(gains, dtype=float)
    y = np.asarray(observations, dtype=float)
    M, N, m = model.horizon, model.state_dim, model.obs_dim
    if y.shape[-1] != m or y.shape[-2] < M + N:
        raise ValueError(
            f"observations: expected shape (..., >= {M + N}, {m}), got {y.shape}"
        )
    Acl = closed_loop(model, gains)
    CA = model.C @ model.A

    lead = y.shape[:-2]
    xh = np.empty(lead + (M + 1, N))
    xh[..., 0, :] = initial_estimate
    innov = np.empty(lead + (M, m))
    for t in range(M):
        innov[..., t, :] = y[..., t, :] - xh[..., t, :] @ CA.T
        xh[..., t + 1, :] = xh[..., t, :] @ Acl[t].T + y[..., t, :] @ gains[t].T

    capow = CA
    resid = np.empty(lead + (M, N, m))
    for n in range(1, N + 1):
        # residuals of the n-step predictions for every stage at once
        resid[..., :, n - 1, :] = y[..., n:n + M, :] - xh[..., 1:, :] @ capow.T
        capow = capow @ model.A
    return Prediction(estimates=xh, innovations=innov, residuals=resid)


def sample_cost(model: ModelSpec, gains: np.ndarray, batch: ObservationBatch) -> float:
    """Batch-mean squared prediction residual (cost up to a constant)."""
    return predict(model, gains, batch.ys, batch.x0_mean).residual_cost()


@dataclass(frozen=True)
class GradientEstimate:
    """Observation-only gradient estimate and the matching cost estimate."""

    stages: np.ndarray        # (M, N, m)
    residual_cost: float
    batch_size: int

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.stages))


def _estimate_from_prediction(
    model: ModelSpec, gains: np.ndarray, pred: Prediction
) -> np.ndarray:
    """Gradient of the batch residual cost, exactly (no approximation)."""
    M, N = model.horizon, model.state_dim
    Acl = closed_loop(model, gains)
    e = pred.residuals                      # (L, M, N, m)
    L = e.shape[0]

    capow = model.C @ model.A
    r = np.zeros(e.shape[:-2] + (N,))       # (L, M, N)
    for n in range(1, N + 1):
        r += e[..., n - 1, :] @ capow
        capow = capow @ model.A

    w = np.empty_like(r)
    w[:, M - 1] = r[:, M - 1]
    for t in range(M - 2, -1, -1):
        w[:, t] = r[:, t] + w[:, t + 1] @ Acl[t + 1]
    return -2.0 / L * np.einsum("ltn,ltm->tnm", w, pred.innovations)


def estimate_gradient(
    model: ModelSpec, gains: np.ndarray, batch: ObservationBatch
) -> GradientEstimate:
    """Estimate the cost gradient from observations alone.

    The returned stages are the exact gradient of the batch's residual cost
    (finite differences on the same batch agree to machine precision), and an
    unbiased estimate of the true cost gradient.
    """
    gains = np.asarray(gains, dtype=float)
    pred = predict(model, gains, batch.ys, batch.x0_mean)
    g = _estimate_from_prediction(model, gains, pred)
    return GradientEstimate(
        stages=g, residual_cost=pred.residual_cost(), batch_size=batch.size
    )


@dataclass
class RunTrace:
    """Per-iteration record of an optimization run.

    Row k describes the state after k updates (so row 0 is the start and a
    V-iteration run has V+1 rows). cost is the true cost when covariances
    are available to the run, otherwise the batch residual cost;
    normalized_error is (f(K_k) - f*)/f* when computable, else NaN.
    """

    method: str
    step_size: float
    iterations: list[int] = field(default_factory=list)
    cost: list[float] = field(default_factory=list)
    normalized_error: list[float] = field(default_factory=list)
    grad_norm: list[float] = field(default_factory=list)
    wall_seconds: list[float] = field(default_factory=list)
    final_gains: np.ndarray | None = None

    def append(self, k: int, cost: float, err: float, gnorm: float, secs: float) -> None:
        self.iterations.append(int(k))
        self.cost.append(float(cost))
        self.normalized_error.append(float(err))
        self.grad_norm.append(float(gnorm))
        self.wall_seconds.append(float(secs))

    def __len__(self) -> int:
        return len(self.iterations)


class DivergenceError(RuntimeError):
    """Raised when the tracked cost exceeds DIVERGENCE_FACTOR x its start."""

    def __init__(self, message: str, trace: RunTrace):
        super().__init__(message)
        self.trace = trace


def run_gd(
    model: ModelSpec,
    noise: NoiseSpec,
    initial_gains: np.ndarray,
    step_size: float | None = None,
    iterations: int = 1000,
) -> RunTrace:
    """Exact gradient descent with known covariances.

    step_size=None selects the automatic step from the landscape constants
    (guaranteed monotone descent, usually very conservative). The optimal
    cost for the normalized error comes from the Riccati recursion. Raises
    DivergenceError if the cost ever exceeds 10x its initial value.
    """
    report = validate(model, noise)
    if not report.ok:
        failed = "; ".join(f"{c.name}: {c.detail}" for c in report.failures())
        raise ValueError(f"model/noise validation failed: {failed}")
    if step_size is None:
        from .objective import diagnostics

        f_opt = cost(model, noise, solve_riccati(model, noise).gains)
        step_size = diagnostics(model, noise, initial_gains, f_opt).step_size
    else:
        f_opt = cost(model, noise, solve_riccati(model, noise).gains)

    K = np.array(initial_gains, dtype=float)
    trace = RunTrace(method="gd", step_size=float(step_size))
    start = time.perf_counter()
    limit = None
    for k in range(iterations + 1):
        g = gradient(model, noise, K)
        err = (g.value - f_opt) / f_opt if f_opt > 0 else np.nan
        trace.append(k, g.value, err, g.norm, time.perf_counter() - start)
        if limit is None:
            limit = DIVERGENCE_FACTOR * g.value
        if g.value > limit:
            trace.final_gains = K
            raise DivergenceError(
                f"cost {g.value:.6g} exceeded {limit:.6g} at iteration {k} "
                f"(step size {step_size:g} too large)",
                trace,
            )
        if k < iterations:
            K = K - step_size * g.stages
    trace.final_gains = K
    return trace


@dataclass(frozen=True)
class SGDConfig:
    """Settings for an observation-only SGD run.

    batch_size L and master_seed identify the batch when run_sgd is handed a
    noise spec to sample from. resample_each_iter draws a fresh batch every
    iteration instead of reusing one fixed batch (the default matches the
    fixed-batch scheme: one batch up front, reused for all V iterations).
    """

    step_size: float = 8e-4
    iterations: int = 4000
    batch_size: int = 200
    master_seed: int = 0
    resample_each_iter: bool = False


def run_sgd(
    model: ModelSpec,
    initial_gains: np.ndarray,
    config: SGDConfig,
    batch_source,
    eval_noise: NoiseSpec | None = None,
) -> RunTrace:
    """SGD on the observation-only gradient estimate.

    batch_source is either an ObservationBatch (used as-is), a NoiseSpec
    (sampled once with config.batch_size/master_seed; resampled per
    iteration when config.resample_each_iter), or a callable k -> batch.

    The update never uses noise covariances. eval_noise, when given, is used
    purely for reporting: the trace's cost column becomes the true f(K_k)
    and normalized_error is measured against the Riccati optimum. Otherwise
    cost holds the batch residual cost and normalized_error is NaN.
    """
    from .model import sample_batch

    K = np.array(initial_gains, dtype=float)

    if isinstance(batch_source, ObservationBatch):
        get_batch = lambda k: batch_source
    elif isinstance(batch_source, NoiseSpec):
        if config.resample_each_iter:
            get_batch = lambda k: sample_batch(
                model, batch_source, config.batch_size, config.master_seed + k
            )
        else:
            fixed_batch = sample_batch(
                model, batch_source, config.batch_size, config.master_seed
            )
            get_batch = lambda k: fixed_batch
    elif callable(batch_source):
        get_batch = batch_source
    else:
        raise TypeError(
            "batch_source: expected ObservationBatch, NoiseSpec, or callable, "
            f"got {type(batch_source).__name__}"
        )

    f_opt = None
    if eval_noise is not None:
        f_opt = cost(model, eval_noise, solve_riccati(model, eval_noise).gains)

    trace = RunTrace(method="sgd", step_size=float(config.step_size))
    start = time.perf_counter()
    limit = None
    for k in range(config.iterations + 1):
        est = estimate_gradient(model, K, get_batch(k))
        if eval_noise is not None:
            f_val = cost(model, eval_noise, K)
            err = (f_val - f_opt) / f_opt if f_opt > 0 else np.nan
            tracked = f_val
        else:
            tracked = est.residual_cost
            err = np.nan
        trace.append(k, tracked, err, est.norm, time.perf_counter() - start)
        if limit is None:
            limit = DIVERGENCE_FACTOR * tracked
        if tracked > limit:
            trace.final_gains = K
            raise DivergenceError(
                f"tracked cost {tracked:.6g} exceeded {limit:.6g} at iteration {k} "
                f"(step size {config.step_size:g} too large)",
                trace,
            )
        if k < config.iterations:
            K = K - config.step_size * est.stages
    trace.final_gains = K
    return trace
