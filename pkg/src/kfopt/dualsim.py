"""Independent verification oracles for the cost and its gradient.

Two routes that never touch the error-covariance recursion:

1. A stochastic control system that runs the gain schedule backwards,

       s_{t+1} = A^T s_t + (CA)^T u_t + z_t,   u_t = -K_{M-t-1}^T s_t,
       s_0 ~ N(0, Sigma),  z_t ~ N(0, Sigma) for t <= M-2,  z_{M-1} = 0,

   whose expected quadratic control cost equals f(K). Monte Carlo over this
   system checks the closed-form cost without sharing any code with it.

2. A stacked-noise representation: every multi-step prediction residual is a
   fixed linear map of the concatenated noise vector
   X = (e_0, w_0..w_{T-1}, v_1..v_T), T = M + N. Cost and gradient then
   reduce to exact traces against the block-diagonal covariance of X.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelSpec, NoiseSpec, psd_factor
from .objective import closed_loop, sigma_weight

__all__ = [
    "DualTrajectory",
    "simulate_dual",
    "DualCostEstimate",
    "dual_cost_mc",
    "StackedRepresentation",
    "build_stacked",
    "stacked_cost_and_gradient",
    "residual_cost_offset",
]


@dataclass(frozen=True)
class DualTrajectory:
    """One rollout of the dual control system (kept mainly for tests)."""

    s: np.ndarray   # (M+1, N)
    u: np.ndarray   # (M, m)
    z: np.ndarray   # (M, N), z[M-1] = 0
    cost: float


def _dual_stage_weights(model: ModelSpec, noise: NoiseSpec):
    """Per-stage cost blocks of the dual problem, in dual time order.

    At dual stage t the state weight is Q_{M-t-1}, the control weight is
    C Q_{M-t-1} C^T + R_{M-t}, and the cross weight is C Q_{M-t-1}.
    """
    M = model.horizon
    C = model.C
    state_w, control_w, cross_w = [], [], []
    for t in range(M):
        Qd = noise.Q[M - t - 1]
        Rd = noise.R[M - t - 1]  # = R_{M-t}
        state_w.append(Qd)
        control_w.append(C @ Qd @ C.T + Rd)
        cross_w.append(C @ Qd)
    return state_w, control_w, cross_w


def simulate_dual(model: ModelSpec, noise: NoiseSpec, gains: np.ndarray, seed) -> DualTrajectory:
    """Roll out the dual system once and record its quadratic cost."""
    gains = np.asarray(gains, dtype=float)
    M, N = model.horizon, model.state_dim
    A, C = model.A, model.C
    CA = C @ A
    sig_factor = psd_factor(sigma_weight(model), "Sigma")
    state_w, control_w, cross_w = _dual_stage_weights(model, noise)

    rng = np.random.default_rng(seed)
    s = np.empty((M + 1, N))
    u = np.empty((M, model.obs_dim))
    z = np.zeros((M, N))
    s[0] = sig_factor @ rng.standard_normal(N)
    total = 0.0
    for t in range(M):
        u[t] = -gains[M - t - 1].T @ s[t]
        total += s[t] @ state_w[t] @ s[t]
        total += u[t] @ control_w[t] @ u[t]
        total += 2.0 * u[t] @ cross_w[t] @ s[t]
        if t < M - 1:
            z[t] = sig_factor @ rng.standard_normal(N)
        s[t + 1] = A.T @ s[t] + CA.T @ u[t] + z[t]
    total += s[M] @ noise.P0 @ s[M]
    return DualTrajectory(s=s, u=u, z=z, cost=float(total))


@dataclass(frozen=True)
class DualCostEstimate:
    mean: float
    std_error: float
    samples: int

    def z_score(self, reference: float) -> float:
        return (self.mean - reference) / self.std_error


def dual_cost_mc(
    model: ModelSpec,
    noise: NoiseSpec,
    gains: np.ndarray,
    samples: int,
    seed,
) -> DualCostEstimate:
    """Monte Carlo mean and standard error of the dual control cost.

    Vectorized over samples with a fixed draw order (s_0 first, then z_t per
    stage), so results are reproducible for a given seed. The per-sample cost
    is an even quadratic form in the Gaussian draws, so sign-flip pairing
    would reproduce identical values; plain independent sampling with an
    honest standard error is used instead.
    """
    if samples < 2:
        raise ValueError(f"samples: expected at least 2, got {samples}")
    gains = np.asarray(gains, dtype=float)
    M = model.horizon
    A, CA = model.A, model.C @ model.A
    sig_factor = psd_factor(sigma_weight(model), "Sigma")
    state_w, control_w, cross_w = _dual_stage_weights(model, noise)

    rng = np.random.default_rng(seed)
    # rows are s_t^T per sample
    S = rng.standard_normal((samples, model.state_dim)) @ sig_factor.T
    total = np.zeros(samples)
    for t in range(M):
        U = -S @ gains[M - t - 1]
        total += np.einsum("ij,jk,ik->i", S, state_w[t], S)
        total += np.einsum("ij,jk,ik->i", U, control_w[t], U)
        total += 2.0 * np.einsum("ij,jk,ik->i", U, cross_w[t], S)
        step = S @ A + U @ CA
        if t < M - 1:
            step = step + rng.standard_normal((samples, model.state_dim)) @ sig_factor.T
        S = step
    total += np.einsum("ij,jk,ik->i", S, noise.P0, S)
    return DualCostEstimate(
        mean=float(total.mean()),
        std_error=float(total.std(ddof=1) / np.sqrt(samples)),
        samples=samples,
    )


def _chain_products(Acl: np.ndarray) -> np.ndarray:
    """prod[j, i] = A_{i-1} A_{i-2} ... A_j (identity when i <= j).

    Closed-loop products in descending index order; prod[j, i] propagates a
    stage-j quantity to stage i.
    """
    M, n, _ = Acl.shape
    prod = np.empty((M + 1, M + 1, n, n))
    eye = np.eye(n)
    for j in range(M + 1):
        prod[j, j] = eye
        for i in range(j + 1, M + 1):
            prod[j, i] = Acl[i - 1] @ prod[j, i - 1]
    return prod


@dataclass(frozen=True)
class StackedRepresentation:
    """Residuals as linear maps of the concatenated noise vector.

    rows[i, n-1] is the (m, z) matrix sending
    X = (e_0, w_0..w_{T-1}, v_1..v_T), T = M+N, to the residual of the
    n-step-ahead prediction made after filter stage i. noise_cov is the
    block-diagonal (z, z) covariance of X. Built for one specific gain
    schedule (stored as gains).
    """

    rows: np.ndarray        # (M, N, m, z)
    noise_cov: np.ndarray   # (z, z)
    gains: np.ndarray       # (M, N, m)

    @property
    def z_dim(self) -> int:
        return self.rows.shape[-1]


def _obs_powers(model: ModelSpec, upto: int) -> list[np.ndarray]:
    """[C, CA, CA^2, ..., CA^upto]."""
    out = [model.C]
    for _ in range(upto):
        out.append(out[-1] @ model.A)
    return out


def build_stacked(model: ModelSpec, noise: NoiseSpec, gains: np.ndarray) -> StackedRepresentation:
    """Assemble the residual maps and the stacked noise covariance.

    Block layout of each (m, z) row, X = (e_0, w_0..w_{T-1}, v_1..v_T):

      e_0              -> CA^n A_i...A_0
      w_j, j <= i      -> CA^n A_i...A_{j+1} (I - K_j C)
      w_j, i< j <= i+n -> C A^{i+n-j}
      v_j, j <= i+1    -> -CA^n A_i...A_j K_{j-1}
      v_{i+n+1}        -> I
      all other blocks -> 0
    """
    gains = np.asarray(gains, dtype=float)
    M, N, m = model.horizon, model.state_dim, model.obs_dim
    T = M + N
    z = N * (T + 1) + m * T
    Acl = closed_loop(model, gains)
    prod = _chain_products(Acl)        # prod[j, i+1] = A_i ... A_j
    capow = _obs_powers(model, N)
    eye_n, eye_m = np.eye(N), np.eye(m)

    def w_col(j: int) -> int:
        return N + j * N

    def v_col(j: int) -> int:
        return N * (T + 1) + (j - 1) * m

    rows = np.zeros((M, N, m, z))
    for i in range(M):
        for n in range(1, N + 1):
            row = rows[i, n - 1]
            lead = capow[n]                                   # C A^n
            row[:, 0:N] = lead @ prod[0, i + 1]
            for j in range(i + 1):
                row[:, w_col(j):w_col(j) + N] = lead @ prod[j + 1, i + 1] @ (eye_n - gains[j] @ model.C)
            for j in range(i + 1, i + n + 1):
                row[:, w_col(j):w_col(j) + N] = capow[i + n - j]
            for j in range(1, i + 2):
                row[:, v_col(j):v_col(j) + m] = -lead @ prod[j, i + 1] @ gains[j - 1]
            row[:, v_col(i + n + 1):v_col(i + n + 1) + m] = eye_m

    cov = np.zeros((z, z))
    cov[0:N, 0:N] = noise.P0
    for t in range(T):
        c = w_col(t)
        cov[c:c + N, c:c + N] = noise.Q[t]
        c = v_col(t + 1)
        cov[c:c + m, c:c + m] = noise.R[t]
    return StackedRepresentation(rows=rows, noise_cov=cov, gains=gains.copy())


def stacked_cost_and_gradient(
    rep: StackedRepresentation, model: ModelSpec, gains: np.ndarray
) -> tuple[float, np.ndarray]:
    """Exact expected residual cost and its gradient from the stacked maps.

    The cost is sum_{i,n} tr(rows D rows^T) with D the stacked covariance.
    Perturbing stage t changes each row with i >= t by -G dK W_t where
    G = CA^n A_i...A_{t+1} and W_t collects how stage t's input (the
    innovation) depends on X; contracting through D gives

        grad_t = -2 sum_{i>=t, n} G^T rows[i,n] D W_t^T.

    rep must have been built for the same gain schedule.
    """
    gains = np.asarray(gains, dtype=float)
    if not np.array_equal(rep.gains, gains):
        raise ValueError("stacked representation was built for different gains")
    M, N, m = model.horizon, model.state_dim, model.obs_dim
    T = M + N
    z = rep.z_dim
    D = rep.noise_cov
    Acl = closed_loop(model, gains)
    prod = _chain_products(Acl)
    capow = _obs_powers(model, N)
    CA = capow[1]
    eye_n, eye_m = np.eye(N), np.eye(m)

    value = float(np.einsum("inaz,zw,inaw->", rep.rows, D, rep.rows))

    def w_col(j: int) -> int:
        return N + j * N

    def v_col(j: int) -> int:
        return N * (T + 1) + (j - 1) * m

    grad = np.zeros((M, N, m))
    for t in range(M):
        W = np.zeros((m, z))
        W[:, 0:N] = CA @ prod[0, t]
        for j in range(t):
            W[:, w_col(j):w_col(j) + N] = CA @ prod[j + 1, t] @ (eye_n - gains[j] @ model.C)
        W[:, w_col(t):w_col(t) + N] = model.C
        for j in range(1, t + 1):
            W[:, v_col(j):v_col(j) + m] = -CA @ prod[j, t] @ gains[j - 1]
        W[:, v_col(t + 1):v_col(t + 1) + m] = eye_m

        DW = D @ W.T                                    # (z, m)
        acc = np.zeros((N, m))
        for i in range(t, M):
            for n in range(1, N + 1):
                G = capow[n] @ prod[t + 1, i + 1]       # (m, N)
                acc -= 2.0 * G.T @ rep.rows[i, n - 1] @ DW
        grad[t] = acc
    return value, grad


def residual_cost_offset(model: ModelSpec, noise: NoiseSpec) -> float:
    """Gain-independent gap between the residual cost and f(K).

    The expected sum of squared prediction residuals equals f(K) plus

        sum_{t=0..M-1} sum_{n=1..N} [ sum_{i=0..n-1} tr(Q_{t+n-i} (CA^i)^T CA^i)
                                      + tr(R_{t+n+1}) ]

    coming from noise entering between the prediction and its target.
    """
    M, N = model.horizon, model.state_dim
    capow = _obs_powers(model, N)
    total = 0.0
    for t in range(M):
        for n in range(1, N + 1):
            for i in range(n):
                total += np.trace(noise.Q[t + n - i] @ capow[i].T @ capow[i])
            total += np.trace(noise.R[t + n])   # R_{t+n+1}
    return float(total)
