"""Prediction cost of a gain schedule, its exact gradient, and diagnostics.

The cost of gains K = (K_0, ..., K_{M-1}) is

    f(K) = sum_{t=0}^{M-1} tr(P_{t+1} Sigma)

where P_t is the estimation-error covariance under K and Sigma weights the
state error by how strongly it shows up in the next N observations:

    Sigma = sum_{n=1}^{N} (C A^n)^T (C A^n).

f equals the expected sum of squared multi-step observation prediction
errors up to an additive constant, which is what makes it learnable from
data alone (see kfopt.learner). Everything here assumes known covariances.

The gradient has the closed form  grad_t f = 2 Sigma_t (K_t H_t - Z_t)
with Sigma_t a closed-loop weighted sum of Sigma computed by a backward
sweep, and H_t, Z_t the innovation/cross covariances built from P_t. The
stationarity residual E_t = K_t H_t - Z_t vanishes exactly at the optimal
(Riccati) gains.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelSpec, NoiseSpec

__all__ = [
    "closed_loop",
    "sigma_weight",
    "stage_weights",
    "apply_propagation",
    "error_covariances",
    "cost",
    "CostGradient",
    "gradient",
    "almost_smoothness_gap",
    "DiagnosticConstants",
    "diagnostics",
]

# Guard floor in the closed-loop radius bound rho_max = max(..., 1 + RADIUS_GUARD).
RADIUS_GUARD = 1e-3


def _check_gains(model: ModelSpec, gains: np.ndarray) -> np.ndarray:
    gains = np.asarray(gains, dtype=float)
    want = (model.horizon, model.state_dim, model.obs_dim)
    if gains.shape != want:
        raise ValueError(f"gains: expected shape {want}, got {gains.shape}")
    return gains


def closed_loop(model: ModelSpec, gains: np.ndarray) -> np.ndarray:
    """Closed-loop transitions A_t = A - K_t C A, shape (M, N, N)."""
    gains = _check_gains(model, gains)
    CA = model.C @ model.A
    return model.A[None, :, :] - gains @ CA


def sigma_weight(model: ModelSpec) -> np.ndarray:
    """Observability-style weight Sigma = sum_{n=1..N} (C A^n)^T (C A^n)."""
    sig = np.zeros((model.state_dim, model.state_dim))
    G = model.C
    for _ in range(model.state_dim):
        G = G @ model.A
        sig += G.T @ G
    return 0.5 * (sig + sig.T)


def apply_propagation(model: ModelSpec, gains: np.ndarray, t: int, X: np.ndarray) -> np.ndarray:
    """Accumulated closed-loop propagation of a symmetric weight X.

    Computes X plus every suffix product of the closed-loop maps from stage t
    onward applied to X:

        G_t(X) = X + sum over suffixes (A_t^T ... A_j^T) X (A_j ... A_t),
        j = t .. M-1,

    via the recursion G_M(X) = X, G_j(X) = X + A_j^T G_{j+1}(X) A_j. Valid
    for 0 <= t <= M; t = M returns X unchanged.
    """
    M = model.horizon
    if not 0 <= t <= M:
        raise ValueError(f"t: expected 0 <= t <= {M}, got {t}")
    X = np.asarray(X, dtype=float)
    Acl = closed_loop(model, gains)
    out = X
    for j in range(M - 1, t - 1, -1):
        out = X + Acl[j].T @ out @ Acl[j]
    return out


def stage_weights(model: ModelSpec, gains: np.ndarray, sigma: np.ndarray | None = None) -> np.ndarray:
    """Per-stage gradient weights Sigma_t, shape (M, N, N).

    Sigma_t is the propagation of Sigma through stages t+1..M-1:
    Sigma_{M-1} = Sigma and Sigma_t = Sigma + A_{t+1}^T Sigma_{t+1} A_{t+1},
    computed in one backward sweep (suffixes shared between stages).
    """
    if sigma is None:
        sigma = sigma_weight(model)
    Acl = closed_loop(model, gains)
    M = model.horizon
    out = np.empty((M, model.state_dim, model.state_dim))
    out[M - 1] = sigma
    for t in range(M - 2, -1, -1):
        out[t] = sigma + Acl[t + 1].T @ out[t + 1] @ Acl[t + 1]
    return out


def error_covariances(model: ModelSpec, noise: NoiseSpec, gains: np.ndarray) -> np.ndarray:
    """Estimation-error covariances P_0..P_M under the given gains.

    P_0 = P0 and
    P_{t+1} = A_t P_t A_t^T + (I - K_t C) Q_t (I - K_t C)^T + K_t R_{t+1} K_t^T,
    symmetrized every step.
    """
    gains = _check_gains(model, gains)
    Acl = closed_loop(model, gains)
    n = model.state_dim
    eye = np.eye(n)
    P = np.empty((model.horizon + 1, n, n))
    P[0] = 0.5 * (noise.P0 + noise.P0.T)
    for t in range(model.horizon):
        IK = eye - gains[t] @ model.C
        Pn = (
            Acl[t] @ P[t] @ Acl[t].T
            + IK @ noise.Q[t] @ IK.T
            + gains[t] @ noise.R[t] @ gains[t].T
        )
        P[t + 1] = 0.5 * (Pn + Pn.T)
    return P


def cost(model: ModelSpec, noise: NoiseSpec, gains: np.ndarray) -> float:
    """f(K) = sum_t tr(P_{t+1} Sigma), summed in ascending stage order."""
    P = error_covariances(model, noise, gains)
    sig = sigma_weight(model)
    return float(sum(np.trace(P[t + 1] @ sig) for t in range(model.horizon)))


@dataclass(frozen=True)
class CostGradient:
    """Cost, gradient, and the per-stage matrices behind them.

    stages[t] = grad of f w.r.t. K_t = 2 Sigma_t E_t;
    stationarity[t] = E_t = K_t H_t - Z_t (zero exactly at the optimal gains);
    innovation_cov[t] = H_t, which also equals the curvature factor Lambda_t;
    cross_cov[t] = Z_t; error_cov[t] = P_t; weights[t] = Sigma_t.
    """

    value: float
    stages: np.ndarray          # (M, N, m)
    stationarity: np.ndarray    # (M, N, m)
    innovation_cov: np.ndarray  # (M, m, m)
    cross_cov: np.ndarray       # (M, N, m)
    error_cov: np.ndarray       # (M+1, N, N)
    weights: np.ndarray         # (M, N, N)

    def __post_init__(self):
        for name in ("stages", "stationarity", "innovation_cov", "cross_cov", "error_cov", "weights"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def norm(self) -> float:
        """Frobenius norm of the full gradient."""
        return float(np.linalg.norm(self.stages))


def gradient(model: ModelSpec, noise: NoiseSpec, gains: np.ndarray) -> CostGradient:
    """Exact cost gradient: grad_t f = 2 Sigma_t (K_t H_t - Z_t)."""
    gains = _check_gains(model, gains)
    A, C, M = model.A, model.C, model.horizon
    CA = C @ A
    P = error_covariances(model, noise, gains)
    sig = sigma_weight(model)
    sw = stage_weights(model, gains, sig)

    H = np.empty((M, model.obs_dim, model.obs_dim))
    Z = np.empty((M, model.state_dim, model.obs_dim))
    E = np.empty_like(gains)
    g = np.empty_like(gains)
    value = 0.0
    for t in range(M):
        Ht = CA @ P[t] @ CA.T + noise.R[t] + C @ noise.Q[t] @ C.T
        H[t] = 0.5 * (Ht + Ht.T)
        Z[t] = A @ P[t] @ CA.T + noise.Q[t] @ C.T
        E[t] = gains[t] @ H[t] - Z[t]
        g[t] = 2.0 * sw[t] @ E[t]
        value += np.trace(P[t + 1] @ sig)
    return CostGradient(
        value=float(value),
        stages=g,
        stationarity=E,
        innovation_cov=H,
        cross_cov=Z,
        error_cov=P,
        weights=sw,
    )


def almost_smoothness_gap(
    model: ModelSpec, noise: NoiseSpec, gains: np.ndarray, other: np.ndarray
) -> float:
    """Residual of the exact expansion of f(K') - f(K); zero up to rounding.

    The cost difference decomposes stage by stage as

        f(K') - f(K) = sum_t tr(2 Sigma'_t E_t dK_t^T + Sigma'_t dK_t Lambda_t dK_t^T)

    with dK = K' - K, Sigma'_t evaluated at K', and E_t, Lambda_t (= H_t) at
    K. Returns expansion minus actual difference, for verifying the identity.
    """
    gains = _check_gains(model, gains)
    other = _check_gains(model, other)
    g = gradient(model, noise, gains)
    sw_other = stage_weights(model, other)
    dK = other - gains
    expansion = 0.0
    for t in range(model.horizon):
        expansion += 2.0 * np.trace(sw_other[t] @ g.stationarity[t] @ dK[t].T)
        expansion += np.trace(sw_other[t] @ dK[t] @ g.innovation_cov[t] @ dK[t].T)
    actual = cost(model, noise, other) - g.value
    return float(expansion - actual)


@dataclass(frozen=True)
class DiagnosticConstants:
    """Landscape bounds and step-size constants for the current gains.

    All quantities are computed, not estimated:

    - error_cov_bound:   bounds every ||P_t||       (f/sigma_min(Sigma) + ||P0||)
    - stage_weight_bound: bounds every ||Sigma_t||  (f/sigma_min(A^-T Q A^-1) + N sigma_max(Sigma))
    - gain_norm_bound:   bounds sum_t ||K_t||
    - pl_upper:          f - f* <= pl_upper * sum_t ||grad_t f||_F^2
    - pl_lower:          f - f* >= pl_lower * sum_t ||E_t||_F^2
    - step_bound_drift / step_bound_curvature: the two step-size ceilings; a
      fixed step no larger than their min descends monotonically
    - step_size:         min of the two bounds (the automatic choice)
    - contraction_rate:  per-iteration rate alpha = step_size / (8 pl_upper);
      the cost gap decays at least like (1 - 2 alpha)^k
    - closed_loop_radius: max_t max(||A_t|| + 1/2, 1 + guard) at these gains
    - closed_loop_radius_bound: gain-independent ceiling used inside
      step_bound_drift
    """

    cost: float
    cost_opt: float
    sigma_min: float
    sigma_max: float
    error_cov_bound: float
    stage_weight_bound: float
    stage_weight_bound_opt: float
    gain_norm_bound: float
    pl_upper: float
    pl_lower: float
    step_bound_drift: float
    step_bound_curvature: float
    step_size: float
    contraction_rate: float
    closed_loop_radius: float
    closed_loop_radius_bound: float

    def rows(self) -> list[tuple[str, float]]:
        return [(f, float(getattr(self, f))) for f in self.__dataclass_fields__]


def _spectral(mat: np.ndarray) -> float:
    return float(np.linalg.norm(mat, 2))


def diagnostics(
    model: ModelSpec, noise: NoiseSpec, gains: np.ndarray, cost_opt: float
) -> DiagnosticConstants:
    """Compute every landscape constant at the given gains.

    cost_opt must be the optimal cost (from the Riccati gains). Raises
    ValueError if cost_opt exceeds the current cost beyond rounding, which
    indicates swapped arguments.
    """
    gains = _check_gains(model, gains)
    A, C, M = model.A, model.C, model.horizon
    N = model.state_dim
    CA = C @ A
    sig = sigma_weight(model)
    sig_eigs = np.linalg.eigvalsh(sig)
    sigma_min, sigma_max = float(sig_eigs[0]), float(sig_eigs[-1])

    f_val = cost(model, noise, gains)
    if cost_opt > f_val * (1 + 1e-9) + 1e-12:
        raise ValueError(
            f"cost_opt={cost_opt!r} exceeds cost at the given gains ({f_val!r}); "
            "arguments are swapped or cost_opt is not optimal"
        )
    gap = max(f_val - cost_opt, 0.0)

    # schedule extrema over the filter stages t = 0..M-1
    Ainv = np.linalg.inv(A)
    sigma_min_qa = min(
        float(np.linalg.eigvalsh(Ainv.T @ noise.Q[t] @ Ainv)[0]) for t in range(M)
    )
    sigma_min_r = min(float(np.linalg.eigvalsh(noise.R[t])[0]) for t in range(M))
    sigma_max_cqr = max(
        float(np.linalg.eigvalsh(C @ noise.Q[t] @ C.T + noise.R[t])[-1]) for t in range(M)
    )

    err_bound = f_val / sigma_min + _spectral(noise.P0)
    sw_bound = f_val / sigma_min_qa + N * sigma_max
    sw_bound_opt = cost_opt / sigma_min_qa + N * sigma_max

    pl_upper = sw_bound_opt / (4.0 * sigma_min_r * sigma_min**2)
    norm_ca = _spectral(CA)
    pl_lower = sigma_min / (4.0 * (sigma_max_cqr + norm_ca**2 * err_bound))

    sum_cq = sum(_spectral(C @ noise.Q[t]) for t in range(M))
    gain_bound = (
        np.sqrt(M * gap / pl_lower) + err_bound * norm_ca * _spectral(A) + sum_cq
    ) / sigma_min_r

    radius_bound = max(_spectral(A) + norm_ca * gain_bound, 1.0 + RADIUS_GUARD)
    Acl = closed_loop(model, gains)
    radius = max(max(_spectral(Acl[t]) + 0.5, 1.0 + RADIUS_GUARD) for t in range(M))

    geo = (radius_bound ** (2 * M) - 1.0) / (radius_bound**2 - 1.0)
    if gap > 0.0:
        step_drift = min(1.0, sigma_min) / (
            2.0
            * sw_bound
            * np.sqrt(M * gap / pl_lower)
            * geo
            * (2.0 * radius_bound + 1.0)
            * _spectral(sig)
            * max(norm_ca, 1.0)
        )
    else:
        step_drift = np.inf
    step_curv = 1.0 / (4.0 * (sigma_max_cqr + norm_ca**2 * err_bound) * (0.5 + sw_bound))
    step = min(step_drift, step_curv)

    return DiagnosticConstants(
        cost=f_val,
        cost_opt=float(cost_opt),
        sigma_min=sigma_min,
        sigma_max=sigma_max,
        error_cov_bound=err_bound,
        stage_weight_bound=sw_bound,
        stage_weight_bound_opt=sw_bound_opt,
        gain_norm_bound=float(gain_bound),
        pl_upper=float(pl_upper),
        pl_lower=float(pl_lower),
        step_bound_drift=float(step_drift),
        step_bound_curvature=float(step_curv),
        step_size=float(step),
        contraction_rate=float(step / (8.0 * pl_upper)),
        closed_loop_radius=float(radius),
        closed_loop_radius_bound=float(radius_bound),
    )
