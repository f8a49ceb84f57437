"""Forward Riccati recursion for the optimal finite-horizon filter gains."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .model import ModelSpec, NoiseSpec, validate

__all__ = ["RiccatiSolution", "solve_riccati"]

# Innovation covariances worse-conditioned than this abort the recursion;
# a warning is emitted one decade earlier.
COND_LIMIT = 1e12
COND_WARN = 1e8


@dataclass(frozen=True)
class RiccatiSolution:
    """Optimal gains and the matrices the recursion produces along the way.

    gains[t] = K*_t (N, m); error_cov[t] = P*_t (M+1 entries, P*_0 = P0);
    innovation_cov[t] = H*_t (m, m); cross_cov[t] = Z*_t (N, m).
    """

    gains: np.ndarray
    error_cov: np.ndarray
    innovation_cov: np.ndarray
    cross_cov: np.ndarray

    def __post_init__(self):
        for name in ("gains", "error_cov", "innovation_cov", "cross_cov"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


def solve_riccati(model: ModelSpec, noise: NoiseSpec) -> RiccatiSolution:
    """Run the forward recursion for t = 0..M-1.

        H_t = CA P_t (CA)^T + R_{t+1} + C Q_t C^T
        Z_t = A P_t (CA)^T + Q_t C^T
        K*_t = Z_t H_t^{-1}            (via a linear solve, H_t is SPD)
        P_{t+1} = A P_t A^T + Q_t - K*_t Z_t^T   (symmetrized each step)

    Raises ValueError if validation fails or an H_t has condition number
    above 1e12 (the gains would be numerically meaningless); warns above 1e8.
    """
    report = validate(model, noise)
    if not report.ok:
        failed = "; ".join(f"{c.name}: {c.detail}" for c in report.failures())
        raise ValueError(f"model/noise validation failed: {failed}")

    A, C, M = model.A, model.C, model.horizon
    CA = C @ A
    n, m = model.state_dim, model.obs_dim

    P = np.empty((M + 1, n, n))
    K = np.empty((M, n, m))
    H = np.empty((M, m, m))
    Z = np.empty((M, n, m))
    P[0] = 0.5 * (noise.P0 + noise.P0.T)

    for t in range(M):
        Ht = CA @ P[t] @ CA.T + noise.R[t] + C @ noise.Q[t] @ C.T
        Ht = 0.5 * (Ht + Ht.T)
        eigs = np.linalg.eigvalsh(Ht)
        if eigs[0] <= 0.0 or eigs[-1] / eigs[0] > COND_LIMIT:
            raise ValueError(
                f"innovation covariance at step {t} is singular or nearly so "
                f"(eigenvalues [{eigs[0]:.3e}, {eigs[-1]:.3e}]); noise covariances "
                "must be positive definite"
            )
        if eigs[-1] / eigs[0] > COND_WARN:
            warnings.warn(
                f"innovation covariance at step {t} has condition number "
                f"{eigs[-1] / eigs[0]:.2e}; gains may lose precision",
                RuntimeWarning,
                stacklevel=2,
            )
        Zt = A @ P[t] @ CA.T + noise.Q[t] @ C.T
        Kt = np.linalg.solve(Ht, Zt.T).T
        Pn = A @ P[t] @ A.T + noise.Q[t] - Kt @ Zt.T
        P[t + 1] = 0.5 * (Pn + Pn.T)
        H[t], Z[t], K[t] = Ht, Zt, Kt

    return RiccatiSolution(gains=K, error_cov=P, innovation_cov=H, cross_cov=Z)
