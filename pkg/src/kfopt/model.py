"""Linear-Gaussian state-space model: specification, validation, simulation.

The system is

    x_{t+1} = A x_t + w_t,          w_t ~ N(0, Q_t)
    y_{t+1} = C x_{t+1} + v_{t+1},  v_{t+1} ~ N(0, R_{t+1})
    x_0 ~ N(x0_mean, P0)

with all noise terms mutually independent. A filter with gain schedule
K = (K_0, ..., K_{M-1}) runs for M steps, but its quality is scored on
predictions up to N steps past each filter step, so simulation always
produces M + N observations and the noise schedules cover that range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ModelSpec",
    "NoiseSpec",
    "Trajectory",
    "ObservationBatch",
    "ValidationCheck",
    "ValidationReport",
    "validate",
    "simulate",
    "sample_batch",
    "trajectory_seed",
    "zero_gains",
    "model_from_config",
    "psd_factor",
]

# Relative eigenvalue tolerance for accepting a covariance as PSD.
PSD_TOL = 1e-10


def _as_matrix(value, name: str, shape: tuple[int, ...] | None = None) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if shape is not None and arr.shape != shape:
        raise ValueError(f"{name}: expected shape {shape}, got {arr.shape}")
    return arr


def _freeze(obj, **arrays) -> None:
    for name, arr in arrays.items():
        arr.flags.writeable = False
        object.__setattr__(obj, name, arr)


def psd_factor(cov: np.ndarray, name: str = "covariance") -> np.ndarray:
    """Factor F with F F^T = cov for a PSD matrix, tolerating zero eigenvalues.

    Strictly PD inputs could use Cholesky, but P0 = 0 is a legitimate input
    (deterministic initial state), so the factor comes from a symmetric
    eigendecomposition with small negative eigenvalues (>= -PSD_TOL * ||cov||)
    clipped to zero. Anything below the tolerance is a hard error: no jitter.
    """
    cov = np.asarray(cov, dtype=float)
    w, v = np.linalg.eigh(0.5 * (cov + cov.T))
    bound = -PSD_TOL * max(abs(w[-1]), 1e-300)
    if w[0] < bound:
        raise ValueError(
            f"{name} is not positive semidefinite: min eigenvalue {w[0]:.3e}"
        )
    return v * np.sqrt(np.clip(w, 0.0, None))


@dataclass(frozen=True)
class ModelSpec:
    """System matrices and filter horizon.

    Attributes
    ----------
    A : (N, N) state transition matrix.
    C : (m, N) observation matrix.
    horizon : number of filter steps M (gains K_0..K_{M-1}).
    """

    A: np.ndarray
    C: np.ndarray
    horizon: int

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"A: expected a square matrix, got shape {A.shape}")
        C = _as_matrix(self.C, "C")
        if C.ndim != 2 or C.shape[1] != A.shape[0]:
            raise ValueError(
                f"C: expected shape (m, {A.shape[0]}) to match A, got {C.shape}"
            )
        if not isinstance(self.horizon, (int, np.integer)) or self.horizon < 1:
            raise ValueError(f"horizon: expected a positive integer, got {self.horizon!r}")
        _freeze(self, A=A, C=C)
        object.__setattr__(self, "horizon", int(self.horizon))

    @property
    def state_dim(self) -> int:
        return self.A.shape[0]

    @property
    def obs_dim(self) -> int:
        return self.C.shape[0]

    @property
    def steps(self) -> int:
        """Number of simulated time steps: horizon + state_dim."""
        return self.horizon + self.state_dim


@dataclass(frozen=True)
class NoiseSpec:
    """Noise covariances and initial-state distribution.

    Schedules are dense: Q[t] is the process-noise covariance of w_t and
    R[t] is the measurement-noise covariance of v_{t+1}, for
    t = 0 .. steps-1 where steps >= horizon + state_dim. Constant
    covariances are expanded to full schedules by the constructors below.
    """

    Q: np.ndarray          # (steps, N, N)
    R: np.ndarray          # (steps, m, m)
    P0: np.ndarray         # (N, N)
    x0_mean: np.ndarray    # (N,)

    def __post_init__(self):
        Q = np.array(self.Q, dtype=float)
        R = np.array(self.R, dtype=float)
        if Q.ndim != 3 or Q.shape[1] != Q.shape[2]:
            raise ValueError(f"Q: expected shape (steps, N, N), got {Q.shape}")
        if R.ndim != 3 or R.shape[1] != R.shape[2]:
            raise ValueError(f"R: expected shape (steps, m, m), got {R.shape}")
        if Q.shape[0] != R.shape[0]:
            raise ValueError(
                f"Q and R schedules disagree on length: {Q.shape[0]} vs {R.shape[0]}"
            )
        n = Q.shape[1]
        P0 = _as_matrix(self.P0, "P0", (n, n))
        x0_mean = np.array(self.x0_mean, dtype=float)
        if x0_mean.shape != (n,):
            raise ValueError(f"x0_mean: expected shape ({n},), got {x0_mean.shape}")
        _freeze(self, Q=Q, R=R, P0=P0, x0_mean=x0_mean)

    @property
    def steps(self) -> int:
        return self.Q.shape[0]

    @classmethod
    def constant(cls, Q, R, P0, x0_mean, steps: int) -> "NoiseSpec":
        """Time-invariant covariances expanded to a dense schedule."""
        Q = _as_matrix(Q, "Q")
        R = _as_matrix(R, "R")
        return cls(
            Q=np.repeat(Q[None, :, :], steps, axis=0),
            R=np.repeat(R[None, :, :], steps, axis=0),
            P0=P0,
            x0_mean=x0_mean,
        )

    @classmethod
    def drifting(cls, Q, dQ, R, P0, x0_mean, steps: int) -> "NoiseSpec":
        """Process noise growing linearly in time: Q_t = Q + t * dQ."""
        Q = _as_matrix(Q, "Q")
        dQ = _as_matrix(dQ, "dQ", Q.shape)
        R = _as_matrix(R, "R")
        Qs = np.array([Q + t * dQ for t in range(steps)])
        return cls(
            Q=Qs,
            R=np.repeat(R[None, :, :], steps, axis=0),
            P0=P0,
            x0_mean=x0_mean,
        )


def zero_gains(model: ModelSpec) -> np.ndarray:
    """All-zero gain schedule, shape (horizon, N, m)."""
    return np.zeros((model.horizon, model.state_dim, model.obs_dim))


@dataclass(frozen=True)
class Trajectory:
    """One simulated run: y[t] = y_{t+1}, x[t] = x_t (states kept for tests)."""

    y: np.ndarray   # (steps, m)
    x: np.ndarray   # (steps+1, N)

    def __post_init__(self):
        _freeze(self, y=np.asarray(self.y, dtype=float), x=np.asarray(self.x, dtype=float))


@dataclass(frozen=True)
class ObservationBatch:
    """L observation sequences plus the filter initialization they share.

    ys[l, t] is y_{t+1} of trajectory l. States are None unless the batch
    was sampled with keep_states=True (testing only).
    """

    ys: np.ndarray                 # (L, steps, m)
    x0_mean: np.ndarray            # (N,)
    master_seed: int
    xs: np.ndarray | None = None   # (L, steps+1, N) when retained

    def __post_init__(self):
        ys = np.asarray(self.ys, dtype=float)
        if ys.ndim != 3:
            raise ValueError(f"ys: expected shape (L, steps, m), got {ys.shape}")
        x0_mean = np.asarray(self.x0_mean, dtype=float)
        _freeze(self, ys=ys, x0_mean=x0_mean)
        if self.xs is not None:
            xs = np.asarray(self.xs, dtype=float)
            _freeze(self, xs=xs)

    @property
    def size(self) -> int:
        return self.ys.shape[0]


@dataclass(frozen=True)
class ValidationCheck:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[ValidationCheck, ...]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[ValidationCheck]:
        return [c for c in self.checks if not c.passed]

    def summary(self) -> str:
        lines = []
        for c in self.checks:
            status = "ok " if c.passed else "FAIL"
            lines.append(f"[{status}] {c.name}: {c.detail}")
        return "\n".join(lines)


def validate(model: ModelSpec, noise: NoiseSpec) -> ValidationReport:
    """Check the standing assumptions and cross-shape consistency.

    Checks: dimensions agree between model and noise; schedules are long
    enough (>= horizon + state_dim); every Q_t and R_t is symmetric positive
    definite; P0 is PSD; (C, A) is observable; A is invertible.
    """
    checks: list[ValidationCheck] = []
    n, m = model.state_dim, model.obs_dim

    shape_ok = noise.Q.shape[1] == n and noise.R.shape[1] == m
    checks.append(
        ValidationCheck(
            "dimensions",
            shape_ok,
            f"A {model.A.shape}, C {model.C.shape}, Q blocks {noise.Q.shape[1:]}, "
            f"R blocks {noise.R.shape[1:]}",
        )
    )
    if not shape_ok:
        return ValidationReport(tuple(checks))

    need = model.steps
    checks.append(
        ValidationCheck(
            "schedule-length",
            noise.steps >= need,
            f"have {noise.steps} steps, need >= {need} (horizon + state_dim)",
        )
    )

    def min_eig_sym(mats: np.ndarray) -> tuple[float, float]:
        worst_eig, worst_asym = np.inf, 0.0
        for mat in mats:
            worst_asym = max(worst_asym, float(np.max(np.abs(mat - mat.T))))
            worst_eig = min(worst_eig, float(np.linalg.eigvalsh(0.5 * (mat + mat.T))[0]))
        return worst_eig, worst_asym

    for label, mats in (("Q", noise.Q), ("R", noise.R)):
        lo, asym = min_eig_sym(mats)
        checks.append(
            ValidationCheck(
                f"{label}-positive-definite",
                lo > 0.0 and asym < 1e-8,
                f"min eigenvalue {lo:.3e}, max asymmetry {asym:.1e}",
            )
        )

    p0_eigs = np.linalg.eigvalsh(0.5 * (noise.P0 + noise.P0.T))
    p0_ok = p0_eigs[0] >= -PSD_TOL * max(abs(p0_eigs[-1]), 1e-300)
    checks.append(
        ValidationCheck("P0-positive-semidefinite", bool(p0_ok), f"min eigenvalue {p0_eigs[0]:.3e}")
    )

    obs_rows = [model.C]
    for _ in range(n - 1):
        obs_rows.append(obs_rows[-1] @ model.A)
    obs_rank = int(np.linalg.matrix_rank(np.vstack(obs_rows)))
    checks.append(
        ValidationCheck("observability", obs_rank == n, f"observability matrix rank {obs_rank}/{n}")
    )

    sv = np.linalg.svd(model.A, compute_uv=False)
    a_ok = sv[-1] > 1e-12 * max(sv[0], 1e-300)
    checks.append(
        ValidationCheck("A-invertible", bool(a_ok), f"singular values in [{sv[-1]:.3e}, {sv[0]:.3e}]")
    )

    return ValidationReport(tuple(checks))


def _noise_factors(noise: NoiseSpec, steps: int):
    """Cholesky factors for the PD schedules, eigen factor for P0."""
    try:
        cq = np.linalg.cholesky(noise.Q[:steps])
        cr = np.linalg.cholesky(noise.R[:steps])
    except np.linalg.LinAlgError as exc:
        raise ValueError(
            "noise covariances must be positive definite for simulation"
        ) from exc
    return cq, cr, psd_factor(noise.P0, "P0")


def simulate(
    model: ModelSpec,
    noise: NoiseSpec,
    seed,
    *,
    zero_noise: bool = False,
) -> Trajectory:
    """Draw one trajectory of length model.steps.

    Draw order is fixed (x_0, then per step w_t and v_{t+1}) so a given seed
    always yields the same trajectory. With zero_noise=True all noise draws
    are suppressed and x_0 = x0_mean: y_{t+1} = C A^{t+1} x0_mean exactly.
    """
    steps = model.steps
    if noise.steps < steps:
        raise ValueError(f"noise schedule has {noise.steps} steps, need {steps}")
    n, m = model.state_dim, model.obs_dim
    rng = np.random.default_rng(seed)
    if zero_noise:
        cq = cr = f0 = None
    else:
        cq, cr, f0 = _noise_factors(noise, steps)

    x = np.empty((steps + 1, n))
    y = np.empty((steps, m))
    x[0] = noise.x0_mean if zero_noise else noise.x0_mean + f0 @ rng.standard_normal(n)
    for t in range(steps):
        w = 0.0 if zero_noise else cq[t] @ rng.standard_normal(n)
        x[t + 1] = model.A @ x[t] + w
        v = 0.0 if zero_noise else cr[t] @ rng.standard_normal(m)
        y[t] = model.C @ x[t + 1] + v
    return Trajectory(y=y, x=x)


def trajectory_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    """Stable per-trajectory seed derived from (master_seed, index)."""
    return np.random.SeedSequence((int(master_seed), int(index)))


def sample_batch(
    model: ModelSpec,
    noise: NoiseSpec,
    size: int,
    master_seed: int,
    *,
    keep_states: bool = False,
) -> ObservationBatch:
    """Simulate `size` independent trajectories.

    Trajectory l uses the stable seed trajectory_seed(master_seed, l), so any
    sub-batch is reproducible independently of the batch size.
    """
    if size < 1:
        raise ValueError(f"size: expected a positive integer, got {size}")
    steps = model.steps
    ys = np.empty((size, steps, model.obs_dim))
    xs = np.empty((size, steps + 1, model.state_dim)) if keep_states else None
    for l in range(size):
        traj = simulate(model, noise, trajectory_seed(master_seed, l))
        ys[l] = traj.y
        if keep_states:
            xs[l] = traj.x
    return ObservationBatch(ys=ys, x0_mean=noise.x0_mean.copy(), master_seed=int(master_seed), xs=xs)


def model_from_config(doc: dict) -> tuple[ModelSpec, NoiseSpec]:
    """Build (ModelSpec, NoiseSpec) from a parsed config document.

    Required fields: A, C, M, Q, R, P0, x0_mean. Q and R may each be a single
    matrix (expanded to a constant schedule) or a list of per-step matrices of
    length >= M + N. Optional dQ adds linear drift Q_t = Q + t*dQ and requires
    a single-matrix Q. Raises ValueError naming the offending field.
    """
    if not isinstance(doc, dict):
        raise ValueError("config: expected a JSON object at the top level")
    missing = [k for k in ("A", "C", "M", "Q", "R", "P0", "x0_mean") if k not in doc]
    if missing:
        raise ValueError(f"config: missing field(s) {', '.join(missing)}")
    horizon = doc["M"]
    if not isinstance(horizon, int) or horizon < 1:
        raise ValueError(f"M: expected a positive integer, got {horizon!r}")
    model = ModelSpec(A=doc["A"], C=doc["C"], horizon=horizon)
    steps = model.steps

    def schedule(field: str, dim: int) -> np.ndarray:
        arr = np.array(doc[field], dtype=float)
        if arr.ndim == 2:
            if arr.shape != (dim, dim):
                raise ValueError(f"{field}: expected shape ({dim}, {dim}), got {arr.shape}")
            return np.repeat(arr[None, :, :], steps, axis=0)
        if arr.ndim == 3:
            if arr.shape[1:] != (dim, dim):
                raise ValueError(f"{field}: expected blocks of shape ({dim}, {dim}), got {arr.shape[1:]}")
            if arr.shape[0] < steps:
                raise ValueError(f"{field}: schedule has {arr.shape[0]} steps, need >= {steps}")
            return arr[:steps]
        raise ValueError(f"{field}: expected a matrix or a list of matrices")

    if "dQ" in doc and doc["dQ"] is not None:
        q = np.array(doc["Q"], dtype=float)
        if q.ndim != 2:
            raise ValueError("dQ: drift requires Q to be a single base matrix")
        dq = _as_matrix(doc["dQ"], "dQ", q.shape)
        Qs = np.array([q + t * dq for t in range(steps)])
    else:
        Qs = schedule("Q", model.state_dim)
    Rs = schedule("R", model.obs_dim)
    noise = NoiseSpec(Q=Qs, R=Rs, P0=doc["P0"], x0_mean=doc["x0_mean"])
    return model, noise
