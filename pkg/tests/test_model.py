"""Model construction, validation, and simulation statistics."""

import numpy as np
import numpy.testing as npt
import pytest

from kfopt import (
    ModelSpec,
    NoiseSpec,
    model_from_config,
    sample_batch,
    simulate,
    trajectory_seed,
    validate,
)
from kfopt.model import psd_factor
from kfopt.presets import benchmark_config


def test_benchmark_dimensions(benchmark):
    model, noise = benchmark
    assert model.state_dim == 3
    assert model.obs_dim == 2
    assert model.horizon == 3
    assert model.steps == 6
    assert noise.steps == 6
    assert noise.Q.shape == (6, 3, 3)
    assert noise.R.shape == (6, 2, 2)


def test_model_spec_rejects_bad_shapes():
    with pytest.raises(ValueError, match="A"):
        ModelSpec(A=[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]], C=[[1.0, 0.0]], horizon=1)
    with pytest.raises(ValueError, match="C"):
        ModelSpec(A=np.eye(2), C=[[1.0, 0.0, 0.0]], horizon=1)
    with pytest.raises(ValueError, match="horizon"):
        ModelSpec(A=np.eye(2), C=np.eye(2), horizon=0)


def test_noise_spec_rejects_inconsistent_schedules():
    Q = np.repeat(np.eye(2)[None], 4, axis=0)
    R = np.repeat(np.eye(1)[None], 3, axis=0)
    with pytest.raises(ValueError, match="schedules disagree"):
        NoiseSpec(Q=Q, R=R, P0=np.zeros((2, 2)), x0_mean=np.zeros(2))
    with pytest.raises(ValueError, match="x0_mean"):
        NoiseSpec(Q=Q, R=R[:1].repeat(4, axis=0), P0=np.zeros((2, 2)), x0_mean=np.zeros(3))
    with pytest.raises(ValueError, match="P0"):
        NoiseSpec(Q=Q, R=R[:1].repeat(4, axis=0), P0=np.zeros((3, 3)), x0_mean=np.zeros(2))


def test_spec_arrays_are_frozen(benchmark):
    model, noise = benchmark
    with pytest.raises(ValueError):
        model.A[0, 0] = 1.0
    with pytest.raises(ValueError):
        noise.Q[0, 0, 0] = 1.0


def test_validation_passes_on_benchmark(benchmark):
    report = validate(*benchmark)
    assert report.ok
    assert report.failures() == []
    assert "observability" in report.summary()


def test_validation_flags_unobservable_pair():
    # identity dynamics observed through a single coordinate never reveal x_2
    model = ModelSpec(A=np.eye(2), C=[[1.0, 0.0]], horizon=2)
    noise = NoiseSpec.constant(
        np.eye(2), [[1.0]], np.zeros((2, 2)), np.zeros(2), steps=model.steps
    )
    report = validate(model, noise)
    assert not report.ok
    assert [c.name for c in report.failures()] == ["observability"]


def test_validation_flags_indefinite_process_noise():
    model = ModelSpec(A=[[0.5, 0.1], [0.0, 0.4]], C=np.eye(2), horizon=2)
    Q = np.diag([1.0, -0.5])
    noise = NoiseSpec.constant(Q, np.eye(2), np.zeros((2, 2)), np.zeros(2), steps=model.steps)
    report = validate(model, noise)
    assert [c.name for c in report.failures()] == ["Q-positive-definite"]


def test_validation_flags_singular_dynamics():
    model = ModelSpec(A=[[1.0, 0.0], [0.0, 0.0]], C=np.eye(2), horizon=2)
    noise = NoiseSpec.constant(np.eye(2), np.eye(2), np.zeros((2, 2)), np.zeros(2), steps=4)
    report = validate(model, noise)
    assert [c.name for c in report.failures()] == ["A-invertible"]


def test_validation_flags_short_schedule(benchmark):
    model, noise = benchmark
    short = NoiseSpec(Q=noise.Q[:4], R=noise.R[:4], P0=noise.P0, x0_mean=noise.x0_mean)
    report = validate(model, short)
    assert [c.name for c in report.failures()] == ["schedule-length"]


def test_noiseless_simulation_is_pure_dynamics(benchmark):
    model, noise = benchmark
    traj = simulate(model, noise, seed=0, zero_noise=True)
    x = noise.x0_mean
    for t in range(model.steps):
        x = model.A @ x
        npt.assert_allclose(traj.y[t], model.C @ x, rtol=0, atol=1e-14)
        npt.assert_allclose(traj.x[t + 1], x, rtol=0, atol=1e-14)


def test_simulation_seed_determinism(benchmark):
    model, noise = benchmark
    a = simulate(model, noise, seed=123)
    b = simulate(model, noise, seed=123)
    c = simulate(model, noise, seed=124)
    npt.assert_array_equal(a.y, b.y)
    npt.assert_array_equal(a.x, b.x)
    assert np.max(np.abs(a.y - c.y)) > 1e-3


def test_first_observation_moments(benchmark):
    # y_1 = C(A x_0 + w_0) + v_1 has mean CA x0_mean and
    # covariance C (A P0 A^T + Q_0) C^T + R_1
    model, noise = benchmark
    L = 20000
    batch = sample_batch(model, noise, L, master_seed=11)
    y1 = batch.ys[:, 0, :]
    CA = model.C @ model.A
    mean_true = CA @ noise.x0_mean
    cov_true = (
        model.C @ (model.A @ noise.P0 @ model.A.T + noise.Q[0]) @ model.C.T + noise.R[0]
    )
    se = np.sqrt(np.diag(cov_true) / L)
    assert np.all(np.abs(y1.mean(axis=0) - mean_true) < 4 * se)
    cov_hat = np.cov(y1.T)
    assert np.linalg.norm(cov_hat - cov_true) < 0.05 * np.linalg.norm(cov_true)


def test_sample_batch_matches_individual_simulation(benchmark):
    model, noise = benchmark
    batch = sample_batch(model, noise, 5, master_seed=9, keep_states=True)
    for l in (0, 3):
        traj = simulate(model, noise, trajectory_seed(9, l))
        npt.assert_array_equal(batch.ys[l], traj.y)
        npt.assert_array_equal(batch.xs[l], traj.x)


def test_sample_batch_prefix_stability(benchmark):
    # trajectory l depends on (master_seed, l) only, not on the batch size
    model, noise = benchmark
    big = sample_batch(model, noise, 6, master_seed=42)
    small = sample_batch(model, noise, 3, master_seed=42)
    npt.assert_array_equal(big.ys[:3], small.ys)


def test_model_from_config_matches_presets(benchmark, drift_instance):
    model, noise = model_from_config(benchmark_config())
    ref_model, ref_noise = benchmark
    npt.assert_array_equal(model.A, ref_model.A)
    npt.assert_array_equal(noise.Q, ref_noise.Q)

    dmodel, dnoise = model_from_config(benchmark_config(drift=True))
    _, ref_dnoise = drift_instance
    npt.assert_array_equal(dnoise.Q, ref_dnoise.Q)
    # drift is linear in t by construction
    step = dnoise.Q[1] - dnoise.Q[0]
    for t in range(dnoise.steps):
        npt.assert_allclose(dnoise.Q[t], dnoise.Q[0] + t * step, atol=1e-14)


def test_model_from_config_error_messages():
    doc = benchmark_config()
    del doc["R"]
    with pytest.raises(ValueError, match="missing field.*R"):
        model_from_config(doc)
    doc = benchmark_config()
    doc["M"] = -1
    with pytest.raises(ValueError, match="M"):
        model_from_config(doc)
    doc = benchmark_config()
    doc["Q"] = [[1.0, 0.0], [0.0, 1.0]]
    with pytest.raises(ValueError, match="Q"):
        model_from_config(doc)
    doc = benchmark_config()
    doc["Q"] = [doc["Q"]] * 3  # schedule shorter than horizon + state_dim
    with pytest.raises(ValueError, match="Q.*steps"):
        model_from_config(doc)
    doc = benchmark_config(drift=True)
    doc["Q"] = [doc["Q"]] * 6
    with pytest.raises(ValueError, match="dQ"):
        model_from_config(doc)


def test_psd_factor_reconstructs_and_rejects():
    rng = np.random.default_rng(3)
    W = rng.normal(size=(4, 4))
    cov = W @ W.T
    F = psd_factor(cov)
    npt.assert_allclose(F @ F.T, cov, atol=1e-12)
    zero = psd_factor(np.zeros((3, 3)))
    npt.assert_array_equal(zero @ zero.T, np.zeros((3, 3)))
    with pytest.raises(ValueError, match="P0"):
        psd_factor(np.diag([1.0, -1e-3]), "P0")
