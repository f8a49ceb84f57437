"""Command-line interface: validation, solvers, oracles, experiment runs.

Exit codes: 0 success, 1 runtime failure (divergence, numerical error, failed
check), 2 unusable config (parse error, missing/ill-shaped field), 3 model
assumptions violated. The default output directory is KFOPT_OUT_DIR or the
current directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dualsim, learner, objective
from .model import (
    ModelSpec,
    NoiseSpec,
    model_from_config,
    sample_batch,
    validate,
    zero_gains,
)
from .presets import PRESETS, preset_config
from .riccati import solve_riccati

TRACE_HEADER = ["iter", "cost", "normalized_error", "grad_norm", "seconds"]

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_ASSUMPTIONS = 3


class ConfigError(Exception):
    pass


def _load_config(args) -> dict:
    if getattr(args, "preset", None):
        try:
            return preset_config(args.preset)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if not getattr(args, "config", None):
        raise ConfigError("either --config FILE or --preset NAME is required")
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None


def _build_instance(doc: dict) -> tuple[ModelSpec, NoiseSpec]:
    try:
        return model_from_config(doc)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _require_valid(model: ModelSpec, noise: NoiseSpec) -> None:
    report = validate(model, noise)
    if not report.ok:
        print(report.summary(), file=sys.stderr)
        sys.exit(EXIT_ASSUMPTIONS)


def _out_dir(args) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    return Path(os.environ.get("KFOPT_OUT_DIR", "."))


def _fmt(x: float) -> str:
    return repr(float(x))


def emit_trace(trace: learner.RunTrace, path, include_timing: bool = True) -> Path:
    """Write a run trace as CSV (header + one row per recorded iteration).

    Floats are written with full round-trip precision. include_timing=False
    zeroes the seconds column so identical runs produce byte-identical files.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        for i in range(len(trace)):
            secs = trace.wall_seconds[i] if include_timing else 0.0
            writer.writerow(
                [
                    trace.iterations[i],
                    _fmt(trace.cost[i]),
                    _fmt(trace.normalized_error[i]),
                    _fmt(trace.grad_norm[i]),
                    _fmt(secs),
                ]
            )
    return path


def parse_trace(path) -> dict[str, np.ndarray]:
    """Read a trace CSV back into column arrays."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != TRACE_HEADER:
            raise ValueError(f"unexpected trace header {header!r}")
        rows = [[float(v) for v in row] for row in reader]
    cols = np.array(rows, dtype=float).reshape(-1, len(TRACE_HEADER))
    return {name: cols[:, i] for i, name in enumerate(TRACE_HEADER)}


@dataclass(frozen=True)
class ExperimentReport:
    """Where a run_experiment invocation wrote its artifacts."""

    out_dir: Path
    trace_paths: dict[int, Path]
    aggregate_path: Path | None
    final_errors: dict[int, float]


def run_experiment(
    doc: dict,
    *,
    method: str | None = None,
    eta: float | None = None,
    iters: int | None = None,
    samples: int | None = None,
    seeds: list[int] | None = None,
    out_dir: Path,
    name: str = "run",
    include_timing: bool = False,
) -> ExperimentReport:
    """Run GD or multi-seed SGD per the config and persist traces.

    Per-seed trace CSVs are named trace_seed<k>.csv; multi-seed runs also get
    aggregate.csv with per-iteration mean/min/max of the normalized error.
    The seconds column is zeroed unless include_timing, keeping re-runs
    byte-identical.
    """
    model, noise = _build_instance(doc)
    run_cfg = dict(doc.get("run", {}))
    method = method or run_cfg.get("method", "gd")
    eta = eta if eta is not None else run_cfg.get("eta")
    iters = iters if iters is not None else run_cfg.get("iters", 1000)
    samples = samples if samples is not None else run_cfg.get("samples", 200)
    seeds = seeds if seeds is not None else run_cfg.get("seeds", [0])

    report = validate(model, noise)
    if not report.ok:
        raise ValueError("model/noise validation failed:\n" + report.summary())

    out_dir = Path(out_dir) / name
    out_dir.mkdir(parents=True, exist_ok=True)
    K0 = zero_gains(model)

    traces: dict[int, learner.RunTrace] = {}
    if method == "gd":
        trace = learner.run_gd(model, noise, K0, step_size=eta, iterations=int(iters))
        traces[int(seeds[0]) if seeds else 0] = trace
    elif method == "sgd":
        for seed in seeds:
            cfg = learner.SGDConfig(
                step_size=eta if eta is not None else 8e-4,
                iterations=int(iters),
                batch_size=int(samples),
                master_seed=int(seed),
            )
            traces[int(seed)] = learner.run_sgd(model, K0, cfg, noise, eval_noise=noise)
    else:
        raise ValueError(f"method: expected 'gd' or 'sgd', got {method!r}")

    trace_paths = {}
    for seed, trace in traces.items():
        trace_paths[seed] = emit_trace(
            trace, out_dir / f"trace_seed{seed}.csv", include_timing=include_timing
        )

    aggregate_path = None
    if len(traces) > 1:
        errs = np.array([t.normalized_error for t in traces.values()])  # (S, V+1)
        its = next(iter(traces.values())).iterations
        aggregate_path = out_dir / "aggregate.csv"
        with open(aggregate_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "mean", "min", "max"])
            for i, k in enumerate(its):
                writer.writerow(
                    [k, _fmt(errs[:, i].mean()), _fmt(errs[:, i].min()), _fmt(errs[:, i].max())]
                )

    final_errors = {s: t.normalized_error[-1] for s, t in traces.items()}
    return ExperimentReport(
        out_dir=out_dir,
        trace_paths=trace_paths,
        aggregate_path=aggregate_path,
        final_errors=final_errors,
    )


# ---------------------------------------------------------------- commands


def _cmd_validate(args) -> int:
    model, noise = _build_instance(_load_config(args))
    report = validate(model, noise)
    print(report.summary())
    return EXIT_OK if report.ok else EXIT_ASSUMPTIONS


def _cmd_simulate(args) -> int:
    model, noise = _build_instance(_load_config(args))
    _require_valid(model, noise)
    batch = sample_batch(model, noise, args.samples, args.seed)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "observations.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trajectory", "time"] + [f"y{i + 1}" for i in range(model.obs_dim)])
        for l in range(batch.size):
            for t in range(model.steps):
                writer.writerow([l, t + 1] + [_fmt(v) for v in batch.ys[l, t]])
    print(f"wrote {batch.size} trajectories x {model.steps} steps to {path}")
    return EXIT_OK


def _cmd_riccati(args) -> int:
    model, noise = _build_instance(_load_config(args))
    _require_valid(model, noise)
    sol = solve_riccati(model, noise)
    f_opt = objective.cost(model, noise, sol.gains)
    np.set_printoptions(precision=6, suppress=True)
    for t in range(model.horizon):
        print(f"K*_{t} =\n{sol.gains[t]}")
    print(f"optimal cost f* = {f_opt!r}")
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(out, sol.gains.reshape(model.horizon, -1), delimiter=",")
        print(f"gains written to {out}")
    return EXIT_OK


def _cmd_check_gradient(args) -> int:
    model, noise = _build_instance(_load_config(args))
    _require_valid(model, noise)
    rng = np.random.default_rng(args.seed)
    K = 0.1 * rng.standard_normal((model.horizon, model.state_dim, model.obs_dim))
    g = objective.gradient(model, noise, K)

    h = 1e-6
    fd = np.zeros_like(K)
    for t in range(model.horizon):
        for i in range(model.state_dim):
            for j in range(model.obs_dim):
                up, dn = K.copy(), K.copy()
                up[t, i, j] += h
                dn[t, i, j] -= h
                fd[t, i, j] = (
                    objective.cost(model, noise, up) - objective.cost(model, noise, dn)
                ) / (2 * h)

    rep = dualsim.build_stacked(model, noise, K)
    _, g_stacked = dualsim.stacked_cost_and_gradient(rep, model, K)

    scale = max(float(np.linalg.norm(g.stages)), 1e-300)
    worst = 0.0
    for t in range(model.horizon):
        r_fd = np.linalg.norm(g.stages[t] - fd[t]) / scale
        r_st = np.linalg.norm(g.stages[t] - g_stacked[t]) / scale
        worst = max(worst, r_fd, r_st)
        print(f"stage {t}: |exact-fd|/|g| = {r_fd:.3e}   |exact-stacked|/|g| = {r_st:.3e}")
    ok = worst < 1e-6
    print(f"worst relative disagreement {worst:.3e} -> {'ok' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_RUNTIME


def _cmd_constants(args) -> int:
    model, noise = _build_instance(_load_config(args))
    _require_valid(model, noise)
    sol = solve_riccati(model, noise)
    f_opt = objective.cost(model, noise, sol.gains)
    diag = objective.diagnostics(model, noise, zero_gains(model), f_opt)
    width = max(len(name) for name, _ in diag.rows())
    for name, value in diag.rows():
        print(f"{name:<{width}}  {value!r}")
    return EXIT_OK


def _cmd_oracle_compare(args) -> int:
    model, noise = _build_instance(_load_config(args))
    _require_valid(model, noise)
    rng = np.random.default_rng(args.seed)
    K = 0.1 * rng.standard_normal((model.horizon, model.state_dim, model.obs_dim))

    f_closed = objective.cost(model, noise, K)
    est = dualsim.dual_cost_mc(model, noise, K, args.samples, args.seed)
    z = est.z_score(f_closed)
    rep = dualsim.build_stacked(model, noise, K)
    f_stacked, g_stacked = dualsim.stacked_cost_and_gradient(rep, model, K)
    offset = dualsim.residual_cost_offset(model, noise)
    stacked_gap = abs(f_stacked - offset - f_closed) / max(f_closed, 1e-300)
    g = objective.gradient(model, noise, K)
    grad_gap = np.linalg.norm(g.stages - g_stacked) / max(g.norm, 1e-300)

    print(f"closed-form cost          {f_closed!r}")
    print(f"control-dual MC           {est.mean!r} +- {est.std_error:.3e} (z = {z:+.2f}, {est.samples} samples)")
    print(f"stacked cost - offset     {f_stacked - offset!r} (rel gap {stacked_gap:.3e})")
    print(f"stacked-vs-exact gradient rel gap {grad_gap:.3e}")
    ok = abs(z) < 4.0 and stacked_gap < 1e-9 and grad_gap < 1e-9
    print("ok" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_RUNTIME


def _parse_seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip() != ""]
    except ValueError:
        raise ConfigError(f"--seeds: expected comma-separated integers, got {text!r}") from None


def _cmd_run(args, method: str) -> int:
    doc = _load_config(args)
    model, noise = _build_instance(doc)
    _require_valid(model, noise)
    seeds = _parse_seeds(args.seeds) if args.seeds else None
    try:
        report = run_experiment(
            doc,
            method=method,
            eta=args.eta,
            iters=args.iters,
            samples=getattr(args, "samples", None),
            seeds=seeds,
            out_dir=_out_dir(args),
            name=args.preset or f"{method}-run",
            include_timing=args.timing,
        )
    except learner.DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for seed, path in sorted(report.trace_paths.items()):
        print(f"seed {seed}: final normalized error {report.final_errors[seed]:.6e} -> {path}")
    if report.aggregate_path:
        finals = list(report.final_errors.values())
        print(
            f"aggregate over {len(finals)} seeds: mean {np.mean(finals):.6e}, "
            f"band [{min(finals):.6e}, {max(finals):.6e}] -> {report.aggregate_path}"
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kfopt",
        description="Finite-horizon Kalman gains by policy optimization.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_out=True):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--preset", help="built-in preset: " + ", ".join(sorted(PRESETS)))
        if with_out:
            p.add_argument("--out", help="output directory (default: KFOPT_OUT_DIR or .)")

    p = sub.add_parser("validate", help="check model assumptions")
    add_common(p, with_out=False)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("simulate", help="sample observation trajectories to CSV")
    add_common(p)
    p.add_argument("--samples", type=int, default=10, help="number of trajectories")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("riccati", help="optimal gains and cost")
    add_common(p, with_out=False)
    p.add_argument("--out", help="optional CSV file for the gains")
    p.set_defaults(func=_cmd_riccati)

    p = sub.add_parser("check-gradient", help="exact vs finite-difference vs stacked gradient")
    add_common(p, with_out=False)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_check_gradient)

    p = sub.add_parser("constants", help="landscape constants at the zero gains")
    add_common(p, with_out=False)
    p.set_defaults(func=_cmd_constants)

    p = sub.add_parser("oracle-compare", help="cost/gradient against independent oracles")
    add_common(p, with_out=False)
    p.add_argument("--samples", type=int, default=100000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_oracle_compare)

    p = sub.add_parser("gd", help="exact gradient descent")
    add_common(p)
    p.add_argument("--eta", type=float, help="step size (default: automatic)")
    p.add_argument("--iters", type=int, help="iterations")
    p.add_argument("--seeds", help="comma-separated seeds (labels the trace file)")
    p.add_argument("--timing", action="store_true", help="record wall time in trace CSVs")
    p.set_defaults(func=lambda a: _cmd_run(a, "gd"))

    p = sub.add_parser("sgd", help="observation-only stochastic gradient descent")
    add_common(p)
    p.add_argument("--eta", type=float, help="step size")
    p.add_argument("--iters", type=int, help="iterations")
    p.add_argument("--samples", type=int, help="batch size L")
    p.add_argument("--seeds", help="comma-separated master seeds")
    p.add_argument("--timing", action="store_true", help="record wall time in trace CSVs")
    p.set_defaults(func=lambda a: _cmd_run(a, "sgd"))

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
