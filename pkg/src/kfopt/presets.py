"""Built-in benchmark instance and named experiment presets.

The benchmark system is a stable 3-state / 2-observation plant with strongly
correlated process noise, run with a 3-step filter horizon. Every preset
uses it; the drift variants add a PSD ramp to the process noise so Q_t grows
linearly with t.
"""

from __future__ import annotations

from .model import ModelSpec, NoiseSpec

__all__ = ["benchmark_config", "PRESETS", "preset_config", "load_instance"]

_A = [
    [0.24, -0.18, -0.3118],
    [-0.0578, 0.4839, -0.0279],
    [-0.1283, -0.0138, 0.4761],
]
_C = [
    [0.0, 0.7071, 1.2247],
    [0.7071, -0.5125, 1.1124],
]
_Q = [
    [0.61, -0.195, -0.3377],
    [-0.195, 0.775, -0.0953],
    [-0.3377, -0.0953, 0.665],
]
_R = [
    [0.9, 0.0],
    [0.0, 0.6],
]
_DQ = [
    [0.12, -0.08, 0.0],
    [-0.08, 0.12, 0.0],
    [0.0, 0.0, 0.05],
]
_P0 = [[0.0] * 3 for _ in range(3)]
_X0 = [1.0, 1.0, 0.0]

_TEN_SEEDS = list(range(10))


def benchmark_config(drift: bool = False) -> dict:
    """Config document for the benchmark instance (JSON-compatible)."""
    doc = {
        "A": _A,
        "C": _C,
        "M": 3,
        "Q": _Q,
        "R": _R,
        "P0": _P0,
        "x0_mean": _X0,
    }
    if drift:
        doc["dQ"] = _DQ
    return doc


def _with_run(drift: bool, run: dict) -> dict:
    doc = benchmark_config(drift)
    doc["run"] = run
    return doc


PRESETS: dict[str, dict] = {
    "gd-benchmark": _with_run(
        False, {"method": "gd", "eta": 0.0008, "iters": 1000, "seeds": [0]}
    ),
    "sgd-benchmark-small": _with_run(
        False,
        {"method": "sgd", "eta": 0.0008, "iters": 4000, "samples": 200, "seeds": _TEN_SEEDS},
    ),
    "sgd-benchmark-large": _with_run(
        False,
        {"method": "sgd", "eta": 0.0008, "iters": 4000, "samples": 2000, "seeds": _TEN_SEEDS},
    ),
    "sgd-drift-small": _with_run(
        True,
        {"method": "sgd", "eta": 0.0008, "iters": 4000, "samples": 200, "seeds": _TEN_SEEDS},
    ),
    "sgd-drift-large": _with_run(
        True,
        {"method": "sgd", "eta": 0.0008, "iters": 4000, "samples": 2000, "seeds": _TEN_SEEDS},
    ),
}


def preset_config(name: str) -> dict:
    try:
        return PRESETS[name]
    except KeyError:
        known = ", ".join(sorted(PRESETS))
        raise ValueError(f"unknown preset {name!r}; available: {known}") from None


def load_instance(drift: bool = False) -> tuple[ModelSpec, NoiseSpec]:
    """The benchmark (model, noise) pair as live objects."""
    from .model import model_from_config

    return model_from_config(benchmark_config(drift))
