"""Ground-truth trajectory and spike-train generation.

Latent paths are integrated with Euler-Maruyama (mirror reflection for
fixed-duration tasks, interpolated first-passage stopping for reaction-time
tasks); spikes come from time-rescaling of the cumulative intensity. Each
trial draws from its own counter-based RNG stream keyed by (seed, trial
index), so datasets are reproducible regardless of scheduling.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import GridFunction, SpectralGrid, antiderivative, build_grid
from .likelihood import Trial
from .model import LatentModel

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is expected to be present
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

__all__ = [
    "SimConfig",
    "GroundTruthPreset",
    "ramping_model",
    "stepping_model",
    "preset_model",
    "simulate_trajectory",
    "spikes_from_path",
    "generate_dataset",
    "save_dataset",
    "load_dataset",
]

GENERATOR_ID = "numpy-philox4x64-10/euler-maruyama+time-rescaling"

REACTION_TIME = "reaction-time"
FIXED_DURATION = "fixed-duration"

#: Highest-degree-first coefficients of the double-barrier (stepping) potential.
STEPPING_COEFFS = np.array(
    [
        213.7, -34.39, -830.8, 61.33, 1329.0, 37.88, -1144.0, -160.5,
        590.7, 133.0, -192.4, -37.51, 33.03, -0.3233, 0.4446,
    ]
)

_NOISE_BLOCK = 8192


@dataclass(frozen=True)
class SimConfig:
    n_trials: int
    rng_seed: int
    task: str = REACTION_TIME
    duration: float | None = None  # fixed-duration trial length, seconds
    dt: float = 1e-4
    t_max: float = 10.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_max < self.dt:
            raise ValueError("t_max must be at least dt")
        if self.n_trials < 1:
            raise ValueError("n_trials must be at least 1")
        if self.task not in (REACTION_TIME, FIXED_DURATION):
            raise ValueError(f"unknown task {self.task!r}")
        if self.task == FIXED_DURATION and not self.duration:
            raise ValueError("fixed-duration task needs a duration")


@dataclass(frozen=True)
class GroundTruthPreset:
    name: str
    model: LatentModel


def _gaussian_p0(grid: SpectralGrid) -> GridFunction:
    return GridFunction(np.exp(-100.0 * grid.nodes**2), grid)


def ramping_model(grid: SpectralGrid) -> LatentModel:
    """Linear potential -2.65x, D = 0.56, p0 ~ exp(-100 x^2), rate 50x + 60."""
    phi = GridFunction(-2.65 * grid.nodes, grid)
    return LatentModel.from_phi_p0(grid, phi, _gaussian_p0(grid), 0.56)


def stepping_model(grid: SpectralGrid) -> LatentModel:
    """Double-barrier polynomial potential, D = 1, same p0 and rate."""
    phi = GridFunction(np.polyval(STEPPING_COEFFS, grid.nodes), grid)
    return LatentModel.from_phi_p0(grid, phi, _gaussian_p0(grid), 1.0)


def preset_model(name: str, grid: SpectralGrid) -> LatentModel:
    makers = {"ramping": ramping_model, "stepping": stepping_model}
    try:
        return makers[name](grid)
    except KeyError:
        raise ValueError(f"unknown preset {name!r}") from None


@njit(cache=True)
def _em_block(x0, nodes, force, d, dt, noise, reflecting, lo, hi):
    """Advance one trial through a block of pre-drawn noise.

    Returns (path, n_used, hit, frac): `hit` is -1/+1 for a boundary crossing
    (reaction-time only, 0 otherwise) and `frac` the within-step fraction of
    the crossing, located by linear interpolation.
    """
    n = noise.shape[0]
    path = np.empty(n)
    sig = np.sqrt(2.0 * d * dt)
    x = x0
    for k in range(n):
        f = np.interp(x, nodes, force)
        x_new = x + d * f * dt + sig * noise[k]
        if reflecting:
            while x_new > hi or x_new < lo:
                if x_new > hi:
                    x_new = 2.0 * hi - x_new
                else:
                    x_new = 2.0 * lo - x_new
            path[k] = x_new
            x = x_new
        else:
            if x_new >= hi or x_new <= lo:
                b = hi if x_new >= hi else lo
                frac = (b - x) / (x_new - x)
                path[k] = b
                return path, k + 1, (1 if b == hi else -1), frac
            path[k] = x_new
            x = x_new
    return path, n, 0, 1.0


def _sample_x0(model: LatentModel, rng: np.random.Generator) -> float:
    cdf = antiderivative(model.p0).values
    cdf = cdf / cdf[-1]
    return float(np.interp(rng.random(), cdf, model.grid.nodes))


def simulate_trajectory(
    model: LatentModel,
    task: str,
    dt: float,
    t_max: float,
    rng: np.random.Generator,
    duration: float | None = None,
    x0: float | None = None,
) -> tuple[np.ndarray, np.ndarray, str]:
    """Integrate one latent trajectory from a p0 draw.

    Returns (times, positions, terminated_by) with terminated_by one of
    "boundary+1", "boundary-1", or "time-limit". Reaction-time paths end
    exactly on a boundary at the interpolated crossing time; fixed-duration
    paths mirror-reflect and end at t = duration.
    """
    grid = model.grid
    if x0 is None:
        x0 = _sample_x0(model, rng)
    reflecting = task == FIXED_DURATION
    horizon = duration if reflecting else t_max
    n_steps = int(round(horizon / dt))

    xs = [np.array([x0])]
    x = x0
    used = 0
    hit = 0
    frac = 1.0
    while used < n_steps:
        block = min(_NOISE_BLOCK, n_steps - used)
        noise = rng.standard_normal(block)
        path, n_used, hit, frac = _em_block(
            x,
            grid.nodes,
            model.force.values,
            model.diffusion,
            dt,
            noise,
            reflecting,
            grid.x_begin,
            grid.x_end,
        )
        xs.append(path[:n_used])
        used += n_used
        if hit != 0:
            break
        x = path[-1]

    positions = np.concatenate(xs)
    times = dt * np.arange(len(positions))
    if hit != 0:
        times[-1] = times[-2] + frac * dt
        terminated = f"boundary{hit:+d}"
    else:
        terminated = "time-limit"
    return times, positions, terminated


def spikes_from_path(
    times: np.ndarray, positions: np.ndarray, rate_fn: GridFunction,
    rng: np.random.Generator,
) -> np.ndarray:
    """Inhomogeneous Poisson spikes by time-rescaling along a frozen path.

    The cumulative intensity is accumulated by the trapezoid rule on the path
    grid; spikes sit where it crosses partial sums of unit-mean exponentials,
    located by linear interpolation.
    """
    rates = np.interp(positions, rate_fn.grid.nodes, rate_fn.values)
    dts = np.diff(times)
    cum = np.concatenate(([0.0], np.cumsum(0.5 * dts * (rates[:-1] + rates[1:]))))
    total = cum[-1]
    if total <= 0:
        return np.empty(0)

    marks = []
    acc = 0.0
    while acc <= total:
        chunk = rng.standard_exponential(max(16, int(total - acc) + 16))
        partial = acc + np.cumsum(chunk)
        marks.append(partial)
        acc = partial[-1]
    marks = np.concatenate(marks)
    marks = marks[marks <= total]
    spikes = np.interp(marks, cum, times)
    # Guard against interpolation ties on flat-rate stretches.
    keep = np.concatenate(([True], np.diff(spikes) > 0))
    return spikes[keep]


def trial_rng(seed: int, trial_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed, trial_index]))


def generate_dataset(
    preset: GroundTruthPreset, config: SimConfig
) -> tuple[list, dict]:
    """Simulate config.n_trials independent trials from the preset model.

    Reaction-time trials that exhaust t_max are flagged and excluded; a
    warning is raised if more than 1% of trials do.
    """
    model = preset.model
    trials = []
    boundaries = []
    n_timed_out = 0
    for i in range(config.n_trials):
        rng = trial_rng(config.rng_seed, i)
        times, positions, terminated = simulate_trajectory(
            model, config.task, config.dt, config.t_max, rng,
            duration=config.duration,
        )
        if config.task == REACTION_TIME and terminated == "time-limit":
            n_timed_out += 1
            continue
        spikes = spikes_from_path(times, positions, model.rate_fn, rng)
        trials.append(Trial(t0=0.0, spikes=spikes, tE=float(times[-1])))
        boundaries.append(terminated)
    if n_timed_out > 0.01 * config.n_trials:
        warnings.warn(
            f"{n_timed_out} of {config.n_trials} reaction-time trials hit the "
            "time limit and were excluded",
            stacklevel=2,
        )
    meta = {
        "preset": preset.name,
        "seed": config.rng_seed,
        "dt": config.dt,
        "task": config.task,
        "duration": config.duration,
        "t_max": config.t_max,
        "generator": GENERATOR_ID,
        "n_requested": config.n_trials,
        "n_timed_out": n_timed_out,
        "boundaries": boundaries,
    }
    return trials, meta


def save_dataset(path: str | Path, trials: list, meta: dict) -> None:
    boundaries = meta.get("boundaries", [None] * len(trials))
    doc = {
        "metadata": {k: v for k, v in meta.items() if k != "boundaries"},
        "trials": [
            {
                "t0": t.t0,
                "spikes": t.spikes.tolist(),
                "tE": t.tE,
                "boundary": b,
            }
            for t, b in zip(trials, boundaries)
        ],
    }
    Path(path).write_text(json.dumps(doc))


def load_dataset(path: str | Path) -> tuple[list, dict]:
    doc = json.loads(Path(path).read_text())
    trials = [
        Trial(t0=t["t0"], spikes=np.asarray(t["spikes"]), tE=t["tE"])
        for t in doc["trials"]
    ]
    meta = dict(doc["metadata"])
    meta["boundaries"] = [t.get("boundary") for t in doc["trials"]]
    return trials, meta
