"""Gradient ascent on the log-likelihood over {F, F0, D}.

Fixed learning rates, no line search; after each update the constrained
quantities are rebuilt (Phi renormalized from F, p0 from F0, D rectified to a
positive floor). The trace records per-iteration log-likelihood and, when a
ground-truth model is supplied, the relative log-likelihood.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .grid import GridFunction, SpectralGrid
from .gradients import GradientBundle, dataset_gradients
from .likelihood import InferenceMode, dataset_loglik
from .model import LatentModel, default_rate
from .operators import build_basis

__all__ = [
    "FitConfig",
    "FitRecord",
    "FitTrace",
    "gd_step",
    "fit",
    "relative_loglik",
]

FORCE_ONLY = "force-only"
ALTERNATING = "alternating"
_ALTERNATING_CYCLE = ("force", "f0", "d")


@dataclass(frozen=True)
class FitConfig:
    """Gradient-descent hyperparameters and initialization."""

    mode: InferenceMode
    lr_force: float = 0.005
    lr_f0: float = 0.025
    lr_d: float = 0.00025
    max_iters: int = 500
    update_schedule: str = FORCE_ONLY
    nv: int = 447
    init_force: GridFunction | None = None  # defaults to 0
    init_f0: GridFunction | None = None  # defaults to 0
    init_d: float = 1.0
    d_floor: float = 1e-4
    snapshot_every: int = 10
    n_workers: int = 1

    def __post_init__(self):
        if min(self.lr_force, self.lr_f0, self.lr_d) <= 0:
            raise ValueError("learning rates must be positive")
        if self.d_floor <= 0:
            raise ValueError("d_floor must be positive")
        if self.update_schedule not in (FORCE_ONLY, ALTERNATING):
            raise ValueError(f"unknown update schedule {self.update_schedule!r}")

    def initial_model(
        self, grid: SpectralGrid, rate_fn: GridFunction | None = None
    ) -> LatentModel:
        zeros = GridFunction(np.zeros(grid.n_nodes), grid)
        return LatentModel.from_force_f0(
            grid,
            self.init_force if self.init_force is not None else zeros,
            self.init_f0 if self.init_f0 is not None else zeros,
            self.init_d,
            rate_fn if rate_fn is not None else default_rate(grid),
        )

    def param_for_iter(self, iteration: int) -> str:
        if self.update_schedule == FORCE_ONLY:
            return "force"
        return _ALTERNATING_CYCLE[iteration % 3]


@dataclass(frozen=True)
class FitRecord:
    iteration: int
    loglik: float
    rel_loglik: float | None
    param: str | None


@dataclass
class FitTrace:
    records: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)
    final_model: LatentModel | None = None
    loglik_gt: float | None = None
    aborted: bool = False
    error: str | None = None

    def logliks(self) -> np.ndarray:
        return np.array([r.loglik for r in self.records])

    def rel_logliks(self) -> np.ndarray:
        return np.array(
            [np.nan if r.rel_loglik is None else r.rel_loglik for r in self.records]
        )

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "loglik", "rel_loglik", "param"])
            for r in self.records:
                writer.writerow(
                    [
                        r.iteration,
                        repr(r.loglik),
                        "" if r.rel_loglik is None else repr(r.rel_loglik),
                        r.param or "",
                    ]
                )


def relative_loglik(loglik: float, loglik_gt: float) -> float:
    """Convergence diagnostic (log L_gt - log L) / log L_gt."""
    if loglik_gt == 0:
        raise ValueError("ground-truth log-likelihood must be nonzero")
    return (loglik_gt - loglik) / loglik_gt


def gd_step(
    model: LatentModel, bundle: GradientBundle, config: FitConfig, which: str
) -> LatentModel:
    """One ascent step on the selected parameter, then renormalize."""
    if which == "force":
        step = config.lr_force * bundle.grad_force.values
        if not np.isfinite(step).all():
            raise ArithmeticError("non-finite force gradient")
        return model.with_force(
            GridFunction(model.force.values + step, model.grid)
        )
    if which == "f0":
        step = config.lr_f0 * bundle.grad_f0.values
        if not np.isfinite(step).all():
            raise ArithmeticError("non-finite f0 gradient")
        return model.with_f0(GridFunction(model.f0.values + step, model.grid))
    if which == "d":
        if not np.isfinite(bundle.grad_d):
            raise ArithmeticError("non-finite diffusion gradient")
        d_new = model.diffusion + config.lr_d * bundle.grad_d
        return model.with_diffusion(max(d_new, config.d_floor))
    raise ValueError(f"unknown parameter selector {which!r}")


def fit(
    trials: list,
    grid: SpectralGrid,
    config: FitConfig,
    ground_truth: LatentModel | None = None,
    rate_fn: GridFunction | None = None,
) -> FitTrace:
    """Run gradient descent for config.max_iters iterations.

    No early stopping: model selection is out of scope, the full trace is
    returned. A numerical failure aborts the loop and returns the partial
    trace with `aborted` set.
    """
    if rate_fn is None and ground_truth is not None:
        rate_fn = ground_truth.rate_fn
    model = config.initial_model(grid, rate_fn)
    trace = FitTrace()

    if ground_truth is not None:
        basis_gt = build_basis(ground_truth, config.mode.bc, config.nv)
        trace.loglik_gt = dataset_loglik(
            basis_gt, ground_truth, trials, config.mode, config.n_workers
        )

    def rel(loglik: float):
        if trace.loglik_gt is None:
            return None
        return relative_loglik(loglik, trace.loglik_gt)

    try:
        for it in range(config.max_iters):
            basis = build_basis(model, config.mode.bc, config.nv)
            bundle = dataset_gradients(
                basis, model, trials, config.mode, config.n_workers
            )
            param = config.param_for_iter(it)
            trace.records.append(
                FitRecord(it, bundle.loglik, rel(bundle.loglik), param)
            )
            if it % config.snapshot_every == 0:
                trace.snapshots[it] = model
            model = gd_step(model, bundle, config, param)
        basis = build_basis(model, config.mode.bc, config.nv)
        final_ll = dataset_loglik(basis, model, trials, config.mode, config.n_workers)
        trace.records.append(
            FitRecord(config.max_iters, final_ll, rel(final_ll), None)
        )
        trace.snapshots[config.max_iters] = model
    except ArithmeticError as exc:
        trace.aborted = True
        trace.error = str(exc)
    trace.final_model = model
    return trace
