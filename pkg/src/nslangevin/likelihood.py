"""Per-trial likelihood via the propagator/emission matrix-vector chain.

The chain L = rho0^T T1 E T2 E ... TN E T(N+1) [A] beta is evaluated with a
scaled forward pass (1-norm scaling, logged per step) and a backward pass that
reuses the stored scales, keeping every stored alpha/beta pair normalized to
unit overlap. The cache also holds everything the gradient formulas need.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .model import LatentModel
from .operators import (
    BoundaryCondition,
    OperatorBasis,
    absorption_matrix,
    emission_matrix,
    initial_vector,
    terminal_vector,
)

__all__ = [
    "Trial",
    "InferenceMode",
    "ChainCache",
    "ChainOps",
    "chain_ops",
    "trial_loglik",
    "gamma_matrix",
    "g_matrix",
    "dataset_loglik",
]

#: Below this value of |lambda_i - lambda_j| * dt the off-diagonal Gamma
#: formula is a 0/0 cancellation and a series expansion is used instead.
GAMMA_DEGENERACY_CUTOFF = 1e-7


@dataclass(frozen=True)
class Trial:
    """One observation sequence: start time, spike times, end time."""

    t0: float
    spikes: np.ndarray
    tE: float

    def __post_init__(self):
        s = np.asarray(self.spikes, dtype=float)
        object.__setattr__(self, "spikes", s)
        if s.size:
            if not (np.diff(s) > 0).all():
                raise ValueError("spike times must be strictly increasing")
            if s[0] < self.t0 or s[-1] > self.tE:
                raise ValueError("spikes must lie within [t0, tE]")
        if self.tE < self.t0:
            raise ValueError("trial end precedes trial start")
        s.setflags(write=False)

    @property
    def n_spikes(self) -> int:
        return len(self.spikes)

    @property
    def duration(self) -> float:
        return self.tE - self.t0

    def intervals(self) -> np.ndarray:
        """Event-time differences: t1-t0, ..., tE-tN (length n_spikes + 1)."""
        times = np.concatenate(([self.t0], self.spikes, [self.tE]))
        return np.diff(times)


@dataclass(frozen=True)
class InferenceMode:
    """Which non-stationary components the inference keeps.

    Full mode keeps all three; the ablations replace one component at a time
    with its stationary counterpart.
    """

    use_p0: bool
    bc: BoundaryCondition
    use_absorption: bool

    def __post_init__(self):
        if self.use_absorption and self.bc is not BoundaryCondition.ABSORBING:
            raise ValueError("absorption operator requires absorbing boundaries")

    @classmethod
    def full(cls):
        return cls(True, BoundaryCondition.ABSORBING, True)

    @classmethod
    def no_absorption_op(cls):
        return cls(True, BoundaryCondition.ABSORBING, False)

    @classmethod
    def reflecting_bc(cls):
        return cls(True, BoundaryCondition.REFLECTING, False)

    @classmethod
    def equilibrium_p0(cls):
        return cls(False, BoundaryCondition.REFLECTING, False)

    @classmethod
    def named(cls, name: str) -> "InferenceMode":
        table = {
            "full": cls.full,
            "no-absorption-op": cls.no_absorption_op,
            "reflecting-bc": cls.reflecting_bc,
            "equilibrium-p0": cls.equilibrium_p0,
        }
        try:
            return table[name]()
        except KeyError:
            raise ValueError(f"unknown inference mode {name!r}") from None


@dataclass(frozen=True)
class ChainOps:
    """Matrices and vectors of the chain, fixed per (basis, model, mode)."""

    lam: np.ndarray
    rho0: np.ndarray
    beta_term: np.ndarray
    e_mat: np.ndarray
    a_mat: np.ndarray | None


def chain_ops(basis: OperatorBasis, model: LatentModel, mode: InferenceMode) -> ChainOps:
    if mode.bc is not basis.bc:
        raise ValueError("basis boundary condition does not match mode")
    return ChainOps(
        lam=basis.lam,
        rho0=initial_vector(basis, model, use_p0=mode.use_p0),
        beta_term=terminal_vector(basis, model),
        e_mat=emission_matrix(basis, model),
        a_mat=absorption_matrix(basis) if mode.use_absorption else None,
    )


@dataclass(frozen=True)
class ChainCache:
    """Scaled forward/backward vectors of one trial's chain.

    alphas[tau] is the forward vector after tau chain steps, divided by the
    running product of `scales`. betas[tau] (tau = 1 .. n_spikes + 1) is the
    remainder of the chain to the right of propagator T_tau, scaled so that
    paired overlaps are unity; beta0 and beta_term carry the matching scaling.
    """

    deltas: np.ndarray
    alphas: list
    scales: np.ndarray
    betas: list
    beta0: np.ndarray
    beta_term: np.ndarray
    overlap: float
    loglik: float
    use_absorption: bool


def trial_loglik(
    basis: OperatorBasis,
    model: LatentModel,
    trial: Trial,
    mode: InferenceMode,
    ops: ChainOps | None = None,
) -> tuple[float, ChainCache]:
    """Log-likelihood of one trial and the scaled forward/backward cache."""
    if ops is None:
        ops = chain_ops(basis, model, mode)
    deltas = trial.intervals()
    n = trial.n_spikes

    def _scale(v: np.ndarray) -> tuple[np.ndarray, float]:
        c = float(np.abs(v).sum())
        if not np.isfinite(c) or c == 0.0:
            raise ArithmeticError("non-finite or vanishing forward vector in chain")
        return v / c, c

    alphas = []
    scales = []
    a, c = _scale(ops.rho0)
    alphas.append(a)
    scales.append(c)
    props = [np.exp(-ops.lam * dt) for dt in deltas]
    for k in range(n):
        a, c = _scale((a * props[k]) @ ops.e_mat)
        alphas.append(a)
        scales.append(c)
    a, c = _scale(a * props[n])
    alphas.append(a)
    scales.append(c)
    if ops.a_mat is not None:
        a, c = _scale(a @ ops.a_mat)
        alphas.append(a)
        scales.append(c)
    scales = np.asarray(scales)

    overlap = float(a @ ops.beta_term)
    if not np.isfinite(overlap) or overlap <= 0.0:
        raise ArithmeticError(
            f"chain produced non-positive likelihood (overlap={overlap})"
        )
    loglik = float(np.log(scales).sum() + np.log(overlap))

    # Backward pass, reusing the forward scales so alpha_tau . beta_tau = 1.
    beta_term = ops.beta_term / overlap
    betas = [None] * (n + 2)  # betas[tau] for tau = 1 .. n + 1
    if ops.a_mat is not None:
        betas[n + 1] = (ops.a_mat @ beta_term) / scales[n + 2]
    else:
        betas[n + 1] = beta_term
    for tau in range(n, 0, -1):
        betas[tau] = (ops.e_mat @ (props[tau] * betas[tau + 1])) / scales[tau + 1]
    beta0 = (props[0] * betas[1]) / scales[1]

    cache = ChainCache(
        deltas=deltas,
        alphas=alphas,
        scales=scales,
        betas=betas[1:],
        beta0=beta0,
        beta_term=beta_term,
        overlap=overlap,
        loglik=loglik,
        use_absorption=ops.a_mat is not None,
    )
    return loglik, cache


def gamma_matrix(lam: np.ndarray, dt: float) -> np.ndarray:
    """Interval-coupling matrix of the propagator derivative.

    Gamma_ij = int_0^dt exp(-(dt-u) lam_i) exp(-u lam_j) du, evaluated in
    closed form with a series branch for near-degenerate eigenvalue pairs.
    """
    if dt < 0:
        raise ValueError(f"dt must be nonnegative, got {dt}")
    lam = np.asarray(lam, dtype=float)
    e = np.exp(-lam * dt)
    diff = lam[None, :] - lam[:, None]  # lam_j - lam_i
    near = np.abs(diff) * dt < GAMMA_DEGENERACY_CUTOFF
    with np.errstate(divide="ignore", invalid="ignore"):
        g = (e[:, None] - e[None, :]) / diff
    series = dt * e[:, None] * (1.0 - 0.5 * diff * dt)
    return np.where(near, series, g)


def g_matrix(cache: ChainCache, gammas: list, mode: InferenceMode) -> np.ndarray:
    """Accumulate the gradient coupling matrix over all chain intervals.

    With the scaled cache, dividing each interval's outer product by the next
    forward scale reproduces the unscaled matrix divided by the trial
    likelihood, i.e. the matrix entering log-likelihood gradients.
    """
    n_int = len(cache.deltas)
    if len(gammas) != n_int:
        raise RuntimeError(
            f"expected {n_int} gamma matrices, got {len(gammas)}"
        )
    nv = len(cache.alphas[0])
    g = np.zeros((nv, nv))
    for tau in range(n_int):
        g += gammas[tau] * np.outer(
            cache.alphas[tau] / cache.scales[tau + 1], cache.betas[tau]
        )
    if mode.use_absorption:
        if not cache.use_absorption:
            raise RuntimeError("cache was built without the absorption step")
        g -= np.outer(
            cache.alphas[n_int] / cache.scales[n_int + 1], cache.beta_term
        )
    return g


def dataset_loglik(
    basis: OperatorBasis,
    model: LatentModel,
    trials: list,
    mode: InferenceMode,
    n_workers: int = 1,
) -> float:
    """Sum of per-trial log-likelihoods, reduced in trial-index order."""
    ops = chain_ops(basis, model, mode)

    def one(item):
        i, trial = item
        try:
            return trial_loglik(basis, model, trial, mode, ops=ops)[0]
        except Exception as exc:
            raise ArithmeticError(f"trial {i}: {exc}") from exc

    items = list(enumerate(trials))
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            vals = list(pool.map(one, items))
    else:
        vals = [one(it) for it in items]
    return float(sum(vals))
