"""Analytic log-likelihood gradients with respect to F(x), F0(x), and D.

The gradients are exact for the discrete (spectral-element, eigenbasis-
truncated) likelihood that the chain actually computes: operator variations
are contracted in weak form element by element, and the normalizing constants
of Phi and p0 are differentiated through the same quadrature the model uses.
Each trial's raw likelihood derivatives are divided by that trial's
likelihood (the scaled chain cache already carries this normalization), so
per-trial bundles sum directly to dataset log-likelihood gradients.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .grid import GridFunction
from .likelihood import (
    ChainCache,
    InferenceMode,
    Trial,
    chain_ops,
    g_matrix,
    gamma_matrix,
    trial_loglik,
)
from .model import LatentModel
from .operators import (
    OperatorBasis,
    _element_derivative_blocks,
    _stiffness_apply,
)

__all__ = ["GradientBundle", "GradientOps", "gradient_ops", "trial_gradients", "dataset_gradients"]


@dataclass(frozen=True)
class GradientBundle:
    """Log-likelihood gradients for one trial or summed over a dataset."""

    grad_force: GridFunction
    grad_f0: GridFunction
    grad_d: float
    loglik: float

    def __add__(self, other: "GradientBundle") -> "GradientBundle":
        return GradientBundle(
            GridFunction(
                self.grad_force.values + other.grad_force.values,
                self.grad_force.grid,
            ),
            GridFunction(
                self.grad_f0.values + other.grad_f0.values, self.grad_f0.grid
            ),
            self.grad_d + other.grad_d,
            self.loglik + other.loglik,
        )


@dataclass(frozen=True)
class GradientOps:
    """Per-(basis, model) arrays shared by every trial's gradient evaluation."""

    y: np.ndarray  # sqrt(w)-scaled eigenfunctions of H (orthonormal columns)
    b0y: np.ndarray  # drift-diffusion operator applied to those columns
    dphi: np.ndarray  # element-local derivatives of phi_j, stacked over elements
    sink: np.ndarray  # local quadrature weight times D exp(-Phi), same stacking
    idx: np.ndarray  # global node index of each stacked element-local node
    anti_t: np.ndarray  # transpose of the running-integral matrix
    dnorm_f: np.ndarray  # derivative of Phi's normalizing constant wrt F nodes


def gradient_ops(basis: OperatorBasis, model: LatentModel) -> GradientOps:
    grid = model.grid
    sqw = np.sqrt(grid.weights)
    exp_mphi = np.exp(-model.phi.values)
    y = sqw[:, None] * basis.q
    # B0 y = S K(D exp(-Phi)) S y with S = exp(Phi/2)/sqrt(w); S y = phi nodal.
    kphi = _stiffness_apply(grid, model.diffusion * exp_mphi, basis.phi)
    b0y = (np.exp(0.5 * model.phi.values) / sqw)[:, None] * kphi
    dphi, wloc, idx = _element_derivative_blocks(grid, basis.phi)
    sink = wloc * (model.diffusion * exp_mphi)[idx]
    anti_t = grid.antideriv_matrix.T
    dnorm_f = anti_t @ (grid.weights * exp_mphi)
    return GradientOps(
        y=y, b0y=b0y, dphi=dphi, sink=sink, idx=idx, anti_t=anti_t,
        dnorm_f=dnorm_f,
    )


def _operator_terms(
    g: np.ndarray, ops: GradientOps, model: LatentModel
) -> tuple[np.ndarray, float]:
    """Operator part -sum_ij G_ij dH_ij, taken in the discrete weak form.

    The exp(+-Phi/2) scaling parts of dH0 hit G against B0 rowwise; the
    diffusion-coefficient part is the elementwise stiffness variation.
    Returns (d logL/d Phi_node contribution, d logL/d D). Both are linear in
    G, so a dataset's summed G can be contracted in one pass.
    """
    yg = ops.y @ g
    m1 = (yg * ops.b0y).sum(axis=1)
    m2 = ((ops.b0y @ g) * ops.y).sum(axis=1)
    s_loc = ((ops.dphi @ g) * ops.dphi).sum(axis=1)
    grad_phi = -0.5 * (m1 + m2)
    np.add.at(grad_phi, ops.idx, ops.sink * s_loc)
    # B0 is linear in D, so its D-variation is B0/D.
    grad_d = -float(m1.sum()) / model.diffusion
    return grad_phi, grad_d


def _boundary_terms(
    basis: OperatorBasis,
    model: LatentModel,
    mode: InferenceMode,
    cache: ChainCache,
    ops: GradientOps,
) -> tuple[np.ndarray, np.ndarray]:
    """Initial/terminal-vector parts of one trial's (grad_phi, grad_f0).

    These come from the explicit exp(+-Phi/2) factors in rho0 and the
    terminal vector; everything is already divided by the trial likelihood
    through the scaled cache.
    """
    grid = model.grid
    w = grid.weights
    exp_hphi = np.exp(0.5 * model.phi.values)
    beta0_x = basis.q @ (cache.beta0 / cache.scales[0])
    alpha_last_x = basis.q @ (cache.alphas[-1] / cache.overlap)
    grad_phi = -0.5 * w * np.exp(-0.5 * model.phi.values) * alpha_last_x
    if mode.use_p0:
        grad_phi += 0.5 * w * model.p0.values * exp_hphi * beta0_x
        # p0 = exp(int F0)/Z: the F0 variation acts through p0 and Z alike.
        dl_dp0 = w * exp_hphi * beta0_x
        overlap0 = float(dl_dp0 @ model.p0.values)
        grad_f0 = ops.anti_t @ (model.p0.values * (dl_dp0 - overlap0 * w))
    else:
        # Equilibrium initial state p_eq = exp(-Phi)/Z(Phi): the scaled
        # density exp(-Phi/2) flips the sign of its Phi-derivative, and the
        # variation of Z contributes the overlap against p_eq.
        p_eq = model.equilibrium().values
        weighted = w * p_eq * exp_hphi * beta0_x
        grad_phi += -0.5 * weighted + w * p_eq * weighted.sum()
        grad_f0 = np.zeros(grid.n_nodes)
    return grad_phi, grad_f0


def _finish_bundle(
    grad_phi: np.ndarray,
    grad_f0: np.ndarray,
    grad_d: float,
    loglik: float,
    ops: GradientOps,
    model: LatentModel,
) -> GradientBundle:
    """Map d/dPhi to d/dF and package as quadrature-weight densities.

    Chain rule Phi = -int F + C(F): C's variation rides on the equilibrium
    mass, which also absorbs the normalization of the equilibrium-p0 mode.
    """
    grid = model.grid
    w = grid.weights
    grad_force = -ops.anti_t @ grad_phi + ops.dnorm_f * grad_phi.sum()
    bundle = GradientBundle(
        GridFunction(grad_force / w, grid),
        GridFunction(grad_f0 / w, grid),
        grad_d,
        loglik,
    )
    if not (
        np.isfinite(bundle.grad_force.values).all()
        and np.isfinite(bundle.grad_f0.values).all()
        and np.isfinite(grad_d)
    ):
        raise ArithmeticError("non-finite gradient")
    return bundle


def trial_gradients(
    basis: OperatorBasis,
    model: LatentModel,
    trial: Trial,
    mode: InferenceMode,
    cache: ChainCache,
    ops: GradientOps | None = None,
) -> GradientBundle:
    """Evaluate the discrete variational derivatives for one trial.

    The cache must come from trial_loglik on the same (basis, model, trial,
    mode). Returned derivatives are of log L, finite by construction.
    """
    if ops is None:
        ops = gradient_ops(basis, model)
    gammas = [gamma_matrix(basis.lam, dt) for dt in cache.deltas]
    g = g_matrix(cache, gammas, mode)
    grad_phi, grad_d = _operator_terms(g, ops, model)
    bphi, grad_f0 = _boundary_terms(basis, model, mode, cache, ops)
    return _finish_bundle(
        grad_phi + bphi, grad_f0, grad_d, cache.loglik, ops, model
    )


def dataset_gradients(
    basis: OperatorBasis,
    model: LatentModel,
    trials: list,
    mode: InferenceMode,
    n_workers: int = 1,
) -> GradientBundle:
    """Dataset log-likelihood gradients, equal to the sum of trial bundles.

    The operator contraction is linear in the coupling matrix G, so the
    per-trial G matrices are summed first and contracted once; only the cheap
    initial/terminal-vector terms are accumulated trial by trial.
    """
    grid = model.grid
    ops = chain_ops(basis, model, mode)
    gops = gradient_ops(basis, model)
    nv = basis.nv

    def one(item):
        i, trial = item
        try:
            _, cache = trial_loglik(basis, model, trial, mode, ops=ops)
            gammas = [gamma_matrix(basis.lam, dt) for dt in cache.deltas]
            g = g_matrix(cache, gammas, mode)
            bphi, bf0 = _boundary_terms(basis, model, mode, cache, gops)
            return g, bphi, bf0, cache.loglik
        except Exception as exc:
            raise ArithmeticError(f"trial {i}: {exc}") from exc

    items = list(enumerate(trials))
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            parts = list(pool.map(one, items))
    else:
        parts = [one(it) for it in items]

    g_total = np.zeros((nv, nv))
    grad_phi = np.zeros(grid.n_nodes)
    grad_f0 = np.zeros(grid.n_nodes)
    loglik = 0.0
    for g, bphi, bf0, ll in parts:
        g_total += g
        grad_phi += bphi
        grad_f0 += bf0
        loglik += ll
    gphi_op, grad_d = _operator_terms(g_total, gops, model)
    return _finish_bundle(
        grad_phi + gphi_op, grad_f0, grad_d, loglik, gops, model
    )
