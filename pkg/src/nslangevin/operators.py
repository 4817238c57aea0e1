"""Hermitian-form Fokker-Planck operators in the spectral-element basis.

Assembles the drift-diffusion operator H0 (weak form, generalized symmetric
eigenproblem with a diagonal GLL mass matrix), adds the emission sink f(x) in
the H0 eigenbasis to obtain the full operator H, and exposes the matrices the
likelihood chain consumes: diagonal propagators, the emission matrix E, the
absorption matrix A, and the initial/terminal vectors.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .grid import SpectralGrid, gll_nodes_weights, _diff_matrix
from .model import LatentModel

__all__ = [
    "BoundaryCondition",
    "OperatorBasis",
    "build_h0",
    "build_h",
    "build_basis",
    "propagator",
    "emission_matrix",
    "absorption_matrix",
    "initial_vector",
    "terminal_vector",
]


class BoundaryCondition(enum.Enum):
    REFLECTING = "reflecting"
    ABSORBING = "absorbing"


def _fix_signs(vecs: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Flip eigenvector columns so the first above-tolerance entry is positive."""
    for j in range(vecs.shape[1]):
        col = vecs[:, j]
        nz = np.flatnonzero(np.abs(col) > tol * np.abs(col).max())
        if nz.size and col[nz[0]] < 0:
            vecs[:, j] = -col
    return vecs


def _assemble_stiffness(grid: SpectralGrid, coeff: np.ndarray) -> np.ndarray:
    """Weak-form stiffness K_ij = sum_q w_q c(x_q) l_i'(x_q) l_j'(x_q)."""
    ref_nodes, ref_weights = gll_nodes_weights(grid.points_per_element)
    ref_diff = _diff_matrix(ref_nodes)
    half = 0.5 * (grid.element_boundaries[1] - grid.element_boundaries[0])
    n = grid.n_nodes
    k = np.zeros((n, n))
    for e in range(grid.n_elements):
        sl = grid.element_slice(e)
        d = ref_diff / half
        wq = half * ref_weights * coeff[sl]
        k[sl, sl] += d.T @ (wq[:, None] * d)
    return k


def _stiffness_apply(grid: SpectralGrid, coeff: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Apply the assembled weak-form stiffness K(c) to the columns of u."""
    ref_nodes, ref_weights = gll_nodes_weights(grid.points_per_element)
    ref_diff = _diff_matrix(ref_nodes)
    half = 0.5 * (grid.element_boundaries[1] - grid.element_boundaries[0])
    out = np.zeros_like(u)
    for e in range(grid.n_elements):
        sl = grid.element_slice(e)
        du = ref_diff @ u[sl]
        out[sl] += ref_diff.T @ (ref_weights[:, None] * coeff[sl, None] * du) / half
    return out


def _element_derivative_blocks(
    grid: SpectralGrid, u: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Element-local derivatives of the columns of u, without interface averaging.

    Returns (derivs, local_weights, node_index) stacked over all element-local
    nodes; interface nodes appear once per touching element, which is exactly
    the structure of the assembled stiffness quadrature.
    """
    npp = grid.points_per_element
    ref_nodes, ref_weights = gll_nodes_weights(npp)
    ref_diff = _diff_matrix(ref_nodes)
    half = 0.5 * (grid.element_boundaries[1] - grid.element_boundaries[0])
    ne = grid.n_elements
    derivs = np.empty((ne * npp, u.shape[1]))
    idx = np.empty(ne * npp, dtype=int)
    for e in range(ne):
        sl = grid.element_slice(e)
        derivs[e * npp : (e + 1) * npp] = (ref_diff @ u[sl]) / half
        idx[e * npp : (e + 1) * npp] = np.arange(sl.start, sl.stop)
    wloc = np.tile(half * ref_weights, ne)
    return derivs, wloc, idx


def build_h0(
    model: LatentModel, bc: BoundaryCondition, grid: SpectralGrid, nv: int
) -> tuple[np.ndarray, np.ndarray]:
    """Lowest nv eigenpairs of the drift-diffusion operator H0.

    Solves -d/dx(D exp(-Phi) d phi0/dx) = lambda0 exp(-Phi) phi0 in weak SEM
    form; Dirichlet rows/columns are deleted for absorbing boundaries, natural
    (Neumann) conditions apply for reflecting ones. Eigenfunctions phi0 are
    orthonormal under the exp(-Phi)-weighted inner product.
    """
    n = grid.n_nodes
    max_nv = n - 2 if bc is BoundaryCondition.ABSORBING else n
    if not 1 <= nv <= max_nv:
        raise ValueError(f"nv must be in [1, {max_nv}] for {bc.value} bc, got {nv}")

    exp_mphi = np.exp(-model.phi.values)
    k = _assemble_stiffness(grid, model.diffusion * exp_mphi)
    m = grid.weights * exp_mphi

    if bc is BoundaryCondition.ABSORBING:
        idx = np.arange(1, n - 1)
    else:
        idx = np.arange(n)
    k = k[np.ix_(idx, idx)]
    m = m[idx]

    # The GLL mass matrix is diagonal, so the generalized symmetric problem
    # reduces exactly to a standard one by square-root scaling.
    s = 1.0 / np.sqrt(m)
    a = s[:, None] * k * s[None, :]
    a = 0.5 * (a + a.T)
    try:
        lam0, y = scipy.linalg.eigh(a, subset_by_index=[0, nv - 1])
    except scipy.linalg.LinAlgError as exc:
        raise ArithmeticError(f"H0 eigensolve failed: {exc}") from exc

    if bc is BoundaryCondition.REFLECTING:
        # The reflecting operator has an exact stationary mode; snap the
        # eigensolver's ~1e-10 residual to zero so long-time propagation
        # conserves probability instead of drifting as exp(-lambda0 t).
        lam0 = np.where(np.abs(lam0) < 1e-8, 0.0, lam0)

    phi0 = np.zeros((n, nv))
    phi0[idx] = s[:, None] * y
    _fix_signs(phi0)
    return lam0, phi0


@dataclass(frozen=True)
class OperatorBasis:
    """Truncated eigenbasis of H plus the pieces needed by the chain."""

    lambda0: np.ndarray  # eigenvalues of H0, ascending
    phi0: np.ndarray  # scaled eigenfunctions of H0 at the nodes, N x Nv
    lam: np.ndarray  # eigenvalues of H, ascending
    q: np.ndarray  # Q[i, j] = Psi_j(x_i), N x Nv
    phi: np.ndarray  # scaled eigenfunctions of H: phi_j = Psi_j exp(Phi/2)
    q0h: np.ndarray  # basis change from H0 eigenbasis to H eigenbasis
    weights: np.ndarray  # GLL quadrature weights (diagonal of W)
    bc: BoundaryCondition
    nv: int


def build_h(
    lambda0: np.ndarray, phi0: np.ndarray, model: LatentModel, bc: BoundaryCondition
) -> OperatorBasis:
    """Diagonalize H = H0 + f in the H0 eigenbasis."""
    w = model.grid.weights
    exp_hphi = np.exp(0.5 * model.phi.values)
    psi0 = phi0 / exp_hphi[:, None]
    v = psi0.T @ ((w * model.rate_fn.values)[:, None] * psi0)
    h = np.diag(lambda0) + v
    h = 0.5 * (h + h.T)
    try:
        lam, q0h = scipy.linalg.eigh(h)
    except scipy.linalg.LinAlgError as exc:
        raise ArithmeticError(f"H eigensolve failed: {exc}") from exc
    _fix_signs(q0h)
    return OperatorBasis(
        lambda0=lambda0,
        phi0=phi0,
        lam=lam,
        q=psi0 @ q0h,
        phi=phi0 @ q0h,
        q0h=q0h,
        weights=w,
        bc=bc,
        nv=len(lam),
    )


def build_basis(
    model: LatentModel, bc: BoundaryCondition, nv: int
) -> OperatorBasis:
    """Convenience: build_h0 followed by build_h on the model's own grid."""
    lam0, phi0 = build_h0(model, bc, model.grid, nv)
    return build_h(lam0, phi0, model, bc)


def propagator(basis: OperatorBasis, dt: float) -> np.ndarray:
    """Diagonal of exp(-H dt) in the H eigenbasis."""
    if dt < 0:
        raise ValueError(f"dt must be nonnegative, got {dt}")
    return np.exp(-basis.lam * dt)


def emission_matrix(basis: OperatorBasis, model: LatentModel) -> np.ndarray:
    """Spike emission matrix E = Q^T W diag(f) Q (symmetric, Nv x Nv)."""
    wf = basis.weights * model.rate_fn.values
    e = basis.q.T @ (wf[:, None] * basis.q)
    return 0.5 * (e + e.T)


def absorption_matrix(basis: OperatorBasis) -> np.ndarray:
    """Absorption matrix A = Q0H^T diag(lambda0) Q0H (A equals H0)."""
    if basis.bc is not BoundaryCondition.ABSORBING:
        raise RuntimeError("absorption operator only exists for absorbing bc")
    a = basis.q0h.T @ (basis.lambda0[:, None] * basis.q0h)
    return 0.5 * (a + a.T)


def initial_vector(
    basis: OperatorBasis, model: LatentModel, use_p0: bool = True
) -> np.ndarray:
    """Scaled initial density p0 exp(Phi/2) in the H eigenbasis.

    With use_p0=False the equilibrium density exp(-Phi) is substituted, whose
    scaled form is exp(-Phi/2).
    """
    exp_hphi = np.exp(0.5 * model.phi.values)
    if use_p0:
        scaled = model.p0.values * exp_hphi
    else:
        scaled = model.equilibrium().values * exp_hphi
    return basis.q.T @ (basis.weights * scaled)


def terminal_vector(basis: OperatorBasis, model: LatentModel) -> np.ndarray:
    """Integration functional over the terminal state: Q^T W exp(-Phi/2)."""
    return basis.q.T @ (basis.weights * np.exp(-0.5 * model.phi.values))
