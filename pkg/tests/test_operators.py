"""Spectral operators: H0/H eigenpairs, emission/absorption matrices, vectors."""

import numpy as np
import pytest

from nslangevin import (
    BoundaryCondition,
    GridFunction,
    LatentModel,
    absorption_matrix,
    build_basis,
    build_grid,
    build_h0,
    emission_matrix,
    initial_vector,
    propagator,
    terminal_vector,
)


def _flat_model(grid, rate=None):
    """Phi = ln 2 (constant, normalized on [-1, 1]), D = 1."""
    phi = GridFunction(np.full(grid.n_nodes, np.log(2.0)), grid)
    p0 = GridFunction(np.exp(-100.0 * grid.nodes**2), grid)
    return LatentModel.from_phi_p0(grid, phi, p0, 1.0, rate_fn=rate)


@pytest.fixture(scope="module")
def flat_grid():
    return build_grid(64, 8, -1.0, 1.0)


def test_h0_spectrum_dirichlet(flat_grid):
    # [DERIVED] with constant Phi the weighted operator reduces to -d2/dx2 on
    # [-1, 1]; Dirichlet eigenvalues are (k pi / 2)^2, k = 1, 2, ...
    model = _flat_model(flat_grid)
    lam0, phi0 = build_h0(model, BoundaryCondition.ABSORBING, flat_grid, 10)
    exact = (np.arange(1, 11) * np.pi / 2.0) ** 2
    assert np.abs(lam0 / exact - 1.0).max() < 1e-10


def test_h0_spectrum_neumann(flat_grid):
    # Reflecting (natural) boundary: (k pi / 2)^2 including the k = 0 mode.
    model = _flat_model(flat_grid)
    lam0, phi0 = build_h0(model, BoundaryCondition.REFLECTING, flat_grid, 10)
    exact = (np.arange(10) * np.pi / 2.0) ** 2
    assert lam0[0] == 0.0  # stationary mode is snapped exactly
    assert np.abs(lam0[1:] / exact[1:] - 1.0).max() < 1e-10


def test_h0_eigenfunction_orthonormality(smooth_model):
    lam0, phi0 = build_h0(
        smooth_model, BoundaryCondition.REFLECTING, smooth_model.grid, 12
    )
    w = smooth_model.grid.weights * np.exp(-smooth_model.phi.values)
    gram = phi0.T @ (w[:, None] * phi0)
    assert np.abs(gram - np.eye(12)).max() < 1e-10


def test_h0_dirichlet_vanishes_at_boundary(smooth_model):
    _, phi0 = build_h0(
        smooth_model, BoundaryCondition.ABSORBING, smooth_model.grid, 6
    )
    assert np.abs(phi0[0]).max() == 0.0
    assert np.abs(phi0[-1]).max() == 0.0


def test_h0_nv_bounds(smooth_model):
    n = smooth_model.grid.n_nodes
    with pytest.raises(ValueError):
        build_h0(smooth_model, BoundaryCondition.ABSORBING, smooth_model.grid, n - 1)
    with pytest.raises(ValueError):
        build_h0(smooth_model, BoundaryCondition.REFLECTING, smooth_model.grid, 0)


def test_basis_orthonormal_under_quadrature(smooth_model):
    basis = build_basis(smooth_model, BoundaryCondition.REFLECTING, 15)
    gram = basis.q.T @ (basis.weights[:, None] * basis.q)
    assert np.abs(gram - np.eye(15)).max() < 1e-10


def test_rate_shift_identity(smooth_model):
    # Adding a constant c to the rate shifts every eigenvalue of H by c and
    # leaves the eigenfunctions unchanged.
    import dataclasses

    basis = build_basis(smooth_model, BoundaryCondition.REFLECTING, 12)
    shifted = dataclasses.replace(
        smooth_model,
        rate_fn=GridFunction(
            smooth_model.rate_fn.values + 17.0, smooth_model.grid
        ),
    )
    basis_s = build_basis(shifted, BoundaryCondition.REFLECTING, 12)
    assert np.abs(basis_s.lam - basis.lam - 17.0).max() < 1e-8
    assert np.abs(np.abs(basis_s.q) - np.abs(basis.q)).max() < 1e-7


def test_emission_matrix_identity_for_unit_rate(smooth_model):
    rate = GridFunction(np.ones(smooth_model.grid.n_nodes), smooth_model.grid)
    import dataclasses

    m = dataclasses.replace(smooth_model, rate_fn=rate)
    basis = build_basis(m, BoundaryCondition.REFLECTING, 10)
    e = emission_matrix(basis, m)
    assert np.abs(e - np.eye(10)).max() < 1e-10


def test_probability_conservation_reflecting(flat_grid):
    # Zero rate, reflecting bc: total probability is conserved for all t.
    rate = GridFunction(np.zeros(flat_grid.n_nodes), flat_grid)
    model = _flat_model(flat_grid, rate=rate)
    basis = build_basis(model, BoundaryCondition.REFLECTING, 100)
    rho = initial_vector(basis, model)
    bt = terminal_vector(basis, model)
    for t in (0.0, 0.01, 0.5, 2.0, 10.0):
        mass = (rho * propagator(basis, t)) @ bt
        assert mass == pytest.approx(1.0, abs=1e-9)


def test_absorbing_mass_decay_matches_operator_flux(smooth_model, rng):
    # d/dt (total mass) = -<rho_t, A beta>: the absorption operator is the
    # generator of the loss, so FD of the mass in t must match the A-flux.
    import dataclasses

    model = dataclasses.replace(
        smooth_model,
        rate_fn=GridFunction(np.zeros(smooth_model.grid.n_nodes), smooth_model.grid),
    )
    basis = build_basis(model, BoundaryCondition.ABSORBING, model.grid.n_nodes - 2)
    rho = initial_vector(basis, model)
    bt = terminal_vector(basis, model)
    a = absorption_matrix(basis)
    for t in rng.uniform(0.05, 2.0, 20):
        mass = lambda s: (rho * propagator(basis, s)) @ bt
        dt = 1e-6
        fd = (mass(t + dt) - mass(t - dt)) / (2.0 * dt)
        flux = -(rho * propagator(basis, t)) @ (a @ bt)
        assert fd == pytest.approx(flux, abs=1e-6, rel=1e-6)


def test_absorption_matrix_requires_absorbing(smooth_model):
    basis = build_basis(smooth_model, BoundaryCondition.REFLECTING, 8)
    with pytest.raises(RuntimeError):
        absorption_matrix(basis)


def test_absorption_matrix_equals_h_minus_rate(smooth_model):
    # A is the rate-free part of H: Q^T W f Q + A == diag(lam) in the H basis.
    basis = build_basis(smooth_model, BoundaryCondition.ABSORBING, 20)
    e = emission_matrix(basis, smooth_model)
    a = absorption_matrix(basis)
    assert np.abs(a + e - np.diag(basis.lam)).max() < 1e-8


def test_initial_vector_reconstructs_density(smooth_model):
    # With a near-complete basis the scaled p0 is recovered from rho0.
    nv = smooth_model.grid.n_nodes
    basis = build_basis(smooth_model, BoundaryCondition.REFLECTING, nv)
    rho = initial_vector(basis, smooth_model)
    recon = basis.q @ rho * np.exp(-0.5 * smooth_model.phi.values)
    assert np.abs(recon - smooth_model.p0.values).max() < 1e-8


def test_initial_vector_equilibrium_mode(smooth_model):
    basis = build_basis(smooth_model, BoundaryCondition.REFLECTING, 10)
    rho = initial_vector(basis, smooth_model, use_p0=False)
    recon = basis.q @ rho
    assert np.abs(recon - np.exp(-0.5 * smooth_model.phi.values)).max() < 1e-6


def test_propagator_validation(smooth_model):
    basis = build_basis(smooth_model, BoundaryCondition.REFLECTING, 5)
    with pytest.raises(ValueError):
        propagator(basis, -0.1)
    assert np.allclose(propagator(basis, 0.0), 1.0)
