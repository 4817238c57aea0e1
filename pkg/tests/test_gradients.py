"""Analytic gradients against central finite differences of the chain."""

import numpy as np
import pytest

from nslangevin import (
    GridFunction,
    InferenceMode,
    LatentModel,
    Trial,
    build_basis,
    build_grid,
    dataset_gradients,
    dataset_loglik,
    trial_gradients,
)
from nslangevin.gradients import gradient_ops
from nslangevin.likelihood import trial_loglik

EPS = 1e-4


def _test_model(grid):
    force = GridFunction(2.0 + 0.5 * np.sin(2.0 * grid.nodes), grid)
    f0 = GridFunction(-30.0 * grid.nodes, grid)
    return LatentModel.from_force_f0(grid, force, f0, 0.6)


def _trials(rng, n=3):
    out = []
    for _ in range(n):
        te = rng.uniform(0.4, 0.9)
        k = rng.poisson(60.0 * te)
        out.append(Trial(0.0, np.sort(rng.uniform(0.0, te, k)), te))
    return out


def _loglik(model, trials, mode, nv):
    basis = build_basis(model, mode.bc, nv)
    return dataset_loglik(basis, model, trials, mode)


@pytest.mark.parametrize(
    "mode_name", ["full", "no-absorption-op", "reflecting-bc", "equilibrium-p0"]
)
def test_force_gradient_matches_fd(mode_name, rng):
    mode = InferenceMode.named(mode_name)
    # grid sized so that nv spans the whole boundary-condition subspace:
    # gradient formulas are exact for the discrete chain, truncation aside.
    grid = build_grid(6, 6, -1.0, 1.0)
    nv = grid.n_nodes - (2 if mode.bc.value == "absorbing" else 0)
    model = _test_model(grid)
    trials = _trials(rng)
    basis = build_basis(model, mode.bc, nv)
    g = dataset_gradients(basis, model, trials, mode)
    w = grid.weights
    gmax = np.abs(g.grad_force.values * w).max()
    for k in rng.choice(grid.n_nodes, 8, replace=False):
        e = np.zeros(grid.n_nodes)
        e[k] = EPS
        up = model.with_force(GridFunction(model.force.values + e, grid))
        dn = model.with_force(GridFunction(model.force.values - e, grid))
        fd = (_loglik(up, trials, mode, nv) - _loglik(dn, trials, mode, nv)) / (2 * EPS)
        an = w[k] * g.grad_force.values[k]
        assert abs(fd - an) <= 1e-4 * max(abs(fd), abs(an), 1e-2 * gmax)


@pytest.mark.parametrize(
    "mode_name", ["full", "no-absorption-op", "reflecting-bc"]
)
def test_f0_gradient_matches_fd(mode_name, rng):
    mode = InferenceMode.named(mode_name)
    grid = build_grid(6, 6, -1.0, 1.0)
    nv = grid.n_nodes - (2 if mode.bc.value == "absorbing" else 0)
    model = _test_model(grid)
    trials = _trials(rng)
    basis = build_basis(model, mode.bc, nv)
    g = dataset_gradients(basis, model, trials, mode)
    w = grid.weights
    gmax = np.abs(g.grad_f0.values * w).max()
    for k in rng.choice(grid.n_nodes, 6, replace=False):
        e = np.zeros(grid.n_nodes)
        e[k] = EPS
        up = model.with_f0(GridFunction(model.f0.values + e, grid))
        dn = model.with_f0(GridFunction(model.f0.values - e, grid))
        fd = (_loglik(up, trials, mode, nv) - _loglik(dn, trials, mode, nv)) / (2 * EPS)
        an = w[k] * g.grad_f0.values[k]
        assert abs(fd - an) <= 1e-4 * max(abs(fd), abs(an), 1e-2 * gmax)


def test_f0_gradient_zero_in_equilibrium_mode(rng):
    mode = InferenceMode.equilibrium_p0()
    grid = build_grid(6, 6, -1.0, 1.0)
    model = _test_model(grid)
    basis = build_basis(model, mode.bc, grid.n_nodes)
    g = dataset_gradients(basis, model, _trials(rng), mode)
    assert np.abs(g.grad_f0.values).max() == 0.0


@pytest.mark.parametrize(
    "mode_name", ["full", "no-absorption-op", "reflecting-bc", "equilibrium-p0"]
)
def test_diffusion_gradient_matches_fd(mode_name, rng):
    mode = InferenceMode.named(mode_name)
    grid = build_grid(6, 6, -1.0, 1.0)
    nv = grid.n_nodes - (2 if mode.bc.value == "absorbing" else 0)
    model = _test_model(grid)
    trials = _trials(rng)
    basis = build_basis(model, mode.bc, nv)
    g = dataset_gradients(basis, model, trials, mode)
    up = _loglik(model.with_diffusion(model.diffusion + EPS), trials, mode, nv)
    dn = _loglik(model.with_diffusion(model.diffusion - EPS), trials, mode, nv)
    fd = (up - dn) / (2 * EPS)
    assert g.grad_d == pytest.approx(fd, rel=1e-5, abs=1e-7)


def test_dataset_equals_sum_of_trials(smooth_model, rng):
    mode = InferenceMode.full()
    basis = build_basis(smooth_model, mode.bc, 25)
    trials = _trials(rng, n=5)
    ds = dataset_gradients(basis, smooth_model, trials, mode)
    total = None
    for t in trials:
        _, cache = trial_loglik(basis, smooth_model, t, mode)
        b = trial_gradients(basis, smooth_model, t, mode, cache)
        total = b if total is None else total + b
    assert np.abs(ds.grad_force.values - total.grad_force.values).max() < 1e-10
    assert np.abs(ds.grad_f0.values - total.grad_f0.values).max() < 1e-12
    assert ds.grad_d == pytest.approx(total.grad_d, rel=1e-10)
    assert ds.loglik == pytest.approx(total.loglik, rel=1e-12)


def test_precomputed_ops_match_default(smooth_model, rng):
    mode = InferenceMode.reflecting_bc()
    basis = build_basis(smooth_model, mode.bc, 20)
    trial = _trials(rng, n=1)[0]
    _, cache = trial_loglik(basis, smooth_model, trial, mode)
    a = trial_gradients(basis, smooth_model, trial, mode, cache)
    ops = gradient_ops(basis, smooth_model)
    b = trial_gradients(basis, smooth_model, trial, mode, cache, ops=ops)
    assert np.array_equal(a.grad_force.values, b.grad_force.values)
    assert a.grad_d == b.grad_d


def test_gradient_points_uphill(smooth_model, rng):
    # a small ascent step along the reported gradient must not lower log L
    mode = InferenceMode.full()
    nv = 30
    trials = _trials(rng, n=4)
    basis = build_basis(smooth_model, mode.bc, nv)
    g = dataset_gradients(basis, smooth_model, trials, mode)
    before = g.loglik
    stepped = smooth_model.with_force(
        GridFunction(
            smooth_model.force.values + 1e-3 * g.grad_force.values,
            smooth_model.grid,
        )
    )
    after = _loglik(stepped, trials, mode, nv)
    assert after > before
