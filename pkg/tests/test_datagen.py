"""Synthetic data: trajectories, time-rescaled spikes, dataset IO."""

import numpy as np
import pytest

from nslangevin import (
    GridFunction,
    LatentModel,
    build_grid,
    generate_dataset,
    load_dataset,
    preset_model,
    ramping_model,
    save_dataset,
    simulate_trajectory,
    spikes_from_path,
    stepping_model,
)
from nslangevin.datagen import (
    FIXED_DURATION,
    REACTION_TIME,
    GroundTruthPreset,
    SimConfig,
    trial_rng,
)


@pytest.fixture(scope="module")
def gen_grid():
    return build_grid(32, 8, -1.0, 1.0)


def test_sim_config_validation():
    with pytest.raises(ValueError):
        SimConfig(n_trials=0, rng_seed=1)
    with pytest.raises(ValueError):
        SimConfig(n_trials=1, rng_seed=1, dt=-1e-4)
    with pytest.raises(ValueError):
        SimConfig(n_trials=1, rng_seed=1, task="weird")
    with pytest.raises(ValueError):
        SimConfig(n_trials=1, rng_seed=1, task=FIXED_DURATION)  # no duration


def test_ramping_preset_parameters(gen_grid):
    m = ramping_model(gen_grid)
    # linear potential: slope -2.65 up to the normalizing constant
    slope = np.polyfit(gen_grid.nodes, m.phi.values, 1)[0]
    assert slope == pytest.approx(-2.65, abs=1e-9)
    assert m.diffusion == 0.56
    assert np.allclose(
        m.rate_fn.values, np.maximum(50.0 * gen_grid.nodes + 60.0, 0.0)
    )


def test_stepping_preset_has_double_barrier(gen_grid):
    m = stepping_model(gen_grid)
    assert m.diffusion == 1.0
    phi = m.phi.values
    x = gen_grid.nodes
    mid = phi[np.abs(x) < 0.1].min()
    left_barrier = phi[(x > -0.9) & (x < -0.3)].max()
    right_barrier = phi[(x > 0.3) & (x < 0.9)].max()
    # barriers on both sides of the central valley (the landscape is
    # asymmetric: the left barrier is much taller than the right one)
    assert left_barrier > mid + 1.0
    assert right_barrier > mid + 0.5


def test_preset_lookup(gen_grid):
    assert preset_model("ramping", gen_grid).diffusion == 0.56
    with pytest.raises(ValueError):
        preset_model("zigzag", gen_grid)


def test_fixed_duration_path_stays_inside(gen_grid):
    m = stepping_model(gen_grid)
    rng = trial_rng(7, 0)
    times, xs, terminated = simulate_trajectory(
        m, FIXED_DURATION, 1e-4, 10.0, rng, duration=1.5
    )
    assert terminated == "time-limit"
    assert len(xs) == int(round(1.5 / 1e-4)) + 1
    assert xs.min() >= -1.0 and xs.max() <= 1.0
    assert times[-1] == pytest.approx(1.5, abs=1e-9)


def test_reaction_time_path_ends_on_boundary(gen_grid):
    m = ramping_model(gen_grid)
    rng = trial_rng(7, 1)
    times, xs, terminated = simulate_trajectory(
        m, REACTION_TIME, 1e-4, 10.0, rng
    )
    assert terminated in ("boundary+1", "boundary-1")
    assert abs(abs(xs[-1]) - 1.0) < 1e-12
    # interpolated crossing time sits inside the last step
    assert times[-2] < times[-1] <= times[-2] + 1e-4 + 1e-12


def test_trajectory_reproducible(gen_grid):
    m = ramping_model(gen_grid)
    t1, x1, _ = simulate_trajectory(m, REACTION_TIME, 1e-4, 10.0, trial_rng(3, 5))
    t2, x2, _ = simulate_trajectory(m, REACTION_TIME, 1e-4, 10.0, trial_rng(3, 5))
    assert np.array_equal(x1, x2) and np.array_equal(t1, t2)


def test_x0_follows_initial_density(gen_grid):
    # p0 ~ exp(-100 x^2): mean 0, std ~ sqrt(1/200)
    m = ramping_model(gen_grid)
    draws = np.array(
        [
            simulate_trajectory(
                m, FIXED_DURATION, 1e-3, 10.0, trial_rng(11, i), duration=1e-3
            )[1][0]
            for i in range(2000)
        ]
    )
    assert abs(draws.mean()) < 0.01
    assert draws.std() == pytest.approx(np.sqrt(1.0 / 200.0), rel=0.1)


def test_spikes_from_constant_rate_are_poisson(gen_grid, rng):
    # frozen constant path, rate c: counts must be Poisson(c T) in moments
    c, duration = 80.0, 2.0
    rate = GridFunction(np.full(gen_grid.n_nodes, c), gen_grid)
    times = np.linspace(0.0, duration, 2001)
    xs = np.zeros_like(times)
    counts = np.array(
        [len(spikes_from_path(times, xs, rate, trial_rng(23, i))) for i in range(3000)]
    )
    lam = c * duration
    assert counts.mean() == pytest.approx(lam, rel=0.02)
    assert counts.var() == pytest.approx(lam, rel=0.06)


def test_spikes_sorted_within_window(gen_grid):
    m = ramping_model(gen_grid)
    rng = trial_rng(1, 2)
    times, xs, _ = simulate_trajectory(m, FIXED_DURATION, 1e-4, 10.0, rng, duration=1.0)
    spikes = spikes_from_path(times, xs, m.rate_fn, rng)
    assert (np.diff(spikes) > 0).all()
    assert spikes.min() >= 0.0 and spikes.max() <= times[-1]


def test_zero_rate_gives_no_spikes(gen_grid):
    rate = GridFunction(np.zeros(gen_grid.n_nodes), gen_grid)
    times = np.linspace(0.0, 1.0, 101)
    spikes = spikes_from_path(times, np.zeros_like(times), rate, trial_rng(0, 0))
    assert len(spikes) == 0


def test_generate_dataset_reproducible_and_trialwise(gen_grid):
    m = ramping_model(gen_grid)
    preset = GroundTruthPreset("ramping", m)
    t1, _ = generate_dataset(preset, SimConfig(n_trials=6, rng_seed=42))
    t2, _ = generate_dataset(preset, SimConfig(n_trials=6, rng_seed=42))
    for a, b in zip(t1, t2):
        assert a.tE == b.tE and np.array_equal(a.spikes, b.spikes)
    # per-trial RNG keying: the first trials do not depend on n_trials
    t3, _ = generate_dataset(preset, SimConfig(n_trials=3, rng_seed=42))
    for a, b in zip(t3, t1):
        assert a.tE == b.tE and np.array_equal(a.spikes, b.spikes)


def test_generate_dataset_warns_on_many_timeouts(gen_grid):
    # flat potential, tiny noise: reaction-time trials rarely reach a boundary
    zeros = GridFunction(np.zeros(gen_grid.n_nodes), gen_grid)
    stuck = LatentModel.from_force_f0(gen_grid, zeros, zeros, 1e-4)
    preset = GroundTruthPreset("stuck", stuck)
    with pytest.warns(UserWarning, match="time limit"):
        trials, meta = generate_dataset(
            preset, SimConfig(n_trials=3, rng_seed=0, t_max=0.05)
        )
    assert meta["n_timed_out"] == 3
    assert len(trials) == 0


def test_dataset_save_load_roundtrip(tmp_path, gen_grid):
    m = ramping_model(gen_grid)
    preset = GroundTruthPreset("ramping", m)
    trials, meta = generate_dataset(preset, SimConfig(n_trials=5, rng_seed=9))
    path = tmp_path / "data.json"
    save_dataset(path, trials, meta)
    loaded, meta2 = load_dataset(path)
    assert len(loaded) == len(trials)
    for a, b in zip(loaded, trials):
        assert a.t0 == b.t0 and a.tE == b.tE
        assert np.array_equal(a.spikes, b.spikes)
    assert meta2["seed"] == 9
    assert len(meta2["boundaries"]) == len(trials)
    assert set(meta2["boundaries"]) <= {"boundary+1", "boundary-1"}
