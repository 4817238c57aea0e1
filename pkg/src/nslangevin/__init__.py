"""Non-parametric inference of latent non-stationary Langevin dynamics
from spike-train observations, plus synthetic ground-truth generation."""

from .grid import (
    GridFunction,
    SpectralGrid,
    antiderivative,
    build_grid,
    differentiate,
    quadrature,
)
from .model import (
    LatentModel,
    density_from_f0,
    equilibrium_density,
    f0_from_density,
    potential_from_force,
)
from .operators import (
    BoundaryCondition,
    OperatorBasis,
    absorption_matrix,
    build_basis,
    build_h,
    build_h0,
    emission_matrix,
    initial_vector,
    propagator,
    terminal_vector,
)
from .likelihood import (
    InferenceMode,
    Trial,
    dataset_loglik,
    gamma_matrix,
    g_matrix,
    trial_loglik,
)
from .gradients import GradientBundle, dataset_gradients, trial_gradients
from .optimizer import FitConfig, FitTrace, fit, gd_step, relative_loglik
from .datagen import (
    GroundTruthPreset,
    SimConfig,
    generate_dataset,
    load_dataset,
    preset_model,
    ramping_model,
    save_dataset,
    simulate_trajectory,
    spikes_from_path,
    stepping_model,
)

__version__ = "0.1.0"
