"""Latent model state: potential, initial density, noise magnitude, firing rate.

The optimizer works on the unconstrained variables F(x) = -Phi'(x) and
F0(x) = p0'(x)/p0(x); this module performs the normalizing conversions
between those and the constrained quantities Phi(x), p0(x).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import (
    GridFunction,
    SpectralGrid,
    antiderivative,
    build_grid,
    differentiate,
    quadrature,
)

__all__ = [
    "LatentModel",
    "potential_from_force",
    "density_from_f0",
    "f0_from_density",
    "equilibrium_density",
    "default_rate",
]

#: Densities are floored here before taking logs (F0 needs log-derivatives).
DENSITY_FLOOR = 1e-12


def default_rate(grid: SpectralGrid) -> GridFunction:
    """Default firing-rate function 50x + 60 Hz, clamped below at zero."""
    return GridFunction(np.maximum(50.0 * grid.nodes + 60.0, 0.0), grid)


def potential_from_force(force: GridFunction) -> GridFunction:
    """Potential Phi = -int F + C, with C fixed so that int exp(-Phi) = 1."""
    u = -antiderivative(force).values
    # exp(-u) can overflow for steep forces; recenter before the log-sum.
    shift = (-u).max()
    z = float(force.grid.weights @ np.exp(-u - shift))
    c = np.log(z) + shift
    return GridFunction(u + c, force.grid)


def density_from_f0(f0: GridFunction) -> GridFunction:
    """Normalized density p0 = exp(int F0) / Z. Strictly positive for finite F0."""
    g = antiderivative(f0).values
    g = g - g.max()  # recenter the exponent; cancels in the normalization
    p = np.exp(g)
    return GridFunction(p / float(f0.grid.weights @ p), f0.grid)


def f0_from_density(p0: GridFunction) -> GridFunction:
    """Log-derivative F0 = p0'/p0, with a positivity floor on p0."""
    v = p0.values
    if (v <= 0).any():
        warnings.warn("nonpositive density values clamped to floor", stacklevel=2)
    v = np.maximum(v, DENSITY_FLOOR)
    return differentiate(GridFunction(np.log(v), p0.grid))


def equilibrium_density(phi: GridFunction) -> GridFunction:
    """Equilibrium density p_eq proportional to exp(-Phi), normalized to 1."""
    e = np.exp(-(phi.values - phi.values.min()))
    return GridFunction(e / float(phi.grid.weights @ e), phi.grid)


@dataclass(frozen=True)
class LatentModel:
    """Full model state on a grid: {Phi, p0, D} plus F, F0 and the rate f(x).

    The firing-rate function is a fixed input, never optimized. Instances are
    immutable; updates go through the `with_*` constructors, which renormalize.
    """

    grid: SpectralGrid
    phi: GridFunction
    force: GridFunction
    p0: GridFunction
    f0: GridFunction
    diffusion: float
    rate_fn: GridFunction

    def __post_init__(self):
        if self.diffusion <= 0:
            raise ValueError(f"diffusion must be positive, got {self.diffusion}")
        if (self.rate_fn.values < 0).any():
            raise ValueError("firing rate must be nonnegative at all nodes")

    @classmethod
    def from_force_f0(
        cls,
        grid: SpectralGrid,
        force: GridFunction,
        f0: GridFunction,
        diffusion: float,
        rate_fn: GridFunction | None = None,
    ) -> "LatentModel":
        if rate_fn is None:
            rate_fn = default_rate(grid)
        return cls(
            grid=grid,
            phi=potential_from_force(force),
            force=force,
            p0=density_from_f0(f0),
            f0=f0,
            diffusion=float(diffusion),
            rate_fn=rate_fn,
        )

    @classmethod
    def from_phi_p0(
        cls,
        grid: SpectralGrid,
        phi: GridFunction,
        p0: GridFunction,
        diffusion: float,
        rate_fn: GridFunction | None = None,
    ) -> "LatentModel":
        """Build from Phi and p0 directly; both are renormalized."""
        force = GridFunction(-differentiate(phi).values, grid)
        phi_n = potential_from_force(force)
        p0_n = GridFunction(
            np.maximum(p0.values, 0.0) / max(quadrature(p0), np.finfo(float).tiny),
            grid,
        )
        f0 = f0_from_density(p0_n)
        if rate_fn is None:
            rate_fn = default_rate(grid)
        return cls(grid, phi_n, force, p0_n, f0, float(diffusion), rate_fn)

    def with_force(self, force: GridFunction) -> "LatentModel":
        return LatentModel(
            self.grid,
            potential_from_force(force),
            force,
            self.p0,
            self.f0,
            self.diffusion,
            self.rate_fn,
        )

    def with_f0(self, f0: GridFunction) -> "LatentModel":
        return LatentModel(
            self.grid,
            self.phi,
            self.force,
            density_from_f0(f0),
            f0,
            self.diffusion,
            self.rate_fn,
        )

    def with_diffusion(self, diffusion: float) -> "LatentModel":
        return LatentModel(
            self.grid,
            self.phi,
            self.force,
            self.p0,
            self.f0,
            float(diffusion),
            self.rate_fn,
        )

    def equilibrium(self) -> GridFunction:
        return equilibrium_density(self.phi)

    def to_dict(self) -> dict:
        g = self.grid
        return {
            "grid": {
                "n_elements": g.n_elements,
                "points_per_element": g.points_per_element,
                "x_begin": g.x_begin,
                "x_end": g.x_end,
            },
            "nodes": g.nodes.tolist(),
            "phi": self.phi.values.tolist(),
            "p0": self.p0.values.tolist(),
            "D": self.diffusion,
            "rate": self.rate_fn.values.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LatentModel":
        g = doc["grid"]
        grid = build_grid(
            g["n_elements"], g["points_per_element"], g["x_begin"], g["x_end"]
        )
        # Keep phi and p0 verbatim (they were normalized when written) so a
        # saved model reproduces its likelihood bit-exactly after a round-trip.
        phi = GridFunction(np.asarray(doc["phi"], dtype=float), grid)
        p0 = GridFunction(np.asarray(doc["p0"], dtype=float), grid)
        return cls(
            grid=grid,
            phi=phi,
            force=GridFunction(-differentiate(phi).values, grid),
            p0=p0,
            f0=f0_from_density(p0),
            diffusion=float(doc["D"]),
            rate_fn=GridFunction(np.asarray(doc["rate"], dtype=float), grid),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "LatentModel":
        return cls.from_dict(json.loads(Path(path).read_text()))
