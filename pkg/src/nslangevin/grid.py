"""Gauss-Legendre-Lobatto spectral-element discretization of a 1D interval.

Builds the global GLL grid with assembled quadrature weights, a global
differentiation matrix, and a running-integral (antiderivative) matrix.
Grid-sampled functions are plain vectors paired with the grid they live on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SpectralGrid",
    "GridFunction",
    "build_grid",
    "quadrature",
    "differentiate",
    "antiderivative",
]


def _legendre_and_derivs(p: int, x: float) -> tuple[float, float, float]:
    """Evaluate P_p(x) and its first two derivatives by the three-term recurrence."""
    l1 = l1d = l1dd = 0.0
    l0, l0d, l0dd = 1.0, 0.0, 0.0
    for k in range(1, p + 1):
        l2, l2d, l2dd = l1, l1d, l1dd
        l1, l1d, l1dd = l0, l0d, l0dd
        a = (2.0 * k - 1.0) / k
        b = (k - 1.0) / k
        l0 = a * x * l1 - b * l2
        l0d = a * (l1 + x * l1d) - b * l2d
        l0dd = a * (2.0 * l1d + x * l1dd) - b * l2dd
    return l0, l0d, l0dd


def gll_nodes_weights(n_points: int) -> tuple[np.ndarray, np.ndarray]:
    """GLL nodes and weights on the reference element [-1, 1].

    Nodes are the roots of (1 - x^2) P'_{n-1}(x), found by Newton iteration
    from Chebyshev-Gauss-Lobatto initial guesses. Weights follow the closed
    form w_i = 2 / (n(n-1) P_{n-1}(x_i)^2).
    """
    if n_points < 2:
        raise ValueError(f"need at least 2 points per element, got {n_points}")
    p = n_points - 1
    nodes = np.empty(n_points)
    nodes[0], nodes[-1] = -1.0, 1.0
    for i in range(1, p):
        # Chebyshev-Lobatto guess, refined on g(x) = (1 - x^2) P'_p(x).
        x = -np.cos(np.pi * i / p)
        for _ in range(100):
            _, ld, ldd = _legendre_and_derivs(p, x)
            g = (1.0 - x * x) * ld
            gd = -2.0 * x * ld + (1.0 - x * x) * ldd
            dx = g / gd
            x -= dx
            if abs(dx) < 1e-14:
                break
        nodes[i] = x
    nodes.sort()
    lp = np.array([_legendre_and_derivs(p, x)[0] for x in nodes])
    weights = 2.0 / (n_points * p * lp**2)
    return nodes, weights


def _barycentric_weights(nodes: np.ndarray) -> np.ndarray:
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / diff.prod(axis=1)


def _diff_matrix(nodes: np.ndarray) -> np.ndarray:
    """Lagrange differentiation matrix via barycentric weights."""
    b = _barycentric_weights(nodes)
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    d = (b[None, :] / b[:, None]) / diff
    np.fill_diagonal(d, 0.0)
    np.fill_diagonal(d, -d.sum(axis=1))
    return d


def _lagrange_eval(nodes: np.ndarray, bary: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Evaluate all Lagrange basis polynomials on `nodes` at points `x`.

    Returns a matrix of shape (len(x), len(nodes)).
    """
    out = np.empty((len(x), len(nodes)))
    for k, xv in enumerate(x):
        diff = xv - nodes
        hit = np.isclose(diff, 0.0, atol=1e-15)
        if hit.any():
            out[k] = hit.astype(float)
            continue
        terms = bary / diff
        out[k] = terms / terms.sum()
    return out


def _antideriv_matrix_ref(nodes: np.ndarray) -> np.ndarray:
    """Reference-element matrix B with B[k, j] = int_{-1}^{x_k} l_j(s) ds.

    The Lagrange basis has degree n-1, so an n-point Gauss-Legendre rule on
    each subinterval integrates it exactly.
    """
    n = len(nodes)
    gx, gw = np.polynomial.legendre.leggauss(n)
    bary = _barycentric_weights(nodes)
    b = np.zeros((n, n))
    for k in range(1, n):
        half = 0.5 * (nodes[k] - nodes[0])
        mid = 0.5 * (nodes[k] + nodes[0])
        pts = mid + half * gx
        vals = _lagrange_eval(nodes, bary, pts)
        b[k] = half * (gw[:, None] * vals).sum(axis=0)
    return b


@dataclass(frozen=True)
class SpectralGrid:
    """Assembled GLL spectral-element grid on [x_begin, x_end].

    Global nodes share element boundaries (C0 continuity), so the node count
    is n_elements * (points_per_element - 1) + 1. Quadrature weights are
    summed at shared nodes; the differentiation matrix averages the two
    one-sided element derivatives there.
    """

    n_elements: int
    points_per_element: int
    x_begin: float
    x_end: float
    nodes: np.ndarray
    weights: np.ndarray
    diff_matrix: np.ndarray
    antideriv_matrix: np.ndarray
    element_boundaries: np.ndarray

    def __post_init__(self):
        self.nodes.setflags(write=False)
        self.weights.setflags(write=False)
        self.diff_matrix.setflags(write=False)
        self.antideriv_matrix.setflags(write=False)
        self.element_boundaries.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def element_slice(self, e: int) -> slice:
        np_ = self.points_per_element
        start = e * (np_ - 1)
        return slice(start, start + np_)


@dataclass(frozen=True)
class GridFunction:
    """Function sampled at the global nodes of a SpectralGrid."""

    values: np.ndarray
    grid: SpectralGrid

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_nodes,):
            raise ValueError(
                f"expected {self.grid.n_nodes} values, got shape {v.shape}"
            )
        object.__setattr__(self, "values", v)
        self.values.setflags(write=False)


def build_grid(
    n_elements: int, points_per_element: int, x_begin: float, x_end: float
) -> SpectralGrid:
    """Build a uniform-element GLL grid with assembled operators."""
    if n_elements < 1:
        raise ValueError(f"n_elements must be positive, got {n_elements}")
    if points_per_element < 2:
        raise ValueError(
            f"points_per_element must be >= 2, got {points_per_element}"
        )
    if not x_begin < x_end:
        raise ValueError(f"need x_begin < x_end, got [{x_begin}, {x_end}]")

    ref_nodes, ref_weights = gll_nodes_weights(points_per_element)
    ref_diff = _diff_matrix(ref_nodes)
    ref_anti = _antideriv_matrix_ref(ref_nodes)

    bounds = np.linspace(x_begin, x_end, n_elements + 1)
    half = 0.5 * (bounds[1] - bounds[0])

    n_global = n_elements * (points_per_element - 1) + 1
    nodes = np.empty(n_global)
    weights = np.zeros(n_global)
    diff = np.zeros((n_global, n_global))
    anti = np.zeros((n_global, n_global))
    # Count of elements touching each node, for averaging interface derivatives.
    touch = np.zeros(n_global)

    full_element_weights = half * ref_weights
    for e in range(n_elements):
        sl = slice(e * (points_per_element - 1), e * (points_per_element - 1) + points_per_element)
        mid = 0.5 * (bounds[e] + bounds[e + 1])
        nodes[sl] = mid + half * ref_nodes
        weights[sl] += full_element_weights
        diff[sl, sl] += ref_diff / half
        touch[sl] += 1.0
        anti[sl, sl] += half * ref_anti
        # Offset rows of this element by the full integrals of earlier elements.
        for ep in range(e):
            slp = slice(
                ep * (points_per_element - 1),
                ep * (points_per_element - 1) + points_per_element,
            )
            anti[sl.start + 1 : sl.stop, slp] += full_element_weights
    diff /= touch[:, None]

    nodes[0], nodes[-1] = x_begin, x_end
    return SpectralGrid(
        n_elements=n_elements,
        points_per_element=points_per_element,
        x_begin=float(x_begin),
        x_end=float(x_end),
        nodes=nodes,
        weights=weights,
        diff_matrix=diff,
        antideriv_matrix=anti,
        element_boundaries=bounds,
    )


def _check(f: GridFunction, grid: SpectralGrid | None = None) -> np.ndarray:
    if grid is not None and f.grid is not grid:
        if not np.array_equal(f.grid.nodes, grid.nodes):
            raise ValueError("grid function sampled on a different grid")
    return f.values


def quadrature(f: GridFunction) -> float:
    """Integral of f over the full domain by assembled GLL quadrature."""
    return float(f.grid.weights @ _check(f))


def differentiate(f: GridFunction) -> GridFunction:
    """Spectral derivative of f (per-element, averaged at interfaces)."""
    return GridFunction(f.grid.diff_matrix @ _check(f), f.grid)


def antiderivative(f: GridFunction) -> GridFunction:
    """Running integral int_{x_begin}^{x} f(s) ds at every node."""
    return GridFunction(f.grid.antideriv_matrix @ _check(f), f.grid)
