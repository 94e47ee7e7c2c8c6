"""Uniform trait grids and discrete densities.

Everything downstream (operators, moments, transport distances, the PDE
steppers) works on a shared uniform grid over a closed trait window.  All
integrals are composite trapezoid sums, which are spectrally accurate for
the smooth, rapidly decaying profiles this package produces.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidBoundsError, NegativityError, ZeroMassError

# Values may dip this far below zero (FFT roundoff) before we call it a bug.
NEGATIVITY_TOL = 1e-12

# Probability clipping used when tabulating quantile functions.
PROB_CLIP = 1e-6
DEFAULT_PROB_POINTS = 4096


@dataclass(frozen=True)
class TraitGrid:
    """Uniform grid of ``n_points`` nodes on ``[x_min, x_max]``."""

    x_min: float
    x_max: float
    n_points: int
    nodes: np.ndarray = field(init=False, repr=False, compare=False)
    spacing: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (self.x_max > self.x_min):
            raise InvalidBoundsError(
                f"need x_min < x_max, got [{self.x_min}, {self.x_max}]")
        if self.n_points < 16:
            raise InvalidBoundsError(
                f"need at least 16 nodes, got {self.n_points}")
        nodes = np.linspace(self.x_min, self.x_max, self.n_points)
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "spacing",
                           (self.x_max - self.x_min) / (self.n_points - 1))

    def trapz(self, values: np.ndarray) -> float:
        """Trapezoid quadrature of node samples over the grid."""
        return float(np.trapezoid(values, dx=self.spacing))

    def cumulative_trapz(self, values: np.ndarray) -> np.ndarray:
        """Running trapezoid integral; entry j integrates up to node j."""
        out = np.empty_like(values, dtype=float)
        out[0] = 0.0
        np.cumsum((values[1:] + values[:-1]) * (0.5 * self.spacing),
                  out=out[1:])
        return out


def make_grid(x_min: float, x_max: float, n_points: int) -> TraitGrid:
    return TraitGrid(float(x_min), float(x_max), int(n_points))


class Density:
    """Nonnegative node samples on a :class:`TraitGrid`.

    Immutable after construction.  ``mass`` is the trapezoid integral,
    computed once (the value array is frozen, so it cannot go stale).
    """

    __slots__ = ("grid", "values", "mass")

    def __init__(self, grid: TraitGrid, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.n_points,):
            raise InvalidBoundsError(
                f"values shape {values.shape} does not match grid "
                f"({grid.n_points} nodes)")
        if not np.all(np.isfinite(values)):
            raise NegativityError("non-finite density values")
        low = values.min()
        if low < -NEGATIVITY_TOL:
            raise NegativityError(
                f"density value {low:.3e} below -{NEGATIVITY_TOL}")
        values = values.copy()
        values.setflags(write=False)
        self.grid = grid
        self.values = values
        self.mass = grid.trapz(values)

    def with_values(self, values) -> "Density":
        return Density(self.grid, values)


def integrate(d: Density) -> float:
    """Total mass of a density (trapezoid rule)."""
    return d.mass


def normalize(d: Density) -> Density:
    """Rescale to unit mass."""
    if d.mass <= 0.0 or not np.isfinite(d.mass):
        raise ZeroMassError(f"cannot normalize density of mass {d.mass}")
    return Density(d.grid, d.values / d.mass)


def clip_roundoff_negatives(values: np.ndarray) -> np.ndarray:
    """Zero out negative entries within the roundoff tolerance.

    Entries below ``-NEGATIVITY_TOL`` are left alone so the Density
    constructor can reject them loudly.
    """
    return np.where((values < 0.0) & (values >= -NEGATIVITY_TOL),
                    0.0, values)


@dataclass(frozen=True)
class CdfQuantile:
    """CDF node samples plus a tabulated generalized inverse."""

    cdf: np.ndarray
    prob_grid: np.ndarray
    quantile_values: np.ndarray


def quantile_from_cdf(grid: TraitGrid, cdf: np.ndarray,
                      probs: np.ndarray) -> np.ndarray:
    """Generalized inverse Q(p) = inf{x : F(x) >= p}, piecewise linear.

    Flat CDF stretches (zero-density gaps) resolve to their left edge.
    """
    idx = np.searchsorted(cdf, probs, side="left")
    idx = np.clip(idx, 1, len(cdf) - 1)
    f_lo = cdf[idx - 1]
    f_hi = cdf[idx]
    df = f_hi - f_lo
    frac = np.where(df > 0.0, (probs - f_lo) / np.where(df > 0.0, df, 1.0),
                    0.0)
    frac = np.clip(frac, 0.0, 1.0)
    x = grid.nodes[idx - 1] + frac * grid.spacing
    # Probabilities at or below F(x_min) sit on the left boundary.
    x = np.where(probs <= cdf[0], grid.nodes[0], x)
    return x


def cdf_and_quantile(d: Density,
                     n_probs: int = DEFAULT_PROB_POINTS) -> CdfQuantile:
    """CDF samples and the quantile tabulated on a clipped uniform p-grid."""
    cdf = d.grid.cumulative_trapz(d.values)
    probs = np.linspace(PROB_CLIP, 1.0 - PROB_CLIP, n_probs)
    q = quantile_from_cdf(d.grid, cdf, probs)
    return CdfQuantile(cdf=cdf, prob_grid=probs, quantile_values=q)
