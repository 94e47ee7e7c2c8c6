"""Limit objects the simulations are compared against.

In the small-variance regime the population concentrates on a Gaussian
of variance epsilon^2 whose center follows the gradient flow

    dz/dt = -m'(z),

and the total mass tracks rho(t) = (r - m(z(t))) / kappa.  Two variants
of the center path matter: one started from the measured initial mean
(used when comparing against the finite-variance run itself) and one
started from the nominal center x0 (the true limit object).
"""
from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import UnderResolvedError
from .grid import Density, TraitGrid
from .mortality import MortalitySpec, eval_m, eval_m_prime

GAUSSIAN_MIN_STEPS = 4.0

VARIANTS = ("limit", "epsilon")


class WindowExitWarning(UserWarning):
    """The gradient-flow path left the declared convexity window."""


@dataclass(frozen=True)
class MeanPath:
    """Gradient-flow trajectory sampled on uniform times.

    ``variant`` records which initial condition the path carries:
    "epsilon" for paths started from a measured initial mean, "limit"
    for paths started from the nominal center.
    """

    times: np.ndarray
    values: np.ndarray
    variant: str = "limit"

    def at(self, t: np.ndarray) -> np.ndarray:
        return np.interp(t, self.times, self.values)

    def as_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t,z\n")
        for t, z in zip(self.times, self.values):
            buf.write(f"{float(t)!r},{float(z)!r}\n")
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.as_csv())


def integrate_mean_ode(m: MortalitySpec, z0: float, t_end: float,
                       dt: float = 1e-3,
                       sample_times: np.ndarray = None,
                       variant: str = "limit") -> MeanPath:
    """Integrate dz/dt = -m'(z) with classical RK4.

    If ``sample_times`` is given, the path is reported exactly at those
    times, with enough RK4 substeps per interval to keep the step at or
    below ``dt``.  Leaving the convexity window is worth knowing about
    but not fatal, so it warns.
    """
    if sample_times is None:
        n = max(1, int(math.ceil(t_end / dt)))
        sample_times = np.linspace(0.0, t_end, n + 1)
    sample_times = np.asarray(sample_times, dtype=float)
    values = np.empty_like(sample_times)
    z = float(z0)
    values[0] = z
    for i in range(1, len(sample_times)):
        span = sample_times[i] - sample_times[i - 1]
        substeps = max(1, int(math.ceil(span / dt)))
        h = span / substeps
        for _ in range(substeps):
            k1 = -_slope(m, z)
            k2 = -_slope(m, z + 0.5 * h * k1)
            k3 = -_slope(m, z + 0.5 * h * k2)
            k4 = -_slope(m, z + h * k3)
            z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        values[i] = z
    if np.max(np.abs(values)) >= m.window:
        warnings.warn(
            f"mean path reached |z| = {np.max(np.abs(values)):.4g}, "
            f"outside the convexity window (+-{m.window})",
            WindowExitWarning, stacklevel=2)
    return MeanPath(times=sample_times, values=values, variant=variant)


def _slope(m: MortalitySpec, z: float) -> float:
    return float(eval_m_prime(m, np.array([z]))[0])


def gaussian_density(center: float, std: float, grid: TraitGrid) -> Density:
    """Normal density sampled on the grid (raw samples, no renormalizing:
    the trapezoid mass of a resolved Gaussian is already 1 to ~1e-12)."""
    if std < GAUSSIAN_MIN_STEPS * grid.spacing:
        raise UnderResolvedError(
            f"gaussian of std {std:.4g} under-resolved on spacing "
            f"{grid.spacing:.4g}")
    u = (grid.nodes - center) / std
    values = np.exp(-0.5 * u * u) / (std * math.sqrt(2.0 * math.pi))
    return Density(grid, values)


def gaussian_profile(center: float, epsilon: float,
                     grid: TraitGrid) -> Density:
    """The limiting ansatz: Gaussian of variance epsilon^2 at ``center``."""
    return gaussian_density(center, float(epsilon), grid)


@dataclass(frozen=True)
class RhoLimit:
    """Limiting mass along a mean path, with exhausted entries flagged."""

    times: np.ndarray
    values: np.ndarray
    nonpositive: np.ndarray

    @property
    def any_nonpositive(self) -> bool:
        return bool(self.nonpositive.any())


def rho_limit(m: MortalitySpec, path: MeanPath, r: float,
              kappa: float) -> RhoLimit:
    """Limiting mass (r - m(z(t))) / kappa along a mean path.

    Entries where the growth rate is exhausted (r <= m(z)) are flagged
    rather than raised; the formula itself stays evaluable.
    """
    values = (r - eval_m(m, path.values)) / kappa
    return RhoLimit(times=path.times, values=values,
                    nonpositive=values <= 0.0)
