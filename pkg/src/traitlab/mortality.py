"""Mortality (selection) profiles and structural hypothesis checks.

A mortality profile assigns a per-capita death rate ``m(x)`` to each trait
value.  The analysis downstream needs ``m`` to look like a well: zero at
its minimum, uniformly convex on a window ``(-L, L)`` around the optimum,
and with a polynomially bounded second derivative.  The validator checks
those properties numerically and reports, never raises: degenerate
profiles (e.g. ``m = 0``) are legitimate diagnostic inputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConfigError, OutOfTableError
from .grid import TraitGrid, make_grid

KINDS = ("quadratic", "quartic_well", "double_well", "tabulated")


@dataclass(frozen=True)
class MortalitySpec:
    """A mortality profile plus its declared structural constants.

    ``window`` is the half-width L of the convexity window, ``convexity``
    the lower bound on m'' there, ``growth_bound`` / ``growth_exponent``
    the constants of the bound |m''(x)| <= Am * (1 + |x|^p).
    """

    kind: str
    params: tuple
    window: float
    convexity: float
    growth_bound: float
    growth_exponent: int
    spline: Optional[CubicSpline] = field(default=None, repr=False,
                                          compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown mortality kind {self.kind!r}")
        if self.window <= 0.0:
            raise ConfigError("window half-width must be positive")


def quadratic(s: float, window: float = 0.7) -> MortalitySpec:
    """m(x) = s x^2.  The second derivative is constant, so the growth
    exponent is 0 (bounded)."""
    if s < 0.0:
        raise ConfigError("quadratic coefficient must be >= 0")
    return MortalitySpec("quadratic", (float(s),), float(window),
                         convexity=2.0 * s, growth_bound=max(s, 0.0),
                         growth_exponent=0)


def quartic_well(a: float, b: float, window: float = 0.7) -> MortalitySpec:
    """m(x) = a x^2 + b x^4 with a, b > 0."""
    if a <= 0.0 or b <= 0.0:
        raise ConfigError("quartic well needs a > 0 and b > 0")
    return MortalitySpec("quartic_well", (float(a), float(b)), float(window),
                         convexity=2.0 * a,
                         growth_bound=max(2.0 * a, 12.0 * b),
                         growth_exponent=2)


def double_well(a: float, b: float, window: float = None) -> MortalitySpec:
    """m(x) = a x^2 (x - b)^2: wells at 0 and b, normalized to inf m = 0.

    The trait origin sits in the left well.  m'' is positive only for
    x < 0.211 b, so the default window stays inside that region.
    """
    if a <= 0.0 or b <= 0.0:
        raise ConfigError("double well needs a > 0 and b > 0")
    if window is None:
        window = 0.15 * b
    window = float(window)
    # m''(x) = a (12 x^2 - 12 b x + 2 b^2) decreases on [-L, L] for L < b/2.
    convexity = a * (12.0 * window**2 - 12.0 * b * window + 2.0 * b**2)
    growth_bound = a * max(12.0 + 6.0 * b, 6.0 * b + 2.0 * b**2)
    return MortalitySpec("double_well", (float(a), float(b)), window,
                         convexity=convexity, growth_bound=growth_bound,
                         growth_exponent=2)


def tabulated(x_table, m_table, window: float = 0.5) -> MortalitySpec:
    """Cubic-spline profile through sample points.

    Evaluation outside the table range raises; tabulated profiles are for
    exploratory runs only and are rejected by the rate-measurement sweep.
    """
    x_table = np.asarray(x_table, dtype=float)
    m_table = np.asarray(m_table, dtype=float)
    if x_table.ndim != 1 or x_table.shape != m_table.shape:
        raise ConfigError("tabulated profile needs matching 1-d tables")
    if len(x_table) < 4:
        raise ConfigError("tabulated profile needs at least 4 points")
    if np.any(np.diff(x_table) <= 0.0):
        raise ConfigError("tabulated x values must be strictly increasing")
    spline = CubicSpline(x_table, m_table)
    dense = np.linspace(x_table[0], x_table[-1], 4 * len(x_table))
    curv = spline(dense, 2)
    return MortalitySpec("tabulated", (x_table, m_table), float(window),
                         convexity=float(curv.min()),
                         growth_bound=float(np.abs(curv).max()),
                         growth_exponent=0, spline=spline)


def _check_table_range(spec: MortalitySpec, x: np.ndarray):
    x_table = spec.params[0]
    if np.any(x < x_table[0]) or np.any(x > x_table[-1]):
        raise OutOfTableError(
            f"evaluation outside table range [{x_table[0]}, {x_table[-1]}]")


def eval_m(spec: MortalitySpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if spec.kind == "quadratic":
        (s,) = spec.params
        return s * x * x
    if spec.kind == "quartic_well":
        a, b = spec.params
        x2 = x * x
        return a * x2 + b * x2 * x2
    if spec.kind == "double_well":
        a, b = spec.params
        return a * (x * (x - b)) ** 2
    _check_table_range(spec, x)
    return spec.spline(x)


def eval_m_prime(spec: MortalitySpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if spec.kind == "quadratic":
        (s,) = spec.params
        return 2.0 * s * x
    if spec.kind == "quartic_well":
        a, b = spec.params
        return 2.0 * a * x + 4.0 * b * x**3
    if spec.kind == "double_well":
        a, b = spec.params
        return 2.0 * a * x * (x - b) * (2.0 * x - b)
    _check_table_range(spec, x)
    return spec.spline(x, 1)


def eval_m_second(spec: MortalitySpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if spec.kind == "quadratic":
        (s,) = spec.params
        return np.full_like(x, 2.0 * s)
    if spec.kind == "quartic_well":
        a, b = spec.params
        return 2.0 * a + 12.0 * b * x * x
    if spec.kind == "double_well":
        a, b = spec.params
        return a * (12.0 * x * x - 12.0 * b * x + 2.0 * b * b)
    _check_table_range(spec, x)
    return spec.spline(x, 2)


@dataclass(frozen=True)
class HypothesisReport:
    """Outcome of the structural checks for one profile.

    ``eta`` is the spectral-gap margin r (1 - 2/4^k0) - max m on the
    window; the moment bootstrap needs it positive and additionally
    k0 > 3 + ceil(p/2).
    """

    h0_nonnegative: bool
    h1_convex_window: bool
    h2_window_below_r: bool
    h3_growth_bound: bool
    eta: float
    eta_positive: bool
    k0_admissible: bool
    max_m_window: float
    inf_m: float
    notes: tuple

    @property
    def all_ok(self) -> bool:
        return (self.h0_nonnegative and self.h1_convex_window
                and self.h2_window_below_r and self.h3_growth_bound
                and self.eta_positive and self.k0_admissible)


def validate_hypotheses(spec: MortalitySpec, r: float, k0: int,
                        grid: Optional[TraitGrid] = None
                        ) -> HypothesisReport:
    """Check the well-shape hypotheses numerically at grid nodes.

    Failures are reported in the returned record, never raised, so that
    degenerate profiles can still be simulated for diagnostics.  With no
    grid given the checks run on the default trait window.
    """
    if grid is None:
        grid = make_grid(-6.0, 6.0, 1024)
    notes = []
    x = grid.nodes
    if spec.kind == "tabulated":
        lo, hi = spec.params[0][0], spec.params[0][-1]
        x = x[(x >= lo) & (x <= hi)]
        notes.append("tabulated profile: checks restricted to table range")
    m = eval_m(spec, x)

    # inf m = 0: refine around the coarse argmin instead of trusting the
    # grid to contain the exact minimizer.
    j = int(np.argmin(m))
    lo = x[max(j - 1, 0)]
    hi = x[min(j + 1, len(x) - 1)]
    fine = np.linspace(lo, hi, 129)
    inf_m = float(min(m.min(), eval_m(spec, fine).min()))
    h0 = bool(m.min() >= -1e-12 and abs(inf_m) <= 1e-8)
    if not h0:
        notes.append(f"inf m = {inf_m:.3e} not normalized to 0")

    window = np.abs(x) < spec.window
    if not window.any():
        notes.append("convexity window contains no grid nodes")
    mpp = eval_m_second(spec, x)
    slope0 = float(eval_m_prime(spec, np.array([0.0]))[0])
    min_curv = float(mpp[window].min()) if window.any() else math.nan
    h1 = bool(abs(slope0) <= 1e-10 and spec.convexity > 0.0
              and window.any() and min_curv >= spec.convexity - 1e-9)
    if not h1:
        notes.append(
            f"convexity on window: m'(0) = {slope0:.3e}, "
            f"min m'' = {min_curv:.6g}, declared floor {spec.convexity:.6g}")

    closed = np.abs(x) <= spec.window + 1e-12
    max_m_window = float(m[closed].max()) if closed.any() else math.nan
    h2 = bool(closed.any() and max_m_window < r)
    if not h2:
        notes.append(f"max m on window = {max_m_window:.6g} >= r = {r}")

    p = spec.growth_exponent
    bound = spec.growth_bound * (1.0 + np.abs(x) ** p)
    h3 = bool(np.all(np.abs(mpp) <= bound + 1e-9))
    if not h3:
        notes.append("second derivative exceeds declared growth bound")

    eta = r * (1.0 - 2.0 / 4.0**k0) - max_m_window
    k0_admissible = bool(k0 > 3 + math.ceil(p / 2))
    if not k0_admissible:
        notes.append(f"k0 = {k0} too small: need k0 > {3 + math.ceil(p / 2)}"
                     f" for growth exponent {p}")

    return HypothesisReport(
        h0_nonnegative=h0, h1_convex_window=h1, h2_window_below_r=h2,
        h3_growth_bound=h3, eta=float(eta), eta_positive=bool(eta > 0.0),
        k0_admissible=k0_admissible, max_m_window=max_m_window,
        inf_m=inf_m, notes=tuple(notes))
