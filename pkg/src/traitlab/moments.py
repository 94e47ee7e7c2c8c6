"""Moment extraction, algebraic moment transport, and ODE residuals.

The moment hierarchy closes the loop between simulation and theory:

* the offspring operator maps central moments through an explicit
  binomial sum (``predict_T_moment``), so operator output can be checked
  against pure algebra;
* the mean and variance of the renormalized sexual flow satisfy scalar
  ODEs whose forcing terms are exact selection integrals
  (``moment_ode_residuals`` measures how well a simulated trajectory
  satisfies them);
* the asexual flow satisfies different moment ODEs (no variance
  relaxation toward epsilon^2), which is the quantitative contrast
  between the two reproduction mechanisms.
"""
from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (InsufficientSamplesError, NotNormalizedError,
                     OrderExceededError, TraitLabError)
from .grid import Density
from .mortality import (MortalitySpec, eval_m, eval_m_prime, eval_m_second)

MASS_TOL = 1e-8

# Boundary level of the top moment integrand above which the grid is
# suspected of chopping tails.
TAIL_WARN_LEVEL = 1e-14

GAUSS_LEGENDRE_NODES = 24


class TailTruncationWarning(UserWarning):
    """The top moment integrand has not decayed at the grid boundary."""


class DecompositionMismatchError(TraitLabError, ArithmeticError):
    """Two algebraically equal quadratures disagreed beyond tolerance."""


@dataclass(frozen=True)
class MomentVector:
    """Mean plus central and absolute central moments up to order 2 k0.

    ``central[k]`` is the k-th central moment; ``absolute[k]`` the k-th
    absolute central moment.  By construction central[0] = 1 and
    central[1] = 0 exactly, and even absolute moments coincide bitwise
    with the central ones.
    """

    mean: float
    central: np.ndarray
    absolute: np.ndarray
    k0: int

    def central_moment(self, k: int) -> float:
        if k > 2 * self.k0:
            raise OrderExceededError(
                f"moment order {k} exceeds stored 2*k0 = {2 * self.k0}")
        return float(self.central[k])

    def absolute_moment(self, k: int) -> float:
        if k > 2 * self.k0:
            raise OrderExceededError(
                f"moment order {k} exceeds stored 2*k0 = {2 * self.k0}")
        return float(self.absolute[k])


def extract_moments(q: Density, k0: int = 4) -> MomentVector:
    """Cut the mean and all central moments up to order 2 k0 from a
    probability density.

    Warns (does not fail) when the top-order integrand is still above
    ``TAIL_WARN_LEVEL`` at a boundary node.
    """
    if k0 < 1:
        raise OrderExceededError("k0 must be >= 1")
    if abs(q.mass - 1.0) > MASS_TOL:
        raise NotNormalizedError(f"expected unit mass, got {q.mass!r}")
    grid = q.grid
    x = grid.nodes
    mean = grid.trapz(x * q.values)
    u = x - mean
    top = 2 * k0
    central = np.empty(top + 1)
    absolute = np.empty(top + 1)
    central[0] = 1.0
    central[1] = 0.0
    absolute[0] = 1.0
    au = np.abs(u)
    absolute[1] = grid.trapz(au * q.values)
    # Build powers from u^2 so even absolute moments are bitwise equal
    # to the central ones.
    power = u * u
    for j in range(1, k0 + 1):
        central[2 * j] = grid.trapz(power * q.values)
        absolute[2 * j] = central[2 * j]
        if 2 * j + 1 <= top:
            central[2 * j + 1] = grid.trapz(power * u * q.values)
            absolute[2 * j + 1] = grid.trapz(power * au * q.values)
        power = power * (u * u)

    edge = max(abs(u[0]) ** top * q.values[0],
               abs(u[-1]) ** top * q.values[-1])
    if edge > TAIL_WARN_LEVEL:
        warnings.warn(
            f"order-{top} moment integrand is {edge:.2e} at the grid "
            "boundary; widen the trait window", TailTruncationWarning,
            stacklevel=2)
    central.setflags(write=False)
    absolute.setflags(write=False)
    return MomentVector(mean=float(mean), central=central,
                        absolute=absolute, k0=k0)


def double_factorial_odd(l: int) -> int:
    """(2l - 1)!! with the empty product equal to 1."""
    return math.prod(range(1, 2 * l, 2))


def kernel_even_moment(l: int, epsilon: float) -> float:
    """2l-th moment of the segregational kernel: (2l-1)!!/2^l eps^(2l)."""
    if l < 0:
        raise OrderExceededError("moment order must be >= 0")
    return double_factorial_odd(l) / 2.0**l * float(epsilon) ** (2 * l)


@dataclass(frozen=True)
class KernelMoments:
    """Even kernel moments sigma_l eps^(2l) for l = 0..k_max."""

    epsilon: float
    values: np.ndarray

    @property
    def k_max(self) -> int:
        return len(self.values) - 1


def make_kernel_moments(epsilon: float, k_max: int) -> KernelMoments:
    vals = np.array([kernel_even_moment(l, epsilon)
                     for l in range(k_max + 1)])
    vals.setflags(write=False)
    return KernelMoments(epsilon=float(epsilon), values=vals)


def predict_T_moment(mv: MomentVector, k: int, km: KernelMoments) -> float:
    """Central moment of order 2k of the offspring density, from the
    parent's central moments alone.

    Conditioning on the midparent and expanding the binomials gives

        (2/4^k) Mc[2k]
        + sum_{l<k} sigma_{k-l} eps^{2(k-l)} / 4^l C(2k,2l)
              sum_{j<=2l} C(2l,j) Mc[2l-j] Mc[j]
        + 4^{-k} sum_{2<=j<=2k-2} C(2k,j) Mc[2k-j] Mc[j].

    For k = 1 this collapses to eps^2/2 + Mc[2]/2.
    """
    if k < 1:
        raise OrderExceededError("k must be >= 1")
    if 2 * k > 2 * mv.k0:
        raise OrderExceededError(
            f"need central moments up to {2 * k}, stored {2 * mv.k0}")
    if k > km.k_max:
        raise OrderExceededError(
            f"need kernel moments up to order {k}, stored {km.k_max}")
    mc = mv.central
    total = 2.0 / 4.0**k * mc[2 * k]
    for l in range(k):
        pair = sum(math.comb(2 * l, j) * mc[2 * l - j] * mc[j]
                   for j in range(2 * l + 1))
        total += (km.values[k - l] / 4.0**l * math.comb(2 * k, 2 * l)
                  * pair)
    tail = sum(math.comb(2 * k, j) * mc[2 * k - j] * mc[j]
               for j in range(2, 2 * k - 1))
    total += tail / 4.0**k
    return float(total)


def taylor_remainder(m: MortalitySpec, center: float, x,
                     tol: float = 1e-5) -> np.ndarray:
    """Second-order Taylor remainder kernel of m around ``center``:

        (m(x) - m(center) - (x - center) m'(center)) / (x - center)^2,

    continued by m''(center)/2 where |x - center| <= tol (the direct
    quotient loses all precision there to cancellation).
    """
    x = np.asarray(x, dtype=float)
    d = x - center
    m_c = float(eval_m(m, np.array([center]))[0])
    mp_c = float(eval_m_prime(m, np.array([center]))[0])
    mpp_c = float(eval_m_second(m, np.array([center]))[0])
    safe = np.abs(d) > tol
    denom = np.where(safe, d * d, 1.0)
    quotient = (eval_m(m, x) - m_c - d * mp_c) / denom
    return np.where(safe, quotient, 0.5 * mpp_c)


@dataclass(frozen=True)
class SelectionAverage:
    """Mean mortality under q, computed two ways that must agree."""

    value: float
    via_remainder: float


def selection_average(q: Density, m: MortalitySpec,
                      rel_tol: float = 1e-9) -> SelectionAverage:
    """integral m q, with the exact second-order decomposition

        m(M1) + integral (x - M1)^2 r^m[M1](x) q(x) dx

    as a consistency cross-check (mismatch beyond ``rel_tol`` relative
    raises: it would mean the quadratures disagree on an identity).
    """
    grid = q.grid
    if abs(q.mass - 1.0) > MASS_TOL:
        raise NotNormalizedError(f"expected unit mass, got {q.mass!r}")
    x = grid.nodes
    m_vals = eval_m(m, x)
    value = grid.trapz(m_vals * q.values)
    mean = grid.trapz(x * q.values)
    u = x - mean
    rem = taylor_remainder(m, mean, x, tol=grid.spacing * 1e-3)
    via = float(eval_m(m, np.array([mean]))[0]
                + grid.trapz(u * u * rem * q.values))
    tol = rel_tol * max(1.0, abs(value))
    if abs(value - via) > tol:
        raise DecompositionMismatchError(
            f"selection average {value!r} vs decomposition {via!r}")
    return SelectionAverage(value=float(value), via_remainder=via)


# ---------------------------------------------------------------------
# Exact selection fluxes for the moment ODEs
# ---------------------------------------------------------------------

def _sigma_rule():
    nodes, weights = np.polynomial.legendre.leggauss(GAUSS_LEGENDRE_NODES)
    # Map from [-1, 1] to [0, 1].
    return 0.5 * (nodes + 1.0), 0.5 * weights


_SIGMA_NODES, _SIGMA_WEIGHTS = _sigma_rule()


def selection_fluxes(q: Density, m: MortalitySpec,
                     mv: Optional[MomentVector] = None
                     ) -> tuple[float, float]:
    """Exact forcing terms (F1, F2) of the mean and variance ODEs.

    Both are Taylor-remainder integrals of m around the mean, evaluated
    with a Gauss-Legendre rule in the expansion variable tensored with
    the grid quadrature:

        F1 = int q(x) int_0^1 (1-s)[m''(M1+su) s u^3
                                    + 2(m'(M1+su) - m'(M1)) u^2] ds dx
        F2 = -(m'(M1) Mc3
               + int q(x) (u^4 - u^2 Mc2) int_0^1 (1-s) m''(M1+su) ds dx)

    For m = s x^2 these reduce to F1 = s Mc3 and
    F2 = -s (Mc4 + 2 M1 Mc3 - Mc2^2).
    """
    if mv is None:
        mv = extract_moments(q, k0=2)
    grid = q.grid
    u = grid.nodes - mv.mean
    s = _SIGMA_NODES[:, None]
    w = (_SIGMA_WEIGHTS * (1.0 - _SIGMA_NODES))[:, None]
    arg = mv.mean + s * u[None, :]
    mpp = eval_m_second(m, arg)
    mp = eval_m_prime(m, arg)
    mp_c = float(eval_m_prime(m, np.array([mv.mean]))[0])
    inner1 = np.sum(w * (mpp * s * u**3 + 2.0 * (mp - mp_c) * u**2),
                    axis=0)
    f1 = grid.trapz(q.values * inner1)
    inner2 = np.sum(w * mpp, axis=0)
    mc2 = mv.central_moment(2)
    mc3 = mv.central_moment(3)
    f2 = -(mp_c * mc3
           + grid.trapz(q.values * inner2 * (u**4 - u**2 * mc2)))
    return float(f1), float(f2)


def selection_flux_bounds(mv: MomentVector,
                          m: MortalitySpec) -> tuple[float, float]:
    """Structural bounds on |F1| and |F2| with unit prefactor.

    The suite divides measured fluxes by these to report the fitted
    constants; the bounds themselves carry C = 1.
    """
    am = m.growth_bound
    p = m.growth_exponent
    a1 = abs(mv.mean)
    g1 = am * ((1.0 + a1**p) * mv.absolute_moment(3)
               + mv.absolute_moment(3 + p))
    g2 = am * ((1.0 + a1**p) * (mv.central_moment(2) ** 2
                                + mv.central_moment(4))
               + (a1 + a1 ** (p + 1)) * mv.absolute_moment(3)
               + mv.absolute_moment(4 + p)
               + mv.central_moment(2) * mv.absolute_moment(2 + p))
    return float(g1), float(g2)


# ---------------------------------------------------------------------
# Residuals of the moment ODEs along simulated trajectories
# ---------------------------------------------------------------------

@dataclass(frozen=True)
class ResidualReport:
    """Residual time series of the mean/variance moment ODEs.

    ``tolerance`` combines a Richardson estimate of the finite-difference
    error with the first-order time-stepping error of the producing
    scheme; a healthy trajectory keeps |R1|, |R2| under it.
    """

    times: np.ndarray
    r1: np.ndarray
    r2: np.ndarray
    f1_exact: np.ndarray
    f1_bound: np.ndarray
    f2_exact: np.ndarray
    f2_bound: np.ndarray
    tolerance_r1: float
    tolerance_r2: float
    fitted_c1: float
    fitted_c2: float

    @property
    def max_abs_r1(self) -> float:
        return float(np.max(np.abs(self.r1)))

    @property
    def max_abs_r2(self) -> float:
        return float(np.max(np.abs(self.r2)))

    @property
    def within_tolerance(self) -> bool:
        return (self.max_abs_r1 <= self.tolerance_r1
                and self.max_abs_r2 <= self.tolerance_r2)

    def as_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t,R1,R2,F1_exact,F1_bound,F2_exact,F2_bound\n")
        for row in zip(self.times, self.r1, self.r2, self.f1_exact,
                       self.f1_bound, self.f2_exact, self.f2_bound):
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
        return buf.getvalue()

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write(self.as_csv())


def _uniform_dt(times: np.ndarray) -> float:
    if len(times) < 5:
        raise InsufficientSamplesError(
            f"need at least 5 samples, got {len(times)}")
    steps = np.diff(times)
    dt = steps[0]
    if dt <= 0.0 or np.any(np.abs(steps - dt) > 1e-9 * max(dt, 1e-30)):
        raise InsufficientSamplesError("samples must be uniform in time")
    return float(dt)


def _extract_series(densities: Sequence[Density], k0: int):
    """Extract moments of every snapshot, folding the per-snapshot tail
    warnings into a single summary (a trajectory that clips tails does so
    at every sample, and one report of the worst level is enough)."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", TailTruncationWarning)
        mvs = [extract_moments(q, k0=k0) for q in densities]
    tail = [w for w in caught if issubclass(w.category, TailTruncationWarning)]
    for w in caught:
        if not issubclass(w.category, TailTruncationWarning):
            warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
    if tail:
        warnings.warn(
            f"top moment integrand above {TAIL_WARN_LEVEL:g} at the grid "
            f"boundary in {len(tail)} of {len(densities)} snapshots "
            f"(last: {tail[-1].message})",
            TailTruncationWarning, stacklevel=3)
    return mvs


def _fd_error_estimate(series: np.ndarray, dt: float) -> float:
    """Richardson bound on the centered-difference error of d/dt series:
    compare strides dt and 2 dt; a second-order scheme makes the gap
    three times the fine-stride error."""
    d_fine = np.gradient(series, dt, edge_order=2)
    coarse = series[::2]
    d_coarse = np.gradient(coarse, 2.0 * dt, edge_order=2)
    gap = np.abs(d_fine[::2] - d_coarse)
    return float(gap.max() / 3.0)


def _residual_tolerance(scale: float, fd_err: float, eps_power: float,
                        dt_scheme: Optional[float],
                        time_scale: float) -> float:
    tol = 2.0 * eps_power * fd_err + 1e-10 * max(scale, 1.0)
    if dt_scheme is not None and time_scale > 0.0:
        tol += 2.0 * (dt_scheme / time_scale) * scale
    return tol


def moment_ode_residuals(times: Sequence[float],
                         densities: Sequence[Density],
                         m: MortalitySpec, r: float, epsilon: float,
                         dt_scheme: Optional[float] = None,
                         k0: int = 4) -> ResidualReport:
    """Residuals of the renormalized sexual moment ODEs

        R1 = eps^2 dM1/dt + m'(M1) Mc2 + F1
        R2 = eps^2 dMc2/dt + (r/2) Mc2 - r eps^2 / 2 - F2

    along uniformly sampled densities (at least 5).  Derivatives use
    centered differences, one-sided at the ends.
    """
    times = np.asarray(times, dtype=float)
    dt = _uniform_dt(times)
    eps2 = float(epsilon) ** 2
    n = len(times)
    if len(densities) != n:
        raise InsufficientSamplesError("times and densities disagree")
    mvs = _extract_series(densities, k0)
    m1 = np.array([v.mean for v in mvs])
    mc2 = np.array([v.central_moment(2) for v in mvs])
    fluxes = [selection_fluxes(q, m, mv) for q, mv in zip(densities, mvs)]
    f1 = np.array([f[0] for f in fluxes])
    f2 = np.array([f[1] for f in fluxes])
    bounds = [selection_flux_bounds(mv, m) for mv in mvs]
    g1 = np.array([b[0] for b in bounds])
    g2 = np.array([b[1] for b in bounds])
    dm1 = np.gradient(m1, dt, edge_order=2)
    dmc2 = np.gradient(mc2, dt, edge_order=2)
    mp_at_mean = np.array([float(eval_m_prime(m, np.array([v.mean]))[0])
                           for v in mvs])
    r1 = eps2 * dm1 + mp_at_mean * mc2 + f1
    r2 = eps2 * dmc2 + 0.5 * r * mc2 - 0.5 * r * eps2 - f2
    scale1 = float(np.max(np.abs(eps2 * dm1) + np.abs(mp_at_mean * mc2)
                          + np.abs(f1)))
    scale2 = float(np.max(np.abs(eps2 * dmc2) + 0.5 * r * np.abs(mc2)
                          + 0.5 * r * eps2 + np.abs(f2)))
    time_scale = eps2 / r
    tol1 = _residual_tolerance(scale1, _fd_error_estimate(m1, dt), eps2,
                               dt_scheme, time_scale)
    tol2 = _residual_tolerance(scale2, _fd_error_estimate(mc2, dt), eps2,
                               dt_scheme, time_scale)
    return ResidualReport(
        times=times, r1=r1, r2=r2, f1_exact=f1, f1_bound=g1,
        f2_exact=f2, f2_bound=g2, tolerance_r1=tol1, tolerance_r2=tol2,
        fitted_c1=_fitted_constant(f1, g1),
        fitted_c2=_fitted_constant(f2, g2))


def asexual_moment_residuals(times: Sequence[float],
                             densities: Sequence[Density],
                             m: MortalitySpec, mutation_rate: float,
                             mutation_variance: float, epsilon: float,
                             dt_scheme: Optional[float] = None,
                             k0: int = 4) -> ResidualReport:
    """Residuals of the asexual (mutation-selection) moment ODEs

        R1 = eps dM1/dt + m'(M1) Mc2 + F1
        R2 = eps dMc2/dt - p eps^2 sigma_G^2 + G2

    with G2 = int m u^2 q - (int m q) Mc2 the exact selection term of the
    variance equation (for m = s x^2 it is s (Mc4 + 2 M1 Mc3 - Mc2^2)).
    ``mutation_variance`` is the base kernel variance sigma_G^2.
    """
    times = np.asarray(times, dtype=float)
    dt = _uniform_dt(times)
    eps = float(epsilon)
    if len(densities) != len(times):
        raise InsufficientSamplesError("times and densities disagree")
    mvs = _extract_series(densities, k0)
    m1 = np.array([v.mean for v in mvs])
    mc2 = np.array([v.central_moment(2) for v in mvs])
    f1 = np.array([selection_fluxes(q, m, mv)[0]
                   for q, mv in zip(densities, mvs)])
    g2sel = []
    for q, mv in zip(densities, mvs):
        u = q.grid.nodes - mv.mean
        m_vals = eval_m(m, q.grid.nodes)
        im = q.grid.trapz(m_vals * q.values)
        g2sel.append(q.grid.trapz(m_vals * u * u * q.values)
                     - im * mv.central_moment(2))
    g2sel = np.array(g2sel)
    bounds = [selection_flux_bounds(mv, m) for mv in mvs]
    b1 = np.array([b[0] for b in bounds])
    b2 = np.array([b[1] for b in bounds])
    dm1 = np.gradient(m1, dt, edge_order=2)
    dmc2 = np.gradient(mc2, dt, edge_order=2)
    mp_at_mean = np.array([float(eval_m_prime(m, np.array([v.mean]))[0])
                           for v in mvs])
    source = mutation_rate * eps**2 * mutation_variance
    r1 = eps * dm1 + mp_at_mean * mc2 + f1
    r2 = eps * dmc2 - source + g2sel
    scale1 = float(np.max(np.abs(eps * dm1) + np.abs(mp_at_mean * mc2)
                          + np.abs(f1)))
    scale2 = float(np.max(np.abs(eps * dmc2) + source + np.abs(g2sel)))
    time_scale = eps
    tol1 = _residual_tolerance(scale1, _fd_error_estimate(m1, dt), eps,
                               dt_scheme, time_scale)
    tol2 = _residual_tolerance(scale2, _fd_error_estimate(mc2, dt), eps,
                               dt_scheme, time_scale)
    return ResidualReport(
        times=times, r1=r1, r2=r2, f1_exact=f1, f1_bound=b1,
        f2_exact=-g2sel, f2_bound=b2, tolerance_r1=tol1,
        tolerance_r2=tol2, fitted_c1=_fitted_constant(f1, b1),
        fitted_c2=_fitted_constant(g2sel, b2))


def _fitted_constant(flux: np.ndarray, bound: np.ndarray) -> float:
    mask = bound > 0.0
    if not mask.any():
        return 0.0
    return float(np.max(np.abs(flux[mask]) / bound[mask]))
