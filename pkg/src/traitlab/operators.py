"""Reproduction operators: midparent mixing and additive mutation.

The sexual operator maps a parent density to the offspring density: draw
two parents independently, average their traits, and add a Gaussian
segregational deviation of standard deviation epsilon/sqrt(2).  On a
probability density q,

    T[q](x) = integral Gamma_eps(x - (y + y') / 2) q(y) q(y') dy dy'.

``apply_T_reference`` evaluates the double quadrature literally (O(N^3),
small grids only).  ``apply_T_fast`` rearranges the same sum: collecting
terms by i + j turns it into a self-convolution of the weighted samples
on the half-spacing midparent lattice, followed by one convolution with
the sampled kernel, and downsampling at even lattice nodes.  Both paths
therefore agree to roundoff, not just to quadrature accuracy.

The asexual operator is plain mutation: M[n] = G_eps * n - n.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import irfft, next_fast_len, rfft

from .errors import (GridMismatchError, GridTooLargeError,
                     NotNormalizedError, UnderResolvedError, ZeroMassError)
from .grid import Density, TraitGrid, clip_roundoff_negatives, normalize

# Mass tolerance under which an input counts as a probability density.
MASS_TOL = 1e-8

# Kernels are truncated where the Gaussian tail is ~1e-44: at 10 eps for
# the segregation kernel (14 standard deviations) and 14 sigma for the
# mutation kernel.
SEGREGATION_CUTOFF = 10.0
MUTATION_CUTOFF_SIGMAS = 14.0

# Narrowest representable kernel: standard deviation >= 2.8 grid steps
# keeps the sampled moments spectrally exact.
MIN_STD_IN_STEPS = 2.8

REFERENCE_MAX_POINTS = 256


def _mirrored_gaussian(half_count: int, step: float, std: float,
                       amplitude: float) -> np.ndarray:
    """Samples of amplitude * exp(-x^2 / (2 std^2)) at j*step, j=-M..M.

    Built from one half and mirrored so the array is bit-exactly
    symmetric; odd-moment cancellations then hold to machine precision.
    """
    offsets = np.arange(half_count + 1) * step
    half = amplitude * np.exp(-0.5 * (offsets / std) ** 2)
    return np.concatenate([half[:0:-1], half])


def _check_resolution(std: float, grid: TraitGrid, what: str):
    if std < MIN_STD_IN_STEPS * grid.spacing:
        raise UnderResolvedError(
            f"{what} standard deviation {std:.4g} under-resolved on grid "
            f"spacing {grid.spacing:.4g}")


@dataclass(frozen=True)
class SegregationKernel:
    """Segregational kernel bound to a grid, with its convolution plan.

    ``values`` samples Gamma_eps on the half-spacing lattice used by the
    midparent rearrangement; ``fft`` is its transform at the zero-padded
    length ``nfft``, precomputed once per (epsilon, grid).
    """

    epsilon: float
    grid: TraitGrid
    half_width: int
    values: np.ndarray = field(repr=False, compare=False)
    nfft: int
    fft: np.ndarray = field(repr=False, compare=False)

    @property
    def variance(self) -> float:
        """Analytic variance of the segregational deviation."""
        return 0.5 * self.epsilon**2

    @property
    def sup_value(self) -> float:
        """Peak kernel value, 1 / (eps sqrt(pi))."""
        return 1.0 / (self.epsilon * math.sqrt(math.pi))

    @property
    def sample_spacing(self) -> float:
        return 0.5 * self.grid.spacing


def make_segregation_kernel(epsilon: float, grid: TraitGrid) -> SegregationKernel:
    epsilon = float(epsilon)
    if epsilon <= 0.0:
        raise UnderResolvedError("epsilon must be positive")
    std = epsilon / math.sqrt(2.0)
    _check_resolution(std, grid, "segregation kernel")
    step = 0.5 * grid.spacing
    half_width = int(math.ceil(SEGREGATION_CUTOFF * epsilon / step))
    amplitude = 1.0 / (epsilon * math.sqrt(math.pi))
    values = _mirrored_gaussian(half_width, step, std, amplitude)
    n = grid.n_points
    nfft = next_fast_len(2 * n + 2 * half_width - 1)
    fft = rfft(values, nfft)
    fft.setflags(write=False)
    values.setflags(write=False)
    return SegregationKernel(epsilon=epsilon, grid=grid,
                             half_width=half_width, values=values,
                             nfft=nfft, fft=fft)


@dataclass(frozen=True)
class MutationKernel:
    """Sampled mutation kernel G_eps = N(0, (eps sigma)^2) on the grid."""

    epsilon: float
    base_std: float
    grid: TraitGrid
    half_width: int
    values: np.ndarray = field(repr=False, compare=False)
    nfft: int
    fft: np.ndarray = field(repr=False, compare=False)

    @property
    def variance(self) -> float:
        return (self.epsilon * self.base_std) ** 2

    @property
    def sample_spacing(self) -> float:
        return self.grid.spacing


def make_mutation_kernel(epsilon: float, grid: TraitGrid,
                         base_std: float = 1.0) -> MutationKernel:
    epsilon = float(epsilon)
    base_std = float(base_std)
    if epsilon <= 0.0 or base_std <= 0.0:
        raise UnderResolvedError("epsilon and base_std must be positive")
    std = epsilon * base_std
    _check_resolution(std, grid, "mutation kernel")
    step = grid.spacing
    half_width = int(math.ceil(MUTATION_CUTOFF_SIGMAS * std / step))
    amplitude = 1.0 / (std * math.sqrt(2.0 * math.pi))
    values = _mirrored_gaussian(half_width, step, std, amplitude)
    n = grid.n_points
    nfft = next_fast_len(n + 2 * half_width)
    fft = rfft(values, nfft)
    fft.setflags(write=False)
    values.setflags(write=False)
    return MutationKernel(epsilon=epsilon, base_std=base_std, grid=grid,
                          half_width=half_width, values=values,
                          nfft=nfft, fft=fft)


def _weighted_samples(d: Density) -> np.ndarray:
    """Density samples times trapezoid weights, so that plain sums of
    products reproduce the quadrature of the continuous integrals."""
    a = d.values * d.grid.spacing
    a[0] *= 0.5
    a[-1] *= 0.5
    return a


def _require_same_grid(kernel_grid: TraitGrid, d: Density):
    if kernel_grid != d.grid:
        raise GridMismatchError("kernel and density grids differ")


def _require_probability(q: Density):
    if abs(q.mass - 1.0) > MASS_TOL:
        raise NotNormalizedError(
            f"expected unit mass, got {q.mass!r}")


def apply_T_fast(q: Density, kernel: SegregationKernel) -> Density:
    """Offspring density of a probability density, via convolutions.

    The self-convolution of the weighted samples lives on the doubled-
    resolution midparent lattice; smoothing with the kernel sampled on
    that lattice and reading off even nodes reproduces the reference
    double sum term by term (sup difference is pure FFT roundoff).
    """
    _require_same_grid(kernel.grid, q)
    _require_probability(q)
    a = _weighted_samples(q)
    spectrum = rfft(a, kernel.nfft)
    np.multiply(spectrum, spectrum, out=spectrum)
    spectrum *= kernel.fft
    full = irfft(spectrum, kernel.nfft)
    start = kernel.half_width
    out = full[start:start + 2 * q.grid.n_points - 1:2]
    return Density(q.grid, clip_roundoff_negatives(out))


def apply_T_reference(q: Density, kernel: SegregationKernel,
                      chunk: int = 32) -> Density:
    """Direct nested trapezoid evaluation of the offspring integral.

    Kept deliberately naive as the oracle for ``apply_T_fast``; refuses
    grids beyond REFERENCE_MAX_POINTS nodes.
    """
    _require_same_grid(kernel.grid, q)
    _require_probability(q)
    n = q.grid.n_points
    if n > REFERENCE_MAX_POINTS:
        raise GridTooLargeError(
            f"reference path capped at {REFERENCE_MAX_POINTS} nodes, "
            f"got {n}")
    a = _weighted_samples(q)
    pair_weight = np.outer(a, a)
    x = q.grid.nodes
    midparent = 0.5 * (x[:, None] + x[None, :])
    inv_eps2 = 1.0 / kernel.epsilon**2
    amplitude = 1.0 / (kernel.epsilon * math.sqrt(math.pi))
    out = np.empty(n)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        diff = x[lo:hi, None, None] - midparent[None, :, :]
        gauss = np.exp(-(diff * diff) * inv_eps2)
        out[lo:hi] = np.einsum("kij,ij->k", gauss, pair_weight)
    out *= amplitude
    return Density(q.grid, clip_roundoff_negatives(out))


def apply_T_full(n: Density, kernel: SegregationKernel) -> Density:
    """One-homogeneous extension: T[n] = mass(n) * T[n / mass(n)]."""
    if n.mass <= 0.0:
        raise ZeroMassError("offspring operator needs positive mass")
    scaled = apply_T_fast(normalize(n), kernel)
    return Density(n.grid, n.mass * scaled.values)


def apply_mutation(n: Density, kernel: MutationKernel) -> np.ndarray:
    """Mutation increment G_eps * n - n (integrates to zero).

    The result is signed, so it comes back as a plain array rather than
    a Density.
    """
    _require_same_grid(kernel.grid, n)
    return mutation_convolution(n.values, kernel) - n.values


def mutation_convolution(values: np.ndarray,
                         kernel: MutationKernel) -> np.ndarray:
    """G_eps * values by zero-padded FFT convolution on the grid."""
    grid = kernel.grid
    a = values * grid.spacing
    a[0] = a[0] * 0.5
    a[-1] = a[-1] * 0.5
    full = irfft(rfft(a, kernel.nfft) * kernel.fft, kernel.nfft)
    start = kernel.half_width
    return full[start:start + grid.n_points].copy()
