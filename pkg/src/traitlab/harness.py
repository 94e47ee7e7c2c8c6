"""Epsilon sweeps, log-log rate fits, and the validation suite.

Every quantitative statement behind this package has the shape
"error(eps) <= K eps^alpha for eps small enough" with K never explicit.
What can be measured is the exponent: run the same physical setup over
a decreasing ladder of eps, fit a line through (log eps, log error),
and gate on its slope.  ``run_sweep`` builds the error ladder,
``fit_rate`` the line, and ``run_validation_suite`` bundles the
self-contained correctness checks (operator algebra, conservation,
contraction, moment residuals) into one machine-readable report.
"""
from __future__ import annotations

import dataclasses
import io
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .dynamics import RunConfig, Trajectory, simulate
from .errors import (ConfigError, InsufficientSamplesError,
                     NonpositiveValuesError, TraitLabError,
                     UnderResolvedError)
from .grid import Density, TraitGrid, make_grid, normalize
from .limits import gaussian_density, gaussian_profile, rho_limit
from .moments import (asexual_moment_residuals, extract_moments,
                      kernel_even_moment, make_kernel_moments,
                      moment_ode_residuals, predict_T_moment)
from .mortality import quadratic
from .operators import (apply_T_fast, apply_T_reference,
                        make_segregation_kernel)
from .transport import contraction_check

DEFAULT_EPSILONS = (0.4, 0.28, 0.2, 0.14, 0.1, 0.07, 0.05)
DEFAULT_BETA = 1.5

# Burn-in before steady-regime variance errors are measured, in units of
# the variance relaxation time eps^2 / r.
DEFAULT_T_STAR_FACTOR = 10.0

# Minimum eps in grid spacings; below this the initial Gaussian profile
# (std = sqrt(v0) eps) cannot be resolved.
MIN_EPS_IN_STEPS = 4.0

SWEEP_FIELDS = ("sup_w1", "sup_mean_err", "sup_var_err",
                "sup_high_moment_ratio", "rho_err")

SWEEP_CSV_HEADER = ("epsilon,sup_W1,sup_mean_err,sup_var_err,"
                    "sup_high_moment_ratio,rho_err")

FIT_WINDOWS = (("all", 0), ("drop2", 2))


class SweepPointFailure(UserWarning):
    """One epsilon of a sweep failed; the remaining points completed."""


@dataclass(frozen=True)
class SweepRecord:
    """Sup-in-time errors of one run against its limit objects."""

    epsilon: float
    sup_w1: float
    sup_mean_err: float
    sup_var_err: float
    sup_high_moment_ratio: float
    rho_err: float
    runtime_seconds: float


@dataclass(frozen=True)
class RateFit:
    """Least-squares line through (log eps, log value)."""

    slope: float
    intercept: float
    r_squared: float
    n_points: int


def _record_from_trajectory(tr: Trajectory, beta: float,
                            t_star_factor: float) -> SweepRecord:
    cfg = tr.config
    eps = cfg.epsilon
    t_star = t_star_factor * eps**2 / cfg.r
    late = tr.times >= t_star
    rho_late = tr.times >= eps**beta
    target = rho_limit(cfg.mortality, tr.mean_path_limit, cfg.r, cfg.kappa)
    record = SweepRecord(
        epsilon=eps,
        sup_w1=float(np.max(tr.w1_to_ansatz)),
        sup_mean_err=float(np.max(np.abs(tr.m1 - tr.mean_path_eps.values))),
        sup_var_err=float(np.max(np.abs(tr.m2c[late] - eps**2))),
        sup_high_moment_ratio=float(np.max(tr.m2k0c) / eps ** (2 * cfg.k0)),
        rho_err=float(np.max(np.abs(tr.rho[rho_late]
                                    - target.values[rho_late]))),
        runtime_seconds=tr.runtime_seconds,
    )
    fields = [getattr(record, name) for name in SWEEP_FIELDS]
    if not all(math.isfinite(v) and v >= 0.0 for v in fields):
        raise TraitLabError(f"non-finite sweep record at eps={eps}: {record}")
    return record


def run_sweep(base: RunConfig,
              epsilons: Sequence[float] = DEFAULT_EPSILONS,
              beta: float = DEFAULT_BETA,
              t_star_factor: float = DEFAULT_T_STAR_FACTOR,
              threads: Optional[int] = None) -> List[SweepRecord]:
    """Run one simulation per epsilon and collect sup-in-time errors.

    The physical setup (mortality, rates, initial mean) is shared; the
    initial variance v0 * eps^2 scales with each eps, which is exactly
    the well-prepared regime the error estimates assume.  Runs execute
    concurrently (``threads``, default one worker per epsilon capped at
    the CPU count); records come back ordered as given.  A failure at
    one epsilon is reported as a ``SweepPointFailure`` warning and its
    record dropped, without aborting the others.
    """
    eps_list = [float(e) for e in epsilons]
    if len(eps_list) < 3:
        raise InsufficientSamplesError(
            f"a sweep needs at least 3 epsilon values, got {len(eps_list)}")
    if any(a <= b for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigError("epsilon values must be sorted in decreasing order")
    if not 1.0 < beta < 2.0:
        raise ConfigError(f"beta must lie in (1, 2), got {beta}")
    if base.mortality.kind == "tabulated":
        raise ConfigError(
            "tabulated mortality profiles use spline derivatives and are "
            "not accurate enough for rate measurement; fit a closed form")
    grid = base.make_grid()
    for e in eps_list:
        if e < MIN_EPS_IN_STEPS * grid.spacing:
            raise UnderResolvedError(
                f"epsilon {e:.4g} is below {MIN_EPS_IN_STEPS:g} grid "
                f"spacings; the initial gaussian profile cannot be resolved")
    slowest = max(t_star_factor * eps_list[0]**2 / base.r,
                  eps_list[0]**beta)
    if base.t_end <= slowest:
        raise ConfigError(
            f"t_end={base.t_end} leaves no samples after the burn-in "
            f"window {slowest:.4g} of the largest epsilon")

    configs = [dataclasses.replace(base, epsilon=e) for e in eps_list]

    def one(cfg: RunConfig) -> SweepRecord:
        return _record_from_trajectory(simulate(cfg), beta, t_star_factor)

    results: List[Optional[SweepRecord]] = [None] * len(configs)
    failures: List[Tuple[float, BaseException]] = []
    if threads is None:
        threads = min(len(configs), os.cpu_count() or 1)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(one, cfg) for cfg in configs]
            for i, fut in enumerate(futures):
                try:
                    results[i] = fut.result()
                except Exception as exc:
                    failures.append((eps_list[i], exc))
    else:
        for i, cfg in enumerate(configs):
            try:
                results[i] = one(cfg)
            except Exception as exc:
                failures.append((eps_list[i], exc))
    for eps, exc in failures:
        warnings.warn(f"sweep point eps={eps:.4g} failed: {exc!r}",
                      SweepPointFailure, stacklevel=2)
    return [rec for rec in results if rec is not None]


def fit_rate(records: Sequence[SweepRecord], field: str) -> RateFit:
    """Fit log(field) = slope * log(eps) + intercept by least squares."""
    name = field.lower()
    if name not in SWEEP_FIELDS:
        raise ConfigError(
            f"unknown sweep field {field!r}; expected one of {SWEEP_FIELDS}")
    if len(records) < 3:
        raise InsufficientSamplesError(
            f"a rate fit needs at least 3 records, got {len(records)}")
    eps = np.array([rec.epsilon for rec in records], dtype=float)
    values = np.array([getattr(rec, name) for rec in records], dtype=float)
    if np.any(values <= 0.0):
        raise NonpositiveValuesError(
            f"field {field!r} has nonpositive entries; cannot take logs")
    lx = np.log(eps)
    ly = np.log(values)
    slope, intercept = np.polyfit(lx, ly, 1)
    residual = ly - (slope * lx + intercept)
    ss_res = float(residual @ residual)
    centered = ly - ly.mean()
    ss_tot = float(centered @ centered)
    if ss_tot == 0.0:
        r_squared = 1.0 if ss_res == 0.0 else 0.0
    else:
        r_squared = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return RateFit(slope=float(slope), intercept=float(intercept),
                   r_squared=r_squared, n_points=len(records))


def sweep_csv(records: Sequence[SweepRecord]) -> str:
    """Records as CSV.  Wall-clock time is deliberately not a column:
    the same sweep must serialize to the same bytes."""
    buf = io.StringIO()
    buf.write(SWEEP_CSV_HEADER + "\n")
    for rec in records:
        row = [rec.epsilon] + [getattr(rec, name) for name in SWEEP_FIELDS]
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()


def fit_table(records: Sequence[SweepRecord]) -> List[Tuple[str, str, RateFit]]:
    """Rate fits for every error field, on the full ladder and with the
    two largest eps dropped (the asymptotics only promise 'eps small')."""
    rows = []
    for field in SWEEP_FIELDS:
        for window, drop in FIT_WINDOWS:
            subset = records[drop:]
            if len(subset) >= 3:
                rows.append((field, window, fit_rate(subset, field)))
    return rows


def fits_csv(records: Sequence[SweepRecord]) -> str:
    buf = io.StringIO()
    buf.write("field,window,slope,intercept,r_squared,n_points\n")
    for field, window, fit in fit_table(records):
        buf.write(f"{field},{window},{fit.slope!r},{fit.intercept!r},"
                  f"{fit.r_squared!r},{fit.n_points}\n")
    return buf.getvalue()


def write_text(path, text: str) -> None:
    with open(path, "w") as fh:
        fh.write(text)


def random_mixture(grid: TraitGrid, rng: np.random.Generator,
                   n_bumps: Tuple[int, int] = (2, 4),
                   center_span: float = 2.0,
                   width_range: Tuple[float, float] = (0.15, 0.4),
                   mean: Optional[float] = None) -> Density:
    """Random normalized Gaussian mixture, the stock test density.

    With ``mean`` given, bump centers are shifted so the analytic
    mixture mean hits it exactly; contraction tests need pairs whose
    means agree, since translation costs survive the midparent map.
    """
    count = int(rng.integers(n_bumps[0], n_bumps[1] + 1))
    centers = rng.uniform(-center_span, center_span, count)
    widths = rng.uniform(width_range[0], width_range[1], count)
    weights = rng.uniform(0.2, 1.0, count)
    weights = weights / weights.sum()
    if mean is not None:
        centers = centers + (mean - float(weights @ centers))
    values = np.zeros(grid.n_points)
    for c, w, a in zip(centers, widths, weights):
        values = values + a * gaussian_density(c, w, grid).values
    return normalize(Density(grid, values))


@dataclass(frozen=True)
class SuiteCheck:
    name: str
    passed: bool
    value: float
    threshold: float


@dataclass(frozen=True)
class SuiteReport:
    checks: Tuple[SuiteCheck, ...]

    @property
    def all_pass(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> SuiteCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def as_csv(self) -> str:
        buf = io.StringIO()
        buf.write("check_name,pass,value,threshold\n")
        for c in self.checks:
            flag = "true" if c.passed else "false"
            buf.write(f"{c.name},{flag},{c.value!r},{c.threshold!r}\n")
        return buf.getvalue()

    def write_csv(self, path) -> None:
        write_text(path, self.as_csv())


SUITE_DEFAULTS: Dict[str, float] = {
    "epsilon": 0.2,
    "x_min": -6.0,
    "x_max": 6.0,
    "n_points": 1024,
    "r": 2.0,
    "kappa": 1.0,
    "s": 1.0,
    "window": 0.7,
    "x0": 0.3,
    "t_end": 0.3,
    "seed": 20408,
    "n_densities": 8,
    "n_pairs": 25,
    # Self-test knob: scales the variance of the kernel fed to the
    # kernel-moment check (and nothing else), to prove the suite can
    # actually fail.
    "fault_kernel_variance": 1.0,
}


def _check(name: str, value: float, threshold: float,
           larger_is_fine: bool = False) -> SuiteCheck:
    value = float(value)
    passed = value >= threshold if larger_is_fine else value <= threshold
    return SuiteCheck(name=name, passed=bool(passed), value=value,
                      threshold=float(threshold))


def run_validation_suite(overrides: Optional[Dict] = None) -> SuiteReport:
    """Run the named correctness checks and report pass/fail per check.

    ``overrides`` updates ``SUITE_DEFAULTS``; unknown keys are hard
    errors.  Checks never raise on failure, they report it.
    """
    params = dict(SUITE_DEFAULTS)
    if overrides:
        unknown = sorted(set(overrides) - set(params))
        if unknown:
            raise ConfigError(f"unknown suite overrides: {unknown}")
        params.update(overrides)

    eps = float(params["epsilon"])
    grid = make_grid(params["x_min"], params["x_max"], int(params["n_points"]))
    mortality = quadratic(params["s"], window=params["window"])
    kernel = make_segregation_kernel(eps, grid)
    rng = np.random.default_rng(int(params["seed"]))
    checks: List[SuiteCheck] = []

    # Fixed point: the gaussian ansatz is invariant under the offspring
    # operator.
    ansatz = gaussian_profile(params["x0"], eps, grid)
    image = apply_T_fast(ansatz, kernel)
    err = np.max(np.abs(image.values - ansatz.values))
    checks.append(_check("operator_fixed_point",
                         err / np.max(ansatz.values), 1e-6))

    # The O(N log N) rearrangement against the O(N^3) definition.
    small_grid = make_grid(-3.0, 3.0, 128)
    small_kernel = make_segregation_kernel(0.3, small_grid)
    worst = 0.0
    for _ in range(int(params["n_densities"])):
        q = random_mixture(small_grid, rng, center_span=1.2,
                           width_range=(0.2, 0.45))
        fast = apply_T_fast(q, small_kernel)
        ref = apply_T_reference(q, small_kernel)
        worst = max(worst, float(np.max(np.abs(fast.values - ref.values))))
    checks.append(_check("reference_fast_equivalence", worst, 1e-10))

    # Even moments of the sampled kernel against (2l-1)!!/2^l eps^2l.
    fault = float(params["fault_kernel_variance"])
    probe = kernel if fault == 1.0 else make_segregation_kernel(
        eps * math.sqrt(fault), grid)
    offsets = (np.arange(len(probe.values)) - probe.half_width
               ) * probe.sample_spacing
    worst = 0.0
    for l in range(7):
        exact = kernel_even_moment(l, eps)
        quad = float(np.trapezoid(offsets ** (2 * l) * probe.values,
                                  dx=probe.sample_spacing))
        worst = max(worst, abs(quad - exact) / exact)
    checks.append(_check("kernel_moments", worst, 1e-9))

    # Binomial-sum moment transport against quadrature after the fast
    # operator (the image keeps the input mean, so both center there).
    km = make_kernel_moments(eps, 4)
    worst = 0.0
    for _ in range(int(params["n_densities"])):
        q = random_mixture(grid, rng)
        mv = extract_moments(q, k0=4)
        image = apply_T_fast(q, kernel)
        u = grid.nodes - mv.mean
        for k in range(1, 5):
            predicted = predict_T_moment(mv, k, km)
            actual = grid.trapz(u ** (2 * k) * image.values)
            worst = max(worst, abs(actual - predicted) / abs(predicted))
    checks.append(_check("moment_prediction", worst, 1e-6))

    base = dict(mortality=mortality, r=params["r"], kappa=params["kappa"],
                epsilon=eps, x_min=params["x_min"], x_max=params["x_max"],
                n_points=int(params["n_points"]), x0=params["x0"],
                t_end=params["t_end"])

    renorm = simulate(RunConfig(model="sexual_renormalized", **base))
    checks.append(_check("mass_conservation", renorm.max_mass_drift, 1e-8))

    full = simulate(RunConfig(model="sexual_full", **base))
    checks.append(_check("positivity", float(np.min(full.min_value)), 0.0,
                         larger_is_fine=True))
    flags = np.stack([full.floor_ok, full.ceiling_ok, full.l1_ok,
                      full.weighted_growth_ok])
    checks.append(_check("appendix_bounds", float(flags.all(axis=0).mean()),
                         1.0, larger_is_fine=True))

    worst = -math.inf
    for _ in range(int(params["n_pairs"])):
        a = random_mixture(grid, rng, mean=0.0)
        b = random_mixture(grid, rng, mean=0.0)
        res = contraction_check(a, b, kernel)
        worst = max(worst, res.lhs - res.rhs)
    checks.append(_check("tanaka_contraction", worst, 1e-6))

    rep = moment_ode_residuals(renorm.snapshot_times, renorm.snapshots,
                               mortality, params["r"], eps,
                               dt_scheme=renorm.dt)
    ratio = max(rep.max_abs_r1 / rep.tolerance_r1,
                rep.max_abs_r2 / rep.tolerance_r2)
    checks.append(_check("moment_ode_residuals", ratio, 1.0))

    asex = simulate(RunConfig(model="asexual_full", mutation_rate=1.0,
                              mutation_std=1.0,
                              **{**base, "epsilon": 0.1}))
    rep = asexual_moment_residuals(asex.snapshot_times, asex.snapshots,
                                   mortality, 1.0, 1.0, 0.1,
                                   dt_scheme=asex.dt)
    ratio = max(rep.max_abs_r1 / rep.tolerance_r1,
                rep.max_abs_r2 / rep.tolerance_r2)
    checks.append(_check("asexual_residuals", ratio, 5.0))

    return SuiteReport(checks=tuple(checks))


@dataclass(frozen=True)
class ContrastSettings:
    """Setup of the sexual/asexual variance comparison.

    Two selection strengths share one physical stage; the asexual runs
    get a long horizon because their variance relaxes on the slow eps/s
    clock, the sexual ones a short horizon because theirs locks on the
    fast eps^2 clock.
    """

    s_values: Tuple[float, float] = (1.0, 4.0)
    epsilon: float = 0.04
    x_min: float = -4.0
    x_max: float = 4.0
    n_points: int = 1024
    window: float = 0.5
    x0: float = 0.3
    r: float = 2.0
    kappa: float = 1.0
    mutation_rate: float = 1.0
    mutation_std: float = 1.0
    t_end_asexual: float = 2.0
    t_end_sexual: float = 0.2
    # Matched-time comparison starts here, past the asexual transient.
    compare_from: float = 0.5
    min_separation: float = 0.10
    locking_band: float = 0.02
    residual_factor: float = 5.0


@dataclass(frozen=True)
class ContrastReport:
    """Paired variance trajectories plus the pass/fail summary."""

    settings: ContrastSettings
    times_asexual: np.ndarray
    asexual_m2c: Tuple[np.ndarray, np.ndarray]
    times_sexual: np.ndarray
    sexual_m2c: Tuple[np.ndarray, np.ndarray]
    min_rel_difference: float
    sexual_max_dev: Tuple[float, float]
    residual_ratios: Tuple[float, float, float, float]

    @property
    def separation_ok(self) -> bool:
        return self.min_rel_difference >= self.settings.min_separation

    @property
    def locking_ok(self) -> bool:
        return max(self.sexual_max_dev) <= self.settings.locking_band

    @property
    def residuals_ok(self) -> bool:
        return max(self.residual_ratios) <= self.settings.residual_factor

    @property
    def all_ok(self) -> bool:
        return self.separation_ok and self.locking_ok and self.residuals_ok

    def as_csv(self) -> str:
        buf = io.StringIO()
        buf.write("model,s,t,M2c\n")
        for s, series in zip(self.settings.s_values, self.asexual_m2c):
            for t, v in zip(self.times_asexual, series):
                buf.write(f"asexual,{s!r},{float(t)!r},{float(v)!r}\n")
        for s, series in zip(self.settings.s_values, self.sexual_m2c):
            for t, v in zip(self.times_sexual, series):
                buf.write(f"sexual,{s!r},{float(t)!r},{float(v)!r}\n")
        return buf.getvalue()

    def write_csv(self, path) -> None:
        write_text(path, self.as_csv())


def run_contrast(settings: ContrastSettings = ContrastSettings(),
                 t_star_factor: float = DEFAULT_T_STAR_FACTOR,
                 threads: Optional[int] = None) -> ContrastReport:
    """Run the paired sexual/asexual variance comparison.

    Reports the smallest relative gap between the two asexual variance
    trajectories over matched times past ``compare_from``, how far each
    sexual variance strays from eps^2 after burn-in, and the moment
    residual ratios of all four runs.
    """
    st = settings
    if st.compare_from >= st.t_end_asexual:
        raise ConfigError("compare_from must precede t_end_asexual")

    def config(s: float, model: str) -> RunConfig:
        t_end = st.t_end_asexual if model == "asexual_full" else st.t_end_sexual
        return RunConfig(
            mortality=quadratic(s, window=st.window), model=model,
            r=st.r, kappa=st.kappa, epsilon=st.epsilon,
            x_min=st.x_min, x_max=st.x_max, n_points=st.n_points,
            x0=st.x0, t_end=t_end, mutation_rate=st.mutation_rate,
            mutation_std=st.mutation_std)

    configs = [config(s, model) for model in ("asexual_full",
                                              "sexual_renormalized")
               for s in st.s_values]
    if threads is None:
        threads = min(len(configs), os.cpu_count() or 1)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            runs = list(pool.map(simulate, configs))
    else:
        runs = [simulate(cfg) for cfg in configs]
    asex_a, asex_b, sex_a, sex_b = runs

    mask = asex_a.times >= st.compare_from
    if not mask.any():
        raise ConfigError("no matched samples past compare_from")
    gap = np.abs(asex_a.m2c[mask] - asex_b.m2c[mask])
    rel = gap / np.maximum(asex_a.m2c[mask], asex_b.m2c[mask])

    t_star = t_star_factor * st.epsilon**2 / st.r
    devs = []
    for tr in (sex_a, sex_b):
        late = tr.times >= t_star
        devs.append(float(np.max(np.abs(tr.m2c[late] / st.epsilon**2 - 1.0))))

    ratios = []
    for tr in (asex_a, asex_b):
        rep = asexual_moment_residuals(
            tr.snapshot_times, tr.snapshots, tr.config.mortality,
            st.mutation_rate, st.mutation_std**2, st.epsilon,
            dt_scheme=tr.dt)
        ratios.append(max(rep.max_abs_r1 / rep.tolerance_r1,
                          rep.max_abs_r2 / rep.tolerance_r2))
    for tr in (sex_a, sex_b):
        rep = moment_ode_residuals(
            tr.snapshot_times, tr.snapshots, tr.config.mortality,
            st.r, st.epsilon, dt_scheme=tr.dt)
        ratios.append(max(rep.max_abs_r1 / rep.tolerance_r1,
                          rep.max_abs_r2 / rep.tolerance_r2))

    return ContrastReport(
        settings=st,
        times_asexual=asex_a.times,
        asexual_m2c=(asex_a.m2c, asex_b.m2c),
        times_sexual=sex_a.times,
        sexual_m2c=(sex_a.m2c, sex_b.m2c),
        min_rel_difference=float(rel.min()),
        sexual_max_dev=(devs[0], devs[1]),
        residual_ratios=tuple(ratios),
    )
