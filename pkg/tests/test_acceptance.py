"""End-to-end acceptance checks, one test per shipped guarantee.

Each test prints as its own pass/fail line under ``pytest -v``.  The
heavy fixtures (the seven-epsilon sweep, the unit-time trajectories,
the default-size variance contrast) are module-scoped and shared; the
whole file runs in about a minute and a half.
"""
import math

import numpy as np
import pytest

from traitlab import (RunConfig, apply_T_fast, apply_T_reference,
                      contraction_check, extract_moments, gaussian_profile,
                      make_grid, make_kernel_moments, make_segregation_kernel,
                      predict_T_moment, quadratic, random_mixture,
                      run_contrast, run_sweep, simulate, tabulated)
from traitlab.cli import main
from traitlab.harness import DEFAULT_EPSILONS, fit_rate

pytestmark = pytest.mark.filterwarnings(
    "ignore::traitlab.TailTruncationWarning")

GRID = make_grid(-6.0, 6.0, 1024)
EPS = 0.2
KERNEL = make_segregation_kernel(EPS, GRID)


def zero_mortality():
    xs = np.linspace(-6.5, 6.5, 9)
    return tabulated(xs, np.zeros_like(xs))


@pytest.fixture(scope="module")
def sweep_records():
    base = RunConfig(mortality=quadratic(1.0), model="sexual_full",
                     r=2.0, kappa=1.0, x0=0.3, t_end=1.0, n_points=1024)
    records = run_sweep(base, DEFAULT_EPSILONS, beta=1.5,
                        t_star_factor=10.0)
    assert len(records) == len(DEFAULT_EPSILONS)
    return records


@pytest.fixture(scope="module")
def renorm_traj():
    return simulate(RunConfig(mortality=quadratic(1.0),
                              model="sexual_renormalized", epsilon=EPS,
                              t_end=1.0))


@pytest.fixture(scope="module")
def full_traj():
    return simulate(RunConfig(mortality=quadratic(1.0),
                              model="sexual_full", epsilon=EPS,
                              t_end=1.0))


@pytest.fixture(scope="module")
def contrast_report():
    return run_contrast()


def test_criterion_01_offspring_moment_prediction():
    rng = np.random.default_rng(101)
    km = make_kernel_moments(EPS, 4)
    for _ in range(50):
        q = random_mixture(GRID, rng)
        mv = extract_moments(q, k0=4)
        measured = extract_moments(apply_T_fast(q, KERNEL), k0=4)
        for k in (1, 2, 3, 4):
            predicted = predict_T_moment(mv, k, km)
            rel = abs(predicted - measured.central_moment(2 * k)) / abs(
                measured.central_moment(2 * k))
            assert rel <= 1e-6, f"order {2 * k}: rel error {rel:.3e}"
        identity = 0.5 * EPS**2 + 0.5 * mv.central_moment(2)
        assert abs(measured.central_moment(2) - identity) <= (
            1e-9 * identity)


def test_criterion_02_ansatz_fixed_point():
    for eps in DEFAULT_EPSILONS:
        kernel = make_segregation_kernel(eps, GRID)
        ansatz = gaussian_profile(0.3, eps, GRID)
        image = apply_T_fast(ansatz, kernel)
        rel = np.max(np.abs(image.values - ansatz.values)) / np.max(
            ansatz.values)
        assert rel <= 1e-6, f"eps={eps}: sup rel error {rel:.3e}"


def test_criterion_03_reference_fast_equivalence():
    small = make_grid(-6.0, 6.0, 128)
    kernel = make_segregation_kernel(0.4, small)
    rng = np.random.default_rng(303)
    for _ in range(50):
        q = random_mixture(small, rng, center_span=1.2,
                           width_range=(0.4, 0.6))
        gap = np.max(np.abs(apply_T_fast(q, kernel).values
                            - apply_T_reference(q, kernel).values))
        assert gap <= 1e-10, f"sup gap {gap:.3e}"


def test_criterion_04_conservation_and_positivity(renorm_traj, full_traj):
    assert renorm_traj.max_mass_drift <= 1e-8
    assert np.all(renorm_traj.mass_drift <= 1e-8)
    for traj in (renorm_traj, full_traj):
        assert traj.floor_ok.all(), "positivity floor violated"
        assert traj.ceiling_ok.all(), "pointwise ceiling violated"
        assert traj.l1_ok.all(), "L1 ceiling violated"
        assert traj.invariants_ok


@pytest.mark.parametrize("eps", [0.2, 0.1])
def test_criterion_05_variance_transient_closed_form(eps):
    r, v0 = 2.0, 2.0
    cfg = RunConfig(mortality=zero_mortality(),
                    model="sexual_renormalized", epsilon=eps, v0=v0,
                    t_end=20.0 * eps**2 / r, dt_factor=5e-4,
                    strict_hypotheses=False)
    traj = simulate(cfg)
    eps2 = eps**2
    pred = eps2 + (v0 * eps2 - eps2) * np.exp(
        -r * traj.times / (2.0 * eps2))
    rel = np.max(np.abs(traj.m2c - pred) / pred)
    assert rel <= 1e-4, f"eps={eps}: sup rel error {rel:.3e}"
    assert traj.invariants_ok


def test_criterion_06_mean_and_variance_rates(sweep_records):
    tail = sweep_records[2:]  # drop the two largest epsilon
    mean_fit = fit_rate(tail, "sup_mean_err")
    assert mean_fit.slope >= 0.8, f"mean slope {mean_fit.slope:.3f}"
    var_fit = fit_rate(tail, "sup_var_err")
    assert var_fit.slope >= 2.7, f"variance slope {var_fit.slope:.3f}"
    ratios = [rec.sup_high_moment_ratio for rec in sweep_records]
    spread = max(ratios) / min(ratios)
    assert spread <= 10.0, f"high-moment ratio spread {spread:.2f}"


def test_criterion_07_w1_rate(sweep_records):
    fit = fit_rate(sweep_records[2:], "sup_w1")
    assert fit.slope >= 0.8, f"W1 slope {fit.slope:.3f}"
    assert fit.r_squared >= 0.98, f"W1 fit r^2 {fit.r_squared:.4f}"


def test_criterion_08_mass_rate(sweep_records):
    fit = fit_rate(sweep_records[2:], "rho_err")
    assert fit.slope >= 0.8, f"rho slope {fit.slope:.3f}"


def test_criterion_09_tanaka_contraction_100_pairs():
    rng = np.random.default_rng(909)
    passed = 0
    for _ in range(100):
        a = random_mixture(GRID, rng, mean=0.0)
        b = random_mixture(GRID, rng, mean=0.0)
        if contraction_check(a, b, KERNEL).passed:
            passed += 1
    assert passed == 100, f"only {passed}/100 pairs contracted"


def test_criterion_10_asexual_contrast(contrast_report):
    rep = contrast_report
    worst = max(rep.residual_ratios)
    assert worst <= rep.settings.residual_factor, (
        f"worst residual {worst:.2f}x tolerance")
    assert rep.min_rel_difference >= 0.10, (
        f"asexual separation {rep.min_rel_difference:.3f}")
    assert max(rep.sexual_max_dev) <= 0.02, (
        f"sexual deviation {max(rep.sexual_max_dev):.4f}")
    assert rep.all_ok


def test_criterion_11_sweep_determinism(tmp_path):
    cfg = tmp_path / "sweep.toml"
    cfg.write_text("""
[run]
model = "sexual_full"
n_points = 512
t_end = 0.3

[sweep]
epsilons = [0.4, 0.2, 0.1]
t_star_factor = 1.0
""")
    outputs = []
    for sub in ("first", "second"):
        out = tmp_path / sub
        assert main(["sweep", "--config", str(cfg), "--out-dir",
                     str(out)]) == 0
        outputs.append((out / "sweep_records.csv").read_bytes()
                       + (out / "sweep_fits.csv").read_bytes())
    assert outputs[0] == outputs[1]
