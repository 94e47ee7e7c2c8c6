"""Time integration of the three population models.

The strong oracles here all use zero mortality, where the Gaussian
ansatz is an exact fixed point of the sexual flows and the variance
transient has the closed form eps^2 + (Mc2(0) - eps^2) exp(-rt/2eps^2).
Everything else is invariants: mass drift, positivity floors, the L1
ceiling, monotone mean decay, and first-order step refinement.
"""
import math

import numpy as np
import pytest

from traitlab import (BlowUpError, ConfigError, Density, RunConfig,
                      SimulationState, UnderResolvedError, gaussian_density,
                      make_context, quadratic, simulate, step_sexual_full,
                      step_sexual_renormalized, tabulated)
from traitlab.mortality import eval_m


def zero_mortality():
    xs = np.linspace(-6.5, 6.5, 9)
    return tabulated(xs, np.zeros_like(xs))


def test_trajectory_csv_columns(renorm_run):
    lines = renorm_run.as_csv().strip().split("\n")
    assert lines[0] == ("t,rho,M1,M2c,M4c,M2k0c,W1_to_ansatz,"
                       "mass_drift,min_value")
    assert len(lines) == 1 + len(renorm_run.times)
    assert all(len(line.split(",")) == 9 for line in lines[1:])


def test_invariants_hold_on_default_runs(renorm_run, full_run,
                                         asexual_run):
    for traj in (renorm_run, full_run, asexual_run):
        assert traj.invariants_ok
        assert traj.min_value.min() >= -1e-12
    cfg = full_run.config
    rho_cap = max(full_run.rho[0], cfg.r / cfg.kappa)
    assert full_run.rho.max() <= rho_cap + 1e-8


def test_renormalized_mass_drift_per_step(renorm_run):
    assert renorm_run.max_mass_drift <= 1e-9
    assert np.all(renorm_run.mass_drift <= 1e-9)


def test_mean_decays_monotonically(renorm_run):
    assert renorm_run.m1[0] == pytest.approx(0.3, abs=1e-8)
    assert np.all(np.diff(renorm_run.m1) <= 1e-12)
    assert renorm_run.m1[-1] < renorm_run.m1[0]


def test_ansatz_is_stationary_without_selection():
    # m == 0: the renormalized flow fixes the Gaussian profile and the
    # full model additionally fixes rho = r / kappa.  One unit of time,
    # drift stays at roundoff level.
    m0 = zero_mortality()
    renorm = simulate(RunConfig(mortality=m0, model="sexual_renormalized",
                                epsilon=0.2, t_end=1.0,
                                strict_hypotheses=False))
    assert np.max(np.abs(renorm.m2c - 0.04)) <= 1e-8
    assert np.max(np.abs(renorm.m1 - 0.3)) <= 1e-8
    assert renorm.w1_to_ansatz.max() <= 1e-8
    full = simulate(RunConfig(mortality=m0, model="sexual_full",
                              epsilon=0.2, t_end=1.0,
                              strict_hypotheses=False))
    assert np.max(np.abs(full.rho - 2.0)) <= 1e-8
    assert np.max(np.abs(full.m2c - 0.04)) <= 1e-8


def test_variance_relaxation_against_closed_form():
    cfg = RunConfig(mortality=zero_mortality(),
                    model="sexual_renormalized", epsilon=0.2, v0=2.0,
                    t_end=0.3, strict_hypotheses=False)
    traj = simulate(cfg)
    eps2 = cfg.epsilon**2
    pred = eps2 + (2.0 * eps2 - eps2) * np.exp(
        -cfg.r * traj.times / (2.0 * eps2))
    assert np.max(np.abs(traj.m2c - pred) / pred) <= 1e-3


def test_step_refinement_is_first_order():
    finals = []
    for factor in (0.02, 0.01, 0.005):
        cfg = RunConfig(mortality=quadratic(1.0),
                        model="sexual_renormalized", epsilon=0.2, v0=2.0,
                        t_end=0.05, dt_factor=factor)
        finals.append(simulate(cfg).m2c[-1])
    d1 = abs(finals[0] - finals[1])
    d2 = abs(finals[1] - finals[2])
    assert d1 > 1e-14 and d2 > 1e-14
    # Halving dt should roughly halve the defect; allow up to 4x the
    # expected first-order ratio of 2.
    assert 0.5 <= d1 / d2 <= 8.0


def test_full_model_mass_follows_logistic_ode():
    cfg = RunConfig(mortality=quadratic(1.0), model="sexual_full",
                    epsilon=0.2, n_points=512, t_end=0.2, n_snapshots=101)
    traj = simulate(cfg)
    idx = np.searchsorted(traj.times, traj.snapshot_times)
    rho = traj.rho[idx]
    i_m = np.array([q.grid.trapz(eval_m(cfg.mortality, q.grid.nodes)
                                 * q.values) for q in traj.snapshots])
    dt = float(traj.snapshot_times[1] - traj.snapshot_times[0])
    drho = np.gradient(rho, dt, edge_order=2)
    forcing = rho * (cfg.r - cfg.kappa * rho - i_m)
    resid = cfg.epsilon**2 * drho - forcing
    # Same error budget the moment residuals use: Richardson estimate of
    # the finite-difference error plus the first-order stepping error.
    coarse = np.gradient(rho[::2], 2.0 * dt, edge_order=2)
    fd_err = float(np.max(np.abs(drho[::2] - coarse)) / 3.0)
    scale = float(np.max(np.abs(cfg.epsilon**2 * drho) + np.abs(forcing)))
    tol = (2.0 * cfg.epsilon**2 * fd_err
           + 2.0 * (traj.dt / cfg.time_scale) * scale + 1e-10 * scale)
    assert np.max(np.abs(resid)) <= tol


def test_asexual_variance_reaches_quasi_steady_state():
    cfg = RunConfig(mortality=quadratic(1.0), model="asexual_full",
                    epsilon=0.1, n_points=512, t_end=1.5)
    traj = simulate(cfg)
    qss = cfg.epsilon * cfg.mutation_std * math.sqrt(
        cfg.mutation_rate / 2.0)
    assert traj.m2c[-1] == pytest.approx(qss, rel=0.05)
    assert traj.invariants_ok


def test_zero_duration_run_echoes_initial_state():
    cfg = RunConfig(mortality=quadratic(1.0), model="sexual_renormalized",
                    epsilon=0.2, t_end=0.0)
    traj = simulate(cfg)
    assert traj.n_steps == 0
    np.testing.assert_array_equal(traj.times, [0.0])
    assert traj.m1[0] == pytest.approx(0.3, abs=1e-8)
    assert len(traj.snapshots) == 1
    assert traj.invariants_ok
    np.testing.assert_array_equal(traj.final_density.values,
                                  traj.snapshots[0].values)


@pytest.mark.parametrize("kwargs", [
    {"model": "diploid"},
    {"t_end": -0.1},
    {"r": 0.0},
    {"kappa": -1.0},
    {"epsilon": 0.0},
    {"dt_factor": 0.0},
    {"dt_factor": 1.5},
    {"x0": 0.8},            # outside the convexity window 0.7
    {"rho0": 0.0},
    {"rho0": 2000.0},
    {"v0": 5.0},            # order-8 moment too large: not well-prepared
])
def test_invalid_configs_are_rejected(kwargs):
    base = dict(mortality=quadratic(1.0), model="sexual_full",
                epsilon=0.2, t_end=0.01)
    base.update(kwargs)
    with pytest.raises(ConfigError):
        simulate(RunConfig(**base))


def test_strict_hypotheses_gate():
    # Mortality exceeding r inside its window violates the growth
    # hypothesis: fatal by default, allowed when explicitly relaxed.
    bad = quadratic(10.0, window=1.0)
    cfg = RunConfig(mortality=bad, r=1.0, model="sexual_renormalized",
                    epsilon=0.2, t_end=0.0)
    with pytest.raises(ConfigError):
        simulate(cfg)
    relaxed = RunConfig(mortality=bad, r=1.0, model="sexual_renormalized",
                        epsilon=0.2, t_end=0.0, strict_hypotheses=False)
    assert simulate(relaxed).n_steps == 0


def test_under_resolved_grid_is_rejected():
    cfg = RunConfig(mortality=quadratic(1.0), model="sexual_full",
                    epsilon=0.05, n_points=64, t_end=0.01)
    with pytest.raises(UnderResolvedError):
        simulate(cfg)


def test_blow_up_detection_and_step_guards():
    cfg = RunConfig(mortality=quadratic(1.0), model="sexual_full",
                    r=1e9, kappa=1e-30, epsilon=0.2)
    ctx = make_context(cfg)
    grid = cfg.make_grid()
    big = Density(grid, 1e11 * gaussian_density(0.3, 0.2, grid).values)
    state = SimulationState(t=0.0, density=big, model="sexual_full",
                            epsilon=0.2)
    assert state.rho == pytest.approx(1e11, rel=1e-6)
    with pytest.raises(BlowUpError):
        for _ in range(50):
            state = step_sexual_full(state, 1.0, ctx)
    with pytest.raises(ConfigError):
        step_sexual_renormalized(state, 0.0, ctx)
