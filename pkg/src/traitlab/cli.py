"""Command-line interface.

Four subcommands: ``simulate`` (one run, trajectory CSV), ``sweep``
(epsilon ladder, records and fitted slopes), ``validate`` (the named
correctness checks), ``asexual`` (the paired sexual/asexual variance
comparison).  Exit code 0 when every check passes, 1 when any fails,
2 on configuration errors.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import load_config
from .dynamics import simulate
from .errors import ConfigError, TraitLabError, UnderResolvedError
from .harness import (fit_table, fits_csv, run_contrast, run_sweep,
                      run_validation_suite, sweep_csv, write_text)

_SUBCOMMANDS = (
    ("simulate", "run one simulation and write its trajectory CSV"),
    ("sweep", "run the epsilon ladder and fit convergence rates"),
    ("validate", "run the correctness checks and write the report"),
    ("asexual", "run the paired sexual/asexual variance comparison"),
)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="traitlab",
        description="Trait-distribution dynamics under the infinitesimal "
                    "model: simulations, convergence-rate sweeps, and "
                    "validation checks.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, blurb in _SUBCOMMANDS:
        p = sub.add_parser(name, help=blurb)
        p.add_argument("--config", metavar="PATH",
                       help="TOML config file (defaults built in)")
        p.add_argument("--out-dir", metavar="PATH", default=".",
                       help="directory for CSV and SVG outputs")
        p.add_argument("--emit-plots", action="store_true",
                       help="also render SVG plots from the CSVs")
        p.add_argument("--threads", type=int, default=None, metavar="N",
                       help="worker threads for independent runs")
        p.add_argument("--seed", type=int, default=None, metavar="U64",
                       help="seed for the random-density checks")
    return parser


def _cmd_simulate(cfg, args, out: Path) -> int:
    tr = simulate(cfg.run)
    path = out / "trajectory.csv"
    tr.write_csv(path)
    print(f"wrote {path} ({tr.n_steps} steps, dt={tr.dt:.3e}, "
          f"{tr.runtime_seconds:.1f}s)")
    print(f"max per-step mass drift: {tr.max_mass_drift:.3e}")
    ok = tr.invariants_ok
    print("floor/ceiling/L1/moment-growth invariants: "
          + ("pass" if ok else "FAIL"))
    if args.emit_plots:
        from .plots import plot_trajectory
        plot_trajectory(path, out / "trajectory.svg")
    return 0 if ok else 1


def _cmd_sweep(cfg, args, out: Path) -> int:
    records = run_sweep(cfg.run, cfg.sweep_epsilons, cfg.beta,
                        cfg.t_star_factor, threads=args.threads)
    rec_path = out / "sweep_records.csv"
    write_text(rec_path, sweep_csv(records))
    fit_path = out / "sweep_fits.csv"
    write_text(fit_path, fits_csv(records))
    for field, window, fit in fit_table(records):
        print(f"{field:>22} [{window:>5}] slope {fit.slope:+.3f}  "
              f"r^2 {fit.r_squared:.4f}  ({fit.n_points} pts)")
    print(f"wrote {rec_path} and {fit_path}")
    if args.emit_plots:
        from .plots import plot_sweep
        plot_sweep(rec_path, fit_path, out / "sweep_rates.svg")
    return 0 if len(records) == len(cfg.sweep_epsilons) else 1


def _cmd_validate(cfg, args, out: Path) -> int:
    overrides = dict(cfg.suite_overrides)
    if args.seed is not None:
        overrides["seed"] = args.seed
    report = run_validation_suite(overrides)
    path = out / "suite_report.csv"
    report.write_csv(path)
    for c in report.checks:
        print(f"{c.name:>26}: {'pass' if c.passed else 'FAIL'}  "
              f"value={c.value:.3e}  threshold={c.threshold:.3e}")
    print(f"wrote {path}")
    return 0 if report.all_pass else 1


def _cmd_asexual(cfg, args, out: Path) -> int:
    report = run_contrast(cfg.contrast, cfg.t_star_factor,
                          threads=args.threads)
    path = out / "asexual_contrast.csv"
    report.write_csv(path)
    st = report.settings
    sa, sb = st.s_values
    print(f"asexual variance separation, min over t >= {st.compare_from:g}: "
          f"{report.min_rel_difference:.3f} (needs >= {st.min_separation:g})"
          f" -> {'pass' if report.separation_ok else 'FAIL'}")
    print(f"sexual variance vs eps^2: s={sa:g} dev {report.sexual_max_dev[0]:.4f},"
          f" s={sb:g} dev {report.sexual_max_dev[1]:.4f}"
          f" (band {st.locking_band:g})"
          f" -> {'pass' if report.locking_ok else 'FAIL'}")
    worst = max(report.residual_ratios)
    print(f"moment-equation residuals: worst {worst:.2f}x the "
          f"finite-difference tolerance (allowed {st.residual_factor:g}x)"
          f" -> {'pass' if report.residuals_ok else 'FAIL'}")
    print(f"wrote {path}")
    if args.emit_plots:
        from .plots import plot_contrast
        plot_contrast(path, out / "asexual_contrast.svg")
    return 0 if report.all_ok else 1


_HANDLERS = {
    "simulate": _cmd_simulate,
    "sweep": _cmd_sweep,
    "validate": _cmd_validate,
    "asexual": _cmd_asexual,
}


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        return _HANDLERS[args.command](cfg, args, out)
    except (ConfigError, UnderResolvedError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except TraitLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
