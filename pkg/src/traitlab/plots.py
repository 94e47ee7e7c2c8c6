"""SVG rendering of the CSV outputs.

Plots are regenerable offline from the CSVs alone, so every function
here takes file paths, not in-memory objects.  matplotlib is imported
on first use and never through pyplot (no global backend state).
"""
from __future__ import annotations

import csv
from collections import defaultdict

import numpy as np


def _figure(figsize):
    from matplotlib.figure import Figure
    return Figure(figsize=figsize)


def _columns(path):
    data = np.genfromtxt(path, delimiter=",", names=True)
    if data.ndim == 0:
        data = data.reshape(1)
    return data


def plot_trajectory(csv_path, out_path) -> None:
    """Mass, mean, and variance diagnostics of one run."""
    data = _columns(csv_path)
    fig = _figure((9.0, 6.0))
    axes = fig.subplots(2, 2, sharex=True)
    axes[0, 0].plot(data["t"], data["rho"])
    axes[0, 0].set_ylabel(r"$\rho$")
    axes[0, 1].plot(data["t"], data["M1"])
    axes[0, 1].set_ylabel("mean trait")
    axes[1, 0].plot(data["t"], data["M2c"])
    axes[1, 0].set_ylabel("variance")
    axes[1, 0].set_xlabel("t")
    axes[1, 1].semilogy(data["t"], np.maximum(data["W1_to_ansatz"], 1e-300))
    axes[1, 1].set_ylabel(r"$W_1$ to gaussian ansatz")
    axes[1, 1].set_xlabel("t")
    for ax in axes.flat:
        ax.grid(True, alpha=0.3)
    fig.savefig(out_path, format="svg", bbox_inches="tight")


def plot_sweep(records_csv, fits_csv, out_path) -> None:
    """Log-log error ladders with their fitted slopes."""
    records = _columns(records_csv)
    slopes = {}
    with open(fits_csv, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["window"] == "drop2":
                slopes[row["field"]] = float(row["slope"])
    eps = records["epsilon"]
    fig = _figure((7.0, 5.0))
    ax = fig.add_subplot()
    for name, column in (("sup_w1", "sup_W1"),
                         ("sup_mean_err", "sup_mean_err"),
                         ("sup_var_err", "sup_var_err"),
                         ("rho_err", "rho_err")):
        label = column
        if name in slopes:
            label = f"{column} (slope {slopes[name]:.2f})"
        ax.loglog(eps, records[column], "o-", label=label)
    ax.set_xlabel(r"$\varepsilon$")
    ax.set_ylabel("sup-in-time error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=9)
    fig.savefig(out_path, format="svg", bbox_inches="tight")


def plot_contrast(csv_path, out_path) -> None:
    """Variance trajectories of the sexual/asexual comparison."""
    series = defaultdict(lambda: ([], []))
    with open(csv_path, newline="") as fh:
        for row in csv.DictReader(fh):
            ts, vs = series[(row["model"], row["s"])]
            ts.append(float(row["t"]))
            vs.append(float(row["M2c"]))
    fig = _figure((7.0, 5.0))
    ax = fig.add_subplot()
    for (model, s), (ts, vs) in sorted(series.items()):
        style = "-" if model == "asexual" else "--"
        ax.plot(ts, vs, style, label=f"{model}, s={s}")
    ax.set_xlabel("t")
    ax.set_ylabel("variance")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=9)
    fig.savefig(out_path, format="svg", bbox_inches="tight")
