"""Figure output for experiment reports.

Figures are written as SVG next to the CSV files.  The CSVs are the
contract; figures are best effort, so a failure here is logged and ignored.
"""
from __future__ import annotations

import logging

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

log = logging.getLogger(__name__)

RC = {
    "font.family": "serif",
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.2,
    "lines.markersize": 4,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "figure.figsize": (4.5, 3.2),
    "svg.hashsalt": "morleytps",
    "svg.fonttype": "none",
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _figure(plotter, path, *args):
    try:
        with plt.rc_context(RC):
            fig, ax = plt.subplots()
            plotter(ax, *args)
            _save(fig, path)
    except Exception as exc:  # figures never fail an experiment
        log.warning("could not write figure %s: %s", path, exc)
        plt.close("all")


def lambda_sweep(path, lams, errors, best):
    def draw(ax):
        ax.loglog(lams, errors, "o-", color="k")
        ax.axvline(best, color="tab:red", ls="--", lw=0.8, label=rf"best $\lambda$ = {best:.0e}")
        ax.set_xlabel(r"$\lambda_n$")
        ax.set_ylabel(r"$\|u_0-\hat u_h\|_n$")
        ax.legend()

    _figure(draw, path)


def linear_fit(path, x, y, slope, intercept, xlabel, ylabel):
    def draw(ax):
        ax.plot(x, y, "o", color="k", label="mean error")
        xs = np.linspace(0.0, max(x) * 1.05, 50)
        ax.plot(xs, intercept + slope * xs, "-", color="tab:blue", label=f"slope {slope:.3g}")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.legend()

    _figure(draw, path)


def lambda_trace(path, ks, lams, errors):
    def draw(ax):
        ax.semilogy(ks, lams, "o-", color="k", label=r"$\lambda_{n,k}$")
        ax.set_xlabel("iteration k")
        ax.set_ylabel(r"$\lambda_{n,k}$")
        ax2 = ax.twinx()
        ax2.plot(ks, errors, "s--", color="tab:red", label=r"$\|u_0-\hat u_h\|_n$")
        ax2.set_ylabel(r"$\|u_0-\hat u_h\|_n$", color="tab:red")
        ax2.grid(False)

    _figure(draw, path)


def survival(path, z, s, slope, intercept):
    def draw(ax):
        ax.semilogy(np.square(z), s, ".", color="k", label="empirical")
        zz = np.linspace(np.min(z) ** 2, np.max(z) ** 2, 50)
        ax.semilogy(zz, np.exp(intercept + slope * zz), "-", color="tab:blue", label="log-linear fit")
        ax.set_xlabel(r"$z^2$")
        ax.set_ylabel(r"$P(\|u_0-\hat u_h\|_n \geq z)$")
        ax.legend()

    _figure(draw, path)


def rate_table(path, h, columns: dict):
    def draw(ax):
        for name, vals in columns.items():
            ax.loglog(h, vals, "o-", label=name)
        ax.set_xlabel("h")
        ax.set_ylabel("error")
        ax.legend()

    _figure(draw, path)
