"""SVG line plots of CSV columns (optional matplotlib dependency)."""
from __future__ import annotations

import csv

import numpy as np

from ..errors import UnsupportedError


def _pyplot():
    try:
        import matplotlib
    except ImportError:
        raise UnsupportedError("plotting needs matplotlib; install the 'plot' extra") from None
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _columns(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) if r[k] not in ("", None) else np.nan for r in rows]) for k in rows[0]} if rows else {}


def plot_timeseries(csv_path, columns, out_path, x="t"):
    plt = _pyplot()
    data = _columns(csv_path)
    fig, ax = plt.subplots(figsize=(6, 4))
    for c in columns:
        ax.plot(data[x], data[c], label=c)
    ax.set_xlabel(x)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, format="svg")
    plt.close(fig)
    return out_path


def plot_loglog(csv_path, columns, out_path, x="N"):
    plt = _pyplot()
    data = _columns(csv_path)
    fig, ax = plt.subplots(figsize=(6, 4))
    for c in columns:
        y = np.abs(data[c])
        ok = np.isfinite(y) & (y > 0)
        ax.loglog(data[x][ok], y[ok], "o-", label=c)
    ax.set_xlabel(x)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, format="svg")
    plt.close(fig)
    return out_path
