"""Empirical Grönwall fit of a modulated-energy time series."""
from __future__ import annotations

import numpy as np

from ..errors import InsufficientSamplesError, PreconditionError

FLOOR = 1e-14
MIN_SAMPLES = 10


def fit_gronwall(source, column="script_H") -> dict:
    """Smallest ``C`` with ``log(H(t)+δ) <= log(H(0)+δ) + C t`` at every sample.

    Parameters
    ----------
    source : path or mapping
        A ``diagnostics.csv`` path, or a mapping with ``t`` and ``column`` arrays.
    column : str
        Energy column to fit.

    Returns
    -------
    dict
        ``C_fit`` (nonnegative), ``max_violation`` of the bound at ``C_fit``
        (zero up to rounding), ``slack`` (smallest margin over ``t > 0``) and the
        least-squares ``slope`` of ``log H`` against ``t``.
    """
    if isinstance(source, dict):
        t = np.asarray(source["t"], dtype=float)
        H = np.asarray(source[column], dtype=float)
    else:
        from .runner import read_diagnostics_csv

        data = read_diagnostics_csv(source)
        t, H = data["t"], data[column]
    if t.size < MIN_SAMPLES:
        raise InsufficientSamplesError(f"need at least {MIN_SAMPLES} samples, got {t.size}")
    if not np.all(np.isfinite(H)):
        raise PreconditionError(f"{column} contains non-finite values")
    if np.any(H + FLOOR <= 0):
        raise PreconditionError(f"{column} must be positive for a logarithmic fit")
    y = np.log(H + FLOOR) - np.log(H[0] + FLOOR)
    tau = t - t[0]
    pos = tau > 0
    rates = y[pos] / tau[pos]
    C = max(0.0, float(np.max(rates))) if rates.size else 0.0
    margin = C * tau - y
    slope = float(np.polyfit(tau, np.log(H + FLOOR), 1)[0])
    return {
        "C_fit": C,
        "max_violation": float(max(0.0, -np.min(margin))),
        "slack": float(np.min(margin[pos])) if rates.size else 0.0,
        "slope": slope,
        "n_samples": int(t.size),
    }
