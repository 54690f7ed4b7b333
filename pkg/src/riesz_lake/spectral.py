"""Uniform periodic grids and Fourier-space operators.

Fields live on ``[0, L)^d`` sampled at ``n`` points per axis.  Vector fields
store their components on the leading axis, so a 2D velocity on a 128 grid has
shape ``(2, 128, 128)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridMismatchError, IllPosedError


@dataclass(frozen=True)
class GridField:
    values: np.ndarray
    L: float
    d: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim not in (self.d, self.d + 1):
            raise GridMismatchError(
                f"values of shape {values.shape} do not describe a {self.d}-dimensional grid"
            )
        shape = values.shape[-self.d:]
        if len(set(shape)) != 1:
            raise GridMismatchError(f"grid must be square, got {shape}")

    @property
    def n(self) -> int:
        return self.values.shape[-1]

    @property
    def is_vector(self) -> bool:
        return self.values.ndim == self.d + 1

    @property
    def spacing(self) -> float:
        return self.L / self.n

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.d

    def with_values(self, values) -> "GridField":
        return GridField(values, self.L, self.d)

    def compatible(self, other: "GridField") -> bool:
        return self.d == other.d and self.n == other.n and np.isclose(self.L, other.L)

    def mean(self):
        axes = tuple(range(-self.d, 0))
        return self.values.mean(axis=axes)

    def coords(self):
        """Physical coordinates, shape ``(d, n, ..., n)``."""
        x = np.arange(self.n) * self.spacing
        return np.array(np.meshgrid(*([x] * self.d), indexing="ij"))


def grid_coords(n: int, L: float, d: int) -> np.ndarray:
    x = np.arange(n) * (L / n)
    return np.array(np.meshgrid(*([x] * d), indexing="ij"))


def wavevectors(n: int, L: float, d: int) -> np.ndarray:
    """Physical wavevectors of the FFT modes, shape ``(d, n, ..., n)``."""
    k1 = 2 * np.pi * np.fft.fftfreq(n, d=L / n)
    return np.array(np.meshgrid(*([k1] * d), indexing="ij"))


def nyquist_mask(n: int, d: int) -> np.ndarray:
    """True for modes that are *not* on a Nyquist plane (even ``n`` only)."""
    m1 = np.ones(n, dtype=bool)
    if n % 2 == 0:
        m1[n // 2] = False
    masks = np.meshgrid(*([m1] * d), indexing="ij")
    out = masks[0]
    for m in masks[1:]:
        out = out & m
    return out


def dealias_mask(n: int, d: int) -> np.ndarray:
    """Two-thirds rule: keep integer modes with ``|m_j| < n/3`` on every axis."""
    m = np.abs(np.fft.fftfreq(n, d=1.0 / n))
    keep = m < n / 3.0
    masks = np.meshgrid(*([keep] * d), indexing="ij")
    out = masks[0]
    for mk in masks[1:]:
        out = out & mk
    return out


def fft(values, d):
    return np.fft.fftn(values, axes=tuple(range(-d, 0)))


def ifft(coeffs, d):
    return np.fft.ifftn(coeffs, axes=tuple(range(-d, 0))).real


def fractional_laplacian_apply(order: float, field: GridField) -> GridField:
    """Apply ``(-Δ)^order`` as the Fourier multiplier ``|k|^(2 order)``.

    The zero mode is annihilated for every nonzero order.  Negative orders are
    only defined on zero-mean fields.
    """
    if order == 0:
        return field.with_values(field.values.copy())
    if order < 0:
        scale = max(np.max(np.abs(field.values)), 1.0)
        if np.any(np.abs(field.mean()) > 1e-10 * scale):
            raise IllPosedError(
                "negative-order fractional Laplacian applied to a field with nonzero mean"
            )
    k = wavevectors(field.n, field.L, field.d)
    kk = np.sqrt(np.sum(k * k, axis=0))
    mult = np.zeros_like(kk)
    nz = kk > 0
    mult[nz] = kk[nz] ** (2.0 * order)
    return field.with_values(ifft(fft(field.values, field.d) * mult, field.d))


def gradient(values, L, d):
    """Spectral gradient of a scalar grid array; returns shape ``(d, n, ...)``."""
    n = values.shape[-1]
    k = wavevectors(n, L, d) * nyquist_mask(n, d)
    vh = fft(values, d)
    return np.array([ifft(1j * k[a] * vh, d) for a in range(d)])


def divergence(values, L, d):
    """Spectral divergence of a vector grid array of shape ``(d, n, ...)``."""
    n = values.shape[-1]
    k = wavevectors(n, L, d) * nyquist_mask(n, d)
    acc = np.zeros(values.shape[1:], dtype=complex)
    for a in range(d):
        acc += 1j * k[a] * fft(values[a], d)
    return ifft(acc, d)


def jacobian(values, L, d):
    """``J[a, b] = ∂_b u_a`` for a vector field ``u`` of shape ``(d, n, ...)``."""
    return np.array([gradient(values[a], L, d) for a in range(d)])


def advect(u, L, d):
    """``(u·∇)u`` computed pseudo-spectrally."""
    J = jacobian(u, L, d)
    return np.einsum("ab...,b...->a...", J, u)


def grid_inner(f, g, L, d):
    n = np.asarray(f).shape[-1]
    return float(np.sum(f * g) * (L / n) ** d)


def grid_l2(f, L, d):
    n = np.asarray(f).shape[-1]
    return float(np.sqrt(np.sum(np.asarray(f) ** 2) * (L / n) ** d))


def fourier_modes(values, L, d, rel_tol=0.0):
    """Significant Fourier-series terms of a grid array.

    Returns ``(k, c)`` with ``k`` of shape ``(M, d)`` and complex coefficients
    ``c`` (shape ``(M,)`` or ``(ncomp, M)``) such that
    ``f(x) = Re Σ c_m exp(i k_m·x)`` reproduces the grid values.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[-1]
    coeffs = fft(values, d) / n ** d
    k = wavevectors(n, L, d)
    mag = np.abs(coeffs)
    if mag.ndim > d:
        mag = mag.max(axis=0)
    peak = mag.max() if mag.size else 0.0
    keep = mag > rel_tol * peak if peak > 0 else np.zeros_like(mag, dtype=bool)
    if rel_tol == 0.0 and peak > 0:
        keep = mag > 0
    kk = np.stack([k[a][keep] for a in range(d)], axis=-1)
    if coeffs.ndim > d:
        cc = np.stack([coeffs[c][keep] for c in range(coeffs.shape[0])])
    else:
        cc = coeffs[keep]
    return kk, cc


def evaluate_modes(k, c, points, chunk=4096):
    """Evaluate ``Re Σ c_m exp(i k_m·x)`` at ``points`` of shape ``(P, d)``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    scalar = np.ndim(c) == 1
    cc = np.atleast_2d(c)
    out = np.empty((cc.shape[0], points.shape[0]))
    for start in range(0, points.shape[0], chunk):
        p = points[start:start + chunk]
        phase = np.exp(1j * (p @ k.T))
        out[:, start:start + chunk] = (phase @ cc.T).T.real
    return out[0] if scalar else out


def interpolate(field: GridField, points, rel_tol=1e-14):
    """Trigonometric interpolation of a grid field at off-grid points."""
    k, c = fourier_modes(field.values, field.L, field.d, rel_tol=rel_tol)
    return evaluate_modes(k, c, points)


def mode_coefficients(values, d, modes):
    """Fourier-series coefficients ``c_m`` of a grid array at integer modes ``m`` (M, d).

    Modes beyond the grid's Nyquist band get zero.  Works for scalar and
    vector arrays (components on the leading axis).
    """
    values = np.asarray(values)
    n = values.shape[-1]
    coeffs = fft(values, d) / n ** d
    m = np.atleast_2d(np.asarray(modes, dtype=int))
    ok = np.all(np.abs(m) <= (n - 1) // 2, axis=1)
    idx = tuple((m % n).T)
    out = coeffs[(Ellipsis,) + idx]
    return np.where(ok, out, 0.0)
