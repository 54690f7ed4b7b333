"""Interaction kernels, their gradients, pair sums and convolution potentials.

Whole-space kernels follow the Riesz family ``|x|^{-s}/s`` (``-log|x|`` at
``s = 0``) plus the one-dimensional Coulomb kernel ``-2|x|``.  Periodic kernels
on the torus of side ``L`` are *defined by their Fourier multiplier*: the
kernel ``g`` is the one for which ``g * f`` multiplies the Fourier-series
coefficient of ``f`` at wavevector ``k`` by ``ĝ(k)``, i.e.

    g(x) = L^{-d} Σ_{k ≠ 0} ĝ(k) exp(i k·x).

``torus_riesz`` uses ``ĝ(k) = |k|^{-(d-s)}`` and is summed with an Ewald
split; ``torus_spectral`` carries a finite table of nonnegative coefficients.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from . import spectral
from .errors import AccuracyError, InvalidKernelError, SingularityError, UnsupportedError
from .spectral import GridField, fractional_laplacian_apply

FAMILIES = ("riesz", "log", "oned_coulomb", "torus_riesz", "torus_spectral")

_EWALD_LOG_TOL = math.log(1e16)


@dataclass(frozen=True)
class Kernel:
    family: str
    d: int
    s: float | None = None
    L: float | None = None
    coeffs: tuple = field(default=(), repr=False)
    kappa: float | None = None
    min_distance: float | None = None

    def __post_init__(self):
        fam, d, s = self.family, self.d, self.s
        if fam not in FAMILIES:
            raise InvalidKernelError(f"unknown kernel family {fam!r}")
        if d < 1:
            raise InvalidKernelError("dimension must be positive")
        if fam == "log":
            object.__setattr__(self, "s", 0.0)
            if not d - 2 <= 0 < d:
                raise InvalidKernelError(f"log kernel requires d in (0, 2], got d={d}")
        elif fam == "oned_coulomb":
            object.__setattr__(self, "s", -1.0)
            if d != 1:
                raise InvalidKernelError("oned_coulomb is only defined for d = 1")
        elif fam in ("riesz", "torus_riesz"):
            if s is None:
                raise InvalidKernelError(f"{fam} kernel needs an exponent s")
            if not d - 2 <= s < d:
                raise InvalidKernelError(f"Riesz exponent must satisfy d-2 <= s < d, got s={s}, d={d}")
            if fam == "riesz" and s == 0:
                raise InvalidKernelError("use the log family for s = 0")
        if self.periodic:
            if self.L is None or self.L <= 0:
                raise InvalidKernelError("periodic kernels need a positive box side L")
        if fam == "torus_spectral":
            table = {}
            for m, val in self.coeffs:
                m = tuple(int(c) for c in m)
                if len(m) != d:
                    raise InvalidKernelError(f"mode {m} does not have dimension {d}")
                if val < 0:
                    raise InvalidKernelError(f"negative multiplier {val} at mode {m}")
                if not any(m) and val != 0:
                    raise InvalidKernelError("torus_spectral kernels must have zero average")
                table[m] = float(val)
            for m, val in table.items():
                neg = tuple(-c for c in m)
                if not np.isclose(table.get(neg, 0.0), val, rtol=1e-14, atol=0):
                    raise InvalidKernelError(f"multiplier not symmetric under k -> -k at {m}")
            object.__setattr__(self, "coeffs", tuple(sorted(table.items())))

    # -- constructors -----------------------------------------------------
    @classmethod
    def riesz(cls, s, d, **kw):
        if s == 0:
            return cls("log", d, **kw)
        return cls("riesz", d, s=float(s), **kw)

    @classmethod
    def log(cls, d=2, **kw):
        return cls("log", d, **kw)

    @classmethod
    def oned_coulomb(cls, **kw):
        return cls("oned_coulomb", 1, **kw)

    @classmethod
    def torus_riesz(cls, s, d, L=2 * np.pi, **kw):
        return cls("torus_riesz", d, s=float(s), L=float(L), **kw)

    @classmethod
    def torus_spectral(cls, coeffs, d, L=2 * np.pi, kappa=None, **kw):
        if isinstance(coeffs, dict):
            coeffs = tuple(coeffs.items())
        return cls("torus_spectral", d, L=float(L), coeffs=tuple(coeffs), kappa=kappa, **kw)

    # -- descriptors ------------------------------------------------------
    @property
    def periodic(self) -> bool:
        return self.family.startswith("torus")

    @property
    def singular(self) -> bool:
        """True when ``g`` itself blows up at the origin."""
        if self.family == "torus_spectral":
            return False
        return self.s >= 0

    @property
    def local_scale(self) -> float:
        """Factor ``c`` with ``g ≈ c · g_riesz`` near the origin.

        Used to rescale the log correction and lower-bound constants, which
        are stated for the bare Riesz normalization.
        """
        if self.family == "oned_coulomb":
            return 2.0
        if self.family == "torus_riesz":
            s, d = self.s, self.d
            a = d - s
            if s == 0:
                return 2.0 / ((4 * np.pi) ** (d / 2) * special.gamma(d / 2))
            return 2.0 * special.gamma(s / 2 + 1) / (2 ** a * np.pi ** (d / 2) * special.gamma(a / 2))
        return 1.0

    def to_config(self) -> dict:
        out = {"family": self.family, "d": self.d}
        if self.family in ("riesz", "torus_riesz"):
            out["s"] = self.s
        if self.periodic:
            out["L"] = self.L
        if self.family == "torus_spectral":
            out["coeffs"] = [[list(m), v] for m, v in self.coeffs]
            if self.kappa is not None:
                out["kappa"] = self.kappa
        if self.min_distance is not None:
            out["min_distance"] = self.min_distance
        return out

    @classmethod
    def from_config(cls, cfg: dict, d=None, L=None) -> "Kernel":
        cfg = dict(cfg)
        family = cfg.pop("family")
        d = int(cfg.pop("d", d if d is not None else 1))
        kw = {}
        if "min_distance" in cfg:
            kw["min_distance"] = float(cfg.pop("min_distance"))
        if family == "riesz":
            return cls.riesz(float(cfg["s"]), d, **kw)
        if family == "log":
            return cls.log(d, **kw)
        if family == "oned_coulomb":
            return cls.oned_coulomb(**kw)
        L = float(cfg.get("L", L if L is not None else 2 * np.pi))
        if family == "torus_riesz":
            return cls.torus_riesz(float(cfg["s"]), d, L=L, **kw)
        if family == "torus_spectral":
            coeffs = tuple((tuple(m), float(v)) for m, v in cfg["coeffs"])
            return cls.torus_spectral(coeffs, d, L=L, kappa=cfg.get("kappa"), **kw)
        raise InvalidKernelError(f"unknown kernel family {family!r}")

    # -- Fourier multiplier ----------------------------------------------
    def multiplier(self, k):
        """``ĝ`` at physical wavevectors ``k`` (trailing axis of length d)."""
        if not self.periodic:
            raise UnsupportedError("Fourier multipliers are only defined for torus kernels")
        k = np.asarray(k, dtype=float)
        if self.family == "torus_riesz":
            kk = np.sqrt(np.sum(k * k, axis=-1))
            out = np.zeros_like(kk)
            nz = kk > 0
            out[nz] = kk[nz] ** (-(self.d - self.s))
            return out
        m = np.rint(k * self.L / (2 * np.pi)).astype(int)
        table = dict(self.coeffs)
        flat = m.reshape(-1, self.d)
        vals = np.array([table.get(tuple(row), 0.0) for row in flat])
        return vals.reshape(m.shape[:-1])

    def multiplier_grid(self, n):
        k = spectral.wavevectors(n, self.L, self.d)
        return self.multiplier(np.moveaxis(k, 0, -1))


def as_points(x, d):
    """Coerce input to an array with trailing axis of length ``d``."""
    x = np.asarray(x, dtype=float)
    if d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != d:
        raise ValueError(f"expected points with trailing dimension {d}, got shape {x.shape}")
    return x


def fold(x, L):
    """Minimum-image representative in ``[-L/2, L/2)``."""
    return x - L * np.floor(x / L + 0.5)


def _radial_g(kernel, r):
    if kernel.family == "log":
        return -np.log(r)
    if kernel.family == "oned_coulomb":
        return -2.0 * r
    s = kernel.s
    return r ** (-s) / s


def _radial_dg_over_r(kernel, r):
    """``g'(r)/r`` so that ``∇g(x) = x · g'(r)/r``."""
    if kernel.family == "oned_coulomb":
        return -2.0 / r
    return -r ** (-kernel.s - 2)


def _check_nonzero(kernel, r, where):
    if kernel.min_distance is not None:
        return np.maximum(r, kernel.min_distance)
    if np.any(r == 0):
        raise SingularityError(f"{kernel.family} kernel {where} at the origin")
    return r


def eval_g(kernel: Kernel, x):
    """Evaluate the interaction kernel at one or many points."""
    x = as_points(x, kernel.d)
    if kernel.periodic:
        return _periodic_g(kernel, x)
    r = np.sqrt(np.sum(x * x, axis=-1))
    if kernel.singular:
        r = _check_nonzero(kernel, r, "evaluated")
    elif kernel.min_distance is not None:
        r = np.maximum(r, kernel.min_distance)
    out = _radial_g(kernel, r)
    return float(out) if np.ndim(out) == 0 else out


def eval_grad_g(kernel: Kernel, x):
    """Gradient of the kernel; trailing axis of the result has length d."""
    x = as_points(x, kernel.d)
    if kernel.periodic:
        return _periodic_grad_g(kernel, x)
    r = np.sqrt(np.sum(x * x, axis=-1))
    if kernel.min_distance is not None:
        inside = r < kernel.min_distance
        fac = np.where(inside, 0.0, _radial_dg_over_r(kernel, np.where(inside, 1.0, r)))
    else:
        if np.any(r == 0):
            raise SingularityError(f"{kernel.family} kernel differentiated at the origin")
        fac = _radial_dg_over_r(kernel, r)
    return x * fac[..., None]


# -- periodic kernels --------------------------------------------------------

def _upper_gamma(b, y):
    """Non-normalized upper incomplete gamma ``Γ(b, y)`` for ``b > -1``."""
    if b == 1:
        return np.exp(-y)
    if b == 0.5:
        return math.sqrt(np.pi) * special.erfc(np.sqrt(y))
    if b == 1.5:
        return 0.5 * math.sqrt(np.pi) * special.erfc(np.sqrt(y)) + np.sqrt(y) * np.exp(-y)
    if b == 2:
        return (1 + y) * np.exp(-y)
    if b > 0:
        return special.gamma(b) * special.gammaincc(b, y)
    if b == 0:
        return special.exp1(y)
    return (_upper_gamma(b + 1, y) - y ** b * np.exp(-y)) / b


@dataclass(frozen=True)
class _EwaldTables:
    tau: float
    images: np.ndarray
    k: np.ndarray
    weight: np.ndarray
    real_prefactor: float
    grad_prefactor: float
    background: float


@functools.lru_cache(maxsize=64)
def _ewald_tables(kernel: Kernel) -> _EwaldTables:
    d, s, L = kernel.d, kernel.s, kernel.L
    a = d - s
    # real-space cutoff: minimum image only for d <= 2, neighbouring images in 3D
    # where the matching reciprocal grid would be too large
    rc = 0.5 * L if d <= 2 else 1.5 * L
    tau = rc ** 2 / (4 * _EWALD_LOG_TOL)
    kmax = math.sqrt(_EWALD_LOG_TOL / tau)
    M = int(math.ceil(kmax * L / (2 * np.pi)))
    grid = np.array(list(itertools.product(range(-M, M + 1), repeat=d)), dtype=float)
    grid = grid[np.any(grid != 0, axis=1)]
    k = grid * (2 * np.pi / L)
    kk = np.sqrt(np.sum(k * k, axis=1))
    keep = kk <= kmax
    k, kk = k[keep], kk[keep]
    weight = kk ** (-a) * special.gammaincc(a / 2, tau * kk * kk) / L ** d
    if d <= 2:
        images = np.zeros((1, d))
    else:
        images = np.array(list(itertools.product((-1, 0, 1), repeat=d)), dtype=float) * L
    real_pref = np.pi ** (-d / 2) * 4 ** (-a / 2) / special.gamma(a / 2)
    grad_pref = np.pi ** (-d / 2) * 2 ** (1 - a) / special.gamma(a / 2)
    background = tau ** (a / 2) / special.gamma(a / 2 + 1) / L ** d
    return _EwaldTables(tau, images, k, weight, real_pref, grad_pref, background)


def _spectral_tables(kernel: Kernel):
    modes = np.array([m for m, _ in kernel.coeffs], dtype=float).reshape(-1, kernel.d)
    vals = np.array([v for _, v in kernel.coeffs], dtype=float)
    keep = vals > 0
    return modes[keep] * (2 * np.pi / kernel.L), vals[keep] / kernel.L ** kernel.d


def _ewald_real(kernel, tab, x, grad=False):
    """Short-range Ewald part summed over neighbouring images."""
    s = kernel.s
    y0 = fold(x, kernel.L)
    out = np.zeros(y0.shape if grad else y0.shape[:-1])
    for shift in tab.images:
        y = y0 + shift
        r = np.sqrt(np.sum(y * y, axis=-1))
        if np.any(r == 0):
            if kernel.min_distance is not None:
                r = np.maximum(r, kernel.min_distance)
            elif s >= 0 or grad:
                raise SingularityError("periodic Riesz kernel evaluated at the origin")
        rs = np.where(r == 0, 1.0, r)
        z = rs * rs / (4 * tab.tau)
        # terms beyond the cutoff are below e^{-2·_EWALD_LOG_TOL} relative
        near = z < 2 * _EWALD_LOG_TOL
        if not np.any(near):
            continue
        zn, rn = z[near], rs[near]
        if grad:
            fac = -tab.grad_prefactor * rn ** (-s - 2) * _upper_gamma(s / 2 + 1, zn)
            out[near] += y[near] * fac[:, None]
        else:
            val = tab.real_prefactor * rn ** (-s) * _upper_gamma(s / 2, zn)
            if s < 0:
                limit = -tab.real_prefactor * (4 * tab.tau) ** (-s / 2) * 2.0 / s
                val = np.where(r[near] == 0, limit, val)
            out[near] += val
    return out


def _periodic_g(kernel, x):
    if kernel.family == "torus_spectral":
        k, w = _spectral_tables(kernel)
        return np.cos(x @ k.T) @ w
    tab = _ewald_tables(kernel)
    out = _ewald_real(kernel, tab, x) - tab.background + np.cos(x @ tab.k.T) @ tab.weight
    return float(out) if np.ndim(out) == 0 else out


def _periodic_grad_g(kernel, x):
    if kernel.family == "torus_spectral":
        k, w = _spectral_tables(kernel)
        return -(np.sin(x @ k.T) * w) @ k
    tab = _ewald_tables(kernel)
    return _ewald_real(kernel, tab, x, grad=True) - (np.sin(x @ tab.k.T) * tab.weight) @ tab.k


def eval_g_at_origin_regular(kernel: Kernel) -> float:
    """``g(0)`` for smooth periodic kernels (used when the diagonal is kept)."""
    if kernel.family != "torus_spectral":
        raise InvalidKernelError("g(0) is only finite for torus_spectral kernels")
    _, w = _spectral_tables(kernel)
    return float(np.sum(w))


# -- pair sums ----------------------------------------------------------------

def _pairs(N):
    return np.triu_indices(N, k=1)


def pair_energy(kernel: Kernel, X) -> float:
    """``Σ_{i≠j} g(x_i - x_j)`` over ordered pairs."""
    X = as_points(X, kernel.d).reshape(-1, kernel.d)
    N = X.shape[0]
    if N < 2:
        return 0.0
    if _linear_1d(kernel):
        return _linear_1d_energy(kernel, X)
    if kernel.family == "torus_spectral":
        k, w = _spectral_tables(kernel)
        S = np.exp(1j * X @ k.T).sum(axis=0)
        return float(np.sum(w * (np.abs(S) ** 2 - N)))
    i, j = _pairs(N)
    if kernel.periodic:
        tab = _ewald_tables(kernel)
        try:
            real = _ewald_real(kernel, tab, X[i] - X[j])
        except SingularityError as exc:
            raise _name_pair(exc, X, kernel) from None
        S = np.exp(1j * X @ tab.k.T).sum(axis=0)
        recip = float(np.sum(tab.weight * (np.abs(S) ** 2 - N)))
        return 2.0 * float(np.sum(real)) - N * (N - 1) * tab.background + recip
    diff = X[i] - X[j]
    try:
        vals = eval_g(kernel, diff)
    except SingularityError as exc:
        raise _name_pair(exc, X, kernel) from None
    return 2.0 * float(np.sum(vals))


def pair_gradient_sums(kernel: Kernel, X) -> np.ndarray:
    """``G_i = Σ_{j≠i} ∇g(x_i - x_j)`` for every particle, shape ``(N, d)``."""
    X = as_points(X, kernel.d).reshape(-1, kernel.d)
    N, d = X.shape
    G = np.zeros((N, d))
    if N < 2:
        return G
    if _linear_1d(kernel):
        return _linear_1d_gradients(kernel, X)
    if kernel.family == "torus_spectral":
        k, w = _spectral_tables(kernel)
        E = np.exp(1j * X @ k.T)
        S = E.sum(axis=0)
        return -(np.imag(E * np.conj(S)) * w) @ k
    i, j = _pairs(N)
    try:
        if kernel.periodic:
            tab = _ewald_tables(kernel)
            pg = _ewald_real(kernel, tab, X[i] - X[j], grad=True)
        else:
            pg = eval_grad_g(kernel, X[i] - X[j])
    except SingularityError as exc:
        raise _name_pair(exc, X, kernel) from None
    for a in range(d):
        G[:, a] += np.bincount(i, weights=pg[:, a], minlength=N)
        G[:, a] -= np.bincount(j, weights=pg[:, a], minlength=N)
    if kernel.periodic:
        E = np.exp(1j * X @ tab.k.T)
        S = E.sum(axis=0)
        G -= (np.imag(E * np.conj(S)) * tab.weight) @ tab.k
    return G


def _linear_1d(kernel):
    """``g = -c|x|`` on the line: pair sums reduce to ranks after sorting."""
    return kernel.min_distance is None and (
        kernel.family == "oned_coulomb" or (kernel.family == "riesz" and kernel.d == 1 and kernel.s == -1)
    )


def _sorted_1d(kernel, X):
    x = X[:, 0]
    order = np.argsort(x, kind="stable")
    xs = x[order]
    gaps = np.diff(xs)
    if np.any(gaps == 0):
        k = int(np.argmax(gaps == 0))
        a, b = sorted((int(order[k]), int(order[k + 1])))
        raise SingularityError(f"particles {a} and {b} coincide", pair=(a, b))
    return order, xs


def _linear_1d_energy(kernel, X):
    c = _radial_g(kernel, 1.0) * -1.0
    _, xs = _sorted_1d(kernel, X)
    N = xs.size
    rank = 2 * np.arange(1, N + 1) - N - 1
    return -2.0 * c * float(np.dot(rank, xs))


def _linear_1d_gradients(kernel, X):
    c = _radial_g(kernel, 1.0) * -1.0
    order, _ = _sorted_1d(kernel, X)
    N = order.size
    G = np.empty((N, 1))
    # ∇g(x_i - x_j) = -c sign(x_i - x_j): particles below push up, above push down
    G[order, 0] = -c * (2 * np.arange(N) - (N - 1))
    return G


def _name_pair(exc, X, kernel):
    i, j = _pairs(X.shape[0])
    diff = X[i] - X[j]
    if kernel.periodic:
        diff = fold(diff, kernel.L)
    r = np.sqrt(np.sum(diff * diff, axis=1))
    idx = int(np.argmin(r))
    pair = (int(i[idx]), int(j[idx]))
    return SingularityError(f"particles {pair[0]} and {pair[1]} coincide ({exc})", pair=pair)


# -- potentials of densities -------------------------------------------------

def potential_of_density(kernel: Kernel, mu, query_points, epsabs=1e-10, limit=200):
    """``h^μ = g * μ`` at the query points.

    Registered closed forms are used first; periodic kernels go through the
    spectral convolution; anything else falls back to adaptive quadrature.
    """
    pts = as_points(query_points, kernel.d).reshape(-1, kernel.d)
    closed = mu.closed_potential(kernel)
    if closed is not None:
        return closed(pts)
    if kernel.periodic:
        return mu.spectral_potential(kernel, pts)
    return quadrature_potential(kernel, mu, pts, epsabs=epsabs, limit=limit)


def quadrature_potential(kernel, mu, points, epsabs=1e-10, limit=200):
    """Brute-force adaptive quadrature of ``∫ g(x - y) dμ(y)``."""
    pts = as_points(points, kernel.d).reshape(-1, kernel.d)
    support = mu.support
    out = np.empty(pts.shape[0])
    if kernel.d == 1:
        a, b = support.bounds_1d()
        for n, (x,) in enumerate(pts):
            f = lambda y, x=x: _radial_g(kernel, max(abs(x - y), 1e-300)) * mu.pdf1(y)
            brk = [x] if a < x < b else None
            val, err = integrate.quad(f, a, b, points=brk, epsabs=epsabs, epsrel=0, limit=limit)
            _check_quad(err, epsabs, x)
            out[n] = val
        return out
    if mu.radial_pdf is None:
        raise UnsupportedError("quadrature potentials in d >= 2 need a radial density on a ball")
    R = support.radius
    center = np.asarray(support.center, dtype=float)
    rho_fn = mu.radial_pdf
    if kernel.d not in (2, 3):
        raise UnsupportedError("quadrature potentials are implemented for d <= 3")
    for n, x in enumerate(pts):
        rho = float(np.linalg.norm(x - center))
        shell = lambda r: _shell_average(kernel, rho, r) * r ** (kernel.d - 1) * rho_fn(r)
        brk = [rho] if 0 < rho < R else None
        val, err = integrate.quad(shell, 0.0, R, points=brk, epsabs=epsabs, epsrel=0, limit=limit)
        _check_quad(err, epsabs, x)
        out[n] = val * (2 * np.pi if kernel.d == 2 else 4 * np.pi)
    return out


def _shell_average(kernel, rho, r):
    """Average of ``g(x - y)`` over the sphere ``|y| = r`` for ``|x| = rho``."""
    if kernel.family == "log":
        return -math.log(max(rho, r))
    s = kernel.s
    a, b = rho * rho + r * r, 2 * rho * r
    if kernel.d == 2:
        if b == 0:
            return a ** (-s / 2) / s
        if s == 1:
            # complete elliptic integral, written in 1 - m to keep precision near r = rho
            p = ((rho - r) / (rho + r)) ** 2
            return 2 * special.ellipkm1(p) / (np.pi * (rho + r)) if p > 0 else math.inf
        z = min((b / a) ** 2, 1.0)
        return a ** (-s / 2) * special.hyp2f1(s / 4, s / 4 + 0.5, 1.0, z) / s
    if b == 0:
        return a ** (-s / 2) / s
    hi, lo = (rho + r) ** 2, (rho - r) ** 2
    if s == 2:
        return (math.log(hi) - math.log(lo)) / (2 * b * s) if lo > 0 else math.inf
    e = 1 - s / 2
    return (hi ** e - lo ** e) / (2 * b * e * s)


def _check_quad(err, epsabs, x):
    if not np.isfinite(err) or err > 1e3 * epsabs:
        raise AccuracyError(f"quadrature did not converge at {x}: error estimate {err:.3e}", estimate=err)


def convolve_grid(kernel: Kernel, field: GridField) -> GridField:
    """Spectral convolution ``g * f`` of a gridded density on the torus."""
    if not kernel.periodic:
        raise UnsupportedError("grid convolution needs a periodic kernel")
    mult = kernel.multiplier_grid(field.n)
    return field.with_values(spectral.ifft(spectral.fft(field.values, field.d) * mult, field.d))


__all__ = [
    "Kernel",
    "GridField",
    "eval_g",
    "eval_grad_g",
    "pair_energy",
    "pair_gradient_sums",
    "potential_of_density",
    "quadrature_potential",
    "fractional_laplacian_apply",
    "convolve_grid",
    "as_points",
    "fold",
]
