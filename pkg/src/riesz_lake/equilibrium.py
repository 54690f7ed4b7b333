"""Background/equilibrium measures, confinements and the ζ function.

``ζ = h^μ + V - c`` vanishes on the support of an equilibrium measure and is
nonnegative elsewhere.  Supports are declared by the registered cases, never
detected.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

from . import spectral
from .errors import DomainError, UnsupportedError
from .kernels import Kernel, as_points, potential_of_density
from .spectral import GridField

log = logging.getLogger(__name__)

ROBIN_SAMPLES = 32


# -- supports ----------------------------------------------------------------

@dataclass(frozen=True)
class Interval:
    a: float
    b: float
    d: int = 1

    @property
    def diameter(self):
        return self.b - self.a

    @property
    def center(self):
        return np.array([(self.a + self.b) / 2])

    @property
    def radius(self):
        return (self.b - self.a) / 2

    def bounds_1d(self):
        return self.a, self.b

    def contains(self, pts, margin=0.0):
        x = as_points(pts, 1)[..., 0]
        return (x >= self.a + margin) & (x <= self.b - margin)

    def distance(self, pts):
        """Distance to the interval (zero inside)."""
        x = as_points(pts, 1)[..., 0]
        return np.maximum(np.maximum(self.a - x, x - self.b), 0.0)

    def interior_samples(self, n, shrink=0.9):
        c, r = (self.a + self.b) / 2, shrink * self.radius
        return np.linspace(c - r, c + r, n)[:, None]

    def describe(self):
        return {"kind": "interval", "a": self.a, "b": self.b}


@dataclass(frozen=True)
class Ball:
    radius: float
    d: int
    center: tuple = None

    def __post_init__(self):
        if self.center is None:
            object.__setattr__(self, "center", (0.0,) * self.d)

    @property
    def diameter(self):
        return 2 * self.radius

    def bounds_1d(self):
        c = self.center[0]
        return c - self.radius, c + self.radius

    def _r(self, pts):
        x = as_points(pts, self.d)
        return np.sqrt(np.sum((x - np.asarray(self.center)) ** 2, axis=-1))

    def contains(self, pts, margin=0.0):
        return self._r(pts) <= self.radius - margin

    def distance(self, pts):
        return np.maximum(self._r(pts) - self.radius, 0.0)

    def interior_samples(self, n, shrink=0.9):
        """Deterministic points spread over the ball of radius ``shrink·R``."""
        if self.d == 1:
            return Interval(self.center[0] - self.radius, self.center[0] + self.radius).interior_samples(n, shrink)
        idx = np.arange(n) + 0.5
        rad = shrink * self.radius * (idx / n) ** (1.0 / self.d)
        if self.d == 2:
            th = np.pi * (1 + 5 ** 0.5) * idx
            pts = np.stack([rad * np.cos(th), rad * np.sin(th)], axis=1)
        else:
            z = 1 - 2 * idx / n
            th = np.pi * (1 + 5 ** 0.5) * idx
            rr = np.sqrt(1 - z * z)
            pts = np.stack([rr * np.cos(th), rr * np.sin(th), z], axis=1) * rad[:, None]
        return pts + np.asarray(self.center)

    def describe(self):
        return {"kind": "ball", "radius": self.radius, "center": list(self.center)}


@dataclass(frozen=True)
class FullTorus:
    L: float
    d: int

    @property
    def diameter(self):
        return self.L * math.sqrt(self.d)

    def contains(self, pts, margin=0.0):
        x = as_points(pts, self.d)
        return np.ones(x.shape[:-1], dtype=bool)

    def distance(self, pts):
        x = as_points(pts, self.d)
        return np.zeros(x.shape[:-1])

    def interior_samples(self, n, shrink=1.0):
        idx = (np.arange(n) + 0.5) / n
        pts = [idx * self.L]
        for j in range(1, self.d):
            pts.append(((idx * (j * 0.7548776662466927 + 0.5698402909980532 * j * j)) % 1.0) * self.L)
        return np.stack(pts, axis=1)

    def describe(self):
        return {"kind": "torus", "L": self.L}


# -- confinement -------------------------------------------------------------

@dataclass(frozen=True)
class Confinement:
    """External potential ``V`` with analytic gradient.

    ``kind`` is one of ``quadratic`` (``a|x|^2``), ``zero``, ``radial_polynomial``
    (``Σ c_p |x|^p`` with ``coeffs[p] = c_p``) or ``custom``.
    """

    kind: str
    a: float = 1.0
    coeffs: tuple = ()
    value_fn: Callable | None = field(default=None, compare=False, repr=False)
    grad_fn: Callable | None = field(default=None, compare=False, repr=False)

    @classmethod
    def quadratic(cls, a=1.0):
        return cls("quadratic", a=float(a))

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def radial_polynomial(cls, coeffs):
        return cls("radial_polynomial", coeffs=tuple(float(c) for c in coeffs))

    @classmethod
    def custom(cls, value_fn, grad_fn):
        return cls("custom", value_fn=value_fn, grad_fn=grad_fn)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "quadratic":
            return self.a * np.sum(x * x, axis=-1)
        if self.kind == "zero":
            return np.zeros(x.shape[:-1])
        if self.kind == "radial_polynomial":
            r = np.sqrt(np.sum(x * x, axis=-1))
            return sum(c * r ** p for p, c in enumerate(self.coeffs))
        return np.asarray(self.value_fn(x), dtype=float)

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "quadratic":
            return 2 * self.a * x
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "radial_polynomial":
            r = np.sqrt(np.sum(x * x, axis=-1))
            rs = np.where(r == 0, 1.0, r)
            dv = sum(p * c * rs ** (p - 2) for p, c in enumerate(self.coeffs) if p > 0)
            if len(self.coeffs) > 1 and self.coeffs[1] != 0:
                dv = np.where(r == 0, 0.0, dv)
            return x * np.asarray(dv)[..., None]
        return np.asarray(self.grad_fn(x), dtype=float)

    def to_config(self):
        if self.kind == "quadratic":
            return {"kind": "quadratic", "a": self.a}
        if self.kind == "radial_polynomial":
            return {"kind": "radial_polynomial", "coeffs": list(self.coeffs)}
        return {"kind": self.kind}

    @classmethod
    def from_config(cls, cfg):
        kind = cfg.get("kind", "quadratic")
        if kind == "quadratic":
            return cls.quadratic(cfg.get("a", 1.0))
        if kind == "zero":
            return cls.zero()
        if kind == "radial_polynomial":
            return cls.radial_polynomial(cfg["coeffs"])
        raise UnsupportedError(f"confinement kind {kind!r} cannot be built from a config")


# -- background densities ----------------------------------------------------

@dataclass(eq=False)
class BackgroundDensity:
    """A background measure μ on whole space or on the torus.

    Whole-space measures carry a pointwise ``pdf`` and optionally a
    ``radial_pdf``; torus measures are either uniform or gridded.  Registered
    closed forms for ``h^μ``, ``∇h^μ`` and ``∬ g dμ dμ`` are looked up by kernel.
    """

    name: str
    support: object
    d: int
    sup_norm: float
    pdf: Callable | None = None
    radial_pdf: Callable | None = None
    grid: GridField | None = None
    robin_constant: float | None = None
    total_mass: float = 1.0
    signed: bool = False
    assumptions: tuple = ()
    closed_forms: dict = field(default_factory=dict, repr=False)
    fourier_fn: Callable | None = field(default=None, repr=False)
    robin_cache: dict = field(default_factory=dict, repr=False)

    @property
    def on_torus(self) -> bool:
        return isinstance(self.support, FullTorus)

    def density(self, pts):
        pts = as_points(pts, self.d)
        if self.grid is not None:
            flat = pts.reshape(-1, self.d)
            return spectral.interpolate(self.grid, flat).reshape(pts.shape[:-1])
        return self.pdf(pts)

    def pdf1(self, y):
        return float(self.pdf(np.array([[y]]))[0])

    # -- closed forms ------------------------------------------------------
    def _key(self, kernel):
        return (kernel.family, kernel.d, None if kernel.family in ("log", "oned_coulomb") else kernel.s)

    def closed_potential(self, kernel):
        if self.on_torus and self.grid is None and kernel.periodic:
            return lambda pts: np.zeros(as_points(pts, kernel.d).reshape(-1, kernel.d).shape[0])
        forms = self.closed_forms.get(self._key(kernel))
        return None if forms is None else forms.get("h")

    def closed_potential_grad(self, kernel):
        if self.on_torus and self.grid is None and kernel.periodic:
            return lambda pts: np.zeros_like(as_points(pts, kernel.d).reshape(-1, kernel.d))
        forms = self.closed_forms.get(self._key(kernel))
        return None if forms is None else forms.get("grad_h")

    def self_energy(self, kernel):
        """``∬ g(x - y) dμ(x) dμ(y)``."""
        if self.on_torus:
            if self.grid is None:
                return 0.0
            return _grid_self_energy(kernel, self.grid.values, self.grid.L, self.d)
        forms = self.closed_forms.get(self._key(kernel))
        if forms is not None and "energy" in forms:
            return forms["energy"]
        return self._quadrature_self_energy(kernel)

    def _quadrature_self_energy(self, kernel):
        cache = self.closed_forms.setdefault(("quad_energy",) + self._key(kernel), {})
        if "energy" in cache:
            return cache["energy"]
        if self.d == 1:
            a, b = self.support.bounds_1d()
            f = lambda y: potential_of_density(kernel, self, [[y]])[0] * self.pdf1(y)
            val, _ = integrate.quad(f, a, b, epsabs=1e-10, epsrel=1e-10, limit=200)
        elif self.radial_pdf is not None:
            R = self.support.radius
            area = 2 * np.pi if self.d == 2 else 4 * np.pi
            f = lambda r: potential_of_density(kernel, self, [[r] + [0.0] * (self.d - 1)])[0] * self.radial_pdf(r) * area * r ** (self.d - 1)
            val, _ = integrate.quad(f, 0, R, epsabs=1e-9, epsrel=1e-9, limit=100)
        else:
            raise UnsupportedError("self-energy quadrature needs a 1D or radial density")
        cache["energy"] = val
        return val

    def spectral_potential(self, kernel, pts):
        if self.grid is None:
            return np.zeros(as_points(pts, self.d).reshape(-1, self.d).shape[0])
        h = _grid_convolve(kernel, self.grid.values, self.grid.L, self.d)
        return spectral.interpolate(self.grid.with_values(h), as_points(pts, self.d).reshape(-1, self.d))

    def fourier(self, k):
        """``μ̂(k) = ∫ exp(-i k·x) dμ(x)`` at physical wavevectors ``k`` (M, d)."""
        k = np.atleast_2d(np.asarray(k, dtype=float))
        if self.grid is not None:
            L = self.grid.L
            m = np.rint(k * L / (2 * np.pi)).astype(int)
            return L ** self.d * spectral.mode_coefficients(self.grid.values, self.d, m)
        if self.fourier_fn is None:
            raise UnsupportedError(f"no Fourier transform registered for {self.name}")
        return self.fourier_fn(k)

    def describe(self):
        return {"name": self.name, "support": self.support.describe(), "robin_constant": self.robin_constant}


def _grid_convolve(kernel, values, L, d):
    mult = kernel.multiplier_grid(values.shape[-1])
    return spectral.ifft(spectral.fft(values, d) * mult, d)


def _grid_self_energy(kernel, values, L, d):
    n = values.shape[-1]
    c = spectral.fft(values, d) / n ** d
    mult = kernel.multiplier_grid(n)
    return float(L ** d * np.sum(mult * np.abs(c) ** 2))


def _radial_input(pts, d):
    x = as_points(pts, d)
    return np.sqrt(np.sum(x * x, axis=-1)), x


def uniform_interval(R=1.0, name=None) -> BackgroundDensity:
    """Uniform probability density ``1/(2R)`` on ``[-R, R]``."""
    rho = 1.0 / (2 * R)

    def pdf(pts):
        x = as_points(pts, 1)[..., 0]
        return np.where(np.abs(x) <= R, rho, 0.0)

    def riesz_forms(s):
        def h(pts):
            x = as_points(pts, 1)[..., 0]
            ax = np.abs(x)
            inside = (np.abs(R + x) ** (1 - s) + np.abs(R - x) ** (1 - s)) / (1 - s)
            outside = ((ax + R) ** (1 - s) - np.abs(ax - R) ** (1 - s)) / (1 - s)
            return rho * np.where(ax <= R, inside, outside) / s

        def grad_h(pts):
            x = as_points(pts, 1)[..., 0]
            ax = np.abs(x)
            sg = np.sign(x)
            inside = np.abs(R + x) ** (-s) - np.abs(R - x) ** (-s)
            outside = sg * ((ax + R) ** (-s) - np.abs(ax - R) ** (-s))
            return (rho * np.where(ax <= R, inside, outside) / s)[..., None]

        energy = (2 * R) ** (-s) * 2.0 / (s * (1 - s) * (2 - s))
        return {"h": h, "grad_h": grad_h, "energy": energy}

    def log_forms():
        def F(t):
            t = np.abs(t)
            return np.where(t > 0, t * np.log(np.where(t > 0, t, 1.0)) - t, 0.0)

        def h(pts):
            x = as_points(pts, 1)[..., 0]
            return -rho * (np.sign(x + R) * F(x + R) - np.sign(x - R) * F(x - R))

        def grad_h(pts):
            x = as_points(pts, 1)[..., 0]
            return (-rho * (np.log(np.abs(x + R)) - np.log(np.abs(x - R))))[..., None]

        energy = 1.5 - math.log(2 * R)
        return {"h": h, "grad_h": grad_h, "energy": energy}

    forms = {("log", 1, None): log_forms()}
    for s in (-1.0, -0.5, 0.5):
        forms[("riesz", 1, s)] = riesz_forms(s)
    coul = riesz_forms(-1.0)
    forms[("oned_coulomb", 1, None)] = {
        "h": lambda pts: 2 * coul["h"](pts),
        "grad_h": lambda pts: 2 * coul["grad_h"](pts),
        "energy": 2 * coul["energy"],
    }

    def fourier(k):
        kr = np.asarray(k)[:, 0] * R
        return np.sinc(kr / np.pi).astype(complex)

    return BackgroundDensity(
        name=name or f"uniform_interval(R={R})",
        support=Interval(-R, R),
        d=1,
        sup_norm=rho,
        pdf=pdf,
        radial_pdf=lambda r: rho if r <= R else 0.0,
        closed_forms=forms,
        fourier_fn=fourier,
    )


def uniform_ball(R, d, name=None) -> BackgroundDensity:
    """Uniform probability density on the centered ball of radius ``R``."""
    if d == 1:
        return uniform_interval(R, name)
    vol = np.pi ** (d / 2) * R ** d / special.gamma(d / 2 + 1)
    rho = 1.0 / vol

    def pdf(pts):
        r, _ = _radial_input(pts, d)
        return np.where(r <= R, rho, 0.0)

    forms = {}
    if d == 2:
        def h_log(pts):
            r, _ = _radial_input(pts, 2)
            rs = np.where(r > 0, r, 1.0)
            return np.where(r <= R, -math.log(R) + (R * R - r * r) / (2 * R * R), -np.log(rs))

        def gh_log(pts):
            r, x = _radial_input(pts, 2)
            rs = np.where(r > 0, r, 1.0)
            fac = np.where(r <= R, -1.0 / (R * R), -1.0 / rs ** 2)
            return x * fac[..., None]

        forms[("log", 2, None)] = {"h": h_log, "grad_h": gh_log, "energy": -math.log(R) + 0.25}

        def h_s1(pts):
            r, _ = _radial_input(pts, 2)
            inside = 4 * R * special.ellipe(np.minimum(r / R, 1.0) ** 2)
            ro = np.where(r > R, r, 2 * R)
            q = R / ro
            outside = 4 * ro * (special.ellipe(q * q) - (1 - q * q) * special.ellipk(q * q))
            return rho * np.where(r <= R, inside, outside)

        forms[("riesz", 2, 1.0)] = {"h": h_s1, "energy": 16.0 / (3 * np.pi * R)}
    if d == 3:
        def h_c(pts):
            r, _ = _radial_input(pts, 3)
            rs = np.where(r > 0, r, 1.0)
            return np.where(r <= R, (3 * R * R - r * r) / (2 * R ** 3), 1.0 / rs)

        def gh_c(pts):
            r, x = _radial_input(pts, 3)
            rs = np.where(r > 0, r, 1.0)
            fac = np.where(r <= R, -1.0 / R ** 3, -1.0 / rs ** 3)
            return x * fac[..., None]

        forms[("riesz", 3, 1.0)] = {"h": h_c, "grad_h": gh_c, "energy": 6.0 / (5 * R)}

    def fourier(k):
        kr = np.sqrt(np.sum(np.asarray(k) ** 2, axis=-1)) * R
        out = np.ones_like(kr)
        nz = kr > 1e-8
        if d == 2:
            out[nz] = 2 * special.j1(kr[nz]) / kr[nz]
        elif d == 3:
            z = kr[nz]
            out[nz] = 3 * (np.sin(z) - z * np.cos(z)) / z ** 3
        else:
            raise UnsupportedError("ball Fourier transform only for d <= 3")
        return out.astype(complex)

    return BackgroundDensity(
        name=name or f"uniform_ball(R={R}, d={d})",
        support=Ball(R, d),
        d=d,
        sup_norm=rho,
        pdf=pdf,
        radial_pdf=lambda r: rho if r <= R else 0.0,
        closed_forms=forms,
        fourier_fn=fourier,
    )


def torus_uniform(d, L=1.0) -> BackgroundDensity:
    rho = 1.0 / L ** d

    def pdf(pts):
        x = as_points(pts, d)
        return np.full(x.shape[:-1], rho)

    def fourier(k):
        kk = np.sqrt(np.sum(np.asarray(k) ** 2, axis=-1))
        return np.where(kk == 0, 1.0, 0.0).astype(complex)

    return BackgroundDensity(
        name=f"torus_uniform(d={d}, L={L:g})",
        support=FullTorus(L, d),
        d=d,
        sup_norm=rho,
        pdf=pdf,
        robin_constant=0.0,
        fourier_fn=fourier,
    )


def torus_density(field: GridField, name="torus_grid", normalize=True) -> BackgroundDensity:
    """Gridded density on the torus; rescaled to unit mass unless told otherwise."""
    values = np.asarray(field.values, dtype=float)
    mass = float(values.sum() * field.cell_volume)
    if normalize:
        values = values / mass
        mass = 1.0
    grid = field.with_values(values)
    return BackgroundDensity(
        name=name,
        support=FullTorus(field.L, field.d),
        d=field.d,
        sup_norm=float(np.max(np.abs(values))),
        grid=grid,
        total_mass=mass,
        signed=bool(np.any(values < 0)),
    )


CLOSED_FORM_CASES = ("oned_coulomb_quadratic", "twod_coulomb_quadratic", "threed_coulomb_quadratic", "torus_uniform")


@dataclass
class EquilibriumCase:
    case_id: str
    mu: BackgroundDensity
    kernel: Kernel
    V: Confinement


def closed_form_equilibrium(case_id: str, L=1.0) -> BackgroundDensity:
    """Registered equilibrium measures with support and Robin constant set."""
    return equilibrium_case(case_id, L=L).mu


def equilibrium_case(case_id: str, L=1.0, d=2) -> EquilibriumCase:
    hyp = ("(H3) every boundary point of the support is a regular free-boundary point (assumed)",)
    if case_id == "oned_coulomb_quadratic":
        mu = uniform_interval(1.0, name=case_id)
        mu.robin_constant = -1.0
        mu.assumptions = hyp
        return EquilibriumCase(case_id, mu, Kernel.oned_coulomb(), Confinement.quadratic(1.0))
    if case_id == "twod_coulomb_quadratic":
        R = 1 / math.sqrt(2)
        mu = uniform_ball(R, 2, name=case_id)
        mu.robin_constant = 0.5 * (1 + math.log(2))
        mu.assumptions = hyp
        return EquilibriumCase(case_id, mu, Kernel.log(2), Confinement.quadratic(1.0))
    if case_id == "threed_coulomb_quadratic":
        R = 2 ** (-1 / 3)
        mu = uniform_ball(R, 3, name=case_id)
        mu.robin_constant = 1.5 / R
        mu.assumptions = hyp
        return EquilibriumCase(case_id, mu, Kernel.riesz(1.0, 3), Confinement.quadratic(1.0))
    if case_id == "torus_uniform":
        mu = torus_uniform(d, L)
        return EquilibriumCase(case_id, mu, Kernel.torus_riesz(d - 2, d, L=L), Confinement.zero())
    raise UnsupportedError(f"unknown equilibrium case {case_id!r}; known: {', '.join(CLOSED_FORM_CASES)}")


# -- ζ and Robin constant ----------------------------------------------------

def _robin_key(kernel, V):
    return (kernel, V)


def estimate_robin_constant(V, mu, kernel, n=ROBIN_SAMPLES):
    """Mean and spread of ``h^μ + V`` over interior sample points."""
    pts = mu.support.interior_samples(n)
    vals = potential_of_density(kernel, mu, pts) + V.value(pts)
    return float(np.mean(vals)), float(np.max(vals) - np.min(vals))


def robin_constant(V, mu, kernel, tol=1e-6):
    if mu.robin_constant is not None:
        return mu.robin_constant
    key = _robin_key(kernel, V)
    if key not in mu.robin_cache:
        c, spread = estimate_robin_constant(V, mu, kernel)
        if spread >= 10 * tol:
            log.warning("h+V is not constant on the support of %s (spread %.3e)", mu.name, spread)
        mu.robin_cache[key] = c
    return mu.robin_cache[key]


def zeta(V: Confinement, mu: BackgroundDensity, kernel: Kernel, x):
    """``ζ(x) = h^μ(x) + V(x) - c``; returns a float for a single point."""
    pts = as_points(x, kernel.d)
    flat = pts.reshape(-1, kernel.d)
    c = robin_constant(V, mu, kernel)
    out = potential_of_density(kernel, mu, flat) + V.value(flat) - c
    out = out.reshape(pts.shape[:-1])
    return float(out) if out.ndim == 0 else out


def grad_zeta(V, mu, kernel, x, h=1e-6):
    pts = as_points(x, kernel.d).reshape(-1, kernel.d)
    gh = mu.closed_potential_grad(kernel)
    if gh is not None:
        return gh(pts) + V.grad(pts)
    out = np.zeros_like(pts)
    for a in range(kernel.d):
        e = np.zeros(kernel.d)
        e[a] = h
        out[:, a] = (potential_of_density(kernel, mu, pts + e) - potential_of_density(kernel, mu, pts - e)) / (2 * h)
    return out + V.grad(pts)


@dataclass
class FrostmanReport:
    case: str
    c: float
    max_abs_zeta_on_support: float
    min_zeta_off_support: float
    passed: bool
    n_points: int
    robin_spread: float = 0.0

    def to_dict(self):
        return {
            "case": self.case,
            "c": self.c,
            "max_abs_zeta_on_support": self.max_abs_zeta_on_support,
            "min_zeta_off_support": self.min_zeta_off_support,
            "pass": self.passed,
        }

    def to_json(self):
        return json.dumps(self.to_dict())


def frostman_grid(mu, n_points=1000, collar=None):
    """Deterministic sample grid over the support and a surrounding collar."""
    sup = mu.support
    d = mu.d
    if isinstance(sup, FullTorus):
        m = int(math.ceil(n_points ** (1 / d)))
        x = (np.arange(m) + 0.5) * sup.L / m
        return np.stack(np.meshgrid(*([x] * d), indexing="ij"), axis=-1).reshape(-1, d)
    collar = sup.diameter if collar is None else collar
    if d == 1:
        a, b = sup.bounds_1d()
        return np.linspace(a - collar, b + collar, n_points)[:, None]
    half = sup.radius + collar
    m = int(math.ceil(n_points ** (1 / d)))
    if m % 2 == 0:
        m += 1
    x = np.linspace(-half, half, m)
    pts = np.stack(np.meshgrid(*([x] * d), indexing="ij"), axis=-1).reshape(-1, d)
    return pts + np.asarray(sup.center)


def verify_frostman(V, mu, kernel, tol=1e-6, n_points=1000, case=None) -> FrostmanReport:
    """Check ``ζ = 0`` on the support and ``ζ ≥ 0`` off it; never raises on failure."""
    spread = 0.0
    if mu.robin_constant is not None:
        c = mu.robin_constant
    else:
        c, spread = estimate_robin_constant(V, mu, kernel)
    pts = frostman_grid(mu, n_points)
    z = potential_of_density(kernel, mu, pts) + V.value(pts) - c
    on = mu.support.contains(pts)
    on_vals = z[on]
    off_vals = z[~on]
    max_on = float(np.max(np.abs(on_vals))) if on_vals.size else 0.0
    min_off = float(np.min(off_vals)) if off_vals.size else 0.0
    passed = max_on <= tol and min_off >= -tol
    return FrostmanReport(case or mu.name, float(c), max_on, min_off, bool(passed), int(pts.shape[0]), spread)


# -- no-flux inequality --------------------------------------------------------

@dataclass
class VectorFieldFn:
    """Closed-form vector field with its Jacobian (``jac[..., a, b] = ∂_b v_a``)."""

    value: Callable
    jacobian: Callable

    def w1inf(self, pts):
        v = np.asarray(self.value(pts))
        J = np.asarray(self.jacobian(pts))
        sup_v = np.max(np.sqrt(np.sum(v * v, axis=-1)))
        sup_J = np.max(np.sqrt(np.sum(J * J, axis=(-2, -1))))
        return float(sup_v + sup_J)


def noflux_inequality_ratio(v: VectorFieldFn, V, mu, kernel, grid, norm_points=None):
    """Empirical constant of ``|v·∇ζ| ≤ C ||v||_{W^{1,∞}} ζ`` over an off-support grid."""
    pts = as_points(grid, kernel.d).reshape(-1, kernel.d)
    z = np.asarray(zeta(V, mu, kernel, pts)).reshape(-1)
    if np.any(z <= 0):
        bad = pts[np.argmin(z)]
        raise DomainError(f"ζ <= 0 at {bad}: the grid invades the support")
    vals = np.asarray(v.value(pts)).reshape(-1, kernel.d)
    if not np.any(vals):
        return 0.0
    if norm_points is None:
        norm_points = np.concatenate([pts, frostman_grid(mu, 400)])
    norm = v.w1inf(as_points(norm_points, kernel.d).reshape(-1, kernel.d))
    gz = grad_zeta(V, mu, kernel, pts)
    ratio = np.abs(np.sum(vals * gz, axis=-1)) / (norm * z)
    return float(np.max(ratio))


def noflux_growth_exponent(v, V, mu, kernel, levels=range(2, 9), direction=None):
    """Fit ``ratio ~ dist^p`` on dyadic shells approaching the support boundary.

    Returns the fitted exponent ``p``: about ``-1`` when ``v`` has flux through
    the boundary, about ``0`` when the no-flux condition holds.
    """
    sup = mu.support
    d = kernel.d
    direction = np.eye(d)[0] if direction is None else np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    edge = np.asarray(sup.center) + sup.radius * direction
    dists, ratios = [], []
    for j in levels:
        dist = 2.0 ** (-j)
        shell = (edge + dist * direction)[None, :]
        ratios.append(noflux_inequality_ratio(v, V, mu, kernel, shell, norm_points=frostman_grid(mu, 400)))
        dists.append(dist)
    slope, _ = np.polyfit(np.log(dists), np.log(ratios), 1)
    return float(slope)
