"""Pseudo-spectral solver for the lake equation on the periodic torus.

    ∂_t u + γu + (u·∇)u = -∇p,     div(μ_V u) = 0

With uniform ``μ_V`` this is incompressible Euler with linear friction, which
is advanced in vorticity form.  Variable ``μ_V`` is handled by projecting
every Runge-Kutta stage onto the weighted constraint through the pressure.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from . import spectral
from .equilibrium import BackgroundDensity, torus_uniform
from .errors import GridMismatchError, PreconditionError, SimulationError, SolverError, StabilityError
from .modulated_energy import forcing, kernel_convolve
from .spectral import GridField

CFL_LIMIT = 0.5
PRESSURE_RTOL = 1e-10


@dataclass(frozen=True)
class VelocityField:
    """A lake-equation state: velocity, its time derivative and the pressure."""

    u: GridField
    dtu: GridField
    p: GridField
    mu_V: BackgroundDensity
    gamma: float = 0.0
    t: float = 0.0

    @classmethod
    def from_u(cls, u: GridField, mu_V: BackgroundDensity | None = None, gamma=0.0, t=0.0):
        """Complete ``u`` with the pressure and ``∂_t u`` implied by the equation."""
        if not u.is_vector:
            raise GridMismatchError("velocity must be a vector field")
        mu_V = torus_uniform(u.d, u.L) if mu_V is None else mu_V
        p = pressure_solve(mu_V, u)
        dtu = _dtu(u, p, gamma)
        return cls(u, dtu, p, mu_V, float(gamma), float(t))

    @property
    def d(self):
        return self.u.d

    @property
    def n(self):
        return self.u.n

    @property
    def L(self):
        return self.u.L

    def __call__(self, pts):
        """Interpolated velocity at points ``(P, d)``."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return spectral.interpolate(self.u, pts).T

    def vorticity(self):
        if self.d != 2:
            raise PreconditionError("vorticity is defined here for d = 2")
        return _curl(self.u.values, self.L)

    def energy(self):
        return spectral.grid_inner(self.u.values, self.u.values, self.L, self.d)

    def enstrophy(self):
        w = self.vorticity()
        return spectral.grid_inner(w, w, self.L, self.d)

    def grad_sup(self):
        J = spectral.jacobian(self.u.values, self.L, self.d)
        return float(np.max(np.sqrt(np.sum(J * J, axis=(0, 1)))))


def _mu_grid(mu_V, like: GridField):
    if not mu_V.on_torus:
        raise PreconditionError("the lake solver runs on the torus")
    if mu_V.grid is None:
        return None
    if not mu_V.grid.compatible(GridField(like.values[0] if like.is_vector else like.values, like.L, like.d)):
        raise GridMismatchError("background density and velocity live on different grids")
    return mu_V.grid.values


def _dtu(u: GridField, p: GridField, gamma):
    adv = spectral.advect(u.values, u.L, u.d)
    gp = spectral.gradient(p.values, u.L, u.d)
    return u.with_values(-gamma * u.values - adv - gp)


def _curl(u, L):
    gx = spectral.gradient(u[1], L, 2)
    gy = spectral.gradient(u[0], L, 2)
    return gx[0] - gy[1]


# -- pressure ------------------------------------------------------------------

def _velocity_values(u):
    if isinstance(u, VelocityField):
        return u.u
    return u


def pressure_solve(mu_V: BackgroundDensity, u, rtol=PRESSURE_RTOL, maxiter=500) -> GridField:
    """Zero-mean ``p`` solving ``-div(μ_V ∇p) = div(μ_V (u·∇)u)``.

    Uniform ``μ_V`` is inverted directly; otherwise preconditioned conjugate
    gradients run with the constant-coefficient inverse as preconditioner.

    Raises
    ------
    SolverError
        If CG misses ``rtol`` within ``maxiter`` iterations.
    """
    u = _velocity_values(u)
    adv = spectral.advect(u.values, u.L, u.d)
    mu = _mu_grid(mu_V, u)
    if mu is None:
        rhs = spectral.divergence(adv, u.L, u.d)
        return GridField(_inverse_laplacian(rhs, u.L, u.d), u.L, u.d)
    rhs = spectral.divergence(mu * adv, u.L, u.d)
    return GridField(_weighted_solve(mu, rhs, u.L, u.d, rtol, maxiter), u.L, u.d)


def _inverse_laplacian(f, L, d):
    """``(-Δ)^{-1} f`` with the zero mode removed."""
    n = f.shape[-1]
    k = spectral.wavevectors(n, L, d)
    k2 = np.sum(k * k, axis=0)
    fh = spectral.fft(f, d)
    out = np.zeros_like(fh)
    nz = k2 > 0
    out[nz] = fh[nz] / k2[nz]
    return spectral.ifft(out, d)


def weighted_operator(mu, p, L, d):
    """``-div(μ ∇p)`` on the grid."""
    return -spectral.divergence(mu * spectral.gradient(p, L, d), L, d)


def _weighted_solve(mu, rhs, L, d, rtol, maxiter):
    shape = rhs.shape
    size = rhs.size
    mbar = float(np.mean(mu))
    rhs = rhs - rhs.mean()

    def matvec(x):
        return weighted_operator(mu, x.reshape(shape), L, d).ravel()

    def precond(x):
        return _inverse_laplacian(x.reshape(shape), L, d).ravel() / mbar

    A = LinearOperator((size, size), matvec=matvec, dtype=float)
    M = LinearOperator((size, size), matvec=precond, dtype=float)
    x, info = cg(A, rhs.ravel(), rtol=rtol, atol=0.0, maxiter=maxiter, M=M)
    x = x.reshape(shape)
    scale = np.linalg.norm(rhs)
    res = np.linalg.norm(weighted_operator(mu, x, L, d) - rhs) / scale if scale > 0 else 0.0
    if info != 0 or res > 10 * rtol:
        raise SolverError(f"pressure solve did not converge (relative residual {res:.3e})", residual=res)
    return x - x.mean()


def weighted_projection(mu_V, u: GridField) -> GridField:
    """Remove the gradient part so that ``div(μ_V u) = 0``."""
    mu = _mu_grid(mu_V, u)
    if mu is None:
        q = -_inverse_laplacian(spectral.divergence(u.values, u.L, u.d), u.L, u.d)
    else:
        q = -_weighted_solve(mu, spectral.divergence(mu * u.values, u.L, u.d), u.L, u.d, PRESSURE_RTOL, 500)
    return u.with_values(u.values - spectral.gradient(q, u.L, u.d))


# -- residuals -----------------------------------------------------------------

def lake_residual(field: VelocityField) -> dict:
    """Grid L² norms of the momentum equation and of ``div(μ_V u)``."""
    u, L, d = field.u, field.L, field.d
    adv = spectral.advect(u.values, L, d)
    gp = spectral.gradient(field.p.values, L, d)
    mom = field.dtu.values + field.gamma * u.values + adv + gp
    mu = _mu_grid(field.mu_V, u)
    flux = u.values if mu is None else mu * u.values
    div = spectral.divergence(flux, L, d)
    return {"momentum_residual": spectral.grid_l2(mom, L, d), "constraint_residual": spectral.grid_l2(div, L, d)}


def verify_corrector_identity(field: VelocityField, corrector_field: GridField, kernel) -> float:
    """Relative L² residual of ``∇h^𝔘 + (∂_t u + γu + u·∇u)``.

    Zero when the forcing vanishes.  Equals the relative size of the forcing's
    divergence-free part when ``𝔘`` comes from :func:`corrector`.
    """
    w = forcing(field.u, field.dtu, field.gamma)
    norm = spectral.grid_l2(w.values, w.L, w.d)
    if norm == 0:
        return 0.0
    h = kernel_convolve(kernel, corrector_field)
    r = spectral.gradient(h.values, w.L, w.d) + w.values
    return spectral.grid_l2(r, w.L, w.d) / norm


def helmholtz(v: GridField):
    """Split a vector field into gradient and divergence-free parts (means go to the latter)."""
    phi = -_inverse_laplacian(spectral.divergence(v.values, v.L, v.d), v.L, v.d)
    grad = spectral.gradient(phi, v.L, v.d)
    return v.with_values(grad), v.with_values(v.values - grad)


# -- time stepping ---------------------------------------------------------------

def check_cfl(field: VelocityField, dt):
    umax = float(np.max(np.sqrt(np.sum(field.u.values ** 2, axis=0))))
    c = umax * dt * field.n / field.L
    if c > CFL_LIMIT:
        raise StabilityError(f"CFL number {c:.3f} exceeds {CFL_LIMIT}")
    return c


def _biot_savart(w_hat, k, k2):
    psi = np.zeros_like(w_hat)
    nz = k2 > 0
    psi[nz] = w_hat[nz] / k2[nz]
    return np.array([spectral.ifft(1j * k[1] * psi, 2), spectral.ifft(-1j * k[0] * psi, 2)])


def euler_step_2d(field: VelocityField, dt: float) -> VelocityField:
    """One integrating-factor RK4 step of the 2D vorticity equation.

    ``∂_t ω + u·∇ω = -γω`` with the friction absorbed exactly, nonlinear terms
    dealiased by the 2/3 rule and ``u`` recovered through Biot-Savart plus the
    (exponentially damped) mean flow.
    """
    if field.d != 2:
        raise PreconditionError("euler_step_2d needs d = 2")
    if field.mu_V.grid is not None:
        raise PreconditionError("euler_step_2d needs a uniform background; use lake_step")
    check_cfl(field, dt)
    n, L, g = field.n, field.L, field.gamma
    k = spectral.wavevectors(n, L, 2) * spectral.nyquist_mask(n, 2)
    k2 = np.sum(k * k, axis=0)
    keep = spectral.dealias_mask(n, 2)
    mean0 = field.u.values.mean(axis=(1, 2))

    def velocity(w_hat, tau):
        return _biot_savart(w_hat, k, k2) + (mean0 * math.exp(-g * tau))[:, None, None]

    def nonlinear(w_hat, tau):
        u = velocity(w_hat, tau)
        wx = spectral.ifft(1j * k[0] * w_hat, 2)
        wy = spectral.ifft(1j * k[1] * w_hat, 2)
        return -spectral.fft(u[0] * wx + u[1] * wy, 2) * keep

    w0 = spectral.fft(field.vorticity(), 2) * keep
    e_half, e_full = math.exp(-g * dt / 2), math.exp(-g * dt)
    k1 = nonlinear(w0, 0.0)
    k2_ = nonlinear(e_half * (w0 + dt / 2 * k1), dt / 2)
    k3 = nonlinear(e_half * w0 + dt / 2 * k2_, dt / 2)
    k4 = nonlinear(e_full * w0 + dt * e_half * k3, dt)
    w1 = e_full * w0 + dt / 6 * (e_full * k1 + 2 * e_half * (k2_ + k3) + k4)
    u1 = field.u.with_values(velocity(w1, dt))
    p1 = pressure_solve(field.mu_V, u1)
    return replace(field, u=u1, dtu=_dtu(u1, p1, g), p=p1, t=field.t + dt)


def lake_step(field: VelocityField, dt: float) -> VelocityField:
    """RK4 step of the velocity form with the weighted projection inside every stage."""
    check_cfl(field, dt)
    mu_V, g = field.mu_V, field.gamma

    def rhs(u):
        uf = field.u.with_values(u)
        p = pressure_solve(mu_V, uf)
        return _dtu(uf, p, g).values

    u0 = field.u.values
    a1 = rhs(u0)
    a2 = rhs(u0 + dt / 2 * a1)
    a3 = rhs(u0 + dt / 2 * a2)
    a4 = rhs(u0 + dt * a3)
    u1 = weighted_projection(mu_V, field.u.with_values(u0 + dt / 6 * (a1 + 2 * a2 + 2 * a3 + a4)))
    p1 = pressure_solve(mu_V, u1)
    return replace(field, u=u1, dtu=_dtu(u1, p1, g), p=p1, t=field.t + dt)


def evolve(field: VelocityField, T: float, dt: float, growth_limit=10.0, callback=None) -> VelocityField:
    """Step to time ``field.t + T``; aborts if ``‖∇u‖_∞`` grows past ``growth_limit`` times its start."""
    stepper = euler_step_2d if field.d == 2 and field.mu_V.grid is None else lake_step
    g0 = field.grad_sup()
    nsteps = int(math.ceil(T / dt - 1e-9))
    for n in range(nsteps):
        h = dt if n < nsteps - 1 else T - (nsteps - 1) * dt
        field = stepper(field, h)
        if g0 > 0 and field.grad_sup() > growth_limit * g0:
            raise SimulationError(f"velocity gradient grew more than {growth_limit}x", time=field.t)
        if callback is not None:
            callback(field)
    return field


# -- initial fields -----------------------------------------------------------------

def taylor_green(n=128, L=2 * np.pi, amplitude=1.0, gamma=0.0, t=0.0, mu_V=None) -> VelocityField:
    """``u = A e^{-γt} (sin x cos y, -cos x sin y)`` scaled to a box of side ``L``."""
    x = spectral.grid_coords(n, L, 2) * (2 * np.pi / L)
    a = amplitude * math.exp(-gamma * t)
    u = np.array([np.sin(x[0]) * np.cos(x[1]), -np.cos(x[0]) * np.sin(x[1])]) * a
    return VelocityField.from_u(GridField(u, L, 2), mu_V, gamma, t)


def taylor_green_pressure(n=128, L=2 * np.pi, amplitude=1.0, gamma=0.0, t=0.0):
    """Exact pressure of :func:`taylor_green`: ``(u·∇)u = ½A²(sin 2x, sin 2y) = -∇p``."""
    x = spectral.grid_coords(n, L, 2) * (2 * np.pi / L)
    a = amplitude * math.exp(-gamma * t)
    return GridField((a * a) * (np.cos(2 * x[0]) + np.cos(2 * x[1])) / 4, L, 2)


def random_smooth(n=128, L=2 * np.pi, kmax=4, seed=0, amplitude=1.0, gamma=0.0, mu_V=None) -> VelocityField:
    """Random divergence-free field with modes ``|m|_∞ ≤ kmax`` and zero mean."""
    rng = np.random.default_rng(seed)
    m = np.fft.fftfreq(n, d=1.0 / n)
    M = np.meshgrid(m, m, indexing="ij")
    band = (np.abs(M[0]) <= kmax) & (np.abs(M[1]) <= kmax) & ((M[0] != 0) | (M[1] != 0))
    psi_hat = np.where(band, rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)), 0.0)
    psi = spectral.ifft(psi_hat, 2)
    k = spectral.wavevectors(n, L, 2)
    ph = spectral.fft(psi, 2)
    u = np.array([spectral.ifft(1j * k[1] * ph, 2), spectral.ifft(-1j * k[0] * ph, 2)])
    u *= amplitude / np.max(np.abs(u))
    field = GridField(u, L, 2)
    if mu_V is not None and mu_V.grid is not None:
        field = weighted_projection(mu_V, field)
    return VelocityField.from_u(field, mu_V, gamma)


# -- snapshots -----------------------------------------------------------------------

def write_snapshot(field: VelocityField, path):
    """Flat CSV ``index, component, value`` of ``u`` plus a JSON sidecar."""
    vals = field.u.values.reshape(field.d, -1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "component", "value"])
        for c in range(field.d):
            for i, v in enumerate(vals[c]):
                w.writerow([i, c, repr(float(v))])
    meta = {"n": field.n, "L": field.L, "d": field.d, "t": field.t, "gamma": field.gamma, "layout": "C-order, axis 0 = x_1"}
    with open(str(path) + ".json", "w") as fh:
        json.dump(meta, fh, indent=2)


def read_snapshot(path, mu_V=None) -> VelocityField:
    with open(str(path) + ".json") as fh:
        meta = json.load(fh)
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    n, d = meta["n"], meta["d"]
    u = np.zeros((d, n ** d))
    u[data[:, 1].astype(int), data[:, 0].astype(int)] = data[:, 2]
    u = GridField(u.reshape((d,) + (n,) * d), meta["L"], d)
    return VelocityField.from_u(u, mu_V, meta["gamma"], meta["t"])
