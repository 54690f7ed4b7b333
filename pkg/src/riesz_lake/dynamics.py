"""Second-order particle dynamics with ``1/ε²`` force scaling.

    ẋ_i = v_i
    v̇_i = -γ v_i - (1/(ε²N)) Σ_{j≠i} ∇g(x_i - x_j) - (1/ε²) ∇V(x_i)

The base integrator is velocity Verlet with exact exponential damping split
around it (half-damp, half-kick, drift, half-kick, half-damp).  ``yoshida4``
composes three such steps into a fourth-order symmetric scheme.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import optimize

from .equilibrium import BackgroundDensity, Confinement
from .errors import PreconditionError, SamplingError, SingularityError
from .kernels import Kernel, pair_energy, pair_gradient_sums
from .spectral import GridField, interpolate

log = logging.getLogger(__name__)

SCHEMES = ("verlet", "yoshida4")

_W1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
_W0 = -(2.0 ** (1.0 / 3.0)) * _W1
_SUBSTEPS = {"verlet": (1.0,), "yoshida4": (_W1, _W0, _W1)}


@dataclass(frozen=True)
class ParticleState:
    """Positions, velocities and parameters of an N-particle system.

    Value semantics: every integrator call returns a new state.
    """

    positions: np.ndarray
    velocities: np.ndarray
    t: float = 0.0
    epsilon: float = 1.0
    gamma: float = 0.0

    def __post_init__(self):
        x = np.array(self.positions, dtype=float)
        v = np.array(self.velocities, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if v.ndim == 1:
            v = v[:, None]
        if x.shape != v.shape:
            raise PreconditionError(f"positions {x.shape} and velocities {v.shape} differ in shape")
        if self.epsilon <= 0:
            raise PreconditionError("epsilon must be positive")
        if self.gamma < 0:
            raise PreconditionError("gamma must be nonnegative")
        object.__setattr__(self, "positions", x)
        object.__setattr__(self, "velocities", v)

    @property
    def N(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    def evolve(self, positions, velocities, t) -> "ParticleState":
        return replace(self, positions=positions, velocities=velocities, t=t)

    def permuted(self, perm) -> "ParticleState":
        perm = np.asarray(perm)
        return self.evolve(self.positions[perm], self.velocities[perm], self.t)

    def momentum(self):
        return self.velocities.sum(axis=0)

    def min_distance(self, L=None):
        if self.N < 2:
            return math.inf
        i, j = np.triu_indices(self.N, k=1)
        diff = self.positions[i] - self.positions[j]
        if L is not None:
            diff = diff - L * np.floor(diff / L + 0.5)
        return float(np.sqrt(np.min(np.sum(diff * diff, axis=1))))


def total_force(state: ParticleState, kernel: Kernel, V: Confinement) -> np.ndarray:
    """Acceleration without friction, shape ``(N, d)``."""
    return _accel(state.positions, state.epsilon, kernel, V)


def _accel(x, eps, kernel, V):
    N = x.shape[0]
    a = -V.grad(x)
    if N > 1:
        a -= pair_gradient_sums(kernel, x) / N
    return a / (eps * eps)


def _verlet(x, v, a, h, eps, gamma, kernel, V):
    damp = math.exp(-gamma * h / 2) if gamma else 1.0
    v = v * damp + 0.5 * h * a
    x = x + h * v
    a = _accel(x, eps, kernel, V)
    v = (v + 0.5 * h * a) * damp
    return x, v, a


def _advance(x, v, a, dt, eps, gamma, kernel, V, scheme):
    try:
        weights = _SUBSTEPS[scheme]
    except KeyError:
        raise PreconditionError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}") from None
    for w in weights:
        x, v, a = _verlet(x, v, a, w * dt, eps, gamma, kernel, V)
    return x, v, a


def step(state: ParticleState, dt: float, kernel: Kernel, V: Confinement, scheme="verlet") -> ParticleState:
    """Advance one time step of size ``dt``.

    Parameters
    ----------
    state : ParticleState
    dt : float
        Step size; the fast frequency scales like ``1/ε`` so ``dt ≲ ε/20``.
    kernel, V
        Interaction kernel and confinement.
    scheme : {"verlet", "yoshida4"}

    Raises
    ------
    SingularityError
        If the drift brings two particles into contact.
    """
    if dt <= 0:
        raise PreconditionError("dt must be positive")
    if dt > state.epsilon / 20:
        log.debug("dt=%g exceeds the recommended epsilon/20", dt)
    a = total_force(state, kernel, V)
    x, v, _ = _advance(state.positions, state.velocities, a, dt, state.epsilon, state.gamma, kernel, V, scheme)
    return state.evolve(x, v, state.t + dt)


@dataclass
class Trajectory:
    """Sampled states and observables of a run."""

    times: list = field(default_factory=list)
    positions: list = field(default_factory=list)
    velocities: list = field(default_factory=list)
    observables: dict = field(default_factory=dict)
    dt: float = 0.0
    scheme: str = "verlet"
    steps: int = 0
    final: ParticleState | None = None

    def record(self, state: ParticleState, diagnostics, keep_states=True):
        if self.times and state.t <= self.times[-1]:
            raise PreconditionError("trajectory sample times must increase")
        self.times.append(state.t)
        if keep_states:
            self.positions.append(state.positions.copy())
            self.velocities.append(state.velocities.copy())
        for name, fn in (diagnostics or {}).items():
            val = fn(state)
            if isinstance(val, dict):
                for key, item in val.items():
                    self.observables.setdefault(key, []).append(item)
            else:
                self.observables.setdefault(name, []).append(val)

    def series(self, name):
        return np.asarray(self.observables[name])

    def to_csv(self, path):
        """Write ``t, i, x_1..x_d, v_1..v_d`` rows."""
        write_trajectory_csv(path, self.times, self.positions, self.velocities)


def write_trajectory_csv(path, times, positions, velocities):
    d = positions[0].shape[1] if positions else 0
    header = ["t", "i"] + [f"x_{a + 1}" for a in range(d)] + [f"v_{a + 1}" for a in range(d)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for t, X, Vv in zip(times, positions, velocities):
            for i in range(X.shape[0]):
                w.writerow([repr(float(t)), i] + [repr(float(c)) for c in X[i]] + [repr(float(c)) for c in Vv[i]])


def read_trajectory_csv(path):
    """Inverse of :func:`write_trajectory_csv`; returns ``(times, positions, velocities)``."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        return np.array([]), [], []
    d = (data.shape[1] - 2) // 2
    times, xs, vs = [], [], []
    for t in np.unique(data[:, 0]):
        rows = data[data[:, 0] == t]
        rows = rows[np.argsort(rows[:, 1])]
        times.append(t)
        xs.append(rows[:, 2:2 + d])
        vs.append(rows[:, 2 + d:])
    return np.array(times), xs, vs


def simulate(
    init: ParticleState,
    T: float,
    dt: float,
    kernel: Kernel,
    V: Confinement,
    sample_every: int = 1,
    diagnostics: dict[str, Callable] | None = None,
    scheme: str = "verlet",
    keep_states: bool = True,
) -> Trajectory:
    """Integrate to time ``T`` with a fixed step, sampling every ``sample_every`` steps.

    The step count is ``ceil(T/dt)`` with the last step shortened to land on ``T``.
    Errors raised by a step carry the failing time in ``exc.time``.
    """
    if T < 0:
        raise PreconditionError("T must be nonnegative")
    if sample_every < 1:
        raise PreconditionError("sample_every must be at least 1")
    traj = Trajectory(dt=dt, scheme=scheme)
    traj.record(init, diagnostics, keep_states)
    traj.final = init
    if T == 0:
        return traj
    nsteps = int(math.ceil(T / dt - 1e-9))
    eps, gamma = init.epsilon, init.gamma
    x, v = init.positions, init.velocities
    a = _accel(x, eps, kernel, V)
    t0 = init.t
    state = init
    for n in range(1, nsteps + 1):
        h = dt if n < nsteps else T - (nsteps - 1) * dt
        try:
            x, v, a = _advance(x, v, a, h, eps, gamma, kernel, V, scheme)
        except SingularityError as exc:
            exc.time = t0 + (n - 1) * dt
            raise
        t = t0 + T if n == nsteps else t0 + n * dt
        if n % sample_every == 0 or n == nsteps:
            state = init.evolve(x, v, t)
            traj.record(state, diagnostics, keep_states)
    traj.steps = nsteps
    traj.final = init.evolve(x, v, t0 + T)
    return traj


def micro_energy(state: ParticleState, kernel: Kernel, V: Confinement) -> float:
    """``(ε²/2N)Σ|v|² + (1/2N²)Σ_{i≠j} g + (1/N)Σ V``."""
    N, eps = state.N, state.epsilon
    kin = eps * eps * float(np.sum(state.velocities ** 2)) / (2 * N)
    inter = pair_energy(kernel, state.positions) / (2 * N * N)
    return kin + inter + float(np.mean(V.value(state.positions)))


# -- initial data ------------------------------------------------------------

def _velocity_at(u0, pts, d):
    if u0 is None:
        return np.zeros((pts.shape[0], d))
    if isinstance(u0, GridField):
        return interpolate(u0, pts).T.reshape(pts.shape[0], d)
    return np.asarray(u0(pts), dtype=float).reshape(pts.shape[0], d)


def sample_positions(mu: BackgroundDensity, N: int, rng, budget=1000):
    """iid draws from ``μ`` by rejection against its sup norm."""
    d = mu.d
    sup = mu.support
    if mu.on_torus:
        lo, hi = np.zeros(d), np.full(d, sup.L)
        if mu.grid is None:
            return rng.uniform(lo, hi, size=(N, d))
    elif hasattr(sup, "bounds_1d") and d == 1:
        a, b = sup.bounds_1d()
        lo, hi = np.array([a]), np.array([b])
    else:
        c = np.asarray(sup.center)
        lo, hi = c - sup.radius, c + sup.radius
    bound = mu.sup_norm
    out = np.empty((0, d))
    tries = 0
    while out.shape[0] < N:
        tries += 1
        if tries > budget:
            raise SamplingError(f"rejection sampling from {mu.name} exceeded {budget} rounds")
        m = max(2 * (N - out.shape[0]), 64)
        cand = rng.uniform(lo, hi, size=(m, d))
        keep = rng.uniform(0, bound, size=m) < mu.density(cand)
        out = np.concatenate([out, cand[keep]])
    return out[:N]


def sample_monokinetic_init(mu, u0, N, r_N, seed, epsilon=1.0, gamma=0.0) -> ParticleState:
    """Positions iid from ``μ``; velocities uniform in the ball ``B(u0(x_i), r_N)``.

    ``u0`` is a callable on ``(N, d)`` points, a vector :class:`GridField`, or
    ``None`` for zero velocity.
    """
    if r_N < 0:
        raise PreconditionError("r_N must be nonnegative")
    rng = np.random.default_rng(seed)
    x = sample_positions(mu, N, rng)
    v = _velocity_at(u0, x, mu.d)
    if r_N > 0:
        dirs = rng.standard_normal((N, mu.d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        rad = r_N * rng.uniform(size=(N, 1)) ** (1.0 / mu.d)
        v = v + rad * dirs
    return ParticleState(x, v, 0.0, epsilon, gamma)


def critical_point_1d(N, epsilon=1.0) -> ParticleState:
    """Stationary configuration ``x_i = (2i-1-N)/N`` for the 1D Coulomb gas with ``V = x²``."""
    i = np.arange(1, N + 1)
    x = ((2 * i - 1 - N) / N)[:, None]
    return ParticleState(x, np.zeros_like(x), 0.0, epsilon, 0.0)


def critical_configuration(mu, kernel: Kernel, V: Confinement, N, seed=0, maxiter=5000, gtol=1e-10) -> np.ndarray:
    """Local minimizer of the interaction-plus-confinement energy, started from iid draws of ``μ``.

    The result is a critical point of the microscopic energy, so zero
    velocities make it (numerically) stationary under the dynamics.
    """
    rng = np.random.default_rng(seed)
    X0 = sample_positions(mu, N, rng)
    d = X0.shape[1]

    def energy(z):
        X = z.reshape(N, d)
        e = pair_energy(kernel, X) / (2 * N * N) + float(np.mean(V.value(X)))
        g = pair_gradient_sums(kernel, X) / (N * N) + V.grad(X) / N
        return e, g.ravel()

    res = optimize.minimize(energy, X0.ravel(), jac=True, method="L-BFGS-B", options={"maxiter": maxiter, "gtol": gtol})
    if not np.all(np.isfinite(res.x)):
        raise SamplingError("energy minimization diverged")
    return res.x.reshape(N, d)


def jittered_lattice(mu: BackgroundDensity, N, jitter, seed):
    """Torus lattice with ``N = m^d`` points perturbed by uniform noise of width ``jitter``."""
    if not mu.on_torus:
        raise PreconditionError("lattice initial data is defined on the torus")
    d, L = mu.d, mu.support.L
    m = int(round(N ** (1.0 / d)))
    if m ** d != N:
        raise PreconditionError(f"N={N} is not a perfect {d}-th power")
    g = (np.arange(m) + 0.5) * L / m
    X = np.stack(np.meshgrid(*([g] * d), indexing="ij"), axis=-1).reshape(-1, d)
    rng = np.random.default_rng(seed)
    return X + jitter * (L / m) * rng.uniform(-0.5, 0.5, size=X.shape)


# -- Langevin ----------------------------------------------------------------

def langevin_step(state, dt, kernel, V, beta, rng, scheme="verlet") -> ParticleState:
    """One OBABO step of the Langevin variant with noise ``√(2/β) dW`` on velocities.

    The O half-steps are exact Ornstein-Uhlenbeck updates; with ``beta = inf``
    they reduce to the exact damping of :func:`step`, so the result is identical.
    """
    if beta <= 0:
        raise PreconditionError("beta must be positive")
    if math.isinf(beta):
        return step(state, dt, kernel, V, scheme)
    h = dt / 2
    g = state.gamma
    if g > 0:
        damp = math.exp(-g * h)
        sd = math.sqrt((1 - math.exp(-2 * g * h)) / (g * beta))
    else:
        damp, sd = 1.0, math.sqrt(2 * h / beta)
    v = state.velocities * damp + sd * rng.standard_normal(state.velocities.shape)
    inner = replace(state, velocities=v, gamma=0.0)
    inner = step(inner, dt, kernel, V, scheme)
    v = inner.velocities * damp + sd * rng.standard_normal(v.shape)
    return state.evolve(inner.positions, v, state.t + dt)
