"""Closed-form trajectories of the 1D Coulomb gas in a quadratic trap.

With ``g = -2|x|``, ``V = x²`` and no friction, ordered particles feel
``ε² ẍ_i = -2x_i + 2(2i-1-N)/N``, so each one oscillates harmonically at
``ω = √2/ε`` about its lattice site ``c_i = (2i-1-N)/N`` for as long as the
ordering holds.

The velocity term is written ``(v_i°/ω) sin(ωt)`` so that ``ẋ_i(0) = v_i°``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import ParticleState
from .errors import PreconditionError


@dataclass(frozen=True)
class ExactInit:
    N: int
    epsilon: float
    x0: np.ndarray
    v0: np.ndarray

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        v0 = np.asarray(self.v0, dtype=float).reshape(-1)
        if x0.shape != (self.N,) or v0.shape != (self.N,):
            raise PreconditionError("x0 and v0 must both have length N")
        if self.epsilon <= 0:
            raise PreconditionError("epsilon must be positive")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "v0", v0)

    @classmethod
    def critical(cls, N, epsilon):
        return cls(N, epsilon, sites(N), np.zeros(N))

    @classmethod
    def shifted(cls, N, epsilon):
        """Every particle displaced by ``1/N`` from its site, at rest."""
        return cls(N, epsilon, sites(N) + 1.0 / N, np.zeros(N))

    def to_state(self) -> ParticleState:
        return ParticleState(self.x0[:, None], self.v0[:, None], 0.0, self.epsilon, 0.0)


def sites(N):
    i = np.arange(1, N + 1)
    return (2 * i - 1 - N) / N


def omega(epsilon):
    return math.sqrt(2.0) / epsilon


def order_preservation_check(init: ExactInit) -> bool:
    """``|v°_{i+1} - v°_i| + |x°_{i+1} - x°_i - 2/N| < 2/N`` for every adjacent pair."""
    if init.N < 2:
        return True
    N = init.N
    lhs = np.abs(np.diff(init.v0)) + np.abs(np.diff(init.x0) - 2.0 / N)
    return bool(np.all(lhs < 2.0 / N))


def exact_state(init: ExactInit, t: float) -> ParticleState:
    """Exact positions and velocities at time ``t``.

    Raises
    ------
    PreconditionError
        If the initial data fails :func:`order_preservation_check` or is unsorted.
    """
    if init.N > 1 and np.any(np.diff(init.x0) <= 0):
        raise PreconditionError("initial positions must be strictly increasing")
    if not order_preservation_check(init):
        raise PreconditionError("initial data violates the order-preservation condition")
    if t == 0:
        return init.to_state()
    w = omega(init.epsilon)
    c = sites(init.N)
    cs, sn = math.cos(w * t), math.sin(w * t)
    x = (init.x0 - c) * cs + (init.v0 / w) * sn + c
    v = -(init.x0 - c) * w * sn + init.v0 * cs
    return ParticleState(x[:, None], v[:, None], float(t), init.epsilon, 0.0)


def exact_current(N: int, epsilon: float, t: float) -> dict:
    """Current ``J = value_factor · μ_N`` for the shifted initial data.

    Returns ``amplitude = √2/(Nε)`` and ``value_factor = -√2 sin(√2 t/ε)/(Nε)``.
    """
    amp = math.sqrt(2.0) / (N * epsilon)
    return {"amplitude": amp, "value_factor": -amp * math.sin(omega(epsilon) * t)}


def amplitude_scaling(Ns, beta):
    """``sup_t`` amplitude under ``ε = N^{-β}``, i.e. ``√2 N^{β-1}``."""
    return np.array([exact_current(int(N), float(N) ** (-beta), 0.0)["amplitude"] for N in Ns])


def max_error(traj_times, traj_positions, traj_velocities, init: ExactInit):
    """Max position and velocity error of sampled states against the exact solution."""
    if not len(traj_times) == len(traj_positions) == len(traj_velocities):
        raise PreconditionError("times, positions and velocities must have the same number of samples")
    ex, ev = 0.0, 0.0
    for t, X, Vv in zip(traj_times, traj_positions, traj_velocities):
        s = exact_state(init, t)
        ex = max(ex, float(np.max(np.abs(X - s.positions))))
        ev = max(ev, float(np.max(np.abs(Vv - s.velocities))))
    return ex, ev
