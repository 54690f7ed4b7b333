import math
from dataclasses import replace

import numpy as np
import pytest

from riesz_lake import spectral
from riesz_lake.equilibrium import torus_density, torus_uniform
from riesz_lake.errors import PreconditionError, SolverError, StabilityError
from riesz_lake.kernels import Kernel
from riesz_lake.lake import (
    VelocityField,
    euler_step_2d,
    evolve,
    helmholtz,
    lake_residual,
    lake_step,
    pressure_solve,
    random_smooth,
    read_snapshot,
    taylor_green,
    taylor_green_pressure,
    verify_corrector_identity,
    weighted_operator,
    write_snapshot,
)
from riesz_lake.modulated_energy import corrector, forcing
from riesz_lake.spectral import GridField

L = 2 * np.pi


def _field(fn, n, L=L):
    x = spectral.grid_coords(n, L, 2)
    return GridField(np.stack(fn(x[0], x[1])), L, 2)


def _bumpy_density(n, L=L):
    x = spectral.grid_coords(n, L, 2)
    return torus_density(GridField(1 + 0.1 * np.cos(x[0]), L, 2))


# -- time stepping ---------------------------------------------------------------

def test_taylor_green_is_steady():
    f0 = taylor_green(32)
    f1 = evolve(f0, 1.0, 0.01)
    assert f1.t == pytest.approx(1.0)
    assert np.max(np.abs(f1.u.values - f0.u.values)) < 1e-8


def test_taylor_green_with_friction_decays_exactly():
    gamma = 0.7
    f0 = taylor_green(32, gamma=gamma)
    f1 = evolve(f0, 1.0, 0.01)
    assert np.max(np.abs(f1.u.values - math.exp(-gamma) * f0.u.values)) < 1e-8


def test_random_field_conserves_energy_and_enstrophy():
    f0 = random_smooth(64, kmax=4, seed=3)
    f1 = evolve(f0, 1.0, 0.005)
    assert abs(f1.energy() / f0.energy() - 1) < 1e-6
    assert abs(f1.enstrophy() / f0.enstrophy() - 1) < 1e-6


def test_mean_flow_is_damped_exactly():
    gamma = 0.4
    tg = taylor_green(32, gamma=gamma)
    u = tg.u.with_values(tg.u.values + np.array([0.3, -0.2])[:, None, None])
    f1 = evolve(VelocityField.from_u(u, gamma=gamma), 1.5, 0.01)
    np.testing.assert_allclose(f1.u.values.mean(axis=(1, 2)), np.exp(-gamma * 1.5) * np.array([0.3, -0.2]), atol=1e-12)


def test_cfl_violation_raises():
    with pytest.raises(StabilityError):
        euler_step_2d(taylor_green(64), 0.2)


def test_euler_step_needs_uniform_background():
    f = random_smooth(16, kmax=2, mu_V=_bumpy_density(16))
    with pytest.raises(PreconditionError):
        euler_step_2d(f, 0.01)


def test_weighted_constraint_preserved_under_lake_step():
    f = random_smooth(32, kmax=3, seed=1, mu_V=_bumpy_density(32))
    norm = spectral.grid_l2(f.u.values, L, 2)
    assert lake_residual(f)["constraint_residual"] <= 1e-8 * norm
    for _ in range(5):
        f = lake_step(f, 0.02)
        assert lake_residual(f)["constraint_residual"] <= 1e-8 * norm


def test_dtu_consistency_is_second_order():
    f0 = random_smooth(32, kmax=3, seed=2)
    errs = []
    for h in (0.04, 0.02, 0.01):
        f1 = euler_step_2d(f0, h)
        f2 = euler_step_2d(f1, h)
        errs.append(np.max(np.abs((f2.u.values - f0.u.values) / (2 * h) - f1.dtu.values)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.9)


# -- pressure ------------------------------------------------------------------

def test_constant_velocity_has_zero_pressure():
    u = _field(lambda x, y: (0 * x + 0.3, 0 * y - 1.1), 16)
    assert np.max(np.abs(pressure_solve(torus_uniform(2, L), u).values)) == 0.0
    assert np.max(np.abs(pressure_solve(_bumpy_density(16), u).values)) < 1e-14


def test_taylor_green_pressure_closed_form():
    for A in (1.0, 0.3):
        p = pressure_solve(torus_uniform(2, L), taylor_green(32, amplitude=A))
        x = spectral.grid_coords(32, L, 2)
        # (u·∇)u = ½A²(sin 2x, sin 2y) = -∇p
        np.testing.assert_allclose(p.values, A * A * (np.cos(2 * x[0]) + np.cos(2 * x[1])) / 4, atol=1e-8)
        np.testing.assert_allclose(p.values, taylor_green_pressure(32, amplitude=A).values, atol=1e-12)
        assert abs(p.mean()) < 1e-14


def test_variable_background_pressure_residual():
    mu = _bumpy_density(32)
    u = random_smooth(32, kmax=3, seed=4, mu_V=mu).u
    p = pressure_solve(mu, u)
    m = mu.grid.values
    rhs = spectral.divergence(m * spectral.advect(u.values, L, 2), L, 2)
    res = np.linalg.norm(weighted_operator(m, p.values, L, 2) - rhs) / np.linalg.norm(rhs)
    assert res < 1e-10
    assert abs(p.mean()) < 1e-12


def test_pressure_solver_reports_nonconvergence():
    mu = _bumpy_density(32)
    u = random_smooth(32, kmax=3, seed=4, mu_V=mu).u
    with pytest.raises(SolverError) as info:
        pressure_solve(mu, u, maxiter=1)
    assert info.value.residual > 1e-10


def test_pressure_spectral_convergence():
    fn = lambda x, y: (np.exp(np.sin(y)), np.exp(np.cos(x)))
    ref = pressure_solve(torus_uniform(2, L), _field(fn, 64)).values
    errs = []
    for n in (8, 16, 32):
        p = pressure_solve(torus_uniform(2, L), _field(fn, n)).values
        errs.append(np.max(np.abs(p - ref[:: 64 // n, :: 64 // n])))
    for a, b in zip(errs, errs[1:]):
        assert b <= max(a / 1e3, 1e-12)


# -- residuals -----------------------------------------------------------------

def test_taylor_green_residuals_vanish():
    for n in (16, 32):
        r = lake_residual(taylor_green(n, gamma=0.2, t=0.5))
        assert r["momentum_residual"] < 1e-8 and r["constraint_residual"] < 1e-8


def test_zero_field_residuals_are_zero():
    z = GridField(np.zeros((2, 16, 16)), L, 2)
    r = lake_residual(VelocityField.from_u(z))
    assert r == {"momentum_residual": 0.0, "constraint_residual": 0.0}


def test_corrupted_pressure_is_detected():
    f = taylor_green(32)
    x = spectral.grid_coords(32, L, 2)
    bad = replace(f, p=f.p.with_values(f.p.values + 0.05 * np.sin(x[0])))
    assert lake_residual(bad)["momentum_residual"] > 1e-2


def test_pressure_gauge_invariance():
    f = random_smooth(32, kmax=3, seed=5)
    shifted = replace(f, p=f.p.with_values(f.p.values + 7.5))
    assert lake_residual(shifted) == pytest.approx(lake_residual(f), abs=1e-12)


# -- corrector identity ----------------------------------------------------------

@pytest.mark.parametrize("s", [0.0, 0.5, 1.0])
def test_corrector_identity_for_gradient_forcing(s):
    f = taylor_green(32, gamma=0.3)
    k = Kernel.torus_riesz(s, 2, L=L)
    U = corrector(f.u, f.dtu, f.gamma, k)
    assert verify_corrector_identity(f, U, k) < 1e-10


def test_corrector_identity_zero_field():
    z = GridField(np.zeros((2, 8, 8)), L, 2)
    f = VelocityField.from_u(z)
    k = Kernel.torus_riesz(0.0, 2, L=L)
    assert verify_corrector_identity(f, corrector(f.u, f.dtu, 0.0, k), k) == 0.0


def test_corrector_identity_matches_helmholtz_split():
    rng = np.random.default_rng(6)
    f = random_smooth(32, kmax=3, seed=6)
    # arbitrary time derivative: the forcing is no longer a pure gradient
    dtu = f.u.with_values(spectral.ifft(spectral.fft(rng.normal(size=(2, 32, 32)), 2) * spectral.dealias_mask(32, 2), 2))
    g = replace(f, dtu=dtu)
    k = Kernel.torus_riesz(0.0, 2, L=L)
    res = verify_corrector_identity(g, corrector(g.u, g.dtu, g.gamma, k), k)
    w = forcing(g.u, g.dtu, g.gamma)
    _, sol = helmholtz(w)
    expect = spectral.grid_l2(sol.values, L, 2) / spectral.grid_l2(w.values, L, 2)
    assert expect > 0.1
    assert res == pytest.approx(expect, rel=1e-10)


# -- snapshots -----------------------------------------------------------------

def test_snapshot_round_trip(tmp_path):
    f = random_smooth(16, kmax=2, seed=7, gamma=0.1)
    path = tmp_path / "u.csv"
    write_snapshot(f, path)
    g = read_snapshot(path)
    assert np.array_equal(g.u.values, f.u.values)
    assert (g.n, g.L, g.gamma, g.t) == (f.n, f.L, f.gamma, f.t)
