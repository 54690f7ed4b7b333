import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from riesz_lake.equilibrium import torus_density, uniform_ball, uniform_interval
from riesz_lake.errors import IllPosedError, InvalidKernelError, SingularityError
from riesz_lake.kernels import (
    Kernel,
    convolve_grid,
    eval_g,
    eval_grad_g,
    pair_energy,
    pair_gradient_sums,
    potential_of_density,
    quadrature_potential,
)
from riesz_lake.spectral import GridField, fft, fractional_laplacian_apply, grid_coords, grid_inner, ifft

WHOLE_SPACE = [
    Kernel.log(2),
    Kernel.riesz(1.0, 2),
    Kernel.riesz(1.0, 3),
    Kernel.riesz(-0.5, 1),
    Kernel.riesz(0.5, 1),
    Kernel.oned_coulomb(),
]


def test_eval_g_examples():
    assert eval_g(Kernel.log(2), np.array([1.0, 0.0])) == pytest.approx(0.0, abs=1e-15)
    assert eval_g(Kernel.riesz(1.0, 3), np.array([0.0, 0.0, 2.0])) == pytest.approx(0.5)
    assert eval_g(Kernel.oned_coulomb(), 0.5) == pytest.approx(-1.0)


def test_eval_grad_g_examples():
    np.testing.assert_allclose(eval_grad_g(Kernel.log(2), np.array([1.0, 0.0])), [-1.0, 0.0])
    assert float(np.ravel(eval_grad_g(Kernel.oned_coulomb(), -0.3))[0]) == pytest.approx(2.0, abs=1e-8)
    np.testing.assert_allclose(eval_grad_g(Kernel.riesz(1.0, 3), np.array([0.0, 0.0, 2.0])), [0, 0, -0.25], atol=1e-8)


@pytest.mark.parametrize("kernel", WHOLE_SPACE, ids=lambda k: f"{k.family}-s{k.s}-d{k.d}")
def test_gradient_matches_finite_differences(kernel):
    rng = np.random.default_rng(7)
    h = 1e-5
    for _ in range(100):
        x = rng.normal(size=kernel.d)
        x *= rng.uniform(0.3, 2.0) / np.linalg.norm(x)
        g = np.ravel(eval_grad_g(kernel, x))
        fd = np.array([(eval_g(kernel, x + h * e) - eval_g(kernel, x - h * e)) / (2 * h) for e in np.eye(kernel.d)])
        np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-8)


@pytest.mark.parametrize("kernel", WHOLE_SPACE[:3], ids=lambda k: f"{k.family}-s{k.s}-d{k.d}")
def test_singular_origin_is_an_error(kernel):
    with pytest.raises(SingularityError):
        eval_g(kernel, np.zeros(kernel.d))
    with pytest.raises(SingularityError):
        eval_grad_g(kernel, np.zeros(kernel.d))


def test_min_distance_clamp_is_opt_in():
    k = Kernel.riesz(1.0, 2, min_distance=0.1)
    assert eval_g(k, np.zeros(2)) == pytest.approx(10.0)


@pytest.mark.parametrize("s,d", [(-3.0, 1), (1.0, 1), (2.0, 2), (0.5, 3)])
def test_inadmissible_exponents_rejected(s, d):
    with pytest.raises(InvalidKernelError):
        Kernel.riesz(s, d)


def test_torus_spectral_validation():
    with pytest.raises(InvalidKernelError):
        Kernel.torus_spectral((((1,), 1.0),), 1)
    with pytest.raises(InvalidKernelError):
        Kernel.torus_spectral((((0,), 1.0),), 1)
    with pytest.raises(InvalidKernelError):
        Kernel.torus_spectral((((1,), -1.0), ((-1,), -1.0)), 1)


def test_kernel_config_round_trip():
    for k in WHOLE_SPACE + [Kernel.torus_riesz(0.0, 2, L=1.0), Kernel.torus_spectral((((1,), 2.0), ((-1,), 2.0)), 1, L=3.0)]:
        assert Kernel.from_config(k.to_config()) == k


def test_oned_coulomb_potential_examples():
    k, mu = Kernel.oned_coulomb(), uniform_interval(1.0)
    vals = potential_of_density(k, mu, np.array([0.0, 2.0]))
    np.testing.assert_allclose(vals, [-1.0, -4.0], atol=1e-10)
    quad = quadrature_potential(k, mu, np.array([0.0, 2.0]))
    np.testing.assert_allclose(quad, [-1.0, -4.0], atol=1e-10)


def test_spectral_potential_orthogonal_mode_vanishes():
    L, n = 1.0, 32
    k = Kernel.torus_spectral((((1,), 1.0), ((-1,), 1.0)), 1, L=L)
    x = grid_coords(n, L, 1)[0]
    mu = torus_density(GridField(1.0 + 0.5 * np.cos(2 * np.pi * 3 * x / L), L, 1))
    vals = potential_of_density(k, mu, np.linspace(0, L, 17)[:, None])
    np.testing.assert_allclose(vals, 0.0, atol=1e-14)


@pytest.mark.parametrize(
    "kernel,mu",
    [
        (Kernel.oned_coulomb(), uniform_interval(1.0)),
        (Kernel.log(1), uniform_interval(1.0)),
        (Kernel.riesz(-0.5, 1), uniform_interval(0.7)),
        (Kernel.riesz(0.5, 1), uniform_interval(1.0)),
        (Kernel.log(2), uniform_ball(1 / math.sqrt(2), 2)),
        (Kernel.riesz(1.0, 2), uniform_ball(1.0, 2)),
        (Kernel.riesz(1.0, 3), uniform_ball(1.0, 3)),
    ],
    ids=["1d-coulomb", "1d-log", "1d-s-0.5", "1d-s0.5", "2d-log", "2d-s1", "3d-coulomb"],
)
def test_closed_potentials_match_quadrature(kernel, mu):
    rng = np.random.default_rng(3)
    pts = rng.uniform(-2.5, 2.5, size=(100, kernel.d))
    closed = mu.closed_potential(kernel)
    assert closed is not None
    np.testing.assert_allclose(closed(pts), quadrature_potential(kernel, mu, pts), atol=1e-8, rtol=1e-8)


def test_quadrature_potential_2d_log_against_direct_integral():
    k, mu = Kernel.log(2), uniform_ball(0.5, 2)
    x = np.array([0.8, 0.1])
    dens = 1 / (np.pi * 0.25)

    def f(theta, r):
        y = r * np.array([np.cos(theta), np.sin(theta)])
        return -np.log(np.linalg.norm(x - y)) * dens * r

    ref, _ = integrate.dblquad(f, 0, 0.5, 0, 2 * np.pi, epsabs=1e-11)
    assert float(quadrature_potential(k, mu, x[None])[0]) == pytest.approx(ref, abs=1e-9)


def _mode(n, L, d, m):
    x = grid_coords(n, L, d)
    return np.cos(2 * np.pi / L * np.tensordot(np.asarray(m, float), x, axes=1))


def test_fractional_laplacian_examples():
    n, L = 32, 2 * np.pi
    f = GridField(_mode(n, L, 2, (2, 0)), L, 2)
    np.testing.assert_allclose(fractional_laplacian_apply(1.0, f).values, 4 * f.values, atol=1e-10)
    rng = np.random.default_rng(0)
    g = rng.normal(size=(n, n))
    g = GridField(g - g.mean(), L, 2)
    back = fractional_laplacian_apply(1.0, fractional_laplacian_apply(-1.0, g))
    np.testing.assert_allclose(back.values, g.values, atol=1e-10)
    half2 = fractional_laplacian_apply(0.5, fractional_laplacian_apply(0.5, g))
    np.testing.assert_allclose(half2.values, fractional_laplacian_apply(1.0, g).values, atol=1e-10)


def test_fractional_laplacian_negative_order_needs_zero_mean():
    f = GridField(np.ones((8, 8)), 1.0, 2)
    with pytest.raises(IllPosedError):
        fractional_laplacian_apply(-0.5, f)
    assert np.all(fractional_laplacian_apply(0.5, f).values == 0)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(-1.5, 1.5), b=st.floats(-1.5, 1.5), seed=st.integers(0, 2**31))
def test_fractional_laplacian_semigroup_and_symmetry(a, b, seed):
    rng = np.random.default_rng(seed)
    n, L = 16, 1.0
    f = rng.normal(size=(n, n))
    g = rng.normal(size=(n, n))
    F = GridField(f - f.mean(), L, 2)
    G = GridField(g - g.mean(), L, 2)
    ab = fractional_laplacian_apply(a, fractional_laplacian_apply(b, F)).values
    direct = fractional_laplacian_apply(a + b, F).values
    scale = max(1.0, np.max(np.abs(direct)))
    assert np.max(np.abs(ab - direct)) < 1e-10 * scale
    lhs = grid_inner(fractional_laplacian_apply(a, F).values, G.values, L, 2)
    rhs = grid_inner(F.values, fractional_laplacian_apply(a, G).values, L, 2)
    assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs))
    lin = fractional_laplacian_apply(a, GridField(2 * F.values + G.values, L, 2)).values
    expect = 2 * fractional_laplacian_apply(a, F).values + fractional_laplacian_apply(a, G).values
    assert np.max(np.abs(lin - expect)) < 1e-10 * max(1.0, np.max(np.abs(expect)))


def test_fft_round_trip():
    rng = np.random.default_rng(1)
    v = rng.normal(size=(3, 3, 24, 24))[0]
    back = np.real(ifft(fft(v, 2), 2))
    assert np.max(np.abs(back - v)) / np.max(np.abs(v)) < 1e-12


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_torus_spectral_quadratic_form_nonnegative(seed):
    rng = np.random.default_rng(seed)
    coeffs = []
    for m in [(1, 0), (0, 1), (1, 1), (2, -1), (3, 2)]:
        w = float(rng.uniform(0, 2))
        coeffs += [(m, w), (tuple(-c for c in m), w)]
    L, n = 1.0, 16
    k = Kernel.torus_spectral(tuple(coeffs), 2, L=L)
    f = rng.normal(size=(n, n))
    F = GridField(f - f.mean(), L, 2)
    form = grid_inner(convolve_grid(k, F).values, F.values, L, 2)
    assert form >= -1e-10


@pytest.mark.parametrize(
    "kernel",
    [Kernel.log(2), Kernel.riesz(1.0, 3), Kernel.oned_coulomb(), Kernel.riesz(-0.5, 1), Kernel.torus_riesz(0.0, 2, L=1.0),
     Kernel.torus_riesz(1.0, 2, L=2.0), Kernel.torus_riesz(-1.0, 1, L=1.0)],
    ids=lambda k: f"{k.family}-s{k.s}-d{k.d}",
)
def test_pair_sums_match_brute_force(kernel):
    rng = np.random.default_rng(5)
    L = kernel.L or 1.0
    X = rng.uniform(0, L, size=(30, kernel.d))
    brute_e = sum(float(np.ravel(eval_g(kernel, X[i] - X[j]))[0]) for i in range(30) for j in range(30) if i != j)
    brute_g = np.array([sum(np.ravel(eval_grad_g(kernel, X[i] - X[j])) for j in range(30) if j != i) for i in range(30)])
    assert pair_energy(kernel, X) == pytest.approx(brute_e, rel=1e-12, abs=1e-12)
    np.testing.assert_allclose(pair_gradient_sums(kernel, X), brute_g, rtol=1e-10, atol=1e-10)


def test_pair_energy_names_coincident_pair():
    X = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]])
    with pytest.raises(SingularityError) as info:
        pair_energy(Kernel.log(2), X)
    assert set(info.value.pair) == {0, 2}


def test_torus_coulomb_matches_fourier_series():
    k = Kernel.torus_riesz(0.0, 2, L=1.0)
    M = 300
    m = np.arange(-M, M + 1)
    mx, my = np.meshgrid(m, m, indexing="ij")
    K2 = (2 * np.pi) ** 2 * (mx ** 2 + my ** 2).astype(float)
    K2[M, M] = np.inf
    for x in ([0.2, 0.05], [0.5, 0.5], [0.1, 0.4]):
        ref = np.sum(np.cos(2 * np.pi * (mx * x[0] + my * x[1])) / K2)
        assert float(eval_g(k, np.array(x))) == pytest.approx(ref, abs=1e-6)


def test_torus_kernel_is_periodic_and_zero_mean():
    k = Kernel.torus_riesz(1.0, 2, L=2.0)
    x = np.array([0.3, 0.7])
    assert float(eval_g(k, x)) == pytest.approx(float(eval_g(k, x + np.array([2.0, -4.0]))), abs=1e-13)
    bounded = Kernel.torus_riesz(-1.0, 1, L=1.0)
    pts = (np.arange(512) + 0.5) / 512
    assert abs(np.mean(eval_g(bounded, pts[:, None]))) < 1e-5
