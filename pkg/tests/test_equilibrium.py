import json
import math

import numpy as np
import pytest
from scipy import integrate

from riesz_lake.equilibrium import (
    CLOSED_FORM_CASES,
    Ball,
    Confinement,
    Interval,
    VectorFieldFn,
    closed_form_equilibrium,
    equilibrium_case,
    estimate_robin_constant,
    frostman_grid,
    grad_zeta,
    noflux_growth_exponent,
    noflux_inequality_ratio,
    torus_uniform,
    uniform_ball,
    uniform_interval,
    verify_frostman,
    zeta,
)
from riesz_lake.errors import DomainError, UnsupportedError
from riesz_lake.kernels import Kernel


def _case_1d():
    c = equilibrium_case("oned_coulomb_quadratic")
    return c.V, c.mu, c.kernel


def test_oned_closed_form():
    mu = closed_form_equilibrium("oned_coulomb_quadratic")
    assert mu.robin_constant == -1.0
    np.testing.assert_allclose(mu.density(np.array([[-0.9], [0.0], [0.99]])), 0.5)
    assert float(mu.density(np.array([[1.5]]))[0]) == 0.0
    assert isinstance(mu.support, Interval)


def test_robin_constant_matches_direct_evaluation():
    V, mu, k = _case_1d()
    c, spread = estimate_robin_constant(V, mu, k)
    assert c == pytest.approx(-1.0, abs=1e-10)
    assert spread < 1e-9


def test_twod_closed_form():
    mu = closed_form_equilibrium("twod_coulomb_quadratic")
    assert isinstance(mu.support, Ball)
    assert mu.support.radius == pytest.approx(1 / math.sqrt(2))
    assert float(mu.density(np.array([[0.1, 0.2]]))[0]) == pytest.approx(2 / math.pi)
    assert float(mu.density(np.array([[0.6, 0.6]]))[0]) == 0.0


def test_torus_uniform_closed_form():
    mu = closed_form_equilibrium("torus_uniform")
    assert mu.robin_constant == 0.0
    np.testing.assert_allclose(mu.density(np.array([[0.1, 0.9], [0.5, 0.5]])), 1.0)


def test_unknown_case():
    with pytest.raises(UnsupportedError):
        closed_form_equilibrium("semicircle")


def test_cases_record_regularity_assumption():
    for case in CLOSED_FORM_CASES:
        if case == "torus_uniform":
            continue
        assert any("H3" in a for a in equilibrium_case(case).mu.assumptions)


@pytest.mark.parametrize("mu", [uniform_interval(1.0), uniform_interval(0.3), uniform_ball(0.7, 2), uniform_ball(1.2, 3)],
                         ids=["interval", "short-interval", "disk", "ball3"])
def test_total_mass_is_one(mu):
    if mu.d == 1:
        m, _ = integrate.quad(lambda x: float(mu.density(np.array([[x]]))[0]), -2, 2, points=[-1.2, -1, -0.3, 0.3, 1, 1.2])
    else:
        R = mu.support.radius
        area = 2 * math.pi if mu.d == 2 else 4 * math.pi
        m = area * integrate.quad(lambda r: r ** (mu.d - 1) * float(mu.density(np.array([[r] + [0.0] * (mu.d - 1)]))[0]), 0, R)[0]
    assert m == pytest.approx(1.0, abs=1e-8)


def test_zeta_examples():
    V, mu, k = _case_1d()
    assert zeta(V, mu, k, 0.5) == pytest.approx(0.0, abs=1e-12)
    assert zeta(V, mu, k, 2.0) == pytest.approx(1.0, abs=1e-8)
    assert zeta(V, mu, k, -3.0) == pytest.approx(4.0, abs=1e-8)


def test_zeta_liftoff_profile():
    V, mu, k = _case_1d()
    x = np.linspace(-3, 3, 1000)
    expect = np.where(np.abs(x) >= 1, (np.abs(x) - 1) ** 2, 0.0)
    np.testing.assert_allclose(zeta(V, mu, k, x[:, None]), expect, atol=1e-8)


def test_zeta_estimates_and_caches_robin_constant():
    V, _, k = _case_1d()
    mu = uniform_interval(1.0)
    assert mu.robin_constant is None
    assert zeta(V, mu, k, 3.0) == pytest.approx(4.0, abs=1e-8)
    assert list(mu.robin_cache.values()) == [pytest.approx(-1.0, abs=1e-10)]


def test_robin_estimate_independent_of_samples():
    V, mu, k = _case_1d()
    values = [estimate_robin_constant(V, mu, k, n=n)[0] for n in (5, 32, 101)]
    assert max(values) - min(values) < 1e-7


@pytest.mark.parametrize("case", CLOSED_FORM_CASES)
def test_frostman_passes_for_closed_forms(case):
    c = equilibrium_case(case)
    rep = verify_frostman(c.V, c.mu, c.kernel, tol=1e-6, case=case)
    assert rep.passed, rep
    assert rep.n_points >= 1000
    assert rep.max_abs_zeta_on_support <= 1e-6
    assert rep.min_zeta_off_support >= -1e-6


def test_frostman_torus_zeta_identically_zero():
    c = equilibrium_case("torus_uniform")
    rep = verify_frostman(c.V, c.mu, c.kernel)
    assert rep.max_abs_zeta_on_support < 1e-12


def test_frostman_detects_wrong_density():
    V, _, k = _case_1d()
    rep = verify_frostman(V, uniform_interval(2.0), k, tol=1e-6)
    assert not rep.passed
    assert rep.max_abs_zeta_on_support > 0.1


def test_frostman_report_json_keys():
    V, mu, k = _case_1d()
    data = json.loads(verify_frostman(V, mu, k, case="oned").to_json())
    assert set(data) == {"case", "c", "max_abs_zeta_on_support", "min_zeta_off_support", "pass"}


def test_frostman_grid_collar_is_one_diameter():
    mu = uniform_interval(1.0)
    g = frostman_grid(mu, 1000)
    assert g.min() == pytest.approx(-3.0) and g.max() == pytest.approx(3.0)


def test_grad_zeta_matches_finite_differences():
    c = equilibrium_case("twod_coulomb_quadratic")
    pts = np.array([[0.9, 0.2], [-0.5, 1.1], [1.5, -1.0]])
    g = grad_zeta(c.V, c.mu, c.kernel, pts)
    h = 1e-5
    for a in range(2):
        e = np.zeros(2)
        e[a] = h
        fd = (zeta(c.V, c.mu, c.kernel, pts + e) - zeta(c.V, c.mu, c.kernel, pts - e)) / (2 * h)
        np.testing.assert_allclose(g[:, a], fd, atol=1e-6)


def test_confinement_gradients():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(20, 3))
    h = 1e-6
    for V in (Confinement.quadratic(0.7), Confinement.radial_polynomial([0.0, 0.0, 1.0, 0.0, 0.25]), Confinement.zero()):
        g = V.grad(pts)
        for a in range(3):
            e = np.zeros(3)
            e[a] = h
            np.testing.assert_allclose(g[:, a], (V.value(pts + e) - V.value(pts - e)) / (2 * h), atol=1e-6)
        assert Confinement.from_config(V.to_config()) == V


def _bump():
    value = lambda p: 1 - p ** 2
    jac = lambda p: (-2 * p)[..., None]
    return VectorFieldFn(value, jac)


def test_noflux_ratio_is_finite_for_field_vanishing_on_boundary():
    V, mu, k = _case_1d()
    grid = np.concatenate([np.linspace(1.01, 1.99, 50), -np.linspace(1.01, 1.99, 50)])[:, None]
    ratio = noflux_inequality_ratio(_bump(), V, mu, k, grid)
    # |v ζ'| / ζ = 2(|x|+1) on the collar, and ||v||_{W^{1,inf}} on [-3,3] is 8 + 6
    assert ratio == pytest.approx(2 * 2.99 / 14, rel=1e-6)
    assert ratio <= 10


def test_noflux_ratio_zero_field():
    V, mu, k = _case_1d()
    zero = VectorFieldFn(lambda p: np.zeros_like(p), lambda p: np.zeros(p.shape + (1,)))
    assert noflux_inequality_ratio(zero, V, mu, k, np.array([[1.5], [2.0]])) == 0.0


def test_noflux_grid_inside_support_is_an_error():
    V, mu, k = _case_1d()
    with pytest.raises(DomainError):
        noflux_inequality_ratio(_bump(), V, mu, k, np.array([[0.5], [1.5]]))


def test_noflux_growth_exponent():
    V, mu, k = _case_1d()
    flux = VectorFieldFn(lambda p: np.ones_like(p), lambda p: np.zeros(p.shape + (1,)))
    assert noflux_growth_exponent(flux, V, mu, k) == pytest.approx(-1.0, abs=0.05)
    assert abs(noflux_growth_exponent(_bump(), V, mu, k)) < 0.1


@pytest.mark.parametrize(
    "kernel,mu",
    [(Kernel.oned_coulomb(), uniform_interval(1.0)), (Kernel.log(2), uniform_ball(0.5, 2)),
     (Kernel.riesz(1.0, 2), uniform_ball(1.0, 2)), (Kernel.riesz(1.0, 3), uniform_ball(0.8, 3)),
     (Kernel.riesz(0.5, 1), uniform_interval(1.0)), (Kernel.log(1), uniform_interval(0.5))],
    ids=["1d-coulomb", "2d-log", "2d-s1", "3d-coulomb", "1d-s0.5", "1d-log"],
)
def test_closed_self_energy_matches_quadrature(kernel, mu):
    assert mu.self_energy(kernel) == pytest.approx(mu._quadrature_self_energy(kernel), rel=1e-7, abs=1e-9)


def test_torus_uniform_self_energy_zero():
    mu = torus_uniform(2, 1.0)
    assert mu.self_energy(Kernel.torus_riesz(0.0, 2, L=1.0)) == pytest.approx(0.0, abs=1e-14)
