import numpy as np
import pytest
from scipy import integrate

import oracles
from latentad.charfun import FreqGrid, estimate_cfs, population_cfs
from latentad.errors import ConfigurationError
from latentad.ingest import Sample
from latentad.kernels import (
    FLAT_TOP,
    POLYNOMIAL_ORDER2,
    KernelSpec,
    deconv_density,
    deconv_kernel_deriv,
    deconv_kernel_eval,
    default_bandwidth,
    get_kernel,
    kernel_eval,
    kft_eval,
)
from latentad.simulate import dgp_draw, standard_normals, stream

KERNELS = [FLAT_TOP, POLYNOMIAL_ORDER2]


def unit_error_cfs(b, points=4097):
    one = lambda t: np.ones_like(t)
    return population_cfs(FreqGrid(1.0 / b, points), f_ft=oracles.gaussian_cf, feps_ft=one,
                          fnu_ft=one, h_ft=lambda t: 0.0 * t, dlog_f_ft=lambda t: -t)


def test_kft_examples():
    assert kft_eval(FLAT_TOP, 0.0) == 1.0
    assert kft_eval(FLAT_TOP, 0.75) == 0.5
    assert kft_eval(POLYNOMIAL_ORDER2, 1.0) == 0.0
    assert kft_eval(POLYNOMIAL_ORDER2, -1.0) == 0.0


@pytest.mark.parametrize("spec", KERNELS)
def test_kft_invariants(spec):
    t = np.linspace(-2, 2, 801)
    k = kft_eval(spec, t)
    np.testing.assert_array_equal(k, kft_eval(spec, -t))
    assert np.all(k[np.abs(t) > 1] == 0)
    assert np.all(np.abs(k) <= 1)


def test_unknown_kernel():
    with pytest.raises(ConfigurationError):
        KernelSpec("gaussian")
    with pytest.raises(ConfigurationError):
        get_kernel("epanechnikov")


@pytest.mark.parametrize("spec", KERNELS)
def test_kernel_closed_form_against_quadrature(spec):
    for u in (0.0, 1e-4, 0.3, 1.0, 2.0, 5.5, -7.0, 30.0):
        assert kernel_eval(spec, u) == pytest.approx(oracles.kernel_quad(spec.name, u), abs=1e-13)


# oscillatory tails beyond A as (power of 1/u) x (cos or sin) terms, for QAWF quadrature
_TAILS = {
    "flat_top_trapezoid": [(2.0, 2, "cos", 0.5), (-2.0, 2, "cos", 1.0)],
    "polynomial_order2": [(48 * 15.0, 7, "sin", 1.0), (-48 * 6.0, 5, "sin", 1.0),
                          (-48 * 15.0, 6, "cos", 1.0), (48.0, 4, "cos", 1.0)],
}


@pytest.mark.parametrize("spec", KERNELS)
def test_kernel_integrates_to_one(spec):
    a = 20.0
    body, _ = integrate.quad(lambda u: kernel_eval(spec, u), 0.0, a, limit=400, epsabs=1e-13)
    tail = 0.0
    for coef, power, trig, omega in _TAILS[spec.name]:
        val, _ = integrate.quad(lambda u: u ** -power, a, np.inf, weight=trig, wvar=omega)
        tail += coef * val / np.pi
    assert 2 * (body + tail) == pytest.approx(kft_eval(spec, 0.0), abs=1e-6)


def test_polynomial_kernel_moments():
    first, _ = integrate.quad(lambda u: u * kernel_eval(POLYNOMIAL_ORDER2, u), -200, 200, limit=4000)
    second, _ = integrate.quad(lambda u: u * u * kernel_eval(POLYNOMIAL_ORDER2, u), -200, 200, limit=4000)
    assert abs(first) < 1e-8
    # int u^2 K = -kft''(0) = 6
    assert second == pytest.approx(6.0, rel=1e-2)


@pytest.mark.parametrize("spec", KERNELS)
def test_deconv_kernel_with_unit_error(spec):
    u = np.linspace(-5, 5, 201)
    got = deconv_kernel_eval(spec, unit_error_cfs(0.4), 0.4, u)
    assert np.max(np.abs(got - oracles.kernel(spec.name)(u))) <= 1e-6


def test_deconv_kernel_unit_error_examples():
    cfs = unit_error_cfs(0.5)
    for u in (0.0, 1.0, 2.0):
        assert deconv_kernel_eval(FLAT_TOP, cfs, 0.5, u) == pytest.approx(
            oracles.kernel_quad(FLAT_TOP.name, u), abs=1e-6)


def test_deconv_kernel_even_for_real_error_cf():
    g = FreqGrid(2.0, 2049)
    cfs = population_cfs(g, f_ft=oracles.gaussian_cf, feps_ft=lambda t: np.exp(-0.3 * t * t),
                         fnu_ft=oracles.gaussian_cf, h_ft=lambda t: 0 * t, dlog_f_ft=lambda t: -t)
    u = np.linspace(0, 6, 25)
    a = deconv_kernel_eval(FLAT_TOP, cfs, 0.5, u)
    b = deconv_kernel_eval(FLAT_TOP, cfs, 0.5, -u)
    np.testing.assert_allclose(a, b, atol=1e-8)


def test_deconv_kernel_imaginary_residual_small():
    s = dgp_draw(400, 0.2, stream(1, 1))
    b = default_bandwidth(s.x)
    cfs = estimate_cfs(s, FreqGrid.for_bandwidth(b, 1025))
    # raises if the imaginary part exceeds 1e-8
    deconv_kernel_eval(FLAT_TOP, cfs, b, np.linspace(-10, 10, 41))
    deconv_kernel_deriv(FLAT_TOP, cfs, b, np.linspace(-10, 10, 41))


def test_deconv_kernel_derivative_finite_difference():
    s = dgp_draw(300, 0.2, stream(1, 2))
    b = default_bandwidth(s.x)
    cfs = estimate_cfs(s, FreqGrid.for_bandwidth(b, 1025))
    u = np.array([-1.3, 0.2, 2.4])
    h = 1e-5
    fd = (deconv_kernel_eval(FLAT_TOP, cfs, b, u + h) - deconv_kernel_eval(FLAT_TOP, cfs, b, u - h)) / (2 * h)
    np.testing.assert_allclose(deconv_kernel_deriv(FLAT_TOP, cfs, b, u), fd, atol=1e-7)


def test_grid_too_narrow():
    cfs = unit_error_cfs(1.0)
    with pytest.raises(ConfigurationError):
        deconv_kernel_eval(FLAT_TOP, cfs, 0.5, 0.0)


def test_density_integrates_to_one():
    s = dgp_draw(10_000, 0.3, stream(2, 0))
    b = default_bandwidth(s.x)
    cfs = estimate_cfs(s, FreqGrid.for_bandwidth(b))
    xg = np.linspace(-40, 40, 8001)
    dens = deconv_density(s.x, FLAT_TOP, cfs, b, xg)
    assert integrate.trapezoid(dens, xg) == pytest.approx(1.0, abs=0.02)


def test_density_zero_error_matches_kde():
    # without the floor: where |f_ft| < rho the floor replaces tiny CF values by rho,
    # which moves the estimate by a few 1e-4 even when there is no error at all
    z = standard_normals(stream(3, 0), (2, 2000))
    s = Sample(z[1], z[0], z[0])
    b = default_bandwidth(s.x)
    cfs = estimate_cfs(s, FreqGrid.for_bandwidth(b), rho=0.0)
    xg = np.linspace(-3, 3, 121)
    got = deconv_density(s.x, FLAT_TOP, cfs, b, xg)
    assert np.max(np.abs(got - oracles.kde(s.x, xg, b))) <= 1e-4


def test_density_single_point():
    cfs = unit_error_cfs(0.5)
    xg = np.linspace(-2, 2, 9)
    got = deconv_density([0.0], FLAT_TOP, cfs, 0.5, xg)
    np.testing.assert_allclose(got, deconv_kernel_eval(FLAT_TOP, cfs, 0.5, xg / 0.5) / 0.5, atol=1e-14)


def test_default_bandwidth_rule():
    x = np.array([0.0, 1.0, 2.0, 3.0])
    assert default_bandwidth(x, 2.0) == pytest.approx(2.0 * np.std(x, ddof=1) * 4 ** (-1 / 6))
    with pytest.raises(ConfigurationError):
        default_bandwidth(np.ones(5))
