"""Reference implementations that share no code with the package.

Kernel formulas are derived symbolically with sympy from the kernel Fourier
transforms; everything else uses scipy quadrature or mpmath.
"""

from __future__ import annotations

import math
from functools import lru_cache

import mpmath
import numpy as np
import sympy as sp
from scipy import integrate

_t, _u = sp.symbols("t u", real=True)
_SERIES_CUTOFF = 2.0
_SERIES_ORDER = 40


def _kft_pieces(name):
    """``(expression, lower, upper)`` pieces of kft on ``[0, 1]``."""
    if name == "flat_top_trapezoid":
        return [(sp.Integer(1), 0, sp.Rational(1, 2)), (2 * (1 - _t), sp.Rational(1, 2), 1)]
    if name == "polynomial_order2":
        return [((1 - _t**2) ** 3, 0, 1)]
    raise ValueError(name)


def _kft_numeric(name):
    if name == "flat_top_trapezoid":
        return lambda t: 1.0 if abs(t) <= 0.5 else (2.0 * (1.0 - abs(t)) if abs(t) <= 1.0 else 0.0)
    return lambda t: (1.0 - t * t) ** 3 if abs(t) <= 1.0 else 0.0


def _lambdify_with_series(expr_of_t, trig):
    """``(1/pi) int_0^1 expr(t) trig(t u) dt`` as a vectorised numpy function."""
    closed = sp.Integer(0)
    series = sp.Integer(0)
    for piece, lo, hi in expr_of_t:
        closed += sp.integrate(piece * trig(_t * _u), (_t, lo, hi))
        taylor = sp.series(trig(_t * _u), _u, 0, _SERIES_ORDER).removeO()
        series += sp.integrate(sp.expand(piece * taylor), (_t, lo, hi))
    f_closed = sp.lambdify(_u, closed / sp.pi, "numpy")
    f_series = sp.lambdify(_u, sp.expand(series) / sp.pi, "numpy")

    def evaluate(u):
        u = np.asarray(u, dtype=float)
        small = np.abs(u) < _SERIES_CUTOFF
        safe = np.where(small, 1.0, u)
        return np.where(small, f_series(np.where(small, u, 0.0)) + 0.0 * u, f_closed(safe))

    return evaluate


@lru_cache(maxsize=None)
def kernel(name):
    """Kernel ``K(u) = 1/(2 pi) int exp(-itu) kft(t) dt``."""
    return _lambdify_with_series(_kft_pieces(name), sp.cos)


@lru_cache(maxsize=None)
def convolved_kernel_derivative(name):
    """Derivative of ``L = K * K``: ``L'(u) = -(1/pi) int_0^1 t sin(tu) kft(t)^2 dt``."""
    pieces = [(-_t * p**2, lo, hi) for p, lo, hi in _kft_pieces(name)]
    return _lambdify_with_series(pieces, sp.sin)


def kernel_quad(name, u):
    """``K(u)`` by adaptive quadrature, for spot checks of :func:`kernel`."""
    k = _kft_numeric(name)
    val, _ = integrate.quad(lambda t: k(t) * math.cos(t * u), 0.0, 1.0, points=[0.5], limit=200,
                            epsabs=1e-14, epsrel=1e-13)
    return val / math.pi


def convolved_kernel_derivative_quad(name, u):
    k = _kft_numeric(name)
    val, _ = integrate.quad(lambda t: -t * k(t) ** 2 * math.sin(t * u), 0.0, 1.0, points=[0.5],
                            limit=200, epsabs=1e-14, epsrel=1e-13)
    return val / math.pi


def pss_theta(y, x, w, b, c, name="flat_top_trapezoid"):
    """Powell-Stock-Stoker statistic ``-(2/n) sum_j (Y_j - c W_j) f'(X_j)``.

    The density estimate uses the kernel ``K * K`` (transform ``kft^2``),
    ``f(x) = 1/(n b) sum_k L((x - X_k)/b)``. The estimator with a unit error
    CF uses the same squared transform, so the two agree up to the
    diagonal terms, and those vanish because ``L'(0) = 0``.
    """
    y, x, w = (np.asarray(a, dtype=float) for a in (y, x, w))
    n = x.size
    lp = convolved_kernel_derivative(name)
    fprime = lp((x[:, None] - x[None, :]) / b).sum(axis=1) / (n * b * b)
    return float(-2.0 / n * np.sum((y - c * w) * fprime))


def kde(sample_x, xgrid, b, name="flat_top_trapezoid"):
    """Ordinary kernel density estimate with kernel ``K``."""
    k = kernel(name)
    sample_x = np.asarray(sample_x, dtype=float)
    u = (np.asarray(xgrid, dtype=float)[:, None] - sample_x[None, :]) / b
    return k(u).sum(axis=1) / (sample_x.size * b)


def theta_target(delta):
    """``-delta * int phi(x)^2 dx`` by quadrature."""
    val, _ = integrate.quad(lambda x: (math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)) ** 2,
                            -np.inf, np.inf, epsabs=1e-14)
    return -delta * val


def normal_cdf_mp(z, dps=40):
    with mpmath.workdps(dps):
        return float(mpmath.ncdf(z))


def gaussian_cf(t):
    return np.exp(-0.5 * np.asarray(t, dtype=float) ** 2)
