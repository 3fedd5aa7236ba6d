"""Kernels given by compactly supported Fourier transforms, and their deconvolution versions.

A kernel ``K`` is specified through ``kft``, its Fourier transform, which is
even, equals 1 at the origin and vanishes outside ``[-1, 1]``. The
deconvolution kernel for bandwidth ``b`` divides ``kft(t)`` by the error CF at
``t / b`` before inverting:

    KK(u) = 1/(2 pi) int exp(-i t u) kft(t) / feps(t / b) dt.

With the substitution ``t = b s`` the integral runs over the CF grid itself,
so no interpolation of ``feps`` is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .charfun import CharFunSet, cf_sums, regularize, trapezoid_weights
from .errors import ConfigurationError, NumericalError

__all__ = [
    "KernelSpec",
    "FLAT_TOP",
    "POLYNOMIAL_ORDER2",
    "get_kernel",
    "kft_eval",
    "kernel_eval",
    "default_bandwidth",
    "check_grid_covers",
    "deconv_weights",
    "deconv_kernel_eval",
    "deconv_kernel_deriv",
    "deconv_density",
]

KERNEL_NAMES = ("flat_top_trapezoid", "polynomial_order2")


@dataclass(frozen=True)
class KernelSpec:
    name: str = "flat_top_trapezoid"
    order: Union[int, str] = "infinite"

    def __post_init__(self):
        if self.name not in KERNEL_NAMES:
            raise ConfigurationError(
                f"unknown kernel {self.name!r}; choose one of {', '.join(KERNEL_NAMES)}"
            )

    def kft(self, t):
        return kft_eval(self, t)


FLAT_TOP = KernelSpec("flat_top_trapezoid", "infinite")
POLYNOMIAL_ORDER2 = KernelSpec("polynomial_order2", 2)


def get_kernel(name: str) -> KernelSpec:
    if name == FLAT_TOP.name:
        return FLAT_TOP
    if name == POLYNOMIAL_ORDER2.name:
        return POLYNOMIAL_ORDER2
    raise ConfigurationError(f"unknown kernel {name!r}; choose one of {', '.join(KERNEL_NAMES)}")


def kft_eval(spec: KernelSpec, t):
    """Fourier transform of the kernel.

    ``flat_top_trapezoid`` is 1 on ``|t| <= 1/2`` and falls linearly to 0 at
    ``|t| = 1``; ``polynomial_order2`` is ``(1 - t^2)^3`` on ``[-1, 1]``.
    """
    t = np.asarray(t, dtype=float)
    a = np.abs(t)
    if spec.name == "flat_top_trapezoid":
        out = np.where(a <= 0.5, 1.0, np.where(a <= 1.0, 2.0 * (1.0 - a), 0.0))
    else:
        out = np.where(a <= 1.0, (1.0 - t * t) ** 3, 0.0)
    return out if out.ndim else float(out)


def _kft_even_moments(spec: KernelSpec, terms: int) -> np.ndarray:
    """``int_0^1 t^(2k) kft(t) dt`` for ``k = 0 .. terms - 1``."""
    k = np.arange(terms, dtype=float)
    p = 2.0 * k
    if spec.name == "flat_top_trapezoid":
        return (0.5 ** (p + 1) / (p + 1)
                + 2.0 * ((1.0 - 0.5 ** (p + 1)) / (p + 1) - (1.0 - 0.5 ** (p + 2)) / (p + 2)))
    return 1.0 / (p + 1) - 3.0 / (p + 3) + 3.0 / (p + 5) - 1.0 / (p + 7)


def kernel_eval(spec: KernelSpec, u):
    """Closed-form kernel ``K(u) = 1/pi int_0^1 cos(tu) kft(t) dt``.

    A cosine power series replaces the closed form near 0, where the latter
    cancels catastrophically.
    """
    u = np.asarray(u, dtype=float)
    small = np.abs(u) < 1.0
    us = np.where(small, 1.0, u)
    if spec.name == "flat_top_trapezoid":
        big = 2.0 * (np.cos(0.5 * us) - np.cos(us)) / us**2
    else:
        u2 = us * us
        big = 48.0 * ((15.0 - 6.0 * u2) * np.sin(us) - (15.0 - u2) * us * np.cos(us)) / us**7
    terms = 20
    k = np.arange(terms)
    coef = (-1.0) ** k / np.array([math.factorial(2 * j) for j in k], dtype=float)
    coef = coef * _kft_even_moments(spec, terms)
    uu = np.where(small, u, 0.0)
    series = np.polynomial.polynomial.polyval(uu * uu, coef)
    out = np.where(small, series, big) / np.pi
    return out if out.ndim else float(out)


def default_bandwidth(x, scale: float = 1.0) -> float:
    """Rule-of-thumb bandwidth ``scale * sd(x) * n^(-1/6)``."""
    x = np.asarray(x, dtype=float)
    sd = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    if not sd > 0:
        raise ConfigurationError("cannot pick a bandwidth for a constant regressor; pass one explicitly")
    return scale * sd * x.size ** (-1.0 / 6.0)


def check_grid_covers(cfs: CharFunSet, b: float) -> None:
    if not b > 0:
        raise ConfigurationError(f"bandwidth must be positive, got {b}")
    if cfs.grid.t_max * b < 1.0 - 1e-12:
        raise ConfigurationError(
            f"frequency grid reaches {cfs.grid.t_max:.6g} but the kernel needs 1/b = {1.0 / b:.6g}"
        )


def deconv_weights(spec: KernelSpec, cfs: CharFunSet, b: float, feps=None) -> np.ndarray:
    """Trapezoid weights times ``kft(b s) / feps(s)`` over the full grid.

    ``feps`` overrides ``cfs.feps_ft`` with a known error CF sampled on the
    grid; a known CF is used as is, without the regularization floor.
    """
    check_grid_covers(cfs, b)
    if feps is None:
        cfs.require("feps_ft")
        denom = regularize(cfs.feps_ft, cfs.rho)
    else:
        denom = np.asarray(feps)
    g = cfs.grid
    return trapezoid_weights(g.points, g.spacing) * kft_eval(spec, b * g.values) / denom


def _invert(weights, s, b, u, factor=None):
    u = np.atleast_1d(np.asarray(u, dtype=float))
    coef = weights if factor is None else weights * factor
    vals = np.empty(u.shape, dtype=complex)
    flat_u = u.ravel()
    out = vals.ravel()
    for start in range(0, flat_u.size, 256):
        block = flat_u[start:start + 256]
        out[start:start + 256] = np.exp(-1j * b * np.outer(block, s)) @ coef
    return vals * (b / (2.0 * np.pi))


def _real(vals, label):
    scale = max(1.0, float(np.max(np.abs(vals.real))) if vals.size else 1.0)
    resid = float(np.max(np.abs(vals.imag))) if vals.size else 0.0
    if resid > 1e-8 * scale:
        raise NumericalError(f"{label}: imaginary residual {resid:.3g} breaks conjugate symmetry")
    return vals.real


def deconv_kernel_eval(spec: KernelSpec, cfs: CharFunSet, b: float, u, feps=None):
    """Deconvolution kernel at ``u`` by trapezoid inversion on the CF grid."""
    w = deconv_weights(spec, cfs, b, feps)
    out = _real(_invert(w, cfs.grid.values, b, u), "deconvolution kernel")
    return out if np.ndim(u) else float(out[0])


def deconv_kernel_deriv(spec: KernelSpec, cfs: CharFunSet, b: float, u, feps=None):
    """Derivative in ``u`` of the deconvolution kernel (an extra ``-i b s`` factor)."""
    s = cfs.grid.values
    w = deconv_weights(spec, cfs, b, feps)
    out = _real(_invert(w, s, b, u, factor=-1j * b * s), "deconvolution kernel derivative")
    return out if np.ndim(u) else float(out[0])


def deconv_density(sample_x, spec: KernelSpec, cfs: CharFunSet, b: float, xgrid, feps=None):
    """Deconvolution density estimate of the latent regressor on ``xgrid``.

    Equals ``1/(n b) sum_j KK((x - X_j)/b)``. Summing over observations
    inside the frequency integral first gives the same trapezoid sum as

        1/(2 pi) sum_s w_s kft(b s) / feps(s) exp(-i s x) mean_j exp(i s X_j)

    at ``O(G (n + len(xgrid)))`` cost.
    """
    xs = np.asarray(sample_x, dtype=float)
    if xs.size == 0:
        raise ConfigurationError("deconv_density needs at least one observation")
    weights = deconv_weights(spec, cfs, b, feps)
    g = cfs.grid
    (sums,) = cf_sums(xs, [np.ones(xs.size)], g.nonneg)
    phi = g.mirror(sums / xs.size)
    coef = weights * phi / (2.0 * np.pi)
    xg = np.atleast_1d(np.asarray(xgrid, dtype=float))
    out = np.empty(xg.shape, dtype=complex)
    for start in range(0, xg.size, 256):
        block = xg[start:start + 256]
        out[start:start + 256] = np.exp(-1j * np.outer(block, g.values)) @ coef
    return _real(out, "deconvolution density")
