"""Influence-function variance estimate and the one-sided test of ``theta_c >= 0``.

For an observation ``(y, x, w)`` the estimated influence value is

    xi(y, x, w) = 1/pi Re int i t kft(t b)^p [ B1(t) + D(t) B2(t) ] dt

    B1(t) = (h(-t) - (y - c w) f(-t)) e^{itx} / feps(t)
    D(t)  = f(t) h(-t) - f(-t) h(t)
    B2(t) = -e^{itx} / fX(t)
            + int_0^t (-i m3(s) / fW(s) + i x) e^{isw} / fW(s) ds

where ``f``, ``feps``, ``h`` are the Kotlarski-based estimates, ``fX`` and
``fW`` the empirical CFs of ``X`` and ``W`` and ``m3(s) = mean(X e^{isW})``.
``B1`` is the part present when the error CF is known; ``D B2`` accounts for
estimating it.  Both integrands are conjugate-symmetric in ``t``, so only
``t >= 0`` is evaluated.

The kernel power ``p`` is 2 by default, the weight the estimator applies to
each frequency, so that ``xi`` is the linearisation of ``theta_hat`` at the
bandwidth in use; ``p = 1`` is available through ``xi_weight="single"``.

The variance estimate is ``mean(xi^2)`` and the standard error of
``theta_hat`` is ``sqrt(mean(xi^2) / n)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .charfun import CharFunSet, regularize, trapezoid_weights, unit_phases
from .errors import ConfigurationError, DegenerateVarianceError, InvalidInputError, NumericalError
from .estimator import EstimatorConfig, theta_from_cfs
from .ingest import Sample
from .kernels import kft_eval

__all__ = [
    "TestResult",
    "xi_branches",
    "xi_hat_all",
    "variance_estimate",
    "normal_cdf",
    "studentize",
    "run_test",
]

_BLOCK = 256


@dataclass
class TestResult:
    theta_hat: float
    s_hat_sq: float
    std_error: float
    z: float
    p_value: float
    p_value_two_sided: float
    reject: bool
    size: float
    n: int
    c: float = 1.0
    bandwidth: float = float("nan")
    diagnostics: list[str] = field(default_factory=list)

    __test__ = False  # keep pytest from collecting this class

    @property
    def s_hat(self) -> float:
        """Standard deviation of the influence values (not the standard error)."""
        return math.sqrt(self.s_hat_sq)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["s_hat"] = self.s_hat
        return out


def _xi_blocks(sample: Sample, cfs: CharFunSet, b: float, kernel, power: int, *, full: bool):
    """Yield ``(slice, branch1, branch2)`` per observation block.

    Each branch is the value of ``1/pi int ... dt`` over the grid; with
    ``full=True`` the negative frequencies are summed explicitly and complex
    values are returned so the imaginary residual can be inspected.
    """
    cfs.require("mu1", "mu2", "mu3", "f_ft", "feps_ft", "h_ft")
    g = cfs.grid
    if cfs.grid.t_max * b < 1.0 - 1e-12:
        raise ConfigurationError("frequency grid does not reach 1/b")
    rho = cfs.rho
    c = cfs.c if cfs.c is not None else 0.0

    if full:
        t = g.values
        mu1, mu2, mu3 = cfs.mu1, cfs.mu2, cfs.mu3
        f, feps, h = cfs.f_ft, cfs.feps_ft, cfs.h_ft
        f_neg, h_neg = f[::-1], h[::-1]
        wt = trapezoid_weights(g.points, g.spacing)
    else:
        t = g.nonneg
        up = g.upper
        mu1, mu2, mu3 = up(cfs.mu1), up(cfs.mu2), up(cfs.mu3)
        f, feps, h = up(cfs.f_ft), up(cfs.feps_ft), up(cfs.h_ft)
        f_neg, h_neg = np.conj(f), np.conj(h)
        # full-grid trapezoid folded onto t >= 0; the t = 0 node carries a zero integrand
        wt = 2.0 * trapezoid_weights(g.half, g.spacing)

    common = 1j * t * kft_eval(kernel, t * b) ** power * wt / np.pi
    inv_feps = 1.0 / regularize(feps, rho)
    inv_fx = 1.0 / regularize(mu1, rho)
    fw = regularize(mu2, rho)
    a_inner = -1j * mu3 / fw**2
    b_inner = 1.0 / fw
    d = f * h_neg - f_neg * h

    if full:
        zero = g.half - 1
        cum = lambda a: _cum_from_zero(a, g.spacing, zero)
    else:
        cum = lambda a: cumulative_trapezoid(a, dx=g.spacing, axis=-1, initial=0)

    n = sample.n
    for start in range(0, n, _BLOCK):
        sl = slice(start, min(start + _BLOCK, n))
        x = sample.x[sl, None]
        w = sample.w[sl, None]
        r = sample.y[sl, None] - c * sample.w[sl, None]
        if full:
            ex = np.exp(1j * x * t)
            ew = np.exp(1j * w * t)
        else:
            ex = unit_phases(sample.x[sl], t)
            ew = unit_phases(sample.w[sl], t)
        b1 = (h_neg - r * f_neg) * ex * inv_feps
        inner = cum(a_inner * ew) + 1j * x * cum(b_inner * ew)
        b2 = d * (-ex * inv_fx + inner)
        v1 = np.sum(b1 * common, axis=1)
        v2 = np.sum(b2 * common, axis=1)
        yield sl, v1, v2


def _cum_from_zero(a, dx, zero):
    """Cumulative trapezoid integral from the node ``zero`` outward, signed."""
    out = np.zeros_like(a)
    right = a[..., zero:]
    out[..., zero:] = cumulative_trapezoid(right, dx=dx, axis=-1, initial=0)
    left = a[..., :zero + 1][..., ::-1]
    out[..., :zero + 1] = -cumulative_trapezoid(left, dx=dx, axis=-1, initial=0)[..., ::-1]
    return out


def xi_branches(sample: Sample, cfs: CharFunSet, cfg: EstimatorConfig,
                b: Optional[float] = None, check_imag: bool = False):
    """Known-error and CF-estimation parts of the influence values.

    Returns ``(branch1, branch2)`` arrays of length ``n``. With
    ``check_imag=True`` the integral is also taken over negative frequencies
    and a third array with the per-observation imaginary residual is returned.
    """
    if b is None:
        b = cfg.bandwidth_for(sample)
    n = sample.n
    if n == 0:
        raise InvalidInputError("empty sample")
    power = 2 if cfg.xi_weight == "squared" else 1
    if check_imag:
        v1 = np.empty(n, dtype=complex)
        v2 = np.empty(n, dtype=complex)
        for sl, a1, a2 in _xi_blocks(sample, cfs, b, cfg.kernel, power, full=True):
            v1[sl], v2[sl] = a1, a2
        return v1.real, v2.real, np.abs((v1 + v2).imag)
    v1 = np.empty(n)
    v2 = np.empty(n)
    for sl, a1, a2 in _xi_blocks(sample, cfs, b, cfg.kernel, power, full=False):
        v1[sl], v2[sl] = a1.real, a2.real
    return v1, v2


def xi_hat_all(sample: Sample, cfs: CharFunSet, cfg: EstimatorConfig,
               b: Optional[float] = None) -> np.ndarray:
    """Estimated influence value of every observation."""
    v1, v2 = xi_branches(sample, cfs, cfg, b)
    return v1 + v2


def variance_estimate(xi) -> float:
    """Uncentred mean of squares of the influence values."""
    xi = np.asarray(xi, dtype=float)
    if xi.size == 0:
        raise InvalidInputError("no influence values")
    return float(np.mean(xi * xi))


def normal_cdf(z: float) -> float:
    """Standard normal CDF via the complementary error function."""
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def _check_size(size: float):
    if not 0.0 < size < 1.0:
        raise ConfigurationError(f"test size must lie in (0, 1), got {size}")


def studentize(theta_hat: float, std_error: float, size: float = 0.05, *,
               n: int = 0, s_hat_sq: Optional[float] = None, c: float = 1.0) -> TestResult:
    """Lower-tail test of ``theta_c >= 0`` from an estimate and its standard error."""
    _check_size(size)
    if not std_error >= 0:
        raise NumericalError(f"standard error must be nonnegative, got {std_error}")
    diagnostics = []
    if std_error == 0.0:
        if theta_hat != 0.0:
            raise DegenerateVarianceError(
                f"estimated variance is zero while theta_hat = {theta_hat!r}; no test is possible"
            )
        # an identically zero influence function and estimate carry no evidence against H0
        z = 0.0
        diagnostics.append("degenerate variance: theta_hat and every influence value are zero")
    else:
        z = theta_hat / std_error
    p = normal_cdf(z)
    p2 = min(1.0, 2.0 * min(p, 1.0 - p))
    if s_hat_sq is None:
        s_hat_sq = std_error**2 * n if n else float("nan")
    return TestResult(
        theta_hat=float(theta_hat),
        s_hat_sq=float(s_hat_sq),
        std_error=float(std_error),
        z=float(z),
        p_value=float(p),
        p_value_two_sided=float(p2),
        reject=bool(p < size),
        size=float(size),
        n=int(n),
        c=float(c),
        diagnostics=diagnostics,
    )


def run_test(sample: Sample, cfg: EstimatorConfig = EstimatorConfig(), size: float = 0.05,
             cfs: Optional[CharFunSet] = None) -> TestResult:
    """Estimate ``theta_c``, its standard error, and test ``H0: theta_c >= 0``."""
    _check_size(size)
    if cfs is None:
        b, cfs = cfg.cfs_for(sample)
    else:
        b = cfg.bandwidth_for(sample)
    theta, _ = theta_from_cfs(cfs, cfg.kernel, b)
    xi = xi_hat_all(sample, cfs, cfg, b)
    s2 = variance_estimate(xi)
    if not math.isfinite(s2) or not math.isfinite(theta):
        raise NumericalError("non-finite estimate or variance")
    se = math.sqrt(s2 / sample.n)
    result = studentize(theta, se, size, n=sample.n, s_hat_sq=s2, c=cfg.c)
    result.bandwidth = b
    result.diagnostics = list(cfs.diagnostics) + result.diagnostics
    return result
