"""Density-weighted average derivative of a latent regressor.

The target is ``theta_c = E[(g'(X*) - c) f(X*)]``, estimated by

    theta_c = -2/(n^2 b^3) sum_j sum_k (Y_j - c W_j)
              int KK((x - X_j)/b) KK'((x - X_k)/b) dx

with ``KK`` the deconvolution kernel built from the Kotlarski estimate of the
error CF. Writing both kernels as inverse Fourier integrals, the ``x``
integral collapses to a delta function in frequency and the double sum
factorises, leaving a single integral over the CF grid ``s = t / b``:

    theta_c = -1/pi Re int i s |kft(b s)|^2 / |feps(s)|^2
              * mean((Y - cW) e^{isX}) * conj(mean(e^{isX})) ds

which costs ``O(n G)`` instead of ``O(n^2)`` kernel-pair integrals.
:func:`estimate_theta_direct` keeps the literal double sum as a check.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .charfun import (
    CharFunSet,
    FreqGrid,
    empirical_cfs,
    estimate_cfs,
    regularize,
    trapezoid_weights,
)
from .errors import ConfigurationError, NumericalError
from .ingest import Sample
from .kernels import FLAT_TOP, KernelSpec, check_grid_covers, default_bandwidth, get_kernel, kft_eval

__all__ = [
    "EstimatorConfig",
    "ThetaEstimate",
    "estimate_theta",
    "estimate_theta_direct",
    "estimate_theta_known_error",
    "theta_from_cfs",
    "period_xgrid",
    "literal_xgrid",
]

DIRECT_MAX_N = 200


@dataclass(frozen=True)
class EstimatorConfig:
    """Settings shared by the estimator and the variance estimator.

    ``bandwidth=None`` selects ``bandwidth_scale * sd(X) * n^(-1/6)`` and
    ``rho=None`` selects the floor ``n^(-1/2)``. The frequency grid always
    spans ``[-1/b, 1/b]`` with ``grid_points`` nodes.

    ``xi_weight`` sets the kernel factor in the influence-function integral:
    ``"squared"`` uses ``kft(tb)^2``, the weight the estimator itself applies,
    so the influence values linearise the estimator at the chosen bandwidth;
    ``"single"`` uses ``kft(tb)`` once, which overstates the standard error
    whenever ``kft < 1`` carries weight.
    """

    c: float = 1.0
    bandwidth: Optional[float] = None
    bandwidth_scale: float = 1.0
    kernel: KernelSpec = FLAT_TOP
    grid_points: int = 4097
    rho: Optional[float] = None
    saturation_fraction: float = 0.5
    xi_weight: str = "squared"

    def __post_init__(self):
        if isinstance(self.kernel, str):
            object.__setattr__(self, "kernel", get_kernel(self.kernel))
        if not np.isfinite(self.c):
            raise ConfigurationError(f"c must be finite, got {self.c}")
        if self.bandwidth is not None and not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ConfigurationError(f"bandwidth must be positive, got {self.bandwidth}")
        if not (np.isfinite(self.bandwidth_scale) and self.bandwidth_scale > 0):
            raise ConfigurationError(f"bandwidth_scale must be positive, got {self.bandwidth_scale}")
        if int(self.grid_points) != self.grid_points or self.grid_points < 3 or self.grid_points % 2 == 0:
            raise ConfigurationError(f"grid_points must be an odd integer >= 3, got {self.grid_points}")
        if self.rho is not None and not (np.isfinite(self.rho) and self.rho >= 0):
            raise ConfigurationError(f"rho must be nonnegative, got {self.rho}")
        if not 0 < self.saturation_fraction <= 1:
            raise ConfigurationError(f"saturation_fraction must lie in (0, 1], got {self.saturation_fraction}")
        if self.xi_weight not in ("squared", "single"):
            raise ConfigurationError(f"xi_weight must be 'squared' or 'single', got {self.xi_weight!r}")

    def bandwidth_for(self, sample: Sample) -> float:
        if self.bandwidth is not None:
            return float(self.bandwidth)
        return default_bandwidth(sample.x, self.bandwidth_scale)

    def rho_for(self, n: int) -> float:
        return n ** -0.5 if self.rho is None else float(self.rho)

    def grid_for(self, b: float) -> FreqGrid:
        return FreqGrid.for_bandwidth(b, self.grid_points)

    def cfs_for(self, sample: Sample) -> tuple[float, CharFunSet]:
        """Resolve the bandwidth and compute every CF array the estimators need."""
        b = self.bandwidth_for(sample)
        cfs = estimate_cfs(sample, self.grid_for(b), self.c, self.rho_for(sample.n),
                           self.saturation_fraction)
        return b, cfs

    def resolved(self, sample: Sample) -> dict:
        """Plain-value record of the configuration after ``auto`` choices are made."""
        b = self.bandwidth_for(sample)
        return {
            "c": float(self.c),
            "bandwidth": b,
            "bandwidth_rule": "fixed" if self.bandwidth is not None
            else f"{self.bandwidth_scale!r}*sd(X)*n^(-1/6)",
            "kernel": self.kernel.name,
            "grid_points": int(self.grid_points),
            "t_max": 1.0 / b,
            "rho": self.rho_for(sample.n),
            "xi_weight": self.xi_weight,
        }


@dataclass
class ThetaEstimate:
    theta_hat: float
    c: float
    n: int
    bandwidth: float
    imag_residual: float = 0.0
    method: str = "fourier"
    diagnostics: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _check_real(value: complex, label: str) -> tuple[float, float]:
    resid = abs(value.imag)
    if resid > 1e-6 * max(1.0, abs(value.real)):
        raise NumericalError(f"{label}: imaginary residual {resid:.3g} is not negligible")
    # adding 0.0 turns a negative zero into 0.0
    return float(value.real) + 0.0, float(resid)


def theta_from_cfs(cfs: CharFunSet, kernel: KernelSpec, b: float, feps=None) -> tuple[float, float]:
    """Frequency-domain estimate from precomputed CF arrays.

    Returns ``(theta_hat, imaginary_residual)``. ``feps`` substitutes a known
    error CF sampled on the full grid (used without regularization).
    """
    cfs.require("h_num", "mu1")
    check_grid_covers(cfs, b)
    g = cfs.grid
    s = g.values
    if feps is None:
        cfs.require("feps_ft")
        denom = np.abs(regularize(cfs.feps_ft, cfs.rho)) ** 2
    else:
        denom = np.abs(np.asarray(feps)) ** 2
    k2 = kft_eval(kernel, b * s) ** 2
    integrand = 1j * s * (k2 / denom) * cfs.h_num * np.conj(cfs.mu1)
    total = -np.sum(trapezoid_weights(g.points, g.spacing) * integrand) / np.pi
    return _check_real(complex(total), "theta")


def _check_n(sample: Sample):
    if sample.n < 2:
        raise ConfigurationError(f"need at least 2 observations, got {sample.n}")


def estimate_theta(sample: Sample, cfg: EstimatorConfig = EstimatorConfig(),
                   cfs: Optional[CharFunSet] = None) -> ThetaEstimate:
    """Estimate ``theta_c`` with the Kotlarski-estimated error CF.

    ``cfs`` may be passed to reuse arrays from :meth:`EstimatorConfig.cfs_for`.
    """
    _check_n(sample)
    if cfs is None:
        b, cfs = cfg.cfs_for(sample)
    else:
        b = cfg.bandwidth_for(sample)
    theta, resid = theta_from_cfs(cfs, cfg.kernel, b)
    return ThetaEstimate(theta, float(cfg.c), sample.n, b, resid, "fourier", list(cfs.diagnostics))


def estimate_theta_known_error(sample: Sample, cfg: EstimatorConfig,
                               feps_ft_true: Callable[[np.ndarray], np.ndarray]) -> ThetaEstimate:
    """Estimate ``theta_c`` when the error CF of ``X`` is known.

    ``feps_ft_true`` is evaluated on the frequency grid and replaces the
    Kotlarski estimate everywhere, including inside ``h_c``.
    """
    _check_n(sample)
    b = cfg.bandwidth_for(sample)
    grid = cfg.grid_for(b)
    cfs = empirical_cfs(sample, grid, cfg.rho_for(sample.n), c=cfg.c)
    feps = np.asarray(feps_ft_true(grid.values), dtype=complex)
    theta, resid = theta_from_cfs(cfs, cfg.kernel, b, feps=feps)
    return ThetaEstimate(theta, float(cfg.c), sample.n, b, resid, "fourier-known-error", [])


def period_xgrid(grid: FreqGrid, center: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights covering one period of the discretised kernels.

    A kernel inverted by trapezoid sums on a grid with spacing ``ds`` is
    periodic in ``x`` with period ``2 pi / ds``; integrating over exactly one
    period with ``G`` equispaced nodes is exact for the products formed here.
    """
    period = 2.0 * np.pi / grid.spacing
    n = grid.points
    x = center - 0.5 * period + np.arange(n) * (period / n)
    return x, np.full(n, period / n)


def literal_xgrid(sample: Sample, b: float, pad: float = 10.0, points: int = 2001) -> np.ndarray:
    """``[min X - pad b, max X + pad b]`` with ``points`` nodes."""
    return np.linspace(sample.x.min() - pad * b, sample.x.max() + pad * b, points)


def _trapezoid_nodes_weights(x):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 2 or np.any(np.diff(x) <= 0):
        raise ConfigurationError("xgrid must be a strictly increasing array with at least 2 nodes")
    d = np.diff(x)
    w = np.zeros_like(x)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return x, w


def estimate_theta_direct(sample: Sample, cfg: EstimatorConfig = EstimatorConfig(),
                          xgrid=None, max_n: int = DIRECT_MAX_N,
                          cfs: Optional[CharFunSet] = None) -> ThetaEstimate:
    """Literal double-sum estimate; ``O(n^2)`` and meant as a check.

    Evaluates the deconvolution kernel and its derivative at every
    ``(x - X_j) / b`` and integrates each of the ``n^2`` products over ``x``.
    Without ``xgrid`` the ``x`` integral covers one full period of the
    discretised kernels (see :func:`period_xgrid`); a user ``xgrid`` is
    integrated by the trapezoid rule and truncates the kernel tails.
    """
    _check_n(sample)
    if sample.n > max_n:
        raise ConfigurationError(
            f"direct double sum refused for n={sample.n} > {max_n}: it needs n^2 kernel-pair "
            "integrals; use estimate_theta or raise max_n"
        )
    if cfs is None:
        b, cfs = cfg.cfs_for(sample)
    else:
        b = cfg.bandwidth_for(sample)
    check_grid_covers(cfs, b)
    cfs.require("feps_ft")
    g = cfs.grid
    s = g.values
    if xgrid is None:
        x, wx = period_xgrid(g, center=float(np.mean(sample.x)))
    else:
        x, wx = _trapezoid_nodes_weights(xgrid)

    # KK((x - X_j)/b) = b/(2 pi) sum_s w_s kft(b s)/feps(s) exp(-i s x) exp(i s X_j); the
    # summand at -s is the conjugate of the one at s, so sum s >= 0 and double
    sh = g.nonneg
    ws = trapezoid_weights(g.points, g.spacing)[g.half - 1:] * kft_eval(cfg.kernel, b * sh)
    ws = ws / regularize(g.upper(cfs.feps_ft), cfs.rho) * (b / np.pi)
    ws[0] *= 0.5
    ex = np.exp(-1j * np.outer(x, sh))
    ej = np.exp(1j * np.outer(sh, sample.x))
    kk = ((ex * ws) @ ej).real
    dkk = ((ex * (ws * (-1j * b * sh))) @ ej).real
    pair = kk.T @ (wx[:, None] * dkk)
    r = sample.y - cfg.c * sample.w
    n = sample.n
    theta = -2.0 / (n * n * b**3) * float(r @ pair.sum(axis=1)) + 0.0
    return ThetaEstimate(theta, float(cfg.c), n, b, 0.0, "direct", list(cfs.diagnostics))
