"""Empirical characteristic functions and Kotlarski deconvolution.

Every array lives on a :class:`FreqGrid`, a uniform odd-length grid on
``[-t_max, t_max]`` with 0 at its centre. Arrays are computed for ``t >= 0``
and mirrored by conjugation, so ``a(-t) == conj(a(t))`` holds bit-for-bit.

Wherever a characteristic function is divided by, its modulus is floored at
``rho`` with the phase kept (see :func:`regularize`).
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import ConfigurationError, InvalidInputError, InvalidStateError
from .ingest import Sample

__all__ = [
    "FreqGrid",
    "CharFunSet",
    "regularize",
    "trapezoid_weights",
    "unit_phases",
    "cf_sums",
    "empirical_cfs",
    "kotlarski_f_ft",
    "error_cf",
    "outcome_cf",
    "h_ft_estimate",
    "estimate_cfs",
    "population_cfs",
    "dump_cfs_csv",
]

#: default fraction of grid points allowed to hit the regularization floor
SATURATION_FRACTION = 0.5

_CHUNK = 512


@dataclass(frozen=True)
class FreqGrid:
    """Uniform symmetric frequency grid with ``points`` nodes on ``[-t_max, t_max]``."""

    t_max: float
    points: int = 4097

    def __post_init__(self):
        if not (np.isfinite(self.t_max) and self.t_max > 0):
            raise ConfigurationError(f"t_max must be positive, got {self.t_max}")
        if int(self.points) != self.points or self.points < 3 or self.points % 2 == 0:
            raise ConfigurationError(f"grid points must be an odd integer >= 3, got {self.points}")
        object.__setattr__(self, "points", int(self.points))
        object.__setattr__(self, "t_max", float(self.t_max))

    @classmethod
    def for_bandwidth(cls, b: float, points: int = 4097) -> "FreqGrid":
        return cls(1.0 / b, points)

    @property
    def half(self) -> int:
        """Number of nodes with ``t >= 0``."""
        return (self.points + 1) // 2

    @property
    def spacing(self) -> float:
        return 2.0 * self.t_max / (self.points - 1)

    @property
    def nonneg(self) -> np.ndarray:
        return np.arange(self.half) * self.spacing

    @property
    def values(self) -> np.ndarray:
        t = self.nonneg
        return np.concatenate([-t[:0:-1], t])

    def mirror(self, a_half: np.ndarray) -> np.ndarray:
        """Extend values on ``t >= 0`` to the full grid by conjugate reflection."""
        a_half = np.asarray(a_half)
        return np.concatenate([np.conj(a_half[:0:-1]), a_half])

    def upper(self, a: np.ndarray) -> np.ndarray:
        """The ``t >= 0`` half of a full-grid array (a view)."""
        return a[self.half - 1:]

    def refined(self) -> "FreqGrid":
        """Same range with the spacing halved (``G -> 2G - 1``)."""
        return FreqGrid(self.t_max, 2 * self.points - 1)


def trapezoid_weights(n: int, dx: float) -> np.ndarray:
    w = np.full(n, dx)
    w[0] = w[-1] = 0.5 * dx
    return w


def regularize(d: np.ndarray, rho: float) -> np.ndarray:
    """Clip the modulus of ``d`` below at ``rho``, keeping its phase."""
    d = np.asarray(d)
    if rho <= 0:
        return d
    mag = np.abs(d)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(mag < rho, rho / mag, 1.0)
        out = d * scale
    # exact zeros have no phase; put them on the positive real axis
    return np.where(mag == 0, rho + 0j, out)


def _floor_hits(d: np.ndarray, rho: float) -> float:
    return float(np.mean(np.abs(d) < rho)) if rho > 0 else 0.0


def unit_phases(values, t, block: int = 64) -> np.ndarray:
    """``exp(i v t)`` for every ``v`` in ``values`` (rows) and ``t`` (columns).

    When ``t`` is ``0, dt, 2 dt, ...`` the table is assembled from coarse and
    fine powers, ``exp(i v (a + b) dt) = exp(i v a dt) exp(i v b dt)``, which
    needs about ``len(t) / block + block`` exponentials per value instead of
    ``len(t)``; rounding stays at a few ulps.
    """
    values = np.asarray(values, dtype=float)
    t = np.asarray(t, dtype=float)
    m = t.size
    if m < 2 * block or t[0] != 0.0:
        return np.exp(1j * np.outer(values, t))
    dt = t[1]
    if not np.array_equal(t, dt * np.arange(m)):
        return np.exp(1j * np.outer(values, t))
    fine = np.exp(1j * np.outer(values, dt * np.arange(block)))
    coarse = np.exp(1j * np.outer(values, dt * np.arange(0, m, block)))
    out = (coarse[:, :, None] * fine[:, None, :]).reshape(values.size, -1)
    return out[:, :m]


def cf_sums(values, weights, t):
    """Return ``[sum_j w_j exp(i t v_j) for w in weights]`` as arrays over ``t``.

    Observations are processed in fixed-size blocks and each block is reduced
    in index order, so the result does not depend on any threading.
    """
    values = np.asarray(values, dtype=float)
    t = np.asarray(t, dtype=float)
    out = [np.zeros(t.shape, dtype=complex) for _ in weights]
    for start in range(0, len(values), _CHUNK):
        stop = start + _CHUNK
        e = unit_phases(values[start:stop], t)
        for acc, w in zip(out, weights):
            acc += np.sum(np.asarray(w, dtype=float)[start:stop, None] * e, axis=0)
    return out


@dataclass(frozen=True)
class CharFunSet:
    """Characteristic-function arrays of one sample on one frequency grid.

    ``mu1``, ``mu2``, ``mu3`` are the empirical transforms
    ``mean(exp(itX))``, ``mean(exp(itW))`` and ``mean(X exp(itW))``;
    ``f_ft`` is the latent-regressor CF recovered by Kotlarski's identity,
    ``feps_ft`` the error CF of ``X`` and ``h_ft`` the transform of
    ``(g(x) - c x) f(x)``. ``h_num`` is the numerator ``mean((Y - cW) exp(itX))``
    behind ``h_ft``.
    """

    grid: FreqGrid
    mu1: np.ndarray
    mu2: np.ndarray
    mu3: np.ndarray
    regularization_floor: float = 0.0
    f_ft: Optional[np.ndarray] = None
    feps_ft: Optional[np.ndarray] = None
    h_ft: Optional[np.ndarray] = None
    h_num: Optional[np.ndarray] = None
    c: Optional[float] = None
    n: int = 0
    diagnostics: tuple[str, ...] = ()
    saturation_fraction: float = SATURATION_FRACTION

    @property
    def fW_ft(self) -> np.ndarray:
        return self.mu2

    @property
    def fX_ft(self) -> np.ndarray:
        return self.mu1

    @property
    def rho(self) -> float:
        return self.regularization_floor

    def require(self, *names: str) -> None:
        missing = [name for name in names if getattr(self, name) is None]
        if missing:
            raise InvalidStateError(f"characteristic functions not computed yet: {', '.join(missing)}")

    def _with(self, **changes) -> "CharFunSet":
        notes = changes.pop("notes", ())
        return dataclasses.replace(self, diagnostics=self.diagnostics + tuple(notes), **changes)

    def _check_floor(self, d: np.ndarray, label: str) -> tuple[str, ...]:
        frac = _floor_hits(d, self.regularization_floor)
        if frac > self.saturation_fraction:
            return (
                f"ill-conditioned: |{label}| below the floor rho={self.regularization_floor:.3g} "
                f"on {100 * frac:.1f}% of the grid",
            )
        return ()


def _check_sample(sample: Sample) -> None:
    if sample.n == 0:
        raise InvalidInputError("empty sample")
    if sample.n < 2:
        raise InvalidInputError(f"need at least 2 observations, got {sample.n}")


def empirical_cfs(sample: Sample, grid: FreqGrid, rho: Optional[float] = None,
                  saturation_fraction: float = SATURATION_FRACTION,
                  c: Optional[float] = None) -> CharFunSet:
    """Empirical CFs of ``X`` and ``W`` and the cross moment ``mean(X exp(itW))``.

    ``rho`` defaults to ``n ** -0.5``. Passing ``c`` also fills ``h_num``,
    reusing the ``exp(itX)`` values.
    """
    _check_sample(sample)
    n = sample.n
    rho = n ** -0.5 if rho is None else float(rho)
    if rho < 0:
        raise ConfigurationError(f"rho must be nonnegative, got {rho}")
    t = grid.nonneg
    x_weights = [np.ones(n)]
    if c is not None:
        r = sample.y - c * sample.w
        x_weights.append(r)
    sx = cf_sums(sample.x, x_weights, t)
    sw, sxw = cf_sums(sample.w, [np.ones(n), sample.x], t)
    mu1, mu2, mu3 = sx[0] / n, sw / n, sxw / n
    mu1[0] = 1.0
    mu2[0] = 1.0
    mu3[0] = sample.x.mean()
    extra = {}
    if c is not None:
        num = sx[1] / n
        num[0] = r.mean()
        extra = {"h_num": grid.mirror(num), "c": float(c)}
    return CharFunSet(
        grid=grid,
        mu1=grid.mirror(mu1),
        mu2=grid.mirror(mu2),
        mu3=grid.mirror(mu3),
        regularization_floor=rho,
        n=n,
        saturation_fraction=saturation_fraction,
        **extra,
    )


def kotlarski_f_ft(cfs: CharFunSet) -> CharFunSet:
    """Recover the latent CF ``exp(int_0^t i mu3(s) / mu2(s) ds)``.

    The inner integral is a cumulative trapezoid sum running outward from 0.
    The ratio is split as ``xbar + (mu3 - xbar mu2) / mu2`` with ``xbar =
    mu3(0)`` and only the second part sees the floor, so a common shift of
    ``X`` and ``W`` moves ``f_ft`` by exactly ``exp(itm)`` even where the
    floor is active. Away from the floor the split changes nothing.
    """
    cfs.require("mu2", "mu3")
    g = cfs.grid
    t = g.nonneg
    mu2 = g.upper(cfs.mu2)
    mu3 = g.upper(cfs.mu3)
    xbar = mu3[0].real
    rate = 1j * (mu3 - xbar * mu2) / regularize(mu2, cfs.rho)
    log_f = 1j * xbar * t + cumulative_trapezoid(rate, dx=g.spacing, initial=0)
    f = np.exp(log_f)
    f[0] = 1.0
    return cfs._with(f_ft=g.mirror(f), notes=cfs._check_floor(mu2, "mu2"))


def error_cf(cfs: CharFunSet) -> CharFunSet:
    """Error CF of ``X``: ``mu1(t) / f_ft(t)``."""
    cfs.require("mu1", "f_ft")
    g = cfs.grid
    f = g.upper(cfs.f_ft)
    feps = g.upper(cfs.mu1) / regularize(f, cfs.rho)
    feps[0] = 1.0
    return cfs._with(feps_ft=g.mirror(feps), notes=cfs._check_floor(f, "f_ft"))


def outcome_cf(sample: Sample, c: float, grid: FreqGrid) -> np.ndarray:
    """``mean((Y - cW) exp(itX))`` on the full grid."""
    _check_sample(sample)
    r = sample.y - c * sample.w
    (s,) = cf_sums(sample.x, [r], grid.nonneg)
    num = s / sample.n
    num[0] = r.mean()
    return grid.mirror(num)


def h_ft_estimate(sample: Sample, c: float, cfs: CharFunSet) -> CharFunSet:
    """Transform of ``h_c = (g - c.id) f``: ``mean((Y - cW) exp(itX)) / feps_ft(t)``."""
    cfs.require("feps_ft")
    g = cfs.grid
    if cfs.h_num is not None and cfs.c == float(c):
        num = cfs.h_num
    else:
        num = outcome_cf(sample, c, g)
    feps = g.upper(cfs.feps_ft)
    h = g.upper(num) / regularize(feps, cfs.rho)
    h[0] = num[g.half - 1]
    return cfs._with(
        h_ft=g.mirror(h),
        h_num=num,
        c=float(c),
        notes=cfs._check_floor(feps, "feps_ft"),
    )


def estimate_cfs(sample: Sample, grid: FreqGrid, c: float = 1.0, rho: Optional[float] = None,
                 saturation_fraction: float = SATURATION_FRACTION) -> CharFunSet:
    """Run the whole chain: empirical CFs, Kotlarski, error CF, ``h_c`` transform."""
    cfs = empirical_cfs(sample, grid, rho, saturation_fraction, c=c)
    cfs = kotlarski_f_ft(cfs)
    cfs = error_cf(cfs)
    return h_ft_estimate(sample, c, cfs)


CF = Callable[[np.ndarray], np.ndarray]


def population_cfs(grid: FreqGrid, *, f_ft: CF, feps_ft: CF, fnu_ft: CF, h_ft: CF,
                   dlog_f_ft: CF, c: float = 0.0) -> CharFunSet:
    """Build a :class:`CharFunSet` from known population transforms.

    Lets the true characteristic functions stand in for the empirical ones.
    ``dlog_f_ft`` is the derivative of ``log f_ft``; for a mean-zero ``eps``
    the cross moment is ``E[X exp(itW)] = -i dlog_f(t) f(t) fnu(t)``.
    No regularization floor is applied.
    """
    t = grid.nonneg
    f = np.asarray(f_ft(t), dtype=complex)
    fe = np.asarray(feps_ft(t), dtype=complex)
    fn = np.asarray(fnu_ft(t), dtype=complex)
    h = np.asarray(h_ft(t), dtype=complex)
    mu2 = f * fn
    mu3 = -1j * np.asarray(dlog_f_ft(t), dtype=complex) * mu2
    m = grid.mirror
    return CharFunSet(
        grid=grid,
        mu1=m(f * fe),
        mu2=m(mu2),
        mu3=m(mu3),
        regularization_floor=0.0,
        f_ft=m(f),
        feps_ft=m(fe),
        h_ft=m(h),
        h_num=m(h * fe),
        c=float(c),
    )


def dump_cfs_csv(cfs: CharFunSet, path, header_comments=()) -> None:
    """Write every filled array as ``re``/``im`` column pairs against ``t``."""
    names = ["mu1", "mu2", "mu3", "f_ft", "feps_ft", "fW_ft", "h_ft"]
    arrays = [(name, getattr(cfs, name)) for name in names if getattr(cfs, name) is not None]
    with open(path, "w", newline="") as fh:
        for line in header_comments:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        header = ["t"]
        for name, _ in arrays:
            header += [f"{name}_re", f"{name}_im"]
        writer.writerow(header)
        for k, t in enumerate(cfs.grid.values):
            row = [repr(float(t))]
            for _, a in arrays:
                row += [repr(float(a[k].real)), repr(float(a[k].imag))]
            writer.writerow(row)
