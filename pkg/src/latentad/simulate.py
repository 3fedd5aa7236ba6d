"""Monte Carlo power curves for the one-sided test.

Baseline design: ``X*, U, eps, nu`` i.i.d. standard normal,

    Y = (1 - delta) X* + U,   X = X* + eps,   W = X* + nu,

so ``theta_1 = -delta * int phi^2 = -delta / (2 sqrt(pi))`` and the null
``theta_1 >= 0`` holds exactly when ``delta <= 0``.

Replication ``r`` of cell ``(i_delta, i_n)`` draws from a Philox stream keyed
by ``(seed, i_delta, i_n, r)``, so cells and replications can run in any
order or process and still give identical numbers.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtri

from .errors import ConfigurationError, LatentADError, SimulationError
from .estimator import EstimatorConfig, estimate_theta
from .ingest import Sample
from .inference import run_test

__all__ = [
    "Design",
    "baseline_design",
    "population_theta",
    "stream",
    "standard_normals",
    "dgp_draw",
    "SimConfig",
    "PowerRow",
    "PowerTable",
    "run_power_curve",
    "simulate_estimates",
    "emit_power_outputs",
    "power_svg",
]

Design = Callable[[int, float, np.random.Generator], Sample]

MAX_EXCLUDED_FRACTION = 0.01


def stream(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for the replication identified by ``key``."""
    if seed < 0:
        raise ConfigurationError(f"seed must be nonnegative, got {seed}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def standard_normals(rng: np.random.Generator, shape) -> np.ndarray:
    """Normals by inverting the CDF at 53-bit uniforms strictly inside (0, 1)."""
    k = rng.integers(0, 2**53, size=shape, dtype=np.uint64)
    u = (k.astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u)


def dgp_draw(n: int, delta: float, rng: np.random.Generator) -> Sample:
    """One sample from the baseline design."""
    if n < 1:
        raise ConfigurationError(f"n must be positive, got {n}")
    xstar, u, eps, nu = standard_normals(rng, (4, n))
    return Sample((1.0 - delta) * xstar + u, xstar + eps, xstar + nu, provenance="simulated")


baseline_design: Design = dgp_draw


def population_theta(delta: float) -> float:
    """``theta_1`` of the baseline design."""
    return -delta / (2.0 * math.sqrt(math.pi))


@dataclass(frozen=True)
class SimConfig:
    delta_grid: Sequence[float] = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
    n_list: Sequence[int] = (250, 500)
    reps: int = 2500
    size: float = 0.05
    seed: int = 0
    estimator_cfg: EstimatorConfig = EstimatorConfig(c=1.0)
    design: Design = baseline_design
    allow_delta_outside: bool = False

    def __post_init__(self):
        object.__setattr__(self, "delta_grid", tuple(float(d) for d in self.delta_grid))
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        if not self.delta_grid:
            raise ConfigurationError("delta grid is empty")
        if not self.n_list:
            raise ConfigurationError("n list is empty")
        if not self.allow_delta_outside and any(not 0.0 <= d <= 0.5 for d in self.delta_grid):
            raise ConfigurationError(f"deltas must lie in [0, 0.5]: {self.delta_grid}")
        if any(n < 2 for n in self.n_list):
            raise ConfigurationError(f"every n must be at least 2: {self.n_list}")
        if int(self.reps) != self.reps or self.reps < 1:
            raise ConfigurationError(f"reps must be a positive integer, got {self.reps}")
        if not 0.0 < self.size < 1.0:
            raise ConfigurationError(f"size must lie in (0, 1), got {self.size}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigurationError(f"seed must be a nonnegative integer, got {self.seed}")

    def describe(self) -> dict:
        e = self.estimator_cfg
        out = {
            "deltas": ",".join(repr(d) for d in self.delta_grid),
            "n": ",".join(str(n) for n in self.n_list),
            "reps": self.reps,
            "size": self.size,
            "seed": self.seed,
            "c": e.c,
            "bandwidth": "auto" if e.bandwidth is None else e.bandwidth,
            "bandwidth_scale": e.bandwidth_scale,
            "kernel": e.kernel.name,
            "grid_points": e.grid_points,
            "rho": "auto" if e.rho is None else e.rho,
            "xi_weight": e.xi_weight,
        }
        if self.allow_delta_outside:
            out["allow_delta_outside"] = True
        if self.design is not baseline_design:
            out["design"] = getattr(self.design, "__name__", "custom")
        return out


@dataclass
class PowerRow:
    delta: float
    n: int
    reps: int
    used: int
    rejections: int
    excluded: int = 0
    mean_theta: float = float("nan")
    mean_z: float = float("nan")

    @property
    def rejection_frequency(self) -> float:
        return self.rejections / self.used if self.used else float("nan")

    @property
    def mc_std_error(self) -> float:
        p = self.rejection_frequency
        return math.sqrt(p * (1.0 - p) / self.used) if self.used else float("nan")


@dataclass
class PowerTable:
    rows: list[PowerRow]
    size: float
    config: dict = field(default_factory=dict)
    theta: dict = field(default_factory=dict)
    z: dict = field(default_factory=dict)

    def row(self, delta: float, n: int) -> PowerRow:
        for r in self.rows:
            if r.delta == delta and r.n == n:
                return r
        raise KeyError((delta, n))

    def to_csv(self) -> str:
        buf = io.StringIO()
        for key, value in self.config.items():
            buf.write(f"# {key} = {value}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["delta", "n", "reps", "used", "excluded", "rejections",
                         "rejection_frequency", "mc_std_error", "mean_theta", "mean_z"])
        for r in self.rows:
            writer.writerow([repr(r.delta), r.n, r.reps, r.used, r.excluded, r.rejections,
                             repr(r.rejection_frequency), repr(r.mc_std_error),
                             repr(r.mean_theta), repr(r.mean_z)])
        return buf.getvalue()


def _replicate_block(args):
    design, est_cfg, size, seed, i_d, i_n, delta, n, reps = args
    out = []
    for r in reps:
        rng = stream(seed, i_d, i_n, r)
        try:
            res = run_test(design(n, delta, rng), est_cfg, size)
        except (LatentADError, ArithmeticError, ValueError, FloatingPointError):
            out.append(None)
            continue
        out.append((res.reject, res.theta_hat, res.z))
    return out


def _theta_block(args):
    design, est_cfg, seed, key, delta, n, reps = args
    out = np.empty(len(reps))
    for k, r in enumerate(reps):
        out[k] = estimate_theta(design(n, delta, stream(seed, *key, r)), est_cfg).theta_hat
    return out


def _blocks(reps: int, size: int):
    return [range(a, min(a + size, reps)) for a in range(0, reps, size)]


def _map(fn, tasks, workers: int):
    if workers <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def run_power_curve(cfg: SimConfig, workers: int = 1, block: int = 25) -> PowerTable:
    """Rejection frequency of the test in every ``(delta, n)`` cell.

    Failed replications are excluded and counted; more than 1% exclusions in
    the whole run raises :class:`SimulationError`. ``workers`` only changes
    how replications are scheduled, never the numbers.
    """
    if workers < 1:
        raise ConfigurationError(f"workers must be positive, got {workers}")
    tasks, keys = [], []
    for i_d, delta in enumerate(cfg.delta_grid):
        for i_n, n in enumerate(cfg.n_list):
            for reps in _blocks(cfg.reps, block):
                tasks.append((cfg.design, cfg.estimator_cfg, cfg.size, cfg.seed,
                              i_d, i_n, delta, n, reps))
                keys.append((delta, n))
    results = _map(_replicate_block, tasks, workers)

    cells: dict = {}
    for key, res in zip(keys, results):
        cells.setdefault(key, []).extend(res)
    rows, thetas, zs = [], {}, {}
    excluded_total = 0
    for (delta, n), res in cells.items():
        ok = [r for r in res if r is not None]
        excluded = len(res) - len(ok)
        excluded_total += excluded
        th = np.array([r[1] for r in ok])
        z = np.array([r[2] for r in ok])
        thetas[(delta, n)] = th
        zs[(delta, n)] = z
        rows.append(PowerRow(
            delta=delta, n=n, reps=cfg.reps, used=len(ok),
            rejections=sum(1 for r in ok if r[0]), excluded=excluded,
            mean_theta=float(th.mean()) if th.size else float("nan"),
            mean_z=float(z.mean()) if z.size else float("nan"),
        ))
    total = cfg.reps * len(cells)
    if excluded_total > MAX_EXCLUDED_FRACTION * total:
        raise SimulationError(
            f"{excluded_total} of {total} replications failed (more than {MAX_EXCLUDED_FRACTION:.0%})"
        )
    return PowerTable(rows, cfg.size, cfg.describe(), thetas, zs)


def simulate_estimates(delta: float, n: int, reps: int, seed: int,
                       estimator_cfg: EstimatorConfig = EstimatorConfig(c=1.0),
                       design: Design = baseline_design, workers: int = 1,
                       key: tuple = (0, 0), block: int = 10) -> np.ndarray:
    """Point estimates over ``reps`` replications of one cell (no variance step)."""
    if reps < 1:
        raise ConfigurationError(f"reps must be positive, got {reps}")
    tasks = [(design, estimator_cfg, seed, tuple(key), delta, n, r) for r in _blocks(reps, block)]
    return np.concatenate(_map(_theta_block, tasks, workers))


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def power_svg(table: PowerTable, width: int = 640, height: int = 420) -> str:
    """Line chart of rejection frequency against delta, one polyline per n."""
    left, right, top, bottom = 60, 20, 20, 50
    deltas = sorted({r.delta for r in table.rows})
    lo, hi = deltas[0], deltas[-1]
    if hi == lo:
        lo, hi = lo - 0.05, hi + 0.05
    pw, ph = width - left - right, height - top - bottom

    def px(d):
        return left + (d - lo) / (hi - lo) * pw

    def py(p):
        return top + (1.0 - p) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<path class="axes" d="M{left},{top} V{top + ph} H{left + pw}" fill="none" stroke="black"/>',
    ]
    for k in range(6):
        p = k / 5
        out.append(f'<text x="{left - 8}" y="{py(p) + 4:.2f}" font-size="11" text-anchor="end">{p:.1f}</text>')
    for d in deltas:
        out.append(f'<text x="{px(d):.2f}" y="{top + ph + 16}" font-size="11" text-anchor="middle">{d:g}</text>')
    out.append(f'<text x="{left + pw / 2}" y="{height - 10}" font-size="12" text-anchor="middle">delta</text>')
    out.append(f'<text x="14" y="{top + ph / 2}" font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 14 {top + ph / 2})">rejection frequency</text>')
    out.append(f'<line class="reference" x1="{left}" y1="{py(table.size):.2f}" x2="{left + pw}" '
               f'y2="{py(table.size):.2f}" stroke="gray" stroke-dasharray="2,3"/>')
    ns = sorted({r.n for r in table.rows})
    for k, n in enumerate(ns):
        rows = sorted((r for r in table.rows if r.n == n), key=lambda r: r.delta)
        pts = " ".join(f"{px(r.delta):.2f},{py(r.rejection_frequency):.2f}" for r in rows)
        dash = ' stroke-dasharray="6,4"' if k < len(ns) - 1 else ""
        color = _COLORS[k % len(_COLORS)]
        out.append(f'<polyline class="curve" data-n="{n}" points="{pts}" fill="none" '
                   f'stroke="{color}" stroke-width="2"{dash}/>')
        out.append(f'<text x="{left + pw - 70}" y="{top + 16 + 16 * k}" font-size="12" fill="{color}">N = {n}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_power_outputs(table: PowerTable, path_prefix) -> tuple[str, str]:
    """Write ``<prefix>_power.csv`` and ``<prefix>_power.svg``; return both paths."""
    if not table.rows:
        raise ConfigurationError("power table is empty; nothing to write")
    csv_text = table.to_csv()
    svg_text = power_svg(table)
    csv_path = f"{path_prefix}_power.csv"
    svg_path = f"{path_prefix}_power.svg"
    with open(csv_path, "w", newline="") as fh:
        fh.write(csv_text)
    with open(svg_path, "w") as fh:
        fh.write(svg_text)
    return csv_path, svg_path
