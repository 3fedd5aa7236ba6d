"""Construct estimator inputs from four-wave income/consumption panels.

Income follows a permanent-transitory process: with waves labelled
``(t-2, t-1, t, t+1)`` the two income growth measures

    X = income[t]   - income[t-2]
    W = income[t+1] - income[t-1]

share the permanent shock of period ``t`` and carry independent noise, and
the outcome is the consumption growth ``Y = consumption[t] - consumption[t-1]``.
All variables are logs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import InvalidInputError, SchemaError

__all__ = [
    "Sample",
    "PanelSchema",
    "PanelTable",
    "DropReport",
    "SummaryRow",
    "parse_panel_csv",
    "write_panel_csv",
    "build_differences",
    "summary_stats",
    "panel_summary",
    "sample_summary",
    "format_summary_table",
    "write_summary_csv",
    "read_sample_csv",
    "write_sample_csv",
    "simulate_income_panel",
]

N_WAVES = 4


@dataclass(frozen=True)
class Sample:
    """Outcome ``y`` and two noisy measures ``x``, ``w`` of a latent regressor."""

    y: np.ndarray
    x: np.ndarray
    w: np.ndarray
    provenance: str = "synthetic"

    def __post_init__(self):
        arrays = []
        for name in ("y", "x", "w"):
            a = np.ascontiguousarray(np.asarray(getattr(self, name), dtype=float))
            if a.ndim != 1:
                raise InvalidInputError(f"{name} must be one-dimensional")
            a.setflags(write=False)
            object.__setattr__(self, name, a)
            arrays.append(a)
        if not (len(arrays[0]) == len(arrays[1]) == len(arrays[2])):
            raise InvalidInputError(
                f"y, x, w lengths differ: {len(arrays[0])}, {len(arrays[1])}, {len(arrays[2])}"
            )
        for name, a in zip(("y", "x", "w"), arrays):
            if not np.all(np.isfinite(a)):
                raise InvalidInputError(f"{name} contains non-finite values")

    @property
    def n(self) -> int:
        return len(self.x)

    def __len__(self):
        return self.n

    def shifted(self, m: float) -> "Sample":
        """Add ``m`` to both measures (the outcome is left alone)."""
        return Sample(self.y, self.x + m, self.w + m, self.provenance)


@dataclass(frozen=True)
class PanelSchema:
    """Column names of a panel CSV.

    ``income`` and ``consumption`` list the four wave columns in time order.
    """

    unit_id: str = "id"
    income: tuple[str, ...] = ("income_2013", "income_2015", "income_2017", "income_2019")
    consumption: tuple[str, ...] = (
        "consumption_2013",
        "consumption_2015",
        "consumption_2017",
        "consumption_2019",
    )
    waves: tuple[str, ...] = ("2013", "2015", "2017", "2019")

    def __post_init__(self):
        for name in ("income", "consumption", "waves"):
            value = tuple(getattr(self, name))
            if len(value) != N_WAVES:
                raise SchemaError(f"{name} needs exactly {N_WAVES} entries, got {len(value)}")
            object.__setattr__(self, name, value)

    @classmethod
    def for_waves(cls, waves: Sequence[str], unit_id: str = "id",
                  income_prefix: str = "income_",
                  consumption_prefix: str = "consumption_") -> "PanelSchema":
        waves = tuple(str(w) for w in waves)
        return cls(
            unit_id=unit_id,
            income=tuple(income_prefix + w for w in waves),
            consumption=tuple(consumption_prefix + w for w in waves),
            waves=waves,
        )


@dataclass(frozen=True)
class PanelTable:
    """Per-unit log income and log consumption over four waves.

    Missing cells are ``nan``; ``income`` and ``consumption`` have shape
    ``(n_units, 4)``.
    """

    unit_ids: tuple[str, ...]
    income: np.ndarray
    consumption: np.ndarray
    waves: tuple[str, ...] = ("t-2", "t-1", "t", "t+1")

    def __post_init__(self):
        waves = tuple(self.waves)
        if len(waves) != N_WAVES:
            raise InvalidInputError(f"a panel needs exactly {N_WAVES} waves, got {len(waves)}")
        if not _strictly_increasing(waves):
            raise InvalidInputError(f"wave labels must be strictly increasing: {waves}")
        object.__setattr__(self, "waves", waves)
        object.__setattr__(self, "unit_ids", tuple(self.unit_ids))
        n = len(self.unit_ids)
        for name in ("income", "consumption"):
            a = np.asarray(getattr(self, name), dtype=float).reshape(n, N_WAVES)
            object.__setattr__(self, name, a)
        if len(set(self.unit_ids)) != n:
            raise SchemaError("duplicate unit id in panel")

    def __len__(self):
        return len(self.unit_ids)


def _strictly_increasing(labels):
    try:
        values = [float(v) for v in labels]
    except ValueError:
        # non-numeric labels such as ("t-2", "t-1", "t", "t+1") are ordered by position
        return len(set(labels)) == len(labels)
    return all(a < b for a, b in zip(values, values[1:]))


@dataclass
class DropReport:
    n_units: int
    retained: int
    dropped: int
    reasons: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_units": self.n_units,
            "retained": self.retained,
            "dropped": self.dropped,
            "reasons": dict(self.reasons),
        }


def _parse_float(cell: str) -> float:
    try:
        value = float(cell)
    except (TypeError, ValueError):
        return math.nan
    # logs of zero upstream show up as -inf; treat them like missing
    return value if math.isfinite(value) else math.nan


def parse_panel_csv(path, schema: PanelSchema | None = None) -> PanelTable:
    """Read a wide panel CSV into a :class:`PanelTable`.

    Numeric cells that fail to parse, or parse to an infinite value, become
    ``nan``; the row is kept so that :func:`build_differences` can report why
    it was dropped.
    """
    schema = schema or PanelSchema()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: file is empty (no header)") from None
        header = [h.strip() for h in header]
        wanted = [schema.unit_id, *schema.income, *schema.consumption]
        for col in wanted:
            if col not in header:
                raise SchemaError(f"{path}: missing column {col!r}")
        idx = {col: header.index(col) for col in wanted}
        ids, inc, con = [], [], []
        seen = set()
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            row = row + [""] * (len(header) - len(row))
            uid = row[idx[schema.unit_id]].strip()
            if uid in seen:
                raise SchemaError(f"{path}:{lineno}: duplicate unit id {uid!r}")
            seen.add(uid)
            ids.append(uid)
            inc.append([_parse_float(row[idx[c]]) for c in schema.income])
            con.append([_parse_float(row[idx[c]]) for c in schema.consumption])
    return PanelTable(
        unit_ids=tuple(ids),
        income=np.array(inc, dtype=float).reshape(len(ids), N_WAVES),
        consumption=np.array(con, dtype=float).reshape(len(ids), N_WAVES),
        waves=schema.waves,
    )


def write_panel_csv(panel: PanelTable, path, schema: PanelSchema | None = None) -> None:
    schema = schema or PanelSchema.for_waves(panel.waves)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([schema.unit_id, *schema.income, *schema.consumption])
        for uid, inc, con in zip(panel.unit_ids, panel.income, panel.consumption):
            writer.writerow([uid, *(_fmt(v) for v in inc), *(_fmt(v) for v in con)])


def _fmt(v: float) -> str:
    return "" if not math.isfinite(v) else repr(float(v))


def build_differences(panel: PanelTable) -> tuple[Sample, DropReport]:
    """Form ``(Y, X, W)`` from a four-wave panel, dropping incomplete units.

    Waves are used by position: with columns ``(t-2, t-1, t, t+1)``,
    ``X = inc[t] - inc[t-2]``, ``W = inc[t+1] - inc[t-1]`` and
    ``Y = con[t] - con[t-1]``. Each dropped unit is charged to the first of
    X, W, Y that is missing.
    """
    inc, con = panel.income, panel.consumption
    with np.errstate(invalid="ignore"):
        x = inc[:, 2] - inc[:, 0]
        w = inc[:, 3] - inc[:, 1]
        y = con[:, 2] - con[:, 1]
    bad_x = ~np.isfinite(x)
    bad_w = ~np.isfinite(w) & ~bad_x
    bad_y = ~np.isfinite(y) & ~bad_x & ~bad_w
    keep = ~(bad_x | bad_w | bad_y)
    reasons = {}
    for label, mask in (("missing X component", bad_x),
                        ("missing W component", bad_w),
                        ("missing Y component", bad_y)):
        count = int(mask.sum())
        if count:
            reasons[label] = count
    report = DropReport(
        n_units=len(panel),
        retained=int(keep.sum()),
        dropped=int((~keep).sum()),
        reasons=reasons,
    )
    if report.retained == 0:
        raise InvalidInputError(
            f"no unit has complete X, W and Y ({report.n_units} units, reasons: {reasons})"
        )
    return Sample(y[keep], x[keep], w[keep], provenance="panel-derived"), report


@dataclass(frozen=True)
class SummaryRow:
    name: str
    n: int
    mean: float
    sd: float
    degenerate: bool = False


def summary_stats(columns: Mapping[str, Sequence[float]]) -> list[SummaryRow]:
    """Mean and ``n - 1`` standard deviation of each column, ignoring ``nan``.

    A column with a single observation gets ``sd = 0`` and ``degenerate=True``.
    """
    if not columns:
        raise InvalidInputError("summary_stats needs at least one column")
    rows = []
    for name, values in columns.items():
        a = np.asarray(values, dtype=float)
        a = a[np.isfinite(a)]
        if a.size == 0:
            raise InvalidInputError(f"column {name!r} has no finite values")
        if a.size == 1:
            rows.append(SummaryRow(name, 1, float(a[0]), 0.0, degenerate=True))
        else:
            rows.append(SummaryRow(name, int(a.size), float(a.mean()), float(a.std(ddof=1))))
    return rows


def panel_summary(panel: PanelTable) -> list[SummaryRow]:
    cols = {}
    for k, wave in enumerate(panel.waves):
        cols[f"income {wave}"] = panel.income[:, k]
    for k, wave in enumerate(panel.waves):
        cols[f"consumption {wave}"] = panel.consumption[:, k]
    return summary_stats(cols)


def sample_summary(sample: Sample) -> list[SummaryRow]:
    return summary_stats({"X": sample.x, "W": sample.w, "Y": sample.y})


def format_summary_table(rows: Sequence[SummaryRow], digits: int = 3) -> str:
    """Render rows as a two-line-per-variable table: mean, then (sd) beneath."""
    width = max(len(r.name) for r in rows)
    lines = []
    for r in rows:
        lines.append(f"{r.name:<{width}}  {r.mean:>{digits + 6}.{digits}f}")
        lines.append(f"{'':<{width}}  {'(' + format(r.sd, f'.{digits}f') + ')':>{digits + 6}}")
    lines.append(f"{'N':<{width}}  {max(r.n for r in rows):>{digits + 6}d}")
    return "\n".join(lines) + "\n"


def write_summary_csv(rows: Sequence[SummaryRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variable", "n", "mean", "sd", "degenerate"])
        for r in rows:
            writer.writerow([r.name, r.n, repr(r.mean), repr(r.sd), int(r.degenerate)])


def read_sample_csv(path) -> Sample:
    """Read a ``Y,X,W`` CSV. Lines starting with ``#`` are comments."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(line for line in fh if not line.lstrip().startswith("#"))
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InvalidInputError(f"{path}: file is empty") from None
        for col in ("Y", "X", "W"):
            if col not in header:
                raise SchemaError(f"{path}: missing column {col!r}")
        iy, ix, iw = header.index("Y"), header.index("X"), header.index("W")
        ys, xs, ws = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                ys.append(float(row[iy]))
                xs.append(float(row[ix]))
                ws.append(float(row[iw]))
            except (ValueError, IndexError):
                raise InvalidInputError(f"{path}:{lineno}: unparseable row {row!r}") from None
    if not xs:
        raise InvalidInputError(f"{path}: no observations")
    return Sample(np.array(ys), np.array(xs), np.array(ws), provenance=f"csv:{path.name}")


def write_sample_csv(sample: Sample, path, header_comments: Sequence[str] = ()) -> None:
    with open(path, "w", newline="") as fh:
        for line in header_comments:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["Y", "X", "W"])
        for row in zip(sample.y, sample.x, sample.w):
            writer.writerow([repr(float(v)) for v in row])


def simulate_income_panel(n: int, rng: np.random.Generator, *, mpcp=0.8,
                          sd_permanent=0.15, sd_transitory=0.2, sd_consumption=0.1,
                          level=10.8):
    """Draw a synthetic four-wave panel from a permanent-transitory process.

    Log income is ``level + pi + tau`` with ``pi`` a random walk in the
    permanent shocks ``eta`` and ``tau`` i.i.d. transitory noise. Consumption
    growth between the middle waves responds to the middle-wave permanent
    shock with slope ``mpcp`` (a callable is accepted for nonlinear responses).

    Returns the panel and a dict of the latent draws: ``eta`` has columns for
    periods ``t-2 .. t+1`` and ``tau`` likewise.
    """
    eta = rng.normal(0.0, sd_permanent, size=(n, N_WAVES))
    tau = rng.normal(0.0, sd_transitory, size=(n, N_WAVES))
    pi0 = rng.normal(0.0, 0.5, size=n)
    perm = pi0[:, None] + np.cumsum(eta, axis=1)
    income = level + perm + tau
    response = mpcp(eta[:, 2]) if callable(mpcp) else mpcp * eta[:, 2]
    c0 = level - 0.2 + 0.9 * pi0 + rng.normal(0.0, 0.3, size=n)
    consumption = np.empty((n, N_WAVES))
    consumption[:, 0] = c0 + rng.normal(0.0, sd_consumption, size=n)
    consumption[:, 1] = c0 + rng.normal(0.0, sd_consumption, size=n)
    consumption[:, 2] = consumption[:, 1] + response + rng.normal(0.0, sd_consumption, size=n)
    consumption[:, 3] = consumption[:, 2] + rng.normal(0.0, sd_consumption, size=n)
    panel = PanelTable(
        unit_ids=tuple(f"u{j:05d}" for j in range(n)),
        income=income,
        consumption=consumption,
        waves=("2013", "2015", "2017", "2019"),
    )
    return panel, {"eta": eta, "tau": tau}
