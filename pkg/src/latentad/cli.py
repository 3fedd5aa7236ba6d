"""Command-line front end.

Subcommands::

    latentad ingest   --input panel.csv --output sample.csv [--report drops.json]
    latentad estimate --input sample.csv [--output theta.json]
    latentad test     --input sample.csv [--output test.json] [--size 0.05]
    latentad simulate --deltas 0,0.25,0.5 --n 250,500 --reps 500 --seed 7 --prefix out/fig
    latentad cfdump   --input sample.csv --output cfs.csv

Every subcommand accepts ``--config FILE`` with one ``key = value`` per line
(keys are flag names without the leading dashes); flags on the command line
win over the file. Every artifact records the options that produced it in the
same ``key = value`` form, so the record can be fed back through ``--config``;
the informational keys ``command``, ``input_sha256`` and ``resolved_*`` are
accepted there and ignored. Exit status is 0 on success, 1 for invalid input
or configuration, 2 for numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from typing import Callable, Optional

from . import __version__
from .charfun import dump_cfs_csv
from .errors import LatentADError, NumericalError
from .estimator import DIRECT_MAX_N, EstimatorConfig, estimate_theta, estimate_theta_direct
from .ingest import (
    PanelSchema,
    build_differences,
    format_summary_table,
    panel_summary,
    parse_panel_csv,
    read_sample_csv,
    sample_summary,
    write_sample_csv,
    write_summary_csv,
)
from .inference import run_test
from .kernels import KERNEL_NAMES
from .simulate import SimConfig, emit_power_outputs, run_power_curve

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


class UsageError(Exception):
    """Bad flag, bad value or unreadable file; maps to exit status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --- value parsers; each raises ValueError with a short reason ---

def _positive(v):
    x = float(v)
    if not (math.isfinite(x) and x > 0):
        raise ValueError("must be a positive number")
    return x


def _finite(v):
    x = float(v)
    if not math.isfinite(x):
        raise ValueError("must be a finite number")
    return x


def _auto_or(parse):
    def inner(v):
        return None if str(v).strip().lower() == "auto" else parse(v)
    return inner


def _nonneg(v):
    x = float(v)
    if not (math.isfinite(x) and x >= 0):
        raise ValueError("must be a nonnegative number")
    return x


def _odd_int(v):
    k = int(v)
    if k < 3 or k % 2 == 0:
        raise ValueError("must be an odd integer >= 3")
    return k


def _pos_int(v):
    k = int(v)
    if k < 1:
        raise ValueError("must be a positive integer")
    return k


def _seed(v):
    k = int(v)
    if k < 0:
        raise ValueError("must be a nonnegative integer")
    return k


def _unit_open(v):
    x = float(v)
    if not 0.0 < x < 1.0:
        raise ValueError("must lie strictly between 0 and 1")
    return x


def _choice(options):
    def inner(v):
        if v not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return v
    return inner


def _float_list(v):
    out = [float(s) for s in str(v).split(",") if s.strip()]
    if not out or not all(math.isfinite(x) for x in out):
        raise ValueError("must be a comma-separated list of finite numbers")
    return out


def _int_list(v):
    out = [int(s) for s in str(v).split(",") if s.strip()]
    if not out:
        raise ValueError("must be a comma-separated list of integers")
    return out


def _str_list4(v):
    out = [s.strip() for s in str(v).split(",")]
    if len(out) != 4 or not all(out):
        raise ValueError("must list exactly four names separated by commas")
    return out


def _bool(v):
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError("must be true or false")


# flag name -> (parser, default, help); only flags listed for a command are accepted
_ESTIMATOR = {
    "c": (_finite, 1.0, "hypothesis constant c (1 tests an MPCP of one)"),
    "bandwidth": (_auto_or(_positive), None, "bandwidth b or 'auto'"),
    "bandwidth-scale": (_positive, 1.0, "scale of the automatic bandwidth sd(X) n^(-1/6)"),
    "kernel": (_choice(KERNEL_NAMES), KERNEL_NAMES[0], "kernel name"),
    "grid-points": (_odd_int, 4097, "odd number of frequency grid nodes"),
    "rho": (_auto_or(_nonneg), None, "regularization floor or 'auto' (n^(-1/2))"),
    "xi-weight": (_choice(("squared", "single")), "squared", "kernel power in the influence integral"),
}
_COMMON = {
    "seed": (_seed, 0, "random seed (recorded in every artifact)"),
    "threads": (_pos_int, 1, "worker processes; never changes results"),
}

COMMANDS: dict[str, dict] = {
    "ingest": {
        "input": (str, None, "panel CSV"),
        "output": (str, None, "sample CSV to write (columns Y,X,W)"),
        "report": (str, None, "drop report JSON to write"),
        "summary": (str, None, "summary statistics CSV to write"),
        "id-col": (str, "id", "unit id column"),
        "waves": (_str_list4, ["2013", "2015", "2017", "2019"], "four wave labels"),
        "income-prefix": (str, "income_", "prefix of the log income columns"),
        "consumption-prefix": (str, "consumption_", "prefix of the log consumption columns"),
        "income-cols": (_str_list4, None, "explicit income columns, overriding the prefix"),
        "consumption-cols": (_str_list4, None, "explicit consumption columns, overriding the prefix"),
        **_COMMON,
    },
    "estimate": {
        "input": (str, None, "sample CSV with columns Y,X,W"),
        "output": (str, None, "JSON file to write (default: standard output)"),
        "method": (_choice(("fourier", "direct")), "fourier", "fast path or the literal double sum"),
        **_ESTIMATOR,
        **_COMMON,
    },
    "test": {
        "input": (str, None, "sample CSV with columns Y,X,W"),
        "output": (str, None, "JSON file to write (default: standard output)"),
        "size": (_unit_open, 0.05, "nominal size of the one-sided test"),
        **_ESTIMATOR,
        **_COMMON,
    },
    "simulate": {
        "deltas": (_float_list, [0.0, 0.1, 0.2, 0.3, 0.4, 0.5], "comma-separated delta grid"),
        "n": (_int_list, [250, 500], "comma-separated sample sizes"),
        "reps": (_pos_int, 500, "replications per cell"),
        "size": (_unit_open, 0.05, "nominal size"),
        "prefix": (str, "latentad", "output prefix for _power.csv and _power.svg"),
        "allow-delta-outside": (_bool, False, "accept deltas outside [0, 0.5]"),
        **_ESTIMATOR,
        **_COMMON,
    },
    "cfdump": {
        "input": (str, None, "sample CSV with columns Y,X,W"),
        "output": (str, None, "CSV file to write"),
        **_ESTIMATOR,
        **_COMMON,
    },
}
# written into artifacts for provenance; skipped when a record is read back as a config
INFO_KEYS = ("command", "input-sha256")

REQUIRED = {
    "ingest": ("input", "output"),
    "estimate": ("input",),
    "test": ("input",),
    "simulate": (),
    "cfdump": ("input", "output"),
}


SUMMARIES = {
    "ingest": "turn a four-wave income/consumption panel into Y,X,W differences",
    "estimate": "estimate theta_c from a Y,X,W sample",
    "test": "one-sided test of H0: theta_c >= 0 with studentized z",
    "simulate": "Monte Carlo power curve on the baseline design",
    "cfdump": "write the estimated characteristic functions to CSV",
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="latentad", description="Density-weighted average derivatives "
                     "with a latent regressor observed through two noisy measures.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for name, flags in COMMANDS.items():
        p = sub.add_parser(name, help=SUMMARIES[name], description=SUMMARIES[name])
        p.add_argument("--config", default=None, help="key = value file; flags override it")
        for flag, (_, default, text) in flags.items():
            shown = "auto" if default is None and flag in ("bandwidth", "rho") else default
            p.add_argument(f"--{flag}", dest=flag.replace("-", "_"), default=None,
                           help=f"{text} (default: {shown})")
    return parser


def read_config_file(path: str) -> dict[str, str]:
    """Parse ``key = value`` lines; blank lines and ``#`` comments are skipped."""
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise UsageError(f"--config: cannot read {path}: {exc.strerror}") from None
    out = {}
    for k, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"--config: {path}:{k}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("_", "-")
        if key in INFO_KEYS or key.startswith("resolved-"):
            continue
        out[key] = value
    return out


def resolve_options(command: str, ns: argparse.Namespace) -> dict:
    """Merge defaults, the config file and flags; validate every value."""
    flags = COMMANDS[command]
    raw: dict[str, object] = {}
    if ns.config:
        for key, value in read_config_file(ns.config).items():
            if key not in flags:
                raise UsageError(f"--config: unknown key {key!r} for {command}")
            raw[key] = value
    for flag in flags:
        value = getattr(ns, flag.replace("-", "_"))
        if value is not None:
            raw[flag] = value
    opts = {}
    for flag, (parse, default, _) in flags.items():
        if flag in raw:
            try:
                opts[flag] = parse(raw[flag])
            except ValueError as exc:
                reason = str(exc) if "must" in str(exc) else "has the wrong type"
                raise UsageError(f"--{flag}: {reason}, got {raw[flag]!r}") from None
        else:
            opts[flag] = default
    for flag in REQUIRED[command]:
        if opts.get(flag) is None:
            raise UsageError(f"--{flag} is required for {command}")
    return opts


def _estimator_config(opts: dict) -> EstimatorConfig:
    return EstimatorConfig(
        c=opts["c"],
        bandwidth=opts["bandwidth"],
        bandwidth_scale=opts["bandwidth-scale"],
        kernel=opts["kernel"],
        grid_points=opts["grid-points"],
        rho=opts["rho"],
        xi_weight=opts["xi-weight"],
    )


def _file_digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _config_record(command: str, opts: dict, extra: Optional[dict] = None) -> dict:
    """Options as they would be written back into a config file."""
    rec = {"command": command}
    for flag, value in opts.items():
        # output paths and the worker count never change an artifact's content
        if flag in ("output", "report", "summary", "prefix", "threads"):
            continue
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        elif value is None and flag in ("bandwidth", "rho"):
            value = "auto"
        rec[flag] = value
    if extra:
        rec.update(extra)
    return rec


def _dump_json(doc: dict, path: Optional[str], out) -> None:
    text = json.dumps(doc, indent=2, allow_nan=False) + "\n"
    if path is None:
        out.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _load_sample(opts: dict):
    path = opts["input"]
    if not os.path.isfile(path):
        raise UsageError(f"--input: cannot read {path}")
    return read_sample_csv(path), _file_digest(path)


def cmd_ingest(opts: dict, out) -> int:
    if not os.path.isfile(opts["input"]):
        raise UsageError(f"--input: cannot read {opts['input']}")
    schema = PanelSchema.for_waves(opts["waves"], unit_id=opts["id-col"],
                                   income_prefix=opts["income-prefix"],
                                   consumption_prefix=opts["consumption-prefix"])
    if opts["income-cols"] or opts["consumption-cols"]:
        schema = PanelSchema(unit_id=schema.unit_id,
                             income=tuple(opts["income-cols"] or schema.income),
                             consumption=tuple(opts["consumption-cols"] or schema.consumption),
                             waves=schema.waves)
    panel = parse_panel_csv(opts["input"], schema)
    sample, report = build_differences(panel)
    record = _config_record("ingest", opts, {"input_sha256": _file_digest(opts["input"])})
    write_sample_csv(sample, opts["output"], [f"{k} = {v}" for k, v in record.items()])
    if opts["report"]:
        _dump_json({"config": record, "drop_report": report.to_dict()}, opts["report"], out)
    rows = panel_summary(panel) + sample_summary(sample)
    if opts["summary"]:
        write_summary_csv(rows, opts["summary"])
    out.write(format_summary_table(rows) + "\n")
    out.write(f"retained {report.retained} of {report.n_units} units; dropped {report.dropped}\n")
    return EXIT_OK


def cmd_estimate(opts: dict, out) -> int:
    sample, digest = _load_sample(opts)
    cfg = _estimator_config(opts)
    if opts["method"] == "direct":
        if sample.n > DIRECT_MAX_N:
            raise UsageError(f"--method: direct needs n <= {DIRECT_MAX_N}, the sample has {sample.n}")
        est = estimate_theta_direct(sample, cfg)
    else:
        est = estimate_theta(sample, cfg)
    record = _config_record("estimate", opts, {"input_sha256": digest})
    doc = {"config": record, "resolved": cfg.resolved(sample), "result": est.to_dict()}
    _dump_json(doc, opts["output"], out)
    return EXIT_OK


def cmd_test(opts: dict, out) -> int:
    sample, digest = _load_sample(opts)
    cfg = _estimator_config(opts)
    res = run_test(sample, cfg, opts["size"])
    record = _config_record("test", opts, {"input_sha256": digest})
    doc = {"config": record, "resolved": cfg.resolved(sample), "result": res.to_dict()}
    _dump_json(doc, opts["output"], out)
    return EXIT_OK


def cmd_simulate(opts: dict, out) -> int:
    sim = SimConfig(delta_grid=opts["deltas"], n_list=opts["n"], reps=opts["reps"],
                    size=opts["size"], seed=opts["seed"], estimator_cfg=_estimator_config(opts),
                    allow_delta_outside=opts["allow-delta-outside"])
    prefix = opts["prefix"]
    parent = os.path.dirname(prefix) or "."
    if not os.path.isdir(parent):
        raise UsageError(f"--prefix: directory {parent} does not exist")
    table = run_power_curve(sim, workers=opts["threads"])
    csv_path, svg_path = emit_power_outputs(table, prefix)
    out.write(f"wrote {csv_path} and {svg_path}\n")
    return EXIT_OK


def cmd_cfdump(opts: dict, out) -> int:
    sample, digest = _load_sample(opts)
    cfg = _estimator_config(opts)
    b, cfs = cfg.cfs_for(sample)
    record = _config_record("cfdump", opts, {"input_sha256": digest})
    record.update({f"resolved_{k}": v for k, v in cfg.resolved(sample).items()})
    dump_cfs_csv(cfs, opts["output"], [f"{k} = {v}" for k, v in record.items()])
    return EXIT_OK


HANDLERS: dict[str, Callable[[dict, object], int]] = {
    "ingest": cmd_ingest,
    "estimate": cmd_estimate,
    "test": cmd_test,
    "simulate": cmd_simulate,
    "cfdump": cmd_cfdump,
}


def main(argv=None, out=None, err=None) -> int:
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        if ns.command is None:
            raise UsageError("choose a command: " + ", ".join(COMMANDS))
        opts = resolve_options(ns.command, ns)
        return HANDLERS[ns.command](opts, out)
    except UsageError as exc:
        err.write(f"latentad: error: {exc}\n")
        return EXIT_INVALID
    except NumericalError as exc:
        err.write(f"latentad: numerical failure: {exc}\n")
        return EXIT_NUMERICAL
    except (LatentADError, ValueError) as exc:
        err.write(f"latentad: error: {exc}\n")
        return EXIT_INVALID
    except OSError as exc:
        err.write(f"latentad: error: {exc.filename or ''}: {exc.strerror}\n")
        return EXIT_INVALID
    except ArithmeticError as exc:
        err.write(f"latentad: numerical failure: {exc}\n")
        return EXIT_NUMERICAL
