"""Batch front-end: run a bound curve from a config file, compare curve CSVs.

Config files are INI (``configparser``) with a schema version::

    [run]
    schema = 1
    scenario = bell-assemblage      ; or prepare-measure, steering
    reference = bb84                ; preset name, or "inline" plus a [reference] section
    level = 3
    projective = true
    dimension = 2                   ; prepare-measure only
    seed = 0
    output = chsh.csv
    dump_sdpa = dumps               ; optional

    [data]
    functional = chsh
    from = 2
    to = 2*sqrt(2)
    steps = 5
    ; or: table = observed.npy      (a single point)

    [solver]
    tol = 1e-8
    max_iter = 200
    verify_tol = 1e-6

Relative paths are resolved against the config file's directory. The worker
count for concurrent sweep points is read from ``SELFTEST_WORKERS``.
"""

from __future__ import annotations

import argparse
import ast
import configparser
import csv
import math
import operator
import os
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import sdpcore as sc
from .moments import ReductionRules
from .scenarios import (ObservedData, ReferenceAssemblage, ReferenceBipartiteState, ReferenceEnsemble,
                        bound_curve, build_assemblage_bound, build_pm_bound, build_steering_bound,
                        evaluate_functional, pm_span, preset_reference)

SCHEMA_VERSION = 1
SCENARIOS = ("bell-assemblage", "prepare-measure", "steering")
CSV_HEADER = ("functional_value", "bound", "status", "solve_seconds", "psd_residual", "level")
WORKERS_ENV = "SELFTEST_WORKERS"
UNVERIFIED = "unverified"

_REFERENCE_KIND = {"bell-assemblage": ReferenceAssemblage, "prepare-measure": ReferenceEnsemble,
                   "steering": ReferenceBipartiteState}
_DEFAULT_LEVEL = {"bell-assemblage": 3, "prepare-measure": 2, "steering": 2}


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = f"{path or '<config>'}:{line if line is not None else '?'}"
        super().__init__(f"{where}: {message}")


@dataclass
class RunConfig:
    scenario: str
    reference: object
    level: int
    projective: bool = True
    dimension: int | None = None
    sweep: list = field(default_factory=list)
    functional: str | None = None
    table: np.ndarray | None = None
    tol: float = 1e-8
    max_iter: int = 200
    verify_tol: float = 1e-6
    output: Path = Path("curve.csv")
    dump_sdpa: Path | None = None
    seed: int = 0


# ------------------------------------------------------------------ values

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_FUNCS = {"sqrt": math.sqrt}
_NAMES = {"pi": math.pi}


def parse_number(text: str) -> float:
    """Arithmetic on numeric literals with ``sqrt`` and ``pi``, e.g. ``2*sqrt(2)``."""

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS \
                and len(node.args) == 1 and not node.keywords:
            return _FUNCS[node.func.id](ev(node.args[0]))
        if isinstance(node, ast.Name) and node.id in _NAMES:
            return _NAMES[node.id]
        raise ValueError(f"unsupported expression {text!r}")

    return float(ev(ast.parse(text.strip(), mode="eval")))


def parse_matrix(text: str) -> np.ndarray:
    """Nested list literal, complex entries allowed (``0.5j``)."""
    value = ast.literal_eval(text.strip())
    m = np.array(value, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    return m


# ------------------------------------------------------------------ config

def _line_index(text: str) -> dict:
    """``{(section, key): line}`` plus ``{(section, None): header line}``."""
    index = {}
    section = None
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            index.setdefault((section, None), n)
            continue
        m = re.match(r"([^=:]+?)\s*[=:]", line)
        if m and section is not None:
            index.setdefault((section, m.group(1).strip().lower()), n)
    return index


class _Reader:
    def __init__(self, parser: configparser.ConfigParser, lines: dict, path: str):
        self.parser = parser
        self.lines = lines
        self.path = path

    def error(self, message, section, key=None):
        line = self.lines.get((section, key), self.lines.get((section, None)))
        return ConfigError(message, line, self.path)

    def has(self, section, key):
        return self.parser.has_option(section, key)

    def raw(self, section, key, default=None, required=False):
        if not self.parser.has_section(section):
            if required:
                raise ConfigError(f"missing section [{section}]", 1, self.path)
            return default
        if not self.parser.has_option(section, key):
            if required:
                raise self.error(f"[{section}] is missing required key {key!r}", section)
            return default
        return self.parser.get(section, key)

    def convert(self, section, key, fn, default=None, required=False):
        text = self.raw(section, key, None, required)
        if text is None:
            return default
        try:
            return fn(text)
        except (ValueError, SyntaxError, TypeError) as exc:
            raise self.error(f"bad value for {key!r}: {exc}", section, key) from None


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _inline_reference(rd: _Reader, scenario: str):
    sec = "reference"
    if not rd.parser.has_section(sec):
        raise rd.error("reference = inline needs a [reference] section", "run", "reference")
    items = dict(rd.parser.items(sec))
    try:
        if scenario == "prepare-measure":
            keys = sorted((k for k in items if re.fullmatch(r"rho_\d+", k)), key=lambda k: int(k[4:]))
            if not keys:
                raise ValueError("expected keys rho_0, rho_1, ...")
            return ReferenceEnsemble([parse_matrix(items[k]) for k in keys])
        if scenario == "steering":
            dims = tuple(int(v) for v in items.get("dims", "2, 2").split(","))
            return ReferenceBipartiteState(parse_matrix(items["rho"]), dims)
        found = {}
        for k, v in items.items():
            m = re.fullmatch(r"sigma_(\d+)_(\d+)", k)
            if m:
                found[int(m.group(1)), int(m.group(2))] = parse_matrix(v)
        if not found:
            raise ValueError("expected keys sigma_<x>_<a>")
        n_x = max(x for x, _ in found) + 1
        n_a = max(a for _, a in found) + 1
        return ReferenceAssemblage([[found[x, a] for a in range(n_a)] for x in range(n_x)])
    except KeyError as exc:
        raise rd.error(f"inline reference is missing {exc}", sec) from None
    except (ValueError, SyntaxError, TypeError) as exc:
        raise rd.error(f"bad inline reference: {exc}", sec) from None


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", None, str(path)) from None
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        if line is None and getattr(exc, "errors", None):
            line = exc.errors[0][0]
        raise ConfigError(str(exc).splitlines()[0], line, str(path)) from None
    rd = _Reader(parser, _line_index(text), str(path))
    base = path.parent

    schema = rd.convert("run", "schema", int, required=True)
    if schema != SCHEMA_VERSION:
        raise rd.error(f"unsupported schema {schema} (expected {SCHEMA_VERSION})", "run", "schema")
    scenario = rd.raw("run", "scenario", required=True).strip()
    if scenario not in SCENARIOS:
        raise rd.error(f"unknown scenario {scenario!r}; expected one of {', '.join(SCENARIOS)}", "run", "scenario")

    ref_name = rd.raw("run", "reference", required=True).strip()
    if ref_name == "inline":
        reference = _inline_reference(rd, scenario)
    else:
        try:
            reference = preset_reference(ref_name)
        except (KeyError, ValueError) as exc:
            raise rd.error(str(exc).strip("'\""), "run", "reference") from None
    if not isinstance(reference, _REFERENCE_KIND[scenario]):
        raise rd.error(f"reference {ref_name!r} does not fit scenario {scenario}", "run", "reference")

    level = rd.convert("run", "level", int, _DEFAULT_LEVEL[scenario])
    if level < 1:
        raise rd.error("level must be >= 1", "run", "level")
    projective = rd.convert("run", "projective", _parse_bool, True)
    dimension = rd.convert("run", "dimension", int)
    if scenario == "prepare-measure":
        if dimension is None:
            raise rd.error("dimension is required for prepare-measure", "run")
        if dimension < 2:
            raise rd.error("dimension must be >= 2", "run", "dimension")
    elif dimension is not None:
        raise rd.error("dimension only applies to prepare-measure", "run", "dimension")
    seed = rd.convert("run", "seed", int, 0)
    output = base / rd.raw("run", "output", "curve.csv").strip()
    dump = rd.raw("run", "dump_sdpa")
    dump_sdpa = base / dump.strip() if dump else None

    functional = rd.raw("data", "functional")
    functional = functional.strip() if functional else None
    table = None
    sweep: list = []
    if rd.has("data", "table"):
        tpath = base / rd.raw("data", "table").strip()
        try:
            table = np.load(tpath)
        except (OSError, ValueError) as exc:
            raise rd.error(f"cannot load table: {exc}", "data", "table") from None
        if functional:
            try:
                sweep = [evaluate_functional(functional, table)]
            except ValueError as exc:
                raise rd.error(str(exc), "data", "functional") from None
        else:
            sweep = [math.nan]
    else:
        if functional is None:
            raise rd.error("[data] needs either table or functional", "data")
        lo = rd.convert("data", "from", parse_number, required=True)
        hi = rd.convert("data", "to", parse_number, required=True)
        steps = rd.convert("data", "steps", int, required=True)
        if steps < 1:
            raise rd.error("steps must be >= 1", "data", "steps")
        if lo > hi:
            raise rd.error("sweep must satisfy from <= to", "data", "from")
        sweep = [float(v) for v in np.linspace(lo, hi, steps)] if steps > 1 else [lo]

    tol = rd.convert("solver", "tol", parse_number, 1e-8)
    max_iter = rd.convert("solver", "max_iter", int, 200)
    verify_tol = rd.convert("solver", "verify_tol", parse_number, 1e-6)
    return RunConfig(scenario, reference, level, projective, dimension, sweep, functional, table,
                     tol, max_iter, verify_tol, output, dump_sdpa, seed)


# ------------------------------------------------------------------ running

def make_builder(cfg: RunConfig):
    """``value -> SdpProblem`` for the configured scenario and data mode."""
    rules = ReductionRules(cfg.projective)

    def data_for(value):
        if cfg.table is not None:
            return ObservedData.from_table(cfg.table)
        return ObservedData.from_functional(cfg.functional, value)

    if cfg.scenario == "bell-assemblage":
        return lambda v: build_assemblage_bound(cfg.reference, data_for(v), level=cfg.level, rules=rules)
    if cfg.scenario == "steering":
        return lambda v: build_steering_bound(cfg.reference, data_for(v), level=cfg.level, rules=rules)
    # the span is sampled once per run and shared by every sweep point
    if cfg.table is not None:
        n_b, n_y = cfg.table.shape[0], cfg.table.shape[2]
    else:
        n_b, n_y = 2, int(round(math.log2(cfg.reference.n_x)))
    span = pm_span(cfg.reference.n_x, cfg.level, cfg.dimension, n_b=n_b, n_y=n_y, rules=rules, seed=cfg.seed)
    return lambda v: build_pm_bound(cfg.reference, data_for(v), level=cfg.level, d=cfg.dimension,
                                    span=span, rules=rules)


def _workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def curve_rows(cfg: RunConfig, points) -> list:
    rows = []
    for pt in points:
        status = pt.report.status
        psd_res = math.nan
        bound = pt.bound
        if pt.report.ok:
            psd_res, _ = sc.evaluate_residuals(pt.problem, pt.report.assignment)
            if not sc.verify(pt.report, pt.problem, cfg.verify_tol):
                status, bound = UNVERIFIED, math.nan
        rows.append((pt.value, bound, status, pt.report.solve_seconds, psd_res, cfg.level))
    return rows


def run(config_path, stream=sys.stderr) -> int:
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=stream)
        return 1
    builder = make_builder(cfg)
    settings = sc.SolveSettings(tol=cfg.tol, max_iter=cfg.max_iter)
    points = bound_curve(builder, cfg.sweep, settings, workers=_workers(), keep_problems=True)
    rows = curve_rows(cfg, points)

    cfg.output.parent.mkdir(parents=True, exist_ok=True)
    with open(cfg.output, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for value, bound, status, secs, res, level in rows:
            w.writerow([_fmt(value), _fmt(bound), status, _fmt(secs), _fmt(res), level])
    if cfg.dump_sdpa is not None:
        cfg.dump_sdpa.mkdir(parents=True, exist_ok=True)
        for i, pt in enumerate(points):
            sc.export_sdpa(pt.problem, cfg.dump_sdpa / f"point_{i:03d}.dat-s")

    failed = [r for r in rows if r[2] not in (sc.OPTIMAL, sc.NEAR_OPTIMAL)]
    for value, _, status, *_ in failed:
        print(f"point {value:.10g}: {status}", file=stream)
    return 2 if failed else 0


# ------------------------------------------------------------------ comparing

def _read_curve(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return []
    header, body = rows[0], [r for r in rows[1:] if r]
    try:
        iv, ib = header.index("functional_value"), header.index("bound")
    except ValueError:
        raise ValueError(f"{path}: missing functional_value/bound columns") from None
    return [(float(r[iv]), float(r[ib])) for r in body]


def compare(csv_path, expected_path, tol: float, stream=sys.stderr) -> int:
    """0 if every bound matches within ``tol``; 1 on a grid mismatch; 2 otherwise."""
    try:
        got, want = _read_curve(csv_path), _read_curve(expected_path)
    except (OSError, ValueError) as exc:
        print(f"compare: {exc}", file=stream)
        return 1
    if len(got) != len(want):
        print(f"compare: {len(got)} rows vs {len(want)} expected", file=stream)
        return 1
    for (v1, _), (v2, _) in zip(got, want):
        same = (math.isnan(v1) and math.isnan(v2)) or math.isclose(v1, v2, rel_tol=1e-12, abs_tol=1e-12)
        if not same:
            print(f"compare: functional grid differs ({v1!r} vs {v2!r})", file=stream)
            return 1
    bad = 0
    for (v, b1), (_, b2) in zip(got, want):
        if math.isnan(b1) and math.isnan(b2):
            continue
        if math.isnan(b1) or math.isnan(b2) or abs(b1 - b2) > tol:
            print(f"compare: at {v:.10g} bound {b1!r} vs expected {b2!r}", file=stream)
            bad += 1
    return 2 if bad else 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="robust-selftest", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="solve the bound curve described by a config file")
    p_run.add_argument("config")
    p_cmp = sub.add_parser("compare", help="compare a curve CSV with an expected one")
    p_cmp.add_argument("csv")
    p_cmp.add_argument("expected")
    p_cmp.add_argument("--tol", type=float, default=1e-6)
    args = ap.parse_args(argv)
    if args.command == "run":
        return run(args.config)
    return compare(args.csv, args.expected, args.tol)


if __name__ == "__main__":
    sys.exit(main())
