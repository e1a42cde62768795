"""Command line: run a configuration, write report, summary, CSV and timings.

    intercurv run CONFIG [--seed N] [--out DIR] [--check ID ...] [--grid G]
    intercurv --list

CONFIG is a JSON file or the name of a bundled configuration.  Exit codes:
0 every report passes, 1 some check failed, 2 invalid configuration,
3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import fields, replace
from importlib import resources
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import catalog as cat
from . import verify
from .expr import ExprError
from .frameopt import OptimOptions
from .report import jsonable
from .tolerances import DEFAULT, Tolerances

__all__ = ["RunConfig", "SuiteConfig", "bundled_configs", "load_config", "main", "run_config"]

log = logging.getLogger("intercurv")

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_INTERNAL = 0, 1, 2, 3
_TOL_KEYS = {f.name for f in fields(Tolerances)}


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    family: str
    params: dict = Field(default_factory=dict)
    checks: Optional[list[str]] = None
    grid: Literal["coarse", "default", "fine"] = "default"
    starts: int = Field(32, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    tolerances: dict[str, float] = Field(default_factory=dict)
    check_options: dict[str, dict] = Field(default_factory=dict)
    output: Optional[str] = None

    @field_validator("family")
    @classmethod
    def _known_family(cls, v):
        if v not in verify.FAMILIES:
            raise ValueError(f"unknown family {v!r}; expected one of {sorted(verify.FAMILIES)}")
        return v

    @field_validator("tolerances")
    @classmethod
    def _known_tolerances(cls, v):
        unknown = set(v) - _TOL_KEYS
        if unknown:
            raise ValueError(f"unknown tolerance keys {sorted(unknown)}")
        return v


class SuiteConfig(BaseModel):
    """Several runs sharing seed, grid and output directory."""

    model_config = ConfigDict(extra="forbid")

    name: str
    runs: list[RunConfig]
    grid: Optional[Literal["coarse", "default", "fine"]] = None
    seed: Optional[int] = Field(None, ge=0, lt=2**64)
    output: Optional[str] = None


Config = Union[RunConfig, SuiteConfig]


def bundled_configs() -> dict[str, str]:
    """Name -> JSON text of the configurations shipped with the package."""
    root = resources.files("intercurv") / "configs"
    return {p.name[:-5]: p.read_text() for p in sorted(root.iterdir(), key=lambda p: p.name) if p.name.endswith(".json")}


def load_config(ref: str) -> tuple[str, Config]:
    """Parse a config file path or bundled name; raises ValueError on schema errors."""
    path = Path(ref)
    if path.is_file():
        name, text = path.stem, path.read_text()
    else:
        bundled = bundled_configs()
        if ref not in bundled:
            raise FileNotFoundError(f"no config file or bundled config named {ref!r}; bundled: {sorted(bundled)}")
        name, text = ref, bundled[ref]
    data = json.loads(text)
    if isinstance(data, dict) and "runs" in data:
        return name, SuiteConfig.model_validate(data)
    return name, RunConfig.model_validate(data)


def _context(run: RunConfig) -> verify.Context:
    tol = DEFAULT.override(**run.tolerances) if run.tolerances else DEFAULT
    opts = replace(OptimOptions(), starts=run.starts, seed=run.seed)
    return verify.Context(tol=tol, opts=opts, grid=run.grid, seed=run.seed, check_options=run.check_options)


def _runs(cfg: Config, seed: Optional[int], grid: Optional[str]) -> list[RunConfig]:
    runs = cfg.runs if isinstance(cfg, SuiteConfig) else [cfg]
    out = []
    for r in runs:
        upd = {}
        if isinstance(cfg, SuiteConfig):
            if cfg.seed is not None:
                upd["seed"] = cfg.seed
            if cfg.grid is not None:
                upd["grid"] = cfg.grid
        if seed is not None:
            upd["seed"] = seed
        if grid is not None:
            upd["grid"] = grid
        out.append(r.model_copy(update=upd))
    return out


def _filter(run: RunConfig, only: Optional[set]) -> Optional[list[str]]:
    names = run.checks if run.checks is not None else verify.default_checks(run.family, run.params)
    if only is None:
        return names
    return [c for c in names if c in only]


def run_config(cfg: Config, seed: Optional[int] = None, grid: Optional[str] = None, only: Optional[set] = None):
    """Execute every run; returns ``(runs, reports per run)``."""
    runs = _runs(cfg, seed, grid)
    if only:
        known = {c for fam in verify.FAMILIES.values() for c in fam["checks"]}
        unknown = only - known
        if unknown:
            raise verify.ConfigError(f"unknown check ids {sorted(unknown)}")
    done = []
    for run in runs:
        checks = _filter(run, only)
        if not checks:
            continue
        log.info("running %s %s", run.family, checks)
        reports = verify.check_family(run.family, run.params, checks, _context(run))
        done.append((run, reports))
    return done


def _run_doc(run: RunConfig) -> dict:
    return run.model_dump(exclude={"output"})


def write_outputs(name: str, done, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    reports = [r for _, reps in done for r in reps]
    doc = {
        "config": name,
        "runs": [{"config": _run_doc(run), "reports": [r.to_dict() for r in reps]} for run, reps in done],
        "summary": {
            "reports": len(reports),
            "passed": sum(r.passed for r in reports),
            "failed": [r.check_id for r in reports if not r.passed],
        },
    }
    (out / "report.json").write_text(json.dumps(jsonable(doc), indent=2, sort_keys=True) + "\n")
    timing = {"reports": [{"check_id": r.check_id, "runtime_s": round(r.runtime, 6)} for r in reports]}
    timing["total_s"] = round(sum(r.runtime for r in reports), 6)
    (out / "timing.json").write_text(json.dumps(timing, indent=2) + "\n")
    csvs = []
    for r in reports:
        for scan_id, (var_names, scan) in r.scans.items():
            path = out / f"scan_{scan_id}.csv"
            _write_scan_csv(path, var_names, scan)
            csvs.append(path.name)
    (out / "summary.md").write_text(_summary_md(name, done, csvs))
    return doc


def _write_scan_csv(path: Path, var_names, scan) -> None:
    m, n = scan.frames.shape[1:]
    header = list(var_names) + ["min_cm"] + [f"e{l + 1}_{var_names[a]}" for l in range(m) for a in range(n)]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for pt, val, fr in zip(scan.points, scan.minima, scan.frames):
            w.writerow([repr(float(x)) for x in pt] + [repr(float(val))] + [repr(float(x)) for x in fr.ravel()])


def _summary_md(name: str, done, csvs) -> str:
    lines = [f"# {name}", ""]
    for run, reps in done:
        lines += [f"## {run.family}", "", f"params: `{json.dumps(run.params, sort_keys=True)}`, grid `{run.grid}`, seed {run.seed}", ""]
        lines += ["| check | status | worst residual | tolerance |", "|---|---|---|---|"]
        for r in reps:
            if r.residuals:
                k = max(r.residuals, key=lambda k: float(r.residuals[k]) / max(float(r.tolerances[k]), 1e-300))
                lines.append(f"| {r.check_id} | {r.status} | {k} = {float(r.residuals[k]):.3e} | {float(r.tolerances[k]):.1e} |")
            else:
                lines.append(f"| {r.check_id} | {r.status} | | |")
        lines.append("")
    lines += ["## Dimension gate n(m-2) vs m^2-2", "", verify.render_gate_table(9), ""]
    if csvs:
        lines += ["## Scan tables", ""] + [f"- {c}" for c in csvs] + [""]
    return "\n".join(lines)


def _list() -> str:
    out = ["families and checks:"]
    for fam, spec in verify.FAMILIES.items():
        out.append(f"  {fam}")
        for c in spec["checks"]:
            out.append(f"    {c}")
    out.append("bundled configs:")
    out += [f"  {n}" for n in bundled_configs()]
    return "\n".join(out)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="intercurv", description="Verify curvature constructions and inequalities.")
    ap.add_argument("--list", action="store_true", help="list families, checks and bundled configs")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd")
    run = sub.add_parser("run", help="run a configuration")
    run.add_argument("config", help="JSON file or bundled config name")
    run.add_argument("--seed", type=int)
    run.add_argument("--out", type=Path)
    run.add_argument("--check", action="append", help="only run these check ids (repeatable or comma separated)")
    run.add_argument("--grid", choices=sorted(verify.GRID_PRESETS))
    return ap


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.list:
        print(_list())
        return EXIT_PASS
    if args.cmd != "run":
        build_parser().print_usage(sys.stderr)
        return EXIT_CONFIG
    try:
        name, cfg = load_config(args.config)
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        only = None
        if args.check:
            only = {c.strip() for item in args.check for c in item.split(",") if c.strip()}
        t0 = time.perf_counter()
        done = run_config(cfg, args.seed, args.grid, only)
    except (ValidationError, ValueError, KeyError, FileNotFoundError, ExprError, cat.FamilyError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    out = args.out or Path(cfg.output or f"intercurv-out/{name}")
    try:
        doc = write_outputs(name, done, out)
    except OSError as exc:
        print(f"internal error: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    for _, reps in done:
        for r in reps:
            print(r.summary_line())
    s = doc["summary"]
    print(f"{s['passed']}/{s['reports']} reports pass in {time.perf_counter() - t0:.1f} s; outputs in {out}")
    return EXIT_PASS if not s["failed"] else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
