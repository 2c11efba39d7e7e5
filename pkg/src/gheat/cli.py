"""Command line runner: ``gheat COMMAND [--config PATH] [--seed N] [--out DIR] [--threads N] [--quick]``.

Exit status is 0 when every enabled check passes, 1 when a check fails and 2
on a configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import time
from dataclasses import dataclass, field, fields
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from . import report
from .grid import DomainError, GridSpec
from .noise import SigmaBounds
from .suite import CHECKS, CRITERIA, PRESETS, CheckResult, SuiteOptions, linear_snapshot, oracle_table, run_demo

log = logging.getLogger("gheat")

COMMANDS: dict[str, tuple[str, ...]] = {
    "verify-kernels": ("kernel_identities", "x_increment", "green_function"),
    "integral-props": ("lemma_battery",),
    "fubini": ("fubini",),
    "derivative-pairing": ("derivative_pairing",),
    "solve-linear": ("linear_variance", "linear_degeneracy"),
    "moments-linear": ("linear_moments",),
    "solve-nonlinear": ("picard", "nonlinear_degeneracy"),
    "anderson": (),
    "gnormal-oracle": ("g_expectation",),
    "full-suite": tuple(CHECKS),
}
SCENARIO_IDS = ("const_lo", "const_q1", "const_mid", "const_q3", "const_hi", "bang_bang", "feedback")
GRID_KEYS = ("t_end", "x_lo", "x_hi", "nt", "nx")

CSV_FILES = {
    "lemma_checks": report.LEMMA_COLUMNS,
    "kernels": report.KERNEL_COLUMNS,
    "fields": report.FIELD_COLUMNS,
    "moments_linear": report.MOMENT_COLUMNS,
    "picard_trace": report.TRACE_COLUMNS,
    "envelope": report.ENVELOPE_COLUMNS,
    "oracle": report.ORACLE_COLUMNS,
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    command: str = "full-suite"
    grid: dict | None = None
    sigma_lo: float = 0.5
    sigma_hi: float = 1.0
    scenarios: list | None = None
    M: int | None = None
    master_seed: int = 0
    output_dir: str = "gheat_out"
    preset: str | None = None
    quick: bool = False

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; choose from {sorted(COMMANDS)}")
        for name in ("sigma_lo", "sigma_hi"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{name} must be a number")
        try:
            SigmaBounds(float(self.sigma_lo), float(self.sigma_hi))
        except DomainError as exc:
            raise ConfigError(str(exc)) from None
        for name in ("M", "master_seed"):
            v = getattr(self, name)
            if v is None and name == "M":
                continue
            if isinstance(v, bool) or not isinstance(v, int) or v < (1 if name == "M" else 0):
                raise ConfigError(f"{name} must be a {'positive' if name == 'M' else 'nonnegative'} integer")
        if self.M is not None and self.M < 2:
            raise ConfigError("M must be at least 2 for a standard error")
        if self.scenarios is not None:
            if not isinstance(self.scenarios, list) or not self.scenarios:
                raise ConfigError("scenarios must be a non-empty list")
            bad = [s for s in self.scenarios if s not in SCENARIO_IDS]
            if bad:
                raise ConfigError(f"unknown scenarios {bad}; choose from {list(SCENARIO_IDS)}")
        if self.grid is not None:
            if not isinstance(self.grid, dict) or set(self.grid) != set(GRID_KEYS):
                raise ConfigError(f"grid must have exactly the keys {list(GRID_KEYS)}")
            try:
                GridSpec(**self.grid)
            except (DomainError, TypeError) as exc:
                raise ConfigError(f"invalid grid: {exc}") from None
        if self.preset is not None:
            allowed = {"fubini": {"zero", "random"}, "solve-nonlinear": set(PRESETS)}.get(self.command, set())
            if self.preset not in allowed:
                raise ConfigError(f"preset {self.preset!r} is not valid for {self.command}")
        if not isinstance(self.quick, bool):
            raise ConfigError("quick must be true or false")
        if not isinstance(self.output_dir, str):
            raise ConfigError("output_dir must be a string")

    def options(self, threads: int) -> SuiteOptions:
        return SuiteOptions(sigma_lo=float(self.sigma_lo), sigma_hi=float(self.sigma_hi), master_seed=self.master_seed,
                            M=self.M, quick=self.quick, threads=threads,
                            scenarios=tuple(self.scenarios) if self.scenarios else None, preset=self.preset,
                            grid=GridSpec(**self.grid) if self.grid else None)


def versions() -> dict:
    try:
        own = metadata.version("gheat")
    except metadata.PackageNotFoundError:
        own = "unknown"
    return {"gheat": own, "numpy": np.__version__, "scipy": scipy.__version__, "python": platform.python_version()}


def run(cfg: ExperimentConfig, threads: int = 1) -> tuple[int, dict]:
    """Execute ``cfg``; writes ``summary.json`` and CSV tables under ``cfg.output_dir``."""
    opts = cfg.options(threads)
    results: list[CheckResult] = []
    timings = {}
    names = list(COMMANDS[cfg.command])
    demo = None
    if cfg.command == "anderson":
        demo = "anderson"
    elif cfg.command == "solve-nonlinear" and cfg.preset and cfg.preset != "lipschitz":
        demo, names = cfg.preset, []
    for name in names:
        t0 = time.perf_counter()
        log.info("running %s", name)
        results.append(CHECKS[name](opts))
        timings[name] = time.perf_counter() - t0
    if demo:
        t0 = time.perf_counter()
        results.append(run_demo(opts, demo))
        timings[f"demo_{demo}"] = time.perf_counter() - t0

    extra_tables: dict[str, list[dict]] = {}
    summary_extra = {}
    if cfg.command == "solve-linear":
        extra_tables["fields"] = linear_snapshot(opts)
    if cfg.command == "gnormal-oracle":
        table = oracle_table(opts.bounds)
        summary_extra["oracle"] = table
        extra_tables["oracle"] = table

    tables: dict[str, list[dict]] = {}
    for r in results:
        for key, rows in r.tables.items():
            tables.setdefault(key, []).extend(rows)
    for key, rows in extra_tables.items():
        if key == "oracle":
            tables[key] = rows  # the configured bounds replace the fixed classical table
        else:
            tables.setdefault(key, []).extend(rows)

    by_name = {r.name: r.passed for r in results}
    criteria = {str(k): all(by_name[n] for n in v) for k, v in CRITERIA.items() if all(n in by_name for n in v)}
    banners = [r.details["banner"] for r in results if r.details.get("banner")]
    for b in banners:
        print(f"NOTE: {b}", file=sys.stderr)
    failed = [r.name for r in results if not r.passed]
    summary = {
        "config": cfg.to_dict(),
        "versions": versions(),
        "seeds": {"master_seed": cfg.master_seed},
        "scenario_dictionary": [c.to_dict() for c in opts.dictionary(GridSpec(1.0, 0.0, 1.0, 1, 1))],
        "checks": [r.summary() for r in results],
        "criteria": criteria,
        "banners": banners,
        "timings_s": timings,
        "passed": not failed,
        "failed": failed,
        **summary_extra,
    }
    out = Path(cfg.output_dir)
    for key, rows in tables.items():
        report.write_csv(out / f"{key}.csv", rows, CSV_FILES[key])
    report.write_json(out / "summary.json", summary)
    return (1 if failed else 0), summary


def _threads(arg: int | None) -> int:
    if arg is not None:
        return arg
    env = os.environ.get("GHEAT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"GHEAT_THREADS must be an integer, got {env!r}") from None
    return 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gheat", description="Stochastic heat equations under volatility uncertainty.")
    p.add_argument("command", nargs="?", choices=sorted(COMMANDS), help="experiment to run (overrides the config)")
    p.add_argument("--config", type=Path, help="JSON experiment config")
    p.add_argument("--seed", type=int, help="master seed override")
    p.add_argument("--out", help="output directory override")
    p.add_argument("--threads", type=int, help="worker threads (default: GHEAT_THREADS or 1)")
    p.add_argument("--quick", action="store_true", help="reduced sizes for smoke runs")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        raw = {}
        if args.config is not None:
            try:
                raw = json.loads(args.config.read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config: {exc}") from None
        cfg = ExperimentConfig.from_dict(raw)
        if args.command:
            cfg.command = args.command
        if args.seed is not None:
            cfg.master_seed = args.seed
        if args.out is not None:
            cfg.output_dir = args.out
        if args.quick:
            cfg.quick = True
        cfg.validate()
        threads = _threads(args.threads)
        if threads < 1:
            raise ConfigError("threads must be positive")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    status, summary = run(cfg, threads)
    for c in summary["checks"]:
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['name']}")
    if status:
        print(f"failed checks: {', '.join(summary['failed'])}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
