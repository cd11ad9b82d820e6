"""Command-line runner: validate configs, run check suites, emit reports."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .config import FAMILY_CHECKS, FORMATS, ConfigError, RunConfig, load_config
from .ensemble import (CACHE_ENV, CoverageError, SpectrumCache, full_system, set_cache, set_jobs,
                       weight)
from .fock import SizingError
from .model import EnsembleParams
from .verify import (FAIL, INCOMPLETE, PASS, ErrorBudget, ModelInstance, VerificationReport,
                     _jsonable, check_concentration, check_condensate, check_maxz,
                     check_multimode, check_peak, check_pressure_collapse, check_sandwich,
                     check_shift, inputs_hash, instance, pressures, scaled_caps)

log = logging.getLogger("cnumber")

COLUMNS_VERSION = 1
BASE_COLUMNS = ("check", "V", "beta", "mu", "lam", "raw_gap", "budget", "quad_residual",
                "coherent_tail", "cap_tail", "fd_error", "verdict", "inputs_hash")
POINTWISE = ("sandwich", "shift", "maxz", "peak", "multimode")


class PreconditionError(ValueError):
    pass


@dataclass
class RunManifest:
    config_hash: str
    artifact_version: str = __version__
    columns_version: int = COLUMNS_VERSION
    reports: dict[str, list[VerificationReport]] = field(default_factory=dict)
    report_paths: dict[str, list[str]] = field(default_factory=dict)
    wall_times: dict[str, float] = field(default_factory=dict)
    cache_stats: dict[str, int] = field(default_factory=dict)
    output_dir: str = "out"

    @property
    def all_reports(self) -> list[VerificationReport]:
        return [r for rs in self.reports.values() for r in rs]

    def counts(self) -> dict[str, int]:
        out = {PASS: 0, FAIL: 0, INCOMPLETE: 0}
        for r in self.all_reports:
            out[r.verdict] += 1
        return out

    @property
    def exit_code(self) -> int:
        return 1 if self.counts()[FAIL] else 0

    def to_dict(self) -> dict:
        return {"config_hash": self.config_hash, "artifact_version": self.artifact_version,
                "columns_version": self.columns_version, "columns": list(BASE_COLUMNS),
                "report_paths": self.report_paths, "wall_times": self.wall_times,
                "cache": self.cache_stats, "verdicts": self.counts()}


# -- job construction --------------------------------------------------------

def _incomplete(check: str, point: dict, exc: Exception, key) -> VerificationReport:
    return VerificationReport(check, inputs_hash(check, key, point), math.nan, ErrorBudget(),
                              INCOMPLETE, point, {"error": f"{type(exc).__name__}: {exc}"})


@dataclass(frozen=True)
class Unsized:
    """Family member whose truncated basis exceeds the dimension limit."""

    volume: float
    error: SizingError


def _instances(cfg: RunConfig) -> list[ModelInstance | Unsized]:
    """Family members; a member that fails to size is kept as its error."""
    specs = sorted(cfg.model.family(), key=lambda s: s.volume)
    num = cfg.numerics
    out = []
    for s in specs:
        try:
            caps = scaled_caps(num.caps, s, specs[0].volume, num.cap_scaling)
            out.append(instance(s, caps, num.dim_limit))
        except SizingError as exc:
            out.append(Unsized(s.volume, SizingError(f"V={s.volume:g}: {exc}")))
    return out


def _points(cfg: RunConfig, lams=None) -> list[EnsembleParams]:
    e = cfg.ensemble
    lams = e.lam if lams is None else lams
    return [EnsembleParams(b, mu, lam) for b in e.beta for mu in e.mu for lam in lams]


def _guard(check: str, point: dict, key, fn: Callable[[], VerificationReport]):
    def run():
        try:
            return [fn()]
        except (SizingError, CoverageError) as exc:
            log.warning("%s at %s incomplete: %s", check, point, exc)
            return [_incomplete(check, point, exc, key)]
    return run


def _check_preconditions(cfg: RunConfig, checks) -> None:
    lams = cfg.ensemble.lam
    if "condensate" in checks:
        pos = sorted({x for x in lams if x > 0})
        if len(pos) < 4:
            raise PreconditionError("condensate needs a lambda grid of at least 4 positive values "
                                    f"in ensemble.lam, got {list(lams)}")
    if "concentration" in checks and not any(x != 0 for x in lams):
        raise PreconditionError("concentration needs a nonzero lambda in ensemble.lam")
    for c in checks:
        if c in FAMILY_CHECKS and len(cfg.model.lengths) < 3:
            raise PreconditionError(f"{c} needs a family of at least 3 box lengths")
    if "multimode" in checks:
        labels = {tuple(m) for m in cfg.model.modes}
        for lab in cfg.suite.multimode_modes:
            if tuple(lab) not in labels:
                raise PreconditionError(f"multimode mode {list(lab)} is not a model mode")


def _jobs_for(cfg: RunConfig, check: str, insts) -> list[Callable[[], list]]:
    num = cfg.numerics.numerics()
    jobs = []
    good = [m for m in insts if isinstance(m, ModelInstance)]
    if check in POINTWISE:
        fn = {"sandwich": check_sandwich, "shift": check_shift, "maxz": check_maxz,
              "peak": check_peak}.get(check)
        for m in insts:
            for p in _points(cfg):
                point = {"beta": p.beta, "mu": p.mu, "lam": p.lam, "V": m.volume}
                if isinstance(m, Unsized):
                    jobs.append(lambda c=check, pt=point, e=m.error:
                                [_incomplete(c, pt, e, "sizing")])
                    continue
                if check == "multimode":
                    plan = [md for lab in cfg.suite.multimode_modes for md in m.spec.modes
                            if md.label == tuple(lab)]
                    call = (lambda m=m, p=p, plan=plan:
                            check_multimode(m, p, plan, num))
                else:
                    call = lambda f=fn, m=m, p=p: f(m, p, num)
                jobs.append(_guard(check, point, m.key(), call))
        return jobs
    bad = [m.error for m in insts if isinstance(m, Unsized)]
    e = cfg.ensemble
    if check == "pressure_collapse":
        closed = all(abs(v) == 0 for m in good for v in m.spec.nu.values())
        pts = _points(cfg)
        call = (lambda p: check_pressure_collapse(good, p, num, cfg.suite.ratio_limit, closed))
    elif check == "condensate":
        lams = sorted({x for x in e.lam if x > 0})
        pts = [EnsembleParams(b, mu, 0.0) for b in e.beta for mu in e.mu]
        call = lambda p: check_condensate(good, p, lams, num)
    elif check == "concentration":
        pts = _points(cfg, [x for x in e.lam if x != 0])
        call = lambda p: check_concentration(good, p, num)
    else:
        raise PreconditionError(f"unknown check {check!r}")
    for p in pts:
        point = {"beta": p.beta, "mu": p.mu, "lam": p.lam, "V": max(m.volume for m in insts)}
        if bad:
            jobs.append(lambda pt=point, e=bad[0]: [_incomplete(check, pt, e, "sizing")])
        else:
            jobs.append(_guard(check, point, [m.key() for m in good], lambda p=p: call(p)))
    return jobs


def _cache_dir(out_dir: Path) -> Path:
    return Path(os.environ.get(CACHE_ENV) or out_dir / "cache")


def run_suite(cfg: RunConfig, jobs: int = 1, emit: bool = True) -> RunManifest:
    """Run every configured check over the parameter grid and write reports."""
    checks = list(dict.fromkeys(cfg.suite.checks))
    _check_preconditions(cfg, checks)
    out_dir = Path(cfg.output.directory)
    cache = SpectrumCache(_cache_dir(out_dir))
    old = set_cache(cache)
    set_jobs(1)
    manifest = RunManifest(cfg.hash(), output_dir=str(out_dir))
    try:
        insts = _instances(cfg)
        for check in checks:
            t0 = time.perf_counter()
            work = _jobs_for(cfg, check, insts)
            with ThreadPoolExecutor(max(1, jobs)) as pool:
                results = list(pool.map(lambda f: f(), work))
            manifest.reports[check] = sort_reports([r for rs in results for r in rs])
            manifest.wall_times[check] = time.perf_counter() - t0
            log.info("%s: %d reports in %.1fs", check, len(manifest.reports[check]),
                     manifest.wall_times[check])
        manifest.cache_stats = cache.stats()
    finally:
        set_cache(old)
    if emit:
        for fmt in cfg.output.formats:
            emit_report(manifest, fmt)
        write_manifest(manifest)
    return manifest


# -- report emission ---------------------------------------------------------

def _sort_key(r: VerificationReport):
    p = r.point
    return (r.check, p.get("V", math.nan), p.get("beta", math.nan), p.get("mu", math.nan),
            p.get("lam", math.nan), r.inputs_hash)


def sort_reports(reports) -> list[VerificationReport]:
    return sorted(reports, key=_sort_key)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (int, str)):
        return str(v)
    return json.dumps(v, sort_keys=True, separators=(",", ":"))


def report_row(r: VerificationReport) -> dict[str, str]:
    b = r.budget
    row = {"check": r.check, "V": r.point.get("V"), "beta": r.point.get("beta"),
           "mu": r.point.get("mu"), "lam": r.point.get("lam"), "raw_gap": r.raw_gap,
           "budget": b.total, "quad_residual": b.quad_residual,
           "coherent_tail": b.coherent_tail, "cap_tail": b.cap_tail, "fd_error": b.fd_error,
           "verdict": r.verdict, "inputs_hash": r.inputs_hash}
    for k, v in r.payload.items():
        row[f"payload.{k}"] = v
    return {k: _fmt(v) for k, v in row.items()}


def rows_text(reports) -> str:
    rows = [report_row(r) for r in sort_reports(reports)]
    extra = sorted({k for row in rows for k in row} - set(BASE_COLUMNS))
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(BASE_COLUMNS) + extra, restval="",
                       lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def document_text(reports, check: str | None = None) -> str:
    doc = {"format_version": COLUMNS_VERSION, "check": check,
           "reports": [_jsonable(r.to_dict()) for r in sort_reports(reports)]}
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def parse_document(text: str) -> list[VerificationReport]:
    doc = json.loads(text)
    return [VerificationReport.from_dict(d) for d in doc["reports"]]


def emit_report(manifest: RunManifest, fmt: str) -> list[str]:
    """Write one file per check in the given format; returns the paths."""
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}")
    out = Path(manifest.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    paths = []
    for check, reports in sorted(manifest.reports.items()):
        if fmt == "rows":
            path, text = out / f"{check}.csv", rows_text(reports)
        else:
            path, text = out / f"{check}.json", document_text(reports, check)
        path.write_text(text)
        manifest.report_paths.setdefault(check, [])
        if str(path) not in manifest.report_paths[check]:
            manifest.report_paths[check].append(str(path))
        paths.append(str(path))
    return paths


def write_manifest(manifest: RunManifest) -> str:
    path = Path(manifest.output_dir) / "manifest.json"
    path.write_text(json.dumps(manifest.to_dict(), sort_keys=True, indent=1) + "\n")
    return str(path)


# -- sweep and weights -------------------------------------------------------

def run_sweep(cfg: RunConfig) -> str:
    """Pressures and z_max over the parameter grid, without verdicts."""
    num = cfg.numerics.numerics()
    rows = []
    for m in _instances(cfg):
        if isinstance(m, Unsized):
            raise m.error
        for p in _points(cfg):
            pr = pressures(m, p, num)
            rows.append({"V": m.volume, "beta": p.beta, "mu": p.mu, "lam": p.lam,
                         "p": pr["p"], "p_lower": pr["p_lower"], "p_upper": pr["p_upper"],
                         "p_max": pr["p_max"], "z_max_re": complex(pr["z_max"]).real,
                         "z_max_im": complex(pr["z_max"]).imag, "budget": pr["budget"].total})
    rows.sort(key=lambda r: (r["V"], r["beta"], r["mu"], r["lam"]))
    return _write_table(cfg, "sweep.csv", rows)


def run_weights(cfg: RunConfig) -> str:
    """W (exact Gibbs state) and W'' on the quadrature nodes."""
    num = cfg.numerics.numerics()
    rows = []
    for m in _instances(cfg):
        if isinstance(m, Unsized):
            raise m.error
        for p in _points(cfg):
            grid = num.grid(m, p)
            system = full_system(m.spec, p, m.basis)
            wf = weight(m.spec, p, m.basis, grid, "full", system=system)
            wu = weight(m.spec, p, m.basis, grid, "upper")
            for z, w, a, b in zip(grid.nodes, grid.weights, wf.values, wu.values):
                rows.append({"V": m.volume, "beta": p.beta, "mu": p.mu, "lam": p.lam,
                             "re_z": float(z.real), "im_z": float(z.imag),
                             "quad_weight": float(w), "W_full": float(a), "W_upper": float(b)})
    return _write_table(cfg, "weights.csv", rows)


def _write_table(cfg: RunConfig, name: str, rows: list[dict]) -> str:
    out = Path(cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows({k: _fmt(v) for k, v in r.items()} for r in rows)
    path = out / name
    path.write_text(buf.getvalue())
    return str(path)


# -- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cnumber", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("validate", "check a config without running"),
                        ("run", "run the check suite and write reports"),
                        ("sweep", "pressures over the parameter grid, no verdicts"),
                        ("weights", "emit coherent-state weight tables")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--out", help="output directory (overrides output.directory)")
        p.add_argument("--jobs", type=int, default=1, help="worker threads")
        p.add_argument("--format", choices=FORMATS, action="append",
                       help="report format (repeatable; default from config)")
        p.add_argument("--check", nargs="+", help="subset of checks to run")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    from .config import CHECKS
    out = cfg.output
    if args.out:
        out = replace(out, directory=args.out)
    if args.format:
        out = replace(out, formats=tuple(dict.fromkeys(args.format)))
    suite = cfg.suite
    if args.check:
        bad = [c for c in args.check if c not in CHECKS]
        if bad:
            raise ConfigError("--check", f"unknown check {bad[0]!r} (allowed: {list(CHECKS)})")
        suite = replace(suite, checks=tuple(args.check))
    return replace(cfg, output=out, suite=suite)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    np.seterr(all="ignore")
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        if args.command == "validate":
            _check_preconditions(cfg, cfg.suite.checks)
            print(f"ok {cfg.hash()}")
            return 0
        if args.command == "sweep":
            print(run_sweep(cfg))
            return 0
        if args.command == "weights":
            print(run_weights(cfg))
            return 0
        manifest = run_suite(cfg, jobs=args.jobs)
    except (ConfigError, PreconditionError, SizingError, CoverageError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    counts = manifest.counts()
    for check, reports in manifest.reports.items():
        c = {v: sum(r.verdict == v for r in reports) for v in (PASS, FAIL, INCOMPLETE)}
        print(f"{check}: {c[PASS]} pass, {c[FAIL]} fail, {c[INCOMPLETE]} incomplete")
    print(f"reports in {manifest.output_dir} ({counts[PASS]} pass, {counts[FAIL]} fail, "
          f"{counts[INCOMPLETE]} incomplete)")
    return manifest.exit_code


if __name__ == "__main__":
    sys.exit(main())
