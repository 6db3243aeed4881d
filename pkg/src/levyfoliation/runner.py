"""Execute a :class:`~levyfoliation.config.RunConfig` and write its artifacts.

Work is split into (seed, task) units.  Units are pure: they receive the
config and return rows and summaries, and only the orchestrator touches the
file system.  Results are merged in config order, so the artifacts do not
depend on the worker count.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    backward_decay_check,
    example5_fiber_report,
    example5_manifold_report,
    invariance_residual,
    parallelism_check,
)
from .config import RunConfig
from .errors import LevyFoliationError
from .levy_path import StableParams, TimeGrid, generate_two_sided_path
from .lyapunov_perron import (
    base_orbit,
    fiber_lipschitz_bound,
    gap_condition,
    stable_fiber,
    unstable_fiber,
    unstable_manifold,
)
from .ou import stationary_z, sublinear_growth_report
from .rds import State

__all__ = ["CSV_SCHEMA", "RunReport", "run", "run_unit"]

CSV_SCHEMA = "levyfoliation-csv/1"
OUT_ENV = "LEVYFOLIATION_OUT"


@dataclass
class RunReport:
    """Per-experiment status plus provenance.

    ``experiments`` maps each requested task (in config order) to a dict with
    ``status`` ("ok" or "failed") and per-seed summaries.
    """

    config_hash: str
    seeds: tuple
    version: str
    experiments: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    timestamp: str = ""

    @property
    def failed(self) -> bool:
        return any(e["status"] != "ok" for e in self.experiments.values())

    @property
    def exit_code(self) -> int:
        return 1 if self.failed else 0

    def body(self) -> dict:
        return {"config_hash": self.config_hash, "seeds": list(self.seeds),
                "version": self.version, "experiments": self.experiments,
                "files": self.files}

    def body_hash(self) -> str:
        blob = json.dumps(self.body(), sort_keys=True, allow_nan=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def to_json(self) -> str:
        doc = {"header": {"timestamp": self.timestamp, "report_hash": self.body_hash()}}
        doc.update(self.body())
        return json.dumps(doc, indent=2, sort_keys=False, allow_nan=True)


def _realization(cfg: RunConfig, seed: int, window=None):
    params = StableParams(cfg.noise.alpha, cfg.noise.scale, seed)
    grid = cfg.path_grid if window is None else window
    path = generate_two_sided_path(params, grid)
    return stationary_z(path, cfg.burn_in)


def _tag(cfg, seed):
    g = cfg.grid
    return f"seed={seed};window=[{g.t_min:g},{g.t_max:g}];dt={g.dt:g}"


def _state(cfg, row):
    n = cfg.system.n
    return State(np.asarray(row[:n], dtype=float), np.asarray(row[n:], dtype=float))


def _fiber_rows(fiber, key, name="l"):
    rows = []
    for s, v, r, c in zip(fiber.samples, fiber.values, fiber.residuals, fiber.converged):
        rows.append(list(s) + list(np.atleast_1d(v)) + [float(r), fiber.iterations])
    dim_s, dim_v = fiber.samples.shape[1], np.atleast_2d(fiber.values).shape[1]
    header = ([key] if dim_s == 1 else [f"{key}_{i}" for i in range(dim_s)])
    header += ([name] if dim_v == 1 else [f"{name}_{i}" for i in range(dim_v)])
    return header + ["residual", "iterations"], rows


def _gap_summary(cfg, side):
    spec = cfg.system
    eta = cfg.lp.eta_for(spec, side)
    rho, holds = gap_condition(spec.a, spec.b, spec.K, eta)
    out = {"eta": eta, "rho": rho, "gap_holds": holds}
    if holds:
        out["lipschitz_bound"] = fiber_lipschitz_bound(spec.a, spec.b, spec.K, eta, side)
    return out


def _mate(cfg, ou, bp, tag):
    xi = bp.x + 1.0
    fib = unstable_fiber(cfg.system, ou, bp, xi[None, :], cfg.lp, tag)
    return State(xi, fib.values[0])


def run_unit(cfg: RunConfig, seed: int, task: str):
    """Run one (seed, task) unit; returns ``(summary, tables)``.

    ``tables`` is a list of ``(name, header, rows)``.  Failures are caught
    and reported in the summary.
    """
    spec = cfg.system
    tag = _tag(cfg, seed)
    try:
        if task == "sublinear_report":
            h = cfg.sublinear_horizon
            grid = TimeGrid(-(h + cfg.burn_in), h, cfg.grid.dt)
            ou = _realization(cfg, seed, grid)
            rep = sublinear_growth_report(ou)
            rows = [[float(T), float(zr), float(ir)] for T, zr, ir in
                    zip(rep.horizons, rep.z_ratios, rep.integral_ratios)]
            summary = {"passed": rep.passed, "z_shrinks": rep.z_shrinks,
                       "integral_shrinks": rep.integral_shrinks}
            return summary, [(f"sublinear_seed{seed}", ["T", "z_ratio", "integral_ratio"], rows)]

        ou = _realization(cfg, seed)
        bps = [_state(cfg, r) for r in cfg.base_points]
        if task == "fiber":
            tables, worst = [], 0.0
            for j, bp in enumerate(bps):
                fib = unstable_fiber(spec, ou, bp, cfg.xi, cfg.lp, tag)
                header, rows = _fiber_rows(fib, "xi")
                tables.append((f"fiber_seed{seed}_bp{j}", header, rows))
                worst = max(worst, fib.self_residual)
            summary = _gap_summary(cfg, "unstable")
            summary.update(self_residual=worst, iterations=fib.iterations)
            return summary, tables
        if task == "stable_fiber":
            tables, worst = [], 0.0
            for j, bp in enumerate(bps):
                fib = stable_fiber(spec, ou, bp, cfg.zeta, cfg.lp, tag)
                header, rows = _fiber_rows(fib, "zeta")
                tables.append((f"stable_fiber_seed{seed}_bp{j}", header, rows))
                worst = max(worst, fib.self_residual)
            summary = _gap_summary(cfg, "stable")
            summary.update(self_residual=worst, iterations=fib.iterations)
            return summary, tables
        if task == "manifold":
            man = unstable_manifold(spec, ou, cfg.xi, cfg.lp, tag)
            header, rows = _fiber_rows(man, "xi", "h")
            summary = _gap_summary(cfg, "unstable")
            summary.update(h_at_origin=man.value_at_origin(), iterations=man.iterations)
            return summary, [(f"manifold_seed{seed}", header, rows)]
        if task == "decay_check":
            bp = bps[0]
            mate = _mate(cfg, ou, bp, tag)
            info = _gap_summary(cfg, "unstable")
            fit = backward_decay_check(spec, ou, bp, mate, info["rho"], cfg.decay_horizon,
                                       cfg.lp)
            summary = dict(info, slope=fit.slope, intercept=fit.intercept,
                           max_violation=fit.max_violation, direct_mismatch=fit.direct_mismatch)
            base = base_orbit(spec, ou, bp, "unstable", cfg.decay_horizon)
            weight = np.exp(-info["eta"] * base.times - base.I)
            rows = [[float(t)] + list(x) + list(y) + [float(w)]
                    for t, x, y, w in zip(base.times, base.x, base.y, weight)]
            header = (["t"] + [f"x_{i}" for i in range(spec.n)]
                      + [f"y_{i}" for i in range(spec.m)] + ["weight"])
            return summary, [(f"orbit_seed{seed}", header, rows)]
        if task == "invariance_check":
            bp = bps[0]
            mate = _mate(cfg, ou, bp, tag)
            res = invariance_residual(spec, ou, bp, mate, cfg.tau, cfg.lp)
            return {"tau": cfg.tau, "residual": res}, []
        if task == "parallelism_check":
            bp1 = bps[0]
            bp2 = bps[1] if len(bps) > 1 else State(bp1.x, bp1.y + 1.0)
            f1 = unstable_fiber(spec, ou, bp1, cfg.xi, cfg.lp, tag)
            f2 = unstable_fiber(spec, ou, bp2, cfg.xi, cfg.lp, tag)
            man = unstable_manifold(spec, ou, cfg.xi, cfg.lp, tag)
            rep = parallelism_check(f1, f2, man)
            return {"passed": rep.passed, "max_deviation": rep.max_abs_error,
                    "p": rep.details["p"], "q": rep.details["q"]}, []
        if task == "oracle_compare":
            eps = cfg.preset_epsilon
            if eps is None:
                raise LevyFoliationError("oracle_compare requires the example5 preset")
            errs = []
            for bp in bps:
                errs.append(example5_fiber_report(
                    unstable_fiber(spec, ou, bp, cfg.xi, cfg.lp, tag), eps).max_abs_error)
            man_rep = example5_manifold_report(unstable_manifold(spec, ou, cfg.xi, cfg.lp, tag),
                                               eps)
            err = max(max(errs), man_rep.max_abs_error)
            return {"passed": err <= 1e-3, "fiber_error": max(errs),
                    "manifold_error": man_rep.max_abs_error}, []
        raise LevyFoliationError(f"unknown task {task!r}")
    except Exception as exc:  # recorded, never propagated to sibling units
        return {"error": f"{type(exc).__name__}: {exc}",
                "traceback": traceback.format_exc(limit=3)}, []


def _csv_text(kind, header, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# {CSV_SCHEMA} kind={kind}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def run(cfg: RunConfig, workers: int = 1, out_dir=None) -> RunReport:
    """Execute every (seed, task) unit and write CSV/JSON artifacts.

    The output directory is ``out_dir``, else the config's ``output.dir``,
    else ``$LEVYFOLIATION_OUT``, else ``./results``.  Nothing is written
    when the task list is empty.
    """
    units = [(seed, task) for task in cfg.experiments for seed in cfg.seeds]
    if workers > 1 and len(units) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_unit, cfg, seed, task) for seed, task in units]
            results = [f.result() for f in futures]
    else:
        results = [run_unit(cfg, seed, task) for seed, task in units]

    report = RunReport(cfg.config_hash(), tuple(cfg.seeds), __version__,
                       timestamp=time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()))
    for task in cfg.experiments:
        report.experiments[task] = {"status": "ok", "seeds": {}}
    tables = []
    for (seed, task), (summary, tabs) in zip(units, results):
        entry = report.experiments[task]
        summary = _clean(summary)
        failed = "error" in summary or summary.get("passed") is False
        if failed:
            entry["status"] = "failed"
        entry["seeds"][str(seed)] = summary
        if "error" not in summary:
            tables.extend((task, t) for t in tabs)
    if not cfg.experiments:
        return report

    out = Path(out_dir or cfg.output_dir or os.environ.get(OUT_ENV) or "results")
    out.mkdir(parents=True, exist_ok=True)
    for task, (name, header, rows) in tables:
        fname = f"{name}.csv"
        (out / fname).write_text(_csv_text(task, header, rows), encoding="utf-8")
        report.files.append(fname)
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    return report
