"""
Convergence studies: estimates over an ``N`` grid for several methods,
log-log slope fits, and CSV/JSON output.

Every cell ``(method, N)`` draws from its own random streams, keyed by the
configuration seed, the method and ``N``, so results do not depend on the
order in which cells run. Failures are recorded per cell in a status column
and the study carries on.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
import zlib
from dataclasses import dataclass
from typing import Optional

from . import __version__, _kernels, numkit
from .config import BuiltProblem, ExperimentConfig, Method, build_problem
from .errors import InsufficientData, IntegrandOverflow, QmcisError
from .isampling import MonteCarlo, estimate, resolve_plan
from .lattice import cached_cbc, make_pod_weights

CSV_COLUMNS = ("method", "proposal", "N", "value", "rmse", "R", "seed", "status")
FIT_COLUMNS = ("method", "proposal", "slope", "intercept", "points", "status")


@dataclass(frozen=True)
class Row:
    method: str
    proposal: str
    n_points: int
    value: float
    rmse: float
    shifts: int
    seed: int
    status: str = "ok"


@dataclass(frozen=True)
class Fit:
    method: str
    proposal: str
    slope: float
    intercept: float
    points: int
    status: str = "ok"


@dataclass
class ConvergenceReport:
    rows: list
    fits: list
    meta: dict

    def fit(self, method: str, proposal: str) -> Fit:
        for f in self.fits:
            if f.method == method and f.proposal == proposal:
                return f
        raise KeyError((method, proposal))

    def rows_for(self, method: str, proposal: str) -> list:
        return [r for r in self.rows if r.method == method and r.proposal == proposal]

    def csv_text(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(CSV_COLUMNS)
        for r in self.rows:
            out.writerow([r.method, r.proposal, r.n_points, repr(r.value), repr(r.rmse),
                          r.shifts, r.seed, r.status])
        return buf.getvalue()

    def fits_text(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(FIT_COLUMNS)
        for f in self.fits:
            out.writerow([f.method, f.proposal, repr(f.slope), repr(f.intercept),
                          f.points, f.status])
        return buf.getvalue()

    def write(self, directory: str, stem: str = "convergence") -> dict:
        os.makedirs(directory, exist_ok=True)
        paths = {
            "rows": os.path.join(directory, f"{stem}.csv"),
            "fits": os.path.join(directory, f"{stem}_fits.csv"),
            "meta": os.path.join(directory, f"{stem}_meta.json"),
        }
        with open(paths["rows"], "w", encoding="utf-8") as fh:
            fh.write(self.csv_text())
        with open(paths["fits"], "w", encoding="utf-8") as fh:
            fh.write(self.fits_text())
        with open(paths["meta"], "w", encoding="utf-8") as fh:
            json.dump(self.meta, fh, indent=2, sort_keys=True)
        return paths


def _cell_key(method: Method, n: int) -> tuple:
    # stable across runs and platforms
    return (zlib.crc32(method.label.encode()), n)


def _status_of(exc: Exception) -> str:
    if isinstance(exc, IntegrandOverflow):
        return "overflow"
    return f"error:{type(exc).__name__}"


def run_cell(cfg: ExperimentConfig, built: BuiltProblem, method: Method, plan, n: int,
             cache_dir: Optional[str] = None) -> Row:
    """One estimate; exceptions from the package become a status string."""
    d = built.problem.dim
    try:
        if method.sampler == "rqmc":
            weights = make_pod_weights(d, cfg.pod_kappa, cfg.pod_eta, cfg.pod_lambda)
            points = cached_cbc(n, d, weights, cfg.scheme_for(method), cache_dir)
        else:
            points = MonteCarlo(n)
        res = estimate(built.problem, plan, points, cfg.shifts, cfg.seed, _cell_key(method, n))
        return Row(method.sampler, method.proposal_label, n, res.value, res.rmse,
                   cfg.shifts, cfg.seed)
    except QmcisError as exc:
        return Row(method.sampler, method.proposal_label, n, math.nan, math.nan,
                   cfg.shifts, cfg.seed, _status_of(exc))


def _fit(method: str, proposal: str, rows) -> Fit:
    pts = [(r.n_points, r.rmse) for r in rows if r.status == "ok"]
    try:
        slope, intercept = numkit.fit_loglog_slope(pts)
        return Fit(method, proposal, slope, intercept, len(pts))
    except InsufficientData as exc:
        return Fit(method, proposal, math.nan, math.nan, len(pts), f"error:{exc}")


def run_convergence(cfg: ExperimentConfig, cache_dir: Optional[str] = None,
                    built: Optional[BuiltProblem] = None) -> ConvergenceReport:
    """Run every ``(method, N)`` cell of the configuration and fit slopes."""
    started = time.time()
    built = built or build_problem(cfg)
    rows = []
    plans = {}
    for method in cfg.methods:
        key = (method.proposal, method.nu)
        if key not in plans:
            try:
                plans[key] = resolve_plan(built.problem, method.proposal, method.nu, cfg.t_scale)
            except QmcisError as exc:
                plans[key] = exc
        plan = plans[key]
        for n in cfg.n_list:
            if isinstance(plan, Exception):
                rows.append(Row(method.sampler, method.proposal_label, n, math.nan, math.nan,
                                cfg.shifts, cfg.seed, _status_of(plan)))
            else:
                rows.append(run_cell(cfg, built, method, plan, n, cache_dir))
    rows.sort(key=lambda r: (r.method, r.proposal, r.n_points))
    fits = []
    for method, proposal in sorted({(r.method, r.proposal) for r in rows}):
        fits.append(_fit(method, proposal, [r for r in rows
                                            if r.method == method and r.proposal == proposal]))
    meta = {
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "version": __version__,
        "backend": _kernels.BACKEND,
        "started": started,
        "finished": time.time(),
        "exact": built.exact,
    }
    return ConvergenceReport(rows, fits, meta)
