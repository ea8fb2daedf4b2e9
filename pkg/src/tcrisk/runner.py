"""Experiment orchestration: comparison tables and convergence sweeps.

Seed derivation tree (all from the config seed ``s``):

* threshold search for target ``i``: ``derive_seed(s, 0, i)``
* method run: ``derive_seed(s, method_id, i, kind, rep)`` with ``kind`` 0
  for the loss-probability run and 1 for the conditional-excess run
* RQMC outer replication ``m`` of such a run: ``derive_seed(<run seed>, method_id, m)``
  (``derive_seed(<run seed>, m)`` for QSIS)
* convergence sweep, budget ``b``, repetition ``r``: ``derive_seed(s, method_id, b, r)``
* convergence reference: ``derive_seed(s, 0, 2**31 - 1)``
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import ConfigError, DomainError, NumericalError
from .estim import (
    build_grid,
    calibrate_is,
    find_tau,
    is_estimate,
    naive_estimate,
    rqmc_driver,
    rqmc_sis_estimate,
    sis_estimate,
    strata_for_budget,
)
from .lds import make_point_source
from .model import PortfolioModel
from .seeds import METHOD_IDS, derive_seed

COMPARISON_COLUMNS = (
    "marginal", "D", "target_prob", "tau", "method", "rep", "loss_prob", "loss_prob_hw",
    "cond_excess", "cond_excess_hw", "n", "M", "status", "flags",
)
CONVERGENCE_COLUMNS = ("budget", "method", "apre", "rel_error_bound")
KIND_LABELS = {"student_t": "t", "generalized_hyperbolic": "GH"}
REFERENCE_KEY = 2**31 - 1
RQMC_INNER = {"QNV": "naive", "QLT": "naive+transform", "QIS": "is"}


def format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "NaN" if math.isnan(value) else f"{float(value):.5E}"
    return str(value)


@dataclass
class ResultTable:
    """Rows of results with a fixed column order.

    ``wall_time`` is kept per row but only written with ``timings=True`` so
    that default CSV output is byte-identical across repeated runs.
    """

    columns: tuple
    rows: list = field(default_factory=list)

    def to_csv(self, timings: bool = False) -> str:
        cols = self.columns + (("wall_time",) if timings else ())
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for row in self.rows:
            writer.writerow([format_cell(row.get(c)) for c in cols])
        return buf.getvalue()

    def lookup(self, **match) -> list:
        return [r for r in self.rows if all(r.get(k) == v for k, v in match.items())]

    def failed(self) -> list:
        return [r for r in self.rows if r.get("status") != "ok"]


def marginal_label(model: PortfolioModel) -> str:
    return KIND_LABELS.get(model.marginal_kind, model.marginal_kind)


def _grid_shape(requested, budget):
    auto = strata_for_budget(budget)
    return (min(requested[0], auto[0]), min(requested[1], auto[1]))


def resolve_targets(cfg: RunConfig, model: PortfolioModel) -> list:
    """``[(target_prob or None, tau)]`` for every requested target."""
    if cfg.tau is not None:
        return [(None, t) for t in cfg.tau]
    out = []
    for i, p in enumerate(cfg.target_prob):
        tau = next((v for k, v in model.thresholds.items() if math.isclose(k, p)), None)
        if tau is None:
            tau = find_tau(model, p, n=cfg.n, seed=derive_seed(cfg.seed, 0, i))
        out.append((p, tau))
    return out


def run_method(method, model, cfg: RunConfig, tau, params, target, seed):
    """One estimator run; ``target`` steers the SIS allocation."""
    n = cfg.n
    if method == "NV":
        source = make_point_source("pseudorandom", model.dim + 1, seed)
        return naive_estimate(model, tau, source, n)
    if params is None:
        raise DomainError(f"{method} needs IS parameters")
    if method == "IS":
        source = make_point_source("pseudorandom", model.dim + 1, seed)
        return is_estimate(model, params, source, n)
    if method == "SIS":
        grid = build_grid(*_grid_shape(cfg.strata, n), nu=model.nu, params=params)
        return sis_estimate(model, params, grid, n, cfg.schedule, target=target, seed=seed)
    N = cfg.points_per_replication
    if method in RQMC_INNER:
        return rqmc_driver(RQMC_INNER[method], model, tau, N, cfg.M, seed=seed, params=params)
    if method == "QSIS":
        grid = build_grid(*_grid_shape(cfg.strata, N), nu=model.nu, params=params)
        return rqmc_sis_estimate(model, params, grid, N * cfg.M, cfg.schedule, M=cfg.M,
                                 target=target, seed=seed)
    raise ConfigError(f"run.methods: unknown method {method!r}")


def _row_task(args):
    method, model, cfg, ti, p, tau, params, calib_error, rep = args
    row = {"marginal": marginal_label(model), "D": model.dim, "target_prob": p, "tau": tau,
           "method": method, "rep": rep, "status": "ok", "flags": ""}
    if method != "NV" and params is None:
        row.update(status=f"failed: {calib_error}", wall_time=0.0)
        return row
    try:
        mid = METHOD_IDS[method]
        lp = run_method(method, model, cfg, tau, params, "loss_prob",
                        derive_seed(cfg.seed, mid, ti, 0, rep))
        ce = run_method(method, model, cfg, tau, params, "cond_excess",
                        derive_seed(cfg.seed, mid, ti, 1, rep))
    except (NumericalError, DomainError, ValueError) as exc:
        row.update(status=f"failed: {type(exc).__name__}: {exc}", wall_time=0.0)
        return row
    ce_flags = tuple(f for f in ce.flags if f == "no_exceedances")
    row.update(
        loss_prob=lp.loss_prob, loss_prob_hw=lp.loss_prob_hw,
        cond_excess=ce.cond_excess, cond_excess_hw=ce.cond_excess_hw,
        n=lp.n_total, M=lp.M, flags=";".join(sorted(set(lp.flags + ce_flags))),
        wall_time=lp.wall_time + ce.wall_time,
    )
    return row


def run_comparison(cfg: RunConfig, model: PortfolioModel, jobs: int = 1) -> ResultTable:
    """Comparison table: every method at every target threshold.

    Loss probability and conditional excess come from separate runs with
    independent seeds. A failing method is recorded in its row's
    ``status`` and the remaining rows still run. With ``jobs > 1`` rows run
    in worker processes; row order is fixed regardless of completion order.
    """
    tasks = []
    for ti, (p, tau) in enumerate(resolve_targets(cfg, model)):
        params, calib_error = None, ""
        if any(m != "NV" for m in cfg.methods):
            try:
                params = calibrate_is(model, tau)
            except (NumericalError, DomainError) as exc:
                calib_error = f"{type(exc).__name__}: {exc}"
        for method in cfg.methods:
            for rep in range(cfg.repetitions):
                tasks.append((method, model, cfg, ti, p, tau, params, calib_error, rep))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_row_task, tasks))
    else:
        rows = [_row_task(t) for t in tasks]
    return ResultTable(COMPARISON_COLUMNS, rows)


def cache_dir() -> Path:
    root = os.environ.get("TCRISK_CACHE") or Path.home() / ".cache" / "tcrisk"
    return Path(root)


def reference_key(model, tau, target, cfg: RunConfig) -> str:
    payload = json.dumps({"model": model.to_dict(), "tau": tau, "target": target,
                          "n": cfg.reference_n, "seed": cfg.seed, "strata": cfg.strata,
                          "schedule": cfg.schedule}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:24]


def reference_value(model, cfg: RunConfig, tau, params, target="loss_prob",
                    cache: Path | None = None) -> float:
    """High-budget MC SIS value, cached as JSON under ``cache``."""
    cache = cache_dir() if cache is None else Path(cache)
    path = cache / f"reference-{reference_key(model, tau, target, cfg)}.json"
    if path.is_file():
        return float(json.loads(path.read_text())["value"])
    grid = build_grid(*_grid_shape(cfg.strata, cfg.reference_n), nu=model.nu, params=params)
    rep = sis_estimate(model, params, grid, cfg.reference_n, cfg.schedule, target=target,
                       seed=derive_seed(cfg.seed, 0, REFERENCE_KEY))
    value = rep.loss_prob if target == "loss_prob" else rep.cond_excess
    hw = rep.loss_prob_hw if target == "loss_prob" else rep.cond_excess_hw
    cache.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps({"value": value, "halfwidth": hw, "n": cfg.reference_n,
                               "tau": tau, "target": target}))
    tmp.replace(path)
    return float(value)


def _value(rep, target):
    if target == "loss_prob":
        return rep.loss_prob, rep.loss_prob_hw
    return rep.cond_excess, rep.cond_excess_hw


def run_convergence(cfg: RunConfig, model: PortfolioModel, budgets, target="loss_prob",
                    reference: float | None = None, cache: Path | None = None) -> ResultTable:
    """Convergence sweep of MC SIS against RQMC SIS.

    For every budget, each of ``cfg.repetitions`` seeds runs both methods;
    rows hold the median absolute percentage relative error against the
    reference and the median relative 95% error bound (percent). RQMC SIS
    uses ``cfg.converge_M`` outer replications of ``budget // converge_M``
    points (default one: AOA pools its iterations, which biases each
    replicate by O(1/points), so splitting a budget into many short
    replicates inflates the bias of their average).
    """
    if target not in ("loss_prob", "cond_excess"):
        raise ConfigError(f"target: expected loss_prob or cond_excess, got {target!r}")
    budgets = [int(b) for b in budgets]
    if not budgets or min(budgets) < 1:
        raise ConfigError("budgets: expected positive integers")
    targets = resolve_targets(cfg, model)
    if len(targets) != 1:
        raise ConfigError("run: convergence sweeps take a single tau or target_prob")
    tau = targets[0][1]
    params = calibrate_is(model, tau)
    if reference is None:
        reference = reference_value(model, cfg, tau, params, target, cache)
    rows = []
    for b in budgets:
        for method in ("SIS", "QSIS"):
            apre, rel, wall = [], [], 0.0
            for r in range(cfg.repetitions):
                seed = derive_seed(cfg.seed, METHOD_IDS[method], b, r)
                if method == "SIS":
                    grid = build_grid(*_grid_shape(cfg.strata, b), nu=model.nu, params=params)
                    rep = sis_estimate(model, params, grid, b, cfg.schedule, target, seed)
                else:
                    M = cfg.converge_M
                    grid = build_grid(*_grid_shape(cfg.strata, b // M), nu=model.nu,
                                      params=params)
                    rep = rqmc_sis_estimate(model, params, grid, b, cfg.schedule, M=M,
                                            target=target, seed=seed)
                est, hw = _value(rep, target)
                apre.append(100.0 * abs(est - reference) / abs(reference))
                rel.append(100.0 * hw / abs(est) if est else math.nan)
                wall += rep.wall_time
            rows.append({"budget": b, "method": method, "apre": float(np.median(apre)),
                         "rel_error_bound": float(np.median(rel)), "wall_time": wall})
    return ResultTable(CONVERGENCE_COLUMNS, rows)


def run_find_tau(cfg: RunConfig, model: PortfolioModel, probs) -> ResultTable:
    rows = []
    for i, p in enumerate(probs):
        start = time.perf_counter()
        tau = find_tau(model, p, n=cfg.n, seed=derive_seed(cfg.seed, 0, i))
        rows.append({"target_prob": float(p), "tau": tau,
                     "wall_time": time.perf_counter() - start})
    return ResultTable(("target_prob", "tau"), rows)
