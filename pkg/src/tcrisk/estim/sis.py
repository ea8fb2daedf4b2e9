"""Stratified importance sampling with adaptive optimal allocation (AOA).

Strata are the cells of an ``n_y x n_z`` equiprobable grid over
``(Y, Z_1)`` under the IS law: gamma(nu/2, theta) quantiles for ``Y`` and
shifted-normal quantiles for ``Z_1``. In the unit cube this is the grid over
the first two coordinates, so conditional sampling inside a stratum is an
affine map of those two uniforms followed by the usual inverse CDFs.

Each AOA iteration spends its share of the budget across strata in
proportion to the current fractions. The first iteration is proportional;
later ones use ``p_i s_i`` (loss probability) or ``p_i`` times the standard
deviation of the linearized ratio (conditional excess), mixed with a
``0.1 p_i`` floor.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .. import dist
from ..lds import SobolGenerator, apply_shift
from ..model import PortfolioModel, build_transform, clip_uniforms, loss_from_uniforms
from ..seeds import derive_seed
from .basic import responses
from .calibrate import ISParams, is_weight
from .report import Z95, EstimateReport, replicate_report

DEFAULT_SCHEDULE = (0.1, 0.2, 0.3, 0.4)
DEFAULT_STRATA = (22, 22)
FLOOR = 0.1
MIN_PER_STRATUM = 2
CHUNK = 1 << 16
RELIABLE_PER_STRATUM = 50
POINTS_PER_STRATUM = 200


@dataclass(frozen=True, eq=False)
class StratificationGrid:
    n_y: int
    n_z: int
    boundaries_y: np.ndarray
    boundaries_z: np.ndarray
    probs: np.ndarray

    @property
    def count(self) -> int:
        return self.n_y * self.n_z

    def locate(self, y, z1):
        """Stratum index of IS-law samples (for frequency checks)."""
        iy = np.searchsorted(self.boundaries_y[1:-1], y, side="right")
        iz = np.searchsorted(self.boundaries_z[1:-1], z1, side="right")
        return iy * self.n_z + iz


def build_grid(n_y: int, n_z: int, nu: float = None, params: ISParams = None) -> StratificationGrid:
    """Equiprobable grid; boundaries are in the IS-law ``(Y, Z_1)`` scale.

    Without ``nu`` the Y boundaries are left as probability cut points.
    """
    if n_y < 1 or n_z < 1:
        raise ValueError("strata counts must be >= 1")
    theta = params.theta if params is not None else 2.0
    shift = params.norm if params is not None else 0.0
    qy = np.arange(1, n_y) / n_y
    qz = np.arange(1, n_z) / n_z
    inner_y = dist.gamma_inv_cdf(qy, 0.5 * nu, theta) if (nu and n_y > 1) else qy
    inner_z = np.asarray(dist.normal_inv_cdf(qz)) + shift if n_z > 1 else qz
    by = np.concatenate([[0.0], np.atleast_1d(inner_y), [np.inf]])
    bz = np.concatenate([[-np.inf], np.atleast_1d(inner_z), [np.inf]])
    probs = np.full(n_y * n_z, 1.0 / (n_y * n_z))
    return StratificationGrid(n_y, n_z, by, bz, probs)


def strata_for_budget(budget: int, cap: int = DEFAULT_STRATA[0]) -> tuple[int, int]:
    """Square grid with about ``POINTS_PER_STRATUM`` expected points per stratum.

    Pooling AOA iterations biases stratum means downward when strata hold
    only a handful of points (early zero-hit strata receive fewer later
    points), so small budgets get coarser grids.
    """
    k = int(max(1, min(cap, math.isqrt(max(int(budget) // POINTS_PER_STRATUM, 1)))))
    return k, k


class AllocationState:
    """Per-stratum running moments of the two responses plus AOA history."""

    def __init__(self, count: int):
        self.n = np.zeros(count, dtype=np.int64)
        self.mean_x = np.zeros(count)
        self.mean_y = np.zeros(count)
        self.m2x = np.zeros(count)
        self.m2y = np.zeros(count)
        self.cxy = np.zeros(count)
        self.fractions: list[np.ndarray] = []
        self.allocations: list[np.ndarray] = []

    def add(self, strata, x, y):
        k = self.n.size
        nb = np.bincount(strata, minlength=k)
        has = nb > 0
        safe = np.where(has, nb, 1)
        mx = np.bincount(strata, weights=x, minlength=k) / safe
        my = np.bincount(strata, weights=y, minlength=k) / safe
        dx = x - mx[strata]
        dy = y - my[strata]
        m2x = np.bincount(strata, weights=dx * dx, minlength=k)
        m2y = np.bincount(strata, weights=dy * dy, minlength=k)
        cxy = np.bincount(strata, weights=dx * dy, minlength=k)
        n = self.n + nb
        nsafe = np.where(n > 0, n, 1)
        ddx, ddy = mx - self.mean_x, my - self.mean_y
        f = self.n * nb / nsafe
        self.m2x += m2x + ddx * ddx * f
        self.m2y += m2y + ddy * ddy * f
        self.cxy += cxy + ddx * ddy * f
        self.mean_x += np.where(has, ddx * nb / nsafe, 0.0)
        self.mean_y += np.where(has, ddy * nb / nsafe, 0.0)
        self.n = n

    def variances(self):
        d = np.maximum(self.n - 1, 1)
        return self.m2x / d, self.m2y / d, self.cxy / d

    def estimate(self, probs):
        """Stratified point estimates and their variances."""
        vx, vy, cxy = self.variances()
        n = np.maximum(self.n, 1)
        x = float(probs @ self.mean_x)
        y = float(probs @ self.mean_y)
        p2n = probs * probs / n
        out = {"x": x, "y": y, "var_y": float(p2n @ vy)}
        if y > 0:
            r = x / y
            out["ratio"] = r
            out["var_ratio"] = float(p2n @ (vx - 2 * r * cxy + r * r * vy)) / (y * y)
        else:
            out["ratio"] = math.nan
            out["var_ratio"] = math.nan
        return out


def allocate(fractions, total: int, minimum: int = MIN_PER_STRATUM) -> np.ndarray:
    """Integer allocation by largest remainder, with a per-stratum minimum."""
    raw = np.asarray(fractions, dtype=np.float64) * total
    base = np.floor(raw).astype(np.int64)
    rest = int(total - base.sum())
    if rest > 0:
        order = np.argsort(-(raw - base), kind="stable")
        base[order[:rest]] += 1
    return np.maximum(base, minimum)


def next_fractions(state: AllocationState, probs, target: str, floor: float = FLOOR):
    vx, vy, cxy = state.variances()
    sigma = np.sqrt(vy)
    if target == "cond_excess":
        est = state.estimate(probs)
        if est["y"] > 0:
            r = est["ratio"]
            lin = (vx - 2.0 * r * cxy + r * r * vy) / est["y"] ** 2
            sigma = np.sqrt(np.maximum(lin, 0.0))
    elif target != "loss_prob":
        raise ValueError(f"unknown allocation target {target!r}")
    ps = probs * sigma
    total = ps.sum()
    if not total > 0:
        return np.asarray(probs, dtype=np.float64).copy()
    return floor * probs + (1.0 - floor) * ps / total


def _pieces(counts, chunk):
    ids, cnts, size = [], [], 0
    for i, c in enumerate(counts):
        c = int(c)
        while c > 0:
            take = min(c, chunk - size)
            ids.append(i)
            cnts.append(take)
            size += take
            c -= take
            if size == chunk:
                yield np.array(ids), np.array(cnts)
                ids, cnts, size = [], [], 0
    if size:
        yield np.array(ids), np.array(cnts)


def _into_strata(u, strata, grid):
    u = u.copy()
    iy, iz = np.divmod(strata, grid.n_z)
    u[:, 0] = (iy + u[:, 0]) / grid.n_y
    u[:, 1] = (iz + u[:, 1]) / grid.n_z
    return u


def run_aoa(model: PortfolioModel, params: ISParams, grid: StratificationGrid, budget: int,
            schedule, target: str, sampler, transform=None) -> AllocationState:
    """Run the AOA iterations; ``sampler(ids, counts)`` returns raw uniforms."""
    if abs(sum(schedule) - 1.0) > 1e-9 or min(schedule) <= 0:
        raise ValueError("schedule fractions must be positive and sum to 1")
    if model.dim < 1:
        raise ValueError("empty model")
    if transform is None and not params.degenerate:
        transform = build_transform(params.mu, model)
    state = AllocationState(grid.count)
    q = grid.probs.copy()
    for k, frac in enumerate(schedule):
        if k:
            q = next_fractions(state, grid.probs, target)
        counts = allocate(q, int(round(frac * budget)))
        state.fractions.append(q)
        state.allocations.append(counts)
        for ids, cnts in _pieces(counts, CHUNK):
            strata = np.repeat(ids, cnts)
            u = _into_strata(sampler(ids, cnts), strata, grid)
            path = loss_from_uniforms(clip_uniforms(u), model, transform, params)
            w = is_weight(path.Z[:, 0], path.Y, params, model.nu)
            x, y = responses(path, params.tau, w)
            state.add(strata, x, y)
    return state


def _check_budget(budget, grid):
    if budget < 10 * grid.count:
        raise ValueError(
            f"budget {budget} is below 10 x {grid.count} strata; use a coarser grid"
        )


def sis_estimate(model: PortfolioModel, params: ISParams, grid: StratificationGrid,
                 budget: int, schedule=DEFAULT_SCHEDULE, target: str = "loss_prob",
                 seed=None, method: str = "SIS") -> EstimateReport:
    """Monte Carlo SIS estimate with AOA allocation toward ``target``."""
    _check_budget(budget, grid)
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    dim = model.dim + 1

    def sampler(ids, cnts):
        return rng.random((int(cnts.sum()), dim))

    state = run_aoa(model, params, grid, budget, schedule, target, sampler)
    est = state.estimate(grid.probs)
    flags = ()
    if est["y"] > 0:
        ce, ce_hw = est["ratio"], Z95 * math.sqrt(max(est["var_ratio"], 0.0))
    else:
        ce, ce_hw, flags = math.nan, math.nan, ("no_exceedances",)
    return EstimateReport(
        method, params.tau, est["y"], Z95 * math.sqrt(est["var_y"]), ce, ce_hw,
        int(state.n.sum()), wall_time=time.perf_counter() - start, flags=flags,
        extra={"target": target, "fractions": state.fractions,
               "allocations": state.allocations, "stratum_counts": state.n.copy()},
    )


class StratumSobol:
    """Shared Sobol sequence with a persistent cursor and a fixed shift per stratum."""

    def __init__(self, dim, count, rng):
        self.gen = SobolGenerator(dim)
        self.shifts = rng.random((count, dim))
        self.cursor = np.zeros(count, dtype=np.int64)

    def __call__(self, ids, cnts):
        total = int(cnts.sum())
        offsets = np.cumsum(cnts) - cnts
        # skip the origin: the first point of every stratum is index 1
        starts = self.cursor[ids] + 1
        idx = np.repeat(starts - offsets, cnts) + np.arange(total)
        np.add.at(self.cursor, ids, cnts)
        pts = self.gen.points_at(idx.astype(np.uint64))
        return apply_shift(pts, self.shifts[np.repeat(ids, cnts)])


def rqmc_sis_estimate(model: PortfolioModel, params: ISParams, grid: StratificationGrid,
                      budget: int, schedule=DEFAULT_SCHEDULE, M: int = 40,
                      target: str = "loss_prob", seed=0, reference: float | None = None,
                      method: str = "QSIS") -> EstimateReport:
    """RQMC version of :func:`sis_estimate`.

    Each of the ``M`` outer replications runs the full AOA loop with
    ``budget // M`` points, reusing one Sobol sequence in every stratum
    under stratum-specific random shifts. Cursors persist across AOA
    iterations, so later iterations continue the sequence. The error bound
    comes from the spread of the ``M`` replicate estimates.
    """
    n_inner = budget // M
    _check_budget(n_inner, grid)
    start = time.perf_counter()
    dim = model.dim + 1
    xs, ys, consumed, cursors = [], [], 0, []
    for m in range(M):
        rng = np.random.default_rng(derive_seed(seed, m))
        sampler = StratumSobol(dim, grid.count, rng)
        state = run_aoa(model, params, grid, n_inner, schedule, target, sampler)
        est = state.estimate(grid.probs)
        xs.append(est["x"])
        ys.append(est["y"])
        consumed += int(state.n.sum())
        cursors.append(sampler.cursor.copy())
        if m == 0:
            first = state
    flags = ()
    if n_inner / grid.count < RELIABLE_PER_STRATUM:
        flags += ("unreliable_error_bound",)
    extra = {"target": target, "replicate_x": np.array(xs), "replicate_y": np.array(ys),
             "cursors": cursors, "allocations": first.allocations,
             "fractions": first.fractions, "n_inner": n_inner}
    if reference is not None and reference != 0:
        m_idx = np.arange(1, M + 1)
        if target == "loss_prob":
            running = np.cumsum(ys) / m_idx
        else:
            running = np.cumsum(xs) / np.cumsum(ys)
        extra["trace"] = np.column_stack([m_idx * n_inner,
                                          100.0 * np.abs(running - reference) / abs(reference)])
    return replicate_report(method, params.tau, xs, ys, consumed,
                            wall_time=time.perf_counter() - start, flags=flags, extra=extra)
