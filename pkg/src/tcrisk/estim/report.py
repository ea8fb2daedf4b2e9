"""Result record and streaming moment accumulators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

Z95 = 1.96


@dataclass
class EstimateReport:
    """Point estimates with 95% half-widths.

    ``cond_excess`` is NaN when no exceedance was observed (flag
    ``"no_exceedances"``).
    """

    method: str
    tau: float
    loss_prob: float
    loss_prob_hw: float
    cond_excess: float
    cond_excess_hw: float
    n_total: int
    M: int | None = None
    wall_time: float = 0.0
    flags: tuple = ()
    extra: dict = field(default_factory=dict, repr=False)

    @property
    def cond_excess_defined(self) -> bool:
        return math.isfinite(self.cond_excess)


def ratio_halfwidth(var_x, var_y, cov_xy, mean_x, mean_y, n):
    """Delta-method 95% half-width of ``mean_x / mean_y``."""
    r = mean_x / mean_y
    var = (var_x - 2.0 * r * cov_xy + r * r * var_y) / (n * mean_y * mean_y)
    return Z95 * math.sqrt(max(var, 0.0))


class Moments:
    """Running means, variances and covariance of the response pair (x, y).

    ``x`` is the loss-weighted response ``L 1{L>tau} w`` and ``y`` the
    indicator response ``1{L>tau} w``. Batches merge with the pairwise
    update, so chunked accumulation matches a single pass.
    """

    def __init__(self):
        self.n = 0
        self.mean_x = 0.0
        self.mean_y = 0.0
        self.m2x = 0.0
        self.m2y = 0.0
        self.cxy = 0.0

    def add(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        nb = x.size
        if nb == 0:
            return
        mx, my = x.mean(), y.mean()
        dx, dy = x - mx, y - my
        m2x, m2y, cxy = dx @ dx, dy @ dy, dx @ dy
        n = self.n + nb
        ddx, ddy = mx - self.mean_x, my - self.mean_y
        f = self.n * nb / n
        self.m2x += m2x + ddx * ddx * f
        self.m2y += m2y + ddy * ddy * f
        self.cxy += cxy + ddx * ddy * f
        self.mean_x += ddx * nb / n
        self.mean_y += ddy * nb / n
        self.n = n

    def variances(self):
        d = max(self.n - 1, 1)
        return self.m2x / d, self.m2y / d, self.cxy / d

    def to_report(self, method, tau, wall_time=0.0, flags=(), **kw) -> EstimateReport:
        vx, vy, cxy = self.variances()
        hw_p = Z95 * math.sqrt(vy / self.n)
        flags = tuple(flags)
        if self.mean_y > 0:
            ce = self.mean_x / self.mean_y
            hw_ce = ratio_halfwidth(vx, vy, cxy, self.mean_x, self.mean_y, self.n)
        else:
            ce, hw_ce = math.nan, math.nan
            flags += ("no_exceedances",)
        rep = EstimateReport(method, tau, float(self.mean_y), hw_p, float(ce), float(hw_ce),
                             int(self.n), wall_time=wall_time, flags=flags, **kw)
        rep.extra.setdefault("mean_x", float(self.mean_x))
        return rep


def replicate_report(method, tau, x_means, y_means, n_total, wall_time=0.0, flags=(),
                     extra=None) -> EstimateReport:
    """Combine M independent replicate estimates (RQMC outer loop)."""
    x = np.asarray(x_means, dtype=np.float64)
    y = np.asarray(y_means, dtype=np.float64)
    m = x.size
    flags = tuple(flags)
    if m < 10:
        flags += ("few_outer_replications",)
    acc = Moments()
    acc.add(x, y)
    rep = acc.to_report(method, tau, wall_time=wall_time, flags=flags, M=m,
                        extra=dict(extra or {}))
    rep.n_total = int(n_total)
    if m < 2:
        # no spread to estimate from a single randomization
        rep.loss_prob_hw = rep.cond_excess_hw = math.nan
    return rep
