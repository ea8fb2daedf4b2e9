"""Outer-replication driver for randomly shifted Sobol estimators."""

from __future__ import annotations

import time

from ..lds import make_point_source
from ..model import build_transform
from ..seeds import METHOD_IDS, derive_seed
from .basic import is_estimate, naive_estimate
from .report import EstimateReport, replicate_report

INNER_METHODS = {"naive": "QNV", "naive+transform": "QLT", "is": "QIS"}


def rqmc_driver(inner: str, model, tau: float, N: int, M: int, seed=0,
                params=None) -> EstimateReport:
    """Average ``M`` independent random shifts of an ``N``-point Sobol estimator.

    ``inner`` is ``"naive"``, ``"naive+transform"`` (rotation aligned with
    the IS direction, no change of measure) or ``"is"``; the last two need
    calibrated ``params``. Replication ``m`` draws its shift from
    ``derive_seed(seed, method_id, m)``.
    """
    try:
        method = INNER_METHODS[inner]
    except KeyError:
        raise ValueError(f"unknown inner method {inner!r}") from None
    if inner != "naive" and params is None:
        raise ValueError(f"inner method {inner!r} needs IS parameters")
    start = time.perf_counter()
    transform = None
    if inner != "naive" and not params.degenerate:
        transform = build_transform(params.mu, model)
    xs, ys = [], []
    for m in range(M):
        source = make_point_source("sobol_shifted", model.dim + 1,
                                   derive_seed(seed, METHOD_IDS[method], m))
        if inner == "is":
            rep = is_estimate(model, params, source, N, transform=transform)
        else:
            rep = naive_estimate(model, tau, source, N, transform=transform)
        xs.append(rep.extra["mean_x"])
        ys.append(rep.loss_prob)
    if inner == "is":
        tau = params.tau
    return replicate_report(method, tau, xs, ys, N * M, wall_time=time.perf_counter() - start,
                            extra={"replicate_x": xs, "replicate_y": ys, "N": N})
