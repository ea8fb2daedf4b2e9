"""Naive and importance-sampling estimators over a point source."""

from __future__ import annotations

import time

import numpy as np

from ..model import PortfolioModel, build_transform, clip_uniforms, loss_from_uniforms
from .calibrate import ISParams, is_weight
from .report import EstimateReport, Moments

CHUNK = 1 << 16


def _chunks(n, size=CHUNK):
    done = 0
    while done < n:
        step = min(size, n - done)
        yield step
        done += step


def responses(path, tau, weight=None):
    """Return ``(L 1{L>tau} w, 1{L>tau} w)`` for a batch of sample paths."""
    y = (path.L > tau).astype(np.float64)
    if weight is not None:
        y = y * weight
    return path.L * y, y


def naive_estimate(model: PortfolioModel, tau: float, source, n: int,
                   transform=None, method: str = "NV") -> EstimateReport:
    """Plain (R)QMC/MC averages of ``1{L>tau}`` and ``L 1{L>tau}``.

    ``transform`` only rotates the normal inputs; the law is unchanged.
    """
    start = time.perf_counter()
    acc = Moments()
    for step in _chunks(n):
        path = loss_from_uniforms(clip_uniforms(source.draw(step)), model, transform)
        acc.add(*responses(path, tau))
    return acc.to_report(method, tau, wall_time=time.perf_counter() - start)


def is_estimate(model: PortfolioModel, params: ISParams, source, n: int,
                transform=None, method: str = "IS") -> EstimateReport:
    """Likelihood-ratio weighted estimator under the mode-shifted law."""
    start = time.perf_counter()
    if transform is None and not params.degenerate:
        transform = build_transform(params.mu, model)
    acc = Moments()
    for step in _chunks(n):
        path = loss_from_uniforms(clip_uniforms(source.draw(step)), model, transform, params)
        w = is_weight(path.Z[:, 0], path.Y, params, model.nu)
        acc.add(*responses(path, params.tau, w))
    return acc.to_report(method, params.tau, wall_time=time.perf_counter() - start)
