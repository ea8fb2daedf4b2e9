"""Threshold search: find tau with P(L > tau) close to a target probability."""

from __future__ import annotations

import numpy as np

from ..errors import DomainError, NumericalError
from ..lds import make_point_source
from ..model import clip_uniforms, loss_from_uniforms
from .calibrate import calibrate_is
from .sis import DEFAULT_SCHEDULE, build_grid, sis_estimate, strata_for_budget

MAX_ITER = 60


def find_tau(model, target_prob: float, n: int = 100_000, seed=0, rel_tol: float = 0.02,
             pilot: int = 100_000) -> float:
    """Bisection on tau using SIS estimates with common random numbers.

    A naive pilot sample supplies the initial bracket (its empirical
    quantiles at 3p and p/3); the bracket is widened if SIS says it does not
    straddle the target. Stops when ``|P(L>tau) - p| < rel_tol * p``.
    """
    if not 0.0 < target_prob <= 0.5:
        raise DomainError("target probability must lie in (0, 0.5]")
    p = target_prob
    rng_source = make_point_source("pseudorandom", model.dim + 1, seed)
    losses = loss_from_uniforms(clip_uniforms(rng_source.draw(pilot)), model).L
    lo = float(np.quantile(losses, 1.0 - min(3.0 * p, 0.9)))
    hi = float(np.quantile(losses, 1.0 - p / 3.0))
    grid_shape = strata_for_budget(n)

    def prob(tau):
        params = calibrate_is(model, tau)
        grid = build_grid(*grid_shape, nu=model.nu, params=params)
        return sis_estimate(model, params, grid, n, DEFAULT_SCHEDULE, seed=seed).loss_prob

    history = []
    p_lo, p_hi = prob(lo), prob(hi)
    it = 2
    while not (p_lo > p > p_hi):
        width = hi - lo
        if p_lo <= p:
            lo -= width
            p_lo = prob(lo)
        if p_hi >= p:
            hi = min(hi + width, 1.0 - 1e-9)
            p_hi = prob(hi)
        it += 2
        if it > MAX_ITER:
            raise NumericalError("could not bracket the target probability",
                                 {"lo": lo, "hi": hi, "p_lo": p_lo, "p_hi": p_hi})
    for tau, pv in ((lo, p_lo), (hi, p_hi)):
        if abs(pv - p) < rel_tol * p:
            return tau
    while it < MAX_ITER:
        mid = 0.5 * (lo + hi)
        pm = prob(mid)
        it += 1
        history.append((mid, pm))
        if abs(pm - p) < rel_tol * p:
            return mid
        if pm > p:
            lo = mid
        else:
            hi = mid
    raise NumericalError("tau search did not converge", {"history": history[-5:]})
