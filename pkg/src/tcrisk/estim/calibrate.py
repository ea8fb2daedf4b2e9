"""Importance-sampling parameters from the mode of the zero-variance density.

The zero-variance IS density is proportional to ``1{L(z,y) > tau} f(z,y)``
with ``f`` the product of the standard normal and chi-square(nu) densities.
Its mode solves

    max  -|z|^2/2 + (nu/2 - 1) log y - y/2    s.t.  L(z, y) >= tau.

The IS law shifts the normals by ``mu = z*`` and gives ``Y`` a gamma law
with shape nu/2 and scale ``theta`` chosen so its mode equals ``y*``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from ..errors import DomainError, NumericalError
from ..model import PortfolioModel

KKT_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class ISParams:
    mu: np.ndarray
    theta: float
    tau: float
    degenerate: bool = False
    diagnostics: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        mu = np.array(self.mu, dtype=np.float64)
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        if not 0.0 < self.theta <= 2.0:
            raise DomainError(f"IS gamma scale must lie in (0, 2], got {self.theta}")

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.mu))

    @property
    def mode_y(self) -> float:
        return self.diagnostics.get("y_star", float("nan"))

    @classmethod
    def unshifted(cls, dim, tau, **diag) -> "ISParams":
        return cls(np.zeros(dim), 2.0, tau, degenerate=True, diagnostics=diag)


def is_weight(z1, y, params: ISParams, nu: float):
    """Likelihood ratio f/f~ at the IS-law sample (shifted ``Z_1``, scaled ``Y``)."""
    m, th = params.norm, params.theta
    z1 = np.asarray(z1, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    expo = 0.5 * m * m - z1 * m + (2.0 - th) * y / (2.0 * th) + 0.5 * nu * np.log(th / 2.0)
    return np.exp(expo)


def _start_point(model: PortfolioModel, tau, y0):
    d = model.dim
    _, g, _ = model.loss_gradient_zy(np.zeros(d), y0)
    direction = g / np.linalg.norm(g)

    def excess(s):
        return float(model.loss_zy(s * direction, y0)[0]) - tau

    hi = 1.0
    while excess(hi) < 0:
        hi *= 2.0
        if hi > 1e3:
            raise NumericalError("could not reach the loss threshold along the gradient ray",
                                 {"tau": tau, "radius": hi})
    s = optimize.brentq(excess, 0.0, hi, xtol=1e-12)
    return s * direction


def _polish(model, tau, v0, k1):
    """Refine an approximate optimum by solving the KKT equations directly.

    Unknowns are ``(z, log y, multiplier)``. Returns the refined
    ``(z, log y)``, the multiplier and the KKT residual norm; falls back to
    ``v0`` when the root finder makes things worse.
    """
    d = model.dim
    tscale = max(abs(tau), 1e-3)

    def kkt(w):
        z, s, lam = w[:d], w[d], w[d + 1]
        y = np.exp(s)
        loss, gz, gy = model.loss_gradient_zy(z, y)
        return np.concatenate([z - lam * gz, [-k1 + 0.5 * y - lam * gy * y, (loss - tau) / tscale]])

    _, gz, _ = model.loss_gradient_zy(v0[:d], np.exp(v0[d]))
    w0 = np.concatenate([v0, [(v0[:d] @ gz) / (gz @ gz)]])
    r0 = float(np.linalg.norm(kkt(w0)))
    # hybr often reports "not making good progress" after reaching machine precision
    sol = optimize.root(kkt, w0, method="hybr", options={"xtol": 1e-13})
    r1 = float(np.linalg.norm(kkt(sol.x)))
    if r1 < r0 and sol.x[d + 1] > 0:
        return sol.x[: d + 1], float(sol.x[d + 1]), r1
    return v0, float(w0[d + 1]), r0


def calibrate_is(model: PortfolioModel, tau: float) -> ISParams:
    """Mode-matching IS parameters for threshold ``tau``.

    Returns unshifted parameters flagged ``degenerate`` when the
    unconstrained mode already satisfies ``L >= tau``.

    Raises
    ------
    DomainError
        If ``nu <= 2`` (the chi-square mode is at zero) or ``tau >= 1``.
    NumericalError
        If the constrained optimizer does not converge; ``diagnostics`` holds
        the last iterate.
    """
    nu = model.nu
    if nu <= 2.0:
        raise DomainError("mode-matching IS needs copula degrees of freedom > 2")
    if not tau < 1.0:
        raise DomainError("tau must be < 1 (losses never reach 1)")
    k1 = 0.5 * nu - 1.0
    d = model.dim
    y0 = nu - 2.0
    if float(model.loss_zy(np.zeros(d), y0)[0]) >= tau:
        return ISParams.unshifted(d, tau, y_star=y0, reason="constraint inactive")

    z_start = _start_point(model, tau, y0)
    x0 = np.concatenate([z_start, [np.log(y0)]])
    scale = max(abs(tau), 1e-3)

    def objective(v):
        z, s = v[:d], v[d]
        return 0.5 * z @ z - k1 * s + 0.5 * np.exp(s)

    def objective_grad(v):
        z, s = v[:d], v[d]
        return np.concatenate([z, [-k1 + 0.5 * np.exp(s)]])

    def constraint(v):
        return (float(model.loss_zy(v[:d], np.exp(v[d]))[0]) - tau) / scale

    def constraint_grad(v):
        y = np.exp(v[d])
        _, gz, gy = model.loss_gradient_zy(v[:d], y)
        return np.concatenate([gz, [gy * y]]) / scale

    res = optimize.minimize(
        objective, x0, jac=objective_grad, method="SLSQP",
        constraints=[{"type": "ineq", "fun": constraint, "jac": constraint_grad}],
        options={"ftol": 1e-14, "maxiter": 500},
    )
    if not res.success and res.status != 8:
        raise NumericalError("IS calibration did not converge",
                             {"message": res.message, "last_iterate": res.x.tolist()})
    v, lam, resid = _polish(model, tau, res.x, k1)
    if resid > KKT_TOL:
        raise NumericalError("IS calibration did not reach a stationary point",
                             {"message": res.message, "last_iterate": res.x.tolist(),
                              "kkt_residual": resid})
    z, y = v[:d].copy(), float(np.exp(v[d]))

    # push the point onto L >= tau along the ray if the optimizer stopped just short
    def short(a):
        return float(model.loss_zy(a * z, y)[0]) - tau

    if short(1.0) < 0:
        hi = 1.0 + 1e-6
        while short(hi) < 0:
            hi = 1.0 + 2 * (hi - 1.0)
            if hi > 2.0:
                raise NumericalError("IS mode is not on the loss region",
                                     {"z": z.tolist(), "y": y, "gap": short(1.0)})
        a = optimize.brentq(short, 1.0, hi, xtol=1e-15)
        # the root can land a rounding error short; step to the next float outward
        while short(a) < 0:
            a = np.nextafter(a, 2.0)
        z = z * a

    loss = float(model.loss_zy(z, y)[0])
    theta = y / k1
    if not 0.0 < theta < 2.0:
        raise NumericalError("calibrated gamma scale outside (0, 2)", {"theta": theta, "y": y})
    return ISParams(z, theta, tau, diagnostics={
        "y_star": y, "loss_at_mode": loss, "multiplier": lam,
        "kkt_residual": resid, "iterations": int(res.nit),
        "optimizer_status": int(res.status),
    })
