"""Univariate distributions used by the t-copula model.

Normal, gamma and Student-t functions are thin wrappers over
``scipy.special`` with domain checks and tail-aware branching. The
generalized hyperbolic (GH) law uses the standard
``(lam, alpha, beta, delta, mu)`` parameterization; its quantile function
is served from a cached :class:`QuantileTable`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize, special

from .errors import DomainError, NumericalError

LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


def _check_open_unit(u, name="u"):
    u = np.asarray(u, dtype=np.float64)
    if np.any(~((u > 0.0) & (u < 1.0))):
        raise DomainError(f"{name} must lie strictly inside (0, 1)")
    return u


def _scalar_or_array(x):
    return x.item() if np.ndim(x) == 0 else x


# ---------------------------------------------------------------- normal


def normal_cdf(x):
    return _scalar_or_array(special.ndtr(np.asarray(x, dtype=np.float64)))


def normal_inv_cdf(u):
    """Standard normal quantile."""
    u = _check_open_unit(u)
    return _scalar_or_array(special.ndtri(u))


# ----------------------------------------------------------------- gamma


def _check_gamma(shape, scale):
    if not (shape > 0 and scale > 0):
        raise DomainError(f"gamma shape and scale must be positive, got {shape}, {scale}")


def gamma_cdf(x, shape, scale):
    _check_gamma(shape, scale)
    x = np.maximum(np.asarray(x, dtype=np.float64), 0.0)
    return _scalar_or_array(special.gammainc(shape, x / scale))


def gamma_inv_cdf(u, shape, scale):
    """Quantile of Gamma(shape, scale); upper half inverted through the survival."""
    _check_gamma(shape, scale)
    u = _check_open_unit(u)
    lower = u <= 0.5
    out = np.where(
        lower,
        special.gammaincinv(shape, np.where(lower, u, 0.5)),
        special.gammainccinv(shape, np.where(lower, 0.5, 1.0 - u)),
    )
    return _scalar_or_array(out * scale)


def gamma_log_pdf(x, shape, scale):
    x = np.asarray(x, dtype=np.float64)
    return (shape - 1.0) * np.log(x) - x / scale - special.gammaln(shape) - shape * np.log(scale)


# ------------------------------------------------------------- Student t


def _check_df(nu):
    if not nu > 0:
        raise DomainError(f"degrees of freedom must be positive, got {nu}")


def student_t_cdf(t, nu):
    """Student-t CDF through the regularized incomplete beta function."""
    _check_df(nu)
    t = np.asarray(t, dtype=np.float64)
    t2 = t * t
    near = t2 < nu  # |t| < sqrt(nu): complementary form keeps accuracy at 0
    with np.errstate(invalid="ignore", divide="ignore"):
        tail_far = 0.5 * special.betainc(0.5 * nu, 0.5, nu / (nu + t2))
        tail_near = 0.5 - 0.5 * special.betainc(0.5, 0.5 * nu, t2 / (nu + t2))
    tail = np.where(near, tail_near, tail_far)
    return _scalar_or_array(np.where(t < 0, tail, 1.0 - tail))


def student_t_log_pdf(t, nu):
    _check_df(nu)
    t = np.asarray(t, dtype=np.float64)
    c = special.gammaln(0.5 * (nu + 1)) - special.gammaln(0.5 * nu) - 0.5 * np.log(nu * np.pi)
    return c - 0.5 * (nu + 1) * np.log1p(t * t / nu)


def student_t_inv_cdf(u, nu):
    """Student-t quantile by inverting the incomplete beta function."""
    _check_df(nu)
    u = _check_open_unit(u)
    p = np.minimum(u, 1.0 - u)
    two_p = 2.0 * p
    small = two_p < 0.5
    with np.errstate(divide="ignore", invalid="ignore"):
        x = special.betaincinv(0.5 * nu, 0.5, np.where(small, two_p, 0.25))
        t2_far = nu * (1.0 - x) / x
        y = special.betaincinv(0.5, 0.5 * nu, np.where(small, 0.5, 1.0 - two_p))
        t2_near = nu * y / (1.0 - y)
    t = np.sqrt(np.where(small, t2_far, t2_near))
    return _scalar_or_array(np.where(u < 0.5, -t, t))


# ---------------------------------------------------------------- Bessel


def bessel_k(order, x):
    """Modified Bessel function of the second kind ``K_order(x)``."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(~(x > 0)):
        raise DomainError("bessel_k requires x > 0")
    return _scalar_or_array(special.kv(order, x))


def log_bessel_k(order, x):
    """``log K_order(x)`` without overflow/underflow for large ``x``."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(~(x > 0)):
        raise DomainError("log_bessel_k requires x > 0")
    return _scalar_or_array(np.log(special.kve(order, x)) - x)


# ----------------------------------------------------------- GH law


@dataclass(frozen=True)
class GHParams:
    lam: float
    alpha: float
    beta: float
    delta: float
    mu: float = 0.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.delta > 0 and abs(self.beta) < self.alpha):
            raise DomainError(
                "GH parameters require alpha > 0, delta > 0 and |beta| < alpha; "
                f"got alpha={self.alpha}, beta={self.beta}, delta={self.delta}"
            )

    @property
    def gamma(self) -> float:
        return float(np.sqrt(self.alpha**2 - self.beta**2))

    def mean_and_sd(self) -> tuple[float, float]:
        zeta = self.delta * self.gamma
        k0 = special.kve(self.lam, zeta)
        r1 = special.kve(self.lam + 1, zeta) / k0
        r2 = special.kve(self.lam + 2, zeta) / k0
        g = self.gamma
        mean = self.mu + self.beta * self.delta / g * r1
        var = self.delta**2 * (r1 / zeta + (self.beta / g) ** 2 * (r2 - r1 * r1))
        return float(mean), float(np.sqrt(var))


def gh_log_density(x, params: GHParams):
    """Log density of the generalized hyperbolic distribution.

    f(x) = (g/d)^l / (sqrt(2 pi) K_l(d g)) * exp(b (x-m))
           * K_{l-1/2}(a q) * (q/a)^(l-1/2),   q = sqrt(d^2 + (x-m)^2)
    """
    lam, a, b, d, m = params.lam, params.alpha, params.beta, params.delta, params.mu
    g = params.gamma
    x = np.asarray(x, dtype=np.float64)
    r = x - m
    q = np.hypot(d, r)
    log_norm = lam * np.log(g / d) - LOG_SQRT_2PI - (np.log(special.kve(lam, d * g)) - d * g)
    out = (
        log_norm
        + b * r
        + np.log(special.kve(lam - 0.5, a * q))
        - a * q
        + (lam - 0.5) * (np.log(q) - np.log(a))
    )
    return _scalar_or_array(out)


# Gauss-Legendre rule on [0, 1] for the per-interval CDF increments.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W

_TAIL_DROP = 16.0 * np.log(10.0)  # truncate where density < 1e-16 * mode density


class QuantileTable:
    """Cached CDF/quantile for a continuous unimodal density.

    The CDF is tabulated on a uniform grid by Gauss-Legendre integration
    of each cell; left-cumulated values serve the lower half, right-cumulated
    survival values the upper half, so both tails keep relative accuracy.
    Between nodes the CDF is the cubic Hermite interpolant built from the
    node values and the exact density; quantile queries locate the cell and
    finish with safeguarded Newton steps on that interpolant.
    """

    def __init__(self, log_pdf, mode_guess, scale, spec=None,
                 min_cells=2048, max_cells=400_000, tol=1e-10):
        self.spec = spec
        self._log_pdf = log_pdf
        self._scale = float(scale)
        mode = self._find_mode(mode_guess, scale)
        log_peak = float(log_pdf(mode))
        lo = self._truncation_point(mode, -scale, log_peak)
        hi = self._truncation_point(mode, scale, log_peak)

        left_tail = self._tail_mass(lo, +1)
        right_tail = self._tail_mass(hi, -1)
        cells = max(min_cells, int(np.ceil((hi - lo) / scale * 64)))
        err = np.inf
        while True:
            if cells > max_cells:
                raise NumericalError(
                    "quantile table did not reach target accuracy",
                    {"cells": cells, "interp_error": err, "lo": lo, "hi": hi},
                )
            grid = np.linspace(lo, hi, cells + 1)
            pdf = np.exp(log_pdf(grid))
            inc = self._cell_integrals(grid[:-1], grid[1:])
            err = self._midpoint_error(grid, pdf, inc, left_tail, right_tail)
            if err <= tol:
                break
            cells *= 2

        total = left_tail + inc.sum() + right_tail
        if not np.isfinite(total) or abs(total - 1.0) > 1e-8:
            raise NumericalError(
                "density does not integrate to one on the truncated support",
                {"mass": total, "lo": lo, "hi": hi, "cells": cells},
            )
        cdf = np.concatenate([[left_tail], left_tail + np.cumsum(inc)]) / total
        sf = np.concatenate([right_tail + np.cumsum(inc[::-1])[::-1], [right_tail]]) / total

        self.grid = grid
        self.pdf_values = pdf / total
        self.cdf_values = cdf
        self.sf_values = sf
        self.interp_error = err
        self._h = grid[1] - grid[0]
        # log-linear extrapolation rates beyond the table ends
        self._rate_lo = self.pdf_values[0] / cdf[0]
        self._rate_hi = self.pdf_values[-1] / sf[-1]

        # strictness is only representable where the value is below 1/2
        lower, upper = cdf <= 0.5, sf <= 0.5
        if (np.any(np.diff(cdf[lower]) <= 0) or np.any(np.diff(sf[upper]) >= 0)
                or np.any(np.diff(cdf) < 0)):
            raise NumericalError("tabulated CDF is not strictly increasing", {"cells": cells})

    # -- construction helpers

    def _find_mode(self, guess, scale):
        res = optimize.minimize_scalar(
            lambda x: -float(self._log_pdf(x)),
            bounds=(guess - 20 * scale, guess + 20 * scale),
            method="bounded",
            options={"xatol": 1e-10 * scale},
        )
        return float(res.x)

    def _truncation_point(self, mode, step, log_peak):
        target = log_peak - _TAIL_DROP
        inner, outer = mode, mode + step
        while self._log_pdf(outer) > target:
            inner, outer = outer, outer + 2 * (outer - mode)
            if abs(outer - mode) > 1e6 * abs(step):
                raise NumericalError("density tail does not decay", {"x": outer})
        return float(optimize.brentq(lambda x: self._log_pdf(x) - target, inner, outer))

    def _cell_integrals(self, a, b):
        h = b - a
        nodes = a[:, None] + h[:, None] * _GL_X[None, :]
        return h * (np.exp(self._log_pdf(nodes)) @ _GL_W)

    def _midpoint_error(self, grid, pdf, inc, left_tail, right_tail):
        a, b = grid[:-1], grid[1:]
        mid = 0.5 * (a + b)
        exact = self._cell_integrals(a, mid)
        # Hermite interpolant at t = 1/2, relative to the cell-local CDF origin
        h = b - a
        interp = 0.5 * inc + h * (pdf[:-1] - pdf[1:]) / 8.0
        left = left_tail + np.concatenate([[0.0], np.cumsum(inc)[:-1]])
        right = right_tail + np.concatenate([np.cumsum(inc[::-1])[::-1][1:], [0.0]])
        local = np.minimum(left + exact, right + (inc - exact))
        scale = np.maximum(local, 1e-300)
        return float(np.max(np.abs(interp - exact) / scale))

    def _tail_mass(self, x, direction):
        # exponential tail: mass ~ f(x) / |d log f / dx|
        eps = 1e-4 * self._scale
        slope = (self._log_pdf(x + direction * eps) - self._log_pdf(x)) / eps
        return float(np.exp(self._log_pdf(x)) / max(slope, 1e-300))

    # -- queries

    def pdf(self, x):
        return _scalar_or_array(np.exp(self._log_pdf(np.asarray(x, dtype=np.float64))))

    def _hermite(self, k, t, v0, v1, d0, d1):
        h = self._h
        t2, t3 = t * t, t * t * t
        val = (2 * t3 - 3 * t2 + 1) * v0 + (t3 - 2 * t2 + t) * h * d0 \
            + (-2 * t3 + 3 * t2) * v1 + (t3 - t2) * h * d1
        der = (6 * t2 - 6 * t) * v0 + (3 * t2 - 4 * t + 1) * h * d0 \
            + (-6 * t2 + 6 * t) * v1 + (3 * t2 - 2 * t) * h * d1
        return val, der

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        out = self._eval(x, lower=True)
        return _scalar_or_array(out)

    def sf(self, x):
        return _scalar_or_array(self._eval(np.asarray(x, dtype=np.float64), lower=False))

    def _eval(self, x, lower):
        g, n = self.grid, self.grid.size - 1
        k = np.clip(((x - g[0]) / self._h).astype(np.int64), 0, n - 1)
        t = np.clip((x - g[k]) / self._h, 0.0, 1.0)
        f0, f1 = self.pdf_values[k], self.pdf_values[k + 1]
        if lower:
            val, _ = self._hermite(k, t, self.cdf_values[k], self.cdf_values[k + 1], f0, f1)
            below = x < g[0]
            val = np.where(below, self.cdf_values[0] * np.exp(self._rate_lo * np.minimum(x - g[0], 0.0)), val)
            val = np.where(x > g[-1], 1.0 - self.sf_values[-1] * np.exp(-self._rate_hi * np.maximum(x - g[-1], 0.0)), val)
        else:
            val, _ = self._hermite(k, t, self.sf_values[k], self.sf_values[k + 1], -f0, -f1)
            val = np.where(x > g[-1], self.sf_values[-1] * np.exp(-self._rate_hi * np.maximum(x - g[-1], 0.0)), val)
            val = np.where(x < g[0], 1.0 - self.cdf_values[0] * np.exp(self._rate_lo * np.minimum(x - g[0], 0.0)), val)
        return val

    def ppf(self, u):
        """Quantile function; ``u`` strictly inside (0, 1)."""
        u = _check_open_unit(u)
        shape = u.shape
        u = u.ravel()
        out = np.empty_like(u)
        lower = u <= 0.5
        if lower.any():
            out[lower] = self._invert(u[lower], self.cdf_values, +1)
        if (~lower).any():
            out[~lower] = self._invert(1.0 - u[~lower], self.sf_values, -1)
        return _scalar_or_array(out.reshape(shape))

    def _invert(self, target, values, sign):
        g, n = self.grid, self.grid.size - 1
        if sign > 0:
            k = np.searchsorted(values, target, side="right") - 1
        else:
            # sf is decreasing; search on its reversal
            k = n - np.searchsorted(values[::-1], target, side="left")
        outside_lo = k < 0
        outside_hi = k >= n
        k = np.clip(k, 0, n - 1)
        v0, v1 = values[k], values[k + 1]
        d0 = sign * self.pdf_values[k]
        d1 = sign * self.pdf_values[k + 1]
        span = v1 - v0
        t = np.clip((target - v0) / np.where(span != 0, span, 1.0), 0.0, 1.0)
        for _ in range(6):
            val, der = self._hermite(k, t, v0, v1, d0, d1)
            step = np.where(der != 0, (val - target) / np.where(der != 0, der, 1.0), 0.0)
            t = np.clip(t - step, 0.0, 1.0)
        x = g[k] + t * self._h
        # beyond the tabulated range: exponential tail extrapolation
        if sign > 0:
            with np.errstate(divide="ignore"):
                x = np.where(outside_lo, g[0] + np.log(target / values[0]) / self._rate_lo, x)
            x = np.where(outside_hi, g[-1], x)
        else:
            with np.errstate(divide="ignore"):
                x = np.where(outside_hi, g[-1] - np.log(target / values[-1]) / self._rate_hi, x)
            x = np.where(outside_lo, g[0], x)
        return x


@lru_cache(maxsize=64)
def gh_table(params: GHParams) -> QuantileTable:
    mean, sd = params.mean_and_sd()
    return QuantileTable(lambda x: gh_log_density(x, params), mean, sd, spec=params)


# ------------------------------------------------------------- marginals


@dataclass(frozen=True)
class MarginalSpec:
    """Unscaled marginal law of one log-return.

    ``kind`` is ``"student_t"`` (uses ``df``) or ``"generalized_hyperbolic"``
    (uses ``gh``).
    """

    kind: str
    df: float | None = None
    gh: GHParams | None = None

    def __post_init__(self):
        if self.kind == "student_t":
            if self.df is None or not self.df > 0:
                raise DomainError(f"student_t marginal needs df > 0, got {self.df}")
        elif self.kind == "generalized_hyperbolic":
            if not isinstance(self.gh, GHParams):
                raise DomainError("generalized_hyperbolic marginal needs GH parameters")
        else:
            raise DomainError(f"unknown marginal kind {self.kind!r}")

    @classmethod
    def student_t(cls, df):
        return cls("student_t", df=float(df))

    @classmethod
    def generalized_hyperbolic(cls, lam, alpha, beta, delta, mu=0.0):
        return cls("generalized_hyperbolic",
                   gh=GHParams(float(lam), float(alpha), float(beta), float(delta), float(mu)))

    @classmethod
    def from_dict(cls, d):
        kind = d.get("kind")
        if kind == "student_t":
            return cls.student_t(d["df"])
        if kind == "generalized_hyperbolic":
            return cls.generalized_hyperbolic(
                d["lambda"], d["alpha"], d["beta"], d["delta"], d.get("mu", 0.0)
            )
        raise DomainError(f"unknown marginal kind {kind!r}")

    def to_dict(self):
        if self.kind == "student_t":
            return {"kind": self.kind, "df": self.df}
        g = self.gh
        return {"kind": self.kind, "lambda": g.lam, "alpha": g.alpha,
                "beta": g.beta, "delta": g.delta, "mu": g.mu}

    @property
    def table(self) -> QuantileTable:
        return gh_table(self.gh)

    def ppf(self, u):
        return marginal_inv_cdf(u, self)

    def cdf(self, x):
        if self.kind == "student_t":
            return student_t_cdf(x, self.df)
        return self.table.cdf(x)

    def log_pdf(self, x):
        if self.kind == "student_t":
            return student_t_log_pdf(x, self.df)
        return gh_log_density(x, self.gh)

    def pdf(self, x):
        return np.exp(self.log_pdf(x))


def marginal_inv_cdf(u, spec: MarginalSpec):
    if spec.kind == "student_t":
        return student_t_inv_cdf(u, spec.df)
    return spec.table.ppf(u)
