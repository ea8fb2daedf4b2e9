"""Independent reference implementations used only by the tests.

Nothing here calls into ``tcrisk``; special functions come from the math
module, mpmath, or hand-coded series so a shared bug cannot hide.
"""

import math

import mpmath
import numpy as np
from scipy import integrate, stats


def phi_cdf(x):
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def bisect(f, target, lo, hi, tol=1e-14, iters=200):
    """Root of ``f(x) = target`` for increasing ``f`` on ``[lo, hi]``."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if f(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


def phi_inv(u):
    # above one half, 1 - u is exact, so solve the upper tail by symmetry
    if u > 0.5:
        return -bisect(phi_cdf, 1.0 - u, -40.0, 40.0)
    return bisect(phi_cdf, u, -40.0, 40.0)


def lower_gamma_reg(a, x):
    """Regularized lower incomplete gamma P(a, x): series below a+1, continued fraction above."""
    if x <= 0:
        return 0.0
    log_front = a * math.log(x) - x - math.lgamma(a)
    if x < a + 1.0:
        term = total = 1.0 / a
        ap = a
        for _ in range(10_000):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * 1e-17:
                break
        return total * math.exp(log_front)
    # modified Lentz for Q(a, x)
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        d = tiny if abs(d) < tiny else d
        c = b + an / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return 1.0 - math.exp(log_front) * h


def gamma_quantile(u, shape, scale):
    hi = scale * (shape + 50.0 * math.sqrt(shape) + 50.0)
    return scale * bisect(lambda x: lower_gamma_reg(shape, x), u, 0.0, hi / scale)


def t_pdf(t, nu):
    c = math.lgamma((nu + 1) / 2) - math.lgamma(nu / 2) - 0.5 * math.log(nu * math.pi)
    return math.exp(c - (nu + 1) / 2 * math.log1p(t * t / nu))


def t_cdf_quad(t, nu):
    """Student-t CDF by adaptive quadrature of the density."""
    if t == 0:
        return 0.5
    val, _ = integrate.quad(t_pdf, 0.0, abs(t), args=(nu,), epsabs=1e-14, epsrel=1e-13)
    return 0.5 + val if t > 0 else 0.5 - val


def gh_pdf(x, lam, alpha, beta, delta, mu):
    """GH density in the (lambda, alpha, beta, delta, mu) form, evaluated with mpmath."""
    mp = mpmath.mp
    mp.dps = 30
    x, lam, alpha, beta, delta, mu = map(mpmath.mpf, (x, lam, alpha, beta, delta, mu))
    gamma = mpmath.sqrt(alpha**2 - beta**2)
    q = mpmath.sqrt(delta**2 + (x - mu) ** 2)
    norm = (gamma / delta) ** lam / (mpmath.sqrt(2 * mpmath.pi) * mpmath.besselk(lam, delta * gamma))
    body = mpmath.besselk(lam - 0.5, alpha * q) * (q / alpha) ** (lam - 0.5)
    return float(norm * body * mpmath.exp(beta * (x - mu)))


def nig_pdf(x, alpha, beta, delta, mu):
    """Normal-inverse-Gaussian density, coded from its own closed form."""
    gamma = math.sqrt(alpha * alpha - beta * beta)
    q = math.sqrt(delta * delta + (x - mu) ** 2)
    k1 = float(mpmath.besselk(1, alpha * q))
    return alpha * delta * k1 / (math.pi * q) * math.exp(delta * gamma + beta * (x - mu))


def gh_cdf(x, params, support=None):
    """GH CDF by adaptive quadrature of :func:`gh_pdf` from a far-left point."""
    lam, alpha, beta, delta, mu = params
    sd = math.sqrt(delta / alpha) + delta
    left = mu - 200 * sd if support is None else support
    pts = np.linspace(left, x, 41)
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        v, _ = integrate.quad(gh_pdf, a, b, args=params, epsabs=1e-16, epsrel=1e-12, limit=200)
        total += v
    return total


def bessel_k(order, x):
    return float(mpmath.besselk(order, x))


def star_discrepancy_2d(points):
    """Exact star discrepancy of a 2-d point set by exhaustive box enumeration.

    The supremum over anchored boxes is attained with corners on the grid
    of point coordinates (and 1); both open and closed counts are checked.
    """
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    xs = np.unique(np.concatenate([pts[:, 0], [1.0]]))
    ys = np.unique(np.concatenate([pts[:, 1], [1.0]]))
    worst = 0.0
    py = pts[:, 1][:, None]
    for x in xs:
        in_x_open = pts[:, 0] < x
        in_x_closed = pts[:, 0] <= x
        open_counts = np.sum(in_x_open[:, None] & (py < ys[None, :]), axis=0)
        closed_counts = np.sum(in_x_closed[:, None] & (py <= ys[None, :]), axis=0)
        vol = x * ys
        worst = max(worst, np.max(vol - open_counts / n), np.max(closed_counts / n - vol))
    return float(worst)


def straight_line_loss(u, weights, scales, corr, nu, marginal_ppf):
    """Portfolio loss for each row of ``u`` by a literal per-sample loop."""
    lam = np.linalg.cholesky(corr)
    out = []
    for row in u:
        y = stats.gamma.ppf(row[0], nu / 2.0, scale=2.0)
        z = np.array([phi_inv(v) for v in row[1:]])
        t = lam @ z / math.sqrt(y / nu)
        value = 0.0
        for d, td in enumerate(t):
            x = scales[d] * marginal_ppf[d](stats.t.cdf(td, nu))
            value += weights[d] * math.exp(x)
        out.append(1.0 - value)
    return np.array(out)


def one_asset_mode(nu, t_star):
    """Mode of the normal x chi-square density on {z <= t* sqrt(y/nu)} (one asset).

    Substituting the active constraint into the log density leaves a
    concave function of ``y`` with a closed-form maximizer.
    """
    k1 = nu / 2.0 - 1.0
    y = 2.0 * k1 * nu / (nu + t_star * t_star)
    z = t_star * math.sqrt(y / nu)
    return z, y


def grid_mode(nu, t_star, z_range=(-8.0, 0.0), y_max=None, step=1e-3):
    """Exhaustive grid search for the same constrained mode."""
    y_max = 4.0 * nu if y_max is None else y_max
    ys = np.arange(step, y_max, step)
    zs = np.arange(z_range[0], z_range[1] + step, step)
    best, arg = -np.inf, None
    k1 = nu / 2.0 - 1.0
    for z in zs:
        feasible = ys <= nu * (z / t_star) ** 2 if z < 0 else np.zeros_like(ys, bool)
        if not feasible.any():
            continue
        # among feasible y the objective is concave; keep the best grid point
        obj = -0.5 * z * z + k1 * np.log(ys) - 0.5 * ys
        obj = np.where(feasible, obj, -np.inf)
        i = int(np.argmax(obj))
        if obj[i] > best:
            best, arg = obj[i], (z, ys[i])
    return arg
