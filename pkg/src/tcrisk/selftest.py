"""Quick invariant checks shipped with the package (``risk selftest``).

Each check is cheap and deterministic; the full property and acceptance
suites live in the repository's test directory.
"""

from __future__ import annotations

import numpy as np
from scipy import stats

from . import dist, lds
from .config import load_portfolio
from .estim import calibrate_is, is_estimate, naive_estimate
from .model import build_transform, cholesky, householder_completion, loss_from_uniforms


def _sobol_prefix():
    pts = lds.SobolGenerator(2).take(4)
    expected = np.array([[0.5, 0.5], [0.75, 0.25], [0.25, 0.75], [0.375, 0.375]])
    return np.array_equal(pts, expected), "first Sobol points in dimension 2"


def _shift_range():
    rng = np.random.default_rng(1)
    out = lds.apply_shift(rng.random((1000, 5)), rng.random(5))
    return bool(np.all((out >= 0) & (out < 1))), "shifted points stay in [0, 1)"


def _quantile_roundtrips():
    u = np.linspace(1e-6, 1 - 1e-6, 1001)
    errs = [
        np.max(np.abs(dist.normal_cdf(dist.normal_inv_cdf(u)) - u)),
        np.max(np.abs(dist.gamma_cdf(dist.gamma_inv_cdf(u, 2.5, 2.0), 2.5, 2.0) - u)),
        np.max(np.abs(dist.student_t_cdf(dist.student_t_inv_cdf(u, 4.5), 4.5) - u)),
    ]
    spec = dist.MarginalSpec.generalized_hyperbolic(-0.5, 60.0, -1.5, 0.012, 0.0005)
    errs.append(np.max(np.abs(spec.cdf(spec.ppf(u)) - u)))
    return max(errs) < 1e-9, f"quantile/CDF round trips (max error {max(errs):.2E})"


def _nig_density():
    spec = dist.MarginalSpec.generalized_hyperbolic(-0.5, 60.0, -1.5, 0.012, 0.0005)
    x = np.linspace(-0.1, 0.1, 41)
    ref = stats.norminvgauss(60.0 * 0.012, -1.5 * 0.012, loc=0.0005, scale=0.012).pdf(x)
    err = np.max(np.abs(spec.pdf(x) - ref) / ref)
    return err < 1e-10, f"GH density matches NIG special case ({err:.2E})"


def _cholesky():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(6, 6))
    s = a @ a.T
    d = np.sqrt(np.diag(s))
    corr = s / np.outer(d, d)
    lam = cholesky(corr)
    err = np.max(np.abs(lam @ lam.T - corr))
    return err < 1e-12, f"Cholesky reconstruction ({err:.2E})"


def _orthogonal_completion():
    v = np.array([1.0, 2.0, -2.0]) / 3.0
    q = householder_completion(v)
    ok = np.allclose(q @ q.T, np.eye(3), atol=1e-13) and np.allclose(q[:, 0], v, atol=1e-15)
    return ok, "orthogonal completion with prescribed first column"


def _transform_invariance():
    model = load_portfolio("bundled:t_d5")
    params = calibrate_is(model, model.thresholds[0.05])
    tr = build_transform(params.mu, model)
    u = np.random.default_rng(3).random((20_000, model.dim + 1))
    a = np.sort(loss_from_uniforms(u, model).L)
    # a rotation of the normals leaves the loss law unchanged
    b = np.sort(loss_from_uniforms(u, model, tr).L)
    ks = stats.ks_2samp(a, b).pvalue
    return ks > 1e-3, f"loss law invariant under the rotation (KS p={ks:.3f})"


def _measure_change():
    model = load_portfolio("bundled:t_d2")
    tau = model.thresholds[0.05]
    params = calibrate_is(model, tau)
    nv = naive_estimate(model, tau, lds.make_point_source("pseudorandom", 3, 5), 100_000)
    is_ = is_estimate(model, params, lds.make_point_source("pseudorandom", 3, 6), 100_000)
    gap = abs(nv.loss_prob - is_.loss_prob)
    bound = 3 * np.hypot(nv.loss_prob_hw, is_.loss_prob_hw) / 1.96
    return gap < bound, f"naive and IS loss probabilities agree ({gap:.2E} < {bound:.2E})"


CHECKS = (_sobol_prefix, _shift_range, _quantile_roundtrips, _nig_density, _cholesky,
          _orthogonal_completion, _transform_invariance, _measure_change)


def run(echo=print) -> bool:
    ok = True
    for check in CHECKS:
        try:
            passed, label = check()
        except Exception as exc:  # report and keep going
            passed, label = False, f"{check.__name__}: {type(exc).__name__}: {exc}"
        ok &= bool(passed)
        echo(f"{'PASS' if passed else 'FAIL'}  {label}")
    return ok
