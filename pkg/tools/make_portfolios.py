"""Regenerate the bundled synthetic portfolios.

Parameters come from a seeded recipe (one-factor-plus-noise correlation,
Dirichlet weights, marginal parameters in ranges typical of daily stock
log-returns). Thresholds for target probabilities 0.05 and 0.001 are
located with ``find_tau`` and stored alongside.

    python tools/make_portfolios.py [outdir]
"""

import sys
from pathlib import Path

import numpy as np
from scipy import special

from tcrisk.config import dump_portfolio
from tcrisk.dist import MarginalSpec
from tcrisk.estim import find_tau
from tcrisk.model import PortfolioModel

COPULA_DF = {2: 5.5, 5: 6.5, 10: 8.0}
TARGETS = (0.05, 0.001)


def correlation(rng, d):
    a = rng.uniform(0.35, 0.75, d)
    b = rng.uniform(-0.3, 0.3, d)
    load = np.column_stack([a, b])
    sigma = load @ load.T
    np.fill_diagonal(sigma, 1.0)
    sigma = np.round(sigma, 4)
    np.linalg.cholesky(sigma)
    return sigma


def weights(rng, d):
    w = rng.dirichlet(np.full(d, 4.0))
    units = np.floor(w * 10_000).astype(int)
    units[np.argmax(units)] += 10_000 - units.sum()
    return units / 10_000


def t_marginals(rng, d):
    df = np.round(rng.uniform(3.0, 6.0, d), 2)
    scale = np.round(rng.uniform(0.009, 0.016, d), 4)
    return [MarginalSpec.student_t(v) for v in df], scale


def gh_marginals(rng, d):
    out = []
    for _ in range(d):
        lam = round(float(rng.uniform(-1.5, 1.0)), 3)
        alpha = round(float(rng.uniform(40.0, 90.0)), 2)
        beta = round(float(rng.uniform(-4.0, 2.0)), 3)
        delta = round(float(rng.uniform(0.006, 0.02)), 5)
        gamma = np.sqrt(alpha**2 - beta**2)
        ratio = special.kve(lam + 1, delta * gamma) / special.kve(lam, delta * gamma)
        mu = round(float(-beta * delta / gamma * ratio), 6)  # roughly zero-mean returns
        out.append(MarginalSpec.generalized_hyperbolic(lam, alpha, beta, delta, mu))
    return out, np.ones(d)


def build(d, kind, seed):
    rng = np.random.default_rng([seed, d])
    sigma = correlation(rng, d)
    w = weights(rng, d)
    mrng = np.random.default_rng([seed, d, 1 if kind == "t" else 2])
    margs, scales = (t_marginals if kind == "t" else gh_marginals)(mrng, d)
    return PortfolioModel(w, tuple(margs), scales, sigma, COPULA_DF[d], name=f"{kind}-D{d}")


def main(outdir):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for d in (2, 5, 10):
        for kind in ("t", "gh"):
            model = build(d, kind, seed=2016)
            taus = {p: round(find_tau(model, p, n=200_000, seed=11), 5) for p in TARGETS}
            model = PortfolioModel(model.weights, model.marginals, model.scales,
                                   model.correlation, model.nu, name=model.name,
                                   thresholds=taus)
            path = outdir / f"{kind}_d{d}.yaml"
            path.write_text(dump_portfolio(model))
            print(path, taus, flush=True)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else
         Path(__file__).resolve().parents[1] / "src/tcrisk/data/portfolios")
