import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

import oracles
from tcrisk.dist import MarginalSpec
from tcrisk.errors import DomainError
from tcrisk.model import (
    CLIP_EPS,
    PortfolioModel,
    build_transform,
    cholesky,
    clip_uniforms,
    householder_completion,
    loss_from_uniforms,
)


def make_model(d=2, rho=0.0, nu=5.0, weights=None, scales=None, marginal=None):
    corr = np.full((d, d), rho) + (1 - rho) * np.eye(d)
    return PortfolioModel(
        weights=np.full(d, 1.0 / d) if weights is None else np.asarray(weights),
        marginals=tuple([marginal or MarginalSpec.student_t(4.0)] * d),
        scales=np.full(d, 0.02) if scales is None else np.asarray(scales),
        correlation=corr,
        nu=nu,
    )


def random_corr(rng, d):
    a = rng.normal(size=(d, d + 3))
    cov = a @ a.T
    s = 1 / np.sqrt(np.diag(cov))
    c = cov * s[:, None] * s[None, :]
    np.fill_diagonal(c, 1.0)
    return (c + c.T) / 2


# -------------------------------------------------------------- Cholesky

def test_cholesky_identity_and_two_by_two():
    np.testing.assert_array_equal(cholesky(np.eye(4)), np.eye(4))
    lam = cholesky([[1, 0.5], [0.5, 1]])
    np.testing.assert_allclose(lam, [[1, 0], [0.5, np.sqrt(0.75)]], atol=1e-15)


def test_cholesky_reconstructs_random_correlation():
    rng = np.random.default_rng(3)
    for _ in range(5):
        s = random_corr(rng, 10)
        lam = cholesky(s)
        assert np.max(np.abs(lam @ lam.T - s)) < 1e-12
        assert np.all(np.triu(lam, 1) == 0) and np.all(np.diag(lam) > 0)


def test_cholesky_names_failing_pivot():
    s = np.array([[1, 0.9, 0.9], [0.9, 1, -0.9], [0.9, -0.9, 1]])
    with pytest.raises(DomainError, match="pivot 3"):
        cholesky(s)


@pytest.mark.parametrize("bad", [[[1, 0.2], [0.3, 1]], [[2, 0], [0, 1]], [[1, 0, 0], [0, 1, 0]]])
def test_cholesky_rejects_malformed(bad):
    with pytest.raises(DomainError):
        cholesky(bad)


# --------------------------------------------------------- PortfolioModel

def test_model_invariants_and_immutability():
    m = make_model(3, rho=0.4)
    assert np.max(np.abs(m.chol @ m.chol.T - m.correlation)) < 1e-12
    with pytest.raises(ValueError):
        m.weights[0] = 0.5


@pytest.mark.parametrize("weights", [(0.6, 0.6), (1.2, -0.2), (0.5, 0.0)])
def test_model_rejects_bad_weights(weights):
    with pytest.raises(DomainError):
        make_model(2, weights=weights)


def test_model_rejects_size_mismatch_and_bad_nu():
    with pytest.raises(DomainError):
        make_model(2, scales=[0.1, 0.1, 0.1])
    with pytest.raises(DomainError):
        make_model(2, nu=0.0)


def test_model_dict_round_trip():
    gh = MarginalSpec.generalized_hyperbolic(-0.5, 60.0, -1.5, 0.012, 0.0005)
    m = PortfolioModel(np.array([0.3, 0.7]), (gh, MarginalSpec.student_t(3.0)),
                       np.array([1.0, 0.01]), np.array([[1, 0.2], [0.2, 1]]), 6.0,
                       name="x", thresholds={0.05: 0.01})
    back = PortfolioModel.from_dict(m.to_dict())
    assert back.to_dict() == m.to_dict()


# ---------------------------------------------------------------- losses

def test_one_asset_zero_return_gives_zero_loss():
    m = make_model(1, weights=[1.0], scales=[1.0])
    path = loss_from_uniforms(np.array([0.37, 0.5]), m)
    assert path.T == 0.0 and path.X[0] == 0.0 and path.L == 0.0


@pytest.mark.parametrize("rho", [0.0, 0.6])
def test_loss_matches_straight_line_implementation(rho):
    rng = np.random.default_rng(11)
    m = make_model(2, rho=rho, nu=5.0, weights=[0.3, 0.7], scales=[0.02, 0.05],
                   marginal=MarginalSpec.student_t(4.0))
    u = rng.uniform(0.001, 0.999, size=(100, 3))
    ppf = [lambda v: stats.t.ppf(v, 4.0)] * 2
    ref = oracles.straight_line_loss(u, m.weights, m.scales, m.correlation, 5.0, ppf)
    got = loss_from_uniforms(u, m).L
    assert np.max(np.abs(got - ref)) < 1e-12


def test_sample_path_fields_consistent():
    rng = np.random.default_rng(2)
    m = make_model(3, rho=0.3)
    p = loss_from_uniforms(rng.random((50, 4)) * 0.98 + 0.01, m)
    np.testing.assert_array_equal(p.L, 1.0 - np.exp(p.X) @ m.weights)
    assert np.all(p.L < 1)
    assert p.Z.shape == (50, 3) and p.Y.shape == (50,)


@pytest.mark.parametrize("u0", [0.0, 1.0])
def test_loss_rejects_boundary_uniforms(u0):
    m = make_model(2)
    with pytest.raises(DomainError):
        loss_from_uniforms(np.array([u0, 0.5, 0.5]), m)


def test_loss_rejects_wrong_dimension():
    with pytest.raises(DomainError):
        loss_from_uniforms(np.full(2, 0.5), make_model(2))


def test_clipping_makes_boundaries_admissible():
    u = clip_uniforms(np.array([[0.0, 1.0, 0.5]]))
    assert u[0, 0] == CLIP_EPS and u[0, 1] == 1 - CLIP_EPS
    assert np.isfinite(loss_from_uniforms(u, make_model(2)).L).all()


# ------------------------------------------------------------- transform

def test_transform_first_column_and_orthogonality():
    rng = np.random.default_rng(5)
    m = make_model(6, rho=0.2)
    for _ in range(10):
        mu = -np.abs(rng.normal(size=6))
        tr = build_transform(mu, m)
        assert np.max(np.abs(tr.V.T @ tr.V - np.eye(6))) < 1e-10
        assert np.max(np.abs(tr.V[:, 0] - mu / np.linalg.norm(mu))) < 1e-12
        np.testing.assert_allclose(tr.A, m.chol @ tr.V, atol=1e-15)


def test_transform_aligned_direction_is_identity():
    tr = build_transform(np.array([2.5, 0.0, 0.0]), make_model(3))
    np.testing.assert_array_equal(tr.V, np.eye(3))


def test_transform_preserves_norm():
    tr = build_transform(np.ones(3), make_model(3))
    x = np.random.default_rng(9).normal(size=(100, 3))
    np.testing.assert_allclose(np.linalg.norm(x @ tr.V.T, axis=1), np.linalg.norm(x, axis=1),
                               atol=1e-10)


def test_transform_zero_shift_rejected():
    with pytest.raises(DomainError):
        build_transform(np.zeros(2), make_model(2))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=8))
def test_householder_completion_property(v):
    v = np.array(v)
    if np.linalg.norm(v) < 1e-6:
        return
    v = v / np.linalg.norm(v)
    q = householder_completion(v)
    assert np.max(np.abs(q.T @ q - np.eye(v.size))) < 1e-10
    assert np.max(np.abs(q[:, 0] - v)) < 1e-12


@pytest.mark.slow
def test_transformed_t_moments_match_covariance():
    nu, d, n = 9.0, 3, 1_000_000
    m = make_model(d, rho=0.5, nu=nu)
    tr = build_transform(np.array([-1.0, -2.0, -0.5]), m)
    rng = np.random.default_rng(21)
    u = clip_uniforms(rng.random((n, d + 1)))
    t = loss_from_uniforms(u, m, transform=tr).T
    target = m.correlation * nu / (nu - 2)
    prods = t[:, :, None] * t[:, None, :]
    se = prods.std(axis=0) / np.sqrt(n)
    assert np.all(np.abs(prods.mean(axis=0) - target) < 3.5 * se)
    assert np.all(np.abs(t.mean(axis=0)) < 3.5 * t.std(axis=0) / np.sqrt(n))


def test_transform_leaves_loss_law_unchanged():
    n = 100_000
    m = make_model(3, rho=0.4)
    tr = build_transform(np.array([-0.3, -1.0, -0.7]), m)
    a = loss_from_uniforms(clip_uniforms(np.random.default_rng(1).random((n, 4))), m).L
    b = loss_from_uniforms(clip_uniforms(np.random.default_rng(2).random((n, 4))), m, tr).L
    assert stats.ks_2samp(a, b).pvalue > 0.01


def test_exceedance_monotone_in_tau():
    m = make_model(2)
    loss = loss_from_uniforms(clip_uniforms(np.random.default_rng(3).random((20_000, 3))), m).L
    taus = np.linspace(-0.1, 0.2, 61)
    probs = [(loss > t).mean() for t in taus]
    assert np.all(np.diff(probs) <= 0)


@pytest.mark.slow
def test_positive_correlation_fattens_the_tail():
    n = 1_000_000
    u = clip_uniforms(np.random.default_rng(17).random((n, 3)))
    lo = loss_from_uniforms(u, make_model(2, rho=0.0)).L
    hi = loss_from_uniforms(u, make_model(2, rho=0.8)).L
    tau = np.quantile(hi, 0.999)
    p_lo, p_hi = (lo > tau).mean(), (hi > tau).mean()
    se = np.sqrt(p_lo * (1 - p_lo) / n + p_hi * (1 - p_hi) / n)
    assert p_hi - p_lo > 3 * se
