"""t-copula portfolio model and the uniform-to-loss mapping.

A point ``u`` in (0,1)^(D+1) is turned into a loss by

    Y   = Gamma^{-1}(u_0; nu/2, scale)        scale = 2, or theta under IS
    Z   = Phi^{-1}(u_1..u_D)                  Z_1 += ||mu|| under IS
    T   = A Z / sqrt(Y / nu)                  A = Lambda or Lambda V
    X_d = c_d G_d^{-1}(F_nu(T_d))
    L   = 1 - sum_d w_d exp(X_d)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dist
from .errors import DomainError

# Uniforms are clamped to [CLIP_EPS, 1 - CLIP_EPS] before any inverse CDF.
CLIP_EPS = 2.0**-53 * 2.0**10


def clip_uniforms(u):
    return np.clip(u, CLIP_EPS, 1.0 - CLIP_EPS)


def cholesky(sigma) -> np.ndarray:
    """Lower-triangular Cholesky factor of a correlation matrix.

    Raises
    ------
    DomainError
        If ``sigma`` is not symmetric with unit diagonal, or a pivot is not
        positive (the message names the pivot).
    """
    s = np.array(sigma, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise DomainError("correlation matrix must be square")
    if not np.allclose(s, s.T, rtol=0.0, atol=1e-12):
        raise DomainError("correlation matrix must be symmetric")
    if not np.allclose(np.diag(s), 1.0, rtol=0.0, atol=1e-12):
        raise DomainError("correlation matrix must have unit diagonal")
    n = s.shape[0]
    lam = np.zeros_like(s)
    for j in range(n):
        pivot = s[j, j] - lam[j, :j] @ lam[j, :j]
        if not pivot > 0.0:
            raise DomainError(
                f"correlation matrix is not positive definite: pivot {j + 1} is {pivot:.3e}"
            )
        lam[j, j] = np.sqrt(pivot)
        lam[j + 1:, j] = (s[j + 1:, j] - lam[j + 1:, :j] @ lam[j, :j]) / lam[j, j]
    return lam


@dataclass(frozen=True, eq=False)
class PortfolioModel:
    """Long-only stock portfolio with t-copula dependence.

    ``weights`` must be positive and sum to one (initial value one);
    ``scales`` are the factors ``c_d`` applied after the marginal quantile.
    """

    weights: np.ndarray
    marginals: tuple
    scales: np.ndarray
    correlation: np.ndarray
    nu: float
    name: str = ""
    thresholds: dict = field(default_factory=dict)
    chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        c = np.asarray(self.scales, dtype=np.float64).ravel()
        sigma = np.asarray(self.correlation, dtype=np.float64)
        margs = tuple(self.marginals)
        d = w.size
        if d < 1:
            raise DomainError("portfolio needs at least one asset")
        if c.size != d or len(margs) != d or sigma.shape != (d, d):
            raise DomainError(
                f"inconsistent sizes: {d} weights, {c.size} scales, "
                f"{len(margs)} marginals, correlation {sigma.shape}"
            )
        if np.any(w <= 0):
            raise DomainError("weights must be positive (long-only portfolio)")
        if abs(w.sum() - 1.0) > 1e-9:
            raise DomainError(f"weights must sum to 1, got {w.sum():.12g}")
        if np.any(c <= 0):
            raise DomainError("scales must be positive")
        if not self.nu > 0:
            raise DomainError("copula degrees of freedom must be positive")
        for m in margs:
            if not isinstance(m, dist.MarginalSpec):
                raise DomainError("marginals must be MarginalSpec instances")
        lam = cholesky(sigma)
        for name, arr in (("weights", w), ("scales", c), ("correlation", sigma), ("chol", lam)):
            arr = np.array(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "marginals", margs)
        object.__setattr__(self, "nu", float(self.nu))

    @property
    def dim(self) -> int:
        return self.weights.size

    @property
    def marginal_kind(self) -> str:
        kinds = {m.kind for m in self.marginals}
        return kinds.pop() if len(kinds) == 1 else "mixed"

    def log_returns(self, t):
        """Map copula variates ``T`` (n, D) to log-returns ``X``."""
        t = np.atleast_2d(t)
        u = dist.student_t_cdf(t, self.nu)
        u = np.clip(u, 1e-300, 1.0 - 2.0**-53)
        x = np.empty_like(t)
        for d, m in enumerate(self.marginals):
            x[:, d] = self.scales[d] * m.ppf(u[:, d])
        return x

    def loss_from_returns(self, x):
        return 1.0 - np.exp(x) @ self.weights

    def loss_zy(self, z, y):
        """Loss as a function of the normal vector ``z`` (n, D) and chi-square ``y``."""
        z = np.atleast_2d(z)
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        t = (z @ self.chol.T) / np.sqrt(y / self.nu)[:, None]
        return self.loss_from_returns(self.log_returns(t))

    def loss_gradient_zy(self, z, y):
        """Loss and its gradient w.r.t. ``(z, y)`` at a single point."""
        z = np.asarray(z, dtype=np.float64).reshape(1, -1)
        scale = np.sqrt(y / self.nu)
        t = (z @ self.chol.T) / scale
        x = self.log_returns(t)
        loss = float(self.loss_from_returns(x)[0])
        dl_dx = -self.weights * np.exp(x[0])
        dx_dt = np.empty(self.dim)
        for d, m in enumerate(self.marginals):
            g = x[0, d] / self.scales[d]
            dx_dt[d] = self.scales[d] * np.exp(
                dist.student_t_log_pdf(t[0, d], self.nu) - m.log_pdf(g)
            )
        dl_dt = dl_dx * dx_dt
        grad_z = (dl_dt @ self.chol) / scale
        grad_y = float(dl_dt @ (-t[0] / (2.0 * y)))
        return loss, grad_z, grad_y

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "nu": self.nu,
            "weights": self.weights.tolist(),
            "scales": self.scales.tolist(),
            "correlation": self.correlation.tolist(),
            "marginals": [m.to_dict() for m in self.marginals],
        }
        if self.thresholds:
            out["thresholds"] = {str(k): float(v) for k, v in self.thresholds.items()}
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "PortfolioModel":
        thresholds = {float(k): float(v) for k, v in (d.get("thresholds") or {}).items()}
        return cls(
            weights=np.asarray(d["weights"], dtype=float),
            marginals=tuple(dist.MarginalSpec.from_dict(m) for m in d["marginals"]),
            scales=np.asarray(d.get("scales", [1.0] * len(d["weights"])), dtype=float),
            correlation=np.asarray(d["correlation"], dtype=float),
            nu=float(d["nu"]),
            name=str(d.get("name", "")),
            thresholds=thresholds,
        )


@dataclass(frozen=True, eq=False)
class TransformMatrix:
    """Orthogonal ``V`` whose first column is the IS direction; ``A = Lambda V``."""

    V: np.ndarray
    A: np.ndarray
    direction: np.ndarray


def householder_completion(v) -> np.ndarray:
    """Orthogonal matrix with first column ``v`` (a unit vector)."""
    v = np.asarray(v, dtype=np.float64)
    d = v.size
    e1 = np.zeros(d)
    e1[0] = 1.0
    h = e1 - v
    nh = h @ h
    if nh < 1e-30:
        return np.eye(d)
    return np.eye(d) - 2.0 * np.outer(h, h) / nh


def build_transform(mu, model: PortfolioModel) -> TransformMatrix:
    mu = np.asarray(mu, dtype=np.float64)
    norm = np.linalg.norm(mu)
    if not norm > 0:
        raise DomainError("transform direction needs a nonzero shift vector")
    v = mu / norm
    V = householder_completion(v)
    # first column exactly v
    V[:, 0] = v
    return TransformMatrix(V=V, A=model.chol @ V, direction=v)


@dataclass(eq=False)
class SamplePath:
    u: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    T: np.ndarray
    X: np.ndarray
    L: np.ndarray


def loss_from_uniforms(u, model: PortfolioModel, transform: TransformMatrix | None = None,
                       is_params=None) -> SamplePath:
    """Map uniforms to the full sample path; rows of ``u`` are independent points.

    ``is_params`` (an :class:`tcrisk.estim.ISParams`) switches on the
    importance-sampling law: Y ~ Gamma(nu/2, theta) and ``Z_1`` shifted by
    ``||mu||``. A nondegenerate shift requires ``transform``.
    """
    u = np.asarray(u, dtype=np.float64)
    single = u.ndim == 1
    u = np.atleast_2d(u)
    d = model.dim
    if u.shape[1] != d + 1:
        raise DomainError(f"expected points of dimension {d + 1}, got {u.shape[1]}")
    if np.any(~((u > 0.0) & (u < 1.0))):
        raise DomainError("uniforms must lie strictly inside (0, 1); clip first")

    gamma_scale = 2.0
    shift = 0.0
    if is_params is not None:
        gamma_scale = is_params.theta
        shift = is_params.norm
        if shift > 0 and transform is None:
            raise DomainError("a nonzero IS shift needs the aligned transform")

    y = np.asarray(dist.gamma_inv_cdf(u[:, 0], 0.5 * model.nu, gamma_scale)).reshape(-1)
    z = np.asarray(dist.normal_inv_cdf(u[:, 1:])).reshape(-1, d)
    if shift:
        z[:, 0] += shift
    a = model.chol if transform is None else transform.A
    t = (z @ a.T) / np.sqrt(y / model.nu)[:, None]
    x = model.log_returns(t)
    loss = model.loss_from_returns(x)
    if single:
        return SamplePath(u[0], y[0], z[0], t[0], x[0], loss[0])
    return SamplePath(u, y, z, t, x, loss)
