"""ARCH-X conditional variance, Gaussian quasi-likelihood and simulation.

Parameters are handled internally as flat vectors ``theta = (mu, omega,
alpha_1..alpha_p, xi_1..xi_q)``. The first two entries are the unpenalised
block, the remaining ``p + q`` entries are the non-negative loadings.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

#: E(z^6) for a standard Gaussian innovation
KAPPA_GAUSS = 15.0
OMEGA_FLOOR = 1e-10
D_GAMMA = 2


class NumericError(FloatingPointError):
    """Non-finite value inside the likelihood recursion."""

    def __init__(self, msg: str, index: Optional[int] = None):
        super().__init__(msg)
        self.index = index


@dataclass
class ParamVector:
    mu: float
    omega: float
    alpha: np.ndarray = field(default_factory=lambda: np.zeros(0))
    xi: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.mu = float(self.mu)
        self.omega = float(self.omega)
        self.alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        self.xi = np.atleast_1d(np.asarray(self.xi, dtype=float))
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if np.any(self.alpha < 0) or np.any(self.xi < 0):
            raise ValueError("ARCH and covariate loadings must be non-negative")

    @property
    def p(self) -> int:
        return self.alpha.size

    @property
    def q(self) -> int:
        return self.xi.size

    @property
    def beta(self) -> np.ndarray:
        return np.concatenate([self.alpha, self.xi])

    @property
    def gamma(self) -> np.ndarray:
        return np.array([self.mu, self.omega])

    def to_array(self) -> np.ndarray:
        return np.concatenate([[self.mu, self.omega], self.alpha, self.xi])

    @classmethod
    def from_array(cls, theta, p: int, q: int = 0) -> "ParamVector":
        theta = np.asarray(theta, dtype=float)
        if theta.size != D_GAMMA + p + q:
            raise ValueError(f"expected {D_GAMMA + p + q} parameters, got {theta.size}")
        return cls(theta[0], theta[1], theta[2:2 + p], theta[2 + p:])


@dataclass
class TrueParams(ParamVector):
    """True parameter value; zero loadings define the sparsity pattern."""

    @property
    def nonzero_index(self) -> np.ndarray:
        return np.flatnonzero(self.beta > 0)

    @property
    def zero_index(self) -> np.ndarray:
        return np.flatnonzero(self.beta == 0)

    @property
    def beta_nonzero(self) -> np.ndarray:
        return self.beta[self.beta > 0]

    def moment_sum(self) -> float:
        return float(np.sum(self.alpha**3))


@dataclass
class ArchXDataset:
    x: np.ndarray
    p: int = 0
    y: Optional[np.ndarray] = None
    presample_value: Optional[float] = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).ravel()
        n = self.x.size
        if n < 1:
            raise ValueError("empty series")
        if self.y is None:
            self.y = np.zeros((n, 0))
        self.y = np.asarray(self.y, dtype=float)
        if self.y.ndim == 1:
            self.y = self.y[:, None]
        if self.y.shape[0] != n:
            raise ValueError(f"covariates have {self.y.shape[0]} rows, series has {n}")
        if np.any(self.y < 0):
            raise ValueError("covariates must be non-negative")
        self.p = int(self.p)
        if self.p < 0 or n <= self.p:
            raise ValueError(f"need n > p >= 0, got n={n}, p={self.p}")
        if not np.all(np.isfinite(self.x)) or not np.all(np.isfinite(self.y)):
            raise ValueError("data contain non-finite values")
        if self.presample_value is None:
            self.presample_value = float(np.var(self.x)) if n > 1 else 1.0
        self.presample_value = float(self.presample_value)
        if not (np.isfinite(self.presample_value) and self.presample_value >= 0):
            raise ValueError("presample_value must be finite and non-negative")

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def q(self) -> int:
        return self.y.shape[1]

    @property
    def d_beta(self) -> int:
        return self.p + self.q

    def with_lags(self, p: int) -> "ArchXDataset":
        return ArchXDataset(self.x, p, self.y, self.presample_value)


class ArchXModel:
    """Likelihood machinery for one dataset, on flat parameter vectors.

    The lag index matrix is built once so that each evaluation costs
    O(n * (p + q)).
    """

    d_gamma = D_GAMMA

    def __init__(self, data: ArchXDataset):
        self.data = data
        self.n = data.n
        self.p = data.p
        self.q = data.q
        self.d_beta = data.p + data.q
        self.dim = self.d_gamma + self.d_beta
        n, p = self.n, self.p
        # row t, column i -> position of x_{t-i-1} in the presample-padded array
        self._lag_idx = (np.arange(n)[:, None] - np.arange(1, p + 1)[None, :]) + p
        self._observed = self._lag_idx >= p

    def lower_bounds(self) -> np.ndarray:
        return np.concatenate([[-np.inf, OMEGA_FLOOR], np.zeros(self.d_beta)])

    def upper_bounds(self, beta_upper: float = 10.0) -> np.ndarray:
        return np.concatenate([[np.inf, np.inf], np.full(self.d_beta, beta_upper)])

    def default_init(self) -> np.ndarray:
        x = self.data.x
        var = float(np.var(x)) if self.n > 1 else 1.0
        return np.concatenate([[x.mean(), max(0.9 * var, 1e-6)], np.full(self.d_beta, 0.01)])

    def restricted_gamma(self) -> np.ndarray:
        """Closed-form (mu, omega) when every loading is zero."""
        x = self.data.x
        return np.array([x.mean(), max(np.mean((x - x.mean()) ** 2), OMEGA_FLOOR)])

    def check(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise ValueError(f"expected parameter vector of length {self.dim}, got {theta.shape}")
        return theta

    def lag_matrix(self, mu: float):
        """Squared demeaned lags and their mu-derivative, each n x p."""
        x = self.data.x
        dev = x - mu
        pad_sq = np.concatenate([np.full(self.p, self.data.presample_value), dev**2])
        pad_dev = np.concatenate([np.zeros(self.p), dev])
        return pad_sq[self._lag_idx], -2.0 * pad_dev[self._lag_idx]

    def variance(self, theta) -> np.ndarray:
        theta = self.check(theta)
        vx, _ = self.lag_matrix(theta[0])
        p = self.p
        return theta[1] + vx @ theta[2:2 + p] + self.data.y @ theta[2 + p:]

    def _pieces(self, theta):
        theta = self.check(theta)
        p = self.p
        vx, dvx = self.lag_matrix(theta[0])
        sig2 = theta[1] + vx @ theta[2:2 + p] + self.data.y @ theta[2 + p:]
        e = self.data.x - theta[0]
        if not np.all(np.isfinite(sig2)) or np.any(sig2 <= 0):
            bad = int(np.flatnonzero(~np.isfinite(sig2) | (sig2 <= 0))[0])
            raise NumericError(f"conditional variance invalid at t={bad + 1}", bad)
        return theta, vx, dvx, sig2, e

    def loglik(self, theta) -> float:
        _, _, _, sig2, e = self._pieces(theta)
        terms = np.log(sig2) + e**2 / sig2
        val = -0.5 * float(np.sum(terms))
        if not np.isfinite(val):
            bad = int(np.flatnonzero(~np.isfinite(terms))[0])
            raise NumericError(f"log-likelihood term non-finite at t={bad + 1}", bad)
        return val

    def contributions(self, theta) -> np.ndarray:
        """Per-observation score vectors, shape (n, dim)."""
        theta, vx, dvx, sig2, e = self._pieces(theta)
        p = self.p
        w = -0.5 * (1.0 / sig2 - e**2 / sig2**2)
        dmu = e / sig2 + w * (dvx @ theta[2:2 + p])
        return np.column_stack([dmu, w, w[:, None] * vx, w[:, None] * self.data.y])

    def loglik_and_score(self, theta) -> tuple[float, np.ndarray]:
        theta, vx, dvx, sig2, e = self._pieces(theta)
        p = self.p
        terms = np.log(sig2) + e**2 / sig2
        val = -0.5 * float(np.sum(terms))
        if not np.isfinite(val):
            bad = int(np.flatnonzero(~np.isfinite(terms))[0])
            raise NumericError(f"log-likelihood term non-finite at t={bad + 1}", bad)
        w = -0.5 * (1.0 / sig2 - e**2 / sig2**2)
        g = np.empty(self.dim)
        g[0] = np.sum(e / sig2) + w @ (dvx @ theta[2:2 + p])
        g[1] = w.sum()
        g[2:2 + p] = w @ vx
        g[2 + p:] = w @ self.data.y
        return val, g

    def score(self, theta) -> np.ndarray:
        return self.loglik_and_score(theta)[1]

    def unpack(self, theta) -> ParamVector:
        return ParamVector.from_array(theta, self.p, self.q)


class LocationModel:
    """Location model ``x_t = beta + z_t`` with ``beta >= 0``.

    No unpenalised block; the single coordinate is the boundary parameter.
    """

    d_gamma = 0
    d_beta = 1
    dim = 1

    def __init__(self, x):
        self.x = np.asarray(x, dtype=float).ravel()
        self.n = self.x.size
        self._sum = float(self.x.sum())

    def lower_bounds(self):
        return np.zeros(1)

    def upper_bounds(self, beta_upper: float = 10.0):
        return np.full(1, beta_upper)

    def default_init(self):
        return np.full(1, 0.01)

    def restricted_gamma(self):
        return np.zeros(0)

    def check(self, theta):
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.shape != (1,):
            raise ValueError("location model has one parameter")
        return theta

    def loglik(self, theta) -> float:
        b = self.check(theta)[0]
        return -0.5 * float(np.sum((self.x - b) ** 2))

    def loglik_and_score(self, theta):
        b = self.check(theta)[0]
        return self.loglik(theta), np.array([self._sum - self.n * b])

    def score(self, theta):
        return self.loglik_and_score(theta)[1]

    def contributions(self, theta):
        b = self.check(theta)[0]
        return (self.x - b)[:, None]


def as_model(data):
    """Accept either a dataset or an already-built model."""
    if isinstance(data, ArchXDataset):
        return ArchXModel(data)
    if hasattr(data, "loglik_and_score"):
        return data
    raise TypeError(f"cannot build a likelihood model from {type(data).__name__}")


def _theta_array(theta, data: ArchXDataset) -> np.ndarray:
    if isinstance(theta, ParamVector):
        if theta.p != data.p or theta.q != data.q:
            raise ValueError(
                f"parameter has p={theta.p}, q={theta.q}; data has p={data.p}, q={data.q}")
        return theta.to_array()
    return np.asarray(theta, dtype=float)


def variance_path(theta, data: ArchXDataset) -> np.ndarray:
    return ArchXModel(data).variance(_theta_array(theta, data))


def loglik(theta, data: ArchXDataset) -> float:
    """Gaussian quasi-log-likelihood without the 2*pi constant."""
    return ArchXModel(data).loglik(_theta_array(theta, data))


def score(theta, data: ArchXDataset) -> np.ndarray:
    return ArchXModel(data).score(_theta_array(theta, data))


def score_contributions(theta, data: ArchXDataset) -> np.ndarray:
    return ArchXModel(data).contributions(_theta_array(theta, data))


def numeric_hessian(model, theta, cols: Sequence[int]) -> np.ndarray:
    """Hessian of the log-likelihood in the ``cols`` coordinates, obtained by
    central differences of the analytic score (one-sided at a lower bound)."""
    theta = np.asarray(theta, dtype=float)
    lower = model.lower_bounds()
    cols = list(cols)
    H = np.empty((len(cols), len(cols)))
    for k, j in enumerate(cols):
        h = 1e-5 * max(1.0, abs(theta[j]))
        up = theta.copy()
        up[j] += h
        if theta[j] - h >= lower[j]:
            dn = theta.copy()
            dn[j] -= h
            diff = (model.score(up) - model.score(dn)) / (2 * h)
        else:
            diff = (model.score(up) - model.score(theta)) / h
        H[:, k] = diff[cols]
    return 0.5 * (H + H.T)


def sandwich_covariance(theta, data, active: Optional[Sequence[int]] = None,
                        hessian_only: bool = False) -> np.ndarray:
    """Robust covariance of the estimator restricted to ``active`` coordinates.

    ``active`` indexes the flat parameter vector; by default it is the
    unpenalised block plus every strictly positive loading. The returned
    matrix is ordered like ``active`` and already divided by ``n``.
    """
    model = as_model(data)
    theta = np.asarray(theta.to_array() if isinstance(theta, ParamVector) else theta, dtype=float)
    if active is None:
        d_g = model.d_gamma
        active = list(range(d_g)) + [d_g + j for j in np.flatnonzero(theta[d_g:] > 0)]
    active = [int(i) for i in active]
    n = model.n
    info = -numeric_hessian(model, theta, active) / n
    evals, evecs = np.linalg.eigh(info)
    if evals[0] <= 1e-12 * max(1.0, abs(evals[-1])):
        worst = active[int(np.argmax(np.abs(evecs[:, 0])))]
        raise np.linalg.LinAlgError(
            f"information matrix is singular; coordinate {worst} is not identified")
    info_inv = np.linalg.inv(info)
    if hessian_only:
        cov = info_inv
    else:
        s = model.contributions(theta)[:, active]
        outer = s.T @ s / n
        cov = info_inv @ outer @ info_inv
    cov = 0.5 * (cov + cov.T)
    return cov / n


def simulate_archx(true: ParamVector, n: int, q: Optional[int] = None, rho: float = 0.8,
                   seed=None, burn: int = 500, kappa: float = KAPPA_GAUSS) -> ArchXDataset:
    """Simulate an ARCH-X path with squared-VAR(1) covariates.

    Covariates are ``y_it = u_it^2`` where ``u_t = rho u_{t-1} + sqrt(1-rho^2) eta_t``
    starts at zero. The first ``burn`` observations are discarded.
    """
    q = true.q if q is None else int(q)
    if q != true.q:
        raise ValueError(f"q={q} but the parameter has {true.q} covariate loadings")
    if not -1 < rho < 1:
        raise ValueError(f"rho must lie in (-1, 1), got {rho}")
    m3 = float(np.sum(true.alpha**3))
    if m3 >= 1.0 / kappa:
        raise ValueError(
            f"moment condition violated: sum(alpha^3) = {m3:.6g} >= 1/kappa = {1 / kappa:.6g}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    total = int(n) + int(burn)
    p = true.p

    u = np.zeros((total, q))
    prev = np.zeros(q)
    scale = np.sqrt(1 - rho**2)
    eta = rng.standard_normal((total, q))
    for t in range(total):
        prev = rho * prev + scale * eta[t]
        u[t] = prev
    y = u**2
    z = rng.standard_normal(total)

    base = true.omega + y @ true.xi
    alpha_rev = true.alpha[::-1].copy()
    e2 = np.zeros(total + p)
    x = np.empty(total)
    for t in range(total):
        s2 = base[t] + (e2[t:t + p] @ alpha_rev if p else 0.0)
        eps = np.sqrt(s2) * z[t]
        x[t] = true.mu + eps
        e2[t + p] = eps * eps
    return ArchXDataset(x[burn:], p=p, y=y[burn:])
